#include "s3a/parallel.hpp"

#include <atomic>

namespace s3a {
namespace {
std::atomic<std::size_t> g_threads{1};
}

void set_num_threads(std::size_t n) { g_threads.store(n == 0 ? 1 : n); }

std::size_t num_threads() { return g_threads.load(); }

}  // namespace s3a
