#include <atomic>
#include <cstdlib>
#include <vector>

#include "kernels_impl.hpp"

namespace s3a::kernels {
namespace {

std::vector<const KernelTable*> detect() {
  std::vector<const KernelTable*> found{&scalar_kernels()};
#if defined(S3A_HAVE_AVX2)
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
    found.push_back(avx2_kernels());
  }
#endif
#if defined(S3A_HAVE_NEON)
  found.push_back(neon_kernels());
#endif
  return found;
}

const std::vector<const KernelTable*>& registry() {
  static const std::vector<const KernelTable*> tables = detect();
  return tables;
}

const KernelTable* find(std::string_view name) {
  for (const KernelTable* t : registry()) {
    if (name == t->name) return t;
  }
  return nullptr;
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table = [] {
    if (const char* env = std::getenv("S3A_KERNELS")) {
      if (const KernelTable* t = find(env)) return t;
    }
    return registry().back();
  }();
  return table;
}

}  // namespace

std::span<const KernelTable* const> available() { return registry(); }

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

bool select(std::string_view name) {
  const KernelTable* t = find(name);
  if (t == nullptr) return false;
  current().store(t, std::memory_order_release);
  return true;
}

}  // namespace s3a::kernels
