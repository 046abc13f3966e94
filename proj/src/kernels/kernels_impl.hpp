#pragma once

#include "s3a/kernels.hpp"

namespace s3a::kernels {

// Defined only in translation units built for the matching ISA. Callers must
// check the CPU before touching these.
const KernelTable* avx2_kernels();
const KernelTable* neon_kernels();

}  // namespace s3a::kernels
