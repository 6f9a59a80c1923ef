#pragma once

#include "texsyn/kernels.hpp"

namespace texsyn::kernels {

const KernelTable& scalar_table();
#if defined(TEXSYN_WITH_AVX2)
const KernelTable& avx2_table();
#endif

}  // namespace texsyn::kernels
