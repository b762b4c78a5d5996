#pragma once

#include "qac/kernels.hpp"

namespace qac::kernels::detail {

// Lanes below this produce 0 from exp_sum in every variant, so both paths
// agree on which terms vanish.
inline constexpr double kExpMinArg = -708.0;

#if defined(QAC_HAVE_AVX2_KERNELS)
const KernelTable& avx2_table_impl();
#endif

}  // namespace qac::kernels::detail
