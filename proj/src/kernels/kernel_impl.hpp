#pragma once

#include "svebm/kernels.hpp"

namespace svebm::kernels::detail {

extern const KernelTable kScalarTable;
#if defined(SVEBM_HAVE_AVX2)
extern const KernelTable kAvx2Table;
#endif

}  // namespace svebm::kernels::detail
