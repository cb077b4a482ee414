// Declarations shared between the per-arch kernel translation units and the
// dispatcher. Not installed; include "pscore/kernels.hpp" from library code.

#pragma once

#include "pscore/kernels.hpp"

namespace pscore::kernels {

#if defined(__x86_64__) || defined(__i386__)
const Ops& avx2();
#endif

#if defined(__aarch64__)
const Ops& neon();
#endif

} // namespace pscore::kernels
