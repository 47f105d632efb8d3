#pragma once

#include "arflow/kernels.hpp"

// Internal linkage between the AVX2 translation unit and the dispatcher.
// When the build has no AVX2 TU, avx2_table() is absent and the macro
// ARFLOW_HAVE_AVX2_BUILD is undefined.

namespace arflow::kern {

#if defined(ARFLOW_HAVE_AVX2_BUILD)
const Funcs<float>& avx2_table_f32();
const Funcs<double>& avx2_table_f64();
#endif

} // namespace arflow::kern
