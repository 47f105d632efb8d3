#include "kernels_simd.hpp"

#include <cstdlib>

namespace arflow::kern {
namespace {

bool cpu_has_avx2() {
#if defined(ARFLOW_HAVE_AVX2_BUILD) && defined(__x86_64__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

bool env_disables_simd() {
    const char* v = std::getenv("ARFLOW_NO_SIMD");
    return v != nullptr && v[0] == '1';
}

bool& scalar_forced() {
    static bool forced = env_disables_simd();
    return forced;
}

bool use_simd() { return cpu_has_avx2() && !scalar_forced(); }

} // namespace

bool simd_available() { return cpu_has_avx2(); }

void force_scalar(bool on) { scalar_forced() = on; }

const char* active_name() { return use_simd() ? "avx2" : "scalar"; }

template <>
const Funcs<float>& active<float>() {
#if defined(ARFLOW_HAVE_AVX2_BUILD)
    if (use_simd()) return avx2_table_f32();
#endif
    return reference<float>();
}

template <>
const Funcs<double>& active<double>() {
#if defined(ARFLOW_HAVE_AVX2_BUILD)
    if (use_simd()) return avx2_table_f64();
#endif
    return reference<double>();
}

} // namespace arflow::kern
