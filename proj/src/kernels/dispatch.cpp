#include "umm/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace umm::kern {

const Kernels<float>& scalar_table_f32();
const Kernels<double>& scalar_table_f64();

#if defined(__x86_64__) || defined(_M_X64)
#define UMM_HAVE_AVX2_TU 1
const Kernels<float>& avx2_table_f32();
const Kernels<double>& avx2_table_f64();
#endif

Isa best_supported_isa() {
#ifdef UMM_HAVE_AVX2_TU
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return Isa::avx2;
#endif
    return Isa::scalar;
}

static Isa pick_startup_isa() {
    if (const char* env = std::getenv("UMM_ISA")) {
        if (std::strcmp(env, "scalar") == 0) return Isa::scalar;
        if (std::strcmp(env, "avx2") == 0) return Isa::avx2;
    }
    return best_supported_isa();
}

static Isa g_isa = pick_startup_isa();

Isa active_isa() { return g_isa; }
void set_isa(Isa isa) { g_isa = isa; }

const char* isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

template <>
const Kernels<float>& table<float>(Isa isa) {
#ifdef UMM_HAVE_AVX2_TU
    if (isa == Isa::avx2) return avx2_table_f32();
#endif
    (void)isa;
    return scalar_table_f32();
}

template <>
const Kernels<double>& table<double>(Isa isa) {
#ifdef UMM_HAVE_AVX2_TU
    if (isa == Isa::avx2) return avx2_table_f64();
#endif
    (void)isa;
    return scalar_table_f64();
}

template <>
const Kernels<float>& active<float>() {
    return table<float>(g_isa);
}

template <>
const Kernels<double>& active<double>() {
    return table<double>(g_isa);
}

} // namespace umm::kern
