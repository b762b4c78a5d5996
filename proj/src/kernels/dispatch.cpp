#include <cmath>
#include <cstdlib>
#include <cstring>
#include <limits>

#include "kernels_internal.hpp"

namespace qac::kernels {

const KernelTable* avx2_table()
{
#if defined(QAC_HAVE_AVX2_KERNELS)
    static const bool supported = [] {
        __builtin_cpu_init();
        return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    }();
    return supported ? &detail::avx2_table_impl() : nullptr;
#else
    return nullptr;
#endif
}

const KernelTable& active()
{
    static const KernelTable* chosen = [] {
        const char* env = std::getenv("QAC_SIMD");
        if (env != nullptr && std::strcmp(env, "scalar") == 0) {
            return &scalar_table();
        }
        const KernelTable* fast = avx2_table();
        return fast != nullptr ? fast : &scalar_table();
    }();
    return *chosen;
}

double reduce_max(std::span<const double> x) { return active().reduce_max(x.data(), x.size()); }

double reduce_sum(std::span<const double> x) { return active().reduce_sum(x.data(), x.size()); }

void scale(std::span<double> x, double factor) { active().scale(x.data(), x.size(), factor); }

void subtract_unmasked(std::span<double> x, std::span<const std::uint8_t> keep, double delta)
{
    active().subtract_unmasked(x.data(), keep.data(), x.size(), delta);
}

void log_inplace(std::span<double> x) { active().log_inplace(x.data(), x.size()); }

void log_mix(std::span<const double> a, std::span<const double> b, std::span<double> out, double lambda)
{
    active().log_mix(a.data(), b.data(), out.data(), out.size(), lambda);
}

double log_softmax(std::span<double> x)
{
    const auto& k = active();
    double m = k.reduce_max(x.data(), x.size());
    if (!std::isfinite(m)) {
        return m;
    }
    double lse = m + std::log(k.exp_sum(x.data(), x.size(), m));
    k.add_scalar(x.data(), x.size(), -lse);
    return lse;
}

double cosine(std::span<const float> a, std::span<const float> b)
{
    const auto& k = active();
    double ab = k.dot_f32(a.data(), b.data(), a.size());
    double aa = k.dot_f32(a.data(), a.data(), a.size());
    double bb = k.dot_f32(b.data(), b.data(), b.size());
    if (aa <= 0.0 || bb <= 0.0) {
        return 0.0;
    }
    return ab / std::sqrt(aa * bb);
}

}  // namespace qac::kernels
