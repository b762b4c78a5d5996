#pragma once

// Dense vector kernels used on the decoding hot path (one call per beam per
// step over the full vocabulary). Every kernel has a scalar reference
// implementation; an AVX2/FMA variant is picked at runtime when the CPU
// supports it. Set QAC_SIMD=scalar in the environment to force the reference
// path.

#include <cstddef>
#include <cstdint>
#include <span>

namespace qac::kernels {

enum class Isa { scalar, avx2 };

struct KernelTable {
    Isa isa;
    const char* name;

    double (*reduce_max)(const double* x, std::size_t n);
    double (*reduce_sum)(const double* x, std::size_t n);
    void (*scale)(double* x, std::size_t n, double factor);
    void (*add_scalar)(double* x, std::size_t n, double c);
    /// x[i] -= delta wherever keep[i] == 0.
    void (*subtract_unmasked)(double* x, const std::uint8_t* keep, std::size_t n, double delta);
    /// Returns sum_i exp(x[i] - shift); lanes below exp's normal range add 0.
    double (*exp_sum)(const double* x, std::size_t n, double shift);
    void (*log_inplace)(double* x, std::size_t n);
    /// out[i] = log((1 - lambda) * a[i] + lambda * b[i]).
    void (*log_mix)(const double* a, const double* b, double* out, std::size_t n, double lambda);
    /// Dot product of float vectors, accumulated in double.
    double (*dot_f32)(const float* a, const float* b, std::size_t n);
};

const KernelTable& scalar_table();

/// nullptr when the variant was not compiled in or the CPU lacks AVX2+FMA.
const KernelTable* avx2_table();

/// The table chosen for this process (resolved once).
const KernelTable& active();

// Span conveniences over active().
double reduce_max(std::span<const double> x);
double reduce_sum(std::span<const double> x);
void scale(std::span<double> x, double factor);
void subtract_unmasked(std::span<double> x, std::span<const std::uint8_t> keep, double delta);
void log_inplace(std::span<double> x);
void log_mix(std::span<const double> a, std::span<const double> b, std::span<double> out, double lambda);

/// In-place log-softmax: x[i] -= logsumexp(x). Returns the logsumexp.
double log_softmax(std::span<double> x);

double cosine(std::span<const float> a, std::span<const float> b);

}  // namespace qac::kernels
