// Compiled with -mavx2 -mfma. Only reached through the dispatch table after
// a runtime CPU check, so nothing here may be called unconditionally.

#include <immintrin.h>

#include <cfloat>
#include <cmath>
#include <cstdint>
#include <cstring>

#include "kernels_internal.hpp"

namespace qac::kernels {

namespace {

// exp(x) for x in [kExpMinArg, 709]. Cody-Waite reduction by ln2, then a
// degree-13 Taylor polynomial on |r| <= ln2/2 (truncation < 1e-17 relative).
inline __m256d exp4(__m256d x)
{
    const __m256d log2e = _mm256_set1_pd(1.4426950408889634);
    const __m256d ln2_hi = _mm256_set1_pd(6.93147180369123816490e-01);
    const __m256d ln2_lo = _mm256_set1_pd(1.90821492927058770002e-10);

    __m256d k = _mm256_round_pd(_mm256_mul_pd(x, log2e), _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    __m256d r = _mm256_fnmadd_pd(k, ln2_hi, x);
    r = _mm256_fnmadd_pd(k, ln2_lo, r);

    static constexpr double c[14] = {
        1.0,
        1.0,
        1.0 / 2.0,
        1.0 / 6.0,
        1.0 / 24.0,
        1.0 / 120.0,
        1.0 / 720.0,
        1.0 / 5040.0,
        1.0 / 40320.0,
        1.0 / 362880.0,
        1.0 / 3628800.0,
        1.0 / 39916800.0,
        1.0 / 479001600.0,
        1.0 / 6227020800.0,
    };
    __m256d p = _mm256_set1_pd(c[13]);
    for (int i = 12; i >= 0; --i) {
        p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(c[i]));
    }

    __m128i ki = _mm256_cvtpd_epi32(k);
    __m256i biased = _mm256_add_epi64(_mm256_cvtepi32_epi64(ki), _mm256_set1_epi64x(1023));
    __m256d two_k = _mm256_castsi256_pd(_mm256_slli_epi64(biased, 52));
    return _mm256_mul_pd(p, two_k);
}

// log(x) for normal positive finite x. x = m * 2^e with m in [sqrt(1/2), sqrt(2)),
// log(m) = 2 atanh(s), s = (m-1)/(m+1), odd series through s^21.
inline __m256d log4(__m256d x)
{
    const __m256i mant_mask = _mm256_set1_epi64x(0x000FFFFFFFFFFFFFLL);
    const __m256i one_bits = _mm256_set1_epi64x(0x3FF0000000000000LL);
    const __m256i magic_bits = _mm256_set1_epi64x(0x4330000000000000LL);
    const __m256d magic = _mm256_set1_pd(4503599627370496.0);
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d sqrt2 = _mm256_set1_pd(1.4142135623730951);
    const __m256d ln2_hi = _mm256_set1_pd(6.93147180369123816490e-01);
    const __m256d ln2_lo = _mm256_set1_pd(1.90821492927058770002e-10);

    __m256i bits = _mm256_castpd_si256(x);
    __m256i ebits = _mm256_srli_epi64(bits, 52);
    __m256d e = _mm256_sub_pd(_mm256_castsi256_pd(_mm256_or_si256(ebits, magic_bits)), magic);
    e = _mm256_sub_pd(e, _mm256_set1_pd(1023.0));

    __m256d m = _mm256_castsi256_pd(_mm256_or_si256(_mm256_and_si256(bits, mant_mask), one_bits));
    __m256d big = _mm256_cmp_pd(m, sqrt2, _CMP_GT_OQ);
    m = _mm256_blendv_pd(m, _mm256_mul_pd(m, _mm256_set1_pd(0.5)), big);
    e = _mm256_add_pd(e, _mm256_and_pd(big, one));

    __m256d s = _mm256_div_pd(_mm256_sub_pd(m, one), _mm256_add_pd(m, one));
    __m256d s2 = _mm256_mul_pd(s, s);
    __m256d p = _mm256_set1_pd(1.0 / 21.0);
    for (int k = 19; k >= 3; k -= 2) {
        p = _mm256_fmadd_pd(p, s2, _mm256_set1_pd(1.0 / k));
    }
    p = _mm256_fmadd_pd(p, s2, one);
    __m256d log_m = _mm256_mul_pd(_mm256_add_pd(s, s), p);

    return _mm256_fmadd_pd(e, ln2_hi, _mm256_fmadd_pd(e, ln2_lo, log_m));
}

inline bool all_normal_positive(__m256d x)
{
    __m256d lo = _mm256_cmp_pd(x, _mm256_set1_pd(DBL_MIN), _CMP_GE_OQ);
    __m256d hi = _mm256_cmp_pd(x, _mm256_set1_pd(DBL_MAX), _CMP_LE_OQ);
    return _mm256_movemask_pd(_mm256_and_pd(lo, hi)) == 0xF;
}

inline double hsum(__m256d v)
{
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d shuf = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

inline double hmax(__m256d v)
{
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_max_pd(lo, hi);
    __m128d shuf = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_max_sd(lo, shuf));
}

double max_avx2(const double* x, std::size_t n)
{
    std::size_t i = 0;
    double m = -HUGE_VAL;
    if (n >= 4) {
        __m256d acc = _mm256_loadu_pd(x);
        for (i = 4; i + 4 <= n; i += 4) {
            acc = _mm256_max_pd(acc, _mm256_loadu_pd(x + i));
        }
        m = hmax(acc);
    }
    for (; i < n; ++i) {
        m = x[i] > m ? x[i] : m;
    }
    return m;
}

double sum_avx2(const double* x, std::size_t n)
{
    __m256d a0 = _mm256_setzero_pd();
    __m256d a1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        a0 = _mm256_add_pd(a0, _mm256_loadu_pd(x + i));
        a1 = _mm256_add_pd(a1, _mm256_loadu_pd(x + i + 4));
    }
    for (; i + 4 <= n; i += 4) {
        a0 = _mm256_add_pd(a0, _mm256_loadu_pd(x + i));
    }
    double s = hsum(_mm256_add_pd(a0, a1));
    for (; i < n; ++i) {
        s += x[i];
    }
    return s;
}

void scale_avx2(double* x, std::size_t n, double factor)
{
    const __m256d f = _mm256_set1_pd(factor);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(x + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), f));
    }
    for (; i < n; ++i) {
        x[i] *= factor;
    }
}

void add_scalar_avx2(double* x, std::size_t n, double c)
{
    const __m256d v = _mm256_set1_pd(c);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(x + i, _mm256_add_pd(_mm256_loadu_pd(x + i), v));
    }
    for (; i < n; ++i) {
        x[i] += c;
    }
}

void subtract_unmasked_avx2(double* x, const std::uint8_t* keep, std::size_t n, double delta)
{
    const __m256d d = _mm256_set1_pd(delta);
    const __m256i zero = _mm256_setzero_si256();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        std::int32_t packed;
        std::memcpy(&packed, keep + i, sizeof(packed));
        __m256i k = _mm256_cvtepu8_epi64(_mm_cvtsi32_si128(packed));
        __m256d drop = _mm256_castsi256_pd(_mm256_cmpeq_epi64(k, zero));
        _mm256_storeu_pd(x + i, _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_and_pd(drop, d)));
    }
    for (; i < n; ++i) {
        if (keep[i] == 0) {
            x[i] -= delta;
        }
    }
}

double exp_sum_avx2(const double* x, std::size_t n, double shift)
{
    const __m256d sh = _mm256_set1_pd(shift);
    const __m256d lo = _mm256_set1_pd(detail::kExpMinArg);
    const __m256d hi = _mm256_set1_pd(709.0);
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), sh);
        __m256d live = _mm256_cmp_pd(d, lo, _CMP_GE_OQ);
        __m256d clamped = _mm256_min_pd(_mm256_max_pd(d, lo), hi);
        acc = _mm256_add_pd(acc, _mm256_and_pd(live, exp4(clamped)));
    }
    double s = hsum(acc);
    for (; i < n; ++i) {
        double d = x[i] - shift;
        if (d >= detail::kExpMinArg) {
            s += std::exp(d);
        }
    }
    return s;
}

void log_inplace_avx2(double* x, std::size_t n)
{
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_loadu_pd(x + i);
        if (all_normal_positive(v)) {
            _mm256_storeu_pd(x + i, log4(v));
        } else {
            for (std::size_t j = i; j < i + 4; ++j) {
                x[j] = std::log(x[j]);
            }
        }
    }
    for (; i < n; ++i) {
        x[i] = std::log(x[i]);
    }
}

void log_mix_avx2(const double* a, const double* b, double* out, std::size_t n, double lambda)
{
    const double wa_s = 1.0 - lambda;
    const __m256d wa = _mm256_set1_pd(wa_s);
    const __m256d wb = _mm256_set1_pd(lambda);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_fmadd_pd(wb, _mm256_loadu_pd(b + i), _mm256_mul_pd(wa, _mm256_loadu_pd(a + i)));
        if (all_normal_positive(v)) {
            _mm256_storeu_pd(out + i, log4(v));
        } else {
            double tmp[4];
            _mm256_storeu_pd(tmp, v);
            for (int j = 0; j < 4; ++j) {
                out[i + j] = std::log(tmp[j]);
            }
        }
    }
    for (; i < n; ++i) {
        out[i] = std::log(wa_s * a[i] + lambda * b[i]);
    }
}

double dot_f32_avx2(const float* a, const float* b, std::size_t n)
{
    __m256d a0 = _mm256_setzero_pd();
    __m256d a1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 va = _mm256_loadu_ps(a + i);
        __m256 vb = _mm256_loadu_ps(b + i);
        __m256d alo = _mm256_cvtps_pd(_mm256_castps256_ps128(va));
        __m256d ahi = _mm256_cvtps_pd(_mm256_extractf128_ps(va, 1));
        __m256d blo = _mm256_cvtps_pd(_mm256_castps256_ps128(vb));
        __m256d bhi = _mm256_cvtps_pd(_mm256_extractf128_ps(vb, 1));
        a0 = _mm256_fmadd_pd(alo, blo, a0);
        a1 = _mm256_fmadd_pd(ahi, bhi, a1);
    }
    double s = hsum(_mm256_add_pd(a0, a1));
    for (; i < n; ++i) {
        s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return s;
}

}  // namespace

namespace detail {

const KernelTable& avx2_table_impl()
{
    static const KernelTable table{
        Isa::avx2,       "avx2",        max_avx2,     sum_avx2,        scale_avx2,
        add_scalar_avx2, subtract_unmasked_avx2,      exp_sum_avx2,    log_inplace_avx2,
        log_mix_avx2,    dot_f32_avx2,
    };
    return table;
}

}  // namespace detail

}  // namespace qac::kernels
