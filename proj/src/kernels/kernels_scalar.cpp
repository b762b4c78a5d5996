#include <cmath>
#include <limits>

#include "kernels_internal.hpp"

namespace qac::kernels {

namespace {

double max_scalar(const double* x, std::size_t n)
{
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        m = x[i] > m ? x[i] : m;
    }
    return m;
}

double sum_scalar(const double* x, std::size_t n)
{
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        s += x[i];
    }
    return s;
}

void scale_scalar(double* x, std::size_t n, double factor)
{
    for (std::size_t i = 0; i < n; ++i) {
        x[i] *= factor;
    }
}

void add_scalar_scalar(double* x, std::size_t n, double c)
{
    for (std::size_t i = 0; i < n; ++i) {
        x[i] += c;
    }
}

void subtract_unmasked_scalar(double* x, const std::uint8_t* keep, std::size_t n, double delta)
{
    for (std::size_t i = 0; i < n; ++i) {
        if (keep[i] == 0) {
            x[i] -= delta;
        }
    }
}

double exp_sum_scalar(const double* x, std::size_t n, double shift)
{
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double d = x[i] - shift;
        if (d >= detail::kExpMinArg) {
            s += std::exp(d);
        }
    }
    return s;
}

void log_inplace_scalar(double* x, std::size_t n)
{
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = std::log(x[i]);
    }
}

void log_mix_scalar(const double* a, const double* b, double* out, std::size_t n, double lambda)
{
    const double wa = 1.0 - lambda;
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = std::log(wa * a[i] + lambda * b[i]);
    }
}

double dot_f32_scalar(const float* a, const float* b, std::size_t n)
{
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return s;
}

}  // namespace

const KernelTable& scalar_table()
{
    static const KernelTable table{
        Isa::scalar,   "scalar",       max_scalar,      sum_scalar,     scale_scalar,
        add_scalar_scalar, subtract_unmasked_scalar, exp_sum_scalar, log_inplace_scalar,
        log_mix_scalar, dot_f32_scalar,
    };
    return table;
}

}  // namespace qac::kernels
