#include "psk/dense.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "psk/parallel.hpp"

namespace psk {

namespace {

template <typename T>
void matmul_kernel(const T* a, const T* b, T* out, std::size_t n, std::size_t m,
                   std::size_t k) {
    parallel_for(n, 16, [&](std::size_t lo, std::size_t hi) {
        std::vector<double> acc(k);
        for (std::size_t i = lo; i < hi; ++i) {
            std::fill(acc.begin(), acc.end(), 0.0);
            const T* arow = a + i * m;
            for (std::size_t l = 0; l < m; ++l) {
                const double av = static_cast<double>(arow[l]);
                const T* brow = b + l * k;
                for (std::size_t j = 0; j < k; ++j)
                    acc[j] += av * static_cast<double>(brow[j]);
            }
            T* orow = out + i * k;
            for (std::size_t j = 0; j < k; ++j) orow[j] = static_cast<T>(acc[j]);
        }
    });
}

template <typename T>
void matmul_nt_kernel(const T* a, const T* b, T* out, std::size_t n, std::size_t m,
                      std::size_t k) {
    parallel_for(n, 16, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const T* arow = a + i * m;
            T* orow = out + i * k;
            for (std::size_t j = 0; j < k; ++j) {
                const T* brow = b + j * m;
                double acc = 0.0;
                for (std::size_t l = 0; l < m; ++l)
                    acc += static_cast<double>(arow[l]) * static_cast<double>(brow[l]);
                orow[j] = static_cast<T>(acc);
            }
        }
    });
}

} // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        std::ostringstream os;
        os << "matmul: inner dimensions " << a.cols() << " vs " << b.rows();
        throw ShapeError(os.str());
    }
    require_same_precision(a, b, "matmul");
    Matrix out(a.rows(), b.cols(), a.precision());
    if (a.precision() == Precision::f64)
        matmul_kernel(a.f64_data(), b.f64_data(), out.f64_data(), a.rows(), a.cols(),
                      b.cols());
    else
        matmul_kernel(a.f32_data(), b.f32_data(), out.f32_data(), a.rows(), a.cols(),
                      b.cols());
    return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        std::ostringstream os;
        os << "matmul_nt: inner dimensions " << a.cols() << " vs " << b.cols();
        throw ShapeError(os.str());
    }
    require_same_precision(a, b, "matmul_nt");
    Matrix out(a.rows(), b.rows(), a.precision());
    if (a.precision() == Precision::f64)
        matmul_nt_kernel(a.f64_data(), b.f64_data(), out.f64_data(), a.rows(), a.cols(),
                         b.rows());
    else
        matmul_nt_kernel(a.f32_data(), b.f32_data(), out.f32_data(), a.rows(), a.cols(),
                         b.rows());
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows(), a.precision());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out.set(j, i, a(i, j));
    return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "hadamard");
    require_same_precision(a, b, "hadamard");
    Matrix out(a.rows(), a.cols(), a.precision());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out.set(i, j, a(i, j) * b(i, j));
    return out;
}

Matrix row_self_tensor(const Matrix& a) {
    const std::size_t m = a.cols();
    Matrix out(a.rows(), m * m, a.precision());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t u = 0; u < m; ++u) {
            const double x = a(i, u);
            for (std::size_t v = 0; v < m; ++v) out.set(i, u * m + v, x * a(i, v));
        }
    return out;
}

Matrix entrywise_pow(const Matrix& m, int p) {
    if (p < 2 || p % 2 != 0)
        throw ValueError("entrywise_pow: degree must be even and >= 2, got " +
                         std::to_string(p));
    Matrix out(m.rows(), m.cols(), m.precision());
    const unsigned up = static_cast<unsigned>(p);
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j)
            out.set(i, j, pow_int(m(i, j), up));
    return out;
}

Matrix lt_mask(const Matrix& m) {
    if (m.rows() != m.cols())
        throw ShapeError("lt_mask: matrix must be square, got " +
                         std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    Matrix out = m;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = i + 1; j < m.cols(); ++j) out.set(i, j, 0.0);
    return out;
}

double frobenius_norm(const Matrix& m) {
    double s = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) {
            const double v = m(i, j);
            s += v * v;
        }
    return std::sqrt(s);
}

double tensor_power_frobenius_sq(const Matrix& m, int p) {
    if (p < 1) throw ValueError("tensor_power_frobenius_sq: p must be >= 1");
    double total = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) sq += m(i, j) * m(i, j);
        total += pow_int(sq, static_cast<unsigned>(p));
    }
    return total;
}

Matrix layer_norm_rows(const Matrix& m, const std::vector<double>& gain,
                       const std::vector<double>& bias, bool normalize_variance) {
    const std::size_t h = m.cols();
    if (!gain.empty() && gain.size() != h)
        throw ShapeError("layer_norm_rows: gain length " + std::to_string(gain.size()) +
                         " != " + std::to_string(h));
    if (!bias.empty() && bias.size() != h)
        throw ShapeError("layer_norm_rows: bias length " + std::to_string(bias.size()) +
                         " != " + std::to_string(h));
    if (h == 0) return m;
    Matrix out(m.rows(), h, m.precision());
    std::vector<double> c(h);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < h; ++j) mean += m(i, j);
        mean /= static_cast<double>(h);
        for (std::size_t j = 0; j < h; ++j) c[j] = m(i, j) - mean;
        if (normalize_variance) {
            double var = 0.0;
            for (std::size_t j = 0; j < h; ++j) var += c[j] * c[j];
            var /= static_cast<double>(h);
            const double denom = std::max(std::sqrt(var), 1e-6);
            for (std::size_t j = 0; j < h; ++j) c[j] /= denom;
        }
        for (std::size_t j = 0; j < h; ++j) {
            const double g = gain.empty() ? 1.0 : gain[j];
            const double b = bias.empty() ? 0.0 : bias[j];
            out.set(i, j, g * c[j] + b);
        }
    }
    return out;
}

Matrix stable_softmax_rows(const Matrix& m, double beta) {
    if (!(beta > 0.0))
        throw ValueError("stable_softmax_rows: beta must be > 0, got " +
                         std::to_string(beta));
    if (m.cols() == 0) throw ShapeError("stable_softmax_rows: zero columns");
    Matrix out(m.rows(), m.cols(), m.precision());
    std::vector<double> e(m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double mx = m(i, 0) / beta;
        for (std::size_t j = 1; j < m.cols(); ++j)
            mx = std::max(mx, m(i, j) / beta);
        double sum = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) {
            e[j] = std::exp(m(i, j) / beta - mx);
            sum += e[j];
        }
        for (std::size_t j = 0; j < m.cols(); ++j) out.set(i, j, e[j] / sum);
    }
    return out;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "subtract");
    Matrix out(a.rows(), a.cols(), a.precision());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out.set(i, j, a(i, j) - b(i, j));
    return out;
}

double rel_frobenius_diff(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "rel_frobenius_diff");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) {
            const double d = a(i, j) - b(i, j);
            num += d * d;
            const double v = b(i, j);
            den += v * v;
        }
    if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return std::sqrt(num / den);
}

} // namespace psk
