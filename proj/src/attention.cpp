#include "psk/attention.hpp"

#include <cmath>
#include <limits>

#include "psk/dense.hpp"
#include "psk/parallel.hpp"

namespace psk {

namespace {

void check_qkv(const Matrix& q, const Matrix& k, const Matrix& v, const char* op) {
    if (q.cols() != k.cols())
        throw ShapeError(std::string(op) + ": Q and K column counts differ");
    if (k.rows() != v.rows())
        throw ShapeError(std::string(op) + ": K and V row counts differ");
}

void check_even_degree(int p, const char* op) {
    if (p < 2 || p % 2 != 0)
        throw ValueError(std::string(op) + ": degree must be even and >= 2, got " +
                         std::to_string(p));
}

} // namespace

Matrix softmax_attention(const Matrix& q, const Matrix& k, const Matrix& v, double beta) {
    check_qkv(q, k, v, "softmax_attention");
    const Matrix scores = matmul_nt(q, k);
    const Matrix w = stable_softmax_rows(scores, beta);
    return matmul(w, v);
}

RawPolyWeights raw_polynomial_weights(const Matrix& q, const Matrix& k, double alpha,
                                      double beta, int p) {
    check_even_degree(p, "raw_polynomial_weights");
    if (!(beta > 0.0)) throw ValueError("raw_polynomial_weights: beta must be > 0");
    if (q.cols() != k.cols())
        throw ShapeError("raw_polynomial_weights: Q and K column counts differ");
    const std::size_t n = q.rows(), nk = k.rows(), h = q.cols();
    RawPolyWeights out;
    out.weights = Matrix(n, nk, q.precision());
    const Matrix q64 = q.to_precision(Precision::f64);
    const Matrix k64 = k.to_precision(Precision::f64);
    const unsigned up = static_cast<unsigned>(p);
    std::vector<double> w(nk);
    for (std::size_t i = 0; i < n; ++i) {
        double den = 0.0;
        for (std::size_t j = 0; j < nk; ++j) {
            double dot = 0.0;
            for (std::size_t l = 0; l < h; ++l) dot += q64(i, l) * k64(j, l);
            w[j] = pow_int((dot + alpha) / beta, up);
            den += w[j];
        }
        if (den == 0.0) {
            out.zero_rows.push_back(i);
            continue; // weights row stays all zero
        }
        for (std::size_t j = 0; j < nk; ++j) out.weights.set(i, j, w[j] / den);
    }
    return out;
}

Matrix exact_poly_attention(const Matrix& q, const Matrix& k, const Matrix& v, int p,
                            AttentionStats* stats) {
    check_even_degree(p, "exact_poly_attention");
    check_qkv(q, k, v, "exact_poly_attention");
    const std::size_t n = q.rows(), nk = k.rows(), h = q.cols(), hv = v.cols();
    const Matrix q64 = q.to_precision(Precision::f64);
    const Matrix k64 = k.to_precision(Precision::f64);
    const Matrix v64 = v.to_precision(Precision::f64);
    Matrix out(n, hv, q.precision());
    const unsigned up = static_cast<unsigned>(p);
    std::vector<double> row_min(n, 0.0);
    parallel_for(n, 8, [&](std::size_t lo, std::size_t hi) {
        std::vector<double> num(hv);
        for (std::size_t i = lo; i < hi; ++i) {
            std::fill(num.begin(), num.end(), 0.0);
            double den = 1.0; // the "+1" guard
            for (std::size_t j = 0; j < nk; ++j) {
                double dot = 0.0;
                for (std::size_t l = 0; l < h; ++l) dot += q64(i, l) * k64(j, l);
                const double w = pow_int(dot, up);
                den += w;
                for (std::size_t c = 0; c < hv; ++c) num[c] += w * v64(j, c);
            }
            for (std::size_t c = 0; c < hv; ++c) out.set(i, c, num[c] / den);
            row_min[i] = den;
        }
    });
    if (stats) {
        stats->min_denominator = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i)
            stats->min_denominator = std::min(stats->min_denominator, row_min[i]);
        stats->clamped_masses = 0;
    }
    return out;
}

Matrix polysketch_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                            const PolyFeatureMap& fmap, AttentionStats* stats) {
    check_qkv(q, k, v, "polysketch_attention");
    if (q.cols() != fmap.input_dim())
        throw ShapeError("polysketch_attention: feature map expects input dim " +
                         std::to_string(fmap.input_dim()));
    const std::size_t n = q.rows(), nk = k.rows(), hv = v.cols();
    const std::size_t f = fmap.feature_dim();
    const Matrix phi_q = fmap.non_negative(q.to_precision(Precision::f64));
    const Matrix phi_k = fmap.non_negative(k.to_precision(Precision::f64));
    const Matrix v64 = v.to_precision(Precision::f64);
    // key summaries: T = phi'(K)^T V (f x hv) and s = phi'(K)^T 1 (f)
    std::vector<double> t(f * hv, 0.0);
    std::vector<double> s(f, 0.0);
    for (std::size_t j = 0; j < nk; ++j)
        for (std::size_t c = 0; c < f; ++c) {
            const double pk = phi_k(j, c);
            s[c] += pk;
            double* trow = t.data() + c * hv;
            for (std::size_t e = 0; e < hv; ++e) trow[e] += pk * v64(j, e);
        }
    Matrix out(n, hv, q.precision());
    std::vector<double> row_den(n, 0.0);
    std::vector<long long> clamped(n, 0);
    parallel_for(n, 8, [&](std::size_t lo, std::size_t hi) {
        std::vector<double> num(hv);
        for (std::size_t i = lo; i < hi; ++i) {
            std::fill(num.begin(), num.end(), 0.0);
            double mass = 0.0;
            for (std::size_t c = 0; c < f; ++c) {
                const double pq = phi_q(i, c);
                mass += pq * s[c];
                const double* trow = t.data() + c * hv;
                for (std::size_t e = 0; e < hv; ++e) num[e] += pq * trow[e];
            }
            if (mass < 0.0) {
                clamped[i] = 1;
                mass = 0.0; // floating-point cancellation; the true mass is >= 0
            }
            const double den = 1.0 + mass;
            for (std::size_t e = 0; e < hv; ++e) out.set(i, e, num[e] / den);
            row_den[i] = den;
        }
    });
    if (stats) {
        stats->min_denominator = std::numeric_limits<double>::infinity();
        stats->clamped_masses = 0;
        for (std::size_t i = 0; i < n; ++i) {
            stats->min_denominator = std::min(stats->min_denominator, row_den[i]);
            stats->clamped_masses += clamped[i];
        }
    }
    return out;
}

std::pair<Matrix, Matrix> absorption_transform(const Matrix& q, const Matrix& k,
                                               double alpha, double beta) {
    if (q.cols() != k.cols())
        throw ShapeError("absorption_transform: Q and K column counts differ");
    if (alpha < 0.0) throw ValueError("absorption_transform: alpha must be >= 0");
    if (!(beta > 0.0)) throw ValueError("absorption_transform: beta must be > 0");
    const std::size_t h = q.cols();
    if (h == 0) throw ShapeError("absorption_transform: zero columns");
    auto check_mean_zero = [&](const Matrix& m, const char* name) {
        for (std::size_t i = 0; i < m.rows(); ++i) {
            double mean = 0.0;
            for (std::size_t j = 0; j < h; ++j) mean += m(i, j);
            mean /= static_cast<double>(h);
            if (std::abs(mean) > 1e-9)
                throw ValueError(std::string("absorption_transform: ") + name + " row " +
                                 std::to_string(i) + " has mean " + std::to_string(mean) +
                                 " (rows must be mean-zero)");
        }
    };
    check_mean_zero(q, "Q");
    check_mean_zero(k, "K");
    const double inv_sqrt_beta = 1.0 / std::sqrt(beta);
    const double shift = std::sqrt(alpha / (beta * static_cast<double>(h)));
    auto transform = [&](const Matrix& m) {
        Matrix out(m.rows(), h, m.precision());
        for (std::size_t i = 0; i < m.rows(); ++i)
            for (std::size_t j = 0; j < h; ++j)
                out.set(i, j, m(i, j) * inv_sqrt_beta + shift);
        return out;
    };
    return {transform(q), transform(k)};
}

} // namespace psk
