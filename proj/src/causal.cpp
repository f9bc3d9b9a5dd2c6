#include "psk/causal.hpp"

#include <cmath>
#include <limits>

#include "psk/dense.hpp"
#include "psk/parallel.hpp"

namespace psk {

BlockPlan::BlockPlan(std::size_t n_, std::size_t b) : n(n_) {
    if (n == 0) throw ShapeError("BlockPlan: empty sequence");
    if (b < 1) throw ValueError("BlockPlan: block size must be at least 1");
    block = b < n ? b : n; // a block larger than the sequence is one block
    count = (n + block - 1) / block;
}

namespace {

void check_lt_shapes(const Matrix& a, const Matrix& b, const Matrix& c, const char* op) {
    if (a.rows() != b.rows() || a.rows() != c.rows())
        throw ShapeError(std::string(op) + ": A, B, C must have the same row count");
    if (a.cols() != b.cols())
        throw ShapeError(std::string(op) + ": A and B column counts differ");
    require_same_precision(a, b, op);
    require_same_precision(a, c, op);
}

void check_causal_qkv(const Matrix& q, const Matrix& k, const Matrix& v, const char* op) {
    if (q.rows() != k.rows() || q.rows() != v.rows())
        throw ShapeError(std::string(op) + ": Q, K, V must share the sequence length");
    if (q.cols() != k.cols())
        throw ShapeError(std::string(op) + ": Q and K column counts differ");
}

} // namespace

Matrix lt_multiply_naive(const Matrix& a, const Matrix& b, const Matrix& c) {
    check_lt_shapes(a, b, c, "lt_multiply_naive");
    if (a.rows() > kLtNaiveMaxRows)
        throw ValueError("lt_multiply_naive: n = " + std::to_string(a.rows()) +
                         " exceeds the materialization cap " +
                         std::to_string(kLtNaiveMaxRows));
    return matmul(lt_mask(matmul_nt(a, b)), c);
}

Matrix lt_multiply_blocked(const Matrix& a, const Matrix& b, const Matrix& c,
                           std::size_t b_size, long long* mac_count) {
    check_lt_shapes(a, b, c, "lt_multiply_blocked");
    const std::size_t n = a.rows(), m = a.cols(), k = c.cols();
    const BlockPlan plan(n, b_size);
    Matrix out(n, k, a.precision());
    std::vector<double> z(m * k, 0.0); // prefix state Z, always f64
    long long macs = 0;
    for (std::size_t l = 0; l < plan.count; ++l) {
        const std::size_t s = plan.begin(l), e = plan.end(l), bl = e - s;
        const Matrix a_l = a.row_slice(s, e);
        const Matrix b_l = b.row_slice(s, e);
        const Matrix ab = matmul_nt(a_l, b_l); // bl x bl at storage precision
        macs += static_cast<long long>(bl * bl * m);
        // output block: P_l row i' = sum_{j'<=i'} ab[i',j'] c_{s+j'}, plus the
        // cross-block term a_i' . Z; both accumulate in f64 and round once.
        parallel_for(bl, 8, [&](std::size_t lo, std::size_t hi) {
            std::vector<double> acc(k);
            for (std::size_t ip = lo; ip < hi; ++ip) {
                std::fill(acc.begin(), acc.end(), 0.0);
                for (std::size_t jp = 0; jp <= ip; ++jp) {
                    const double w = ab(ip, jp);
                    for (std::size_t col = 0; col < k; ++col)
                        acc[col] += w * c(s + jp, col);
                }
                if (l > 0) {
                    for (std::size_t col = 0; col < k; ++col) {
                        double cross = 0.0;
                        for (std::size_t d = 0; d < m; ++d)
                            cross += a_l(ip, d) * z[d * k + col];
                        acc[col] += cross;
                    }
                }
                for (std::size_t col = 0; col < k; ++col) out.set(s + ip, col, acc[col]);
            }
        });
        macs += static_cast<long long>(bl * (bl + 1) / 2 * k);
        if (l > 0) macs += static_cast<long long>(bl * m * k);
        // fold H_l = B_l^T C_l into the prefix state (sequential over blocks)
        parallel_for(m, 4, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t d = lo; d < hi; ++d)
                for (std::size_t jp = 0; jp < bl; ++jp) {
                    const double bv = b_l(jp, d);
                    for (std::size_t col = 0; col < k; ++col)
                        z[d * k + col] += bv * c(s + jp, col);
                }
        });
        macs += static_cast<long long>(bl * m * k);
    }
    if (mac_count) *mac_count = macs;
    return out;
}

Matrix causal_exact_poly_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                                   int p, AttentionStats* stats) {
    if (p < 2 || p % 2 != 0)
        throw ValueError("causal_exact_poly_attention: degree must be even and >= 2");
    check_causal_qkv(q, k, v, "causal_exact_poly_attention");
    const std::size_t n = q.rows(), h = q.cols(), hv = v.cols();
    if (n > kCausalExactMaxRows)
        throw ValueError("causal_exact_poly_attention: n = " + std::to_string(n) +
                         " exceeds cap " + std::to_string(kCausalExactMaxRows));
    const Matrix q64 = q.to_precision(Precision::f64);
    const Matrix k64 = k.to_precision(Precision::f64);
    const Matrix v64 = v.to_precision(Precision::f64);
    Matrix out(n, hv, q.precision());
    const unsigned up = static_cast<unsigned>(p);
    std::vector<double> row_den(n, 0.0);
    parallel_for(n, 4, [&](std::size_t lo, std::size_t hi) {
        std::vector<double> num(hv);
        for (std::size_t i = lo; i < hi; ++i) {
            std::fill(num.begin(), num.end(), 0.0);
            double den = 1.0;
            const double* qi = q64.f64_data() + i * h;
            for (std::size_t j = 0; j <= i; ++j) {
                const double* kj = k64.f64_data() + j * h;
                double dot = 0.0;
                for (std::size_t l = 0; l < h; ++l) dot += qi[l] * kj[l];
                const double w = pow_int(dot, up);
                den += w;
                const double* vj = v64.f64_data() + j * hv;
                for (std::size_t c = 0; c < hv; ++c) num[c] += w * vj[c];
            }
            for (std::size_t c = 0; c < hv; ++c) out.set(i, c, num[c] / den);
            row_den[i] = den;
        }
    });
    if (stats) {
        stats->min_denominator = std::numeric_limits<double>::infinity();
        for (double d : row_den) stats->min_denominator = std::min(stats->min_denominator, d);
        stats->clamped_masses = 0;
    }
    return out;
}

Matrix causal_polysketch_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                                   const PolyFeatureMap& fmap, std::size_t b_size,
                                   bool local_exact, AttentionStats* stats,
                                   std::vector<Matrix>* prefix_states) {
    check_causal_qkv(q, k, v, "causal_polysketch_attention");
    if (q.cols() != fmap.input_dim())
        throw ShapeError("causal_polysketch_attention: feature map expects input dim " +
                         std::to_string(fmap.input_dim()));
    const std::size_t n = q.rows(), h = q.cols(), hv = v.cols();
    const BlockPlan plan(n, b_size);
    const std::size_t f = fmap.feature_dim();
    const std::size_t w_state = hv + 1; // value columns plus the mass column
    const int p = fmap.degree();
    const Matrix q64 = q.to_precision(Precision::f64);
    const Matrix k64 = k.to_precision(Precision::f64);
    const Matrix v64 = v.to_precision(Precision::f64);
    Matrix out(n, hv, q.precision());
    std::vector<double> z(f * w_state, 0.0); // prefix state, always f64
    std::vector<double> row_den(n, 0.0);
    std::vector<long long> row_clamped(n, 0);
    if (prefix_states) prefix_states->clear();
    for (std::size_t l = 0; l < plan.count; ++l) {
        const std::size_t s = plan.begin(l), e = plan.end(l), bl = e - s;
        const Matrix lq = fmap.with_negativity(q64.row_slice(s, e)); // bl x factor
        const Matrix rk = fmap.with_negativity(k64.row_slice(s, e));
        const Matrix phi_q = row_self_tensor(lq); // bl x f
        const Matrix phi_k = row_self_tensor(rk);
        // diagonal-block weights: (L R^T)^2 entrywise, or exact (Q K^T)^p
        Matrix w_diag(0, 0);
        if (local_exact) {
            const Matrix qk = matmul_nt(q64.row_slice(s, e), k64.row_slice(s, e));
            w_diag = entrywise_pow(qk, p);
        } else {
            const Matrix lr = matmul_nt(lq, rk);
            w_diag = hadamard(lr, lr);
        }
        parallel_for(bl, 4, [&](std::size_t lo, std::size_t hi) {
            std::vector<double> num(hv);
            for (std::size_t ip = lo; ip < hi; ++ip) {
                std::fill(num.begin(), num.end(), 0.0);
                // cross-block numerator and mass from the prefix state
                double cross_mass = 0.0;
                const double* pq = phi_q.f64_data() + ip * f;
                for (std::size_t c = 0; c < f; ++c) {
                    const double x = pq[c];
                    const double* zrow = z.data() + c * w_state;
                    for (std::size_t col = 0; col < hv; ++col) num[col] += x * zrow[col];
                    cross_mass += x * zrow[hv];
                }
                long long clamped = 0;
                if (cross_mass < 0.0) {
                    clamped = 1;
                    cross_mass = 0.0; // cancellation noise; true mass is >= 0
                }
                // diagonal block, keys j' <= i'
                double diag_mass = 0.0;
                for (std::size_t jp = 0; jp <= ip; ++jp) {
                    const double w = w_diag(ip, jp);
                    diag_mass += w;
                    const double* vj = v64.f64_data() + (s + jp) * hv;
                    for (std::size_t col = 0; col < hv; ++col) num[col] += w * vj[col];
                }
                const double den = 1.0 + diag_mass + cross_mass;
                for (std::size_t col = 0; col < hv; ++col)
                    out.set(s + ip, col, num[col] / den);
                row_den[s + ip] = den;
                row_clamped[s + ip] = clamped;
            }
        });
        // fold this block's keys into the prefix state: Z += phi'(K_l)^T [V_l | 1]
        parallel_for(f, 64, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t c = lo; c < hi; ++c) {
                double* zrow = z.data() + c * w_state;
                for (std::size_t jp = 0; jp < bl; ++jp) {
                    const double pk = phi_k(jp, c);
                    const double* vj = v64.f64_data() + (s + jp) * hv;
                    for (std::size_t col = 0; col < hv; ++col) zrow[col] += pk * vj[col];
                    zrow[hv] += pk;
                }
            }
        });
        if (prefix_states) {
            Matrix snap(f, w_state, Precision::f64);
            std::copy(z.begin(), z.end(), snap.f64_data());
            prefix_states->push_back(std::move(snap));
        }
    }
    if (stats) {
        stats->min_denominator = std::numeric_limits<double>::infinity();
        stats->clamped_masses = 0;
        for (std::size_t i = 0; i < n; ++i) {
            stats->min_denominator = std::min(stats->min_denominator, row_den[i]);
            stats->clamped_masses += row_clamped[i];
        }
    }
    return out;
}

} // namespace psk
