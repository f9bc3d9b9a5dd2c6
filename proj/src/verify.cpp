#include "psk/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>

#include "psk/attention.hpp"
#include "psk/causal.hpp"
#include "psk/dense.hpp"
#include "psk/learnable.hpp"
#include "psk/rng.hpp"

namespace psk {

namespace oracle {

Matrix softmax_rows_reference(const Matrix& m, double beta) {
    Matrix out(m.rows(), m.cols(), m.precision());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) sum += std::exp(m(i, j) / beta);
        for (std::size_t j = 0; j < m.cols(); ++j)
            out.set(i, j, std::exp(m(i, j) / beta) / sum);
    }
    return out;
}

Matrix polysketch_attention_materialized(const Matrix& q, const Matrix& k,
                                         const Matrix& v, const PolyFeatureMap& fmap) {
    const Matrix phi_q = fmap.non_negative(q.to_precision(Precision::f64));
    const Matrix phi_k = fmap.non_negative(k.to_precision(Precision::f64));
    const Matrix v64 = v.to_precision(Precision::f64);
    const Matrix a = matmul_nt(phi_q, phi_k);
    Matrix out(q.rows(), v.cols(), q.precision());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double den = 1.0;
        for (std::size_t j = 0; j < a.cols(); ++j) den += a(i, j);
        for (std::size_t c = 0; c < v64.cols(); ++c) {
            double num = 0.0;
            for (std::size_t j = 0; j < a.cols(); ++j) num += a(i, j) * v64(j, c);
            out.set(i, c, num / den);
        }
    }
    return out;
}

Matrix causal_polysketch_materialized(const Matrix& q, const Matrix& k, const Matrix& v,
                                      const PolyFeatureMap& fmap) {
    const Matrix phi_q = fmap.non_negative(q.to_precision(Precision::f64));
    const Matrix phi_k = fmap.non_negative(k.to_precision(Precision::f64));
    const Matrix v64 = v.to_precision(Precision::f64);
    const Matrix a = lt_mask(matmul_nt(phi_q, phi_k));
    Matrix out(q.rows(), v.cols(), q.precision());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double den = 1.0;
        for (std::size_t j = 0; j <= i; ++j) den += a(i, j);
        for (std::size_t c = 0; c < v64.cols(); ++c) {
            double num = 0.0;
            for (std::size_t j = 0; j <= i; ++j) num += a(i, j) * v64(j, c);
            out.set(i, c, num / den);
        }
    }
    return out;
}

Matrix causal_hybrid_materialized(const Matrix& q, const Matrix& k, const Matrix& v,
                                  const PolyFeatureMap& fmap, std::size_t block) {
    const std::size_t n = q.rows(), h = q.cols();
    const BlockPlan plan(n, block);
    (void)plan;
    const int p = fmap.degree();
    const Matrix q64 = q.to_precision(Precision::f64);
    const Matrix k64 = k.to_precision(Precision::f64);
    const Matrix v64 = v.to_precision(Precision::f64);
    const Matrix phi_q = fmap.non_negative(q64);
    const Matrix phi_k = fmap.non_negative(k64);
    const std::size_t f = phi_q.cols();
    Matrix out(n, v.cols(), q.precision());
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> w(i + 1, 0.0);
        for (std::size_t j = 0; j <= i; ++j) {
            if (j / block == i / block) {
                double dot = 0.0;
                for (std::size_t l = 0; l < h; ++l) dot += q64(i, l) * k64(j, l);
                w[j] = pow_int(dot, static_cast<unsigned>(p));
            } else {
                double dot = 0.0;
                for (std::size_t c = 0; c < f; ++c) dot += phi_q(i, c) * phi_k(j, c);
                w[j] = dot;
            }
        }
        double den = 1.0;
        for (std::size_t j = 0; j <= i; ++j) den += w[j];
        for (std::size_t c = 0; c < v64.cols(); ++c) {
            double num = 0.0;
            for (std::size_t j = 0; j <= i; ++j) num += w[j] * v64(j, c);
            out.set(i, c, num / den);
        }
    }
    return out;
}

} // namespace oracle

namespace {

struct Ctx {
    std::uint64_t seed;
    Precision prec;
    InjectedFault fault;
    std::vector<CheckResult>* out;

    // f64 tolerances are the contract; f32 runs use a loosened floor since
    // the stated bounds assume double storage.
    double tol(double f64_tol) const {
        return prec == Precision::f64 ? f64_tol : std::max(f64_tol, 1e-4);
    }
    std::uint64_t sub(std::uint64_t tag, std::uint64_t i = 0) const {
        return mix_seed(seed, tag, i);
    }
    void check(const std::string& name, bool ok, const std::string& detail) {
        out->push_back({name, ok, detail});
    }
};

std::string fmt(const char* f, double a, double b = 0.0) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), f, a, b);
    return buf;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

bool rows_equal_within(const Matrix& a, const Matrix& b, std::size_t row_end, double tol) {
    for (std::size_t i = 0; i < row_end; ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            if (std::abs(a(i, j) - b(i, j)) > tol) return false;
    return true;
}

// ---------------------------------------------------------------- sketch --

void suite_sketch(Ctx& ctx) {
    // determinism: same (h, r, p, seed) => bit-identical sketch outputs
    {
        const SketchTree t1 = sample_sketch(8, 16, 4, ctx.sub(1));
        const SketchTree t2 = sample_sketch(8, 16, 4, ctx.sub(1));
        const Matrix a = random_gaussian(20, 8, ctx.sub(2), ctx.prec);
        const Matrix s1 = apply_non_negative(a, t1);
        const Matrix s2 = apply_non_negative(a, t2);
        bool same = s1.same_shape(s2);
        for (std::size_t i = 0; same && i < s1.rows(); ++i)
            for (std::size_t j = 0; j < s1.cols(); ++j)
                if (s1(i, j) != s2(i, j)) { same = false; break; }
        ctx.check("sketch/determinism", same, "two samples with one seed, bitwise");
    }
    // p = 2: the map is exact, feature dots equal squared dots
    {
        double worst = 0.0;
        const SketchTree t = sample_sketch(8, 5, 2, ctx.sub(3));
        for (int trial = 0; trial < 100; ++trial) {
            const Matrix pair = random_gaussian(2, 8, ctx.sub(4, trial));
            const Matrix phi = apply_non_negative(pair, t);
            double dot = 0.0, fdot = 0.0;
            for (std::size_t l = 0; l < 8; ++l) dot += pair(0, l) * pair(1, l);
            for (std::size_t c = 0; c < phi.cols(); ++c) fdot += phi(0, c) * phi(1, c);
            worst = std::max(worst, std::abs(fdot - dot * dot));
        }
        ctx.check("sketch/degree2-exact", worst <= ctx.tol(1e-10),
                  fmt("max |<phi,phi> - <a,b>^2| = %.3g", worst));
    }
    // non-negativity of squared-factor weights and clamped feature dots
    {
        bool ok = true;
        double worst_rel = 0.0;
        for (int s = 0; s < 5 && ok; ++s) {
            const SketchTree t = sample_sketch(16, 16, 4, ctx.sub(5, s));
            const Matrix q = random_gaussian(64, 16, ctx.sub(6, s));
            const Matrix k = random_gaussian(64, 16, ctx.sub(7, s));
            const Matrix l = apply_with_negativity(q, t);
            const Matrix r = apply_with_negativity(k, t);
            const Matrix lr = matmul_nt(l, r);
            const Matrix w = hadamard(lr, lr);
            for (std::size_t i = 0; i < w.rows() && ok; ++i)
                for (std::size_t j = 0; j < w.cols(); ++j)
                    if (!(w(i, j) >= 0.0)) { ok = false; break; }
            const Matrix phi_q = apply_non_negative(q, t);
            const Matrix phi_k = apply_non_negative(k, t);
            const Matrix dots = matmul_nt(phi_q, phi_k);
            for (std::size_t i = 0; i < dots.rows(); ++i) {
                double nq = 0.0;
                for (std::size_t c = 0; c < phi_q.cols(); ++c) nq += phi_q(i, c) * phi_q(i, c);
                for (std::size_t j = 0; j < dots.cols(); ++j) {
                    if (dots(i, j) >= 0.0) continue;
                    double nk = 0.0;
                    for (std::size_t c = 0; c < phi_k.cols(); ++c)
                        nk += phi_k(j, c) * phi_k(j, c);
                    const double scale = std::sqrt(nq) * std::sqrt(nk);
                    if (scale > 0.0)
                        worst_rel = std::max(worst_rel, -dots(i, j) / scale);
                }
            }
        }
        ctx.check("sketch/non-negativity", ok && worst_rel <= 1e-6,
                  fmt("squared weights >= 0; worst negative dot %.3g relative", worst_rel));
    }
    // operation counts: q h x r products, q-2 r x r, q-1 Hadamards, 1 self-tensor
    {
        bool ok = true;
        std::string detail;
        for (int p : {4, 8}) {
            const int q = p / 2;
            const SketchTree t = sample_sketch(8, 4, p, ctx.sub(8, p));
            OpCounter c;
            apply_non_negative(random_gaussian(3, 8, ctx.sub(9, p)), t, &c);
            const bool match = c.hr_products == q && c.rr_products == q - 2 &&
                               c.hadamards == q - 1 && c.self_tensors == 1;
            ok = ok && match;
            detail += "p=" + std::to_string(p) + ":" + std::to_string(c.hr_products) + "/" +
                      std::to_string(c.rr_products) + "/" + std::to_string(c.hadamards) +
                      "/" + std::to_string(c.self_tensors) + " ";
        }
        ctx.check("sketch/op-counts", ok, detail + "(hxr/rxr/hadamard/self-tensor)");
    }
    // AMM error medians shrink as r grows
    {
        std::vector<double> med;
        for (std::size_t r : {4u, 16u, 64u}) {
            std::vector<double> errs;
            for (int trial = 0; trial < 10; ++trial) {
                const SketchTree t = sample_sketch(8, r, 4, ctx.sub(10, 100 * r + trial));
                const Matrix q = random_unit_rows(32, 8, ctx.sub(11, trial));
                const Matrix k = random_unit_rows(32, 8, ctx.sub(12, trial));
                errs.push_back(amm_relative_error(q, k, t, 4));
            }
            med.push_back(median(errs));
        }
        const bool ok = med[0] >= med[1] && med[1] >= med[2];
        ctx.check("sketch/amm-monotone", ok,
                  fmt("medians r=4:%.3g r=16:%.3g", med[0], med[1]) + fmt(" r=64:%.3g", med[2]));
    }
    // unbiasedness of the signed degree-2 sketch (light Monte Carlo)
    {
        const int trials = 2000;
        double sum = 0.0, sumsq = 0.0;
        for (int s = 0; s < trials; ++s) {
            const SketchTree t = sample_sketch(4, 4, 4, ctx.sub(13, s));
            Matrix ab(2, 4, Precision::f64);
            ab.set(0, 0, 1.0);
            ab.set(1, 0, 1.0);
            const Matrix sk = apply_with_negativity(ab, t);
            double dot = 0.0;
            for (std::size_t c = 0; c < sk.cols(); ++c) dot += sk(0, c) * sk(1, c);
            sum += dot;
            sumsq += dot * dot;
        }
        const double mean = sum / trials;
        const double var = std::max(0.0, sumsq / trials - mean * mean);
        const double se = std::sqrt(var / trials);
        const bool ok = std::abs(mean - 1.0) <= 3.0 * se;
        ctx.check("sketch/unbiased-degree2", ok,
                  fmt("MC mean %.5g (target 1), 3se = %.3g", mean, 3.0 * se));
    }
    // serialization round-trip preserves behavior and bytes
    {
        namespace fs = std::filesystem;
        const fs::path dir = fs::temp_directory_path() / "psk_verify";
        fs::create_directories(dir);
        const std::string p1 = (dir / "tree_a.pskb").string();
        const std::string p2 = (dir / "tree_b.pskb").string();
        const SketchTree t = sample_sketch(6, 8, 8, ctx.sub(14));
        save_sketch(p1, t);
        const SketchTree t2 = load_sketch(p1);
        save_sketch(p2, t2);
        std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
        const std::string bytes1((std::istreambuf_iterator<char>(f1)), {});
        const std::string bytes2((std::istreambuf_iterator<char>(f2)), {});
        const Matrix a = random_gaussian(5, 6, ctx.sub(15));
        const Matrix s1 = apply_non_negative(a, t);
        const Matrix s2 = apply_non_negative(a, t2);
        bool same = bytes1 == bytes2 && !bytes1.empty();
        for (std::size_t i = 0; same && i < s1.rows(); ++i)
            for (std::size_t j = 0; j < s1.cols(); ++j)
                if (s1(i, j) != s2(i, j)) { same = false; break; }
        fs::remove(p1);
        fs::remove(p2);
        ctx.check("sketch/serialization-roundtrip", same,
                  "save -> load -> save byte-identical; outputs bitwise equal");
    }
}

// ------------------------------------------------------------- attention --

void suite_attention(Ctx& ctx) {
    // softmax weights invariant under per-row logit shifts
    {
        const Matrix q = random_gaussian(24, 8, ctx.sub(20), ctx.prec);
        const Matrix k = random_gaussian(24, 8, ctx.sub(21), ctx.prec);
        const Matrix v = random_gaussian(24, 8, ctx.sub(22), ctx.prec);
        Matrix k_shift = k;
        for (std::size_t i = 0; i < k.rows(); ++i)
            for (std::size_t j = 0; j < k.cols(); ++j)
                k_shift.set(i, j, k(i, j) + 500.0); // adds a per-row constant to Q K^T
        const Matrix o1 = softmax_attention(q, k, v, 2.0);
        const Matrix o2 = softmax_attention(q, k_shift, v, 2.0);
        const double d = rel_frobenius_diff(o2, o1);
        ctx.check("attention/softmax-shift-invariance", d <= ctx.tol(1e-9),
                  fmt("rel diff %.3g under constant key shift", d));
    }
    // raw polynomial weights do not depend on beta
    {
        const Matrix q = random_gaussian(32, 8, ctx.sub(23));
        const Matrix k = random_gaussian(32, 8, ctx.sub(24));
        const auto w1 = raw_polynomial_weights(q, k, 0.5, 1.0, 4);
        const auto w2 = raw_polynomial_weights(q, k, 0.5, 7.0, 4);
        const double d = rel_frobenius_diff(w2.weights, w1.weights);
        ctx.check("attention/raw-beta-invariance", d <= ctx.tol(1e-9),
                  fmt("rel diff %.3g between beta=1 and beta=7", d));
    }
    // large alpha flattens the raw weights toward uniform 1/n
    {
        const std::size_t n = 16;
        const Matrix q = random_gaussian(n, 8, ctx.sub(25));
        const Matrix k = random_gaussian(n, 8, ctx.sub(26));
        double max_abs = 0.0;
        const Matrix qk = matmul_nt(q, k);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) max_abs = std::max(max_abs, std::abs(qk(i, j)));
        const auto w = raw_polynomial_weights(q, k, 1e6 * max_abs, 1.0, 4);
        double worst = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                worst = std::max(worst, std::abs(w.weights(i, j) - 1.0 / n));
        ctx.check("attention/raw-alpha-flatten", worst <= 1e-3,
                  fmt("max |w - 1/n| = %.3g at alpha = 1e6 max|qk|", worst));
    }
    // zero raw denominator: zero row plus diagnostic, never NaN
    {
        const Matrix q = Matrix::from_rows({{1.0, 0.0}});
        const Matrix k = Matrix::from_rows({{0.0, 1.0}, {0.0, 2.0}});
        const auto w = raw_polynomial_weights(q, k, 0.0, 1.0, 2);
        bool ok = w.zero_rows.size() == 1 && w.zero_rows[0] == 0;
        for (std::size_t j = 0; j < 2; ++j) ok = ok && w.weights(0, j) == 0.0;
        ctx.check("attention/raw-zero-denominator", ok,
                  "orthogonal q with alpha=0 reports a zero row");
    }
    // absorption: ((<q,k>+alpha)/beta) becomes a plain dot product
    {
        const double alpha = 1.7, beta = 3.2;
        const Matrix q = random_zero_mean_rows(12, 8, ctx.sub(27));
        const Matrix k = random_zero_mean_rows(12, 8, ctx.sub(28));
        const auto [qp, kp] = absorption_transform(q, k, alpha, beta);
        const Matrix lhs = matmul_nt(qp, kp);
        const Matrix qk = matmul_nt(q, k);
        double worst = 0.0;
        for (std::size_t i = 0; i < qk.rows(); ++i)
            for (std::size_t j = 0; j < qk.cols(); ++j)
                worst = std::max(worst, std::abs((qk(i, j) + alpha) / beta - lhs(i, j)));
        // and the raw weights equal the transformed unguarded weights
        const auto raw = raw_polynomial_weights(q, k, alpha, beta, 4);
        const Matrix wp = entrywise_pow(lhs, 4);
        double worst_w = 0.0;
        for (std::size_t i = 0; i < wp.rows(); ++i) {
            double den = 0.0;
            for (std::size_t j = 0; j < wp.cols(); ++j) den += wp(i, j);
            for (std::size_t j = 0; j < wp.cols(); ++j)
                worst_w = std::max(worst_w, std::abs(raw.weights(i, j) - wp(i, j) / den));
        }
        ctx.check("attention/absorption-identity", worst <= 1e-9 && worst_w <= 1e-9,
                  fmt("dot identity %.3g, weight identity %.3g", worst, worst_w));
    }
    // closed-form spot checks of the "+1" guarded attention
    {
        const Matrix q = Matrix::from_rows({{1.0, 0.0}});
        const Matrix k = Matrix::from_rows({{1.0, 0.0}});
        const Matrix v = Matrix::from_rows({{3.0, -2.0}});
        const Matrix o = exact_poly_attention(q, k, v, 4);
        bool ok = std::abs(o(0, 0) - 1.5) <= 1e-12 && std::abs(o(0, 1) + 1.0) <= 1e-12;
        const Matrix k2 = Matrix::from_rows({{0.0, 1.0}});
        const Matrix o2 = exact_poly_attention(q, k2, v, 4);
        ok = ok && o2(0, 0) == 0.0 && o2(0, 1) == 0.0;
        ctx.check("attention/exact-closed-forms", ok,
                  "n=1 <q,k>=1 gives v/2; orthogonal keys give the zero row");
    }
    // linearized sketched attention equals the materialized oracle
    {
        const SketchTree t = sample_sketch(8, 16, 4, ctx.sub(29));
        const Matrix q = random_gaussian(64, 8, ctx.sub(30), ctx.prec);
        const Matrix k = random_gaussian(64, 8, ctx.sub(31), ctx.prec);
        const Matrix v = random_gaussian(64, 8, ctx.sub(32), ctx.prec);
        AttentionStats st{};
        const Matrix fast = polysketch_attention(q, k, v, t, &st);
        const Matrix slow = oracle::polysketch_attention_materialized(q, k, v, t);
        const double d = rel_frobenius_diff(fast, slow);
        ctx.check("attention/linearization", d <= ctx.tol(1e-9) && st.min_denominator >= 1.0,
                  fmt("rel diff %.3g vs materialized; min denom %.6g", d, st.min_denominator));
    }
    // p = 2 sketched attention matches the exact mechanism
    {
        const SketchTree t = sample_sketch(8, 32, 2, ctx.sub(33));
        const Matrix q = random_gaussian(128, 8, ctx.sub(34));
        const Matrix k = random_gaussian(128, 8, ctx.sub(35));
        const Matrix v = random_gaussian(128, 8, ctx.sub(36));
        const Matrix a = polysketch_attention(q, k, v, t);
        const Matrix e = exact_poly_attention(q, k, v, 2);
        const double d = rel_frobenius_diff(a, e);
        ctx.check("attention/degree2-equals-exact", d <= ctx.tol(1e-10),
                  fmt("rel diff %.3g", d));
    }
}

// ---------------------------------------------------------------- causal --

Matrix naive_lt_reference(const Matrix& a, const Matrix& b, const Matrix& c,
                          InjectedFault fault) {
    Matrix masked = lt_mask(matmul_nt(a, b));
    if (fault == InjectedFault::lt_diagonal)
        for (std::size_t i = 0; i < masked.rows(); ++i) masked.set(i, i, 0.0);
    return matmul(masked, c);
}

void suite_causal(Ctx& ctx) {
    // blocked == naive across sizes, block sizes, partial last blocks
    {
        bool ok = true;
        double worst = 0.0;
        std::string where;
        for (std::size_t n : {std::size_t{1}, std::size_t{7}, std::size_t{64}, std::size_t{130}})
            for (std::size_t b : {std::size_t{1}, std::size_t{8}, std::size_t{64}, n}) {
                if (b < 1 || b > n) continue;
                for (std::size_t m : {std::size_t{1}, std::size_t{5}, std::size_t{17}})
                    for (std::size_t kk : {std::size_t{1}, std::size_t{5}, std::size_t{17}}) {
                        const std::uint64_t s = ctx.sub(40, n * 1000000 + b * 10000 + m * 100 + kk);
                        const Matrix a = random_gaussian(n, m, s, ctx.prec);
                        const Matrix bm = random_gaussian(n, m, s + 1, ctx.prec);
                        const Matrix c = random_gaussian(n, kk, s + 2, ctx.prec);
                        const Matrix fast = lt_multiply_blocked(a, bm, c, b);
                        const Matrix ref = naive_lt_reference(a, bm, c, ctx.fault);
                        const double d = rel_frobenius_diff(fast, ref);
                        if (d > worst) {
                            worst = d;
                            where = "n=" + std::to_string(n) + " b=" + std::to_string(b) +
                                    " m=" + std::to_string(m) + " k=" + std::to_string(kk);
                        }
                        if (d > ctx.tol(1e-10)) ok = false;
                    }
            }
        ctx.check("causal/blocked-vs-naive-grid", ok,
                  fmt("worst rel diff %.3g", worst) + (where.empty() ? "" : " at " + where));
    }
    // b = n degenerate blocking is the same arithmetic, bit for bit
    {
        const Matrix a = random_gaussian(64, 8, ctx.sub(41), ctx.prec);
        const Matrix b = random_gaussian(64, 8, ctx.sub(42), ctx.prec);
        const Matrix c = random_gaussian(64, 5, ctx.sub(43), ctx.prec);
        const Matrix blocked = lt_multiply_blocked(a, b, c, 64);
        const Matrix naive = naive_lt_reference(a, b, c, ctx.fault);
        bool same = true;
        for (std::size_t i = 0; i < blocked.rows() && same; ++i)
            for (std::size_t j = 0; j < blocked.cols(); ++j)
                if (blocked(i, j) != naive(i, j)) { same = false; break; }
        ctx.check("causal/blocked-b-equals-n-bitwise", same, "single block vs naive");
    }
    // p = 2 sketched causal equals the exact causal mechanism
    {
        const SketchTree t = sample_sketch(8, 16, 2, ctx.sub(44));
        const Matrix q = random_gaussian(100, 8, ctx.sub(45));
        const Matrix k = random_gaussian(100, 8, ctx.sub(46));
        const Matrix v = random_gaussian(100, 8, ctx.sub(47));
        const Matrix a = causal_polysketch_attention(q, k, v, t, 16, false);
        const Matrix e = causal_exact_poly_attention(q, k, v, 2);
        const double d = rel_frobenius_diff(a, e);
        ctx.check("causal/degree2-equals-exact", d <= ctx.tol(1e-10), fmt("rel diff %.3g", d));
    }
    // b = n with local_exact: single exact block, no sketched terms
    {
        const SketchTree t = sample_sketch(8, 4, 4, ctx.sub(48));
        const Matrix q = random_gaussian(80, 8, ctx.sub(49));
        const Matrix k = random_gaussian(80, 8, ctx.sub(50));
        const Matrix v = random_gaussian(80, 8, ctx.sub(51));
        const Matrix a = causal_polysketch_attention(q, k, v, t, 80, true);
        const Matrix e = causal_exact_poly_attention(q, k, v, 4);
        const double d = rel_frobenius_diff(a, e);
        ctx.check("causal/local-exact-single-block", d <= ctx.tol(1e-10),
                  fmt("rel diff %.3g", d));
    }
    // sketched causal equals the materialized lt() oracle
    {
        const SketchTree t = sample_sketch(8, 16, 4, ctx.sub(52));
        const Matrix q = random_gaussian(128, 8, ctx.sub(53), ctx.prec);
        const Matrix k = random_gaussian(128, 8, ctx.sub(54), ctx.prec);
        const Matrix v = random_gaussian(128, 8, ctx.sub(55), ctx.prec);
        AttentionStats st{};
        const Matrix fast = causal_polysketch_attention(q, k, v, t, 16, false, &st);
        Matrix ref = oracle::causal_polysketch_materialized(q, k, v, t);
        if (ctx.fault == InjectedFault::lt_diagonal) {
            // strict-mask reference: recompute with the diagonal removed
            const Matrix phi_q = t.non_negative(q.to_precision(Precision::f64));
            const Matrix phi_k = t.non_negative(k.to_precision(Precision::f64));
            Matrix a = lt_mask(matmul_nt(phi_q, phi_k));
            for (std::size_t i = 0; i < a.rows(); ++i) a.set(i, i, 0.0);
            const Matrix v64 = v.to_precision(Precision::f64);
            ref = Matrix(q.rows(), v.cols(), q.precision());
            for (std::size_t i = 0; i < a.rows(); ++i) {
                double den = 1.0;
                for (std::size_t j = 0; j <= i; ++j) den += a(i, j);
                for (std::size_t c = 0; c < v64.cols(); ++c) {
                    double num = 0.0;
                    for (std::size_t j = 0; j <= i; ++j) num += a(i, j) * v64(j, c);
                    ref.set(i, c, num / den);
                }
            }
        }
        const double d = rel_frobenius_diff(fast, ref);
        ctx.check("causal/sketched-vs-materialized", d <= ctx.tol(1e-9) && st.min_denominator >= 1.0,
                  fmt("rel diff %.3g; min denom %.6g", d, st.min_denominator));
    }
    // local_exact = true equals the hybrid (exact diagonal, sketched prefix) oracle
    {
        const SketchTree t = sample_sketch(8, 8, 4, ctx.sub(56));
        const Matrix q = random_gaussian(96, 8, ctx.sub(57));
        const Matrix k = random_gaussian(96, 8, ctx.sub(58));
        const Matrix v = random_gaussian(96, 8, ctx.sub(59));
        const Matrix fast = causal_polysketch_attention(q, k, v, t, 16, true);
        const Matrix ref = oracle::causal_hybrid_materialized(q, k, v, t, 16);
        const double d = rel_frobenius_diff(fast, ref);
        ctx.check("causal/local-exact-vs-hybrid-oracle", d <= ctx.tol(1e-9),
                  fmt("rel diff %.3g", d));
    }
    // causality: future keys/values cannot change past rows
    {
        bool ok = true;
        const std::size_t n = 64, cut = 37;
        const SketchTree t = sample_sketch(8, 8, 4, ctx.sub(60));
        const Matrix q = random_gaussian(n, 8, ctx.sub(61));
        const Matrix k = random_gaussian(n, 8, ctx.sub(62));
        const Matrix v = random_gaussian(n, 8, ctx.sub(63));
        Matrix k2 = k, v2 = v;
        const Matrix noise_k = random_gaussian(n, 8, ctx.sub(64));
        const Matrix noise_v = random_gaussian(n, 8, ctx.sub(65));
        for (std::size_t j = cut + 1; j < n; ++j)
            for (std::size_t c = 0; c < 8; ++c) {
                k2.set(j, c, k(j, c) + noise_k(j, c));
                v2.set(j, c, v(j, c) + noise_v(j, c));
            }
        for (bool local : {false, true}) {
            const Matrix o1 = causal_polysketch_attention(q, k, v, t, 16, local);
            const Matrix o2 = causal_polysketch_attention(q, k2, v2, t, 16, local);
            ok = ok && rows_equal_within(o1, o2, cut + 1, 1e-12);
        }
        const Matrix e1 = causal_exact_poly_attention(q, k, v, 4);
        const Matrix e2 = causal_exact_poly_attention(q, k2, v2, 4);
        ok = ok && rows_equal_within(e1, e2, cut + 1, 0.0);
        ctx.check("causal/causality-perturbation", ok,
                  "rows <= 37 unchanged after perturbing rows > 37");
    }
    // prefix state after each block matches the naive running sum
    {
        const SketchTree t = sample_sketch(6, 4, 4, ctx.sub(66));
        const std::size_t n = 70, b = 16, h = 6, hv = 5;
        const Matrix q = random_gaussian(n, h, ctx.sub(67));
        const Matrix k = random_gaussian(n, h, ctx.sub(68));
        const Matrix v = random_gaussian(n, hv, ctx.sub(69));
        std::vector<Matrix> states;
        causal_polysketch_attention(q, k, v, t, b, false, nullptr, &states);
        const Matrix phi_k = t.non_negative(k);
        const BlockPlan plan(n, b);
        bool ok = states.size() == plan.count;
        double worst = 0.0;
        Matrix run(t.feature_dim(), hv + 1, Precision::f64);
        for (std::size_t l = 0; l < plan.count && ok; ++l) {
            for (std::size_t j = plan.begin(l); j < plan.end(l); ++j)
                for (std::size_t c = 0; c < t.feature_dim(); ++c) {
                    for (std::size_t e = 0; e < hv; ++e)
                        run.set(c, e, run(c, e) + phi_k(j, c) * v(j, e));
                    run.set(c, hv, run(c, hv) + phi_k(j, c));
                }
            worst = std::max(worst, rel_frobenius_diff(states[l], run));
        }
        ctx.check("causal/prefix-state-equivalence", ok && worst <= 1e-10,
                  fmt("worst state rel diff %.3g", worst));
    }
    // counted work is linear in n at fixed block size
    {
        long long m1 = 0, m2 = 0;
        const Matrix a1 = random_gaussian(512, 8, ctx.sub(70));
        const Matrix b1 = random_gaussian(512, 8, ctx.sub(71));
        const Matrix c1 = random_gaussian(512, 8, ctx.sub(72));
        lt_multiply_blocked(a1, b1, c1, 32, &m1);
        const Matrix a2 = random_gaussian(1024, 8, ctx.sub(73));
        const Matrix b2 = random_gaussian(1024, 8, ctx.sub(74));
        const Matrix c2 = random_gaussian(1024, 8, ctx.sub(75));
        lt_multiply_blocked(a2, b2, c2, 32, &m2);
        const double ratio = static_cast<double>(m2) / static_cast<double>(m1);
        ctx.check("causal/mac-count-linearity", std::abs(ratio - 2.0) <= 0.1,
                  fmt("macs(1024)/macs(512) = %.4g", ratio));
    }
}

// ------------------------------------------------------------- learnable --

void suite_learnable(Ctx& ctx) {
    // weight counts reproduce the closed-form formulas
    {
        const LearnableSketch leaf = init_params(64, 32, 4, ctx.sub(80));
        const long long leaf_net = leaf.nodes()[0].f1.weight_count();
        const LearnableSketch deep = init_params(64, 32, 8, ctx.sub(81));
        long long internal_net = -1;
        for (const auto& nd : deep.nodes())
            if (nd.subtree_degree > 2) internal_net = nd.f1.weight_count();
        const bool ok = leaf_net == 8 * 64 * 32 + 24 * 32 * 32 && internal_net == 32 * 32 * 32 &&
                        static_cast<int>(deep.nodes().size()) * 2 == deep.degree() - 2;
        ctx.check("learnable/parameter-counts", ok,
                  "leaf " + std::to_string(leaf_net) + " = 8hr+24r^2; internal " +
                      std::to_string(internal_net) + " = 32r^2; networks = p-2");
    }
    // every with-negativity entry lies strictly inside (-sqrt(r), sqrt(r))
    {
        const std::size_t r = 6;
        const LearnableSketch t = init_params(8, r, 4, ctx.sub(82));
        double worst = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            const Matrix a = random_gaussian(16, 8, ctx.sub(83, trial));
            const Matrix s = t.with_negativity(a);
            for (std::size_t i = 0; i < s.rows(); ++i)
                for (std::size_t j = 0; j < s.cols(); ++j)
                    worst = std::max(worst, std::abs(s(i, j)));
        }
        const double bound = std::sqrt(static_cast<double>(r));
        ctx.check("learnable/tanh-bound", worst < bound,
                  fmt("max |entry| %.6g < sqrt(r) = %.6g", worst, bound));
    }
    // zero parameters collapse everything to zero
    {
        LearnableSketch t = init_params(8, 4, 4, ctx.sub(84));
        for (auto& nd : t.mutable_nodes())
            for (DenseBlockParams* blk : {&nd.f1, &nd.f2}) {
                std::fill(blk->ln_in_gain.begin(), blk->ln_in_gain.end(), 0.0);
                std::fill(blk->ln_in_bias.begin(), blk->ln_in_bias.end(), 0.0);
                std::fill(blk->ln_mid_gain.begin(), blk->ln_mid_gain.end(), 0.0);
                std::fill(blk->ln_mid_bias.begin(), blk->ln_mid_bias.end(), 0.0);
                blk->w1 = Matrix(blk->w1.rows(), blk->w1.cols());
                blk->w2 = Matrix(blk->w2.rows(), blk->w2.cols());
                blk->w3 = Matrix(blk->w3.rows(), blk->w3.cols());
                blk->w4 = Matrix(blk->w4.rows(), blk->w4.cols());
                std::fill(blk->b1.begin(), blk->b1.end(), 0.0);
                std::fill(blk->b2.begin(), blk->b2.end(), 0.0);
                std::fill(blk->b3.begin(), blk->b3.end(), 0.0);
                std::fill(blk->b4.begin(), blk->b4.end(), 0.0);
            }
        const Matrix a = random_gaussian(10, 8, ctx.sub(85));
        const Matrix s = apply_learnable_non_negative(a, t);
        bool zero = true;
        for (std::size_t i = 0; i < s.rows(); ++i)
            for (std::size_t j = 0; j < s.cols(); ++j)
                if (s(i, j) != 0.0) { zero = false; break; }
        ctx.check("learnable/zero-params-zero-output", zero, "all-zero networks");
    }
    // save -> load -> save is byte-identical and behavior-preserving
    {
        namespace fs = std::filesystem;
        const fs::path dir = fs::temp_directory_path() / "psk_verify";
        fs::create_directories(dir);
        const std::string p1 = (dir / "learn_a.pskb").string();
        const std::string p2 = (dir / "learn_b.pskb").string();
        const LearnableSketch t = init_params(8, 4, 8, ctx.sub(86));
        save_params(p1, t);
        const LearnableSketch t2 = load_params(p1);
        save_params(p2, t2);
        std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
        const std::string bytes1((std::istreambuf_iterator<char>(f1)), {});
        const std::string bytes2((std::istreambuf_iterator<char>(f2)), {});
        const Matrix a = random_gaussian(7, 8, ctx.sub(87));
        const Matrix s1 = t.with_negativity(a);
        const Matrix s2 = t2.with_negativity(a);
        bool same = bytes1 == bytes2 && !bytes1.empty();
        for (std::size_t i = 0; i < s1.rows() && same; ++i)
            for (std::size_t j = 0; j < s1.cols(); ++j)
                if (s1(i, j) != s2(i, j)) { same = false; break; }
        fs::remove(p1);
        fs::remove(p2);
        ctx.check("learnable/roundtrip-bit-exact", same, "files and outputs identical");
    }
    // learnable features run inside causal attention; denominators >= 1
    {
        const LearnableSketch t = init_params(8, 4, 4, ctx.sub(88));
        const Matrix q = random_gaussian(64, 8, ctx.sub(89));
        const Matrix k = random_gaussian(64, 8, ctx.sub(90));
        const Matrix v = random_gaussian(64, 8, ctx.sub(91));
        AttentionStats st{};
        OpCounter c;
        t.non_negative(q, &c);
        const Matrix o = causal_polysketch_attention(q, k, v, t, 16, false, &st);
        const bool ok = o.all_finite() && st.min_denominator >= 1.0 &&
                        c.hr_products + c.rr_products == t.degree() - 2;
        ctx.check("learnable/causal-integration", ok,
                  fmt("min denom %.6g; ", st.min_denominator) + "replacements = p-2");
    }
    // forward determinism
    {
        const LearnableSketch t = init_params(8, 4, 4, ctx.sub(92));
        const Matrix a = random_gaussian(9, 8, ctx.sub(93));
        const Matrix s1 = t.non_negative(a);
        const Matrix s2 = t.non_negative(a);
        bool same = true;
        for (std::size_t i = 0; i < s1.rows() && same; ++i)
            for (std::size_t j = 0; j < s1.cols(); ++j)
                if (s1(i, j) != s2(i, j)) { same = false; break; }
        ctx.check("learnable/forward-determinism", same, "two forwards, bitwise");
    }
}

} // namespace

VerifyReport run_verify_suite(const std::string& suite, std::uint64_t seed,
                              Precision precision, InjectedFault fault) {
    if (suite != "sketch" && suite != "attention" && suite != "causal" &&
        suite != "learnable" && suite != "all")
        throw ValueError("unknown verify suite '" + suite +
                         "' (expected sketch, attention, causal, learnable, or all)");
    VerifyReport report;
    report.suite = suite;
    report.seed = seed;
    report.precision = precision;
    Ctx ctx{seed, precision, fault, &report.checks};
    if (suite == "sketch" || suite == "all") suite_sketch(ctx);
    if (suite == "attention" || suite == "all") suite_attention(ctx);
    if (suite == "causal" || suite == "all") suite_causal(ctx);
    if (suite == "learnable" || suite == "all") suite_learnable(ctx);
    return report;
}

nlohmann::json report_to_json(const VerifyReport& report) {
    nlohmann::json j;
    j["suite"] = report.suite;
    j["seed"] = report.seed;
    j["precision"] = precision_name(report.precision);
    j["all_passed"] = report.all_passed();
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& c : report.checks)
        checks.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    j["checks"] = checks;
    return j;
}

} // namespace psk
