#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "frozen_thresholds.hpp"
#include "psk/attention.hpp"
#include "psk/dense.hpp"
#include "psk/rng.hpp"
#include "psk/sketch.hpp"

using psk::AttentionStats;
using psk::Matrix;
using psk::Precision;
using psk::SketchTree;

namespace {

double max_abs_diff(const Matrix& a, const Matrix& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            worst = std::max(worst, std::abs(a(i, j) - b(i, j)));
    return worst;
}

// Materialized oracle for the guarded normalized form: for each row,
// weights w_j = <q_i,k_j>^p, out_i = sum_j w_j v_j / (1 + sum_j w_j).
Matrix guarded_attention_oracle(const Matrix& q, const Matrix& k, const Matrix& v, int p) {
    Matrix out(q.rows(), v.cols(), Precision::f64);
    for (std::size_t i = 0; i < q.rows(); ++i) {
        double den = 1.0;
        std::vector<double> acc(v.cols(), 0.0);
        for (std::size_t j = 0; j < k.rows(); ++j) {
            double dot = 0.0;
            for (std::size_t l = 0; l < q.cols(); ++l) dot += q(i, l) * k(j, l);
            const double w = psk::pow_int(dot, p);
            den += w;
            for (std::size_t c = 0; c < v.cols(); ++c) acc[c] += w * v(j, c);
        }
        for (std::size_t c = 0; c < v.cols(); ++c) out.set(i, c, acc[c] / den);
    }
    return out;
}

} // namespace

TEST_SUITE("attention") {

TEST_CASE("softmax attention hand case: equal keys average the values") {
    const Matrix q = Matrix::from_rows({{1.0, 0.0}});
    const Matrix k = Matrix::from_rows({{1.0, 0.0}, {1.0, 0.0}});
    const Matrix v = Matrix::from_rows({{2.0}, {4.0}});
    const Matrix out = psk::softmax_attention(q, k, v, 1.0);
    CHECK(out(0, 0) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("softmax attention concentrates as beta shrinks") {
    const Matrix q = Matrix::from_rows({{1.0}});
    const Matrix k = Matrix::from_rows({{1.0}, {-1.0}});
    const Matrix v = Matrix::from_rows({{10.0}, {-10.0}});
    const Matrix sharp = psk::softmax_attention(q, k, v, 0.01);
    CHECK(sharp(0, 0) == doctest::Approx(10.0).epsilon(1e-9));
    const Matrix flat = psk::softmax_attention(q, k, v, 1e9);
    CHECK(flat(0, 0) == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("raw polynomial weights: single key gets full weight") {
    const Matrix q = Matrix::from_rows({{1.0, 2.0}});
    const Matrix k = Matrix::from_rows({{0.5, 0.5}});
    const auto rw = psk::raw_polynomial_weights(q, k, 1.0, 2.0, 4);
    CHECK(rw.zero_rows.empty());
    CHECK(rw.weights(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("raw polynomial weights hand values for p=2") {
    // dots: <q,k1> = 1, <q,k2> = 3; alpha = 1, beta = 2
    // weights before normalization: ((1+1)/2)^2 = 1, ((3+1)/2)^2 = 4
    const Matrix q = Matrix::from_rows({{1.0, 0.0}});
    const Matrix k = Matrix::from_rows({{1.0, 0.0}, {3.0, 0.0}});
    const auto rw = psk::raw_polynomial_weights(q, k, 1.0, 2.0, 2);
    CHECK(rw.weights(0, 0) == doctest::Approx(0.2).epsilon(1e-14));
    CHECK(rw.weights(0, 1) == doctest::Approx(0.8).epsilon(1e-14));
}

TEST_CASE("raw polynomial weights are invariant to beta for even p") {
    const Matrix q = psk::random_gaussian(6, 4, 11);
    const Matrix k = psk::random_gaussian(9, 4, 12);
    const auto a = psk::raw_polynomial_weights(q, k, 0.7, 1.0, 4);
    const auto b = psk::raw_polynomial_weights(q, k, 0.7, 13.5, 4);
    CHECK(max_abs_diff(a.weights, b.weights) <= 1e-12);
}

TEST_CASE("raw polynomial weights flatten as alpha grows") {
    const Matrix q = psk::random_gaussian(4, 3, 21);
    const Matrix k = psk::random_gaussian(7, 3, 22);
    const auto rw = psk::raw_polynomial_weights(q, k, 1e8, 1.0, 4);
    const double uniform = 1.0 / 7.0;
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 7; ++j)
            CHECK(rw.weights(i, j) == doctest::Approx(uniform).epsilon(1e-5));
}

TEST_CASE("raw polynomial weights report zero-denominator rows") {
    // orthogonal query/key with alpha = 0: every weight is 0
    const Matrix q = Matrix::from_rows({{1.0, 0.0}, {1.0, 1.0}});
    const Matrix k = Matrix::from_rows({{0.0, 1.0}});
    const auto rw = psk::raw_polynomial_weights(q, k, 0.0, 1.0, 2);
    REQUIRE(rw.zero_rows.size() == 1);
    CHECK(rw.zero_rows[0] == 0);
    CHECK(rw.weights(0, 0) == 0.0);
    CHECK(rw.weights(1, 0) == 1.0);
}

TEST_CASE("raw polynomial weights validate parameters") {
    const Matrix q(2, 3), k(2, 3);
    CHECK_THROWS_AS(psk::raw_polynomial_weights(q, k, 0.0, 0.0, 2), psk::ValueError);
    CHECK_THROWS_AS(psk::raw_polynomial_weights(q, k, 0.0, 1.0, 3), psk::ValueError);
    CHECK_THROWS_AS(psk::raw_polynomial_weights(q, Matrix(2, 4), 0.0, 1.0, 2),
                    psk::ShapeError);
}

TEST_CASE("guarded attention matches the materialized oracle") {
    for (const int p : {2, 4, 8}) {
        const Matrix q = psk::layer_norm_rows(psk::random_gaussian(12, 6, 31 + p));
        const Matrix k = psk::layer_norm_rows(psk::random_gaussian(15, 6, 41 + p));
        const Matrix v = psk::random_gaussian(15, 5, 51 + p);
        AttentionStats stats;
        const Matrix out = psk::exact_poly_attention(q, k, v, p, &stats);
        CHECK(max_abs_diff(out, guarded_attention_oracle(q, k, v, p)) <= 1e-11);
        CHECK(stats.min_denominator >= 1.0);
    }
}

TEST_CASE("guarded attention with no keys to match returns near-zero rows") {
    // V = 0 forces the output to 0 regardless of the weights
    const Matrix q = psk::random_gaussian(5, 4, 61);
    const Matrix k = psk::random_gaussian(6, 4, 62);
    const Matrix v(6, 3);
    const Matrix out = psk::exact_poly_attention(q, k, v, 4);
    CHECK(psk::frobenius_norm(out) == 0.0);
}

TEST_CASE("guarded attention hand case") {
    // single query/key pair: <q,k> = 2, p = 2 -> w = 4, out = 4*v/(1+4)
    const Matrix q = Matrix::from_rows({{2.0}});
    const Matrix k = Matrix::from_rows({{1.0}});
    const Matrix v = Matrix::from_rows({{10.0}});
    const Matrix out = psk::exact_poly_attention(q, k, v, 2);
    CHECK(out(0, 0) == doctest::Approx(8.0).epsilon(1e-14));
}

TEST_CASE("absorption transform reproduces the shifted-scaled dot") {
    // hand case: q = k = (1,-1), alpha = 2, beta = 2, h = 2 ->
    // (<q,k>+2)/2 = 2 and q' = (sqrt2, 0), <q',k'> = 2
    const Matrix q = Matrix::from_rows({{1.0, -1.0}});
    const Matrix k = Matrix::from_rows({{1.0, -1.0}});
    const auto [qp, kp] = psk::absorption_transform(q, k, 2.0, 2.0);
    CHECK(qp(0, 0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK(qp(0, 1) == doctest::Approx(0.0));
    double dot = 0.0;
    for (std::size_t l = 0; l < 2; ++l) dot += qp(0, l) * kp(0, l);
    CHECK(dot == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("absorption holds for random mean-zero rows") {
    const std::size_t h = 8;
    const Matrix q = psk::random_zero_mean_rows(10, h, 71);
    const Matrix k = psk::random_zero_mean_rows(12, h, 72);
    const double alpha = 0.9, beta = 2.7;
    const auto [qp, kp] = psk::absorption_transform(q, k, alpha, beta);
    for (std::size_t i = 0; i < q.rows(); ++i)
        for (std::size_t j = 0; j < k.rows(); ++j) {
            double dot = 0.0, dotp = 0.0;
            for (std::size_t l = 0; l < h; ++l) {
                dot += q(i, l) * k(j, l);
                dotp += qp(i, l) * kp(j, l);
            }
            CHECK(std::abs((dot + alpha) / beta - dotp) <= 1e-12);
        }
}

TEST_CASE("absorption composed with raw weights equals plain-dot weights") {
    const Matrix q = psk::random_zero_mean_rows(6, 5, 81);
    const Matrix k = psk::random_zero_mean_rows(7, 5, 82);
    const double alpha = 1.3, beta = 0.8;
    const int p = 4;
    const auto direct = psk::raw_polynomial_weights(q, k, alpha, beta, p);
    const auto [qp, kp] = psk::absorption_transform(q, k, alpha, beta);
    const auto absorbed = psk::raw_polynomial_weights(qp, kp, 0.0, 1.0, p);
    CHECK(max_abs_diff(direct.weights, absorbed.weights) <= 1e-12);
}

TEST_CASE("absorption transform rejects bad inputs") {
    const Matrix not_centered = Matrix::from_rows({{1.0, 0.0}});
    CHECK_THROWS_AS(psk::absorption_transform(not_centered, not_centered, 1.0, 1.0),
                    psk::ValueError);
    const Matrix ok = Matrix::from_rows({{1.0, -1.0}});
    CHECK_THROWS_AS(psk::absorption_transform(ok, ok, -0.5, 1.0), psk::ValueError);
    CHECK_THROWS_AS(psk::absorption_transform(ok, ok, 1.0, 0.0), psk::ValueError);
    CHECK_THROWS_AS(psk::absorption_transform(ok, Matrix::from_rows({{1.0, -1.0, 0.0}}),
                                              1.0, 1.0),
                    psk::ShapeError);
}

TEST_CASE("sketched attention with the degree-2 identity map is exact") {
    const Matrix q = psk::layer_norm_rows(psk::random_gaussian(20, 6, 91));
    const Matrix k = psk::layer_norm_rows(psk::random_gaussian(20, 6, 92));
    const Matrix v = psk::random_gaussian(20, 4, 93);
    const SketchTree tree = psk::sample_sketch(6, 4, 2, 1);
    AttentionStats stats;
    const Matrix sk = psk::polysketch_attention(q, k, v, tree, &stats);
    const Matrix ex = psk::exact_poly_attention(q, k, v, 2);
    CHECK(max_abs_diff(sk, ex) <= 1e-10);
    CHECK(stats.min_denominator >= 1.0);
}

TEST_CASE("sketched attention equals its materialized form") {
    // oracle: W = phi'(Q) phi'(K)^T entrywise, out = W V / (1 + row sums)
    const std::size_t n = 10, h = 5;
    const Matrix q = psk::layer_norm_rows(psk::random_gaussian(n, h, 101));
    const Matrix k = psk::layer_norm_rows(psk::random_gaussian(n, h, 102));
    const Matrix v = psk::random_gaussian(n, 3, 103);
    const SketchTree tree = psk::sample_sketch(h, 16, 4, 104);

    const Matrix fq = tree.non_negative(q);
    const Matrix fk = tree.non_negative(k);
    const Matrix w = psk::matmul_nt(fq, fk);
    Matrix oracle(n, 3, Precision::f64);
    for (std::size_t i = 0; i < n; ++i) {
        double den = 1.0;
        for (std::size_t j = 0; j < n; ++j) den += w(i, j);
        for (std::size_t c = 0; c < 3; ++c) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += w(i, j) * v(j, c);
            oracle.set(i, c, acc / den);
        }
    }
    const Matrix out = psk::polysketch_attention(q, k, v, tree);
    CHECK(max_abs_diff(out, oracle) <= 1e-10);
}

TEST_CASE("sketched attention denominators never drop below 1") {
    const Matrix q = psk::layer_norm_rows(psk::random_gaussian(30, 8, 111));
    const Matrix k = psk::layer_norm_rows(psk::random_gaussian(30, 8, 112));
    const Matrix v = psk::random_gaussian(30, 4, 113);
    const SketchTree tree = psk::sample_sketch(8, 8, 4, 114);
    AttentionStats stats;
    (void)psk::polysketch_attention(q, k, v, tree, &stats);
    CHECK(stats.min_denominator >= 1.0);
}

TEST_CASE("attention mechanisms validate shapes") {
    const Matrix q(4, 3), k(5, 3), v_bad(4, 2), v(5, 2);
    CHECK_THROWS_AS(psk::exact_poly_attention(q, k, v_bad, 2), psk::ShapeError);
    CHECK_THROWS_AS(psk::exact_poly_attention(q, Matrix(5, 4), v, 2), psk::ShapeError);
    CHECK_THROWS_AS(psk::exact_poly_attention(q, k, v, 3), psk::ValueError);
    const SketchTree tree = psk::sample_sketch(3, 4, 4, 1);
    CHECK_THROWS_AS(psk::polysketch_attention(q, k, v_bad, tree), psk::ShapeError);
    CHECK_THROWS_AS(psk::polysketch_attention(Matrix(4, 7), k, v, tree), psk::ShapeError);
    CHECK_THROWS_AS(psk::softmax_attention(q, k, v, 0.0), psk::ValueError);
}

TEST_CASE("sketched attention tracks exact attention at moderate sketch size") {
    // p = 4 regression guard; the threshold is a frozen empirical median
    // (30 seeds at n=64, h=8, r=64) with 2x headroom.
    const std::size_t n = 64, h = 8, r = 64;
    const int p = 4, seeds = 30;
    std::vector<double> errs;
    for (int s = 0; s < seeds; ++s) {
        const Matrix q = psk::layer_norm_rows(psk::random_gaussian(n, h, 7000 + s));
        const Matrix k = psk::layer_norm_rows(psk::random_gaussian(n, h, 8000 + s));
        const Matrix v = psk::random_gaussian(n, 4, 9000 + s);
        const SketchTree tree = psk::sample_sketch(h, r, p, 10000 + s);
        const Matrix approx = psk::polysketch_attention(q, k, v, tree);
        const Matrix exact = psk::exact_poly_attention(q, k, v, p);
        errs.push_back(psk::rel_frobenius_diff(approx, exact));
    }
    std::sort(errs.begin(), errs.end());
    const double median = errs[errs.size() / 2];
    CHECK(median <= kPolysketchRegressionMedianMax);
}

} // TEST_SUITE
