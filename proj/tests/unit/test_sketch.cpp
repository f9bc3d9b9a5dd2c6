#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <unistd.h>
#include <vector>

#include "psk/dense.hpp"
#include "psk/io.hpp"
#include "psk/rng.hpp"
#include "psk/sketch.hpp"

using psk::Matrix;
using psk::OpCounter;
using psk::Precision;
using psk::SketchTree;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("psk_sketch_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

double max_abs_diff(const Matrix& a, const Matrix& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            worst = std::max(worst, std::abs(a(i, j) - b(i, j)));
    return worst;
}

} // namespace

TEST_SUITE("sketch") {

TEST_CASE("sample_sketch validates p and r") {
    CHECK_THROWS_AS(psk::sample_sketch(4, 8, 3, 1), psk::ValueError);  // odd
    CHECK_THROWS_AS(psk::sample_sketch(4, 8, 6, 1), psk::ValueError);  // q=3 not 2^k
    CHECK_THROWS_AS(psk::sample_sketch(4, 8, 12, 1), psk::ValueError); // q=6
    CHECK_THROWS_AS(psk::sample_sketch(4, 8, 0, 1), psk::ValueError);
    CHECK_THROWS_AS(psk::sample_sketch(4, 8, -4, 1), psk::ValueError);
    CHECK_THROWS_AS(psk::sample_sketch(4, 8, 32, 1), psk::ValueError); // beyond supported degrees
    CHECK_THROWS_AS(psk::sample_sketch(4, 0, 4, 1), psk::ValueError);  // r = 0
    CHECK_THROWS_AS(psk::sample_sketch(0, 8, 4, 1), psk::ValueError);  // h = 0
}

TEST_CASE("degree 2 is the identity factor map") {
    const SketchTree tree = psk::sample_sketch(6, 8, 2, 3);
    CHECK(tree.nodes().empty());
    CHECK(tree.degree() == 2);
    CHECK(tree.factor_dim() == 6);
    const Matrix a = psk::random_gaussian(5, 6, 17);
    OpCounter c;
    const Matrix out = tree.with_negativity(a, &c);
    CHECK(max_abs_diff(out, a) == 0.0);
    CHECK(c.hr_products == 0);
    CHECK(c.rr_products == 0);
    CHECK(c.hadamards == 0);
}

TEST_CASE("tree shape for p=4: one node, two h x r Gaussians") {
    const SketchTree tree = psk::sample_sketch(8, 16, 4, 5);
    REQUIRE(tree.nodes().size() == 1);
    const auto& n = tree.nodes()[0];
    CHECK(n.g1.rows() == 8);
    CHECK(n.g1.cols() == 16);
    CHECK(n.g2.rows() == 8);
    CHECK(n.g2.cols() == 16);
    CHECK(n.left == SketchTree::npos);
    CHECK(n.right == SketchTree::npos);
    CHECK(n.path == 1);
    CHECK(n.subtree_degree == 2);
    CHECK(tree.factor_dim() == 16);
    CHECK(tree.feature_dim() == 256);
}

TEST_CASE("tree shape for p=8: three nodes, 4 h x r and 2 r x r Gaussians") {
    const std::size_t h = 5, r = 7;
    const SketchTree tree = psk::sample_sketch(h, r, 8, 5);
    REQUIRE(tree.nodes().size() == 3);
    std::size_t hr = 0, rr = 0;
    for (const auto& n : tree.nodes()) {
        for (const Matrix* g : {&n.g1, &n.g2}) {
            if (g->rows() == h && g->cols() == r)
                ++hr;
            else if (g->rows() == r && g->cols() == r)
                ++rr;
            else
                FAIL("unexpected Gaussian shape");
        }
    }
    CHECK(hr == 4);
    CHECK(rr == 2);
    // root at heap path 1 combines children at 2 and 3
    CHECK(tree.nodes()[0].path == 1);
    CHECK(tree.nodes()[0].subtree_degree == 4);
}

TEST_CASE("p=16 holds 2(q-1) = 14 Gaussians") {
    const SketchTree tree = psk::sample_sketch(3, 4, 16, 9);
    CHECK(tree.nodes().size() == 7);
    std::size_t hr = 0, rr = 0;
    for (const auto& n : tree.nodes()) {
        for (const Matrix* g : {&n.g1, &n.g2})
            (g->rows() == 3 ? hr : rr) += 1;
    }
    CHECK(hr + rr == 14);
    CHECK(hr == 8); // q = 8 leaf-level combine nodes own the input-facing Gaussians
    CHECK(rr == 6);
}

TEST_CASE("sampling is deterministic in (h, r, p, seed)") {
    const SketchTree a = psk::sample_sketch(6, 10, 8, 77);
    const SketchTree b = psk::sample_sketch(6, 10, 8, 77);
    const SketchTree c = psk::sample_sketch(6, 10, 8, 78);
    REQUIRE(a.nodes().size() == b.nodes().size());
    bool identical = true, differs = false;
    for (std::size_t i = 0; i < a.nodes().size(); ++i) {
        identical = identical && max_abs_diff(a.nodes()[i].g1, b.nodes()[i].g1) == 0.0;
        identical = identical && max_abs_diff(a.nodes()[i].g2, b.nodes()[i].g2) == 0.0;
        differs = differs || max_abs_diff(a.nodes()[i].g1, c.nodes()[i].g1) != 0.0;
    }
    CHECK(identical);
    CHECK(differs);

    const Matrix x = psk::random_gaussian(9, 6, 5);
    CHECK(max_abs_diff(a.with_negativity(x), b.with_negativity(x)) == 0.0);
}

TEST_CASE("per-node Gaussians are mutually distinct") {
    const SketchTree tree = psk::sample_sketch(4, 4, 8, 101);
    const auto& ns = tree.nodes();
    CHECK(max_abs_diff(ns[1].g1, ns[1].g2) != 0.0); // two slots, same node
    // nodes 1 and 2 are both h x r: different paths must differ
    CHECK(max_abs_diff(ns[1].g1, ns[2].g1) != 0.0);
}

TEST_CASE("single-row p=4 sketch matches the hand formula") {
    // one combine node: out[i] = sqrt(1/r) * (x G1)[i] * (x G2)[i]
    const std::size_t h = 3, r = 5;
    const SketchTree tree = psk::sample_sketch(h, r, 4, 21);
    const Matrix x = psk::random_gaussian(1, h, 33);
    const Matrix out = tree.with_negativity(x);
    REQUIRE(out.cols() == r);
    const auto& n = tree.nodes()[0];
    for (std::size_t i = 0; i < r; ++i) {
        double a = 0.0, b = 0.0;
        for (std::size_t l = 0; l < h; ++l) {
            a += x(0, l) * n.g1(l, i);
            b += x(0, l) * n.g2(l, i);
        }
        const double expect = std::sqrt(1.0 / static_cast<double>(r)) * a * b;
        CHECK(out(0, i) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("non_negative output is entrywise the self-tensor of the factor") {
    const SketchTree tree = psk::sample_sketch(4, 6, 4, 55);
    const Matrix x = psk::random_gaussian(7, 4, 56);
    const Matrix factor = tree.with_negativity(x);
    const Matrix feats = tree.non_negative(x);
    CHECK(max_abs_diff(feats, psk::row_self_tensor(factor)) == 0.0);
    // feature dot products are squares, hence non-negative
    const Matrix gram = psk::matmul_nt(feats, feats);
    for (std::size_t i = 0; i < gram.rows(); ++i)
        for (std::size_t j = 0; j < gram.cols(); ++j) CHECK(gram(i, j) >= 0.0);
}

TEST_CASE("signed sketch dots estimate <q,k>^(p/2) without bias") {
    // E[<sk(q), sk(k)>] = <q,k>^2 for the degree-2 signed factor; check the
    // Monte Carlo mean lands within a few standard errors. (The self-tensored
    // map is deliberately biased upward by the signed-dot variance — its
    // guarantee is the AMM error bound, not unbiasedness.)
    const std::size_t h = 3;
    const Matrix q = psk::random_unit_rows(1, h, 400);
    const Matrix k = psk::random_unit_rows(1, h, 401);
    double exact_dot = 0.0;
    for (std::size_t l = 0; l < h; ++l) exact_dot += q(0, l) * k(0, l);
    const double target = exact_dot * exact_dot;

    const int trials = 3000;
    double sum = 0.0, sumsq = 0.0;
    double tensor_sum = 0.0;
    for (int t = 0; t < trials; ++t) {
        const SketchTree tree = psk::sample_sketch(h, 8, 4, 1000 + t);
        const Matrix fq = tree.with_negativity(q);
        const Matrix fk = tree.with_negativity(k);
        double dot = 0.0;
        for (std::size_t c = 0; c < fq.cols(); ++c) dot += fq(0, c) * fk(0, c);
        sum += dot;
        sumsq += dot * dot;
        tensor_sum += dot * dot; // = self-tensored feature dot
    }
    const double mean = sum / trials;
    const double var = std::max(sumsq / trials - mean * mean, 0.0);
    const double se = std::sqrt(var / trials);
    CHECK(std::abs(mean - target) <= 4.0 * se + 1e-12);
    // the self-tensored dot averages above target^2: biased but non-negative
    CHECK(tensor_sum / trials >= target * target);
}

TEST_CASE("op counts per row follow the recursion") {
    const Matrix x = psk::random_gaussian(4, 6, 91);

    SUBCASE("p=4") {
        const SketchTree tree = psk::sample_sketch(6, 8, 4, 1);
        OpCounter c;
        (void)tree.non_negative(x, &c);
        CHECK(c.hr_products == 2);  // q = 2
        CHECK(c.rr_products == 0);  // q - 2 = 0
        CHECK(c.hadamards == 1);    // q - 1
        CHECK(c.self_tensors == 1);
    }
    SUBCASE("p=8") {
        const SketchTree tree = psk::sample_sketch(6, 8, 8, 1);
        OpCounter c;
        (void)tree.non_negative(x, &c);
        CHECK(c.hr_products == 4);
        CHECK(c.rr_products == 2);
        CHECK(c.hadamards == 3);
        CHECK(c.self_tensors == 1);
    }
    SUBCASE("p=16") {
        const SketchTree tree = psk::sample_sketch(6, 8, 16, 1);
        OpCounter c;
        (void)tree.non_negative(x, &c);
        CHECK(c.hr_products == 8);
        CHECK(c.rr_products == 6);
        CHECK(c.hadamards == 7);
        CHECK(c.self_tensors == 1);
    }
}

TEST_CASE("f32 inputs produce f32 outputs with f64 internals") {
    const SketchTree tree = psk::sample_sketch(5, 6, 4, 12);
    const Matrix x64 = psk::random_gaussian(8, 5, 13);
    const Matrix x32 = x64.to_precision(Precision::f32);
    const Matrix out32 = tree.with_negativity(x32);
    CHECK(out32.precision() == Precision::f32);
    const Matrix out64 = tree.with_negativity(x32.to_precision(Precision::f64));
    // identical up to the final rounding into f32 storage
    CHECK(max_abs_diff(out32, out64) <= 1e-4 * (1.0 + psk::frobenius_norm(out64)));
}

TEST_CASE("amm_relative_error input validation") {
    const SketchTree tree = psk::sample_sketch(4, 8, 4, 1);
    const Matrix q = psk::random_gaussian(8, 4, 2);
    const Matrix k = psk::random_gaussian(8, 4, 3);
    CHECK_THROWS_AS(psk::amm_relative_error(q, k, tree, 8), psk::ValueError); // p mismatch
    const Matrix wrong = psk::random_gaussian(8, 5, 4);
    CHECK_THROWS_AS(psk::amm_relative_error(wrong, k, tree, 4), psk::ShapeError);
    const Matrix tall = psk::random_gaussian(psk::kAmmMaxRows + 1, 4, 5);
    CHECK_THROWS_AS(psk::amm_relative_error(tall, k, tree, 4), psk::ValueError);
    const SketchTree wide_tree = psk::sample_sketch(psk::kAmmMaxDim + 1, 8, 4, 1);
    const Matrix wq = psk::random_gaussian(4, psk::kAmmMaxDim + 1, 6);
    CHECK_THROWS_AS(psk::amm_relative_error(wq, wq, wide_tree, 4), psk::ValueError);
}

TEST_CASE("amm error is zero for zero matrices") {
    const SketchTree tree = psk::sample_sketch(4, 8, 4, 1);
    const Matrix z(6, 4);
    CHECK(psk::amm_relative_error(z, z, tree, 4) == 0.0);
}

TEST_CASE("degree-2 feature map reproduces the squared Gram exactly") {
    const SketchTree tree = psk::sample_sketch(5, 3, 2, 1); // r ignored by the identity map
    const Matrix q = psk::random_gaussian(12, 5, 8);
    const Matrix k = psk::random_gaussian(12, 5, 9);
    CHECK(psk::amm_relative_error(q, k, tree, 2) <= 1e-10);
}

TEST_CASE("amm error decreases with sketch size (median over seeds)") {
    const std::size_t h = 8, n = 16;
    const int p = 4, seeds = 10;
    std::vector<double> med;
    for (const std::size_t r : {4u, 64u}) {
        std::vector<double> errs;
        for (int s = 0; s < seeds; ++s) {
            const Matrix q = psk::random_unit_rows(n, h, 600 + s);
            const Matrix k = psk::random_unit_rows(n, h, 700 + s);
            const SketchTree tree = psk::sample_sketch(h, r, p, 800 + s);
            errs.push_back(psk::amm_relative_error(q, k, tree, p));
        }
        std::sort(errs.begin(), errs.end());
        med.push_back(errs[errs.size() / 2]);
    }
    CHECK(med[1] < med[0]); // r = 64 beats r = 4
    CHECK(med[1] <= 0.6 * med[0]);
}

TEST_CASE("sketch files round-trip exactly") {
    TempDir tmp;
    const SketchTree tree = psk::sample_sketch(6, 9, 8, 2024);
    const std::string p = tmp.file("tree.pskb");
    psk::save_sketch(p, tree);
    const SketchTree back = psk::load_sketch(p);
    CHECK(back.input_dim() == 6);
    CHECK(back.sketch_size() == 9);
    CHECK(back.degree() == 8);
    CHECK(back.seed() == 2024);
    REQUIRE(back.nodes().size() == tree.nodes().size());
    for (std::size_t i = 0; i < tree.nodes().size(); ++i) {
        CHECK(back.nodes()[i].path == tree.nodes()[i].path);
        CHECK(max_abs_diff(back.nodes()[i].g1, tree.nodes()[i].g1) == 0.0);
        CHECK(max_abs_diff(back.nodes()[i].g2, tree.nodes()[i].g2) == 0.0);
    }
    const Matrix x = psk::random_gaussian(4, 6, 1);
    CHECK(max_abs_diff(tree.non_negative(x), back.non_negative(x)) == 0.0);
}

TEST_CASE("sketch loader rejects tampered files") {
    TempDir tmp;
    const SketchTree tree = psk::sample_sketch(4, 4, 4, 7);
    const std::string p = tmp.file("tree.pskb");
    psk::save_sketch(p, tree);

    SUBCASE("truncated") {
        std::ifstream in(p, std::ios::binary);
        std::vector<char> bytes{std::istreambuf_iterator<char>(in),
                                std::istreambuf_iterator<char>()};
        in.close();
        bytes.resize(bytes.size() - 10);
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.close();
        CHECK_THROWS_AS(psk::load_sketch(p), psk::IoError);
    }
    SUBCASE("wrong kind in manifest") {
        const psk::Bundle b = psk::load_bundle(p);
        nlohmann::json bad = b.manifest;
        bad["kind"] = "other";
        std::vector<const Matrix*> ptrs;
        for (const Matrix& m : b.matrices) ptrs.push_back(&m);
        psk::save_bundle(p, bad, ptrs);
        CHECK_THROWS_AS(psk::load_sketch(p), psk::IoError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(psk::load_sketch(tmp.file("nope.pskb")), psk::IoError);
    }
}

} // TEST_SUITE
