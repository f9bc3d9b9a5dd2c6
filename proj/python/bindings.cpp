// Python module exposing the core kernels. Arrays cross the boundary as
// float64 C-contiguous numpy arrays; internals keep their own storage.

#include <pybind11/pybind11.h>
#include <pybind11/numpy.h>
#include <pybind11/stl.h>

#include "psk/attention.hpp"
#include "psk/causal.hpp"
#include "psk/dense.hpp"
#include "psk/io.hpp"
#include "psk/learnable.hpp"
#include "psk/rng.hpp"
#include "psk/sketch.hpp"
#include "psk/verify.hpp"

namespace py = pybind11;
using psk::Matrix;
using psk::Precision;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const DoubleArray& arr) {
    if (arr.ndim() != 2) throw psk::ShapeError("expected a 2-D array");
    const auto rows = static_cast<std::size_t>(arr.shape(0));
    const auto cols = static_cast<std::size_t>(arr.shape(1));
    Matrix m(rows, cols, Precision::f64);
    const double* src = arr.data();
    double* dst = m.f64_data();
    std::copy(src, src + rows * cols, dst);
    m.ensure_finite("array input");
    return m;
}

py::array_t<double> to_array(const Matrix& m) {
    const Matrix m64 = m.precision() == Precision::f64 ? m : m.to_precision(Precision::f64);
    py::array_t<double> out({m64.rows(), m64.cols()});
    std::copy(m64.f64_data(), m64.f64_data() + m64.size(), out.mutable_data());
    return out;
}

} // namespace

PYBIND11_MODULE(_core, mod) {
    mod.doc() = "polynomial attention kernels: sketched feature maps, guarded "
                "normalization, and linear-time causal attention";

    py::register_exception<psk::ShapeError>(mod, "ShapeError", PyExc_ValueError);
    py::register_exception<psk::ValueError>(mod, "ValueError", PyExc_ValueError);
    py::register_exception<psk::IoError>(mod, "IoError", PyExc_IOError);

    py::class_<psk::OpCounter>(mod, "OpCounter")
        .def(py::init<>())
        .def_readonly("hr_products", &psk::OpCounter::hr_products)
        .def_readonly("rr_products", &psk::OpCounter::rr_products)
        .def_readonly("hadamards", &psk::OpCounter::hadamards)
        .def_readonly("self_tensors", &psk::OpCounter::self_tensors);

    py::class_<psk::AttentionStats>(mod, "AttentionStats")
        .def(py::init<>())
        .def_readonly("min_denominator", &psk::AttentionStats::min_denominator)
        .def_readonly("clamped_masses", &psk::AttentionStats::clamped_masses);

    py::class_<psk::PolyFeatureMap>(mod, "PolyFeatureMap")
        .def_property_readonly("input_dim", &psk::PolyFeatureMap::input_dim)
        .def_property_readonly("factor_dim", &psk::PolyFeatureMap::factor_dim)
        .def_property_readonly("feature_dim", &psk::PolyFeatureMap::feature_dim)
        .def_property_readonly("degree", &psk::PolyFeatureMap::degree)
        .def(
            "with_negativity",
            [](const psk::PolyFeatureMap& self, const DoubleArray& a) {
                return to_array(self.with_negativity(to_matrix(a)));
            },
            py::arg("a"), "Signed degree-p/2 factor features, one row per input row.")
        .def(
            "non_negative",
            [](const psk::PolyFeatureMap& self, const DoubleArray& a) {
                return to_array(self.non_negative(to_matrix(a)));
            },
            py::arg("a"),
            "Self-tensored features whose pairwise dots are squares, hence >= 0.");

    py::class_<psk::SketchTree, psk::PolyFeatureMap>(mod, "SketchTree")
        .def_property_readonly("sketch_size", &psk::SketchTree::sketch_size)
        .def_property_readonly("seed", &psk::SketchTree::seed)
        .def(
            "save",
            [](const psk::SketchTree& self, const std::string& path) {
                psk::save_sketch(path, self);
            },
            py::arg("path"), "Write the Gaussian tree to a bundle file.");
    mod.def("sample_sketch", &psk::sample_sketch, py::arg("h"), py::arg("r"), py::arg("p"),
            py::arg("seed"),
            "Sample the recursive Gaussian sketch for degree p in {2, 4, 8, 16}.");
    mod.def("load_sketch", &psk::load_sketch, py::arg("path"));
    mod.def(
        "amm_relative_error",
        [](const DoubleArray& q, const DoubleArray& k, const psk::SketchTree& tree, int p) {
            return psk::amm_relative_error(to_matrix(q), to_matrix(k), tree, p);
        },
        py::arg("q"), py::arg("k"), py::arg("tree"), py::arg("p"),
        "Relative Frobenius error of phi'(Q) phi'(K)^T against (Q K^T)^p.");

    py::class_<psk::LearnableSketch, psk::PolyFeatureMap>(mod, "LearnableSketch")
        .def_property_readonly("sketch_size", &psk::LearnableSketch::sketch_size)
        .def_property_readonly("seed", &psk::LearnableSketch::seed)
        .def_property_readonly("weight_count", &psk::LearnableSketch::weight_count)
        .def(
            "save",
            [](const psk::LearnableSketch& self, const std::string& path) {
                psk::save_params(path, self);
            },
            py::arg("path"));
    mod.def("init_params", &psk::init_params, py::arg("h"), py::arg("r"), py::arg("p"),
            py::arg("seed"),
            "Fresh learnable-sketch parameters (weights N(0, 1/fan_in), zero biases).");
    mod.def("load_params", &psk::load_params, py::arg("path"));

    mod.def(
        "softmax_attention",
        [](const DoubleArray& q, const DoubleArray& k, const DoubleArray& v, double beta) {
            return to_array(psk::softmax_attention(to_matrix(q), to_matrix(k), to_matrix(v), beta));
        },
        py::arg("q"), py::arg("k"), py::arg("v"), py::arg("beta"));

    mod.def(
        "exact_poly_attention",
        [](const DoubleArray& q, const DoubleArray& k, const DoubleArray& v, int p) {
            psk::AttentionStats stats;
            auto out = to_array(
                psk::exact_poly_attention(to_matrix(q), to_matrix(k), to_matrix(v), p, &stats));
            return py::make_tuple(out, stats);
        },
        py::arg("q"), py::arg("k"), py::arg("v"), py::arg("p"),
        "Degree-p attention with the +1 denominator guard; returns (output, stats).");

    mod.def(
        "polysketch_attention",
        [](const DoubleArray& q, const DoubleArray& k, const DoubleArray& v,
           const psk::PolyFeatureMap& fmap) {
            psk::AttentionStats stats;
            auto out = to_array(psk::polysketch_attention(to_matrix(q), to_matrix(k),
                                                          to_matrix(v), fmap, &stats));
            return py::make_tuple(out, stats);
        },
        py::arg("q"), py::arg("k"), py::arg("v"), py::arg("fmap"),
        "Sketched attention without materializing the n x n weights.");

    mod.def(
        "causal_exact_poly_attention",
        [](const DoubleArray& q, const DoubleArray& k, const DoubleArray& v, int p) {
            psk::AttentionStats stats;
            auto out = to_array(psk::causal_exact_poly_attention(to_matrix(q), to_matrix(k),
                                                                 to_matrix(v), p, &stats));
            return py::make_tuple(out, stats);
        },
        py::arg("q"), py::arg("k"), py::arg("v"), py::arg("p"));

    mod.def(
        "causal_polysketch_attention",
        [](const DoubleArray& q, const DoubleArray& k, const DoubleArray& v,
           const psk::PolyFeatureMap& fmap, std::size_t block, bool local_exact) {
            psk::AttentionStats stats;
            auto out = to_array(psk::causal_polysketch_attention(
                to_matrix(q), to_matrix(k), to_matrix(v), fmap, block, local_exact, &stats));
            return py::make_tuple(out, stats);
        },
        py::arg("q"), py::arg("k"), py::arg("v"), py::arg("fmap"), py::arg("block"),
        py::arg("local_exact") = false,
        "Linear-time causal sketched attention over contiguous blocks.");

    mod.def(
        "lt_multiply_naive",
        [](const DoubleArray& a, const DoubleArray& b, const DoubleArray& c) {
            return to_array(psk::lt_multiply_naive(to_matrix(a), to_matrix(b), to_matrix(c)));
        },
        py::arg("a"), py::arg("b"), py::arg("c"),
        "lt(A B^T) C by explicit materialization (reference; row-capped).");

    mod.def(
        "lt_multiply_blocked",
        [](const DoubleArray& a, const DoubleArray& b, const DoubleArray& c,
           std::size_t block) {
            return to_array(psk::lt_multiply_blocked(to_matrix(a), to_matrix(b),
                                                     to_matrix(c), block));
        },
        py::arg("a"), py::arg("b"), py::arg("c"), py::arg("block"),
        "lt(A B^T) C via per-block products and a prefix-summed state.");

    mod.def(
        "absorption_transform",
        [](const DoubleArray& q, const DoubleArray& k, double alpha, double beta) {
            auto [qp, kp] = psk::absorption_transform(to_matrix(q), to_matrix(k), alpha, beta);
            return py::make_tuple(to_array(qp), to_array(kp));
        },
        py::arg("q"), py::arg("k"), py::arg("alpha"), py::arg("beta"),
        "Rewrites ((<q,k>+alpha)/beta) as a plain dot product for mean-zero rows.");

    mod.def(
        "layer_norm_rows",
        [](const DoubleArray& m) { return to_array(psk::layer_norm_rows(to_matrix(m))); },
        py::arg("m"));

    mod.def(
        "run_verify_suite",
        [](const std::string& suite, std::uint64_t seed) {
            const psk::VerifyReport rep =
                psk::run_verify_suite(suite, seed, Precision::f64);
            return py::make_tuple(rep.all_passed(),
                                  psk::report_to_json(rep).dump());
        },
        py::arg("suite"), py::arg("seed") = 0,
        "Run one invariant suite; returns (all_passed, json_report).");

    mod.def(
        "save_matrix",
        [](const std::string& path, const DoubleArray& m) {
            psk::save_matrix_pskm(path, to_matrix(m));
        },
        py::arg("path"), py::arg("m"));
    mod.def(
        "load_matrix",
        [](const std::string& path) { return to_array(psk::load_matrix_pskm(path)); },
        py::arg("path"));
}
