#include "psk/sketch.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "psk/dense.hpp"
#include "psk/io.hpp"
#include "psk/rng.hpp"

namespace psk {

Matrix PolyFeatureMap::non_negative(const Matrix& a, OpCounter* counter) const {
    Matrix factor = with_negativity(a, counter);
    if (counter) counter->self_tensors += 1;
    return row_self_tensor(factor);
}

namespace {

int degree_to_q(int p) {
    if (p != 2 && p != 4 && p != 8 && p != 16)
        throw ValueError("unsupported degree p = " + std::to_string(p) +
                         " (expected one of 2, 4, 8, 16)");
    return p / 2;
}

} // namespace

SketchTree sample_sketch(std::size_t h, std::size_t r, int p, std::uint64_t seed) {
    if (h == 0) throw ValueError("sample_sketch: input dimension must be >= 1");
    if (r == 0) throw ValueError("sample_sketch: sketch size must be >= 1");
    const int q = degree_to_q(p);
    SketchTree t;
    t.h_ = h;
    t.r_ = r;
    t.degree_q_ = q;
    t.seed_ = seed;
    // Preorder build over heap positions: node `path` of subtree degree d
    // combines two degree-d/2 operands; degree-1 operands are the input.
    auto build = [&](auto&& self, int d, std::uint64_t path) -> std::size_t {
        if (d == 1) return SketchTree::npos;
        const std::size_t idx = t.nodes_.size();
        t.nodes_.emplace_back();
        const std::size_t in = d == 2 ? h : r;
        t.nodes_[idx].path = path;
        t.nodes_[idx].subtree_degree = d;
        t.nodes_[idx].g1 = random_gaussian(in, r, mix_seed(seed, path, 0));
        t.nodes_[idx].g2 = random_gaussian(in, r, mix_seed(seed, path, 1));
        const std::size_t left = self(self, d / 2, 2 * path);
        const std::size_t right = self(self, d / 2, 2 * path + 1);
        t.nodes_[idx].left = left;
        t.nodes_[idx].right = right;
        return idx;
    };
    build(build, q, 1);
    return t;
}

Matrix SketchTree::apply_node(const Matrix& a64, std::size_t idx, OpCounter* counter) const {
    const Node& nd = nodes_[idx];
    const Matrix m1 = nd.left == npos ? a64 : apply_node(a64, nd.left, counter);
    const Matrix m2 = nd.right == npos ? a64 : apply_node(a64, nd.right, counter);
    const Matrix p1 = matmul(m1, nd.g1);
    const Matrix p2 = matmul(m2, nd.g2);
    if (counter) {
        (nd.left == npos ? counter->hr_products : counter->rr_products) += 1;
        (nd.right == npos ? counter->hr_products : counter->rr_products) += 1;
        counter->hadamards += 1;
    }
    // sqrt(1/r) * (M1 G1) * (M2 G2), applied at every combine node
    const double scale = std::sqrt(1.0 / static_cast<double>(r_));
    Matrix out(p1.rows(), p1.cols(), Precision::f64);
    const double* x = p1.f64_data();
    const double* y = p2.f64_data();
    double* o = out.f64_data();
    for (std::size_t e = 0; e < out.size(); ++e) o[e] = scale * x[e] * y[e];
    return out;
}

Matrix SketchTree::with_negativity(const Matrix& a, OpCounter* counter) const {
    if (a.cols() != h_)
        throw ShapeError("with_negativity: input has " + std::to_string(a.cols()) +
                         " cols, sketch expects " + std::to_string(h_));
    if (degree_q_ == 1) return a; // degree-1 recursion returns the input
    const Precision out_prec = a.precision();
    const Matrix a64 = a.to_precision(Precision::f64);
    Matrix out = apply_node(a64, 0, counter);
    return out.to_precision(out_prec);
}

Matrix apply_with_negativity(const Matrix& a, const SketchTree& tree, OpCounter* counter) {
    return tree.with_negativity(a, counter);
}

Matrix apply_non_negative(const Matrix& a, const SketchTree& tree, OpCounter* counter) {
    return tree.non_negative(a, counter);
}

double amm_relative_error(const Matrix& q, const Matrix& k, const SketchTree& tree, int p) {
    if (p != tree.degree())
        throw ValueError("amm_relative_error: p = " + std::to_string(p) +
                         " inconsistent with tree degree " + std::to_string(tree.degree()));
    if (q.cols() != k.cols())
        throw ShapeError("amm_relative_error: Q and K column counts differ");
    if (q.rows() > kAmmMaxRows || k.rows() > kAmmMaxRows)
        throw ValueError("amm_relative_error: row count exceeds cap " +
                         std::to_string(kAmmMaxRows));
    if (q.cols() > kAmmMaxDim)
        throw ValueError("amm_relative_error: input dim exceeds cap " +
                         std::to_string(kAmmMaxDim));
    const Matrix phi_q = tree.non_negative(q.to_precision(Precision::f64));
    const Matrix phi_k = tree.non_negative(k.to_precision(Precision::f64));
    const Matrix approx = matmul_nt(phi_q, phi_k);
    const Matrix exact =
        entrywise_pow(matmul_nt(q.to_precision(Precision::f64), k.to_precision(Precision::f64)), p);
    double num_sq = 0.0;
    for (std::size_t i = 0; i < approx.rows(); ++i)
        for (std::size_t j = 0; j < approx.cols(); ++j) {
            const double d = approx(i, j) - exact(i, j);
            num_sq += d * d;
        }
    const double denom = std::sqrt(tensor_power_frobenius_sq(q, p)) *
                         std::sqrt(tensor_power_frobenius_sq(k, p));
    if (denom == 0.0) return 0.0;
    return std::sqrt(num_sq) / denom;
}

void save_sketch(const std::string& path, const SketchTree& tree) {
    nlohmann::json manifest;
    manifest["kind"] = "sketch_tree";
    manifest["version"] = 1;
    manifest["input_dim"] = tree.input_dim();
    manifest["sketch_size"] = tree.sketch_size();
    manifest["degree_q"] = tree.degree_q();
    manifest["degree"] = tree.degree();
    manifest["seed"] = tree.seed();
    nlohmann::json nodes = nlohmann::json::array();
    std::vector<const Matrix*> mats;
    for (const auto& nd : tree.nodes()) {
        nodes.push_back({{"path", nd.path}, {"subtree_degree", nd.subtree_degree}});
        mats.push_back(&nd.g1);
        mats.push_back(&nd.g2);
    }
    manifest["nodes"] = nodes;
    save_bundle(path, manifest, mats);
}

SketchTree load_sketch(const std::string& path) {
    Bundle b = load_bundle(path);
    const auto& mf = b.manifest;
    try {
        if (mf.at("kind") != "sketch_tree")
            throw IoError("'" + path + "': manifest kind is not sketch_tree");
        if (mf.at("version") != 1)
            throw IoError("'" + path + "': unsupported sketch_tree manifest version");
        const std::size_t h = mf.at("input_dim").get<std::size_t>();
        const std::size_t r = mf.at("sketch_size").get<std::size_t>();
        const int q = mf.at("degree_q").get<int>();
        const std::uint64_t seed = mf.at("seed").get<std::uint64_t>();
        if (h == 0 || r == 0) throw IoError("'" + path + "': zero dimension in manifest");
        if (q != 1 && q != 2 && q != 4 && q != 8)
            throw IoError("'" + path + "': unsupported degree_q " + std::to_string(q));
        // Rebuild the topology from q (empty matrices), then adopt the
        // stored ones after validating metadata and shapes.
        SketchTree t;
        t.h_ = h;
        t.r_ = r;
        t.degree_q_ = q;
        t.seed_ = seed;
        auto build = [&](auto&& self, int d, std::uint64_t node_path) -> std::size_t {
            if (d == 1) return SketchTree::npos;
            const std::size_t idx = t.nodes_.size();
            t.nodes_.emplace_back();
            const std::size_t in = d == 2 ? h : r;
            t.nodes_[idx].path = node_path;
            t.nodes_[idx].subtree_degree = d;
            t.nodes_[idx].g1 = Matrix(in, r, Precision::f64);
            t.nodes_[idx].g2 = Matrix(in, r, Precision::f64);
            const std::size_t left = self(self, d / 2, 2 * node_path);
            const std::size_t right = self(self, d / 2, 2 * node_path + 1);
            t.nodes_[idx].left = left;
            t.nodes_[idx].right = right;
            return idx;
        };
        build(build, q, 1);
        if (b.matrices.size() != 2 * t.nodes_.size())
            throw IoError("'" + path + "': expected " + std::to_string(2 * t.nodes_.size()) +
                          " matrices, found " + std::to_string(b.matrices.size()));
        const auto& node_meta = mf.at("nodes");
        if (node_meta.size() != t.nodes_.size())
            throw IoError("'" + path + "': node list does not match tree shape");
        for (std::size_t i = 0; i < t.nodes_.size(); ++i) {
            auto& nd = t.nodes_[i];
            if (node_meta[i].at("path").get<std::uint64_t>() != nd.path ||
                node_meta[i].at("subtree_degree").get<int>() != nd.subtree_degree)
                throw IoError("'" + path + "': node " + std::to_string(i) +
                              " metadata does not match the rebuilt topology");
            const Matrix& g1 = b.matrices[2 * i];
            const Matrix& g2 = b.matrices[2 * i + 1];
            if (!g1.same_shape(nd.g1) || !g2.same_shape(nd.g2))
                throw IoError("'" + path + "': node " + std::to_string(i) +
                              " matrix shape does not match the manifest dimensions");
            nd.g1 = g1.to_precision(Precision::f64);
            nd.g2 = g2.to_precision(Precision::f64);
        }
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("'" + path + "': malformed sketch manifest: " + e.what());
    }
}

} // namespace psk
