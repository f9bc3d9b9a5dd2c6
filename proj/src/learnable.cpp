#include "psk/learnable.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "psk/dense.hpp"
#include "psk/io.hpp"
#include "psk/rng.hpp"

namespace psk {

long long DenseBlockParams::total_parameter_count() const {
    const long long in = static_cast<long long>(in_dim), rr = static_cast<long long>(r);
    const long long biases = 8 * rr + rr + 8 * rr + rr;
    const long long ln = 2 * in + 2 * 8 * rr;
    return weight_count() + biases + ln;
}

double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
}

namespace {

Matrix linear(const Matrix& x, const Matrix& w, const std::vector<double>& b) {
    Matrix y = matmul(x, w);
    for (std::size_t i = 0; i < y.rows(); ++i)
        for (std::size_t j = 0; j < y.cols(); ++j) y.set(i, j, y(i, j) + b[j]);
    return y;
}

Matrix gelu_map(const Matrix& x) {
    Matrix y(x.rows(), x.cols(), x.precision());
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) y.set(i, j, gelu(x(i, j)));
    return y;
}

} // namespace

Matrix dense_block_forward(const Matrix& x, const DenseBlockParams& params) {
    if (x.cols() != params.in_dim)
        throw ShapeError("dense_block_forward: input has " + std::to_string(x.cols()) +
                         " cols, block expects " + std::to_string(params.in_dim));
    const Matrix x64 = x.to_precision(Precision::f64);
    Matrix h1 = gelu_map(linear(layer_norm_rows(x64, params.ln_in_gain, params.ln_in_bias),
                                params.w1, params.b1));
    Matrix h2 = linear(layer_norm_rows(h1, params.ln_mid_gain, params.ln_mid_bias),
                       params.w2, params.b2);
    Matrix h3 = gelu_map(linear(h2, params.w3, params.b3));
    return linear(h3, params.w4, params.b4);
}

Matrix LearnableSketch::apply_node(const Matrix& a64, std::size_t idx,
                                   OpCounter* counter) const {
    const Node& nd = nodes_[idx];
    const Matrix m1 = nd.left == npos ? a64 : apply_node(a64, nd.left, counter);
    const Matrix m2 = nd.right == npos ? a64 : apply_node(a64, nd.right, counter);
    const Matrix f1 = dense_block_forward(m1, nd.f1);
    const Matrix f2 = dense_block_forward(m2, nd.f2);
    if (counter) {
        // one projection replacement per network, mirroring the Gaussian case
        (nd.left == npos ? counter->hr_products : counter->rr_products) += 1;
        (nd.right == npos ? counter->hr_products : counter->rr_products) += 1;
        counter->hadamards += 1;
    }
    const double root_r = std::sqrt(static_cast<double>(r_));
    const double inv_root_r = 1.0 / root_r;
    Matrix out(f1.rows(), f1.cols(), Precision::f64);
    const double* x = f1.f64_data();
    const double* y = f2.f64_data();
    double* o = out.f64_data();
    for (std::size_t e = 0; e < out.size(); ++e)
        o[e] = root_r * std::tanh(inv_root_r * x[e] * y[e]);
    return out;
}

Matrix LearnableSketch::with_negativity(const Matrix& a, OpCounter* counter) const {
    if (a.cols() != h_)
        throw ShapeError("learnable with_negativity: input has " +
                         std::to_string(a.cols()) + " cols, sketch expects " +
                         std::to_string(h_));
    const Precision out_prec = a.precision();
    const Matrix a64 = a.to_precision(Precision::f64);
    Matrix out = apply_node(a64, 0, counter);
    return out.to_precision(out_prec);
}

long long LearnableSketch::weight_count() const {
    long long total = 0;
    for (const auto& nd : nodes_)
        total += nd.f1.weight_count() + nd.f2.weight_count();
    return total;
}

namespace {

// Per-matrix init streams are derived from (seed, 2*path + slot, index) so
// every weight matrix across the tree is independent and reproducible.
DenseBlockParams init_block(std::size_t in, std::size_t r, std::uint64_t seed,
                            std::uint64_t path, int slot) {
    DenseBlockParams p;
    p.in_dim = in;
    p.r = r;
    p.ln_in_gain.assign(in, 1.0);
    p.ln_in_bias.assign(in, 0.0);
    p.ln_mid_gain.assign(8 * r, 1.0);
    p.ln_mid_bias.assign(8 * r, 0.0);
    const std::uint64_t key = 2 * path + static_cast<std::uint64_t>(slot);
    auto sample = [&](std::size_t rows, std::size_t cols, std::uint64_t index) {
        Matrix w = random_gaussian(rows, cols, mix_seed(seed, key, index));
        const double scale = 1.0 / std::sqrt(static_cast<double>(rows)); // fan-in
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) w.set(i, j, w(i, j) * scale);
        return w;
    };
    p.w1 = sample(in, 8 * r, 0);
    p.w2 = sample(8 * r, r, 1);
    p.w3 = sample(r, 8 * r, 2);
    p.w4 = sample(8 * r, r, 3);
    p.b1.assign(8 * r, 0.0);
    p.b2.assign(r, 0.0);
    p.b3.assign(8 * r, 0.0);
    p.b4.assign(r, 0.0);
    return p;
}

} // namespace

LearnableSketch init_params(std::size_t h, std::size_t r, int p, std::uint64_t seed) {
    if (h == 0) throw ValueError("init_params: input dimension must be >= 1");
    if (r == 0) throw ValueError("init_params: sketch size must be >= 1");
    if (p != 4 && p != 8 && p != 16)
        throw ValueError("init_params: p = " + std::to_string(p) +
                         " unsupported (expected 4, 8, or 16; p = 2 needs no networks)");
    LearnableSketch t;
    t.h_ = h;
    t.r_ = r;
    t.degree_q_ = p / 2;
    t.seed_ = seed;
    auto build = [&](auto&& self, int d, std::uint64_t path) -> std::size_t {
        if (d == 1) return LearnableSketch::npos;
        const std::size_t idx = t.nodes_.size();
        t.nodes_.emplace_back();
        const std::size_t in = d == 2 ? h : r;
        t.nodes_[idx].path = path;
        t.nodes_[idx].subtree_degree = d;
        t.nodes_[idx].f1 = init_block(in, r, seed, path, 0);
        t.nodes_[idx].f2 = init_block(in, r, seed, path, 1);
        const std::size_t left = self(self, d / 2, 2 * path);
        const std::size_t right = self(self, d / 2, 2 * path + 1);
        t.nodes_[idx].left = left;
        t.nodes_[idx].right = right;
        return idx;
    };
    build(build, t.degree_q_, 1);
    return t;
}

Matrix apply_learnable_with_negativity(const Matrix& a, const LearnableSketch& params,
                                       OpCounter* counter) {
    return params.with_negativity(a, counter);
}

Matrix apply_learnable_non_negative(const Matrix& a, const LearnableSketch& params,
                                    OpCounter* counter) {
    return params.non_negative(a, counter);
}

namespace {

Matrix vec_as_row(const std::vector<double>& v) {
    Matrix m(1, v.size(), Precision::f64);
    for (std::size_t j = 0; j < v.size(); ++j) m.set(0, j, v[j]);
    return m;
}

std::vector<double> row_as_vec(const Matrix& m, std::size_t expected,
                               const std::string& path, const char* what) {
    if (m.rows() != 1 || m.cols() != expected)
        throw IoError("'" + path + "': " + what + " has shape " +
                      std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                      ", expected 1x" + std::to_string(expected));
    std::vector<double> v(expected);
    for (std::size_t j = 0; j < expected; ++j) v[j] = m(0, j);
    return v;
}

// Matrices per dense block, in serialization order.
constexpr std::size_t kBlockMatrixCount = 12;

} // namespace

void save_params(const std::string& path, const LearnableSketch& params) {
    nlohmann::json manifest;
    manifest["kind"] = "learnable_sketch";
    manifest["version"] = 1;
    manifest["input_dim"] = params.input_dim();
    manifest["sketch_size"] = params.sketch_size();
    manifest["degree_q"] = params.degree_q();
    manifest["degree"] = params.degree();
    manifest["seed"] = params.seed();
    nlohmann::json nodes = nlohmann::json::array();
    std::vector<Matrix> staged; // holds the 1 x k views of vectors
    std::vector<const Matrix*> mats;
    staged.reserve(params.nodes().size() * 2 * 8);
    auto stage_block = [&](const DenseBlockParams& b) {
        auto vec = [&](const std::vector<double>& v) {
            staged.push_back(vec_as_row(v));
            return &staged.back();
        };
        mats.push_back(vec(b.ln_in_gain));
        mats.push_back(vec(b.ln_in_bias));
        mats.push_back(&b.w1);
        mats.push_back(vec(b.b1));
        mats.push_back(vec(b.ln_mid_gain));
        mats.push_back(vec(b.ln_mid_bias));
        mats.push_back(&b.w2);
        mats.push_back(vec(b.b2));
        mats.push_back(&b.w3);
        mats.push_back(vec(b.b3));
        mats.push_back(&b.w4);
        mats.push_back(vec(b.b4));
    };
    for (const auto& nd : params.nodes()) {
        nodes.push_back({{"path", nd.path}, {"subtree_degree", nd.subtree_degree}});
        stage_block(nd.f1);
        stage_block(nd.f2);
    }
    manifest["nodes"] = nodes;
    save_bundle(path, manifest, mats);
}

LearnableSketch load_params(const std::string& path) {
    Bundle b = load_bundle(path);
    const auto& mf = b.manifest;
    try {
        if (mf.at("kind") != "learnable_sketch")
            throw IoError("'" + path + "': manifest kind is not learnable_sketch");
        if (mf.at("version") != 1)
            throw IoError("'" + path + "': unsupported learnable_sketch version");
        const std::size_t h = mf.at("input_dim").get<std::size_t>();
        const std::size_t r = mf.at("sketch_size").get<std::size_t>();
        const int q = mf.at("degree_q").get<int>();
        const std::uint64_t seed = mf.at("seed").get<std::uint64_t>();
        if (h == 0 || r == 0) throw IoError("'" + path + "': zero dimension in manifest");
        if (q != 2 && q != 4 && q != 8)
            throw IoError("'" + path + "': unsupported degree_q " + std::to_string(q));
        LearnableSketch t = init_params(h, r, 2 * q, seed);
        if (b.matrices.size() != t.nodes().size() * 2 * kBlockMatrixCount)
            throw IoError("'" + path + "': expected " +
                          std::to_string(t.nodes().size() * 2 * kBlockMatrixCount) +
                          " matrices, found " + std::to_string(b.matrices.size()));
        const auto& node_meta = mf.at("nodes");
        if (node_meta.size() != t.nodes().size())
            throw IoError("'" + path + "': node list does not match tree shape");
        std::size_t next = 0;
        auto take_matrix = [&](std::size_t rows, std::size_t cols, const char* what) {
            const Matrix& m = b.matrices[next++];
            if (m.rows() != rows || m.cols() != cols)
                throw IoError("'" + path + "': " + what + " has shape " +
                              std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                              ", expected " + std::to_string(rows) + "x" +
                              std::to_string(cols));
            return m.to_precision(Precision::f64);
        };
        auto take_vec = [&](std::size_t len, const char* what) {
            return row_as_vec(b.matrices[next++].to_precision(Precision::f64), len, path,
                              what);
        };
        auto load_block = [&](DenseBlockParams& blk, std::size_t in) {
            blk.in_dim = in;
            blk.r = r;
            blk.ln_in_gain = take_vec(in, "ln_in_gain");
            blk.ln_in_bias = take_vec(in, "ln_in_bias");
            blk.w1 = take_matrix(in, 8 * r, "w1");
            blk.b1 = take_vec(8 * r, "b1");
            blk.ln_mid_gain = take_vec(8 * r, "ln_mid_gain");
            blk.ln_mid_bias = take_vec(8 * r, "ln_mid_bias");
            blk.w2 = take_matrix(8 * r, r, "w2");
            blk.b2 = take_vec(r, "b2");
            blk.w3 = take_matrix(r, 8 * r, "w3");
            blk.b3 = take_vec(8 * r, "b3");
            blk.w4 = take_matrix(8 * r, r, "w4");
            blk.b4 = take_vec(r, "b4");
        };
        for (std::size_t i = 0; i < t.mutable_nodes().size(); ++i) {
            auto& nd = t.mutable_nodes()[i];
            if (node_meta[i].at("path").get<std::uint64_t>() != nd.path ||
                node_meta[i].at("subtree_degree").get<int>() != nd.subtree_degree)
                throw IoError("'" + path + "': node " + std::to_string(i) +
                              " metadata does not match the rebuilt topology");
            const std::size_t in = nd.subtree_degree == 2 ? h : r;
            load_block(nd.f1, in);
            load_block(nd.f2, in);
        }
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("'" + path + "': malformed learnable manifest: " + e.what());
    }
}

} // namespace psk
