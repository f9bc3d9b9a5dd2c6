#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "psk/matrix.hpp"

namespace psk {

/// Per-row cost audit for feature-map application. One matrix-level product
/// is one per-row product (it applies to every row), so the counters read
/// directly as per-row operation counts.
struct OpCounter {
    long long hr_products = 0; // products against input-dim x r Gaussians
    long long rr_products = 0; // products against r x r Gaussians
    long long hadamards = 0;
    long long self_tensors = 0;
};

/// Degree-p polynomial feature map: with_negativity produces the signed
/// degree-p/2 factor; non_negative self-tensors it so that feature dot
/// products are squares, hence >= 0. Implemented by the random sketch tree
/// and by the learnable sketch, which lets causal attention accept either.
class PolyFeatureMap {
public:
    virtual ~PolyFeatureMap() = default;
    virtual std::size_t input_dim() const = 0;
    /// Columns of the with_negativity output (r, or h when degree is 2).
    virtual std::size_t factor_dim() const = 0;
    /// Target polynomial degree p = 2q.
    virtual int degree() const = 0;
    virtual Matrix with_negativity(const Matrix& a, OpCounter* counter = nullptr) const = 0;
    /// row_self_tensor of with_negativity; output width factor_dim()^2.
    Matrix non_negative(const Matrix& a, OpCounter* counter = nullptr) const;
    std::size_t feature_dim() const { return factor_dim() * factor_dim(); }
};

/// Materialized recursive Gaussian sketch. The recursion over degree q (a
/// power of two) forms a full binary tree with q-1 combine nodes; each node
/// holds two independent Gaussian matrices G1, G2. Nodes whose operands are
/// the raw input (q = 2 subtrees) hold h x r Gaussians; all others r x r,
/// for 2(q-1) matrices total. A node at heap position `path` (root 1,
/// children 2i and 2i+1) samples G1/G2 from streams derived as
/// mix_seed(seed, path, 0/1), so (h, r, q, seed) regenerate the tree
/// bit-identically.
class SketchTree final : public PolyFeatureMap {
public:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    struct Node {
        Matrix g1, g2;                  // f64 Gaussians
        std::size_t left = npos;        // child node index; npos = operand is the input
        std::size_t right = npos;
        std::uint64_t path = 0;         // heap position used for seed derivation
        int subtree_degree = 0;         // degree produced by this node (2, 4, ...)
    };

    std::size_t input_dim() const override { return h_; }
    std::size_t factor_dim() const override { return degree_q_ == 1 ? h_ : r_; }
    int degree() const override { return 2 * degree_q_; }
    int degree_q() const { return degree_q_; }
    std::size_t sketch_size() const { return r_; }
    std::uint64_t seed() const { return seed_; }
    const std::vector<Node>& nodes() const { return nodes_; }

    /// Signed degree-q sketch, n x factor_dim. Output storage matches the
    /// input precision; internal arithmetic is f64.
    Matrix with_negativity(const Matrix& a, OpCounter* counter = nullptr) const override;

    friend SketchTree sample_sketch(std::size_t h, std::size_t r, int p, std::uint64_t seed);
    friend SketchTree load_sketch(const std::string& path);

private:
    SketchTree() = default;
    Matrix apply_node(const Matrix& a64, std::size_t idx, OpCounter* counter) const;

    std::size_t h_ = 0, r_ = 0;
    int degree_q_ = 1;
    std::uint64_t seed_ = 0;
    std::vector<Node> nodes_; // preorder: root first
};

/// Samples the full tree for target degree p. p must be one of {2, 4, 8, 16}
/// and r >= 1; p = 2 yields the empty tree (identity factor map).
SketchTree sample_sketch(std::size_t h, std::size_t r, int p, std::uint64_t seed);

Matrix apply_with_negativity(const Matrix& a, const SketchTree& tree,
                             OpCounter* counter = nullptr);
Matrix apply_non_negative(const Matrix& a, const SketchTree& tree,
                          OpCounter* counter = nullptr);

inline constexpr std::size_t kAmmMaxRows = 512;
inline constexpr std::size_t kAmmMaxDim = 16;

/// || phi'(Q) phi'(K)^T - (Q K^T)^p ||_F divided by the product of the
/// tensor-power norms sqrt(sum_i |q_i|^(2p)) * sqrt(sum_j |k_j|^(2p)).
/// Returns 0 when the denominator is 0. Materializes n x n, so rows are
/// capped at kAmmMaxRows and the input dim at kAmmMaxDim.
double amm_relative_error(const Matrix& q, const Matrix& k, const SketchTree& tree, int p);

/// Bundle file: JSON manifest (h, r, q, seed, node paths) + one PSKM record
/// per Gaussian matrix in node order (g1 then g2 per node).
void save_sketch(const std::string& path, const SketchTree& tree);
SketchTree load_sketch(const std::string& path);

} // namespace psk
