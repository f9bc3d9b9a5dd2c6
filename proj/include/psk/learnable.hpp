#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "psk/matrix.hpp"
#include "psk/sketch.hpp"

namespace psk {

/// One projection-replacement network: hidden sizes [8r, r, 8r] then an
/// r-dim output, wired as
///   LN -> linear(in -> 8r) -> gelu -> LN -> linear(8r -> r)
///      -> linear(r -> 8r) -> gelu -> linear(8r -> r)
/// with layer norm before the input and before the second hidden layer and
/// gelu after the first and third. Weight-only parameter count is
/// 8*in*r + 24r^2 (so 8hr + 24r^2 at the leaves, 32r^2 internally).
struct DenseBlockParams {
    std::size_t in_dim = 0;
    std::size_t r = 0;
    std::vector<double> ln_in_gain, ln_in_bias;   // length in_dim
    Matrix w1;                                    // in_dim x 8r
    std::vector<double> b1;                       // 8r
    std::vector<double> ln_mid_gain, ln_mid_bias; // 8r
    Matrix w2;                                    // 8r x r
    std::vector<double> b2;                       // r
    Matrix w3;                                    // r x 8r
    std::vector<double> b3;                       // 8r
    Matrix w4;                                    // 8r x r
    std::vector<double> b4;                       // r

    long long weight_count() const {
        const long long in = static_cast<long long>(in_dim), rr = static_cast<long long>(r);
        return 8 * in * rr + 24 * rr * rr;
    }
    long long total_parameter_count() const; // weights + biases + LN params
};

/// Exact gelu: x * Phi(x) with Phi the standard normal CDF, computed as
/// 0.5 * x * (1 + erf(x / sqrt(2))). No tanh approximation.
double gelu(double x);

/// Forward pass of one dense block; output n x r, f64 arithmetic.
Matrix dense_block_forward(const Matrix& x, const DenseBlockParams& params);

/// Learnable polynomial sketch: the recursion tree of the random sketch
/// with each Gaussian projection replaced by a dense block, combined as
/// sqrt(r) * tanh(sqrt(1/r) * [f1(M1) * f2(M2)]) at every node, so every
/// with-negativity output entry lies strictly inside (-sqrt(r), sqrt(r)).
/// Forward-only: no gradients, training is out of scope.
class LearnableSketch final : public PolyFeatureMap {
public:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    struct Node {
        DenseBlockParams f1, f2;
        std::size_t left = npos, right = npos;
        std::uint64_t path = 0;
        int subtree_degree = 0;
    };

    std::size_t input_dim() const override { return h_; }
    std::size_t factor_dim() const override { return r_; }
    int degree() const override { return 2 * degree_q_; }
    int degree_q() const { return degree_q_; }
    std::size_t sketch_size() const { return r_; }
    std::uint64_t seed() const { return seed_; }
    const std::vector<Node>& nodes() const { return nodes_; }
    std::vector<Node>& mutable_nodes() { return nodes_; }

    Matrix with_negativity(const Matrix& a, OpCounter* counter = nullptr) const override;

    /// Sum of weight_count over all 2(q-1) networks.
    long long weight_count() const;

    friend LearnableSketch init_params(std::size_t h, std::size_t r, int p,
                                       std::uint64_t seed);
    friend LearnableSketch load_params(const std::string& path);

private:
    LearnableSketch() = default;
    Matrix apply_node(const Matrix& a64, std::size_t idx, OpCounter* counter) const;

    std::size_t h_ = 0, r_ = 0;
    int degree_q_ = 2;
    std::uint64_t seed_ = 0;
    std::vector<Node> nodes_;
};

/// Fresh parameters: weights ~ N(0, 1/fan_in), biases 0, LN gain 1 / bias 0.
/// p must be one of {4, 8, 16}; p = 2 needs no networks and is rejected.
LearnableSketch init_params(std::size_t h, std::size_t r, int p, std::uint64_t seed);

Matrix apply_learnable_with_negativity(const Matrix& a, const LearnableSketch& params,
                                       OpCounter* counter = nullptr);
Matrix apply_learnable_non_negative(const Matrix& a, const LearnableSketch& params,
                                    OpCounter* counter = nullptr);

/// Bundle round-trip; save(load(save(x))) is byte-identical to save(x).
void save_params(const std::string& path, const LearnableSketch& params);
LearnableSketch load_params(const std::string& path);

} // namespace psk
