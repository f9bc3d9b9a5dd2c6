#pragma once

#include <cstdint>
#include <vector>

#include "psk/attention.hpp"
#include "psk/matrix.hpp"
#include "psk/sketch.hpp"

namespace psk {

/// Partition of n rows into ceil(n/b) contiguous blocks; the last block may
/// be partial, and a block size larger than n collapses to a single block.
struct BlockPlan {
    std::size_t n = 0;
    std::size_t block = 0;
    std::size_t count = 0;

    BlockPlan(std::size_t n_, std::size_t b);
    std::size_t begin(std::size_t l) const { return l * block; }
    std::size_t end(std::size_t l) const {
        const std::size_t e = (l + 1) * block;
        return e < n ? e : n;
    }
};

/// Row cap for mechanisms that materialize an n x n matrix.
inline constexpr std::size_t kLtNaiveMaxRows = 2048;
/// Row cap for the O(n^2) exact causal reference (no materialization).
inline constexpr std::size_t kCausalExactMaxRows = 16384;

/// lt(A B^T) C by explicit materialization of the n x n product. Oracle
/// only; rows capped at kLtNaiveMaxRows.
Matrix lt_multiply_naive(const Matrix& a, const Matrix& b, const Matrix& c);

/// Blocked lt(A B^T) C without materializing n x n. Per block l:
///   H_l = B_l^T C_l, Z_l = sum_{j<l} H_j (sequential prefix sum),
///   P_l = lt(A_l B_l^T) C_l, output block = P_l + A_l Z_l.
/// The prefix state accumulates in f64 regardless of storage precision.
/// With b = n this reduces to exactly the naive arithmetic. If mac_count is
/// given it receives the number of multiply-accumulate operations executed,
/// which is linear in n at fixed b, m, k.
Matrix lt_multiply_blocked(const Matrix& a, const Matrix& b, const Matrix& c,
                           std::size_t b_size, long long* mac_count = nullptr);

/// Causal normalized degree-p attention by direct summation:
/// row i = sum_{j<=i} <q_i,k_j>^p v_j / (1 + sum_{j<=i} <q_i,k_j>^p).
Matrix causal_exact_poly_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                                   int p, AttentionStats* stats = nullptr);

/// Linear-time causal sketched attention. Cross-block contributions flow
/// through the prefix-summed state Z = sum phi'(k_j) [v_j^T | 1] (size
/// feature_dim x (h_v+1), f64). Diagonal blocks use the factor identity
/// phi'(Q_l) phi'(K_l)^T = (L R^T)^2 entrywise with L, R the signed factors
/// of Q_l, K_l — or, when local_exact is set, the exact weights
/// (Q_l K_l^T)^p. Denominators are 1 + diagonal mass + max(cross mass, 0),
/// hence always >= 1. When prefix_states is non-null it receives a snapshot
/// of Z after each block is folded in (introspection for tests).
Matrix causal_polysketch_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                                   const PolyFeatureMap& fmap, std::size_t b_size,
                                   bool local_exact, AttentionStats* stats = nullptr,
                                   std::vector<Matrix>* prefix_states = nullptr);

} // namespace psk
