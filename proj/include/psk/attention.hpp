#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "psk/matrix.hpp"
#include "psk/sketch.hpp"

namespace psk {

/// Diagnostics surfaced by the normalized attention mechanisms.
struct AttentionStats {
    double min_denominator = 0.0; // smallest per-row denominator encountered
    long long clamped_masses = 0; // negative sketched masses clamped to 0
};

/// stable_softmax_rows(Q K^T, beta) * V.
Matrix softmax_attention(const Matrix& q, const Matrix& k, const Matrix& v, double beta);

struct RawPolyWeights {
    Matrix weights;                     // n x n, rows sum to 1 where defined
    std::vector<std::size_t> zero_rows; // rows whose denominator was exactly 0
};

/// Unguarded polynomial weights W[i,j] = ((<q_i,k_j>+alpha)/beta)^p
/// normalized per row. A row with denominator exactly 0 becomes a zero row
/// and is reported in zero_rows (this form has no "+1" guard).
RawPolyWeights raw_polynomial_weights(const Matrix& q, const Matrix& k, double alpha,
                                      double beta, int p);

/// Normalized degree-p attention with the "+1" denominator guard:
/// row i = sum_j <q_i,k_j>^p v_j / (1 + sum_j <q_i,k_j>^p).
/// Q and K are expected to be layer-normalized by the caller.
Matrix exact_poly_attention(const Matrix& q, const Matrix& k, const Matrix& v, int p,
                            AttentionStats* stats = nullptr);

/// Sketched attention in linearized order: builds phi'(K)^T V and the key
/// mass phi'(K)^T 1 once, then takes per-row products with phi'(Q); the
/// n x n weight matrix is never materialized. Negative sketched masses are
/// clamped to 0, so every denominator is >= 1.
Matrix polysketch_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                            const PolyFeatureMap& fmap, AttentionStats* stats = nullptr);

/// Absorbs ((<q,k>+alpha)/beta) into plain dot products for mean-zero rows:
/// q' = q/sqrt(beta) + sqrt(alpha/(beta h)) * 1_h, same for k'.
/// Requires |row mean| <= 1e-9 for every row, alpha >= 0, beta > 0.
std::pair<Matrix, Matrix> absorption_transform(const Matrix& q, const Matrix& k,
                                               double alpha, double beta);

} // namespace psk
