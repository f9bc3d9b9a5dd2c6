#pragma once

#include <vector>

#include "psk/matrix.hpp"

namespace psk {

/// x^p for integer p >= 0 by exponentiation-by-squaring; for p a power of
/// two this is pure repeated squaring.
inline double pow_int(double x, unsigned p) {
    double result = 1.0, base = x;
    for (unsigned e = p; e != 0; e >>= 1) {
        if (e & 1u) result *= base;
        base *= base;
    }
    return result;
}

/// A (n x m) times B (m x k). Output storage matches the operands; per-output
/// sums accumulate in double over l = 0..m-1 in ascending order.
Matrix matmul(const Matrix& a, const Matrix& b);

/// A (n x m) times B^T where B is (k x m); row-by-row dot products.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);

/// Elementwise product of same-shape matrices.
Matrix hadamard(const Matrix& a, const Matrix& b);

/// Maps each row a_i (length m) to its self Kronecker product a_i (x) a_i of
/// length m^2, laid out as [a_i1*a_i1, a_i1*a_i2, ..., a_i1*a_im, a_i2*a_i1,
/// ...] (outer index varies slowest).
Matrix row_self_tensor(const Matrix& a);

/// Elementwise x -> x^p. p must be even and >= 2; the even powers are the
/// only ones used by polynomial attention and guarantee non-negative output.
Matrix entrywise_pow(const Matrix& m, int p);

/// Zeroes the strictly upper triangle (j > i) of a square matrix. The
/// diagonal is kept: position i attends to itself.
Matrix lt_mask(const Matrix& m);

/// Frobenius norm, accumulated in double.
double frobenius_norm(const Matrix& m);

/// Sum of |row|_2^(2p) over rows, i.e. the squared Frobenius norm of the
/// p-fold row-wise tensor power of m.
double tensor_power_frobenius_sq(const Matrix& m, int p);

/// Row-wise layer norm: subtract the row mean, optionally divide by the row
/// standard deviation (floored at 1e-6), then apply gain and bias per column.
/// Empty gain/bias vectors mean gain 1 / bias 0.
Matrix layer_norm_rows(const Matrix& m, const std::vector<double>& gain = {},
                       const std::vector<double>& bias = {},
                       bool normalize_variance = true);

/// Row-wise softmax of m / beta, stabilized by subtracting the row max of
/// m(i,j)/beta before exponentiation. beta must be > 0.
Matrix stable_softmax_rows(const Matrix& m, double beta);

/// a - b elementwise (same shape, same precision).
Matrix subtract(const Matrix& a, const Matrix& b);

/// ||a - b||_F / ||b||_F, with 0/0 treated as 0.
double rel_frobenius_diff(const Matrix& a, const Matrix& b);

} // namespace psk
