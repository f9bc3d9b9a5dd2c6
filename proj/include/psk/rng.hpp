#pragma once

#include <cstdint>

#include "psk/matrix.hpp"

namespace psk {

/// SplitMix64 step generator; used to expand a single u64 seed into the
/// xoshiro256++ state and to derive per-stream seeds.
struct SplitMix64 {
    std::uint64_t state;
    explicit SplitMix64(std::uint64_t seed) : state(seed) {}
    std::uint64_t next();
};

/// xoshiro256++ (Blackman & Vigna). State is expanded from the seed with
/// SplitMix64, so a u64 seed fully determines the stream.
class Xoshiro256pp {
public:
    explicit Xoshiro256pp(std::uint64_t seed);
    std::uint64_t next();
    /// Uniform double in (0, 1]: ((next() >> 11) + 1) * 2^-53. The interval
    /// excludes 0 so log() in the Box-Muller transform is always finite.
    double next_unit();

private:
    std::uint64_t s_[4];
};

/// Standard normal stream via the trigonometric Box-Muller transform:
/// r = sqrt(-2 ln u1), theta = 2 pi u2, yielding the pair (r cos theta,
/// r sin theta). Pairs are consumed in that order.
class GaussianStream {
public:
    explicit GaussianStream(std::uint64_t seed) : rng_(seed) {}
    double next();

private:
    Xoshiro256pp rng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Derives an independent stream seed from a base seed and two indices
/// (e.g. tree node id and matrix slot). SplitMix64-style mixing.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b);

/// rows x cols matrix of iid N(0, 1) draws, filled row-major.
Matrix random_gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed,
                       Precision prec = Precision::f64);

/// Gaussian matrix with every row rescaled to unit Euclidean norm.
Matrix random_unit_rows(std::size_t rows, std::size_t cols, std::uint64_t seed,
                        Precision prec = Precision::f64);

/// Gaussian matrix with every row shifted to exact (double) zero mean, as
/// expected by the absorption transform.
Matrix random_zero_mean_rows(std::size_t rows, std::size_t cols, std::uint64_t seed,
                             Precision prec = Precision::f64);

} // namespace psk
