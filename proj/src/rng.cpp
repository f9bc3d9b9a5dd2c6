#include "psk/rng.hpp"

#include <cmath>

namespace psk {

std::uint64_t SplitMix64::next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

namespace {
inline std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}
} // namespace

Xoshiro256pp::Xoshiro256pp(std::uint64_t seed) {
    SplitMix64 sm(seed);
    for (auto& s : s_) s = sm.next();
}

std::uint64_t Xoshiro256pp::next() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Xoshiro256pp::next_unit() {
    return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
}

double GaussianStream::next() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = rng_.next_unit();
    const double u2 = rng_.next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    SplitMix64 sm(seed ^ (a * 0x9e3779b97f4a7c15ULL) ^ (b * 0xc2b2ae3d27d4eb4fULL));
    return sm.next();
}

Matrix random_gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed,
                       Precision prec) {
    GaussianStream g(seed);
    Matrix m(rows, cols, prec);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) m.set(i, j, g.next());
    return m;
}

Matrix random_unit_rows(std::size_t rows, std::size_t cols, std::uint64_t seed,
                        Precision prec) {
    Matrix m = random_gaussian(rows, cols, seed, Precision::f64);
    for (std::size_t i = 0; i < rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < cols; ++j) s += m(i, j) * m(i, j);
        const double norm = std::sqrt(s);
        if (norm == 0.0) {
            m.set(i, 0, 1.0); // astronomically unlikely; keep rows unit anyway
            continue;
        }
        for (std::size_t j = 0; j < cols; ++j) m.set(i, j, m(i, j) / norm);
    }
    return m.to_precision(prec);
}

Matrix random_zero_mean_rows(std::size_t rows, std::size_t cols, std::uint64_t seed,
                             Precision prec) {
    Matrix m = random_gaussian(rows, cols, seed, Precision::f64);
    for (std::size_t i = 0; i < rows; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < cols; ++j) mean += m(i, j);
        mean /= static_cast<double>(cols);
        for (std::size_t j = 0; j < cols; ++j) m.set(i, j, m(i, j) - mean);
    }
    return m.to_precision(prec);
}

} // namespace psk
