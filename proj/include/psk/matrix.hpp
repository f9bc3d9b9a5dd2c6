#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "psk/errors.hpp"

namespace psk {

/// Storage precision of a Matrix. Wire value: f32 = 0, f64 = 1.
enum class Precision : std::uint8_t { f32 = 0, f64 = 1 };

const char* precision_name(Precision p);
Precision precision_from_name(const std::string& name);

/// Dense row-major matrix with runtime-selected storage precision.
///
/// Elements are stored as float or double, but every kernel in this library
/// accumulates reductions in double and rounds back to the storage precision
/// once per output element. Reads through operator() always widen to double.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, Precision prec = Precision::f64);

    static Matrix zeros(std::size_t rows, std::size_t cols, Precision prec = Precision::f64);
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows,
                            Precision prec = Precision::f64);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return rows_ * cols_; }
    bool empty() const { return size() == 0; }
    Precision precision() const { return prec_; }

    double operator()(std::size_t i, std::size_t j) const {
        const std::size_t idx = i * cols_ + j;
        return prec_ == Precision::f64 ? f64_[idx] : static_cast<double>(f32_[idx]);
    }
    /// Bounds-checked read; throws ShapeError on out-of-range indices.
    double at(std::size_t i, std::size_t j) const;
    void set(std::size_t i, std::size_t j, double v) {
        const std::size_t idx = i * cols_ + j;
        if (prec_ == Precision::f64) f64_[idx] = v;
        else f32_[idx] = static_cast<float>(v);
    }

    const float* f32_data() const { return f32_.data(); }
    float* f32_data() { return f32_.data(); }
    const double* f64_data() const { return f64_.data(); }
    double* f64_data() { return f64_.data(); }

    bool all_finite() const;
    /// Throws ValueError naming `context` if any element is NaN or infinite.
    void ensure_finite(const char* context) const;

    /// Copy converted to `prec` (no-op copy when already there).
    Matrix to_precision(Precision prec) const;

    Matrix row_slice(std::size_t begin, std::size_t end) const;

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

private:
    std::size_t rows_ = 0, cols_ = 0;
    Precision prec_ = Precision::f64;
    std::vector<float> f32_;
    std::vector<double> f64_;
};

void require_same_shape(const Matrix& a, const Matrix& b, const char* op);
void require_same_precision(const Matrix& a, const Matrix& b, const char* op);

} // namespace psk
