#include "psk/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace psk {

const char* precision_name(Precision p) {
    return p == Precision::f32 ? "f32" : "f64";
}

Precision precision_from_name(const std::string& name) {
    if (name == "f32") return Precision::f32;
    if (name == "f64") return Precision::f64;
    throw ValueError("unknown precision '" + name + "' (expected f32 or f64)");
}

Matrix::Matrix(std::size_t rows, std::size_t cols, Precision prec)
    : rows_(rows), cols_(cols), prec_(prec) {
    if (prec_ == Precision::f64) f64_.assign(rows * cols, 0.0);
    else f32_.assign(rows * cols, 0.0f);
}

Matrix Matrix::zeros(std::size_t rows, std::size_t cols, Precision prec) {
    return Matrix(rows, cols, prec);
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows,
                         Precision prec) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Matrix m(r, c, prec);
    std::size_t i = 0;
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("from_rows: ragged row lengths");
        std::size_t j = 0;
        for (double v : row) m.set(i, j++, v);
        ++i;
    }
    return m;
}

double Matrix::at(std::size_t i, std::size_t j) const {
    if (i >= rows_ || j >= cols_) {
        std::ostringstream os;
        os << "index (" << i << ", " << j << ") out of range for " << rows_ << "x" << cols_;
        throw ShapeError(os.str());
    }
    return (*this)(i, j);
}

bool Matrix::all_finite() const {
    if (prec_ == Precision::f64) {
        for (double v : f64_)
            if (!std::isfinite(v)) return false;
    } else {
        for (float v : f32_)
            if (!std::isfinite(v)) return false;
    }
    return true;
}

void Matrix::ensure_finite(const char* context) const {
    if (!all_finite())
        throw ValueError(std::string(context) + ": matrix contains non-finite values");
}

Matrix Matrix::to_precision(Precision prec) const {
    if (prec == prec_) return *this;
    Matrix out(rows_, cols_, prec);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) out.set(i, j, (*this)(i, j));
    return out;
}

Matrix Matrix::row_slice(std::size_t begin, std::size_t end) const {
    if (begin > end || end > rows_) throw ShapeError("row_slice: bad range");
    Matrix out(end - begin, cols_, prec_);
    if (prec_ == Precision::f64) {
        std::copy(f64_.begin() + begin * cols_, f64_.begin() + end * cols_,
                  out.f64_.begin());
    } else {
        std::copy(f32_.begin() + begin * cols_, f32_.begin() + end * cols_,
                  out.f32_.begin());
    }
    return out;
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b)) {
        std::ostringstream os;
        os << op << ": shape mismatch " << a.rows() << "x" << a.cols() << " vs "
           << b.rows() << "x" << b.cols();
        throw ShapeError(os.str());
    }
}

void require_same_precision(const Matrix& a, const Matrix& b, const char* op) {
    if (a.precision() != b.precision())
        throw ValueError(std::string(op) + ": mixed storage precisions");
}

} // namespace psk
