#include <doctest.h>

#include <cmath>

#include "psk/matrix.hpp"

using psk::Matrix;
using psk::Precision;

TEST_SUITE("matrix") {

TEST_CASE("construction zero-fills both storage kinds") {
    for (Precision prec : {Precision::f32, Precision::f64}) {
        Matrix m(3, 4, prec);
        CHECK(m.rows() == 3);
        CHECK(m.cols() == 4);
        CHECK(m.size() == 12);
        CHECK(m.precision() == prec);
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 4; ++j) CHECK(m(i, j) == 0.0);
    }
}

TEST_CASE("from_rows stores values and rejects ragged input") {
    const Matrix m = Matrix::from_rows({{1.0, 2.0}, {3.0, 4.0}});
    CHECK(m(0, 1) == 2.0);
    CHECK(m(1, 0) == 3.0);
    CHECK_THROWS_AS(Matrix::from_rows({{1.0, 2.0}, {3.0}}), psk::ShapeError);
}

TEST_CASE("at is bounds-checked, operator() is not widened differently") {
    const Matrix m = Matrix::from_rows({{5.0}});
    CHECK(m.at(0, 0) == 5.0);
    CHECK_THROWS_AS(m.at(1, 0), psk::ShapeError);
    CHECK_THROWS_AS(m.at(0, 1), psk::ShapeError);
}

TEST_CASE("f32 storage rounds through float") {
    Matrix m(1, 1, Precision::f32);
    m.set(0, 0, 0.1); // not representable in binary32
    CHECK(m(0, 0) == doctest::Approx(0.1).epsilon(1e-7));
    CHECK(m(0, 0) == static_cast<double>(0.1f));
}

TEST_CASE("to_precision converts and preserves f64 exactly on identity") {
    const Matrix m = Matrix::from_rows({{1.5, -2.25}});
    const Matrix same = m.to_precision(Precision::f64);
    CHECK(same(0, 1) == -2.25);
    const Matrix narrow = m.to_precision(Precision::f32);
    CHECK(narrow.precision() == Precision::f32);
    CHECK(narrow(0, 0) == 1.5); // representable, survives the round trip
}

TEST_CASE("finite checks catch NaN and infinity") {
    Matrix m(2, 2);
    CHECK(m.all_finite());
    m.set(1, 1, std::nan(""));
    CHECK_FALSE(m.all_finite());
    CHECK_THROWS_AS(m.ensure_finite("test"), psk::ValueError);
}

TEST_CASE("row_slice copies a contiguous range") {
    const Matrix m = Matrix::from_rows({{1.0}, {2.0}, {3.0}, {4.0}});
    const Matrix s = m.row_slice(1, 3);
    CHECK(s.rows() == 2);
    CHECK(s(0, 0) == 2.0);
    CHECK(s(1, 0) == 3.0);
    CHECK_THROWS_AS(m.row_slice(3, 2), psk::ShapeError);
    CHECK_THROWS_AS(m.row_slice(0, 5), psk::ShapeError);
}

TEST_CASE("precision names round-trip") {
    CHECK(psk::precision_from_name("f32") == Precision::f32);
    CHECK(psk::precision_from_name("f64") == Precision::f64);
    CHECK(std::string(psk::precision_name(Precision::f32)) == "f32");
    CHECK_THROWS_AS(psk::precision_from_name("f16"), psk::ValueError);
}

TEST_CASE("shape and precision guards") {
    const Matrix a(2, 3), b(2, 3), c(3, 2);
    CHECK_NOTHROW(psk::require_same_shape(a, b, "t"));
    CHECK_THROWS_AS(psk::require_same_shape(a, c, "t"), psk::ShapeError);
    const Matrix f(2, 3, Precision::f32);
    CHECK_THROWS_AS(psk::require_same_precision(a, f, "t"), psk::ValueError);
}

} // TEST_SUITE
