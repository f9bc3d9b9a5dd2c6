#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "psk/io.hpp"
#include "psk/rng.hpp"

using psk::Matrix;
using psk::Precision;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("psk_io_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::vector<unsigned char> slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::string& p, const std::vector<unsigned char>& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols() || a.precision() != b.precision())
        return false;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            if (a(i, j) != b(i, j)) return false;
    return true;
}

} // namespace

TEST_SUITE("io") {

TEST_CASE("matrix round-trip is bit-exact in both precisions") {
    TempDir tmp;
    for (const Precision prec : {Precision::f64, Precision::f32}) {
        const Matrix m = psk::random_gaussian(5, 7, 99, prec);
        const std::string p = tmp.file("m.pskm");
        psk::save_matrix_pskm(p, m);
        const Matrix back = psk::load_matrix_pskm(p);
        CHECK(bitwise_equal(m, back));
    }
}

TEST_CASE("file header layout is fixed") {
    TempDir tmp;
    const Matrix m = Matrix::from_rows({{1.0, 2.0}, {3.0, 4.0}});
    const std::string p = tmp.file("h.pskm");
    psk::save_matrix_pskm(p, m);
    const auto bytes = slurp(p);
    REQUIRE(bytes.size() == 25 + 4 * 8);
    CHECK(bytes[0] == 'P');
    CHECK(bytes[1] == 'S');
    CHECK(bytes[2] == 'K');
    CHECK(bytes[3] == 'M');
    CHECK(bytes[4] == 1); // version, little-endian u32
    CHECK(bytes[5] == 0);
    CHECK(bytes[6] == 0);
    CHECK(bytes[7] == 0);
    CHECK(bytes[8] == 1); // dtype code for 64-bit storage
    CHECK(bytes[9] == 2); // rows, little-endian u64
    for (int i = 10; i < 17; ++i) CHECK(bytes[i] == 0);
    CHECK(bytes[17] == 2); // cols
    for (int i = 18; i < 25; ++i) CHECK(bytes[i] == 0);
    // first payload value is 1.0 = 0x3ff0000000000000, little-endian
    CHECK(bytes[25 + 6] == 0xf0);
    CHECK(bytes[25 + 7] == 0x3f);
}

TEST_CASE("empty matrices round-trip") {
    TempDir tmp;
    const Matrix m(0, 3);
    const std::string p = tmp.file("empty.pskm");
    psk::save_matrix_pskm(p, m);
    const Matrix back = psk::load_matrix_pskm(p);
    CHECK(back.rows() == 0);
    CHECK(back.cols() == 3);
}

TEST_CASE("corrupted headers are rejected with byte offsets") {
    TempDir tmp;
    const Matrix m = Matrix::from_rows({{1.5}});
    const std::string p = tmp.file("bad.pskm");
    psk::save_matrix_pskm(p, m);
    auto bytes = slurp(p);

    SUBCASE("wrong magic") {
        auto b = bytes;
        b[0] = 'X';
        spit(p, b);
        CHECK_THROWS_AS(psk::load_matrix_pskm(p), psk::IoError);
    }
    SUBCASE("unsupported version") {
        auto b = bytes;
        b[4] = 9;
        spit(p, b);
        CHECK_THROWS_AS(psk::load_matrix_pskm(p), psk::IoError);
    }
    SUBCASE("unknown dtype code") {
        auto b = bytes;
        b[8] = 7;
        spit(p, b);
        CHECK_THROWS_AS(psk::load_matrix_pskm(p), psk::IoError);
    }
    SUBCASE("truncated payload names the offset") {
        auto b = bytes;
        b.resize(b.size() - 3);
        spit(p, b);
        try {
            psk::load_matrix_pskm(p);
            FAIL("expected an error for a truncated file");
        } catch (const psk::IoError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("offset") != std::string::npos);
        }
    }
    SUBCASE("truncated header") {
        auto b = bytes;
        b.resize(10);
        spit(p, b);
        CHECK_THROWS_AS(psk::load_matrix_pskm(p), psk::IoError);
    }
    SUBCASE("non-finite payload entry is rejected") {
        auto b = bytes;
        // overwrite the single f64 payload value with a quiet NaN
        const unsigned char nan_bytes[8] = {0, 0, 0, 0, 0, 0, 0xf8, 0x7f};
        for (int i = 0; i < 8; ++i) b[25 + i] = nan_bytes[i];
        spit(p, b);
        try {
            psk::load_matrix_pskm(p);
            FAIL("expected an error for a NaN payload");
        } catch (const psk::IoError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("offset") != std::string::npos);
        }
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(psk::load_matrix_pskm(tmp.file("does_not_exist.pskm")),
                        psk::IoError);
    }
}

TEST_CASE("csv round-trip and header") {
    TempDir tmp;
    const Matrix m = psk::random_gaussian(4, 3, 7);
    const std::string p = tmp.file("m.csv");
    psk::save_matrix_csv(p, m);

    std::ifstream in(p);
    std::string header;
    std::getline(in, header);
    CHECK(header == "r0,r1,r2");

    const Matrix back = psk::load_matrix_csv(p, Precision::f64);
    // %.17g is round-trip exact for doubles
    CHECK(bitwise_equal(m, back));
}

TEST_CASE("csv loader rejects ragged rows and non-numeric fields") {
    TempDir tmp;
    const std::string p = tmp.file("bad.csv");
    {
        std::ofstream out(p);
        out << "r0,r1\n1.0,2.0\n3.0\n";
    }
    CHECK_THROWS_AS(psk::load_matrix_csv(p, Precision::f64), psk::IoError);
    {
        std::ofstream out(p, std::ios::trunc);
        out << "r0,r1\n1.0,abc\n";
    }
    CHECK_THROWS_AS(psk::load_matrix_csv(p, Precision::f64), psk::IoError);
    {
        std::ofstream out(p, std::ios::trunc);
        out << "r0,r1\n1.0,nan\n";
    }
    CHECK_THROWS_AS(psk::load_matrix_csv(p, Precision::f64), psk::IoError);
}

TEST_CASE("bundle round-trip preserves manifest and matrices") {
    TempDir tmp;
    const std::string p = tmp.file("b.pskb");
    nlohmann::json manifest = {{"kind", "test"}, {"answer", 42}};
    std::vector<Matrix> mats;
    mats.push_back(psk::random_gaussian(3, 4, 1));
    mats.push_back(psk::random_gaussian(2, 2, 2, Precision::f32));
    psk::save_bundle(p, manifest, {&mats[0], &mats[1]});

    const psk::Bundle back = psk::load_bundle(p);
    CHECK(back.manifest == manifest);
    REQUIRE(back.matrices.size() == 2);
    CHECK(bitwise_equal(back.matrices[0], mats[0]));
    CHECK(bitwise_equal(back.matrices[1], mats[1]));
}

TEST_CASE("bundle saves are byte-identical across repeats") {
    TempDir tmp;
    nlohmann::json manifest = {{"kind", "determinism"}};
    const Matrix mat = psk::random_gaussian(4, 4, 5);
    const std::string p1 = tmp.file("a.pskb");
    const std::string p2 = tmp.file("b.pskb");
    psk::save_bundle(p1, manifest, {&mat});
    psk::save_bundle(p2, manifest, {&mat});
    CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("bundle loader rejects corruption") {
    TempDir tmp;
    const std::string p = tmp.file("c.pskb");
    const Matrix one = Matrix::from_rows({{1.0}});
    psk::save_bundle(p, nlohmann::json{{"k", 1}}, {&one});
    auto bytes = slurp(p);

    SUBCASE("bad magic") {
        auto b = bytes;
        b[0] = '?';
        spit(p, b);
        CHECK_THROWS_AS(psk::load_bundle(p), psk::IoError);
    }
    SUBCASE("truncated") {
        auto b = bytes;
        b.resize(b.size() / 2);
        spit(p, b);
        CHECK_THROWS_AS(psk::load_bundle(p), psk::IoError);
    }
    SUBCASE("garbage manifest json") {
        // the manifest's first byte sits after magic+version+length = 16 bytes
        auto b = bytes;
        b[16] = 0x01;
        spit(p, b);
        CHECK_THROWS_AS(psk::load_bundle(p), psk::IoError);
    }
}

} // TEST_SUITE
