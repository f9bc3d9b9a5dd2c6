#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "psk/matrix.hpp"

namespace psk {

// PSKM is the single-matrix binary format, little-endian throughout:
//   bytes 0..3   magic "PSKM"
//   bytes 4..7   u32 format version (currently 1)
//   byte  8      u8 dtype: 0 = f32, 1 = f64
//   bytes 9..16  u64 rows
//   bytes 17..24 u64 cols
//   payload      rows*cols values, row-major, IEEE-754 little-endian
// Loads reject bad magic/version/dtype, short payloads, and non-finite
// values, throwing IoError with the byte offset of the problem.

void write_pskm(std::ostream& os, const Matrix& m);
Matrix read_pskm(std::istream& is);

void save_matrix_pskm(const std::string& path, const Matrix& m);
Matrix load_matrix_pskm(const std::string& path);

// CSV: header row "r0,r1,...,r<cols-1>" then one line per matrix row. Values
// are printed with enough digits to round-trip the storage precision.
void save_matrix_csv(const std::string& path, const Matrix& m);
Matrix load_matrix_csv(const std::string& path, Precision prec = Precision::f64);

// Bundle: a JSON manifest plus an ordered list of PSKM-encoded matrices in
// one file. Used for sketch and learnable-sketch parameter files.
//   bytes 0..3   magic "PSKB"
//   bytes 4..7   u32 version (currently 1)
//   bytes 8..15  u64 manifest byte length
//   manifest     UTF-8 JSON (nlohmann dump; key order is deterministic)
//   bytes ...    u64 matrix count, then that many PSKM records back to back

struct Bundle {
    nlohmann::json manifest;
    std::vector<Matrix> matrices;
};

void save_bundle(const std::string& path, const nlohmann::json& manifest,
                 const std::vector<const Matrix*>& matrices);
Bundle load_bundle(const std::string& path);

} // namespace psk
