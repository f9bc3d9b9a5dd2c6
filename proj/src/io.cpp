#include "psk/io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace psk {

namespace {

void put_bytes(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    put_bytes(os, b, 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    put_bytes(os, b, 8);
}

// Stream reader that tracks the absolute byte offset for error messages.
struct Reader {
    std::istream& is;
    std::uint64_t offset = 0;

    void bytes(void* p, std::size_t n, const char* what) {
        is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(is.gcount()) != n) {
            std::ostringstream os;
            os << "truncated file: expected " << n << " bytes for " << what
               << " at offset " << offset;
            throw IoError(os.str());
        }
        offset += n;
    }
    std::uint32_t u32(const char* what) {
        unsigned char b[4];
        bytes(b, 4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return v;
    }
    std::uint64_t u64(const char* what) {
        unsigned char b[8];
        bytes(b, 8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    }
    std::uint8_t u8(const char* what) {
        unsigned char b;
        bytes(&b, 1, what);
        return b;
    }
};

Matrix read_pskm_impl(Reader& r);

} // namespace

void write_pskm(std::ostream& os, const Matrix& m) {
    put_bytes(os, "PSKM", 4);
    put_u32(os, 1);
    const std::uint8_t dtype = static_cast<std::uint8_t>(m.precision());
    put_bytes(os, &dtype, 1);
    put_u64(os, m.rows());
    put_u64(os, m.cols());
    if (m.precision() == Precision::f64) {
        std::vector<unsigned char> buf(m.size() * 8);
        const double* d = m.f64_data();
        for (std::size_t e = 0; e < m.size(); ++e) {
            const std::uint64_t bits = std::bit_cast<std::uint64_t>(d[e]);
            for (int i = 0; i < 8; ++i)
                buf[e * 8 + i] = static_cast<unsigned char>(bits >> (8 * i));
        }
        put_bytes(os, buf.data(), buf.size());
    } else {
        std::vector<unsigned char> buf(m.size() * 4);
        const float* d = m.f32_data();
        for (std::size_t e = 0; e < m.size(); ++e) {
            const std::uint32_t bits = std::bit_cast<std::uint32_t>(d[e]);
            for (int i = 0; i < 4; ++i)
                buf[e * 4 + i] = static_cast<unsigned char>(bits >> (8 * i));
        }
        put_bytes(os, buf.data(), buf.size());
    }
    if (!os) throw IoError("write failed while emitting PSKM record");
}

namespace {

Matrix read_pskm_impl(Reader& r) {
    const std::uint64_t start = r.offset;
    char magic[4];
    r.bytes(magic, 4, "PSKM magic");
    if (std::memcmp(magic, "PSKM", 4) != 0) {
        std::ostringstream os;
        os << "bad magic at offset " << start << " (expected PSKM)";
        throw IoError(os.str());
    }
    const std::uint32_t version = r.u32("PSKM version");
    if (version != 1) {
        std::ostringstream os;
        os << "unsupported PSKM version " << version << " at offset " << start + 4;
        throw IoError(os.str());
    }
    const std::uint8_t dtype = r.u8("PSKM dtype");
    if (dtype > 1) {
        std::ostringstream os;
        os << "unknown dtype " << static_cast<int>(dtype) << " at offset " << start + 8;
        throw IoError(os.str());
    }
    const Precision prec = static_cast<Precision>(dtype);
    const std::uint64_t rows = r.u64("PSKM rows");
    const std::uint64_t cols = r.u64("PSKM cols");
    if (rows > (1ull << 32) || cols > (1ull << 32) ||
        (rows != 0 && cols > (1ull << 40) / rows)) {
        std::ostringstream os;
        os << "implausible dimensions " << rows << "x" << cols << " at offset "
           << start + 9;
        throw IoError(os.str());
    }
    Matrix m(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols), prec);
    const std::size_t width = prec == Precision::f64 ? 8 : 4;
    std::vector<unsigned char> buf(m.size() * width);
    if (!buf.empty()) r.bytes(buf.data(), buf.size(), "PSKM payload");
    for (std::size_t e = 0; e < m.size(); ++e) {
        double v;
        if (prec == Precision::f64) {
            std::uint64_t bits = 0;
            for (int i = 0; i < 8; ++i)
                bits |= static_cast<std::uint64_t>(buf[e * 8 + i]) << (8 * i);
            v = std::bit_cast<double>(bits);
            m.f64_data()[e] = v;
        } else {
            std::uint32_t bits = 0;
            for (int i = 0; i < 4; ++i)
                bits |= static_cast<std::uint32_t>(buf[e * 4 + i]) << (8 * i);
            const float f = std::bit_cast<float>(bits);
            v = f;
            m.f32_data()[e] = f;
        }
        if (!std::isfinite(v)) {
            std::ostringstream os;
            os << "non-finite value in payload entry " << e << " (byte offset "
               << start + 25 + e * width << ")";
            throw IoError(os.str());
        }
    }
    return m;
}

} // namespace

Matrix read_pskm(std::istream& is) {
    Reader r{is};
    return read_pskm_impl(r);
}

void save_matrix_pskm(const std::string& path, const Matrix& m) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    write_pskm(os, m);
    if (!os) throw IoError("write failed for '" + path + "'");
}

Matrix load_matrix_pskm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "' for reading");
    return read_pskm(is);
}

void save_matrix_csv(const std::string& path, const Matrix& m) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    for (std::size_t j = 0; j < m.cols(); ++j)
        os << (j == 0 ? "" : ",") << "r" << j;
    os << "\n";
    char buf[40];
    const char* fmt = m.precision() == Precision::f64 ? "%.17g" : "%.9g";
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), fmt, m(i, j));
            os << (j == 0 ? "" : ",") << buf;
        }
        os << "\n";
    }
    if (!os) throw IoError("write failed for '" + path + "'");
}

Matrix load_matrix_csv(const std::string& path, Precision prec) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path + "' for reading");
    std::string line;
    if (!std::getline(is, line)) throw IoError("empty CSV file '" + path + "'");
    std::size_t cols = line.empty() ? 0 : 1;
    for (char ch : line)
        if (ch == ',') ++cols;
    std::vector<double> values;
    std::size_t rows = 0, lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::size_t field = 0, pos = 0;
        while (pos <= line.size()) {
            std::size_t comma = line.find(',', pos);
            if (comma == std::string::npos) comma = line.size();
            const std::string tok = line.substr(pos, comma - pos);
            char* end = nullptr;
            const double v = std::strtod(tok.c_str(), &end);
            if (end == tok.c_str() || !std::isfinite(v)) {
                std::ostringstream os;
                os << "bad CSV value '" << tok << "' at line " << lineno << " field "
                   << field + 1 << " in '" << path << "'";
                throw IoError(os.str());
            }
            values.push_back(v);
            ++field;
            pos = comma + 1;
            if (comma == line.size()) break;
        }
        if (field != cols) {
            std::ostringstream os;
            os << "CSV line " << lineno << " has " << field << " fields, expected "
               << cols << " in '" << path << "'";
            throw IoError(os.str());
        }
        ++rows;
    }
    Matrix m(rows, cols, prec);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) m.set(i, j, values[i * cols + j]);
    return m;
}

void save_bundle(const std::string& path, const nlohmann::json& manifest,
                 const std::vector<const Matrix*>& matrices) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    put_bytes(os, "PSKB", 4);
    put_u32(os, 1);
    const std::string text = manifest.dump();
    put_u64(os, text.size());
    put_bytes(os, text.data(), text.size());
    put_u64(os, matrices.size());
    for (const Matrix* m : matrices) write_pskm(os, *m);
    if (!os) throw IoError("write failed for '" + path + "'");
}

Bundle load_bundle(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "' for reading");
    Reader r{is};
    char magic[4];
    r.bytes(magic, 4, "PSKB magic");
    if (std::memcmp(magic, "PSKB", 4) != 0)
        throw IoError("bad magic at offset 0 (expected PSKB) in '" + path + "'");
    const std::uint32_t version = r.u32("PSKB version");
    if (version != 1)
        throw IoError("unsupported PSKB version " + std::to_string(version) + " in '" +
                      path + "'");
    const std::uint64_t mlen = r.u64("manifest length");
    if (mlen > (1ull << 30))
        throw IoError("implausible manifest length at offset 8 in '" + path + "'");
    std::string text(static_cast<std::size_t>(mlen), '\0');
    if (mlen > 0) r.bytes(text.data(), text.size(), "manifest");
    Bundle b;
    try {
        b.manifest = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw IoError(std::string("manifest is not valid JSON: ") + e.what());
    }
    const std::uint64_t count = r.u64("matrix count");
    if (count > (1ull << 20))
        throw IoError("implausible matrix count in '" + path + "'");
    b.matrices.reserve(static_cast<std::size_t>(count));
    for (std::uint64_t i = 0; i < count; ++i) b.matrices.push_back(read_pskm_impl(r));
    return b;
}

} // namespace psk
