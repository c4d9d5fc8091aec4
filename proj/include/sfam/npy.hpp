#pragma once

#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "sfam/activation_map.hpp"
#include "sfam/tensor.hpp"

namespace sfam {

static_assert(std::endian::native == std::endian::little, "NPY I/O assumes a little-endian host");

/// Parsed contents of an NPY v1.0 file after dtype narrowing to f4.
struct NpyArray {
    std::vector<std::size_t> shape;
    std::vector<float> data;
};

namespace npy {

inline constexpr char kMagic[] = "\x93NUMPY";
inline constexpr std::size_t kMagicLen = 6;

struct Header {
    std::string descr;
    bool fortran_order = false;
    std::vector<std::size_t> shape;
};

class HeaderParser {
public:
    HeaderParser(std::string text, std::string context) : s_(std::move(text)), ctx_(std::move(context)) {}

    Header parse() {
        Header h;
        bool have_descr = false, have_order = false, have_shape = false;
        expect('{');
        while (true) {
            skip_ws();
            if (peek() == '}') break;
            const std::string key = quoted();
            expect(':');
            if (key == "descr") {
                h.descr = quoted();
                have_descr = true;
            } else if (key == "fortran_order") {
                h.fortran_order = boolean();
                have_order = true;
            } else if (key == "shape") {
                h.shape = tuple();
                have_shape = true;
            } else {
                fail("unexpected header key '" + key + "'");
            }
            skip_ws();
            if (peek() == ',') ++pos_;
        }
        if (!have_descr) fail("header missing 'descr'");
        if (!have_order) fail("header missing 'fortran_order'");
        if (!have_shape) fail("header missing 'shape'");
        return h;
    }

private:
    [[noreturn]] void fail(const std::string &what) const { throw Error(ctx_ + ": " + what); }

    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    char peek() {
        skip_ws();
        if (pos_ >= s_.size()) fail("truncated header");
        return s_[pos_];
    }
    void expect(char c) {
        if (peek() != c) fail(std::string("malformed header, expected '") + c + "'");
        ++pos_;
    }
    std::string quoted() {
        const char q = peek();
        if (q != '\'' && q != '"') fail("malformed header, expected quoted string");
        const auto end = s_.find(q, pos_ + 1);
        if (end == std::string::npos) fail("malformed header, unterminated string");
        std::string out = s_.substr(pos_ + 1, end - pos_ - 1);
        pos_ = end + 1;
        return out;
    }
    bool boolean() {
        skip_ws();
        if (s_.compare(pos_, 4, "True") == 0) {
            pos_ += 4;
            return true;
        }
        if (s_.compare(pos_, 5, "False") == 0) {
            pos_ += 5;
            return false;
        }
        fail("fortran_order must be True or False");
    }
    std::vector<std::size_t> tuple() {
        expect('(');
        std::vector<std::size_t> dims;
        while (peek() != ')') {
            if (!std::isdigit(static_cast<unsigned char>(s_[pos_]))) fail("shape entries must be integers");
            std::size_t v = 0;
            while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_])))
                v = v * 10 + static_cast<std::size_t>(s_[pos_++] - '0');
            dims.push_back(v);
            if (peek() == ',') ++pos_;
        }
        ++pos_;
        return dims;
    }

    std::string s_;
    std::string ctx_;
    std::size_t pos_ = 0;
};

inline std::string shape_literal(const std::vector<std::size_t> &shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        s += std::to_string(shape[i]);
        if (shape.size() == 1 || i + 1 < shape.size()) s += shape.size() == 1 ? "," : ", ";
    }
    return s + ")";
}

}  // namespace npy

inline NpyArray read_npy(const std::filesystem::path &path) {
    const std::string ctx = path.string();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ctx + ": cannot open for reading");

    char prefix[10];
    if (!in.read(prefix, sizeof prefix)) throw Error(ctx + ": truncated preamble");
    if (std::memcmp(prefix, npy::kMagic, npy::kMagicLen) != 0) throw Error(ctx + ": bad magic, not an NPY file");
    const auto major = static_cast<unsigned char>(prefix[6]);
    const auto minor = static_cast<unsigned char>(prefix[7]);
    if (major != 1 || minor != 0)
        throw Error(ctx + ": unsupported version " + std::to_string(major) + "." + std::to_string(minor) +
                    " (requires 1.0)");
    const std::size_t header_len =
        static_cast<unsigned char>(prefix[8]) | (static_cast<std::size_t>(static_cast<unsigned char>(prefix[9])) << 8);
    std::string header_text(header_len, '\0');
    if (!in.read(header_text.data(), static_cast<std::streamsize>(header_len))) throw Error(ctx + ": truncated header");

    const npy::Header h = npy::HeaderParser(header_text, ctx).parse();
    if (h.fortran_order) throw Error(ctx + ": fortran_order=True; requires C-contiguous data");
    std::size_t item = 0;
    if (h.descr == "<f4" || h.descr == "=f4")
        item = 4;
    else if (h.descr == "<f8" || h.descr == "=f8")
        item = 8;
    else
        throw Error(ctx + ": unsupported dtype descr '" + h.descr + "' (expected little-endian f4 or f8)");

    std::size_t count = 1;
    for (auto d : h.shape) count *= d;
    std::vector<char> raw(count * item);
    if (!in.read(raw.data(), static_cast<std::streamsize>(raw.size()))) throw Error(ctx + ": truncated data section");

    NpyArray out{h.shape, std::vector<float>(count)};
    if (item == 4) {
        std::memcpy(out.data.data(), raw.data(), raw.size());
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            double d;
            std::memcpy(&d, raw.data() + i * 8, 8);
            out.data[i] = static_cast<float>(d);
        }
    }
    return out;
}

/// Writes f4, C-order, NPY v1.0 with the header padded to a 64-byte boundary.
/// Missing parent directories are created.
inline void write_npy(const std::filesystem::path &path, const std::vector<std::size_t> &shape,
                      std::span<const float> data) {
    std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': " + npy::shape_literal(shape) + ", }";
    const std::size_t unpadded = 10 + header.size() + 1;
    header.append((64 - unpadded % 64) % 64, ' ');
    header.push_back('\n');

    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) throw Error(path.string() + ": cannot create directory: " + ec.message());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(path.string() + ": cannot open for writing");
    out.write(npy::kMagic, npy::kMagicLen);
    const char version[2] = {1, 0};
    out.write(version, 2);
    const char len[2] = {static_cast<char>(header.size() & 0xff), static_cast<char>((header.size() >> 8) & 0xff)};
    out.write(len, 2);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char *>(data.data()), static_cast<std::streamsize>(data.size_bytes()));
    if (!out) throw Error(path.string() + ": write failed");
}

using Tensor = std::variant<FeatureMap, EmbeddingVector>;

/// Rank 3 loads as a FeatureMap, rank 1 as an EmbeddingVector.
inline Tensor read_tensor(const std::filesystem::path &path) {
    NpyArray a = read_npy(path);
    if (a.shape.size() == 3) return FeatureMap(a.shape[0], a.shape[1], a.shape[2], std::move(a.data));
    if (a.shape.size() == 1) return EmbeddingVector(std::move(a.data));
    throw Error(path.string() + ": rank must be 1 or 3, got " + std::to_string(a.shape.size()));
}

inline FeatureMap read_feature_map(const std::filesystem::path &path) {
    Tensor t = read_tensor(path);
    if (auto *fm = std::get_if<FeatureMap>(&t)) return std::move(*fm);
    throw Error(path.string() + ": expected a rank-3 feature map");
}

inline void write_tensor(const std::filesystem::path &path, const FeatureMap &map) {
    write_npy(path, {map.channels(), map.height(), map.width()}, map.values());
}

inline void write_tensor(const std::filesystem::path &path, const EmbeddingVector &v) {
    write_npy(path, {v.size()}, v.values());
}

/// Activation maps are stored as rank-2 arrays (H, W).
inline void write_tensor(const std::filesystem::path &path, const ActivationMap &map) {
    write_npy(path, {map.height(), map.width()}, map.values());
}

}  // namespace sfam
