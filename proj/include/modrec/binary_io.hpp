// SPDX-License-Identifier: Apache-2.0
#pragma once

// Little-endian byte streams shared by the dataset and model containers.

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "modrec/error.hpp"

namespace modrec {

static_assert(std::endian::native == std::endian::little, "byte streams assume a little-endian host");

class ByteWriter {
public:
    template <typename T>
        requires std::is_arithmetic_v<T>
    void put(T v) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
        buf_.insert(buf_.end(), p, p + sizeof(T));
    }

    void put_bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }

    void put_string(const std::string& s) {
        put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
        buf_.insert(buf_.end(), s.begin(), s.end());
    }

    template <typename T>
    void put_vector(std::span<const T> v) {
        put<std::uint64_t>(v.size());
        for (const T& x : v) put<T>(x);
    }

    const std::vector<std::uint8_t>& bytes() const noexcept { return buf_; }
    std::vector<std::uint8_t> take() noexcept { return std::move(buf_); }

private:
    std::vector<std::uint8_t> buf_;
};

/// Bounds-checked reader; every failure reports the offset where it happened.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    template <typename T>
        requires std::is_arithmetic_v<T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    std::span<const std::uint8_t> get_bytes(std::size_t n) {
        need(n);
        auto s = data_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    std::string get_string(std::size_t max_len = 1u << 24) {
        const std::size_t at = pos_;
        const auto n = get<std::uint32_t>();
        if (n > max_len) throw ParseError("string length " + std::to_string(n) + " exceeds limit", at);
        auto b = get_bytes(n);
        return {b.begin(), b.end()};
    }

    template <typename T>
    std::vector<T> get_vector(std::size_t max_len) {
        const std::size_t at = pos_;
        const auto n = get<std::uint64_t>();
        if (n > max_len || n > remaining() / sizeof(T))
            throw ParseError("vector length " + std::to_string(n) + " is implausible", at);
        std::vector<T> v(static_cast<std::size_t>(n));
        for (auto& x : v) x = get<T>();
        return v;
    }

    std::size_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return data_.size() - pos_; }
    bool at_end() const noexcept { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw ParseError("unexpected end", data_.size());
    }

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error("write failed for " + path.string());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline std::string sha256_hex(std::span<const std::uint8_t> data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error("sha256 failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 15]);
    }
    return out;
}

inline std::string sha256_hex(const std::string& text) {
    return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// ---------------------------------------------------------------------------
// Model container: "RMM1", version u16, kind string, then a kind-specific body.

inline constexpr char model_magic[4] = {'R', 'M', 'M', '1'};
inline constexpr std::uint16_t model_version = 1;

inline void begin_model(ByteWriter& w, const std::string& kind) {
    for (char c : model_magic) w.put<std::uint8_t>(static_cast<std::uint8_t>(c));
    w.put<std::uint16_t>(model_version);
    w.put_string(kind);
}

/// Validates the container header and returns the model kind.
inline std::string open_model(ByteReader& r) {
    const auto magic = r.get_bytes(4);
    if (!std::equal(magic.begin(), magic.end(), model_magic)) throw ParseError("not a model file (bad magic)", 0);
    const std::size_t at = r.offset();
    const auto version = r.get<std::uint16_t>();
    if (version != model_version) throw ParseError("unsupported model version " + std::to_string(version), at);
    return r.get_string(64);
}

/// Peeks at the kind stored in a model file.
inline std::string model_kind(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    return open_model(r);
}

} // namespace modrec
