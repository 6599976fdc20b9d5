#pragma once

// Little-endian encode/decode for the fixed-layout binary artifacts.

#include "cotlab/errors.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>

namespace cotlab::detail {

inline void save_bytes(std::string_view bytes, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

class ByteWriter {
public:
    void magic(std::string_view m) { buf_.append(m); }

    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void zeros(std::size_t n) { buf_.append(n, '\0'); }

    const std::string& bytes() const noexcept { return buf_; }

    void save(const std::filesystem::path& path) const { save_bytes(buf_, path); }

private:
    std::string buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::string bytes, std::string source)
        : buf_(std::move(bytes)), source_(std::move(source)) {}

    static ByteReader load(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open " + path.string());
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return ByteReader(std::move(bytes), path.string());
    }

    void expect_magic(std::string_view m) {
        need(m.size());
        if (std::string_view(buf_).substr(pos_, m.size()) != m)
            throw IoError(source_ + ": bad magic, expected " + std::string(m));
        pos_ += m.size();
    }

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    void skip(std::size_t n) {
        need(n);
        pos_ += n;
    }

    std::size_t remaining() const noexcept { return buf_.size() - pos_; }
    const std::string& source() const noexcept { return source_; }

private:
    void need(std::size_t n) const {
        if (buf_.size() - pos_ < n) throw IoError(source_ + ": truncated file");
    }

    std::string buf_;
    std::string source_;
    std::size_t pos_ = 0;
};

}  // namespace cotlab::detail
