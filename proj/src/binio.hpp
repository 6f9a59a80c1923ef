#pragma once

// Little-endian readers/writers shared by the weight and descriptor formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "texsyn/errors.hpp"

namespace texsyn::binio {

static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u16(std::uint16_t v) { bytes(&v, 2); }
    void u32(std::uint32_t v) { bytes(&v, 4); }
    void f32(float v) { bytes(&v, 4); }
    void f64(double v) { bytes(&v, 8); }
    void name(std::string_view s);
    std::vector<std::uint8_t> take() { return std::move(buf_); }

private:
    std::vector<std::uint8_t> buf_;
};

// Reader that reports truncation through a caller-supplied context string
// (for example "layer conv2_1") so errors say where the file went wrong.
class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

    void set_context(std::string ctx) { context_ = std::move(ctx); }
    std::size_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return data_.size() - pos_; }

    void bytes(void* out, std::size_t n);
    std::uint8_t u8() { std::uint8_t v; bytes(&v, 1); return v; }
    std::uint16_t u16() { std::uint16_t v; bytes(&v, 2); return v; }
    std::uint32_t u32() { std::uint32_t v; bytes(&v, 4); return v; }
    float f32() { float v; bytes(&v, 4); return v; }
    double f64() { double v; bytes(&v, 8); return v; }
    std::string name();
    // Fails unless `count` items of `item_size` bytes are still available.
    void need(std::size_t count, std::size_t item_size);

private:
    [[noreturn]] void truncated(std::size_t wanted) const;

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
    std::string context_;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace texsyn::binio
