#include "binio.hpp"

#include <fstream>
#include <iterator>

namespace texsyn::binio {

void Writer::name(std::string_view s) {
    if (s.size() > 0xFFFF) throw ValidationError("name too long for u16 length prefix");
    u16(static_cast<std::uint16_t>(s.size()));
    bytes(s.data(), s.size());
}

void Reader::truncated(std::size_t wanted) const {
    std::string where = context_.empty() ? std::string() : " in " + context_;
    throw ParseError("truncated file" + where + ": needed " + std::to_string(wanted) +
                     " bytes at offset " + std::to_string(pos_) + ", " +
                     std::to_string(remaining()) + " available");
}

void Reader::bytes(void* out, std::size_t n) {
    if (remaining() < n) truncated(n);
    std::memcpy(out, data_.data() + pos_, n);
    pos_ += n;
}

std::string Reader::name() {
    const std::uint16_t len = u16();
    std::string s(len, '\0');
    bytes(s.data(), len);
    return s;
}

void Reader::need(std::size_t count, std::size_t item_size) {
    if (item_size != 0 && count > remaining() / item_size) truncated(count * item_size);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open '" + path.string() + "' for reading");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ValidationError("failed writing '" + path.string() + "'");
}

}  // namespace texsyn::binio
