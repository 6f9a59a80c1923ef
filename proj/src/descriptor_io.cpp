// GRMD0001 descriptor files: magic "GRMD0001", u32 entry_count, then per
// entry: u16 name_len, name, u8 kind (0 gram, 1 pca, 2 mean), u32 n,
// u32 M_l, payload (gram/pca: n(n+1)/2 f64 upper triangle, row-major;
// mean: n f64). pca entries then append u32 k, u32 N_l, N_l f64 mean and
// k*N_l f64 basis rows.
//
// PCAB0001 basis files: magic "PCAB0001", u32 count, then per basis:
// u16 name_len, name, u32 k, u32 N_l, N_l f64 mean, k*N_l f64 basis rows.

#include <array>

#include "binio.hpp"
#include "texsyn/errors.hpp"
#include "texsyn/gram.hpp"

namespace texsyn {
namespace {

constexpr std::array<char, 8> kDescriptorMagic = {'G', 'R', 'M', 'D', '0', '0', '0', '1'};
constexpr std::array<char, 8> kBasisMagic = {'P', 'C', 'A', 'B', '0', '0', '0', '1'};
constexpr std::uint32_t kMaxDim = 1u << 16;

void expect_magic(binio::Reader& r, std::span<const std::uint8_t> bytes,
                  const std::array<char, 8>& magic) {
    std::array<char, 8> got{};
    if (bytes.size() < got.size()) throw ParseError("bad magic: file shorter than 8 bytes");
    r.bytes(got.data(), got.size());
    if (got != magic)
        throw ParseError("bad magic: expected " + std::string(magic.begin(), magic.end()));
}

std::uint32_t read_dim(binio::Reader& r, const char* what) {
    const std::uint32_t v = r.u32();
    if (v == 0 || v > kMaxDim)
        throw ParseError(std::string(what) + " = " + std::to_string(v) + " out of range");
    return v;
}

void write_basis_body(binio::Writer& w, const PCABasis& b) {
    w.u32(static_cast<std::uint32_t>(b.k));
    w.u32(static_cast<std::uint32_t>(b.features));
    for (double v : b.mean) w.f64(v);
    for (double v : b.basis) w.f64(v);
}

PCABasis read_basis_body(binio::Reader& r, std::string layer) {
    PCABasis b;
    b.layer = std::move(layer);
    b.k = read_dim(r, "k");
    b.features = read_dim(r, "N_l");
    if (b.k > b.features)
        throw ParseError("basis k = " + std::to_string(b.k) + " exceeds N_l = " +
                         std::to_string(b.features));
    r.need(b.features + b.k * b.features, sizeof(double));
    b.mean.resize(b.features);
    for (double& v : b.mean) v = r.f64();
    b.basis.resize(b.k * b.features);
    for (double& v : b.basis) v = r.f64();
    return b;
}

}  // namespace

std::vector<std::uint8_t> serialize_descriptor(const TextureDescriptor& descriptor) {
    binio::Writer w;
    w.bytes(kDescriptorMagic.data(), kDescriptorMagic.size());
    w.u32(static_cast<std::uint32_t>(descriptor.entries.size()));
    for (const DescriptorEntry& e : descriptor.entries) {
        w.name(e.layer);
        w.u8(static_cast<std::uint8_t>(e.kind));
        w.u32(static_cast<std::uint32_t>(e.n));
        w.u32(static_cast<std::uint32_t>(e.positions));
        if (e.kind == StatisticKind::mean) {
            if (e.mean.size() != e.n)
                throw UsageError("mean entry " + e.layer + " has " + std::to_string(e.mean.size()) +
                                 " values, n = " + std::to_string(e.n));
            for (double v : e.mean) w.f64(v);
            continue;
        }
        if (e.gram.n != e.n || e.gram.values.size() != e.n * e.n)
            throw UsageError("entry " + e.layer + " has a gram matrix that does not match n = " +
                             std::to_string(e.n));
        if (e.kind == StatisticKind::pca && !e.basis)
            throw UsageError("pca entry " + e.layer + " has no basis");
        for (std::size_t i = 0; i < e.n; ++i)
            for (std::size_t j = i; j < e.n; ++j) w.f64(e.gram(i, j));
        if (e.kind == StatisticKind::pca) write_basis_body(w, *e.basis);
    }
    return w.take();
}

TextureDescriptor parse_descriptor(std::span<const std::uint8_t> bytes) {
    binio::Reader r(bytes);
    r.set_context("header");
    expect_magic(r, bytes, kDescriptorMagic);
    const std::uint32_t count = r.u32();
    TextureDescriptor d;
    for (std::uint32_t idx = 0; idx < count; ++idx) {
        r.set_context("entry " + std::to_string(idx));
        DescriptorEntry e;
        e.layer = r.name();
        r.set_context("layer " + e.layer);
        const std::uint8_t kind = r.u8();
        if (kind > 2) throw ParseError("layer " + e.layer + ": unknown statistic kind " +
                                       std::to_string(kind));
        e.kind = static_cast<StatisticKind>(kind);
        e.n = read_dim(r, "n");
        e.positions = read_dim(r, "M_l");
        if (e.kind == StatisticKind::mean) {
            r.need(e.n, sizeof(double));
            e.mean.resize(e.n);
            for (double& v : e.mean) v = r.f64();
            e.features = e.n;
        } else {
            r.need(e.n * (e.n + 1) / 2, sizeof(double));
            e.gram = GramMatrix{e.n, std::vector<double>(e.n * e.n)};
            for (std::size_t i = 0; i < e.n; ++i)
                for (std::size_t j = i; j < e.n; ++j)
                    e.gram.values[i * e.n + j] = e.gram.values[j * e.n + i] = r.f64();
            e.features = e.n;
            if (e.kind == StatisticKind::pca) {
                e.basis = read_basis_body(r, e.layer);
                if (e.basis->k != e.n)
                    throw ParseError("layer " + e.layer + ": basis k = " +
                                     std::to_string(e.basis->k) + " but n = " +
                                     std::to_string(e.n));
                e.features = e.basis->features;
            }
        }
        d.entries.push_back(std::move(e));
    }
    if (r.remaining() != 0)
        throw ParseError("trailing bytes: " + std::to_string(r.remaining()) +
                         " bytes after the last entry");
    return d;
}

void save_descriptor(const TextureDescriptor& descriptor, const std::filesystem::path& path) {
    binio::write_file(path, serialize_descriptor(descriptor));
}

TextureDescriptor load_descriptor(const std::filesystem::path& path) {
    const auto bytes = binio::read_file(path);
    try {
        return parse_descriptor(bytes);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

std::vector<std::uint8_t> serialize_bases(std::span<const PCABasis> bases) {
    binio::Writer w;
    w.bytes(kBasisMagic.data(), kBasisMagic.size());
    w.u32(static_cast<std::uint32_t>(bases.size()));
    for (const PCABasis& b : bases) {
        w.name(b.layer);
        write_basis_body(w, b);
    }
    return w.take();
}

std::vector<PCABasis> parse_bases(std::span<const std::uint8_t> bytes) {
    binio::Reader r(bytes);
    r.set_context("header");
    expect_magic(r, bytes, kBasisMagic);
    const std::uint32_t count = r.u32();
    std::vector<PCABasis> out;
    for (std::uint32_t i = 0; i < count; ++i) {
        r.set_context("basis " + std::to_string(i));
        std::string name = r.name();
        r.set_context("basis " + name);
        out.push_back(read_basis_body(r, std::move(name)));
    }
    if (r.remaining() != 0) throw ParseError("trailing bytes after the last basis");
    return out;
}

void save_bases(std::span<const PCABasis> bases, const std::filesystem::path& path) {
    binio::write_file(path, serialize_bases(bases));
}

std::vector<PCABasis> load_bases(const std::filesystem::path& path) {
    const auto bytes = binio::read_file(path);
    try {
        return parse_bases(bytes);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

}  // namespace texsyn
