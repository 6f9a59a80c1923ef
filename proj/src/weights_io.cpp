// CNNW0001: magic "CNNW0001", u32 layer_count, then per conv layer in spec
// order: u16 name_len, name bytes, u32 out_channels, u32 in_channels,
// out*in*9 f32 kernel values ([out][in][row][col]), out f32 biases.
// All integers little-endian. Trailing bytes are an error.

#include <array>
#include <cmath>
#include <cstring>

#include "binio.hpp"
#include "texsyn/errors.hpp"
#include "texsyn/network.hpp"

namespace texsyn {
namespace {

constexpr std::array<char, 8> kMagic = {'C', 'N', 'N', 'W', '0', '0', '0', '1'};

}  // namespace

std::vector<std::uint8_t> serialize_weights(const Network& network) {
    network.validate();
    binio::Writer w;
    w.bytes(kMagic.data(), kMagic.size());
    w.u32(static_cast<std::uint32_t>(network.weights.size()));
    std::size_t wi = 0;
    for (const LayerSpec& l : network.spec.layers()) {
        if (l.kind != LayerKind::conv_relu) continue;
        const ConvWeights& cw = network.weights[wi++];
        w.name(l.name);
        w.u32(static_cast<std::uint32_t>(cw.out_channels));
        w.u32(static_cast<std::uint32_t>(cw.in_channels));
        for (double v : cw.kernel) w.f32(static_cast<float>(v));
        for (double v : cw.bias) w.f32(static_cast<float>(v));
    }
    return w.take();
}

Network parse_weights(std::span<const std::uint8_t> bytes, const NetworkSpec& spec) {
    binio::Reader r(bytes);
    r.set_context("header");
    std::array<char, 8> magic{};
    if (bytes.size() < magic.size()) throw ParseError("bad magic: file shorter than 8 bytes");
    r.bytes(magic.data(), magic.size());
    if (magic != kMagic) throw ParseError("bad magic: not a CNNW0001 weight file");
    const std::uint32_t count = r.u32();
    if (count != spec.conv_count())
        throw ParseError("weight file has " + std::to_string(count) + " layers, spec expects " +
                         std::to_string(spec.conv_count()));

    Network net{spec, {}};
    for (const LayerSpec& l : spec.layers()) {
        if (l.kind != LayerKind::conv_relu) continue;
        r.set_context("layer " + l.name);
        const std::string name = r.name();
        if (name != l.name)
            throw ParseError("layer " + l.name + ": file has layer named '" + name +
                             "' in its place");
        const std::uint32_t out = r.u32();
        const std::uint32_t in = r.u32();
        if (out != l.out_channels || in != l.in_channels)
            throw ParseError("layer " + l.name + ": dims " + std::to_string(out) + "x" +
                             std::to_string(in) + " in file, spec expects " +
                             std::to_string(l.out_channels) + "x" + std::to_string(l.in_channels));
        ConvWeights cw(out, in);
        r.need(cw.kernel.size() + cw.bias.size(), sizeof(float));
        for (double& v : cw.kernel) v = r.f32();
        for (double& v : cw.bias) v = r.f32();
        for (double v : cw.kernel)
            if (!std::isfinite(v)) throw ParseError("layer " + l.name + ": non-finite kernel value");
        for (double v : cw.bias)
            if (!std::isfinite(v)) throw ParseError("layer " + l.name + ": non-finite bias value");
        net.weights.push_back(std::move(cw));
    }
    if (r.remaining() != 0)
        throw ParseError("trailing bytes: " + std::to_string(r.remaining()) +
                         " bytes after the last layer");
    return net;
}

Network load_weights(const std::filesystem::path& path, const NetworkSpec& spec) {
    if (!std::filesystem::exists(path))
        throw ValidationError("weights file '" + path.string() + "' does not exist");
    const std::vector<std::uint8_t> bytes = binio::read_file(path);
    try {
        return parse_weights(bytes, spec);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void save_weights(const Network& network, const std::filesystem::path& path) {
    binio::write_file(path, serialize_weights(network));
}

}  // namespace texsyn
