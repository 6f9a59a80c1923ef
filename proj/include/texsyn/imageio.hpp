#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "texsyn/tensor.hpp"

namespace texsyn {

// Interleaved 8-bit RGB.
struct Image8 {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> rgb;

    friend bool operator==(const Image8&, const Image8&) = default;
};

enum class ChannelOrder { rgb, bgr };

// tensor[t] = sample(order[t]) * scale - channel_means[t]; means are given in
// tensor channel order.
struct PreprocessSpec {
    std::array<double, 3> channel_means{0.0, 0.0, 0.0};
    ChannelOrder channel_order = ChannelOrder::rgb;
    double scale = 1.0;

    static PreprocessSpec identity() { return {}; }
    // Convention of the published VGG-19 weights: BGR, scale 1, ImageNet means.
    static PreprocessSpec vgg19() { return {{103.939, 116.779, 123.68}, ChannelOrder::bgr, 1.0}; }
};

// Binary P6 with maxval 255 only. Header comments are accepted.
Image8 parse_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_ppm(const Image8& image);
Image8 load_ppm(const std::filesystem::path& path);
void save_ppm(const Image8& image, const std::filesystem::path& path);

FeatureTensor preprocess(const Image8& image, const PreprocessSpec& spec);

// Inverse of preprocess, rounding half away from zero and clamping to [0, 255].
Image8 postprocess(const FeatureTensor& tensor, const PreprocessSpec& spec);

// "<weights>.json", the metadata file written next to a weight file.
std::filesystem::path sidecar_path(const std::filesystem::path& weights);

// Preprocessing recorded in a weight file's sidecar, if the sidecar exists.
std::optional<PreprocessSpec> read_preprocess_sidecar(const std::filesystem::path& weights);

}  // namespace texsyn
