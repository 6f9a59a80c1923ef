#include "texsyn/imageio.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <string>

#include "binio.hpp"
#include "texsyn/errors.hpp"

namespace texsyn {
namespace {

constexpr std::size_t kMaxSide = 1u << 15;

[[noreturn]] void ppm_fail(const std::string& what, std::size_t offset) {
    throw ParseError("ppm: " + what + " at byte " + std::to_string(offset));
}

bool is_space(std::uint8_t c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

class HeaderScanner {
public:
    HeaderScanner(std::span<const std::uint8_t> bytes, std::size_t pos) : bytes_(bytes), pos_(pos) {}

    std::size_t pos() const noexcept { return pos_; }

    // Whitespace (at least one byte of it, or a comment) then any further
    // whitespace and comments.
    void separator(const char* after) {
        if (pos_ >= bytes_.size()) ppm_fail(std::string("truncated header after ") + after, pos_);
        if (!is_space(bytes_[pos_]) && bytes_[pos_] != '#')
            ppm_fail(std::string("expected whitespace after ") + after, pos_);
        while (pos_ < bytes_.size()) {
            if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n' && bytes_[pos_] != '\r') ++pos_;
            } else if (is_space(bytes_[pos_])) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    std::size_t number(const char* what) {
        const std::size_t start = pos_;
        if (pos_ >= bytes_.size()) ppm_fail(std::string("truncated header, expected ") + what, start);
        if (bytes_[pos_] < '0' || bytes_[pos_] > '9') ppm_fail(std::string("expected ") + what, start);
        std::size_t v = 0;
        while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
            v = v * 10 + (bytes_[pos_] - '0');
            if (v > 1'000'000) ppm_fail(std::string(what) + " is too large", start);
            ++pos_;
        }
        return v;
    }

    void single_space() {
        if (pos_ >= bytes_.size()) ppm_fail("truncated header after maxval", pos_);
        if (!is_space(bytes_[pos_])) ppm_fail("expected whitespace after maxval", pos_);
        ++pos_;
    }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_;
};

std::size_t source_channel(ChannelOrder order, std::size_t t) {
    return order == ChannelOrder::rgb ? t : 2 - t;
}

}  // namespace

Image8 parse_ppm(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6')
        ppm_fail("not a binary PPM (expected P6 magic)", 0);
    HeaderScanner s(bytes, 2);
    s.separator("magic");
    const std::size_t width_at = s.pos();
    const std::size_t width = s.number("width");
    s.separator("width");
    const std::size_t height_at = s.pos();
    const std::size_t height = s.number("height");
    s.separator("height");
    const std::size_t maxval_at = s.pos();
    const std::size_t maxval = s.number("maxval");
    if (maxval != 255) ppm_fail("unsupported maxval " + std::to_string(maxval), maxval_at);
    s.single_space();
    if (width == 0 || width > kMaxSide) ppm_fail("width out of range", width_at);
    if (height == 0 || height > kMaxSide) ppm_fail("height out of range", height_at);

    const std::size_t payload = 3 * width * height;
    const std::size_t at = s.pos();
    if (bytes.size() - at < payload)
        ppm_fail("truncated pixel data: expected " + std::to_string(payload) + " bytes, found " +
                     std::to_string(bytes.size() - at),
                 at);
    if (bytes.size() - at > payload) ppm_fail("trailing bytes after pixel data", at + payload);
    Image8 img{height, width, {}};
    img.rgb.assign(bytes.begin() + static_cast<std::ptrdiff_t>(at),
                   bytes.begin() + static_cast<std::ptrdiff_t>(at + payload));
    return img;
}

std::vector<std::uint8_t> encode_ppm(const Image8& image) {
    if (image.rgb.size() != 3 * image.height * image.width)
        throw DimensionError("image has " + std::to_string(image.rgb.size()) +
                             " samples, expected 3 * " + std::to_string(image.height) + " * " +
                             std::to_string(image.width));
    const std::string header =
        "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), image.rgb.begin(), image.rgb.end());
    return out;
}

Image8 load_ppm(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
        throw ValidationError("image '" + path.string() + "' does not exist");
    const auto bytes = binio::read_file(path);
    try {
        return parse_ppm(bytes);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void save_ppm(const Image8& image, const std::filesystem::path& path) {
    binio::write_file(path, encode_ppm(image));
}

FeatureTensor preprocess(const Image8& image, const PreprocessSpec& spec) {
    if (!(spec.scale > 0.0)) throw ValidationError("preprocess scale must be positive");
    if (image.rgb.size() != 3 * image.height * image.width)
        throw DimensionError("image sample count does not match its dimensions");
    FeatureTensor t(3, image.height, image.width);
    const std::size_t m = image.height * image.width;
    for (std::size_t c = 0; c < 3; ++c) {
        const std::size_t src = source_channel(spec.channel_order, c);
        auto dst = t.channel(c);
        for (std::size_t p = 0; p < m; ++p)
            dst[p] = static_cast<double>(image.rgb[3 * p + src]) * spec.scale - spec.channel_means[c];
    }
    return t;
}

Image8 postprocess(const FeatureTensor& tensor, const PreprocessSpec& spec) {
    if (tensor.channels() != 3)
        throw DimensionError("postprocess needs 3 channels, got " + tensor.shape_string());
    if (!(spec.scale > 0.0)) throw ValidationError("preprocess scale must be positive");
    Image8 img{tensor.height(), tensor.width(), std::vector<std::uint8_t>(3 * tensor.spatial())};
    for (std::size_t c = 0; c < 3; ++c) {
        const std::size_t dst = source_channel(spec.channel_order, c);
        auto src = tensor.channel(c);
        for (std::size_t p = 0; p < src.size(); ++p) {
            double v = std::round((src[p] + spec.channel_means[c]) / spec.scale);
            if (!(v > 0.0)) v = 0.0;  // also maps NaN to 0
            if (v > 255.0) v = 255.0;
            img.rgb[3 * p + dst] = static_cast<std::uint8_t>(v);
        }
    }
    return img;
}

std::filesystem::path sidecar_path(const std::filesystem::path& weights) {
    return std::filesystem::path(weights.string() + ".json");
}

std::optional<PreprocessSpec> read_preprocess_sidecar(const std::filesystem::path& weights) {
    const auto path = sidecar_path(weights);
    if (!std::filesystem::exists(path)) return std::nullopt;
    std::ifstream in(path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    PreprocessSpec spec = PreprocessSpec::vgg19();
    try {
        if (j.contains("channel_order")) {
            const std::string order = j.at("channel_order").get<std::string>();
            if (order == "rgb") spec.channel_order = ChannelOrder::rgb;
            else if (order == "bgr") spec.channel_order = ChannelOrder::bgr;
            else throw ParseError(path.string() + ": unknown channel_order '" + order + "'");
        }
        if (j.contains("preprocessing_means")) {
            const auto means = j.at("preprocessing_means").get<std::vector<double>>();
            if (means.size() != 3)
                throw ParseError(path.string() + ": preprocessing_means needs 3 values");
            std::copy(means.begin(), means.end(), spec.channel_means.begin());
        }
        if (j.contains("scale")) spec.scale = j.at("scale").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    if (!(spec.scale > 0.0)) throw ParseError(path.string() + ": scale must be positive");
    return spec;
}

}  // namespace texsyn
