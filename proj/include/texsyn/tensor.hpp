#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace texsyn {

// channels x height x width activations, stored channel-major then row-major.
// As a matrix this is F with N = channels rows and M = height * width columns.
class FeatureTensor {
public:
    FeatureTensor() = default;
    FeatureTensor(std::size_t channels, std::size_t height, std::size_t width, double fill = 0.0);
    FeatureTensor(std::size_t channels, std::size_t height, std::size_t width,
                  std::vector<double> data);

    std::size_t channels() const noexcept { return channels_; }
    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t spatial() const noexcept { return height_ * width_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& at(std::size_t c, std::size_t y, std::size_t x) {
        return data_[(c * height_ + y) * width_ + x];
    }
    double at(std::size_t c, std::size_t y, std::size_t x) const {
        return data_[(c * height_ + y) * width_ + x];
    }

    std::span<double> channel(std::size_t c) { return {data_.data() + c * spatial(), spatial()}; }
    std::span<const double> channel(std::size_t c) const {
        return {data_.data() + c * spatial(), spatial()};
    }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }

    bool same_shape(const FeatureTensor& other) const noexcept {
        return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
    }
    std::string shape_string() const;

    bool all_finite() const noexcept;

    friend bool operator==(const FeatureTensor&, const FeatureTensor&) = default;

private:
    std::size_t channels_ = 0;
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<double> data_;
};

// 3x3 filters for one convolution layer. kernel is laid out
// [out][in][row][col]; bias has one entry per output channel.
struct ConvWeights {
    std::size_t out_channels = 0;
    std::size_t in_channels = 0;
    std::vector<double> kernel;
    std::vector<double> bias;

    ConvWeights() = default;
    ConvWeights(std::size_t out, std::size_t in);

    static constexpr std::size_t kTaps = 9;

    double& k(std::size_t o, std::size_t c, std::size_t dy, std::size_t dx) {
        return kernel[((o * in_channels + c) * 3 + dy) * 3 + dx];
    }
    double k(std::size_t o, std::size_t c, std::size_t dy, std::size_t dx) const {
        return kernel[((o * in_channels + c) * 3 + dy) * 3 + dx];
    }

    // Throws DimensionError if the buffers disagree with the declared counts
    // and ValidationError if any value is not finite.
    void validate() const;

    friend bool operator==(const ConvWeights&, const ConvWeights&) = default;
};

}  // namespace texsyn
