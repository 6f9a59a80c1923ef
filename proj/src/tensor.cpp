#include "texsyn/tensor.hpp"

#include <cmath>

#include "texsyn/errors.hpp"

namespace texsyn {

FeatureTensor::FeatureTensor(std::size_t channels, std::size_t height, std::size_t width,
                             double fill)
    : channels_(channels), height_(height), width_(width),
      data_(channels * height * width, fill) {}

FeatureTensor::FeatureTensor(std::size_t channels, std::size_t height, std::size_t width,
                             std::vector<double> data)
    : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
    if (data_.size() != channels * height * width)
        throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_string());
}

std::string FeatureTensor::shape_string() const {
    return std::to_string(channels_) + "x" + std::to_string(height_) + "x" +
           std::to_string(width_);
}

bool FeatureTensor::all_finite() const noexcept {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

ConvWeights::ConvWeights(std::size_t out, std::size_t in)
    : out_channels(out), in_channels(in), kernel(out * in * kTaps, 0.0), bias(out, 0.0) {}

void ConvWeights::validate() const {
    if (kernel.size() != out_channels * in_channels * kTaps || bias.size() != out_channels)
        throw DimensionError("conv weights buffers do not match " + std::to_string(out_channels) +
                             "x" + std::to_string(in_channels) + "x3x3");
    for (double v : kernel)
        if (!std::isfinite(v)) throw ValidationError("non-finite kernel value");
    for (double v : bias)
        if (!std::isfinite(v)) throw ValidationError("non-finite bias value");
}

}  // namespace texsyn
