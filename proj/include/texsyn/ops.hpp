#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

#include "texsyn/tensor.hpp"

namespace texsyn {

enum class PoolMode { avg, max };

const char* pool_mode_name(PoolMode mode);
PoolMode parse_pool_mode(std::string_view text);

// What pool2x2_backward needs from the forward pass.
struct PoolContext {
    PoolMode mode = PoolMode::avg;
    std::size_t in_height = 0;
    std::size_t in_width = 0;
    // max mode only: flat index into the input of each output's maximum
    std::vector<std::uint32_t> argmax;
};

// 3x3 convolution, stride 1, one pixel of zero padding: output has the
// input's spatial size and w.out_channels channels.
FeatureTensor conv3x3_forward(const FeatureTensor& input, const ConvWeights& w);

// Gradient with respect to the convolution input: a full correlation of
// grad_out with the spatially flipped, transposed kernels. Bias plays no part.
FeatureTensor conv3x3_backward_input(const FeatureTensor& grad_out, const ConvWeights& w);

FeatureTensor relu_forward(const FeatureTensor& input);

// grad_out where preactivation > 0, else 0 (including at exactly 0).
FeatureTensor relu_backward(const FeatureTensor& grad_out, const FeatureTensor& preactivation);

// Non-overlapping 2x2 pooling. Odd spatial sizes are rejected rather than
// cropped. Max ties go to the first maximum in row-major scan order.
std::pair<FeatureTensor, PoolContext> pool2x2_forward(const FeatureTensor& input, PoolMode mode);

FeatureTensor pool2x2_backward(const FeatureTensor& grad_out, const PoolContext& ctx,
                               PoolMode mode);

}  // namespace texsyn
