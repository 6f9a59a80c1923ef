#include "texsyn/ops.hpp"

#include <algorithm>
#include <string>

#include "texsyn/errors.hpp"
#include "texsyn/kernels.hpp"
#include "texsyn/parallel.hpp"

namespace texsyn {
namespace {

std::vector<double> pad_one(const FeatureTensor& in) {
    const std::size_t h = in.height(), w = in.width(), pw = w + 2;
    std::vector<double> padded(in.channels() * (h + 2) * pw, 0.0);
    for (std::size_t c = 0; c < in.channels(); ++c) {
        const double* src = in.channel(c).data();
        double* dst = padded.data() + c * (h + 2) * pw + pw + 1;
        for (std::size_t y = 0; y < h; ++y) std::copy_n(src + y * w, w, dst + y * pw);
    }
    return padded;
}

FeatureTensor run_conv(const FeatureTensor& in, const double* kernel, const double* bias,
                       std::size_t out_channels) {
    FeatureTensor out(out_channels, in.height(), in.width());
    const std::vector<double> padded = pad_one(in);
    const auto& kt = kernels::active();
    const std::size_t work = in.channels() * 9 * in.spatial();
    parallel_for(out_channels, work, [&](std::size_t begin, std::size_t end) {
        kt.conv3x3(padded.data(), in.channels(), in.height(), in.width(), kernel, bias, begin, end,
                   out.data());
    });
    return out;
}

}  // namespace

const char* pool_mode_name(PoolMode mode) { return mode == PoolMode::avg ? "avg" : "max"; }

PoolMode parse_pool_mode(std::string_view text) {
    if (text == "avg") return PoolMode::avg;
    if (text == "max") return PoolMode::max;
    throw ValidationError("unknown pooling mode '" + std::string(text) + "' (expected avg|max)");
}

FeatureTensor conv3x3_forward(const FeatureTensor& input, const ConvWeights& w) {
    if (input.channels() != w.in_channels)
        throw DimensionError("conv3x3_forward: input has " + std::to_string(input.channels()) +
                             " channels, weights expect " + std::to_string(w.in_channels));
    if (input.height() == 0 || input.width() == 0)
        throw DimensionError("conv3x3_forward: empty spatial extent");
    return run_conv(input, w.kernel.data(), w.bias.data(), w.out_channels);
}

FeatureTensor conv3x3_backward_input(const FeatureTensor& grad_out, const ConvWeights& w) {
    if (grad_out.channels() != w.out_channels)
        throw DimensionError("conv3x3_backward_input: gradient has " +
                             std::to_string(grad_out.channels()) + " channels, weights produce " +
                             std::to_string(w.out_channels));
    if (grad_out.height() == 0 || grad_out.width() == 0)
        throw DimensionError("conv3x3_backward_input: empty spatial extent");
    // Transposed, flipped kernel: flipped[c][o][dy][dx] = k[o][c][2-dy][2-dx].
    std::vector<double> flipped(w.kernel.size());
    for (std::size_t c = 0; c < w.in_channels; ++c)
        for (std::size_t o = 0; o < w.out_channels; ++o)
            for (std::size_t dy = 0; dy < 3; ++dy)
                for (std::size_t dx = 0; dx < 3; ++dx)
                    flipped[((c * w.out_channels + o) * 3 + dy) * 3 + dx] = w.k(o, c, 2 - dy, 2 - dx);
    return run_conv(grad_out, flipped.data(), nullptr, w.in_channels);
}

FeatureTensor relu_forward(const FeatureTensor& input) {
    FeatureTensor out(input.channels(), input.height(), input.width());
    kernels::active().relu(input.data(), out.data(), input.size());
    return out;
}

FeatureTensor relu_backward(const FeatureTensor& grad_out, const FeatureTensor& preactivation) {
    if (!grad_out.same_shape(preactivation))
        throw DimensionError("relu_backward: gradient " + grad_out.shape_string() +
                             " vs preactivation " + preactivation.shape_string());
    FeatureTensor out(grad_out.channels(), grad_out.height(), grad_out.width());
    kernels::active().relu_gate(grad_out.data(), preactivation.data(), out.data(), out.size());
    return out;
}

std::pair<FeatureTensor, PoolContext> pool2x2_forward(const FeatureTensor& input, PoolMode mode) {
    if (input.size() == 0) throw DimensionError("pool2x2_forward: zero-sized input");
    if (input.height() % 2 != 0 || input.width() % 2 != 0)
        throw DimensionError("pool2x2_forward: spatial size " + std::to_string(input.height()) +
                             "x" + std::to_string(input.width()) + " is not even");
    const std::size_t oh = input.height() / 2, ow = input.width() / 2, iw = input.width();
    FeatureTensor out(input.channels(), oh, ow);
    PoolContext ctx{mode, input.height(), input.width(), {}};
    if (mode == PoolMode::max) ctx.argmax.resize(out.size());
    for (std::size_t c = 0; c < input.channels(); ++c) {
        const double* src = input.channel(c).data();
        double* dst = out.channel(c).data();
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                const std::size_t base = 2 * y * iw + 2 * x;
                const std::size_t cells[4] = {base, base + 1, base + iw, base + iw + 1};
                if (mode == PoolMode::avg) {
                    dst[y * ow + x] =
                        (src[cells[0]] + src[cells[1]] + src[cells[2]] + src[cells[3]]) * 0.25;
                } else {
                    std::size_t best = cells[0];
                    for (std::size_t cell : cells)
                        if (src[cell] > src[best]) best = cell;
                    dst[y * ow + x] = src[best];
                    ctx.argmax[c * oh * ow + y * ow + x] =
                        static_cast<std::uint32_t>(c * input.spatial() + best);
                }
            }
        }
    }
    return {std::move(out), std::move(ctx)};
}

FeatureTensor pool2x2_backward(const FeatureTensor& grad_out, const PoolContext& ctx,
                               PoolMode mode) {
    if (ctx.mode != mode)
        throw UsageError(std::string("pool2x2_backward: context recorded ") +
                         pool_mode_name(ctx.mode) + " pooling, called with " +
                         pool_mode_name(mode));
    if (grad_out.height() * 2 != ctx.in_height || grad_out.width() * 2 != ctx.in_width)
        throw DimensionError("pool2x2_backward: gradient " + grad_out.shape_string() +
                             " does not match pooled input " + std::to_string(ctx.in_height) +
                             "x" + std::to_string(ctx.in_width));
    if (mode == PoolMode::max && ctx.argmax.size() != grad_out.size())
        throw UsageError("pool2x2_backward: max context has wrong argmax count");
    FeatureTensor grad_in(grad_out.channels(), ctx.in_height, ctx.in_width);
    const std::size_t oh = grad_out.height(), ow = grad_out.width(), iw = ctx.in_width;
    if (mode == PoolMode::max) {
        double* dst = grad_in.data();
        for (std::size_t i = 0; i < grad_out.size(); ++i) dst[ctx.argmax[i]] += grad_out.data()[i];
        return grad_in;
    }
    for (std::size_t c = 0; c < grad_out.channels(); ++c) {
        const double* src = grad_out.channel(c).data();
        double* dst = grad_in.channel(c).data();
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                const double g = src[y * ow + x] * 0.25;
                const std::size_t base = 2 * y * iw + 2 * x;
                dst[base] = g;
                dst[base + 1] = g;
                dst[base + iw] = g;
                dst[base + iw + 1] = g;
            }
        }
    }
    return grad_in;
}

}  // namespace texsyn
