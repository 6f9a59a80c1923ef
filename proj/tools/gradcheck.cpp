#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "texsyn/gram.hpp"
#include "texsyn/network.hpp"
#include "texsyn/ops.hpp"
#include "texsyn/synth.hpp"

namespace texsyn::tools {
namespace {

constexpr std::size_t kSamples = 50;

using Scalar = std::function<double(const FeatureTensor&)>;

FeatureTensor random_tensor(std::mt19937_64& rng, std::size_t c, std::size_t h, std::size_t w,
                            double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    FeatureTensor t(c, h, w);
    for (double& v : t.values()) v = u(rng);
    return t;
}

// Values in +-[0.001, 1] with random sign: far enough from the ReLU kink
// that a step of 1e-6 never crosses it.
FeatureTensor signed_away_from_zero(std::mt19937_64& rng, std::size_t c, std::size_t h,
                                    std::size_t w) {
    FeatureTensor t = random_tensor(rng, c, h, w, 1e-3, 1.0);
    std::bernoulli_distribution flip(0.4);
    for (double& v : t.values())
        if (flip(rng)) v = -v;
    return t;
}

GradCheck compare(std::string name, const Scalar& f, const FeatureTensor& x,
                  const FeatureTensor& analytic, double step, double tolerance,
                  std::mt19937_64& rng) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    double scale = 0.0;
    for (double v : analytic.values()) scale = std::max(scale, std::abs(v));

    GradCheck out{std::move(name), 0, 0, 0.0, tolerance};
    FeatureTensor probe = x;
    const double center = f(x);
    for (std::size_t i : order) {
        if (out.samples == kSamples) break;
        const double saved = probe.data()[i];
        probe.data()[i] = saved + step;
        const double up = f(probe);
        probe.data()[i] = saved - step;
        const double down = f(probe);
        probe.data()[i] = saved;
        // One-sided slopes that disagree at first order mean the step
        // straddles a ReLU or max-pool kink; such a sample says nothing.
        const double fwd = up - center, bwd = center - down;
        if (std::abs(fwd - bwd) > 1e-2 * std::max(std::abs(fwd), std::abs(bwd))) {
            ++out.skipped;
            continue;
        }
        const double numeric = (up - down) / (2.0 * step);
        const double a = analytic.data()[i];
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8 * scale, 1e-300});
        out.max_rel_error = std::max(out.max_rel_error, std::abs(a - numeric) / denom);
        ++out.samples;
    }
    return out;
}

// 0.5 * sum q .* y^2 and its gradient q .* y.
double quadratic(const FeatureTensor& y, const FeatureTensor& q) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += 0.5 * q.data()[i] * y.data()[i] * y.data()[i];
    return s;
}

FeatureTensor quadratic_grad(const FeatureTensor& y, const FeatureTensor& q) {
    FeatureTensor g(y.channels(), y.height(), y.width());
    for (std::size_t i = 0; i < y.size(); ++i) g.data()[i] = q.data()[i] * y.data()[i];
    return g;
}

ConvWeights random_conv(std::mt19937_64& rng, std::size_t out, std::size_t in) {
    std::normal_distribution<double> n(0.0, 0.5);
    ConvWeights w(out, in);
    for (double& v : w.kernel) v = n(rng);
    for (double& v : w.bias) v = n(rng);
    return w;
}

}  // namespace

std::vector<GradCheck> run_gradcheck(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<GradCheck> out;

    {  // conv3x3 adjoint, 2 -> 3 channels
        const ConvWeights w = random_conv(rng, 3, 2);
        const FeatureTensor x = random_tensor(rng, 2, 5, 6, -1.0, 1.0);
        const FeatureTensor q = random_tensor(rng, 3, 5, 6, 0.5, 1.5);
        const Scalar f = [&](const FeatureTensor& in) { return quadratic(conv3x3_forward(in, w), q); };
        const FeatureTensor g = conv3x3_backward_input(quadratic_grad(conv3x3_forward(x, w), q), w);
        out.push_back(compare("conv3x3_backward_input", f, x, g, 1e-4, 1e-6, rng));
    }
    {
        const FeatureTensor x = signed_away_from_zero(rng, 3, 6, 6);
        const FeatureTensor q = random_tensor(rng, 3, 6, 6, 0.5, 1.5);
        const Scalar f = [&](const FeatureTensor& in) { return quadratic(relu_forward(in), q); };
        const FeatureTensor g = relu_backward(quadratic_grad(relu_forward(x), q), x);
        out.push_back(compare("relu_backward", f, x, g, 1e-4, 1e-6, rng));
    }
    for (PoolMode mode : {PoolMode::avg, PoolMode::max}) {
        const FeatureTensor x = random_tensor(rng, 2, 6, 8, -1.0, 1.0);
        const FeatureTensor q = random_tensor(rng, 2, 3, 4, 0.5, 1.5);
        const Scalar f = [&](const FeatureTensor& in) {
            return quadratic(pool2x2_forward(in, mode).first, q);
        };
        auto [y, ctx] = pool2x2_forward(x, mode);
        const FeatureTensor g = pool2x2_backward(quadratic_grad(y, q), ctx, mode);
        out.push_back(compare(std::string("pool2x2_backward/") + pool_mode_name(mode), f, x, g,
                              1e-5, 1e-6, rng));
    }

    // Statistic losses, differentiated with respect to the preactivation so
    // the ReLU gate is part of what is checked.
    const std::size_t n = 8;
    const FeatureTensor pre = signed_away_from_zero(rng, n, 6, 6);
    const FeatureTensor other = relu_forward(random_tensor(rng, n, 6, 6, -0.5, 1.0));
    PCABasis basis;
    {
        std::vector<FeatureTensor> samples{random_tensor(rng, n, 6, 6, 0.0, 1.0)};
        basis = pca_fit(samples, 5, "layer");
    }
    for (StatisticKind kind : {StatisticKind::gram, StatisticKind::mean, StatisticKind::pca}) {
        const PCABasis* b = kind == StatisticKind::pca ? &basis : nullptr;
        const DescriptorEntry target = compute_entry("layer", other, kind, b);
        const Scalar f = [&](const FeatureTensor& p) {
            return entry_loss(target, compute_entry("layer", relu_forward(p), kind, b));
        };
        const FeatureTensor act = relu_forward(pre);
        const DescriptorEntry current = compute_entry("layer", act, kind, b);
        const FeatureTensor g = relu_backward(entry_loss_grad(target, current, act), pre);
        const char* label = kind == StatisticKind::gram ? "layer_loss_grad/gram"
                            : kind == StatisticKind::mean ? "layer_loss_grad/mean"
                                                          : "layer_loss_grad/pca:5";
        out.push_back(compare(label, f, pre, g, 1e-5, 1e-6, rng));
    }

    // Composite pixel gradient through the whole tiny network.
    const Network net = random_init(build_tiny_spec(), seed, 0.3);
    for (PoolMode mode : {PoolMode::avg, PoolMode::max}) {
        const FeatureTensor source = random_tensor(rng, 3, 8, 8, -1.0, 1.0);
        const FeatureTensor x = random_tensor(rng, 3, 8, 8, -1.0, 1.0);
        DescribeConfig dc;
        dc.layers = {"conv1_1", "conv1_2", "pool1"};
        dc.pool_mode = mode;
        const TextureDescriptor target = describe(net, source, dc);
        SynthesisConfig sc;
        sc.pool_mode = mode;
        const Scalar f = [&](const FeatureTensor& img) {
            return loss_and_pixel_grad(net, img, target, sc).loss;
        };
        const FeatureTensor g = loss_and_pixel_grad(net, x, target, sc).pixel_grad;
        out.push_back(compare(std::string("pixel_grad/") + pool_mode_name(mode), f, x, g, 1e-6,
                              1e-4, rng));
    }
    return out;
}

}  // namespace texsyn::tools
