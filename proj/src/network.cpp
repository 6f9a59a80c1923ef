#include "texsyn/network.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <set>

#include "texsyn/errors.hpp"

namespace texsyn {

NetworkSpec::NetworkSpec(std::vector<LayerSpec> layers) : layers_(std::move(layers)) {
    std::set<std::string> names;
    std::size_t channels = 3;
    for (const LayerSpec& l : layers_) {
        if (l.name.empty()) throw ValidationError("layer with empty name");
        if (!names.insert(l.name).second) throw ValidationError("duplicate layer name " + l.name);
        if (l.in_channels != channels)
            throw ValidationError("layer " + l.name + " expects " + std::to_string(l.in_channels) +
                                  " input channels, previous layer provides " +
                                  std::to_string(channels));
        if (l.out_channels == 0) throw ValidationError("layer " + l.name + " has no outputs");
        if (l.kind == LayerKind::pool && l.out_channels != l.in_channels)
            throw ValidationError("pool layer " + l.name + " must preserve its channel count");
        channels = l.out_channels;
    }
}

std::optional<std::size_t> NetworkSpec::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < layers_.size(); ++i)
        if (layers_[i].name == name) return i;
    return std::nullopt;
}

std::size_t NetworkSpec::require(std::string_view name) const {
    if (auto i = index_of(name)) return *i;
    throw ValidationError("unknown layer '" + std::string(name) + "'");
}

std::vector<std::string> NetworkSpec::layers_up_to(std::string_view name) const {
    const std::size_t last = require(name);
    std::vector<std::string> out;
    for (std::size_t i = 0; i <= last; ++i) out.push_back(layers_[i].name);
    return out;
}

std::size_t NetworkSpec::pool_depth(std::string_view name) const {
    const std::size_t last = require(name);
    std::size_t depth = 0;
    for (std::size_t i = 0; i <= last; ++i)
        if (layers_[i].kind == LayerKind::pool) ++depth;
    return depth;
}

std::size_t NetworkSpec::conv_count() const {
    std::size_t n = 0;
    for (const LayerSpec& l : layers_)
        if (l.kind == LayerKind::conv_relu) ++n;
    return n;
}

NetworkSpec build_vgg19_spec() {
    struct Block {
        std::size_t convs;
        std::size_t width;
    };
    constexpr Block blocks[] = {{2, 64}, {2, 128}, {4, 256}, {4, 512}, {4, 512}};
    std::vector<LayerSpec> layers;
    std::size_t channels = 3;
    for (std::size_t b = 0; b < std::size(blocks); ++b) {
        const std::string stage = std::to_string(b + 1);
        for (std::size_t c = 0; c < blocks[b].convs; ++c) {
            layers.push_back({"conv" + stage + "_" + std::to_string(c + 1), LayerKind::conv_relu,
                              channels, blocks[b].width});
            channels = blocks[b].width;
        }
        layers.push_back({"pool" + stage, LayerKind::pool, channels, channels});
    }
    return NetworkSpec(std::move(layers));
}

NetworkSpec build_tiny_spec() {
    return NetworkSpec({{"conv1_1", LayerKind::conv_relu, 3, 8},
                        {"conv1_2", LayerKind::conv_relu, 8, 16},
                        {"pool1", LayerKind::pool, 16, 16}});
}

std::size_t Network::conv_index(std::string_view name) const {
    const std::size_t li = spec.require(name);
    if (spec.layers()[li].kind != LayerKind::conv_relu)
        throw UsageError("layer " + std::string(name) + " has no weights");
    std::size_t idx = 0;
    for (std::size_t i = 0; i < li; ++i)
        if (spec.layers()[i].kind == LayerKind::conv_relu) ++idx;
    return idx;
}

void Network::validate() const {
    if (weights.size() != spec.conv_count())
        throw DimensionError("network has " + std::to_string(weights.size()) +
                             " weight blocks, spec has " + std::to_string(spec.conv_count()) +
                             " conv layers");
    std::size_t wi = 0;
    for (const LayerSpec& l : spec.layers()) {
        if (l.kind != LayerKind::conv_relu) continue;
        const ConvWeights& w = weights[wi++];
        if (w.out_channels != l.out_channels || w.in_channels != l.in_channels)
            throw DimensionError("layer " + l.name + ": weights are " +
                                 std::to_string(w.out_channels) + "x" +
                                 std::to_string(w.in_channels) + ", spec expects " +
                                 std::to_string(l.out_channels) + "x" +
                                 std::to_string(l.in_channels));
        try {
            w.validate();
        } catch (const std::exception& e) {
            throw ValidationError("layer " + l.name + ": " + e.what());
        }
    }
}

const LayerActivation* ActivationSet::find(std::string_view name) const {
    for (const LayerActivation& l : layers)
        if (l.name == name) return &l;
    return nullptr;
}

const FeatureTensor& ActivationSet::output(std::string_view name) const {
    if (const LayerActivation* l = find(name)) return l->output;
    throw UsageError("activation set has no layer '" + std::string(name) + "'");
}

ActivationSet forward(const Network& network, const FeatureTensor& image, std::string_view up_to,
                      PoolMode pool_mode) {
    const std::size_t last = network.spec.require(up_to);
    if (image.channels() != 3)
        throw DimensionError("input image must have 3 channels, got " + image.shape_string());
    const std::size_t divisor = std::size_t{1} << network.spec.pool_depth(up_to);
    if (image.height() == 0 || image.width() == 0 || image.height() % divisor != 0 ||
        image.width() % divisor != 0)
        throw ValidationError("input " + std::to_string(image.height()) + "x" +
                              std::to_string(image.width()) + " must be divisible by " +
                              std::to_string(divisor) + " to reach layer " + std::string(up_to));

    ActivationSet acts;
    acts.pool_mode = pool_mode;
    acts.input_height = image.height();
    acts.input_width = image.width();
    const FeatureTensor* current = &image;
    std::size_t wi = 0;
    for (std::size_t i = 0; i <= last; ++i) {
        const LayerSpec& spec = network.spec.layers()[i];
        LayerActivation act;
        act.name = spec.name;
        act.kind = spec.kind;
        if (spec.kind == LayerKind::conv_relu) {
            act.preactivation = conv3x3_forward(*current, network.weights[wi++]);
            act.output = relu_forward(act.preactivation);
        } else {
            auto [pooled, ctx] = pool2x2_forward(*current, pool_mode);
            act.output = std::move(pooled);
            act.pool = std::move(ctx);
        }
        if (!act.output.all_finite())
            throw NumericError("non-finite activation in layer " + spec.name);
        acts.layers.push_back(std::move(act));
        current = &acts.layers.back().output;
    }
    return acts;
}

FeatureTensor backward_to_pixels(const Network& network, const ActivationSet& acts,
                                 const std::map<std::string, FeatureTensor>& injected) {
    for (const auto& [name, grad] : injected) {
        const LayerActivation* act = acts.find(name);
        if (act == nullptr)
            throw UsageError("gradient injected at layer '" + name +
                             "' which is not in the activation set");
        if (!grad.same_shape(act->output))
            throw DimensionError("gradient for layer " + name + " is " + grad.shape_string() +
                                 ", activation is " + act->output.shape_string());
    }

    FeatureTensor grad;  // empty until the first injection is reached
    for (std::size_t i = acts.layers.size(); i-- > 0;) {
        const LayerActivation& act = acts.layers[i];
        if (auto it = injected.find(act.name); it != injected.end()) {
            if (grad.empty()) {
                grad = it->second;
            } else {
                auto g = grad.values();
                auto add = it->second.values();
                for (std::size_t k = 0; k < g.size(); ++k) g[k] += add[k];
            }
        }
        if (grad.empty()) continue;
        if (act.kind == LayerKind::conv_relu) {
            const FeatureTensor gated = relu_backward(grad, act.preactivation);
            grad = conv3x3_backward_input(gated, network.weights_for(act.name));
        } else {
            grad = pool2x2_backward(grad, act.pool, acts.pool_mode);
        }
    }
    if (grad.empty()) return FeatureTensor(3, acts.input_height, acts.input_width);
    return grad;
}

std::vector<double> mean_filter_activations(const Network& network, std::string_view conv_layer,
                                            std::span<const FeatureTensor> images,
                                            PoolMode pool_mode) {
    if (images.empty()) throw ValidationError("at least one calibration image is required");
    const LayerSpec& spec = network.spec.layer(conv_layer);
    std::vector<double> sums(spec.out_channels, 0.0);
    std::size_t positions = 0;
    for (const FeatureTensor& img : images) {
        const ActivationSet acts = forward(network, img, conv_layer, pool_mode);
        const FeatureTensor& out = acts.output(conv_layer);
        for (std::size_t c = 0; c < out.channels(); ++c)
            for (double v : out.channel(c)) sums[c] += v;
        positions += out.spatial();
    }
    for (double& s : sums) s /= static_cast<double>(positions);
    return sums;
}

Network rescale_weights(const Network& network, std::span<const FeatureTensor> calibration,
                        PoolMode pool_mode, double dead_eps) {
    network.validate();
    if (calibration.empty()) throw ValidationError("at least one calibration image is required");
    Network out = network;
    const auto& layers = out.spec.layers();
    std::size_t wi = 0;
    for (std::size_t li = 0; li < layers.size(); ++li) {
        if (layers[li].kind != LayerKind::conv_relu) continue;
        const std::vector<double> means =
            mean_filter_activations(out, layers[li].name, calibration, pool_mode);
        std::string dead;
        for (std::size_t f = 0; f < means.size(); ++f)
            if (!(means[f] > dead_eps))
                dead += (dead.empty() ? "" : ", ") + layers[li].name + "[" + std::to_string(f) + "]";
        if (!dead.empty()) {
            char eps[32];
            std::snprintf(eps, sizeof eps, "%g", dead_eps);
            throw ValidationError(std::string("dead filters (mean activation <= ") + eps + "): " + dead);
        }

        ConvWeights& w = out.weights[wi];
        for (std::size_t o = 0; o < w.out_channels; ++o) {
            for (std::size_t t = 0; t < w.in_channels * ConvWeights::kTaps; ++t)
                w.kernel[o * w.in_channels * ConvWeights::kTaps + t] /= means[o];
            w.bias[o] /= means[o];
        }
        // Pooling commutes with positive scaling, so the next conv layer reads
        // channel o scaled by 1/means[o] whether or not pools sit in between.
        if (wi + 1 < out.weights.size()) {
            ConvWeights& next = out.weights[wi + 1];
            for (std::size_t o = 0; o < next.out_channels; ++o)
                for (std::size_t c = 0; c < next.in_channels; ++c)
                    for (std::size_t t = 0; t < ConvWeights::kTaps; ++t)
                        next.kernel[(o * next.in_channels + c) * ConvWeights::kTaps + t] *= means[c];
        }
        ++wi;
    }
    return out;
}

Network random_init(const NetworkSpec& spec, std::uint64_t seed, double scale) {
    if (!(scale > 0.0) || !std::isfinite(scale))
        throw ValidationError("random init scale must be positive and finite");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, scale);
    Network net{spec, {}};
    for (const LayerSpec& l : spec.layers()) {
        if (l.kind != LayerKind::conv_relu) continue;
        ConvWeights w(l.out_channels, l.in_channels);
        // Weight files hold single precision; keep random networks exactly
        // representable so save/load is lossless.
        for (double& v : w.kernel) v = static_cast<double>(static_cast<float>(normal(rng)));
        net.weights.push_back(std::move(w));
    }
    return net;
}

}  // namespace texsyn
