#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "texsyn/ops.hpp"
#include "texsyn/tensor.hpp"

namespace texsyn {

enum class LayerKind { conv_relu, pool };

struct LayerSpec {
    std::string name;
    LayerKind kind = LayerKind::conv_relu;
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Ordered conv/pool layer list. The constructor enforces unique names, a
// consistent channel chain starting from 3 input channels, and pool layers
// that preserve their channel count.
class NetworkSpec {
public:
    NetworkSpec() = default;
    explicit NetworkSpec(std::vector<LayerSpec> layers);

    const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
    std::size_t size() const noexcept { return layers_.size(); }

    std::optional<std::size_t> index_of(std::string_view name) const;
    // Throws ValidationError naming the layer when it does not exist.
    std::size_t require(std::string_view name) const;
    const LayerSpec& layer(std::string_view name) const { return layers_[require(name)]; }

    // Names of every layer up to and including `name`, in network order.
    std::vector<std::string> layers_up_to(std::string_view name) const;

    // Number of pool layers at or below `name`; the input's height and width
    // must be divisible by 2^pool_depth(name).
    std::size_t pool_depth(std::string_view name) const;

    std::size_t conv_count() const;

    friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;

private:
    std::vector<LayerSpec> layers_;
};

// The 16-conv / 5-pool VGG-19 trunk: conv1_1 ... conv5_4, pool1 ... pool5.
NetworkSpec build_vgg19_spec();

// conv1_1 (3 -> 8), conv1_2 (8 -> 16), pool1. Used by gradient checks and
// regression tests.
NetworkSpec build_tiny_spec();

struct Network {
    NetworkSpec spec;
    std::vector<ConvWeights> weights;  // one per conv_relu layer, in spec order

    // Index into `weights` for a conv layer name.
    std::size_t conv_index(std::string_view name) const;
    const ConvWeights& weights_for(std::string_view name) const {
        return weights[conv_index(name)];
    }

    void validate() const;
};

struct LayerActivation {
    std::string name;
    LayerKind kind = LayerKind::conv_relu;
    FeatureTensor output;         // post-ReLU or post-pool
    FeatureTensor preactivation;  // conv_relu only
    PoolContext pool;             // pool only
};

// Activations of every layer up to a stopping layer, plus what backward
// needs. Owned by one forward/backward invocation.
struct ActivationSet {
    PoolMode pool_mode = PoolMode::avg;
    std::size_t input_height = 0;
    std::size_t input_width = 0;
    std::vector<LayerActivation> layers;

    const LayerActivation* find(std::string_view name) const;
    const FeatureTensor& output(std::string_view name) const;
    bool contains(std::string_view name) const { return find(name) != nullptr; }
};

// Validates the image (3 channels, spatial size divisible by every pooling
// below up_to) before computing anything.
ActivationSet forward(const Network& network, const FeatureTensor& image, std::string_view up_to,
                      PoolMode pool_mode);

// Pulls gradients injected at layer outputs back to the input pixels, adding
// each injection as the backward sweep passes its layer.
FeatureTensor backward_to_pixels(const Network& network, const ActivationSet& acts,
                                 const std::map<std::string, FeatureTensor>& injected);

// Divides each filter by its mean post-ReLU activation over the calibration
// images (layers processed bottom-up, each measured after the layers below
// were rescaled) and multiplies the next conv layer's input slices by the
// same factor. Throws ValidationError listing filters whose mean is <= dead_eps.
Network rescale_weights(const Network& network, std::span<const FeatureTensor> calibration,
                        PoolMode pool_mode, double dead_eps = 1e-12);

// Mean post-ReLU activation per filter of one conv layer over a set of images.
std::vector<double> mean_filter_activations(const Network& network, std::string_view conv_layer,
                                            std::span<const FeatureTensor> images,
                                            PoolMode pool_mode);

// I.i.d. Gaussian(0, scale^2) kernels rounded to single precision, zero
// biases. Deterministic for a given seed.
Network random_init(const NetworkSpec& spec, std::uint64_t seed, double scale);

// CNNW0001 weight files. See README for the byte layout.
Network load_weights(const std::filesystem::path& path, const NetworkSpec& spec);
void save_weights(const Network& network, const std::filesystem::path& path);
Network parse_weights(std::span<const std::uint8_t> bytes, const NetworkSpec& spec);
std::vector<std::uint8_t> serialize_weights(const Network& network);

}  // namespace texsyn
