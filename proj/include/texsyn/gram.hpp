#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "texsyn/network.hpp"
#include "texsyn/tensor.hpp"

namespace texsyn {

// Symmetric n x n matrix of feature-map inner products, stored densely.
struct GramMatrix {
    std::size_t n = 0;
    std::vector<double> values;

    double operator()(std::size_t i, std::size_t j) const { return values[i * n + j]; }
    friend bool operator==(const GramMatrix&, const GramMatrix&) = default;
};

enum class StatisticKind : std::uint8_t { gram = 0, pca = 1, mean = 2 };

struct StatisticConfig {
    StatisticKind kind = StatisticKind::gram;
    std::size_t k = 0;  // pca only

    // "gram", "mean" or "pca:K"
    static StatisticConfig parse(std::string_view text);
    std::string to_string() const;
};

// Top-k principal directions of one layer's feature vectors.
struct PCABasis {
    std::string layer;
    std::size_t k = 0;
    std::size_t features = 0;   // N_l
    std::vector<double> mean;   // N_l
    std::vector<double> basis;  // k x N_l, orthonormal rows
    std::vector<double> variances;  // k eigenvalues, non-increasing (not serialized)

    friend bool operator==(const PCABasis& a, const PCABasis& b) {
        return a.layer == b.layer && a.k == b.k && a.features == b.features &&
               a.mean == b.mean && a.basis == b.basis;
    }
};

// One layer's statistic. `n` is the statistic dimension (N_l, or k for pca),
// `features` is N_l and `positions` is M_l of the image it was measured on.
struct DescriptorEntry {
    std::string layer;
    StatisticKind kind = StatisticKind::gram;
    std::size_t n = 0;
    std::size_t features = 0;
    std::size_t positions = 0;
    GramMatrix gram;                // gram and pca
    std::vector<double> mean;       // mean
    std::optional<PCABasis> basis;  // pca

    friend bool operator==(const DescriptorEntry&, const DescriptorEntry&) = default;
};

struct TextureDescriptor {
    std::vector<DescriptorEntry> entries;

    const DescriptorEntry* find(std::string_view layer) const;
    std::vector<std::string> layers() const;
    friend bool operator==(const TextureDescriptor&, const TextureDescriptor&) = default;
};

using LayerWeighting = std::map<std::string, double, std::less<>>;

// G[i][j] = sum over positions of F[i][p] * F[j][p]. Upper triangle is
// computed and mirrored, so the result is exactly symmetric.
GramMatrix gram_matrix(const FeatureTensor& features);

// sum_ij (G - G')^2 / (4 n^2 m^2)
double layer_loss(const GramMatrix& target, const GramMatrix& current, std::size_t n,
                  std::size_t m);

// Gradient of layer_loss with respect to the current features:
// (G' - G) F' / (n^2 m^2), zeroed where F' <= 0. This is the descent
// direction's negative, i.e. it decreases the loss when subtracted.
FeatureTensor layer_loss_grad(const FeatureTensor& current_features, const GramMatrix& target,
                              const GramMatrix& current, std::size_t n, std::size_t m);

std::vector<double> mean_statistic(const FeatureTensor& features);

// sum_i (mu_i - mu'_i)^2 / (4 n)
double mean_loss(std::span<const double> target, std::span<const double> current);

// (mu'_i - mu_i) / (2 n m) at every position of channel i, zeroed where F' <= 0.
FeatureTensor mean_loss_grad(const FeatureTensor& current_features, std::span<const double> target,
                             std::span<const double> current);

// PCA over the feature vectors (one per spatial position) of every sample.
// Samples must share a channel count. Sign convention: each basis row's
// largest-magnitude component is positive.
PCABasis pca_fit(std::span<const FeatureTensor> samples, std::size_t k, std::string layer = {});

// rows = basis * (F - mean), a k x H x W tensor.
FeatureTensor project_features(const FeatureTensor& features, const PCABasis& basis);

// Statistic of one layer's activation. pca requires a basis.
DescriptorEntry compute_entry(std::string_view layer, const FeatureTensor& activation,
                              StatisticKind kind, const PCABasis* basis = nullptr);

// E_l for a matching pair of entries.
double entry_loss(const DescriptorEntry& target, const DescriptorEntry& current);

// dE_l / d(layer activation), gated where the activation is <= 0.
FeatureTensor entry_loss_grad(const DescriptorEntry& target, const DescriptorEntry& current,
                              const FeatureTensor& activation);

// Throws UsageError naming the first layer where the two descriptors differ
// in name, kind or dims.
void check_compatible(const TextureDescriptor& target, const TextureDescriptor& current);

double total_loss(const TextureDescriptor& target, const TextureDescriptor& current,
                  const LayerWeighting& weights);

// gram: sum N_l (N_l + 1) / 2; pca(k): sum k (k + 1) / 2; mean: sum N_l.
std::uint64_t count_parameters(const NetworkSpec& spec, std::span<const std::string> layers,
                               const StatisticConfig& statistic);

struct DescribeConfig {
    std::vector<std::string> layers;
    StatisticConfig statistic;
    PoolMode pool_mode = PoolMode::avg;
    // pca only: bases keyed by layer. Layers without one get a basis fitted
    // on the described image's own activations.
    std::map<std::string, PCABasis, std::less<>> bases;
};

TextureDescriptor describe(const Network& network, const FeatureTensor& image,
                           const DescribeConfig& config);

// Upper triangles (row-major, j >= i) of gram/pca entries or the mean
// vectors, concatenated in entry order.
std::vector<double> export_descriptor_vector(const TextureDescriptor& descriptor);

// GRMD0001 descriptor files.
std::vector<std::uint8_t> serialize_descriptor(const TextureDescriptor& descriptor);
TextureDescriptor parse_descriptor(std::span<const std::uint8_t> bytes);
void save_descriptor(const TextureDescriptor& descriptor, const std::filesystem::path& path);
TextureDescriptor load_descriptor(const std::filesystem::path& path);

// PCAB0001 basis files written by `pca-fit`.
std::vector<std::uint8_t> serialize_bases(std::span<const PCABasis> bases);
std::vector<PCABasis> parse_bases(std::span<const std::uint8_t> bytes);
void save_bases(std::span<const PCABasis> bases, const std::filesystem::path& path);
std::vector<PCABasis> load_bases(const std::filesystem::path& path);

}  // namespace texsyn
