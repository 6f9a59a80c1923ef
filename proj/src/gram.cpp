#include "texsyn/gram.hpp"

#include <charconv>

#include "texsyn/errors.hpp"
#include "texsyn/kernels.hpp"
#include "texsyn/parallel.hpp"

namespace texsyn {
namespace {

const char* kind_name(StatisticKind kind) {
    switch (kind) {
        case StatisticKind::gram: return "gram";
        case StatisticKind::pca: return "pca";
        case StatisticKind::mean: return "mean";
    }
    return "?";
}

// C = A (n x k) * B (k x m)
std::vector<double> matmul(const double* a, std::size_t n, std::size_t k, const double* b,
                           std::size_t m) {
    std::vector<double> c(n * m);
    const auto& kt = kernels::active();
    parallel_for(n, k * m, [&](std::size_t begin, std::size_t end) {
        kt.matmul_rows(a, b, k, m, begin, end, c.data());
    });
    return c;
}

// (G' - G) F' / (n^2 m^2) without gating.
FeatureTensor gram_grad_ungated(const FeatureTensor& f, const GramMatrix& target,
                                const GramMatrix& current, std::size_t n, std::size_t m) {
    std::vector<double> diff(n * n);
    for (std::size_t i = 0; i < n * n; ++i) diff[i] = current.values[i] - target.values[i];
    std::vector<double> prod = matmul(diff.data(), n, n, f.data(), f.spatial());
    const double scale = 1.0 / (static_cast<double>(n) * n * static_cast<double>(m) * m);
    for (double& v : prod) v *= scale;
    return FeatureTensor(f.channels(), f.height(), f.width(), std::move(prod));
}

void gate_nonpositive(FeatureTensor& grad, const FeatureTensor& activation) {
    auto g = grad.values();
    auto a = activation.values();
    for (std::size_t i = 0; i < g.size(); ++i)
        if (!(a[i] > 0.0)) g[i] = 0.0;
}

}  // namespace

StatisticConfig StatisticConfig::parse(std::string_view text) {
    if (text == "gram") return {StatisticKind::gram, 0};
    if (text == "mean") return {StatisticKind::mean, 0};
    if (text.starts_with("pca:")) {
        const std::string_view digits = text.substr(4);
        std::size_t k = 0;
        const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), k);
        if (ec == std::errc() && ptr == digits.data() + digits.size() && k > 0)
            return {StatisticKind::pca, k};
    }
    throw ValidationError("unknown statistic '" + std::string(text) +
                          "' (expected gram | pca:K | mean)");
}

std::string StatisticConfig::to_string() const {
    if (kind == StatisticKind::pca) return "pca:" + std::to_string(k);
    return kind_name(kind);
}

const DescriptorEntry* TextureDescriptor::find(std::string_view layer) const {
    for (const DescriptorEntry& e : entries)
        if (e.layer == layer) return &e;
    return nullptr;
}

std::vector<std::string> TextureDescriptor::layers() const {
    std::vector<std::string> out;
    for (const DescriptorEntry& e : entries) out.push_back(e.layer);
    return out;
}

GramMatrix gram_matrix(const FeatureTensor& features) {
    const std::size_t n = features.channels(), m = features.spatial();
    GramMatrix g{n, std::vector<double>(n * n, 0.0)};
    std::vector<double> ft(m * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < m; ++p) ft[p * n + i] = features.data()[i * m + p];
    const auto& kt = kernels::active();
    parallel_for(n, n * m / 2 + 1, [&](std::size_t begin, std::size_t end) {
        kt.gram_rows(features.data(), ft.data(), n, m, begin, end, g.values.data());
    });
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) g.values[j * n + i] = g.values[i * n + j];
    return g;
}

double layer_loss(const GramMatrix& target, const GramMatrix& current, std::size_t n,
                  std::size_t m) {
    if (target.n != current.n || target.n != n)
        throw DimensionError("layer_loss: gram sizes " + std::to_string(target.n) + " and " +
                             std::to_string(current.n) + " vs n = " + std::to_string(n));
    double sum = 0.0;
    for (std::size_t i = 0; i < n * n; ++i) {
        const double d = target.values[i] - current.values[i];
        sum += d * d;
    }
    return sum / (4.0 * static_cast<double>(n) * n * static_cast<double>(m) * m);
}

FeatureTensor layer_loss_grad(const FeatureTensor& current_features, const GramMatrix& target,
                              const GramMatrix& current, std::size_t n, std::size_t m) {
    if (current_features.channels() != n || current_features.spatial() != m ||
        target.n != n || current.n != n)
        throw DimensionError("layer_loss_grad: features " + current_features.shape_string() +
                             " inconsistent with n = " + std::to_string(n) +
                             ", m = " + std::to_string(m));
    FeatureTensor grad = gram_grad_ungated(current_features, target, current, n, m);
    gate_nonpositive(grad, current_features);
    return grad;
}

std::vector<double> mean_statistic(const FeatureTensor& features) {
    std::vector<double> mu(features.channels(), 0.0);
    const double inv = 1.0 / static_cast<double>(features.spatial());
    for (std::size_t c = 0; c < features.channels(); ++c) {
        double s = 0.0;
        for (double v : features.channel(c)) s += v;
        mu[c] = s * inv;
    }
    return mu;
}

double mean_loss(std::span<const double> target, std::span<const double> current) {
    if (target.size() != current.size())
        throw DimensionError("mean_loss: sizes " + std::to_string(target.size()) + " and " +
                             std::to_string(current.size()));
    double sum = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double d = target[i] - current[i];
        sum += d * d;
    }
    return sum / (4.0 * static_cast<double>(target.size()));
}

FeatureTensor mean_loss_grad(const FeatureTensor& current_features, std::span<const double> target,
                             std::span<const double> current) {
    const std::size_t n = current_features.channels();
    if (target.size() != n || current.size() != n)
        throw DimensionError("mean_loss_grad: statistic size does not match " +
                             current_features.shape_string());
    FeatureTensor grad(n, current_features.height(), current_features.width());
    const double scale = 1.0 / (2.0 * static_cast<double>(n) *
                                static_cast<double>(current_features.spatial()));
    for (std::size_t c = 0; c < n; ++c) {
        const double g = (current[c] - target[c]) * scale;
        auto dst = grad.channel(c);
        auto act = current_features.channel(c);
        for (std::size_t p = 0; p < dst.size(); ++p) dst[p] = act[p] > 0.0 ? g : 0.0;
    }
    return grad;
}

DescriptorEntry compute_entry(std::string_view layer, const FeatureTensor& activation,
                              StatisticKind kind, const PCABasis* basis) {
    DescriptorEntry e;
    e.layer = std::string(layer);
    e.kind = kind;
    e.features = activation.channels();
    e.positions = activation.spatial();
    switch (kind) {
        case StatisticKind::gram:
            e.n = activation.channels();
            e.gram = gram_matrix(activation);
            break;
        case StatisticKind::mean:
            e.n = activation.channels();
            e.mean = mean_statistic(activation);
            break;
        case StatisticKind::pca:
            if (basis == nullptr)
                throw UsageError("layer " + e.layer + ": pca statistic needs a basis");
            e.n = basis->k;
            e.gram = gram_matrix(project_features(activation, *basis));
            e.basis = *basis;
            break;
    }
    return e;
}

double entry_loss(const DescriptorEntry& target, const DescriptorEntry& current) {
    if (target.kind == StatisticKind::mean) return mean_loss(target.mean, current.mean);
    return layer_loss(target.gram, current.gram, current.n, current.positions);
}

FeatureTensor entry_loss_grad(const DescriptorEntry& target, const DescriptorEntry& current,
                              const FeatureTensor& activation) {
    switch (current.kind) {
        case StatisticKind::gram:
            return layer_loss_grad(activation, target.gram, current.gram, current.n,
                                   current.positions);
        case StatisticKind::mean:
            return mean_loss_grad(activation, target.mean, current.mean);
        case StatisticKind::pca: {
            // Loss gradient on the projected features, pulled back through the
            // linear projection, then gated on the underlying activations.
            const PCABasis& b = *current.basis;
            const FeatureTensor projected = project_features(activation, b);
            const FeatureTensor gp =
                gram_grad_ungated(projected, target.gram, current.gram, b.k, current.positions);
            std::vector<double> bt(b.features * b.k);
            for (std::size_t r = 0; r < b.k; ++r)
                for (std::size_t c = 0; c < b.features; ++c)
                    bt[c * b.k + r] = b.basis[r * b.features + c];
            FeatureTensor grad(b.features, activation.height(), activation.width(),
                               matmul(bt.data(), b.features, b.k, gp.data(), gp.spatial()));
            gate_nonpositive(grad, activation);
            return grad;
        }
    }
    throw UsageError("unknown statistic kind");
}

void check_compatible(const TextureDescriptor& target, const TextureDescriptor& current) {
    const std::size_t count = std::max(target.entries.size(), current.entries.size());
    for (std::size_t i = 0; i < count; ++i) {
        if (i >= target.entries.size() || i >= current.entries.size()) {
            const auto& extra = i < target.entries.size() ? target.entries[i] : current.entries[i];
            throw UsageError("descriptors differ in layer set at layer " + extra.layer);
        }
        const DescriptorEntry& t = target.entries[i];
        const DescriptorEntry& c = current.entries[i];
        if (t.layer != c.layer)
            throw UsageError("descriptors differ at entry " + std::to_string(i) + ": layer " +
                             t.layer + " vs " + c.layer);
        if (t.kind != c.kind)
            throw UsageError("layer " + t.layer + ": statistic " + kind_name(t.kind) + " vs " +
                             kind_name(c.kind));
        if (t.n != c.n || t.features != c.features || t.positions != c.positions)
            throw UsageError("layer " + t.layer + ": dims (n=" + std::to_string(t.n) +
                             ", M=" + std::to_string(t.positions) + ") vs (n=" +
                             std::to_string(c.n) + ", M=" + std::to_string(c.positions) + ")");
    }
}

double total_loss(const TextureDescriptor& target, const TextureDescriptor& current,
                  const LayerWeighting& weights) {
    check_compatible(target, current);
    double total = 0.0;
    for (std::size_t i = 0; i < target.entries.size(); ++i) {
        const auto it = weights.find(target.entries[i].layer);
        if (it == weights.end())
            throw UsageError("no weight given for layer " + target.entries[i].layer);
        total += it->second * entry_loss(target.entries[i], current.entries[i]);
    }
    return total;
}

std::uint64_t count_parameters(const NetworkSpec& spec, std::span<const std::string> layers,
                               const StatisticConfig& statistic) {
    std::uint64_t total = 0;
    for (const std::string& name : layers) {
        const std::uint64_t n = spec.layer(name).out_channels;
        switch (statistic.kind) {
            case StatisticKind::gram: total += n * (n + 1) / 2; break;
            case StatisticKind::mean: total += n; break;
            case StatisticKind::pca:
                if (statistic.k > n)
                    throw ValidationError("pca:" + std::to_string(statistic.k) + " exceeds the " +
                                          std::to_string(n) + " features of layer " + name);
                total += std::uint64_t{statistic.k} * (statistic.k + 1) / 2;
                break;
        }
    }
    return total;
}

TextureDescriptor describe(const Network& network, const FeatureTensor& image,
                           const DescribeConfig& config) {
    if (config.layers.empty()) throw ValidationError("no layers selected");
    std::size_t top = 0;
    for (const std::string& name : config.layers)
        top = std::max(top, network.spec.require(name));
    const ActivationSet acts =
        forward(network, image, network.spec.layers()[top].name, config.pool_mode);

    TextureDescriptor d;
    for (const std::string& name : config.layers) {
        const FeatureTensor& act = acts.output(name);
        if (config.statistic.kind != StatisticKind::pca) {
            d.entries.push_back(compute_entry(name, act, config.statistic.kind));
            continue;
        }
        if (auto it = config.bases.find(name); it != config.bases.end()) {
            if (it->second.features != act.channels())
                throw DimensionError("pca basis for " + name + " has " +
                                     std::to_string(it->second.features) + " features, layer has " +
                                     std::to_string(act.channels()));
            d.entries.push_back(compute_entry(name, act, StatisticKind::pca, &it->second));
        } else {
            const PCABasis basis = pca_fit(std::span(&act, 1), config.statistic.k, name);
            d.entries.push_back(compute_entry(name, act, StatisticKind::pca, &basis));
        }
    }
    return d;
}

std::vector<double> export_descriptor_vector(const TextureDescriptor& descriptor) {
    std::vector<double> out;
    for (const DescriptorEntry& e : descriptor.entries) {
        if (e.kind == StatisticKind::mean) {
            out.insert(out.end(), e.mean.begin(), e.mean.end());
            continue;
        }
        for (std::size_t i = 0; i < e.n; ++i)
            for (std::size_t j = i; j < e.n; ++j) out.push_back(e.gram(i, j));
    }
    return out;
}

}  // namespace texsyn
