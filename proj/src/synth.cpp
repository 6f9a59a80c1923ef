#include "texsyn/synth.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>

#include "texsyn/errors.hpp"

namespace texsyn {
namespace {

struct ActiveLayer {
    const DescriptorEntry* target;
    double weight;
};

std::vector<ActiveLayer> active_layers(const TextureDescriptor& target,
                                       const SynthesisConfig& config) {
    std::vector<ActiveLayer> out;
    const std::vector<std::string> names = config.layers.empty() ? target.layers() : config.layers;
    if (names.empty()) throw ValidationError("synthesis needs at least one layer");
    bool any_positive = false;
    for (const std::string& name : names) {
        const DescriptorEntry* e = target.find(name);
        if (e == nullptr)
            throw ValidationError("layer " + name + " is not in the target descriptor");
        double w = 1.0;
        if (auto it = config.weights.find(name); it != config.weights.end()) w = it->second;
        if (!(w >= 0.0) || !std::isfinite(w))
            throw ValidationError("layer weight for " + name + " must be finite and >= 0");
        any_positive = any_positive || w > 0.0;
        out.push_back({e, w});
    }
    if (!any_positive) throw ValidationError("at least one layer weight must be positive");
    return out;
}

std::string format17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

FeatureTensor init_white_noise(std::size_t height, std::size_t width, std::uint64_t seed,
                               double amplitude) {
    if (!(amplitude > 0.0) || !std::isfinite(amplitude))
        throw ValidationError("noise amplitude must be positive and finite");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uniform(-amplitude, amplitude);
    FeatureTensor t(3, height, width);
    for (double& v : t.values()) v = uniform(rng);
    return t;
}

LossAndGradient loss_and_pixel_grad(const Network& network, const FeatureTensor& image,
                                    const TextureDescriptor& target,
                                    const SynthesisConfig& config) {
    const std::vector<ActiveLayer> layers = active_layers(target, config);
    std::size_t top = 0;
    for (const ActiveLayer& l : layers) top = std::max(top, network.spec.require(l.target->layer));
    const ActivationSet acts =
        forward(network, image, network.spec.layers()[top].name, config.pool_mode);

    LossAndGradient out;
    std::map<std::string, FeatureTensor> injected;
    for (const ActiveLayer& l : layers) {
        const DescriptorEntry& t = *l.target;
        const FeatureTensor& act = acts.output(t.layer);
        if (act.channels() != t.features)
            throw DimensionError("layer " + t.layer + " has " + std::to_string(act.channels()) +
                                 " features, target has " + std::to_string(t.features));
        if (act.spatial() != t.positions && !config.allow_size_mismatch)
            throw DimensionError("layer " + t.layer + " has " + std::to_string(act.spatial()) +
                                 " positions, target was measured on " +
                                 std::to_string(t.positions));
        const PCABasis* basis = t.basis ? &*t.basis : nullptr;
        const DescriptorEntry current = compute_entry(t.layer, act, t.kind, basis);
        const double e = entry_loss(t, current);
        out.layer_losses.push_back(e);
        out.loss += l.weight * e;
        if (l.weight == 0.0) continue;
        FeatureTensor g = entry_loss_grad(t, current, act);
        if (l.weight != 1.0)
            for (double& v : g.values()) v *= l.weight;
        injected.emplace(t.layer, std::move(g));
    }
    out.pixel_grad = backward_to_pixels(network, acts, injected);
    return out;
}

std::pair<std::size_t, std::size_t> resolve_dims(const Network& network,
                                                 const TextureDescriptor& target,
                                                 const SynthesisConfig& config) {
    if (config.height != 0 || config.width != 0) {
        if (config.height == 0 || config.width == 0)
            throw ValidationError("give both output height and width");
        return {config.height, config.width};
    }
    if (config.initial_image)
        return {config.initial_image->height(), config.initial_image->width()};
    const std::vector<ActiveLayer> layers = active_layers(target, config);
    const DescriptorEntry& e = *layers.front().target;
    const std::size_t scale = std::size_t{1} << network.spec.pool_depth(e.layer);
    const std::size_t pixels = e.positions * scale * scale;
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(pixels))));
    if (side * side != pixels)
        throw ValidationError("cannot infer output size from the descriptor (" +
                              std::to_string(pixels) + " pixels is not square); set it explicitly");
    return {side, side};
}

SynthesisResult synthesize(const Network& network, const TextureDescriptor& target,
                           const SynthesisConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    const std::vector<ActiveLayer> layers = active_layers(target, config);
    const auto [height, width] = resolve_dims(network, target, config);

    FeatureTensor x0 = config.initial_image
                           ? *config.initial_image
                           : init_white_noise(height, width, config.seed, config.noise_amplitude);
    if (x0.channels() != 3 || x0.height() != height || x0.width() != width)
        throw DimensionError("initial image " + x0.shape_string() + " does not match 3x" +
                             std::to_string(height) + "x" + std::to_string(width));

    SynthesisTrace trace;
    for (const ActiveLayer& l : layers) trace.layers.push_back(l.target->layer);

    // Layer losses of the evaluations made since the last accepted iterate;
    // the accepted one is found by its (deterministic) loss value.
    std::vector<std::pair<double, std::vector<double>>> recent;
    FeatureTensor scratch(3, height, width);
    std::string numeric_failure;
    const Objective objective = [&](std::span<const double> x, std::span<double> grad) {
        std::copy(x.begin(), x.end(), scratch.values().begin());
        LossAndGradient lg;
        try {
            lg = loss_and_pixel_grad(network, scratch, target, config);
        } catch (const NumericError& e) {
            // Overflow inside the network; let the optimizer abort with its
            // partial result.
            numeric_failure = e.what();
            std::fill(grad.begin(), grad.end(), std::numeric_limits<double>::quiet_NaN());
            return std::numeric_limits<double>::quiet_NaN();
        }
        std::copy(lg.pixel_grad.values().begin(), lg.pixel_grad.values().end(), grad.begin());
        recent.emplace_back(lg.loss, std::move(lg.layer_losses));
        return lg.loss;
    };
    const IterationObserver observer = [&](const IterationRecord& rec) {
        TraceRow row{rec.iteration, rec.loss, rec.grad_supnorm, {}};
        for (auto it = recent.rbegin(); it != recent.rend(); ++it) {
            if (it->first == rec.loss) {
                row.layer_losses = it->second;
                break;
            }
        }
        trace.rows.push_back(std::move(row));
        recent.clear();
    };

    auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };

    std::vector<double> flat(x0.values().begin(), x0.values().end());
    OptimResult res;
    try {
        res = lbfgs_minimize(objective, std::move(flat), config.lbfgs, observer);
    } catch (const OptimAborted& e) {
        trace.termination = e.partial().termination;
        trace.evaluations = e.partial().evaluations;
        trace.wall_seconds = elapsed();
        std::string what = std::string("synthesis aborted: ") + e.what();
        if (!numeric_failure.empty()) what += " (" + numeric_failure + ")";
        throw SynthesisAborted(what, std::move(trace));
    }
    trace.termination = res.termination;
    trace.evaluations = res.evaluations;
    trace.wall_seconds = elapsed();
    return {FeatureTensor(3, height, width, std::move(res.x)), std::move(trace), res.loss};
}

void write_trace_csv(const SynthesisTrace& trace, std::ostream& out) {
    out << "iter,total_loss,grad_supnorm";
    for (const std::string& l : trace.layers) out << ",E_" << l;
    out << '\n';
    for (const TraceRow& row : trace.rows) {
        out << row.iteration << ',' << format17(row.total_loss) << ','
            << format17(row.grad_supnorm);
        for (double e : row.layer_losses) out << ',' << format17(e);
        out << '\n';
    }
}

void save_trace_csv(const SynthesisTrace& trace, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError("cannot open '" + path.string() + "' for writing");
    write_trace_csv(trace, out);
}

}  // namespace texsyn
