#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "texsyn/gram.hpp"
#include "texsyn/lbfgs.hpp"
#include "texsyn/network.hpp"

namespace texsyn {

struct SynthesisConfig {
    // Layers constrained during synthesis; empty means every layer of the
    // target descriptor. Each must appear in the target.
    std::vector<std::string> layers;
    // Per-layer w_l; layers not listed get 1.
    LayerWeighting weights;
    PoolMode pool_mode = PoolMode::avg;
    // Output size; 0 means the size the target was measured on.
    std::size_t height = 0;
    std::size_t width = 0;
    // Accept an output size whose M_l differs from the target's. Gram
    // entries are unnormalized sums over positions, so this changes the
    // scale of what is matched.
    bool allow_size_mismatch = false;
    std::uint64_t seed = 0;
    double noise_amplitude = 0.1;
    LbfgsOptions lbfgs;
    // Start here instead of from white noise.
    std::optional<FeatureTensor> initial_image;
};

struct TraceRow {
    std::size_t iteration = 0;
    double total_loss = 0.0;
    double grad_supnorm = 0.0;
    std::vector<double> layer_losses;  // E_l, unweighted, in trace.layers order
};

struct SynthesisTrace {
    std::vector<std::string> layers;
    std::vector<TraceRow> rows;  // iterations + 1 rows, starting point first
    Termination termination = Termination::max_iters;
    std::size_t evaluations = 0;
    double wall_seconds = 0.0;
};

struct SynthesisResult {
    FeatureTensor image;  // preprocessed space
    SynthesisTrace trace;
    double final_loss = 0.0;
};

// The optimizer aborted on a non-finite value; the trace up to the last
// accepted iterate is attached.
class SynthesisAborted : public NumericError {
public:
    SynthesisAborted(const std::string& what, SynthesisTrace partial)
        : NumericError(what), partial_(std::move(partial)) {}
    const SynthesisTrace& partial_trace() const noexcept { return partial_; }

private:
    SynthesisTrace partial_;
};

// 3 x height x width i.i.d. uniform samples in [-amplitude, amplitude].
FeatureTensor init_white_noise(std::size_t height, std::size_t width, std::uint64_t seed,
                               double amplitude);

struct LossAndGradient {
    double loss = 0.0;
    FeatureTensor pixel_grad;
    std::vector<double> layer_losses;  // unweighted E_l per active layer
};

// Total weighted loss of `image` against `target` and its gradient with
// respect to the pixels.
LossAndGradient loss_and_pixel_grad(const Network& network, const FeatureTensor& image,
                                    const TextureDescriptor& target,
                                    const SynthesisConfig& config);

// Output size implied by the target for this network when the config does
// not set one: the image must be square for the size to be recoverable.
std::pair<std::size_t, std::size_t> resolve_dims(const Network& network,
                                                 const TextureDescriptor& target,
                                                 const SynthesisConfig& config);

SynthesisResult synthesize(const Network& network, const TextureDescriptor& target,
                           const SynthesisConfig& config);

// Header iter,total_loss,grad_supnorm,E_<layer>...; values printed with 17
// significant digits.
void write_trace_csv(const SynthesisTrace& trace, std::ostream& out);
void save_trace_csv(const SynthesisTrace& trace, const std::filesystem::path& path);

}  // namespace texsyn
