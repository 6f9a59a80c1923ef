// texsyn: command-line front end. Exit status 0 on success, 1 for invalid
// input or usage, 2 for runtime and numeric failures.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "gradcheck.hpp"
#include "texsyn/errors.hpp"
#include "texsyn/gram.hpp"
#include "texsyn/imageio.hpp"
#include "texsyn/kernels.hpp"
#include "texsyn/network.hpp"
#include "texsyn/parallel.hpp"
#include "texsyn/synth.hpp"

namespace fs = std::filesystem;
using namespace texsyn;

namespace {

constexpr int kExitInvalid = 1;
constexpr int kExitFailure = 2;

struct Common {
    std::string net = "vgg19";
    std::string weights;
    std::string init_weights = "file";
    double init_scale = 0.05;
    std::string preprocess = "auto";
    std::string pooling = "avg";
    std::string statistic = "gram";
    std::string layers;
    std::string up_to;
    std::uint64_t seed = 0;
    std::size_t threads = 0;
};

void add_network_flags(CLI::App* cmd, Common& c) {
    cmd->add_option("--net", c.net, "Network architecture")->check(CLI::IsMember({"vgg19", "tiny"}));
    cmd->add_option("--weights", c.weights, "CNNW0001 weight file");
    cmd->add_option("--init-weights", c.init_weights, "Take weights from --weights or draw them")
        ->check(CLI::IsMember({"file", "random"}));
    cmd->add_option("--init-scale", c.init_scale, "Std deviation of random weights");
    cmd->add_option("--preprocess", c.preprocess,
                    "Pixel preprocessing: auto uses the weight sidecar if present, else the "
                    "VGG-19 convention for vgg19 and identity for tiny")
        ->check(CLI::IsMember({"auto", "vgg19", "identity"}));
    cmd->add_option("--pooling", c.pooling, "Pooling mode")->check(CLI::IsMember({"avg", "max"}));
    cmd->add_option("--seed", c.seed, "Seed for every random draw");
    cmd->add_option("--threads", c.threads, "Worker threads (0: all cores)");
}

void add_layer_flags(CLI::App* cmd, Common& c) {
    auto* layers = cmd->add_option("--layers", c.layers,
                                   "Comma-separated layer names (default: first conv layer and "
                                   "every pool up to pool4)");
    cmd->add_option("--up-to", c.up_to, "All layers at or below this one")->excludes(layers);
}

void add_statistic_flag(CLI::App* cmd, Common& c) {
    cmd->add_option("--statistic", c.statistic, "gram, mean or pca:K");
}

// Independent streams for weights and noise, both from --seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

NetworkSpec spec_for(const Common& c) { return c.net == "tiny" ? build_tiny_spec() : build_vgg19_spec(); }

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) throw UsageError("empty name in layer list '" + text + "'");
        out.push_back(item);
    }
    return out;
}

std::vector<std::string> default_layers(const NetworkSpec& spec) {
    std::vector<std::string> out;
    for (const LayerSpec& l : spec.layers()) {
        if (l.kind == LayerKind::conv_relu && out.empty()) out.push_back(l.name);
        if (l.kind == LayerKind::pool && l.name != "pool5") out.push_back(l.name);
    }
    return out;
}

std::vector<std::string> resolve_layers(const Common& c, const NetworkSpec& spec) {
    if (!c.up_to.empty()) return spec.layers_up_to(c.up_to);
    if (c.layers.empty()) return default_layers(spec);
    std::vector<std::string> out = split_list(c.layers);
    for (const std::string& name : out) spec.require(name);
    return out;
}

Network make_network(const Common& c) {
    const NetworkSpec spec = spec_for(c);
    if (c.init_weights == "random") {
        if (!(c.init_scale > 0.0)) throw UsageError("--init-scale must be positive");
        return random_init(spec, derive_seed(c.seed, 0), c.init_scale);
    }
    if (c.weights.empty()) throw UsageError("--weights is required unless --init-weights random");
    return load_weights(c.weights, spec);
}

PreprocessSpec preprocess_for(const Common& c) {
    if (c.preprocess == "vgg19") return PreprocessSpec::vgg19();
    if (c.preprocess == "identity") return PreprocessSpec::identity();
    if (c.init_weights == "file" && !c.weights.empty())
        if (auto side = read_preprocess_sidecar(c.weights)) return *side;
    return c.net == "vgg19" ? PreprocessSpec::vgg19() : PreprocessSpec::identity();
}

// Checks up front that the image survives every pooling below `top`, and
// says which sizes would.
void check_dims(const NetworkSpec& spec, const std::vector<std::string>& layers, std::size_t height,
                std::size_t width, const std::string& what) {
    std::size_t depth = 0;
    std::string deepest;
    for (const std::string& l : layers) {
        const std::size_t d = spec.pool_depth(l);
        if (d >= depth) {
            depth = d;
            deepest = l;
        }
    }
    const std::size_t mult = std::size_t{1} << depth;
    if (height == 0 || width == 0 || height % mult != 0 || width % mult != 0) {
        const std::size_t h = std::max(mult, height / mult * mult);
        const std::size_t w = std::max(mult, width / mult * mult);
        throw ValidationError(what + " is " + std::to_string(width) + "x" + std::to_string(height) +
                              "; layer " + deepest + " needs width and height divisible by " +
                              std::to_string(mult) + " (e.g. " + std::to_string(w) + "x" +
                              std::to_string(h) + ")");
    }
}

FeatureTensor load_image(const std::string& path, const PreprocessSpec& pre) {
    return preprocess(load_ppm(path), pre);
}

std::vector<fs::path> list_ppm(const std::string& dir) {
    if (!fs::is_directory(dir)) throw ValidationError("calibration directory '" + dir + "' not found");
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".ppm") out.push_back(e.path());
    std::sort(out.begin(), out.end());
    if (out.empty()) throw ValidationError("no .ppm images in '" + dir + "'");
    return out;
}

std::map<std::string, PCABasis, std::less<>> load_basis_map(const std::string& path) {
    std::map<std::string, PCABasis, std::less<>> out;
    if (path.empty()) return out;
    for (PCABasis& b : load_bases(path)) {
        std::string name = b.layer;
        out.emplace(std::move(name), std::move(b));
    }
    return out;
}

void print_descriptor(const TextureDescriptor& d, const NetworkSpec& spec, const StatisticConfig& st) {
    const char* kind_names[] = {"gram", "pca", "mean"};
    for (const DescriptorEntry& e : d.entries) {
        std::printf("%-8s %-4s N=%zu M=%zu n=%zu\n", e.layer.c_str(),
                    kind_names[static_cast<int>(e.kind)], e.features, e.positions, e.n);
    }
    const std::vector<std::string> layers = d.layers();
    std::printf("%llu parameters\n",
                static_cast<unsigned long long>(count_parameters(spec, layers, st)));
}

StatisticConfig statistic_of(const TextureDescriptor& d) {
    StatisticConfig st;
    if (d.entries.empty()) return st;
    st.kind = d.entries.front().kind;
    if (st.kind == StatisticKind::pca) st.k = d.entries.front().n;
    return st;
}

void write_lines(const std::vector<double>& values, const std::string& path) {
    std::ofstream file;
    if (!path.empty()) {
        file.open(path, std::ios::trunc);
        if (!file) throw ValidationError("cannot open '" + path + "' for writing");
    }
    std::ostream& out = path.empty() ? std::cout : file;
    char buf[40];
    for (double v : values) {
        std::snprintf(buf, sizeof buf, "%.17g\n", v);
        out << buf;
    }
}

// ---- subcommands ----

struct DescribeArgs {
    std::string source;
    std::string out;
    std::string pca_basis;
};

TextureDescriptor describe_source(const Common& c, const Network& net, const std::string& source,
                                  const std::string& pca_basis) {
    DescribeConfig dc;
    dc.layers = resolve_layers(c, net.spec);
    dc.statistic = StatisticConfig::parse(c.statistic);
    dc.pool_mode = parse_pool_mode(c.pooling);
    dc.bases = load_basis_map(pca_basis);
    const FeatureTensor img = load_image(source, preprocess_for(c));
    check_dims(net.spec, dc.layers, img.height(), img.width(), "source image " + source);
    return describe(net, img, dc);
}

int cmd_describe(const Common& c, const DescribeArgs& a) {
    const Network net = make_network(c);
    const TextureDescriptor d = describe_source(c, net, a.source, a.pca_basis);
    print_descriptor(d, net.spec, statistic_of(d));
    if (!a.out.empty()) save_descriptor(d, a.out);
    return 0;
}

struct SynthArgs {
    std::string source;
    std::string descriptor;
    std::string pca_basis;
    std::string out;
    std::string trace;
    std::string size;
    std::string init_image;
    std::vector<std::string> layer_weights;
    bool allow_size_mismatch = false;
    double noise_amplitude = 0.1;
    LbfgsOptions lbfgs;
};

std::pair<std::size_t, std::size_t> parse_size(const std::string& text) {
    unsigned long w = 0, h = 0;
    char x = 0, extra = 0;
    if (std::sscanf(text.c_str(), "%lu%c%lu%c", &w, &x, &h, &extra) != 3 || x != 'x' || w == 0 || h == 0)
        throw UsageError("--size expects WIDTHxHEIGHT, got '" + text + "'");
    return {h, w};
}

int cmd_synthesize(const Common& c, const SynthArgs& a) {
    const Network net = make_network(c);
    const PreprocessSpec pre = preprocess_for(c);
    a.lbfgs.validate();

    TextureDescriptor target;
    SynthesisConfig sc;
    if (!a.source.empty()) {
        target = describe_source(c, net, a.source, a.pca_basis);
        const Image8 src = load_ppm(a.source);
        sc.height = src.height;
        sc.width = src.width;
    } else {
        target = load_descriptor(a.descriptor);
        if (!c.layers.empty() || !c.up_to.empty()) sc.layers = resolve_layers(c, net.spec);
    }
    for (const std::string& lw : a.layer_weights) {
        const auto eq = lw.find('=');
        if (eq == std::string::npos) throw UsageError("--layer-weight expects NAME=W, got '" + lw + "'");
        try {
            sc.weights[lw.substr(0, eq)] = std::stod(lw.substr(eq + 1));
        } catch (const std::logic_error&) {
            throw UsageError("--layer-weight expects NAME=W, got '" + lw + "'");
        }
    }
    if (!a.size.empty()) std::tie(sc.height, sc.width) = parse_size(a.size);
    if (!a.init_image.empty()) {
        sc.initial_image = load_image(a.init_image, pre);
        if (a.size.empty() && a.source.empty()) sc.height = sc.width = 0;
    }
    sc.pool_mode = parse_pool_mode(c.pooling);
    sc.allow_size_mismatch = a.allow_size_mismatch;
    sc.seed = derive_seed(c.seed, 1);
    sc.noise_amplitude = a.noise_amplitude;
    sc.lbfgs = a.lbfgs;

    const auto [height, width] = resolve_dims(net, target, sc);
    check_dims(net.spec, sc.layers.empty() ? target.layers() : sc.layers, height, width, "output size");
    sc.height = height;
    sc.width = width;

    try {
        const SynthesisResult r = synthesize(net, target, sc);
        if (!a.trace.empty()) save_trace_csv(r.trace, a.trace);
        save_ppm(postprocess(r.image, pre), a.out);
        std::printf("final loss %.17g after %zu iterations (%s), %.2f s\n", r.final_loss,
                    r.trace.rows.empty() ? std::size_t{0} : r.trace.rows.back().iteration,
                    termination_name(r.trace.termination), r.trace.wall_seconds);
        return 0;
    } catch (const SynthesisAborted& e) {
        if (!a.trace.empty()) save_trace_csv(e.partial_trace(), a.trace);
        throw;
    }
}

struct RescaleArgs {
    std::string calibration;
    std::string out;
};

int cmd_rescale(const Common& c, const RescaleArgs& a) {
    const Network net = make_network(c);
    const PreprocessSpec pre = preprocess_for(c);
    const std::vector<fs::path> files = list_ppm(a.calibration);
    std::vector<FeatureTensor> images;
    const std::vector<std::string> all = net.spec.layers_up_to(net.spec.layers().back().name);
    for (const fs::path& f : files) {
        images.push_back(load_image(f.string(), pre));
        check_dims(net.spec, all, images.back().height(), images.back().width(),
                   "calibration image " + f.string());
    }
    const Network scaled = rescale_weights(net, images, parse_pool_mode(c.pooling));
    save_weights(scaled, a.out);

    nlohmann::ordered_json meta;
    meta["channel_order"] = pre.channel_order == ChannelOrder::bgr ? "bgr" : "rgb";
    meta["preprocessing_means"] = pre.channel_means;
    meta["scale"] = pre.scale;
    meta["source_weights"] = c.init_weights == "random"
                                 ? "random:seed=" + std::to_string(c.seed)
                                 : c.weights;
    nlohmann::ordered_json names = nlohmann::ordered_json::array();
    for (const fs::path& f : files) names.push_back(f.filename().string());
    meta["rescaling"] = {{"calibration_dir", a.calibration},
                         {"images", names},
                         {"pooling", c.pooling}};
    std::ofstream side(sidecar_path(a.out), std::ios::trunc);
    if (!side) throw ValidationError("cannot write " + sidecar_path(a.out).string());
    side << meta.dump(2) << '\n';
    std::printf("rescaled %zu conv layers on %zu images\n", net.weights.size(), files.size());
    return 0;
}

struct PcaArgs {
    std::string calibration;
    std::string source;
    std::size_t k = 64;
    std::string out;
};

int cmd_pca_fit(const Common& c, const PcaArgs& a) {
    const Network net = make_network(c);
    const PreprocessSpec pre = preprocess_for(c);
    const std::vector<std::string> layers = resolve_layers(c, net.spec);
    std::vector<fs::path> files;
    if (!a.source.empty())
        files.push_back(a.source);
    else
        files = list_ppm(a.calibration);

    std::size_t top = 0;
    for (const std::string& l : layers) top = std::max(top, net.spec.require(l));
    const std::string& top_name = net.spec.layers()[top].name;
    std::map<std::string, std::vector<FeatureTensor>> samples;
    for (const fs::path& f : files) {
        const FeatureTensor img = load_image(f.string(), pre);
        check_dims(net.spec, layers, img.height(), img.width(), "image " + f.string());
        const ActivationSet acts = forward(net, img, top_name, parse_pool_mode(c.pooling));
        for (const std::string& l : layers) samples[l].push_back(acts.output(l));
    }
    std::vector<PCABasis> bases;
    for (const std::string& l : layers) {
        bases.push_back(pca_fit(samples[l], a.k, l));
        const PCABasis& b = bases.back();
        std::printf("%-8s k=%zu of %zu, leading variance %.6g\n", l.c_str(), b.k, b.features,
                    b.variances.empty() ? 0.0 : b.variances.front());
    }
    save_bases(bases, a.out);
    return 0;
}

int cmd_count_params(const Common& c) {
    const NetworkSpec spec = spec_for(c);
    const std::vector<std::string> layers = resolve_layers(c, spec);
    std::printf("%llu\n", static_cast<unsigned long long>(
                              count_parameters(spec, layers, StatisticConfig::parse(c.statistic))));
    return 0;
}

struct ExportArgs {
    std::string source;
    std::string descriptor;
    std::string pca_basis;
    std::string out;
};

int cmd_export(const Common& c, const ExportArgs& a) {
    TextureDescriptor d;
    if (!a.descriptor.empty()) {
        d = load_descriptor(a.descriptor);
    } else {
        const Network net = make_network(c);
        d = describe_source(c, net, a.source, a.pca_basis);
    }
    write_lines(export_descriptor_vector(d), a.out);
    return 0;
}

int cmd_gradcheck(const Common& c) {
    bool ok = true;
    for (const tools::GradCheck& g : tools::run_gradcheck(c.seed)) {
        std::printf("%-4s %-28s samples=%-3zu skipped=%-2zu max_rel_err=%.3e tol=%.0e\n",
                    g.passed() ? "ok" : "FAIL", g.name.c_str(), g.samples, g.skipped, g.max_rel_error,
                    g.tolerance);
        ok = ok && g.passed();
    }
    return ok ? 0 : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Texture synthesis with CNN feature statistics"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.set_version_flag("--version", "texsyn 0.1.0");

    Common common;
    DescribeArgs describe_args;
    SynthArgs synth_args;
    RescaleArgs rescale_args;
    PcaArgs pca_args;
    ExportArgs export_args;

    auto* describe_cmd = app.add_subcommand("describe", "Compute a texture descriptor");
    add_network_flags(describe_cmd, common);
    add_layer_flags(describe_cmd, common);
    add_statistic_flag(describe_cmd, common);
    describe_cmd->add_option("--source", describe_args.source, "Source texture (PPM)")->required();
    describe_cmd->add_option("--out", describe_args.out, "Descriptor file to write (GRMD0001)");
    describe_cmd->add_option("--pca-basis", describe_args.pca_basis,
                             "PCAB0001 basis file; default fits on the source");

    auto* synth_cmd = app.add_subcommand("synthesize", "Synthesize a texture from white noise");
    add_network_flags(synth_cmd, common);
    add_layer_flags(synth_cmd, common);
    add_statistic_flag(synth_cmd, common);
    auto* src_opt = synth_cmd->add_option("--source", synth_args.source, "Source texture (PPM)");
    auto* desc_opt = synth_cmd->add_option("--descriptor", synth_args.descriptor, "Target descriptor");
    src_opt->excludes(desc_opt);
    synth_cmd->add_option("--pca-basis", synth_args.pca_basis, "PCAB0001 basis file");
    synth_cmd->add_option("--out", synth_args.out, "Output image (PPM)")->required();
    synth_cmd->add_option("--trace", synth_args.trace, "Per-iteration CSV trace");
    synth_cmd->add_option("--size", synth_args.size, "Output WIDTHxHEIGHT (default: source size)");
    synth_cmd->add_flag("--allow-size-mismatch", synth_args.allow_size_mismatch,
                        "Accept an output size whose positions per layer differ from the source");
    synth_cmd->add_option("--init-image", synth_args.init_image, "Start from this image, not noise");
    synth_cmd->add_option("--layer-weight", synth_args.layer_weights, "NAME=W, repeatable (default 1)");
    synth_cmd->add_option("--noise-amplitude", synth_args.noise_amplitude,
                          "Half-width of the uniform starting noise");
    synth_cmd->add_option("--iters", synth_args.lbfgs.max_iters, "Maximum L-BFGS iterations");
    synth_cmd->add_option("--memory", synth_args.lbfgs.memory, "L-BFGS history pairs");
    synth_cmd->add_option("--grad-tol", synth_args.lbfgs.grad_tol, "Stop when |grad|_inf is below");
    synth_cmd->add_option("--rel-loss-tol", synth_args.lbfgs.rel_loss_tol,
                          "Stop when the relative loss decrease is below");
    synth_cmd->add_option("--c1", synth_args.lbfgs.c1, "Sufficient decrease constant");
    synth_cmd->add_option("--c2", synth_args.lbfgs.c2, "Curvature constant");
    synth_cmd->add_option("--max-line-search-evals", synth_args.lbfgs.max_line_search_evals,
                          "Evaluations per line search");

    auto* rescale_cmd = app.add_subcommand("rescale-weights", "Normalize mean filter activations to 1");
    add_network_flags(rescale_cmd, common);
    rescale_cmd->add_option("--calibration", rescale_args.calibration, "Directory of PPM images")
        ->required();
    rescale_cmd->add_option("--out", rescale_args.out, "Rescaled weight file")->required();

    auto* pca_cmd = app.add_subcommand("pca-fit", "Fit per-layer PCA bases");
    add_network_flags(pca_cmd, common);
    add_layer_flags(pca_cmd, common);
    auto* cal_opt = pca_cmd->add_option("--calibration", pca_args.calibration, "Directory of PPM images");
    auto* psrc_opt = pca_cmd->add_option("--source", pca_args.source, "Single PPM image");
    cal_opt->excludes(psrc_opt);
    pca_cmd->add_option("--k", pca_args.k, "Principal components kept");
    pca_cmd->add_option("--out", pca_args.out, "Basis file to write (PCAB0001)")->required();

    auto* count_cmd = app.add_subcommand("count-params", "Count descriptor parameters");
    count_cmd->add_option("--net", common.net, "Network architecture")
        ->check(CLI::IsMember({"vgg19", "tiny"}));
    add_layer_flags(count_cmd, common);
    add_statistic_flag(count_cmd, common);

    auto* export_cmd = app.add_subcommand("export-features", "Write the flat descriptor vector");
    add_network_flags(export_cmd, common);
    add_layer_flags(export_cmd, common);
    add_statistic_flag(export_cmd, common);
    auto* esrc_opt = export_cmd->add_option("--source", export_args.source, "Source texture (PPM)");
    auto* edesc_opt = export_cmd->add_option("--descriptor", export_args.descriptor, "Descriptor file");
    esrc_opt->excludes(edesc_opt);
    export_cmd->add_option("--pca-basis", export_args.pca_basis, "PCAB0001 basis file");
    export_cmd->add_option("--out", export_args.out, "Text file, one value per line (default stdout)");

    auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every gradient");
    grad_cmd->add_option("--seed", common.seed, "Seed for the random instances");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitInvalid;
    }

    try {
        set_thread_count(common.threads);
        if (*describe_cmd) return cmd_describe(common, describe_args);
        if (*synth_cmd) {
            if (synth_args.source.empty() == synth_args.descriptor.empty())
                throw UsageError("give exactly one of --source and --descriptor");
            return cmd_synthesize(common, synth_args);
        }
        if (*rescale_cmd) return cmd_rescale(common, rescale_args);
        if (*pca_cmd) {
            if (pca_args.source.empty() == pca_args.calibration.empty())
                throw UsageError("give exactly one of --calibration and --source");
            return cmd_pca_fit(common, pca_args);
        }
        if (*count_cmd) return cmd_count_params(common);
        if (*export_cmd) {
            if (export_args.source.empty() == export_args.descriptor.empty())
                throw UsageError("give exactly one of --source and --descriptor");
            return cmd_export(common, export_args);
        }
        if (*grad_cmd) return cmd_gradcheck(common);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitInvalid;
}
