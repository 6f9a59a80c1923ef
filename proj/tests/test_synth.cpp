#include <doctest.h>

#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "texsyn/errors.hpp"
#include "texsyn/gram.hpp"
#include "texsyn/network.hpp"
#include "texsyn/synth.hpp"
#include "support/finite_diff.hpp"
#include "support/fixtures.hpp"

using namespace texsyn;
using namespace texsyn::testing;

namespace {

Network tiny_net(std::uint64_t seed) {
    Network net = random_init(build_tiny_spec(), seed, 0.3);
    std::mt19937_64 rng(seed + 1000);
    std::normal_distribution<double> n(0.0, 0.1);
    for (ConvWeights& w : net.weights)
        for (double& b : w.bias) b = static_cast<float>(n(rng));
    return net;
}

TextureDescriptor target_of(const Network& net, const FeatureTensor& img,
                            std::vector<std::string> layers, const char* statistic = "gram") {
    DescribeConfig cfg;
    cfg.layers = std::move(layers);
    cfg.statistic = StatisticConfig::parse(statistic);
    return describe(net, img, cfg);
}

SynthesisConfig quick_config(std::size_t iters) {
    SynthesisConfig cfg;
    cfg.seed = 4;
    cfg.lbfgs.max_iters = iters;
    return cfg;
}

}  // namespace

TEST_CASE("white noise initialisation") {
    const FeatureTensor a = init_white_noise(6, 5, 9, 0.25);
    CHECK(a.channels() == 3);
    CHECK(a.height() == 6);
    CHECK(a.width() == 5);
    CHECK(max_abs(a.values()) <= 0.25);
    CHECK(max_abs(a.values()) > 0.1);
    CHECK(init_white_noise(6, 5, 9, 0.25) == a);
    CHECK_FALSE(init_white_noise(6, 5, 10, 0.25) == a);
    const FeatureTensor big = init_white_noise(32, 32, 1, 2.0);
    double mean = 0.0;
    for (double v : big.values()) mean += v / static_cast<double>(big.size());
    CHECK(std::abs(mean) < 4.0 * 2.0 / std::sqrt(3.0 * 32 * 32));
    CHECK_THROWS_AS(init_white_noise(6, 5, 9, 0.0), ValidationError);
    CHECK_THROWS_AS(init_white_noise(6, 5, 9, std::numeric_limits<double>::infinity()), ValidationError);
}

TEST_CASE("pixel gradient matches finite differences for every statistic") {
    const Network net = tiny_net(3);
    const FeatureTensor source = random_tensor(4, 3, 8, 8);
    const FeatureTensor x = random_tensor(5, 3, 8, 8);
    for (const char* stat : {"gram", "mean", "pca:4"}) {
        const TextureDescriptor target = target_of(net, source, {"conv1_1", "conv1_2", "pool1"}, stat);
        SynthesisConfig cfg;
        cfg.weights = {{"conv1_1", 0.5}, {"pool1", 2.0}};
        const Functional f = [&](const FeatureTensor& img) {
            return loss_and_pixel_grad(net, img, target, cfg).loss;
        };
        const LossAndGradient lg = loss_and_pixel_grad(net, x, target, cfg);
        CHECK(lg.layer_losses.size() == 3);
        CHECK(lg.loss == doctest::Approx(0.5 * lg.layer_losses[0] + lg.layer_losses[1] +
                                         2.0 * lg.layer_losses[2]));
        const FdReport r = check_gradient(f, x, lg.pixel_grad, 40, 1e-6, 6, true);
        CAPTURE(stat);
        CHECK(r.checked >= 25);
        CHECK(r.max_rel < 1e-4);
    }
}

TEST_CASE("the source image has zero loss against its own descriptor") {
    const Network net = tiny_net(7);
    const FeatureTensor source = random_tensor(8, 3, 8, 8);
    const TextureDescriptor target = target_of(net, source, {"conv1_1", "pool1"});
    const LossAndGradient lg = loss_and_pixel_grad(net, source, target, SynthesisConfig{});
    CHECK(lg.loss == 0.0);
    CHECK(max_abs(lg.pixel_grad.values()) == 0.0);
}

TEST_CASE("doubling a single layer's weight doubles the loss") {
    const Network net = tiny_net(7);
    const TextureDescriptor target = target_of(net, random_tensor(8, 3, 8, 8), {"conv1_2"});
    const FeatureTensor x = random_tensor(9, 3, 8, 8);
    SynthesisConfig twice;
    twice.weights = {{"conv1_2", 2.0}};
    CHECK(loss_and_pixel_grad(net, x, target, twice).loss == 2.0 * loss_and_pixel_grad(net, x, target, {}).loss);
}

TEST_CASE("zero-weight layers are reported but do not pull") {
    const Network net = tiny_net(7);
    const TextureDescriptor target = target_of(net, random_tensor(8, 3, 8, 8), {"conv1_1", "pool1"});
    const FeatureTensor x = random_tensor(9, 3, 8, 8);
    SynthesisConfig only_pool;
    only_pool.layers = {"pool1"};
    SynthesisConfig zero_conv;
    zero_conv.weights = {{"conv1_1", 0.0}};
    const LossAndGradient a = loss_and_pixel_grad(net, x, target, only_pool);
    const LossAndGradient b = loss_and_pixel_grad(net, x, target, zero_conv);
    CHECK(a.pixel_grad == b.pixel_grad);
    CHECK(a.loss == b.loss);
    CHECK(b.layer_losses.size() == 2);
    CHECK(b.layer_losses[0] > 0.0);
}

TEST_CASE("loss configuration errors") {
    const Network net = tiny_net(7);
    const TextureDescriptor target = target_of(net, random_tensor(8, 3, 8, 8), {"conv1_1", "pool1"});
    const FeatureTensor x = random_tensor(9, 3, 8, 8);
    SynthesisConfig cfg;
    cfg.layers = {"conv1_2"};
    CHECK_THROWS_WITH_AS(loss_and_pixel_grad(net, x, target, cfg), doctest::Contains("conv1_2"),
                         ValidationError);
    cfg = {};
    cfg.weights = {{"pool1", -1.0}};
    CHECK_THROWS_AS(loss_and_pixel_grad(net, x, target, cfg), ValidationError);
    cfg.weights = {{"pool1", std::numeric_limits<double>::quiet_NaN()}};
    CHECK_THROWS_AS(loss_and_pixel_grad(net, x, target, cfg), ValidationError);
    cfg.weights = {{"pool1", 0.0}, {"conv1_1", 0.0}};
    CHECK_THROWS_AS(loss_and_pixel_grad(net, x, target, cfg), ValidationError);
    CHECK_THROWS_AS(loss_and_pixel_grad(net, x, TextureDescriptor{}, SynthesisConfig{}), ValidationError);

    const FeatureTensor bigger = random_tensor(9, 3, 8, 12);
    CHECK_THROWS_WITH_AS(loss_and_pixel_grad(net, bigger, target, SynthesisConfig{}),
                         doctest::Contains("positions"), DimensionError);
    SynthesisConfig lenient;
    lenient.allow_size_mismatch = true;
    const LossAndGradient lg = loss_and_pixel_grad(net, bigger, target, lenient);
    CHECK(lg.pixel_grad.width() == 12);
}

TEST_CASE("output size resolution") {
    const Network vgg = random_init(build_vgg19_spec(), 1, 0.05);
    const TextureDescriptor square = target_of(vgg, random_tensor(2, 3, 32, 32, 0.0, 50.0), {"pool2", "conv1_1"});
    CHECK(resolve_dims(vgg, square, SynthesisConfig{}) == std::pair<std::size_t, std::size_t>{32, 32});
    SynthesisConfig cfg;
    cfg.height = 16;
    cfg.width = 48;
    CHECK(resolve_dims(vgg, square, cfg) == std::pair<std::size_t, std::size_t>{16, 48});
    cfg.width = 0;
    CHECK_THROWS_AS(resolve_dims(vgg, square, cfg), ValidationError);
    cfg = {};
    cfg.initial_image = FeatureTensor(3, 8, 24);
    CHECK(resolve_dims(vgg, square, cfg) == std::pair<std::size_t, std::size_t>{8, 24});

    const TextureDescriptor wide = target_of(vgg, random_tensor(2, 3, 16, 32, 0.0, 50.0), {"conv1_1"});
    CHECK_THROWS_WITH_AS(resolve_dims(vgg, wide, SynthesisConfig{}), doctest::Contains("not square"),
                         ValidationError);
}

TEST_CASE("synthesis lowers the loss and keeps a consistent trace") {
    const Network net = tiny_net(11);
    const TextureDescriptor target = target_of(net, periodic_texture(12, 16, 16, 4), {"conv1_1", "conv1_2"});
    SynthesisConfig cfg = quick_config(25);
    cfg.weights = {{"conv1_2", 3.0}};
    const SynthesisResult r = synthesize(net, target, cfg);
    CHECK(r.image.height() == 16);
    CHECK(r.trace.layers == std::vector<std::string>{"conv1_1", "conv1_2"});
    REQUIRE(r.trace.rows.size() >= 2);
    CHECK(r.trace.rows.front().iteration == 0);
    CHECK(r.trace.rows.back().total_loss == r.final_loss);
    CHECK(r.final_loss < 1e-2 * r.trace.rows.front().total_loss);
    for (std::size_t i = 0; i < r.trace.rows.size(); ++i) {
        const TraceRow& row = r.trace.rows[i];
        REQUIRE(row.layer_losses.size() == 2);
        CHECK(row.total_loss == doctest::Approx(row.layer_losses[0] + 3.0 * row.layer_losses[1]));
        if (i > 0) CHECK(row.total_loss <= r.trace.rows[i - 1].total_loss);
    }
    CHECK(r.trace.evaluations >= r.trace.rows.size());
    CHECK(r.trace.wall_seconds >= 0.0);

    const LossAndGradient check = loss_and_pixel_grad(net, r.image, target, cfg);
    CHECK(check.loss == r.final_loss);
}

TEST_CASE("synthesis is bitwise reproducible and seed dependent") {
    const Network net = tiny_net(11);
    const TextureDescriptor target = target_of(net, periodic_texture(12, 16, 16, 4), {"conv1_1"});
    const SynthesisResult a = synthesize(net, target, quick_config(8));
    const SynthesisResult b = synthesize(net, target, quick_config(8));
    CHECK(std::memcmp(a.image.data(), b.image.data(), a.image.size() * sizeof(double)) == 0);
    SynthesisConfig other = quick_config(8);
    other.seed = 5;
    CHECK_FALSE(synthesize(net, target, other).image == a.image);
}

TEST_CASE("starting from the source image stops immediately") {
    const Network net = tiny_net(11);
    const FeatureTensor source = periodic_texture(12, 16, 16, 4);
    SynthesisConfig cfg = quick_config(10);
    cfg.initial_image = source;
    const SynthesisResult r = synthesize(net, target_of(net, source, {"conv1_1"}), cfg);
    CHECK(r.trace.termination == Termination::grad_tol);
    CHECK(r.trace.rows.size() == 1);
    CHECK(r.image == source);

    cfg.height = 8;
    cfg.width = 8;
    CHECK_THROWS_AS(synthesize(net, target_of(net, source, {"conv1_1"}), cfg), DimensionError);
}

TEST_CASE("overflow aborts with the trace so far") {
    const Network net = tiny_net(11);
    const TextureDescriptor target = target_of(net, periodic_texture(12, 8, 8, 4), {"conv1_2"});
    SynthesisConfig cfg = quick_config(10);
    cfg.initial_image = random_tensor(3, 3, 8, 8, -1e200, 1e200);
    try {
        synthesize(net, target, cfg);
        FAIL("expected SynthesisAborted");
    } catch (const SynthesisAborted& e) {
        CHECK(e.partial_trace().rows.empty());
        CHECK(e.partial_trace().layers == std::vector<std::string>{"conv1_2"});
        CHECK(std::string(e.what()).find("aborted") != std::string::npos);
    }
}

TEST_CASE("trace CSV layout") {
    SynthesisTrace t;
    t.layers = {"conv1_1", "pool1"};
    t.rows.push_back({0, 1.5, 0.25, {1.0, 0.5}});
    t.rows.push_back({1, 0.1, 1.0 / 3.0, {0.0625, 0.0375}});
    std::ostringstream out;
    write_trace_csv(t, out);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "iter,total_loss,grad_supnorm,E_conv1_1,E_pool1");
    std::getline(in, line);
    CHECK(line == "0,1.5,0.25,1,0.5");
    std::getline(in, line);
    CHECK(line == "1,0.10000000000000001,0.33333333333333331,0.0625,0.037499999999999999");
    CHECK_FALSE(std::getline(in, line));

    const auto path = temp_path("trace.csv");
    save_trace_csv(t, path);
    std::ifstream file(path);
    std::stringstream all;
    all << file.rdbuf();
    CHECK(all.str() == out.str());
    CHECK_THROWS_AS(save_trace_csv(t, temp_path("no_such_dir") / "x" / "trace.csv"), ValidationError);
}
