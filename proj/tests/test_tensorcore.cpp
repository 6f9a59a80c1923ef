#include <doctest.h>

#include "support/finite_diff.hpp"
#include "support/fixtures.hpp"
#include "texsyn/errors.hpp"
#include "texsyn/ops.hpp"
#include "texsyn/parallel.hpp"

using namespace texsyn;
using namespace texsyn::testing;

namespace {

ConvWeights delta_kernel(std::size_t channels) {
    ConvWeights w(channels, channels);
    for (std::size_t c = 0; c < channels; ++c) w.kernel[(c * channels + c) * 9 + 4] = 1.0;
    return w;
}

FeatureTensor from(std::size_t c, std::size_t h, std::size_t w, std::vector<double> v) {
    return FeatureTensor(c, h, w, std::move(v));
}

}  // namespace

TEST_CASE("tensor shape and storage") {
    FeatureTensor t(2, 3, 4, 1.5);
    CHECK(t.size() == 24);
    CHECK(t.spatial() == 12);
    CHECK(t.at(1, 2, 3) == 1.5);
    t.at(1, 0, 2) = 7.0;
    CHECK(t.channel(1)[2] == 7.0);
    CHECK(t.shape_string() == "2x3x4");
    CHECK_THROWS_AS(FeatureTensor(2, 2, 2, std::vector<double>(7)), DimensionError);
    t.at(0, 0, 0) = std::nan("");
    CHECK_FALSE(t.all_finite());
}

TEST_CASE("conv weights validation") {
    ConvWeights w(2, 3);
    CHECK(w.kernel.size() == 54);
    CHECK_NOTHROW(w.validate());
    w.kernel[5] = INFINITY;
    CHECK_THROWS_AS(w.validate(), ValidationError);
}

TEST_CASE("conv of zero input is the bias") {
    ConvWeights w = random_conv(1, 1, 1);
    w.bias[0] = 0.75;
    const FeatureTensor y = conv3x3_forward(FeatureTensor(1, 3, 3), w);
    for (double v : y.values()) CHECK(v == 0.75);
}

TEST_CASE("conv with a centered delta is the identity") {
    const FeatureTensor x = random_tensor(2, 3, 5, 7);
    CHECK(conv3x3_forward(x, delta_kernel(3)) == x);
}

TEST_CASE("conv 2x2 input with all-ones kernel") {
    ConvWeights w(1, 1);
    std::fill(w.kernel.begin(), w.kernel.end(), 1.0);
    const FeatureTensor y = conv3x3_forward(from(1, 2, 2, {1, 2, 3, 4}), w);
    CHECK(vec(y) == std::vector<double>{10, 10, 10, 10});
}

TEST_CASE("conv handles 1x1 and wide images") {
    ConvWeights w = random_conv(3, 5, 2);
    const FeatureTensor one = random_tensor(4, 2, 1, 1);
    const FeatureTensor y = conv3x3_forward(one, w);
    // Only the center tap sees data.
    for (std::size_t o = 0; o < 5; ++o) {
        double expect = w.bias[o];
        for (std::size_t c = 0; c < 2; ++c) expect = expect + w.k(o, c, 1, 1) * one.at(c, 0, 0);
        CHECK(y.at(o, 0, 0) == doctest::Approx(expect).epsilon(1e-15));
    }
    CHECK(conv3x3_forward(random_tensor(5, 2, 3, 37), w).width() == 37);
}

TEST_CASE("conv rejects a channel mismatch") {
    CHECK_THROWS_AS(conv3x3_forward(FeatureTensor(2, 4, 4), ConvWeights(3, 3)), DimensionError);
    CHECK_THROWS_AS(conv3x3_backward_input(FeatureTensor(2, 4, 4), ConvWeights(3, 3)), DimensionError);
}

TEST_CASE("conv is linear without bias") {
    ConvWeights w = random_conv(6, 4, 3, 0.5, false);
    const FeatureTensor x = random_tensor(7, 3, 6, 9), y = random_tensor(8, 3, 6, 9);
    const double a = 0.7, b = -1.3;
    FeatureTensor mix(3, 6, 9);
    for (std::size_t i = 0; i < mix.size(); ++i) mix.data()[i] = a * x.data()[i] + b * y.data()[i];
    const FeatureTensor lhs = conv3x3_forward(mix, w);
    const FeatureTensor fx = conv3x3_forward(x, w), fy = conv3x3_forward(y, w);
    std::vector<double> rhs(lhs.size());
    for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = a * fx.data()[i] + b * fy.data()[i];
    CHECK(frobenius_rel(lhs.values(), rhs) < 1e-12);
}

TEST_CASE("conv backward is the adjoint of forward") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const ConvWeights w = random_conv(10 + seed, 4, 3);
        const FeatureTensor x = random_tensor(20 + seed, 3, 7, 6);
        const FeatureTensor g = random_tensor(30 + seed, 4, 7, 6);
        const FeatureTensor fx = conv3x3_forward(x, w);
        const FeatureTensor f0 = conv3x3_forward(FeatureTensor(3, 7, 6), w);
        double lhs = 0.0;
        for (std::size_t i = 0; i < fx.size(); ++i) lhs += (fx.data()[i] - f0.data()[i]) * g.data()[i];
        const double rhs = dot(x, conv3x3_backward_input(g, w));
        CHECK(rel_error(lhs, rhs) < 1e-10);
    }
}

TEST_CASE("conv backward of zero is zero; delta kernel passes gradients through") {
    const ConvWeights w = random_conv(11, 3, 2);
    const FeatureTensor zero = conv3x3_backward_input(FeatureTensor(3, 4, 5), w);
    for (double v : zero.values()) CHECK(v == 0.0);
    const FeatureTensor g = random_tensor(12, 3, 4, 5);
    CHECK(conv3x3_backward_input(g, delta_kernel(3)) == g);
}

TEST_CASE("conv backward matches finite differences") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const ConvWeights w = random_conv(40 + seed, 3, 2);
        const FeatureTensor x = random_tensor(60 + seed, 2, 5, 4);
        const FeatureTensor q = random_tensor(80 + seed, 3, 5, 4, 0.5, 1.5);
        const Functional f = [&](const FeatureTensor& in) {
            const FeatureTensor y = conv3x3_forward(in, w);
            double s = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) s += 0.5 * q.data()[i] * y.data()[i] * y.data()[i];
            return s;
        };
        const FeatureTensor y = conv3x3_forward(x, w);
        FeatureTensor gy(3, 5, 4);
        for (std::size_t i = 0; i < y.size(); ++i) gy.data()[i] = q.data()[i] * y.data()[i];
        const FdReport r = check_gradient(f, x, conv3x3_backward_input(gy, w), 40, 1e-4, seed);
        CHECK(r.max_rel < 1e-6);
    }
}

TEST_CASE("relu forward") {
    CHECK(vec(relu_forward(from(1, 1, 3, {-1, 0, 2}))) == std::vector<double>{0, 0, 2});
    const FeatureTensor neg = relu_forward(random_tensor(1, 2, 3, 3, -2.0, -0.1));
    for (double v : neg.values()) CHECK(v == 0.0);
    const FeatureTensor pos = random_tensor(2, 2, 3, 3, 0.1, 2.0);
    CHECK(relu_forward(pos) == pos);
    const FeatureTensor x = random_tensor(3, 2, 4, 4);
    CHECK(relu_forward(relu_forward(x)) == relu_forward(x));
}

TEST_CASE("relu backward gates on the preactivation; zero gets no gradient") {
    const FeatureTensor g = relu_backward(from(1, 1, 3, {5, 5, 5}), from(1, 1, 3, {-1, 0, 3}));
    CHECK(vec(g) == std::vector<double>{0, 0, 5});
    const FeatureTensor grad = random_tensor(4, 2, 3, 3);
    CHECK(relu_backward(grad, random_tensor(5, 2, 3, 3, 0.1, 1.0)) == grad);
    CHECK_THROWS_AS(relu_backward(FeatureTensor(1, 2, 2), FeatureTensor(1, 2, 3)), DimensionError);
}

TEST_CASE("relu backward matches finite differences away from zero") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const FeatureTensor x = signed_tensor(100 + seed, 2, 4, 4);
        const FeatureTensor q = random_tensor(120 + seed, 2, 4, 4, 0.5, 1.5);
        const Functional f = [&](const FeatureTensor& in) {
            const FeatureTensor y = relu_forward(in);
            double s = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) s += 0.5 * q.data()[i] * y.data()[i] * y.data()[i];
            return s;
        };
        const FeatureTensor y = relu_forward(x);
        FeatureTensor gy(2, 4, 4);
        for (std::size_t i = 0; i < y.size(); ++i) gy.data()[i] = q.data()[i] * y.data()[i];
        CHECK(check_gradient(f, x, relu_backward(gy, x), 32, 1e-5, seed).max_rel < 1e-6);
    }
}

TEST_CASE("pool forward on a 2x2 window") {
    const FeatureTensor x = from(1, 2, 2, {1, 2, 3, 4});
    CHECK(vec(pool2x2_forward(x, PoolMode::avg).first) == std::vector<double>{2.5});
    CHECK(vec(pool2x2_forward(x, PoolMode::max).first) == std::vector<double>{4});
    for (PoolMode m : {PoolMode::avg, PoolMode::max}) {
        const auto [y, ctx] = pool2x2_forward(FeatureTensor(2, 6, 4, 3.25), m);
        CHECK(y.height() == 3);
        CHECK(y.width() == 2);
        for (double v : y.values()) CHECK(v == 3.25);
    }
}

TEST_CASE("pool rejects odd and empty inputs") {
    CHECK_THROWS_AS(pool2x2_forward(FeatureTensor(1, 3, 4), PoolMode::avg), DimensionError);
    CHECK_THROWS_AS(pool2x2_forward(FeatureTensor(1, 4, 5), PoolMode::max), DimensionError);
    CHECK_THROWS_AS(pool2x2_forward(FeatureTensor(1, 0, 0), PoolMode::avg), DimensionError);
}

TEST_CASE("avg pool keeps a quarter of the sum") {
    const FeatureTensor x = random_tensor(9, 3, 8, 6);
    const FeatureTensor y = pool2x2_forward(x, PoolMode::avg).first;
    for (std::size_t c = 0; c < 3; ++c) {
        double si = 0.0, so = 0.0;
        for (double v : x.channel(c)) si += v;
        for (double v : y.channel(c)) so += v;
        CHECK(rel_error(so, si / 4.0) < 1e-10);
    }
}

TEST_CASE("pool backward") {
    const FeatureTensor one = from(1, 1, 1, {1});
    {
        const auto [y, ctx] = pool2x2_forward(FeatureTensor(1, 2, 2), PoolMode::avg);
        CHECK(vec(pool2x2_backward(one, ctx, PoolMode::avg)) == std::vector<double>{0.25, 0.25, 0.25, 0.25});
    }
    {
        const auto [y, ctx] = pool2x2_forward(from(1, 2, 2, {1, 2, 3, 4}), PoolMode::max);
        CHECK(vec(pool2x2_backward(one, ctx, PoolMode::max)) == std::vector<double>{0, 0, 0, 1});
        CHECK_THROWS_AS(pool2x2_backward(one, ctx, PoolMode::avg), UsageError);
    }
    {
        // Equal maxima: the first one in scan order takes the gradient.
        const auto [y, ctx] = pool2x2_forward(from(1, 2, 2, {0, 5, 5, 5}), PoolMode::max);
        CHECK(vec(pool2x2_backward(one, ctx, PoolMode::max)) == std::vector<double>{0, 1, 0, 0});
    }
    const auto [y, ctx] = pool2x2_forward(FeatureTensor(1, 4, 4), PoolMode::avg);
    CHECK_THROWS_AS(pool2x2_backward(FeatureTensor(1, 1, 2), ctx, PoolMode::avg), DimensionError);
}

TEST_CASE("pool backward matches finite differences") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        for (PoolMode mode : {PoolMode::avg, PoolMode::max}) {
            const FeatureTensor x = random_tensor(200 + seed, 2, 4, 6);
            const FeatureTensor q = random_tensor(220 + seed, 2, 2, 3, 0.5, 1.5);
            const Functional f = [&](const FeatureTensor& in) {
                const FeatureTensor y = pool2x2_forward(in, mode).first;
                double s = 0.0;
                for (std::size_t i = 0; i < y.size(); ++i) s += 0.5 * q.data()[i] * y.data()[i] * y.data()[i];
                return s;
            };
            const auto [y, ctx] = pool2x2_forward(x, mode);
            FeatureTensor gy(2, 2, 3);
            for (std::size_t i = 0; i < y.size(); ++i) gy.data()[i] = q.data()[i] * y.data()[i];
            const FdReport r =
                check_gradient(f, x, pool2x2_backward(gy, ctx, mode), 48, 1e-6, seed, true);
            CHECK(r.max_rel < 1e-6);
        }
    }
}

TEST_CASE("kernel results do not depend on the thread count") {
    // Large enough that parallel_for actually splits the work.
    const ConvWeights w = random_conv(300, 32, 16);
    const FeatureTensor x = random_tensor(301, 16, 64, 64);
    set_thread_count(1);
    const FeatureTensor serial = conv3x3_forward(x, w);
    const FeatureTensor serial_back = conv3x3_backward_input(serial, w);
    set_thread_count(4);
    CHECK(thread_count() == 4);
    CHECK(conv3x3_forward(x, w) == serial);
    CHECK(conv3x3_backward_input(serial, w) == serial_back);
    set_thread_count(0);
    CHECK(thread_count() >= 1);
}

TEST_CASE("parallel_for covers the range once and rethrows") {
    set_thread_count(3);
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), 1u << 20, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) ++hits[i];
    });
    for (int h : hits) CHECK(h == 1);
    CHECK_THROWS_AS(parallel_for(10, 1u << 20,
                                 [](std::size_t b, std::size_t) {
                                     if (b == 0) throw NumericError("boom");
                                 }),
                    NumericError);
    set_thread_count(0);
}
