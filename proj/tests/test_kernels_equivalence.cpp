// Every SIMD table against the scalar reference, compared bit for bit.

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <vector>

#include "texsyn/errors.hpp"
#include "texsyn/kernels.hpp"
#include "texsyn/ops.hpp"
#include "support/fixtures.hpp"

using namespace texsyn;
using namespace texsyn::kernels;

namespace {

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, 1.0);
    std::vector<double> v(n);
    for (double& x : v) x = d(rng);
    return v;
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

std::vector<Isa> simd_isas() {
    std::vector<Isa> out;
    if (isa_supported(Isa::avx2)) out.push_back(Isa::avx2);
    return out;
}

}  // namespace

TEST_CASE("scalar table is always available") {
    CHECK(isa_supported(Isa::scalar));
    CHECK_NOTHROW(table(Isa::scalar));
    if (!isa_supported(Isa::avx2)) CHECK_THROWS_AS(table(Isa::avx2), UsageError);
}

TEST_CASE("conv3x3 kernels agree bitwise") {
    const KernelTable& ref = table(Isa::scalar);
    for (Isa isa : simd_isas()) {
        const KernelTable& simd = table(isa);
        // Widths around the 4- and 8-lane blocks, channel counts around the
        // 4-filter block.
        for (std::size_t width : {1u, 3u, 4u, 5u, 8u, 9u, 13u, 16u, 17u}) {
            for (std::size_t out_ch : {1u, 3u, 4u, 7u}) {
                const std::size_t in_ch = 3, height = 5;
                const std::vector<double> padded =
                    noise(in_ch * (height + 2) * (width + 2), width * 31 + out_ch);
                const std::vector<double> kernel = noise(out_ch * in_ch * 9, width + 7 * out_ch);
                const std::vector<double> bias = noise(out_ch, 99 + width);
                for (const double* b : {bias.data(), static_cast<const double*>(nullptr)}) {
                    std::vector<double> a(out_ch * height * width), s(a.size());
                    ref.conv3x3(padded.data(), in_ch, height, width, kernel.data(), b, 0, out_ch, a.data());
                    simd.conv3x3(padded.data(), in_ch, height, width, kernel.data(), b, 0, out_ch, s.data());
                    CHECK_MESSAGE(same_bits(a, s), isa_name(isa), " width ", width, " out ", out_ch);
                }
                // A sub-range of filters leaves the rest untouched.
                if (out_ch > 2) {
                    std::vector<double> a(out_ch * height * width, -1.0), s(a.size(), -1.0);
                    ref.conv3x3(padded.data(), in_ch, height, width, kernel.data(), bias.data(), 1, out_ch - 1, a.data());
                    simd.conv3x3(padded.data(), in_ch, height, width, kernel.data(), bias.data(), 1, out_ch - 1, s.data());
                    CHECK(same_bits(a, s));
                }
            }
        }
    }
}

TEST_CASE("gram kernels agree bitwise on the upper triangle") {
    const KernelTable& ref = table(Isa::scalar);
    for (Isa isa : simd_isas()) {
        for (std::size_t n : {1u, 2u, 5u, 8u, 9u, 16u, 19u}) {
            for (std::size_t m : {1u, 7u, 64u}) {
                const std::vector<double> f = noise(n * m, n * 100 + m);
                std::vector<double> ft(m * n);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t k = 0; k < m; ++k) ft[k * n + i] = f[i * m + k];
                std::vector<double> a(n * n, 0.0), s(n * n, 0.0);
                ref.gram_rows(f.data(), ft.data(), n, m, 0, n, a.data());
                table(isa).gram_rows(f.data(), ft.data(), n, m, 0, n, s.data());
                bool ok = true;
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = i; j < n; ++j)
                        ok = ok && std::memcmp(&a[i * n + j], &s[i * n + j], sizeof(double)) == 0;
                CHECK_MESSAGE(ok, isa_name(isa), " n ", n, " m ", m);
            }
        }
    }
}

TEST_CASE("matmul kernels agree bitwise") {
    const KernelTable& ref = table(Isa::scalar);
    for (Isa isa : simd_isas()) {
        for (std::size_t rows : {1u, 4u, 6u}) {
            for (std::size_t k : {1u, 5u, 16u}) {
                for (std::size_t m : {1u, 3u, 4u, 9u, 33u}) {
                    const std::vector<double> a = noise(rows * k, rows + 10 * k + 100 * m);
                    const std::vector<double> b = noise(k * m, rows + 11 * k + 101 * m);
                    std::vector<double> c1(rows * m), c2(rows * m);
                    ref.matmul_rows(a.data(), b.data(), k, m, 0, rows, c1.data());
                    table(isa).matmul_rows(a.data(), b.data(), k, m, 0, rows, c2.data());
                    CHECK_MESSAGE(same_bits(c1, c2), isa_name(isa), " ", rows, "x", k, "x", m);
                }
            }
        }
    }
}

TEST_CASE("relu and gate kernels agree bitwise, signed zeros and NaN included") {
    const KernelTable& ref = table(Isa::scalar);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const double inf = std::numeric_limits<double>::infinity();
    for (Isa isa : simd_isas()) {
        for (std::size_t count : {1u, 3u, 4u, 7u, 8u, 31u}) {
            std::vector<double> in = noise(count, count);
            std::vector<double> grad = noise(count, count + 1000);
            in[0] = -0.0;
            if (count > 2) in[2] = nan;
            if (count > 3) in[3] = -inf;
            if (count > 4) grad[4] = nan;
            std::vector<double> a(count), s(count);
            ref.relu(in.data(), a.data(), count);
            table(isa).relu(in.data(), s.data(), count);
            CHECK_MESSAGE(same_bits(a, s), isa_name(isa), " relu ", count);
            ref.relu_gate(grad.data(), in.data(), a.data(), count);
            table(isa).relu_gate(grad.data(), in.data(), s.data(), count);
            CHECK_MESSAGE(same_bits(a, s), isa_name(isa), " gate ", count);
        }
    }
}

TEST_CASE("ops give identical results under every ISA") {
    const FeatureTensor x = testing::random_tensor(5, 6, 12, 10);
    const ConvWeights w = testing::random_conv(6, 9, 6);
    const Isa before = active_isa();
    select(Isa::scalar);
    const FeatureTensor ref_fwd = conv3x3_forward(x, w);
    const FeatureTensor ref_back = conv3x3_backward_input(ref_fwd, w);
    const FeatureTensor ref_relu = relu_forward(ref_fwd);
    for (Isa isa : simd_isas()) {
        select(isa);
        CHECK(active_isa() == isa);
        CHECK(conv3x3_forward(x, w) == ref_fwd);
        CHECK(conv3x3_backward_input(ref_fwd, w) == ref_back);
        CHECK(relu_forward(ref_fwd) == ref_relu);
    }
    select(before);
}
