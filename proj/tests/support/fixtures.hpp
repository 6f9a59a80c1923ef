#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "texsyn/tensor.hpp"

namespace texsyn::testing {

inline FeatureTensor random_tensor(std::uint64_t seed, std::size_t c, std::size_t h,
                                   std::size_t w, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    FeatureTensor t(c, h, w);
    for (double& v : t.values()) v = u(rng);
    return t;
}

// |values| in [lo, hi] with random signs.
inline FeatureTensor signed_tensor(std::uint64_t seed, std::size_t c, std::size_t h,
                                   std::size_t w, double lo = 1e-3, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::bernoulli_distribution neg(0.4);
    FeatureTensor t(c, h, w);
    for (double& v : t.values()) v = neg(rng) ? -u(rng) : u(rng);
    return t;
}

inline ConvWeights random_conv(std::uint64_t seed, std::size_t out, std::size_t in,
                               double scale = 0.5, bool with_bias = true) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, scale);
    ConvWeights w(out, in);
    for (double& v : w.kernel) v = n(rng);
    if (with_bias)
        for (double& v : w.bias) v = n(rng);
    return w;
}

// c x h x w image tiled from a random period x period patch, read starting
// at (dy, dx) inside the tile.
inline FeatureTensor periodic_texture(std::uint64_t seed, std::size_t h, std::size_t w,
                                      std::size_t period, std::size_t dy = 0, std::size_t dx = 0,
                                      double amplitude = 1.0) {
    const FeatureTensor tile = random_tensor(seed, 3, period, period, -amplitude, amplitude);
    FeatureTensor out(3, h, w);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                out.at(c, y, x) = tile.at(c, (y + dy) % period, (x + dx) % period);
    return out;
}

inline std::vector<double> vec(const FeatureTensor& t) { return {t.values().begin(), t.values().end()}; }

inline double dot(const FeatureTensor& a, const FeatureTensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
    return s;
}

inline double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

// |a - b| / max(|a|, |b|, floor)
inline double rel_error(double a, double b, double floor = 1e-300) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_rel_error(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, rel_error(a[i], b[i]));
    return m;
}

// ||a - b||_F / ||b||_F
inline double frobenius_rel(std::span<const double> a, std::span<const double> b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return std::sqrt(num / den);
}

inline std::filesystem::path temp_path(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "texsyn_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

inline std::filesystem::path data_dir() { return TEXSYN_DATA_DIR; }

}  // namespace texsyn::testing
