// Reference kernels. The SIMD variants are checked against these for exact
// equality, so the accumulation order here is the contract.

#include "tables.hpp"

namespace texsyn::kernels {
namespace {

void conv3x3_scalar(const double* padded, std::size_t channels, std::size_t height,
                    std::size_t width, const double* kernel, const double* bias,
                    std::size_t o_begin, std::size_t o_end, double* out) {
    const std::size_t pw = width + 2;
    const std::size_t plane = (height + 2) * pw;
    for (std::size_t o = o_begin; o < o_end; ++o) {
        const double* ko = kernel + o * channels * 9;
        double* dst = out + o * height * width;
        for (std::size_t y = 0; y < height; ++y) {
            for (std::size_t x = 0; x < width; ++x) {
                double acc = bias ? bias[o] : 0.0;
                for (std::size_t c = 0; c < channels; ++c) {
                    const double* src = padded + c * plane + y * pw + x;
                    const double* kc = ko + c * 9;
                    for (std::size_t dy = 0; dy < 3; ++dy) {
                        for (std::size_t dx = 0; dx < 3; ++dx) {
                            acc = acc + kc[dy * 3 + dx] * src[dy * pw + dx];
                        }
                    }
                }
                dst[y * width + x] = acc;
            }
        }
    }
}

void gram_rows_scalar(const double* f, const double* /*ft*/, std::size_t n, std::size_t m, std::size_t i_begin,
                      std::size_t i_end, double* g) {
    for (std::size_t i = i_begin; i < i_end; ++i) {
        const double* fi = f + i * m;
        for (std::size_t j = i; j < n; ++j) {
            const double* fj = f + j * m;
            double acc = 0.0;
            for (std::size_t k = 0; k < m; ++k) acc = acc + fi[k] * fj[k];
            g[i * n + j] = acc;
        }
    }
}

void matmul_rows_scalar(const double* a, const double* b, std::size_t k, std::size_t m,
                        std::size_t i_begin, std::size_t i_end, double* c) {
    for (std::size_t i = i_begin; i < i_end; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * m;
        for (std::size_t col = 0; col < m; ++col) {
            double acc = 0.0;
            for (std::size_t t = 0; t < k; ++t) acc = acc + ai[t] * b[t * m + col];
            ci[col] = acc;
        }
    }
}

void relu_scalar(const double* in, double* out, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
}

void relu_gate_scalar(const double* grad, const double* pre, double* out, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) out[i] = pre[i] > 0.0 ? grad[i] : 0.0;
}

}  // namespace

const KernelTable& scalar_table() {
    static const KernelTable table{conv3x3_scalar, gram_rows_scalar, matmul_rows_scalar,
                                   relu_scalar, relu_gate_scalar};
    return table;
}

}  // namespace texsyn::kernels
