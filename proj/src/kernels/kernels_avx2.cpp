// AVX2 variants of the reference kernels. Lanes always span independent
// output elements; each element sees the scalar kernel's exact sequence of
// multiplies and adds, so outputs match the reference bit for bit.

#include <immintrin.h>

#include "tables.hpp"

namespace texsyn::kernels {
namespace {

constexpr std::size_t kLanes = 4;

inline __m256d madd(__m256d acc, __m256d a, __m256d b) {
    return _mm256_add_pd(acc, _mm256_mul_pd(a, b));
}

template <int OB, int XV>
inline void conv_block(const double* padded, std::size_t channels, std::size_t pw,
                       std::size_t plane, const double* kernel, const double* bias,
                       std::size_t o0, std::size_t y, std::size_t x, std::size_t width,
                       std::size_t hw, double* out) {
    const std::size_t kstride = channels * 9;
    __m256d acc[OB][XV];
    for (int ob = 0; ob < OB; ++ob) {
        const __m256d b = _mm256_set1_pd(bias ? bias[o0 + ob] : 0.0);
        for (int xv = 0; xv < XV; ++xv) acc[ob][xv] = b;
    }
    for (std::size_t c = 0; c < channels; ++c) {
        const double* src = padded + c * plane + y * pw + x;
        const double* kc = kernel + o0 * kstride + c * 9;
        for (std::size_t dy = 0; dy < 3; ++dy) {
            for (std::size_t dx = 0; dx < 3; ++dx) {
                __m256d s[XV];
                for (int xv = 0; xv < XV; ++xv)
                    s[xv] = _mm256_loadu_pd(src + dy * pw + dx + xv * kLanes);
                for (int ob = 0; ob < OB; ++ob) {
                    const __m256d kv = _mm256_set1_pd(kc[ob * kstride + dy * 3 + dx]);
                    for (int xv = 0; xv < XV; ++xv) acc[ob][xv] = madd(acc[ob][xv], kv, s[xv]);
                }
            }
        }
    }
    for (int ob = 0; ob < OB; ++ob) {
        double* dst = out + (o0 + ob) * hw + y * width + x;
        for (int xv = 0; xv < XV; ++xv) _mm256_storeu_pd(dst + xv * kLanes, acc[ob][xv]);
    }
}

inline void conv_point(const double* padded, std::size_t channels, std::size_t pw,
                       std::size_t plane, const double* kernel, const double* bias,
                       std::size_t o, std::size_t y, std::size_t x, std::size_t width,
                       std::size_t hw, double* out) {
    const double* ko = kernel + o * channels * 9;
    double acc = bias ? bias[o] : 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
        const double* src = padded + c * plane + y * pw + x;
        const double* kc = ko + c * 9;
        for (std::size_t dy = 0; dy < 3; ++dy)
            for (std::size_t dx = 0; dx < 3; ++dx) acc = acc + kc[dy * 3 + dx] * src[dy * pw + dx];
    }
    out[o * hw + y * width + x] = acc;
}

template <int OB>
void conv_rows(const double* padded, std::size_t channels, std::size_t height,
               std::size_t width, const double* kernel, const double* bias, std::size_t o0,
               double* out) {
    const std::size_t pw = width + 2;
    const std::size_t plane = (height + 2) * pw;
    const std::size_t hw = height * width;
    for (std::size_t y = 0; y < height; ++y) {
        std::size_t x = 0;
        for (; x + 2 * kLanes <= width; x += 2 * kLanes)
            conv_block<OB, 2>(padded, channels, pw, plane, kernel, bias, o0, y, x, width, hw, out);
        for (; x + kLanes <= width; x += kLanes)
            conv_block<OB, 1>(padded, channels, pw, plane, kernel, bias, o0, y, x, width, hw, out);
        for (; x < width; ++x)
            for (int ob = 0; ob < OB; ++ob)
                conv_point(padded, channels, pw, plane, kernel, bias, o0 + ob, y, x, width, hw, out);
    }
}

void conv3x3_avx2(const double* padded, std::size_t channels, std::size_t height,
                  std::size_t width, const double* kernel, const double* bias,
                  std::size_t o_begin, std::size_t o_end, double* out) {
    std::size_t o = o_begin;
    for (; o + 4 <= o_end; o += 4) conv_rows<4>(padded, channels, height, width, kernel, bias, o, out);
    for (; o < o_end; ++o) conv_rows<1>(padded, channels, height, width, kernel, bias, o, out);
}

template <int IB>
void gram_block(const double* f, const double* ft, std::size_t n, std::size_t m, std::size_t i0,
                double* g) {
    std::size_t j = i0;
    for (; j + 2 * kLanes <= n; j += 2 * kLanes) {
        __m256d acc[IB][2];
        for (int ib = 0; ib < IB; ++ib) acc[ib][0] = acc[ib][1] = _mm256_setzero_pd();
        for (std::size_t k = 0; k < m; ++k) {
            const __m256d t0 = _mm256_loadu_pd(ft + k * n + j);
            const __m256d t1 = _mm256_loadu_pd(ft + k * n + j + kLanes);
            for (int ib = 0; ib < IB; ++ib) {
                const __m256d a = _mm256_set1_pd(f[(i0 + ib) * m + k]);
                acc[ib][0] = madd(acc[ib][0], a, t0);
                acc[ib][1] = madd(acc[ib][1], a, t1);
            }
        }
        for (int ib = 0; ib < IB; ++ib) {
            _mm256_storeu_pd(g + (i0 + ib) * n + j, acc[ib][0]);
            _mm256_storeu_pd(g + (i0 + ib) * n + j + kLanes, acc[ib][1]);
        }
    }
    for (; j + kLanes <= n; j += kLanes) {
        __m256d acc[IB];
        for (int ib = 0; ib < IB; ++ib) acc[ib] = _mm256_setzero_pd();
        for (std::size_t k = 0; k < m; ++k) {
            const __m256d t0 = _mm256_loadu_pd(ft + k * n + j);
            for (int ib = 0; ib < IB; ++ib)
                acc[ib] = madd(acc[ib], _mm256_set1_pd(f[(i0 + ib) * m + k]), t0);
        }
        for (int ib = 0; ib < IB; ++ib) _mm256_storeu_pd(g + (i0 + ib) * n + j, acc[ib]);
    }
    for (; j < n; ++j) {
        for (int ib = 0; ib < IB; ++ib) {
            const double* fi = f + (i0 + ib) * m;
            const double* fj = f + j * m;
            double acc = 0.0;
            for (std::size_t k = 0; k < m; ++k) acc = acc + fi[k] * fj[k];
            g[(i0 + ib) * n + j] = acc;
        }
    }
}

void gram_rows_avx2(const double* f, const double* ft, std::size_t n, std::size_t m,
                    std::size_t i_begin, std::size_t i_end, double* g) {
    std::size_t i = i_begin;
    for (; i + 4 <= i_end; i += 4) gram_block<4>(f, ft, n, m, i, g);
    for (; i < i_end; ++i) gram_block<1>(f, ft, n, m, i, g);
}

template <int IB>
void matmul_block(const double* a, const double* b, std::size_t k, std::size_t m,
                  std::size_t i0, double* c) {
    std::size_t col = 0;
    for (; col + 2 * kLanes <= m; col += 2 * kLanes) {
        __m256d acc[IB][2];
        for (int ib = 0; ib < IB; ++ib) acc[ib][0] = acc[ib][1] = _mm256_setzero_pd();
        for (std::size_t t = 0; t < k; ++t) {
            const __m256d b0 = _mm256_loadu_pd(b + t * m + col);
            const __m256d b1 = _mm256_loadu_pd(b + t * m + col + kLanes);
            for (int ib = 0; ib < IB; ++ib) {
                const __m256d av = _mm256_set1_pd(a[(i0 + ib) * k + t]);
                acc[ib][0] = madd(acc[ib][0], av, b0);
                acc[ib][1] = madd(acc[ib][1], av, b1);
            }
        }
        for (int ib = 0; ib < IB; ++ib) {
            _mm256_storeu_pd(c + (i0 + ib) * m + col, acc[ib][0]);
            _mm256_storeu_pd(c + (i0 + ib) * m + col + kLanes, acc[ib][1]);
        }
    }
    for (; col + kLanes <= m; col += kLanes) {
        __m256d acc[IB];
        for (int ib = 0; ib < IB; ++ib) acc[ib] = _mm256_setzero_pd();
        for (std::size_t t = 0; t < k; ++t) {
            const __m256d b0 = _mm256_loadu_pd(b + t * m + col);
            for (int ib = 0; ib < IB; ++ib)
                acc[ib] = madd(acc[ib], _mm256_set1_pd(a[(i0 + ib) * k + t]), b0);
        }
        for (int ib = 0; ib < IB; ++ib) _mm256_storeu_pd(c + (i0 + ib) * m + col, acc[ib]);
    }
    for (; col < m; ++col) {
        for (int ib = 0; ib < IB; ++ib) {
            const double* ai = a + (i0 + ib) * k;
            double acc = 0.0;
            for (std::size_t t = 0; t < k; ++t) acc = acc + ai[t] * b[t * m + col];
            c[(i0 + ib) * m + col] = acc;
        }
    }
}

void matmul_rows_avx2(const double* a, const double* b, std::size_t k, std::size_t m,
                      std::size_t i_begin, std::size_t i_end, double* c) {
    std::size_t i = i_begin;
    for (; i + 4 <= i_end; i += 4) matmul_block<4>(a, b, k, m, i, c);
    for (; i < i_end; ++i) matmul_block<1>(a, b, k, m, i, c);
}

void relu_avx2(const double* in, double* out, std::size_t count) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    // max_pd(a, b) is (a > b ? a : b), the same selection as the scalar kernel.
    for (; i + kLanes <= count; i += kLanes)
        _mm256_storeu_pd(out + i, _mm256_max_pd(_mm256_loadu_pd(in + i), zero));
    for (; i < count; ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
}

void relu_gate_avx2(const double* grad, const double* pre, double* out, std::size_t count) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + kLanes <= count; i += kLanes) {
        const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(pre + i), zero, _CMP_GT_OQ);
        _mm256_storeu_pd(out + i, _mm256_and_pd(mask, _mm256_loadu_pd(grad + i)));
    }
    for (; i < count; ++i) out[i] = pre[i] > 0.0 ? grad[i] : 0.0;
}

}  // namespace

const KernelTable& avx2_table() {
    static const KernelTable table{conv3x3_avx2, gram_rows_avx2, matmul_rows_avx2, relu_avx2,
                                   relu_gate_avx2};
    return table;
}

}  // namespace texsyn::kernels
