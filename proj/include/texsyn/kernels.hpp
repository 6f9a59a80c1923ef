#pragma once

#include <cstddef>
#include <string_view>

namespace texsyn::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

// Inner loops shared by the tensor ops. Every variant must produce results
// bitwise identical to the scalar reference: vector lanes run across
// independent output elements and each element accumulates in the same order.
struct KernelTable {
    // out[o][y][x] = bias[o] + sum over (c, dy, dx) of
    //   kernel[o][c][dy][dx] * padded[c][y + dy][x + dx]
    // for o in [o_begin, o_end). padded is C x (H + 2) x (W + 2) with a zero
    // border. bias may be null (accumulation then starts at 0).
    void (*conv3x3)(const double* padded, std::size_t channels, std::size_t height,
                    std::size_t width, const double* kernel, const double* bias,
                    std::size_t o_begin, std::size_t o_end, double* out);

    // Rows [i_begin, i_end) of G = F F^T, where F is n x m and ft is its
    // m x n transpose. Each entry sums over positions in increasing order.
    // Only entries (i, j) with j >= i are required to be written; the caller
    // mirrors the upper triangle.
    void (*gram_rows)(const double* f, const double* ft, std::size_t n, std::size_t m,
                      std::size_t i_begin, std::size_t i_end, double* g);

    // Rows [i_begin, i_end) of C = A B with A n x k and B k x m, summing over
    // k in increasing order.
    void (*matmul_rows)(const double* a, const double* b, std::size_t k, std::size_t m,
                        std::size_t i_begin, std::size_t i_end, double* c);

    // out = max(in, 0)
    void (*relu)(const double* in, double* out, std::size_t count);

    // out = pre > 0 ? grad : 0
    void (*relu_gate)(const double* grad, const double* pre, double* out, std::size_t count);
};

bool isa_supported(Isa isa);

// Table for a specific ISA; throws UsageError if the ISA is not available in
// this build or on this CPU.
const KernelTable& table(Isa isa);

// The table used by the ops. Chosen on first use: the best supported ISA,
// unless TEXSYN_ISA=scalar|avx2 is set in the environment.
const KernelTable& active();
Isa active_isa();
void select(Isa isa);

}  // namespace texsyn::kernels
