#include <atomic>
#include <cstdlib>
#include <string>

#include "tables.hpp"
#include "texsyn/errors.hpp"

namespace texsyn::kernels {
namespace {

Isa initial_isa() {
    if (const char* env = std::getenv("TEXSYN_ISA")) {
        const std::string want(env);
        if (want == "scalar") return Isa::scalar;
        if (want == "avx2" && isa_supported(Isa::avx2)) return Isa::avx2;
    }
    return isa_supported(Isa::avx2) ? Isa::avx2 : Isa::scalar;
}

std::atomic<const KernelTable*> g_active{nullptr};
std::atomic<Isa> g_isa{Isa::scalar};

}  // namespace

std::string_view isa_name(Isa isa) {
    switch (isa) {
        case Isa::scalar: return "scalar";
        case Isa::avx2: return "avx2";
    }
    return "unknown";
}

bool isa_supported(Isa isa) {
    switch (isa) {
        case Isa::scalar: return true;
        case Isa::avx2:
#if defined(TEXSYN_WITH_AVX2)
            return __builtin_cpu_supports("avx2");
#else
            return false;
#endif
    }
    return false;
}

const KernelTable& table(Isa isa) {
    if (!isa_supported(isa))
        throw UsageError("kernel ISA '" + std::string(isa_name(isa)) + "' is not available");
#if defined(TEXSYN_WITH_AVX2)
    if (isa == Isa::avx2) return avx2_table();
#endif
    return scalar_table();
}

void select(Isa isa) {
    const KernelTable* t = &table(isa);
    g_isa.store(isa);
    g_active.store(t);
}

const KernelTable& active() {
    const KernelTable* t = g_active.load(std::memory_order_acquire);
    if (t == nullptr) {
        select(initial_isa());
        t = g_active.load();
    }
    return *t;
}

Isa active_isa() {
    active();
    return g_isa.load();
}

}  // namespace texsyn::kernels
