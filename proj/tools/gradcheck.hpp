#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace texsyn::tools {

struct GradCheck {
    std::string name;
    std::size_t samples = 0;
    std::size_t skipped = 0;  // steps that straddled a kink
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    bool passed() const { return samples > 0 && max_rel_error < tolerance; }
};

// Central differences against every analytic gradient in the library, on a
// seeded tiny network (conv 3->8, conv 8->16, 2x2 pool) and 8x8 images.
std::vector<GradCheck> run_gradcheck(std::uint64_t seed);

}  // namespace texsyn::tools
