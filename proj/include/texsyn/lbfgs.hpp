#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "texsyn/errors.hpp"

namespace texsyn {

struct LbfgsOptions {
    std::size_t memory = 20;         // curvature pairs kept
    std::size_t max_iters = 1000;
    double grad_tol = 1e-7;          // on the sup-norm of the gradient
    double rel_loss_tol = 1e-9;      // (f_prev - f) / max(|f_prev|, |f|)
    double c1 = 1e-4;                // sufficient decrease
    double c2 = 0.9;                 // curvature
    std::size_t max_line_search_evals = 40;

    // Throws ValidationError on memory < 1, non-positive tolerances or
    // violated 0 < c1 < c2 < 1.
    void validate() const;
};

enum class Termination { grad_tol, rel_loss_tol, max_iters, line_search_failure };

const char* termination_name(Termination t);

struct IterationRecord {
    std::size_t iteration = 0;  // 0 is the starting point
    double loss = 0.0;
    double grad_supnorm = 0.0;
    std::size_t evaluations = 0;  // objective calls so far
};

struct OptimResult {
    std::vector<double> x;
    double loss = 0.0;
    std::size_t iterations = 0;
    std::size_t evaluations = 0;
    Termination termination = Termination::max_iters;
    std::vector<IterationRecord> trace;
};

// Thrown when the objective returns a non-finite loss or gradient. Carries
// the iteration at which it happened and the result up to the last accepted
// iterate.
class OptimAborted : public NumericError {
public:
    OptimAborted(const std::string& what, std::size_t iteration, OptimResult partial)
        : NumericError(what), iteration_(iteration), partial_(std::move(partial)) {}
    std::size_t iteration() const noexcept { return iteration_; }
    const OptimResult& partial() const noexcept { return partial_; }

private:
    std::size_t iteration_;
    OptimResult partial_;
};

// Writes the gradient at x into grad and returns the loss.
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;
using IterationObserver = std::function<void(const IterationRecord&)>;

// Limited-memory BFGS: two-loop recursion over the last `memory` pairs, a
// strong-Wolfe line search, and pairs with s'y <= 1e-10 |s| |y| skipped.
// Deterministic for a deterministic objective.
OptimResult lbfgs_minimize(const Objective& objective, std::vector<double> x0,
                           const LbfgsOptions& options, const IterationObserver& observer = {});

}  // namespace texsyn
