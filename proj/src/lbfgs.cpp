#include "texsyn/lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace texsyn {
namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double sup_norm(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

struct Trial {
    double alpha = 0.0;
    double f = 0.0;
    double dphi = 0.0;
    std::vector<double> x;
    std::vector<double> g;
};

struct CurvaturePair {
    std::vector<double> s;
    std::vector<double> y;
    double rho;
};

// Minimizer of the cubic through (a, fa, da) and (b, fb, db), or the
// midpoint when it falls outside the safeguarded interior of [a, b].
double cubic_step(double a, double fa, double da, double b, double fb, double db) {
    const double lo = std::min(a, b), hi = std::max(a, b), w = hi - lo;
    const double mid = 0.5 * (a + b);
    const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
    const double disc = d1 * d1 - da * db;
    if (!(disc >= 0.0)) return mid;
    const double d2 = std::copysign(std::sqrt(disc), b - a);
    const double denom = db - da + 2.0 * d2;
    if (denom == 0.0) return mid;
    const double t = b - (b - a) * (db + d2 - d1) / denom;
    if (!std::isfinite(t) || t < lo + 0.1 * w || t > hi - 0.1 * w) return mid;
    return t;
}

class Minimizer {
public:
    Minimizer(const Objective& objective, const LbfgsOptions& options,
              const IterationObserver& observer)
        : objective_(objective), opts_(options), observer_(observer) {}

    OptimResult run(std::vector<double> x0);

private:
    enum class SearchStatus { wolfe, armijo_only, no_progress };

    Trial evaluate(const std::vector<double>& x, const std::vector<double>& d, double alpha);
    SearchStatus line_search(const std::vector<double>& d, double dphi0, double alpha0,
                             Trial& accepted);
    std::vector<double> direction() const;
    void record(std::size_t iteration);
    [[noreturn]] void abort(const std::string& what);

    const Objective& objective_;
    const LbfgsOptions& opts_;
    const IterationObserver& observer_;

    std::vector<double> x_;
    std::vector<double> g_;
    double f_ = 0.0;
    std::deque<CurvaturePair> pairs_;
    OptimResult result_;
    std::size_t iteration_ = 0;
};

void Minimizer::abort(const std::string& what) {
    OptimResult partial = result_;
    partial.x = x_;
    partial.loss = f_;
    partial.iterations = iteration_;
    throw OptimAborted(what + " at iteration " + std::to_string(iteration_), iteration_,
                       std::move(partial));
}

Trial Minimizer::evaluate(const std::vector<double>& x, const std::vector<double>& d,
                          double alpha) {
    Trial t;
    t.alpha = alpha;
    t.x.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) t.x[i] = x[i] + alpha * d[i];
    t.g.assign(x.size(), 0.0);
    t.f = objective_(t.x, t.g);
    ++result_.evaluations;
    if (!std::isfinite(t.f)) abort("objective returned a non-finite loss");
    if (!all_finite(t.g)) abort("objective returned a non-finite gradient");
    t.dphi = dot(t.g, d);
    return t;
}

Minimizer::SearchStatus Minimizer::line_search(const std::vector<double>& d, double dphi0,
                                               double alpha0, Trial& accepted) {
    const double f0 = f_;
    std::size_t evals = 0;
    auto armijo = [&](const Trial& t) { return t.f <= f0 + opts_.c1 * t.alpha * dphi0; };
    auto curvature = [&](const Trial& t) { return std::abs(t.dphi) <= -opts_.c2 * dphi0; };

    Trial lo{0.0, f0, dphi0, x_, g_};
    Trial hi;
    bool bracketed = false;
    Trial prev = lo;
    double alpha = alpha0;

    while (evals < opts_.max_line_search_evals) {
        Trial t = evaluate(x_, d, alpha);
        ++evals;
        if (!armijo(t) || (evals > 1 && t.f >= prev.f)) {
            lo = std::move(prev);
            hi = std::move(t);
            bracketed = true;
            break;
        }
        if (curvature(t)) {
            accepted = std::move(t);
            return SearchStatus::wolfe;
        }
        if (t.dphi >= 0.0) {
            hi = std::move(prev);
            lo = std::move(t);
            bracketed = true;
            break;
        }
        prev = std::move(t);
        alpha *= 2.0;
    }
    if (!bracketed) {
        // Still descending after every expansion: take the furthest point.
        if (prev.alpha > 0.0) {
            accepted = std::move(prev);
            return SearchStatus::armijo_only;
        }
        return SearchStatus::no_progress;
    }

    // Zoom: lo always satisfies Armijo with the lowest loss seen so far.
    while (evals < opts_.max_line_search_evals) {
        const double width = std::abs(hi.alpha - lo.alpha);
        if (width <= std::numeric_limits<double>::epsilon() * std::max(lo.alpha, hi.alpha)) break;
        const double a = cubic_step(lo.alpha, lo.f, lo.dphi, hi.alpha, hi.f, hi.dphi);
        Trial t = evaluate(x_, d, a);
        ++evals;
        if (!armijo(t) || t.f >= lo.f) {
            hi = std::move(t);
            continue;
        }
        if (curvature(t)) {
            accepted = std::move(t);
            return SearchStatus::wolfe;
        }
        if (t.dphi * (hi.alpha - lo.alpha) >= 0.0) hi = std::move(lo);
        lo = std::move(t);
    }
    if (lo.alpha > 0.0 && lo.f < f0) {
        accepted = std::move(lo);
        return SearchStatus::armijo_only;
    }
    return SearchStatus::no_progress;
}

std::vector<double> Minimizer::direction() const {
    std::vector<double> q = g_;
    std::vector<double> alphas(pairs_.size());
    for (std::size_t i = pairs_.size(); i-- > 0;) {
        const CurvaturePair& p = pairs_[i];
        alphas[i] = p.rho * dot(p.s, q);
        for (std::size_t j = 0; j < q.size(); ++j) q[j] -= alphas[i] * p.y[j];
    }
    if (!pairs_.empty()) {
        const CurvaturePair& last = pairs_.back();
        const double gamma = dot(last.s, last.y) / dot(last.y, last.y);
        for (double& v : q) v *= gamma;
    }
    for (std::size_t i = 0; i < pairs_.size(); ++i) {
        const CurvaturePair& p = pairs_[i];
        const double beta = p.rho * dot(p.y, q);
        for (std::size_t j = 0; j < q.size(); ++j) q[j] += p.s[j] * (alphas[i] - beta);
    }
    for (double& v : q) v = -v;
    return q;
}

void Minimizer::record(std::size_t iteration) {
    IterationRecord rec{iteration, f_, sup_norm(g_), result_.evaluations};
    result_.trace.push_back(rec);
    if (observer_) observer_(rec);
}

OptimResult Minimizer::run(std::vector<double> x0) {
    x_ = std::move(x0);
    g_.assign(x_.size(), 0.0);
    f_ = objective_(x_, g_);
    ++result_.evaluations;
    if (!std::isfinite(f_)) abort("objective returned a non-finite loss");
    if (!all_finite(g_)) abort("objective returned a non-finite gradient");
    record(0);

    auto finish = [&](Termination why) {
        result_.x = x_;
        result_.loss = f_;
        result_.iterations = iteration_;
        result_.termination = why;
        return std::move(result_);
    };

    if (sup_norm(g_) <= opts_.grad_tol) return finish(Termination::grad_tol);

    while (iteration_ < opts_.max_iters) {
        std::vector<double> d = direction();
        double dphi0 = dot(g_, d);
        if (!(dphi0 < 0.0)) {
            pairs_.clear();
            d = g_;
            for (double& v : d) v = -v;
            dphi0 = -dot(g_, g_);
        }
        // Without curvature information d = -g; start with a unit-length step.
        const double alpha0 = pairs_.empty() ? 1.0 / std::sqrt(-dphi0) : 1.0;

        Trial next;
        const SearchStatus status = line_search(d, dphi0, alpha0, next);
        if (status == SearchStatus::no_progress) {
            if (!pairs_.empty()) {
                pairs_.clear();
                continue;
            }
            return finish(Termination::line_search_failure);
        }

        CurvaturePair pair{std::vector<double>(x_.size()), std::vector<double>(x_.size()), 0.0};
        for (std::size_t i = 0; i < x_.size(); ++i) {
            pair.s[i] = next.x[i] - x_[i];
            pair.y[i] = next.g[i] - g_[i];
        }
        const double sy = dot(pair.s, pair.y);
        const double bound = 1e-10 * std::sqrt(dot(pair.s, pair.s)) * std::sqrt(dot(pair.y, pair.y));
        if (sy > bound && sy > 0.0) {
            pair.rho = 1.0 / sy;
            pairs_.push_back(std::move(pair));
            if (pairs_.size() > opts_.memory) pairs_.pop_front();
        }

        const double f_prev = f_;
        x_ = std::move(next.x);
        g_ = std::move(next.g);
        f_ = next.f;
        ++iteration_;
        record(iteration_);

        if (sup_norm(g_) <= opts_.grad_tol) return finish(Termination::grad_tol);
        const double scale = std::max({std::abs(f_prev), std::abs(f_),
                                       std::numeric_limits<double>::min()});
        if ((f_prev - f_) <= opts_.rel_loss_tol * scale) return finish(Termination::rel_loss_tol);
    }
    return finish(Termination::max_iters);
}

}  // namespace

void LbfgsOptions::validate() const {
    if (memory < 1) throw ValidationError("L-BFGS memory must be >= 1");
    if (!(grad_tol > 0.0) || !(rel_loss_tol > 0.0))
        throw ValidationError("L-BFGS tolerances must be positive");
    if (!(0.0 < c1 && c1 < c2 && c2 < 1.0))
        throw ValidationError("L-BFGS line search needs 0 < c1 < c2 < 1");
    if (max_line_search_evals < 1) throw ValidationError("line search needs at least one evaluation");
}

const char* termination_name(Termination t) {
    switch (t) {
        case Termination::grad_tol: return "grad_tol";
        case Termination::rel_loss_tol: return "rel_loss_tol";
        case Termination::max_iters: return "max_iters";
        case Termination::line_search_failure: return "line_search_failure";
    }
    return "unknown";
}

OptimResult lbfgs_minimize(const Objective& objective, std::vector<double> x0,
                           const LbfgsOptions& options, const IterationObserver& observer) {
    options.validate();
    if (x0.empty()) throw ValidationError("L-BFGS needs a non-empty starting point");
    return Minimizer(objective, options, observer).run(std::move(x0));
}

}  // namespace texsyn
