#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "pm/linalg.hpp"
#include "pm/model.hpp"
#include "pm/spectral.hpp"

namespace pm {

/// Default tolerances for orbit analysis. Extinction, convergence, and
/// fixed-point residual use separated scales so that slow near-threshold
/// dynamics are not misclassified.
inline constexpr double kOrbitConvergenceTol = 1e-12;
inline constexpr double kExtinctionNorm = 1e-8;
inline constexpr double kFixedPointResidualTol = 1e-9;
inline constexpr std::size_t kDefaultMaxSteps = 50000;

// ---------------------------------------------------------------------------
// The nonlinear map
// ---------------------------------------------------------------------------

namespace detail {

inline void check_state(const ModelSpec& spec, const Vec& x, const char* where) {
    check_dimension(state_dimension(spec), x, where);
    for (double v : x)
        if (!(v >= 0.0) || !std::isfinite(v))
            throw std::invalid_argument(std::string(where) +
                                        ": state must be finite and nonnegative");
}

/// Coordinate-map evaluation of one step, written stage by stage rather than
/// via the assembled matrix. Used as a debug cross-check for step().
inline Vec step_coordinates(const ModelSpec& spec, const Vec& x) {
    return std::visit([&](const auto& s) -> Vec {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, IsolatedSpec>) {
            const std::size_t n = s.stages();
            Vec y(n, 0.0);
            for (std::size_t j = 2; j <= n; ++j) y[0] += s.fecundity(j) * x[j - 1];
            for (std::size_t i = 2; i <= n; ++i)
                y[i - 1] = s.transitions[i - 2].flow(x[i - 2]);
            y[n - 1] += s.transitions[n - 1].flow(x[n - 1]);
            return y;
        } else if constexpr (std::is_same_v<T, SingleEggSpec>) {
            const std::size_t n = s.migrant.stages();
            const std::size_t m = s.resident.stages();
            Vec y(n + m - 1, 0.0);
            for (std::size_t j = 2; j <= n; ++j) y[0] += s.migrant.fecundity(j) * x[j - 1];
            for (std::size_t j = 2; j <= m; ++j) y[0] += s.resident.fecundity(j) * x[n + j - 2];
            y[1] = s.phi * s.migrant.transitions[0].flow(x[0]);
            for (std::size_t i = 3; i <= n; ++i)
                y[i - 1] = s.migrant.transitions[i - 2].flow(x[i - 2]);
            y[n - 1] += s.migrant.transitions[n - 1].flow(x[n - 1]);
            y[n] = (1.0 - s.phi) * s.resident.transitions[0].flow(x[0]);
            for (std::size_t j = 2; j < m; ++j)
                y[n + j - 1] = s.resident.transitions[j - 1].flow(x[n + j - 2]);
            y[n + m - 2] += s.resident.transitions[m - 1].flow(x[n + m - 2]);
            return y;
        } else {
            const std::size_t n = s.migrant.stages();
            const std::size_t m = s.resident.stages();
            Vec y(n + m, 0.0);
            double migrant_eggs = 0.0, resident_eggs = 0.0;
            for (std::size_t j = 2; j <= n; ++j) migrant_eggs += s.migrant.fecundity(j) * x[j - 1];
            for (std::size_t j = 2; j <= m; ++j)
                resident_eggs += s.resident.fecundity(j) * x[n + j - 1];
            y[0] = s.phi_s * migrant_eggs + (1.0 - s.phi_r) * resident_eggs;
            y[n] = (1.0 - s.phi_s) * migrant_eggs + s.phi_r * resident_eggs;
            for (std::size_t i = 2; i <= n; ++i)
                y[i - 1] = s.migrant.transitions[i - 2].flow(x[i - 2]);
            y[n - 1] += s.migrant.transitions[n - 1].flow(x[n - 1]);
            for (std::size_t j = 2; j <= m; ++j)
                y[n + j - 1] = s.resident.transitions[j - 2].flow(x[n + j - 2]);
            y[n + m - 1] += s.resident.transitions[m - 1].flow(x[n + m - 1]);
            return y;
        }
    }, spec);
}

}  // namespace detail

/// One application of the population map: x -> A(x) x.
inline Vec step(const ModelSpec& spec, const Vec& x) {
    detail::check_state(spec, x, "step");
    Vec y = assemble(spec, x).apply(x);
#ifndef NDEBUG
    {
        Vec z = detail::step_coordinates(spec, x);
        const double scale = 1.0 + sup_norm(y);
        for (std::size_t i = 0; i < y.size(); ++i)
            assert(std::abs(y[i] - z[i]) <= 1e-14 * scale &&
                   "step: matrix and coordinate paths disagree");
    }
#endif
    return y;
}

inline Vec step_n(const ModelSpec& spec, Vec x, std::size_t r) {
    for (std::size_t k = 0; k < r; ++k) x = step(spec, x);
    return x;
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

struct Trajectory {
    std::vector<Vec> states;      // strided history, always contains first/last
    bool converged = false;
    bool overflowed = false;      // orbit left the representable range
    std::optional<Vec> limit;
    std::size_t steps_taken = 0;

    const Vec& final_state() const { return states.back(); }
};

/// Iterates the map from x0 until the sup-norm relative change drops below
/// tol or max_steps is reached. `stride` controls how much history is kept
/// (1 = every state).
inline Trajectory simulate(const ModelSpec& spec, const Vec& x0,
                           std::size_t max_steps = kDefaultMaxSteps,
                           double tol = kOrbitConvergenceTol,
                           std::size_t stride = 1) {
    detail::check_state(spec, x0, "simulate");
    if (stride == 0) stride = 1;
    Trajectory traj;
    traj.states.push_back(x0);
    Vec x = x0;
    for (std::size_t t = 1; t <= max_steps; ++t) {
        Vec y = step(spec, x);
        traj.steps_taken = t;
        bool finite = true;
        for (double v : y)
            if (!std::isfinite(v)) finite = false;
        if (!finite || sup_norm(y) > 1e150) {
            traj.overflowed = true;
            traj.states.push_back(std::move(y));
            return traj;
        }
        double change = 0.0;
        const double scale = 1.0 + sup_norm(y);
        for (std::size_t i = 0; i < y.size(); ++i)
            change = std::max(change, std::abs(y[i] - x[i]) / scale);
        if (t % stride == 0) traj.states.push_back(y);
        x = std::move(y);
        if (change <= tol) {
            traj.converged = true;
            break;
        }
    }
    if (traj.states.back() != x) traj.states.push_back(x);
    if (traj.converged) traj.limit = x;
    return traj;
}

// ---------------------------------------------------------------------------
// Trichotomy classification
// ---------------------------------------------------------------------------

enum class Outcome { Extinction, PositiveFixedPoint, Unbounded, Inconclusive };

inline const char* to_string(Outcome o) {
    switch (o) {
        case Outcome::Extinction: return "Extinction";
        case Outcome::PositiveFixedPoint: return "PositiveFixedPoint";
        case Outcome::Unbounded: return "Unbounded";
        case Outcome::Inconclusive: return "Inconclusive";
    }
    return "?";
}

struct TrichotomyReport {
    Outcome outcome = Outcome::Inconclusive;
    std::optional<Vec> fixed_point;       // q, when outcome is PositiveFixedPoint
    double residual = 0.0;                // ||step(q) - q||_inf
    std::vector<Vec> per_start_limits;    // final state of each tested orbit
    double r0_at_origin = 0.0;
    std::vector<std::string> flags;       // inconsistencies worth surfacing
};

/// Simulates each initial condition and classifies by consensus: Extinction
/// if every orbit dies below the extinction norm, PositiveFixedPoint if every
/// orbit converges to the same strictly positive limit. Cross-checked against
/// the sign of R0 - 1; a mismatch is flagged, not thrown.
inline TrichotomyReport find_fixed_point(const ModelSpec& spec,
                                         const std::vector<Vec>& initial_set,
                                         double tol = kOrbitConvergenceTol,
                                         std::size_t max_steps = kDefaultMaxSteps) {
    require_valid(spec);
    if (!all_density_dependent(spec))
        throw std::invalid_argument(
            "find_fixed_point: requires density-dependent transition rules");
    if (initial_set.empty())
        throw std::invalid_argument("find_fixed_point: initial set is empty");

    TrichotomyReport rep;
    rep.r0_at_origin = r0_closed_form(spec);

    std::size_t extinct = 0, overflowed = 0, converged_positive = 0;
    for (const Vec& x0 : initial_set) {
        Trajectory traj = simulate(spec, x0, max_steps, tol, max_steps);  // keep ends only
        rep.per_start_limits.push_back(traj.final_state());
        if (traj.overflowed) {
            ++overflowed;
            continue;
        }
        if (sup_norm(traj.final_state()) <= kExtinctionNorm) {
            ++extinct;
        } else if (traj.converged) {
            ++converged_positive;
        } else {
            rep.flags.push_back("orbit did not settle within " + std::to_string(max_steps) +
                                " steps");
        }
    }

    const std::size_t total = initial_set.size();
    if (overflowed == total) {
        rep.outcome = Outcome::Unbounded;
    } else if (extinct == total) {
        rep.outcome = Outcome::Extinction;
    } else if (converged_positive == total) {
        // consensus check: all limits agree pairwise
        const Vec& q = rep.per_start_limits.front();
        const double scale = 1.0 + sup_norm(q);
        bool agree = true;
        for (const Vec& lim : rep.per_start_limits)
            for (std::size_t i = 0; i < q.size(); ++i)
                if (std::abs(lim[i] - q[i]) > 1e-6 * scale) agree = false;
        bool positive = true;
        for (double v : q)
            if (!(v > 0.0)) positive = false;
        Vec next = step(spec, q);
        double resid = 0.0;
        for (std::size_t i = 0; i < q.size(); ++i)
            resid = std::max(resid, std::abs(next[i] - q[i]));
        rep.residual = resid;
        if (agree && positive && resid <= kFixedPointResidualTol * (1.0 + sup_norm(q))) {
            rep.outcome = Outcome::PositiveFixedPoint;
            rep.fixed_point = q;
        } else {
            rep.outcome = Outcome::Inconclusive;
            if (!agree) rep.flags.push_back("limits from different starts disagree");
            if (!positive) rep.flags.push_back("consensus limit is not strictly positive");
            if (resid > kFixedPointResidualTol * (1.0 + sup_norm(q)))
                rep.flags.push_back("fixed-point residual too large: " + std::to_string(resid));
        }
    } else {
        rep.outcome = Outcome::Inconclusive;
        rep.flags.push_back("mixed orbit outcomes across initial conditions");
    }

    // cross-check against the linear threshold
    if (std::abs(rep.r0_at_origin - 1.0) >= 1e-6) {
        if (rep.r0_at_origin < 1.0 && rep.outcome != Outcome::Extinction)
            rep.flags.push_back("R0 < 1 but orbits did not all go extinct");
        if (rep.r0_at_origin > 1.0 && rep.outcome != Outcome::PositiveFixedPoint)
            rep.flags.push_back("R0 > 1 but no common positive fixed point found");
    }
    return rep;
}

struct TrichotomyConfig {
    double tol = kOrbitConvergenceTol;
    std::size_t max_steps = kDefaultMaxSteps;
    std::uint64_t seed = 0;
    std::size_t random_starts = 6;
};

/// Default initial set: unit vectors scaled by {1e-3, 1, 1e3} plus seeded
/// random strictly positive vectors (log-uniform per coordinate).
inline std::vector<Vec> default_initial_set(std::size_t dim, std::uint64_t seed,
                                            std::size_t random_starts = 6) {
    std::vector<Vec> out;
    for (double scale : {1e-3, 1.0, 1e3})
        for (std::size_t i = 0; i < dim; ++i) {
            Vec e(dim, 0.0);
            e[i] = scale;
            out.push_back(std::move(e));
        }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> log_range(-3.0, 3.0);
    for (std::size_t k = 0; k < random_starts; ++k) {
        Vec x(dim);
        for (double& v : x) v = std::pow(10.0, log_range(rng));
        out.push_back(std::move(x));
    }
    return out;
}

inline Vec upper_bound_vector(const ModelSpec& spec);

/// Orchestrates find_fixed_point over the default initial set. When R0 > 1 it
/// additionally verifies the eigenvector escape argument: for v the positive
/// eigenvector of the linearization and small eps, step(eps*v) >> eps*v.
inline TrichotomyReport classify_trichotomy(const ModelSpec& spec,
                                            const TrichotomyConfig& config = {}) {
    require_valid(spec);
    const std::size_t dim = state_dimension(spec);
    const double r0 = r0_closed_form(spec);
    if (std::abs(r0 - 1.0) < 1e-6) {
        TrichotomyReport rep;
        rep.outcome = Outcome::Inconclusive;
        rep.r0_at_origin = r0;
        rep.flags.push_back("R0 within 1e-6 of the threshold: classification inconclusive");
        return rep;
    }
    auto rep = find_fixed_point(spec, default_initial_set(dim, config.seed, config.random_starts),
                                config.tol, config.max_steps);
    if (r0 > 1.0) {
        auto pi = power_iteration(linearization(spec));
        // eigenvector has sup norm 1, so ||eps*v||_inf = eps; shrink eps with
        // the spectral gap so the density correction stays below lambda - 1
        const double gap = pi.value - 1.0;
        const double eps =
            1e-6 * sup_norm(upper_bound_vector(spec)) * std::min(1.0, gap);
        Vec x0(dim);
        for (std::size_t i = 0; i < dim; ++i) x0[i] = eps * pi.vector[i];
        Vec x1 = step(spec, x0);
        for (std::size_t i = 0; i < dim; ++i) {
            if (pi.vector[i] < 1e-6) continue;  // below eigenvector accuracy
            if (!(x1[i] > x0[i] * (1.0 + 1e-9)))
                rep.flags.push_back("eigenvector escape check failed at coordinate " +
                                    std::to_string(i + 1));
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Order-interval bound
// ---------------------------------------------------------------------------

/// Componentwise bound a with step^2(x) <= a for every x >= 0, valid when all
/// transition rules are Beverton-Holt (flow bounds m_i = b_i/c_i exist).
/// Non-egg coordinates are bounded by the flow bounds feeding them; egg
/// coordinates by the fecundity-weighted sums of those bounds.
inline Vec upper_bound_vector(const ModelSpec& spec) {
    require_valid(spec);
    if (!all_density_dependent(spec))
        throw std::invalid_argument(
            "upper_bound_vector: a Constant rule has unbounded survivor flow");
    const std::size_t dim = state_dimension(spec);
    Vec bound(dim, 0.0);

    auto chain_bounds = [](const IsolatedSpec& s, Vec& out, std::size_t offset) {
        // out[offset + k] holds the bound for the population's stage k+2
        // (stages after its egg stage); the last stage adds its own self-loop.
        const std::size_t n = s.stages();
        for (std::size_t i = 1; i < n; ++i)
            out[offset + i - 1] = *s.transitions[i - 1].flow_bound();
        out[offset + n - 2] += *s.transitions[n - 1].flow_bound();
    };

    std::visit([&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, IsolatedSpec>) {
            chain_bounds(s, bound, 1);
        } else if constexpr (std::is_same_v<T, SingleEggSpec>) {
            chain_bounds(s.migrant, bound, 1);
            chain_bounds(s.resident, bound, s.migrant.stages());
        } else {
            chain_bounds(s.migrant, bound, 1);
            chain_bounds(s.resident, bound, s.migrant.stages() + 1);
        }
    }, spec);

    // egg rows: fecundity-weighted sums of the non-egg bounds
    Matrix a0 = linearization(spec);
    for (std::size_t row : egg_rows(spec)) {
        double acc = 0.0;
        for (std::size_t j = 0; j < dim; ++j) acc += a0(row, j) * bound[j];
        bound[row] = acc;
    }
    return bound;
}

// ---------------------------------------------------------------------------
// Property checks (CLST hypotheses)
// ---------------------------------------------------------------------------

struct PropertyViolation {
    Vec sample;
    std::string note;
    double margin = 0.0;
};

struct PropertyReport {
    std::string property;
    std::size_t samples_tested = 0;
    std::vector<PropertyViolation> violations;
    bool passed() const { return violations.empty(); }
};

using StepFn = std::function<Vec(const Vec&)>;

namespace detail {

inline Vec sample_log_uniform(std::size_t dim, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> log_range(-3.0, 3.0);
    Vec x(dim);
    for (double& v : x) v = std::pow(10.0, log_range(rng));
    return x;
}

}  // namespace detail

/// Monotonicity: x <= y implies map(x) <= map(y) entrywise. Pairs are built
/// as y = x + nonnegative perturbation.
inline PropertyReport check_monotone_fn(const StepFn& map, std::size_t dim,
                                        std::size_t sample_count, std::uint64_t seed) {
    PropertyReport rep;
    rep.property = "monotone";
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t k = 0; k < sample_count; ++k) {
        Vec x = detail::sample_log_uniform(dim, rng);
        if (k % 10 == 0) x[k % dim] = 0.0;  // exercise boundary points too
        Vec y = x;
        for (std::size_t i = 0; i < dim; ++i)
            if (unit(rng) < 0.7) y[i] += std::pow(10.0, -3.0 + 6.0 * unit(rng));
        Vec fx = map(x), fy = map(y);
        ++rep.samples_tested;
        for (std::size_t i = 0; i < dim; ++i) {
            const double slack = 1e-12 * (1.0 + std::abs(fx[i]));
            if (fx[i] > fy[i] + slack) {
                rep.violations.push_back({x, "coordinate " + std::to_string(i + 1) +
                                                 ": F(x) > F(y) for x <= y",
                                          fx[i] - fy[i]});
            }
        }
    }
    return rep;
}

inline PropertyReport check_monotone(const ModelSpec& spec, std::size_t sample_count,
                                     std::uint64_t seed) {
    require_valid(spec);
    return check_monotone_fn([&](const Vec& x) { return step(spec, x); },
                             state_dimension(spec), sample_count, seed);
}

/// Strong sublinearity of the r-fold map: lambda*F^r(x) << F^r(lambda*x)
/// strictly componentwise for x >> 0 and lambda in (0,1). For r = 1 the egg
/// coordinates of these models satisfy exact equality (the map's first
/// coordinate is linear), which is reported as expected equality rather than
/// a violation.
inline PropertyReport check_strong_sublinear_fn(const StepFn& map, std::size_t dim,
                                                std::size_t r, std::size_t sample_count,
                                                std::uint64_t seed,
                                                const std::vector<std::size_t>& equality_rows = {}) {
    if (r < 1) throw std::invalid_argument("check_strong_sublinear: r must be >= 1");
    PropertyReport rep;
    rep.property = "strongly_sublinear(r=" + std::to_string(r) + ")";
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> lam_dist(0.05, 0.95);
    auto iterate = [&](Vec x) {
        for (std::size_t k = 0; k < r; ++k) x = map(x);
        return x;
    };
    for (std::size_t k = 0; k < sample_count; ++k) {
        Vec x = detail::sample_log_uniform(dim, rng);
        const double lambda = lam_dist(rng);
        Vec lhs = iterate(x);
        for (double& v : lhs) v *= lambda;
        Vec scaled = x;
        for (double& v : scaled) v *= lambda;
        Vec rhs = iterate(scaled);
        ++rep.samples_tested;
        for (std::size_t i = 0; i < dim; ++i) {
            const bool expect_equal =
                std::find(equality_rows.begin(), equality_rows.end(), i) != equality_rows.end();
            const double scale = 1.0 + std::abs(rhs[i]);
            if (expect_equal) {
                if (std::abs(lhs[i] - rhs[i]) > 1e-14 * scale)
                    rep.violations.push_back({x, "coordinate " + std::to_string(i + 1) +
                                                     ": expected exact linearity",
                                              std::abs(lhs[i] - rhs[i])});
            } else if (!(rhs[i] - lhs[i] > 1e-12 * scale)) {
                rep.violations.push_back({x, "coordinate " + std::to_string(i + 1) +
                                                 ": lambda*F^r(x) not strictly below F^r(lambda*x)",
                                          rhs[i] - lhs[i]});
            }
        }
    }
    return rep;
}

inline PropertyReport check_strong_sublinear(const ModelSpec& spec, std::size_t r,
                                             std::size_t sample_count, std::uint64_t seed) {
    require_valid(spec);
    if (!all_density_dependent(spec))
        throw std::invalid_argument("check_strong_sublinear: requires density-dependent rules");
    std::vector<std::size_t> equality_rows;
    if (r == 1) equality_rows = egg_rows(spec);
    return check_strong_sublinear_fn([&](const Vec& x) { return step(spec, x); },
                                     state_dimension(spec), r, sample_count, seed, equality_rows);
}

/// Eventual positivity: F^r(x) >> 0 for every x > 0. Samples include all unit
/// basis vectors and sparse random vectors.
inline PropertyReport check_eventual_positivity(const ModelSpec& spec, std::size_t r,
                                                std::size_t sample_count, std::uint64_t seed) {
    require_valid(spec);
    const std::size_t dim = state_dimension(spec);
    if (r == 0) r = dim;
    PropertyReport rep;
    rep.property = "eventual_positivity(r=" + std::to_string(r) + ")";
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<Vec> samples;
    for (std::size_t i = 0; i < dim; ++i) {
        Vec e(dim, 0.0);
        e[i] = 1.0;
        samples.push_back(std::move(e));
    }
    while (samples.size() < dim + sample_count) {
        Vec x(dim, 0.0);
        bool any = false;
        for (std::size_t i = 0; i < dim; ++i)
            if (unit(rng) < 0.4) {
                x[i] = std::pow(10.0, -3.0 + 6.0 * unit(rng));
                any = true;
            }
        if (!any) x[static_cast<std::size_t>(unit(rng) * dim) % dim] = 1.0;
        samples.push_back(std::move(x));
    }

    for (const Vec& x : samples) {
        Vec y = step_n(spec, x, r);
        ++rep.samples_tested;
        for (std::size_t i = 0; i < dim; ++i)
            if (!(y[i] > 0.0))
                rep.violations.push_back({x, "coordinate " + std::to_string(i + 1) +
                                                 " not strictly positive after " +
                                                 std::to_string(r) + " steps",
                                          y[i]});
    }
    return rep;
}

}  // namespace pm
