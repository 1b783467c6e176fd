#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "pm/linalg.hpp"
#include "pm/model.hpp"

namespace pm {

/// |R0 - 1| within this band counts as the threshold regime.
inline constexpr double kThresholdTolerance = 1e-9;

/// Spectral radius of a nonnegative matrix (power iteration on M + I,
/// relative tolerance 1e-12, deterministic start).
inline double dominant_eigenvalue(const Matrix& m) {
    return power_iteration(m).value;
}

// ---------------------------------------------------------------------------
// Basic reproduction numbers
// ---------------------------------------------------------------------------

/// R0 by definition: spectral radius of F (I - T)^{-1} built from the
/// linearization at the origin. This is the dense oracle path; the closed
/// forms below must agree with it.
inline double r0_next_generation(const ModelSpec& spec) {
    auto d = next_generation_split(spec);
    const std::size_t dim = d.fecundity.rows();
    Matrix i_minus_t(dim, dim);
    for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = 0; j < dim; ++j)
            i_minus_t(i, j) = (i == j ? 1.0 : 0.0) - d.transition(i, j);
    Matrix next_gen = d.fecundity.multiply(invert(i_minus_t));
    // F(I-T)^{-1} can have small negative round-off in theory-zero slots.
    for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = 0; j < dim; ++j)
            if (next_gen(i, j) < 0.0) next_gen(i, j) = 0.0;
    return dominant_eigenvalue(next_gen);
}

/// Expected lifetime offspring contributed to the egg stage:
/// t_1 f_2 + t_1 t_2 f_3 + ... + (t_1...t_{n-1}) f_n / (1 - t_n),
/// transitions evaluated at density 0.
inline double r0_isolated_closed_form(const IsolatedSpec& s) {
    const std::size_t n = s.stages();
    double survival_product = 1.0;
    double r0 = 0.0;
    for (std::size_t j = 2; j <= n; ++j) {
        survival_product *= s.transitions[j - 2].probability_at_zero();
        double term = survival_product * s.fecundity(j);
        if (j == n) term /= 1.0 - s.transitions[n - 1].probability_at_zero();
        r0 += term;
    }
    return r0;
}

/// Single-pool coupled R0 is the convex combination
/// phi R0^s + (1 - phi) R0^r of the isolated reproduction numbers.
inline double r0_single_egg(const SingleEggSpec& s) {
    return s.phi * r0_isolated_closed_form(s.migrant) +
           (1.0 - s.phi) * r0_isolated_closed_form(s.resident);
}

namespace detail {

inline double two_egg_discriminant(double r0s, double r0r, double phi_s, double phi_r) {
    const double mean = phi_s * r0s + phi_r * r0r;
    return mean * mean - 4.0 * r0s * r0r * (phi_s + phi_r - 1.0);
}

}  // namespace detail

/// Two-pool coupled R0 from the allocation parameters and the two isolated
/// reproduction numbers: the dominant root of the 2x2 mixing matrix
/// [[phi_s R0^s, (1-phi_r) R0^r], [(1-phi_s) R0^s, phi_r R0^r]].
inline double r0_two_egg_from_isolated(double r0s, double r0r, double phi_s, double phi_r) {
    const double disc = detail::two_egg_discriminant(r0s, r0r, phi_s, phi_r);
    if (disc < 0.0)
        throw std::logic_error("r0_two_egg: negative discriminant (corrupt inputs)");
    return 0.5 * (phi_s * r0s + phi_r * r0r + std::sqrt(disc));
}

inline double r0_two_egg(const TwoEggSpec& s) {
    return r0_two_egg_from_isolated(r0_isolated_closed_form(s.migrant),
                                    r0_isolated_closed_form(s.resident), s.phi_s, s.phi_r);
}

/// Closed-form R0 for any model topology.
inline double r0_closed_form(const ModelSpec& spec) {
    return std::visit([](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, IsolatedSpec>) return r0_isolated_closed_form(s);
        else if constexpr (std::is_same_v<T, SingleEggSpec>) return r0_single_egg(s);
        else return r0_two_egg(s);
    }, spec);
}

// ---------------------------------------------------------------------------
// Growth classification
// ---------------------------------------------------------------------------

enum class Regime { Decline, Threshold, Growth };

inline const char* to_string(Regime r) {
    switch (r) {
        case Regime::Decline: return "Decline";
        case Regime::Threshold: return "Threshold";
        case Regime::Growth: return "Growth";
    }
    return "?";
}

struct GrowthClassification {
    double lambda = 0.0;
    double r0 = 0.0;
    Regime regime = Regime::Threshold;
};

/// Computes lambda (dominant eigenvalue of the linearization) and R0, checks
/// that they sit on the same side of 1 with the ordering R0 <= lambda < 1 or
/// 1 < lambda <= R0, and classifies the regime by R0.
inline GrowthClassification classify(const ModelSpec& spec) {
    require_valid(spec);
    GrowthClassification g;
    g.lambda = dominant_eigenvalue(linearization(spec));
    g.r0 = r0_closed_form(spec);

    const double tol = 1e-9;
    if ((g.lambda - 1.0 > tol && 1.0 - g.r0 > tol) ||
        (1.0 - g.lambda > tol && g.r0 - 1.0 > tol))
        throw std::logic_error("classify: lambda and R0 disagree about the threshold (lambda=" +
                               std::to_string(g.lambda) + ", R0=" + std::to_string(g.r0) + ")");
    if (g.lambda < 1.0 - tol && g.r0 > g.lambda + tol)
        throw std::logic_error("classify: ordering R0 <= lambda < 1 violated");
    if (g.lambda > 1.0 + tol && g.r0 < g.lambda - tol)
        throw std::logic_error("classify: ordering 1 < lambda <= R0 violated");

    if (std::abs(g.r0 - 1.0) <= kThresholdTolerance)
        g.regime = Regime::Threshold;
    else
        g.regime = g.r0 < 1.0 ? Regime::Decline : Regime::Growth;
    return g;
}

// ---------------------------------------------------------------------------
// Allocation-surface analysis (two-egg model)
// ---------------------------------------------------------------------------

struct AllocationSurface {
    std::size_t resolution = 0;          // grid points per axis
    std::vector<double> values;          // row-major over (phi_s, phi_r)
    double max_value = 0.0;
    std::vector<std::pair<double, double>> argmax;  // all grid maximizers
    double corner_00 = 0.0, corner_01 = 0.0, corner_10 = 0.0, corner_11 = 0.0;
    bool max_on_predicted_boundary = false;
    double r0s = 0.0, r0r = 0.0;

    double value_at(std::size_t i, std::size_t j) const {
        return values[i * resolution + j];
    }
};

/// Evaluates R0^{c2} over a uniform grid on D = [0,1]^2 and checks the
/// boundary-maximum prediction: the max is R0^s on the phi_s = 1 edge when
/// R0^r < R0^s, R0^r on the phi_r = 1 edge when R0^s < R0^r, and the surface
/// is constant when the two are equal.
inline AllocationSurface allocation_surface(const TwoEggSpec& spec,
                                            std::size_t resolution = 101) {
    require_valid(ModelSpec(spec));
    if (resolution < 2)
        throw std::invalid_argument("allocation_surface: resolution must be >= 2");
    AllocationSurface surf;
    surf.resolution = resolution;
    surf.r0s = r0_isolated_closed_form(spec.migrant);
    surf.r0r = r0_isolated_closed_form(spec.resident);
    surf.values.resize(resolution * resolution);

    const double h = 1.0 / static_cast<double>(resolution - 1);
    double best = -1.0;
    for (std::size_t i = 0; i < resolution; ++i) {
        const double ps = static_cast<double>(i) * h;
        for (std::size_t j = 0; j < resolution; ++j) {
            const double pr = static_cast<double>(j) * h;
            const double v = r0_two_egg_from_isolated(surf.r0s, surf.r0r, ps, pr);
            surf.values[i * resolution + j] = v;
            best = std::max(best, v);
        }
    }
    surf.max_value = best;
    const double edge_tol = 1e-9 * (1.0 + best);
    for (std::size_t i = 0; i < resolution; ++i)
        for (std::size_t j = 0; j < resolution; ++j)
            if (surf.value_at(i, j) >= best - edge_tol)
                surf.argmax.emplace_back(static_cast<double>(i) * h,
                                         static_cast<double>(j) * h);
    surf.corner_00 = r0_two_egg_from_isolated(surf.r0s, surf.r0r, 0.0, 0.0);
    surf.corner_01 = r0_two_egg_from_isolated(surf.r0s, surf.r0r, 0.0, 1.0);
    surf.corner_10 = r0_two_egg_from_isolated(surf.r0s, surf.r0r, 1.0, 0.0);
    surf.corner_11 = r0_two_egg_from_isolated(surf.r0s, surf.r0r, 1.0, 1.0);

    if (std::abs(surf.r0s - surf.r0r) <= 1e-12 * (1.0 + std::abs(surf.r0s))) {
        bool constant = true;
        for (double v : surf.values)
            if (std::abs(v - surf.r0s) > 1e-10 * (1.0 + std::abs(surf.r0s))) constant = false;
        surf.max_on_predicted_boundary = constant;
    } else if (surf.r0r < surf.r0s) {
        surf.max_on_predicted_boundary = true;
        for (const auto& [ps, pr] : surf.argmax)
            if (std::abs(ps - 1.0) > 1e-12) surf.max_on_predicted_boundary = false;
    } else {
        surf.max_on_predicted_boundary = true;
        for (const auto& [ps, pr] : surf.argmax)
            if (std::abs(pr - 1.0) > 1e-12) surf.max_on_predicted_boundary = false;
    }
    return surf;
}

/// Closed-form partial derivatives of R0^{c2} with respect to (phi_s, phi_r),
/// valid on the open square where the discriminant is positive.
inline std::pair<double, double> r0_two_egg_gradient(const TwoEggSpec& spec,
                                                     double phi_s, double phi_r) {
    if (!(phi_s > 0.0 && phi_s < 1.0 && phi_r > 0.0 && phi_r < 1.0))
        throw std::invalid_argument("r0_two_egg_gradient: point must lie in the open square");
    const double r0s = r0_isolated_closed_form(spec.migrant);
    const double r0r = r0_isolated_closed_form(spec.resident);
    const double disc = detail::two_egg_discriminant(r0s, r0r, phi_s, phi_r);
    if (!(disc > 0.0))
        throw std::domain_error("r0_two_egg_gradient: square root vanishes at this point");
    const double root = std::sqrt(disc);
    const double mean = phi_s * r0s + phi_r * r0r;
    const double ds = 0.5 * (r0s + (mean * r0s - 2.0 * r0s * r0r) / root);
    const double dr = 0.5 * (r0r + (mean * r0r - 2.0 * r0s * r0r) / root);
    return {ds, dr};
}

// ---------------------------------------------------------------------------
// Sensitivity
// ---------------------------------------------------------------------------

enum class ParamPopulation { Self, Migrant, Resident };
enum class ParamKind { Transition, Fecundity };

/// Names one demographic parameter: the zero-density scale of t_i (the
/// constant t, or the Beverton-Holt b) or a fecundity f_i.
struct ParamHandle {
    ParamPopulation population = ParamPopulation::Self;
    ParamKind kind = ParamKind::Transition;
    std::size_t index = 1;  // stage index: i in 1..n for t, 2..n for f

    std::string name() const {
        std::string s;
        switch (population) {
            case ParamPopulation::Self: break;
            case ParamPopulation::Migrant: s += "migrant."; break;
            case ParamPopulation::Resident: s += "resident."; break;
        }
        s += (kind == ParamKind::Transition ? "t_" : "f_") + std::to_string(index);
        return s;
    }
};

namespace detail {

inline void perturb_isolated(IsolatedSpec& s, const ParamHandle& h, double delta) {
    if (h.kind == ParamKind::Fecundity) {
        if (h.index < 2 || h.index > s.stages())
            throw std::invalid_argument("sensitivity: fecundity index out of range");
        s.fecundities[h.index - 2] += delta;
        return;
    }
    if (h.index < 1 || h.index > s.stages())
        throw std::invalid_argument("sensitivity: transition index out of range");
    auto& rule = s.transitions[h.index - 1];
    if (rule.is_constant()) {
        rule = TransitionRule::constant(std::get<ConstantRule>(rule.raw()).t + delta);
    } else {
        const auto& bh = std::get<BevertonHoltRule>(rule.raw());
        rule = TransitionRule::beverton_holt(bh.b + delta, bh.c);
    }
}

inline ModelSpec perturb(const ModelSpec& spec, const ParamHandle& h, double delta) {
    ModelSpec out = spec;
    std::visit([&](auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, IsolatedSpec>) {
            perturb_isolated(s, h, delta);
        } else {
            if (h.population == ParamPopulation::Migrant)
                perturb_isolated(s.migrant, h, delta);
            else if (h.population == ParamPopulation::Resident)
                perturb_isolated(s.resident, h, delta);
            else
                throw std::invalid_argument(
                    "sensitivity: coupled specs need a migrant/resident qualifier");
        }
    }, out);
    return out;
}

inline double current_value(const ModelSpec& spec, const ParamHandle& h) {
    const IsolatedSpec* iso = nullptr;
    std::visit([&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, IsolatedSpec>) {
            iso = &s;
        } else {
            iso = (h.population == ParamPopulation::Resident) ? &s.resident : &s.migrant;
        }
    }, spec);
    if (h.kind == ParamKind::Fecundity) return iso->fecundities.at(h.index - 2);
    return iso->transitions.at(h.index - 1).probability_at_zero();
}

}  // namespace detail

/// Central finite difference of R0 with respect to one parameter. Throws if
/// the perturbed spec leaves the valid region.
inline double sensitivity(const ModelSpec& spec, const ParamHandle& handle, double step) {
    require_valid(spec);
    if (!(step > 0.0)) throw std::invalid_argument("sensitivity: step must be positive");
    ModelSpec up = detail::perturb(spec, handle, step);
    ModelSpec down = detail::perturb(spec, handle, -step);
    if (!validate(up).ok() || !validate(down).ok())
        throw std::domain_error("sensitivity: perturbation of " + handle.name() +
                                " leaves the valid parameter region");
    return (r0_closed_form(up) - r0_closed_form(down)) / (2.0 * step);
}

/// Every perturbable parameter of a spec, in deterministic order.
inline std::vector<ParamHandle> all_parameters(const ModelSpec& spec) {
    std::vector<ParamHandle> out;
    auto add = [&](ParamPopulation pop, const IsolatedSpec& s) {
        for (std::size_t i = 1; i <= s.stages(); ++i)
            out.push_back({pop, ParamKind::Transition, i});
        for (std::size_t i = 2; i <= s.stages(); ++i)
            out.push_back({pop, ParamKind::Fecundity, i});
    };
    std::visit([&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, IsolatedSpec>) {
            add(ParamPopulation::Self, s);
        } else {
            add(ParamPopulation::Migrant, s.migrant);
            add(ParamPopulation::Resident, s.resident);
        }
    }, spec);
    return out;
}

}  // namespace pm
