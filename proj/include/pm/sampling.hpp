#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>

#include "pm/model.hpp"
#include "pm/spectral.hpp"

namespace pm {

/// Random generation of valid model specs for property suites. All draws are
/// driven by the caller's engine so results are reproducible from a seed.
struct SpecSampler {
    std::mt19937_64 rng;

    explicit SpecSampler(std::uint64_t seed) : rng(seed) {}

    std::size_t stage_count(std::size_t lo = 2, std::size_t hi = 10) {
        std::uniform_int_distribution<std::size_t> d(lo, hi);
        return d(rng);
    }

    double uniform(double lo, double hi) {
        std::uniform_real_distribution<double> d(lo, hi);
        return d(rng);
    }

    /// Isolated spec with constant rules; transitions kept away from the
    /// degenerate endpoints, all fecundities strictly positive.
    IsolatedSpec isolated_constant(std::size_t n) {
        IsolatedSpec s;
        for (std::size_t i = 0; i < n; ++i)
            s.transitions.push_back(TransitionRule::constant(uniform(0.05, 0.95)));
        for (std::size_t j = 2; j <= n; ++j)
            s.fecundities.push_back(uniform(0.05, 5.0));
        return s;
    }

    /// Isolated spec with Beverton-Holt rules on every stage.
    IsolatedSpec isolated_beverton_holt(std::size_t n) {
        IsolatedSpec s;
        for (std::size_t i = 0; i < n; ++i)
            s.transitions.push_back(
                TransitionRule::beverton_holt(uniform(0.05, 0.95), uniform(0.1, 10.0)));
        for (std::size_t j = 2; j <= n; ++j)
            s.fecundities.push_back(uniform(0.05, 5.0));
        return s;
    }

    /// Rescales all fecundities so the spec's R0 at zero density hits the
    /// target. R0 is linear in the fecundity vector, so this is exact.
    static IsolatedSpec with_target_r0(IsolatedSpec s, double target) {
        const double r0 = r0_isolated_closed_form(s);
        if (!(r0 > 0.0))
            throw std::logic_error("with_target_r0: sampled spec has zero R0");
        for (double& f : s.fecundities) f *= target / r0;
        return s;
    }

    IsolatedSpec isolated_constant_with_r0(std::size_t n, double target) {
        return with_target_r0(isolated_constant(n), target);
    }

    IsolatedSpec isolated_beverton_holt_with_r0(std::size_t n, double target) {
        return with_target_r0(isolated_beverton_holt(n), target);
    }

    SingleEggSpec single_egg_constant(std::size_t n, std::size_t m) {
        return SingleEggSpec{isolated_constant(n), isolated_constant(m), uniform(0.05, 0.95)};
    }

    SingleEggSpec single_egg_beverton_holt(std::size_t n, std::size_t m) {
        return SingleEggSpec{isolated_beverton_holt(n), isolated_beverton_holt(m),
                             uniform(0.05, 0.95)};
    }

    TwoEggSpec two_egg_constant(std::size_t n, std::size_t m) {
        return TwoEggSpec{isolated_constant(n), isolated_constant(m), uniform(0.05, 0.95),
                          uniform(0.05, 0.95)};
    }

    TwoEggSpec two_egg_beverton_holt(std::size_t n, std::size_t m) {
        return TwoEggSpec{isolated_beverton_holt(n), isolated_beverton_holt(m),
                          uniform(0.05, 0.95), uniform(0.05, 0.95)};
    }

    /// Two-egg spec whose isolated reproduction numbers are separated by at
    /// least the given relative gap (the generic case of the allocation
    /// surface analysis).
    TwoEggSpec two_egg_with_distinct_r0(std::size_t n, std::size_t m,
                                        double min_relative_gap = 0.05) {
        for (int attempt = 0; attempt < 1000; ++attempt) {
            TwoEggSpec s = two_egg_constant(n, m);
            const double r0s = r0_isolated_closed_form(s.migrant);
            const double r0r = r0_isolated_closed_form(s.resident);
            if (std::abs(r0s - r0r) > min_relative_gap * std::max(r0s, r0r)) return s;
        }
        throw std::logic_error("two_egg_with_distinct_r0: sampling failed");
    }
};

}  // namespace pm
