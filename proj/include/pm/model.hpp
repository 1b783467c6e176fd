#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "pm/linalg.hpp"

namespace pm {

// ---------------------------------------------------------------------------
// Transition rules
// ---------------------------------------------------------------------------

/// Constant per-step transition probability (density independent).
struct ConstantRule {
    double t = 0.0;
};

/// Density-dependent transition probability t(x) = b / (1 + c x).
/// The survivor flow s(x) = x t(x) is the Beverton-Holt function,
/// strictly increasing and bounded by m = b / c.
struct BevertonHoltRule {
    double b = 0.0;
    double c = 0.0;
};

class TransitionRule {
public:
    using Variant = std::variant<ConstantRule, BevertonHoltRule>;

    TransitionRule() : v_(ConstantRule{0.0}) {}
    TransitionRule(ConstantRule r) : v_(r) {}
    TransitionRule(BevertonHoltRule r) : v_(r) {}

    static TransitionRule constant(double t) { return TransitionRule(ConstantRule{t}); }
    static TransitionRule beverton_holt(double b, double c) {
        return TransitionRule(BevertonHoltRule{b, c});
    }

    bool is_constant() const { return std::holds_alternative<ConstantRule>(v_); }
    bool is_beverton_holt() const { return std::holds_alternative<BevertonHoltRule>(v_); }

    const Variant& raw() const { return v_; }

    /// Transition probability at density x.
    double probability(double x) const {
        if (auto* c = std::get_if<ConstantRule>(&v_)) return c->t;
        const auto& bh = std::get<BevertonHoltRule>(v_);
        return bh.b / (1.0 + bh.c * x);
    }

    /// Survivor flow s(x) = x t(x).
    double flow(double x) const { return x * probability(x); }

    /// Probability at zero density, a = t(0).
    double probability_at_zero() const { return probability(0.0); }

    /// Upper bound on the survivor flow, m = b/c; only finite for the
    /// Beverton-Holt variant.
    std::optional<double> flow_bound() const {
        if (auto* bh = std::get_if<BevertonHoltRule>(&v_))
            return bh->b / bh->c;
        return std::nullopt;
    }

private:
    Variant v_;
};

// ---------------------------------------------------------------------------
// Model specifications
// ---------------------------------------------------------------------------

/// An isolated n-stage demography: stage 1 holds eggs, stages 2..n are
/// post-egg stages fed by the subdiagonal transitions, and the final stage
/// has a survival self-loop. Fecundities f_2..f_n feed the egg stage.
struct IsolatedSpec {
    std::vector<TransitionRule> transitions;  // t_1..t_n
    std::vector<double> fecundities;          // f_2..f_n (size n-1)

    std::size_t stages() const { return transitions.size(); }

    double fecundity(std::size_t i) const {  // i in 2..n
        return fecundities.at(i - 2);
    }
};

/// Single shared egg pool feeding both life histories: a fraction phi of
/// eggs becomes migrant, 1-phi becomes resident. State dimension n + m - 1.
struct SingleEggSpec {
    IsolatedSpec migrant;
    IsolatedSpec resident;
    double phi = 0.5;

    std::size_t dimension() const {
        return migrant.stages() + resident.stages() - 1;
    }
};

/// Two distinct egg pools: phi_s of migrant-laid eggs stay migrant, phi_r of
/// resident-laid eggs stay resident. State dimension n + m.
struct TwoEggSpec {
    IsolatedSpec migrant;
    IsolatedSpec resident;
    double phi_s = 0.5;
    double phi_r = 0.5;

    std::size_t dimension() const {
        return migrant.stages() + resident.stages();
    }
};

using CoupledSpec = std::variant<SingleEggSpec, TwoEggSpec>;
using ModelSpec = std::variant<IsolatedSpec, SingleEggSpec, TwoEggSpec>;

inline std::size_t state_dimension(const ModelSpec& spec) {
    return std::visit([](const auto& s) -> std::size_t {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, IsolatedSpec>) return s.stages();
        else return s.dimension();
    }, spec);
}

inline bool all_density_dependent(const IsolatedSpec& s) {
    for (const auto& r : s.transitions)
        if (!r.is_beverton_holt()) return false;
    return true;
}

inline bool all_density_dependent(const ModelSpec& spec) {
    return std::visit([](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, IsolatedSpec>) return all_density_dependent(s);
        else return all_density_dependent(s.migrant) && all_density_dependent(s.resident);
    }, spec);
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct ValidationReport {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

namespace detail {

inline void validate_isolated_into(const IsolatedSpec& s, const std::string& label,
                                   ValidationReport& rep) {
    auto add = [&](const std::string& msg) {
        rep.violations.push_back(label.empty() ? msg : label + ": " + msg);
    };
    const std::size_t n = s.stages();
    if (n < 2) {
        add("stage count must be >= 2, got " + std::to_string(n));
        return;
    }
    if (s.fecundities.size() != n - 1)
        add("fecundities must have " + std::to_string(n - 1) + " entries (f_2..f_n), got " +
            std::to_string(s.fecundities.size()));
    for (std::size_t i = 0; i < n; ++i) {
        const auto& rule = s.transitions[i];
        const std::string which = "t_" + std::to_string(i + 1);
        if (auto* c = std::get_if<ConstantRule>(&rule.raw())) {
            if (!(c->t >= 0.0 && c->t <= 1.0))
                add(which + ": constant probability must lie in [0,1], got " +
                    std::to_string(c->t));
        } else {
            const auto& bh = std::get<BevertonHoltRule>(rule.raw());
            if (!(bh.b > 0.0 && bh.b <= 1.0))
                add(which + ": Beverton-Holt b must lie in (0,1], got " + std::to_string(bh.b));
            if (!(bh.c > 0.0))
                add(which + ": Beverton-Holt c must be positive, got " + std::to_string(bh.c));
        }
        const double a = rule.probability_at_zero();
        if (i + 1 < n && !(a > 0.0))
            add(which + ": t(0) must be positive for stages 1.." + std::to_string(n - 1) +
                " (irreducibility)");
        if (i + 1 == n && !(a < 1.0))
            add(which + ": final-stage survival t(0) must be < 1 (I - T must be invertible)");
    }
    if (s.fecundities.size() == n - 1) {
        for (std::size_t j = 0; j < s.fecundities.size(); ++j) {
            const double f = s.fecundities[j];
            if (!(f >= 0.0) || !std::isfinite(f))
                add("f_" + std::to_string(j + 2) + ": fecundity must be finite and >= 0, got " +
                    std::to_string(f));
        }
        if (!(s.fecundities.back() > 0.0))
            add("f_" + std::to_string(n) + ": final-stage fecundity must be positive");
    }
}

}  // namespace detail

inline ValidationReport validate(const IsolatedSpec& s) {
    ValidationReport rep;
    detail::validate_isolated_into(s, "", rep);
    return rep;
}

inline ValidationReport validate(const SingleEggSpec& s) {
    ValidationReport rep;
    detail::validate_isolated_into(s.migrant, "migrant", rep);
    detail::validate_isolated_into(s.resident, "resident", rep);
    if (!(s.phi > 0.0 && s.phi < 1.0))
        rep.violations.push_back("phi must lie strictly in (0,1), got " + std::to_string(s.phi));
    return rep;
}

inline ValidationReport validate(const TwoEggSpec& s) {
    ValidationReport rep;
    detail::validate_isolated_into(s.migrant, "migrant", rep);
    detail::validate_isolated_into(s.resident, "resident", rep);
    if (!(s.phi_s >= 0.0 && s.phi_s <= 1.0))
        rep.violations.push_back("phi_s must lie in [0,1], got " + std::to_string(s.phi_s));
    if (!(s.phi_r >= 0.0 && s.phi_r <= 1.0))
        rep.violations.push_back("phi_r must lie in [0,1], got " + std::to_string(s.phi_r));
    return rep;
}

inline ValidationReport validate(const ModelSpec& spec) {
    return std::visit([](const auto& s) { return validate(s); }, spec);
}

inline void require_valid(const ModelSpec& spec) {
    auto rep = validate(spec);
    if (!rep.ok()) {
        std::string msg = "invalid model spec:";
        for (const auto& v : rep.violations) msg += "\n  - " + v;
        throw std::invalid_argument(msg);
    }
}

// ---------------------------------------------------------------------------
// Projection-matrix assembly
// ---------------------------------------------------------------------------

namespace detail {

inline void check_dimension(std::size_t expected, const Vec& x, const char* where) {
    if (x.size() != expected)
        throw std::invalid_argument(std::string(where) + ": state vector has " +
                                    std::to_string(x.size()) + " entries, expected " +
                                    std::to_string(expected));
}

}  // namespace detail

/// Leslie matrix of the isolated model evaluated at state x. First row holds
/// (0, f_2, ..., f_n); the subdiagonal holds t_i(x_i); entry (n,n) is the
/// final-stage survival t_n(x_n). With all-constant rules the result does not
/// depend on x; at x = 0 it is the linearization at the origin.
inline Matrix assemble_isolated(const IsolatedSpec& s, const Vec& x) {
    const std::size_t n = s.stages();
    detail::check_dimension(n, x, "assemble_isolated");
    Matrix a(n, n);
    for (std::size_t j = 2; j <= n; ++j) a(0, j - 1) = s.fecundity(j);
    for (std::size_t i = 1; i < n; ++i) a(i, i - 1) = s.transitions[i - 1].probability(x[i - 1]);
    a(n - 1, n - 1) = s.transitions[n - 1].probability(x[n - 1]);
    return a;
}

/// Single-egg-pool coupled matrix at state x. Layout: shared egg row 1 carries
/// f_2^s..f_n^s then f_2^r..f_m^r; the migrant chain occupies rows 2..n, the
/// resident chain rows n+1..n+m-1. Column 1 splits the egg pool: entry (2,1)
/// is phi*t_1^s(x_1), entry (n+1,1) is (1-phi)*t_1^r(x_1).
inline Matrix assemble_single_egg(const SingleEggSpec& s, const Vec& x) {
    const std::size_t n = s.migrant.stages();
    const std::size_t m = s.resident.stages();
    const std::size_t dim = n + m - 1;
    detail::check_dimension(dim, x, "assemble_single_egg");
    Matrix a(dim, dim);
    // egg row
    for (std::size_t j = 2; j <= n; ++j) a(0, j - 1) = s.migrant.fecundity(j);
    for (std::size_t j = 2; j <= m; ++j) a(0, n + j - 2) = s.resident.fecundity(j);
    // migrant chain
    a(1, 0) = s.phi * s.migrant.transitions[0].probability(x[0]);
    for (std::size_t i = 2; i < n; ++i)
        a(i, i - 1) = s.migrant.transitions[i - 1].probability(x[i - 1]);
    a(n - 1, n - 1) = s.migrant.transitions[n - 1].probability(x[n - 1]);
    // resident chain
    a(n, 0) = (1.0 - s.phi) * s.resident.transitions[0].probability(x[0]);
    for (std::size_t j = 2; j < m; ++j)
        a(n + j - 1, n + j - 2) = s.resident.transitions[j - 1].probability(x[n + j - 2]);
    a(dim - 1, dim - 1) = s.resident.transitions[m - 1].probability(x[dim - 1]);
    return a;
}

/// Two-egg-pool coupled block matrix at state x:
///   [ phi_s * A_n^s(x)      (1-phi_r) * B^r ]
///   [ (1-phi_s) * B^s       phi_r * A_m^r(x) ]
/// where a*A scales only the first row of A, and the B blocks carry the other
/// population's fecundity row. Migrant densities are x_1..x_n; resident
/// densities x_{n+1}..x_{n+m}, with the transition out of resident stage j
/// evaluated at the source coordinate x_{n+j}.
inline Matrix assemble_two_egg(const TwoEggSpec& s, const Vec& x) {
    const std::size_t n = s.migrant.stages();
    const std::size_t m = s.resident.stages();
    const std::size_t dim = n + m;
    detail::check_dimension(dim, x, "assemble_two_egg");
    Matrix a(dim, dim);
    // migrant egg row (row 1)
    for (std::size_t j = 2; j <= n; ++j) a(0, j - 1) = s.phi_s * s.migrant.fecundity(j);
    for (std::size_t j = 2; j <= m; ++j) a(0, n + j - 1) = (1.0 - s.phi_r) * s.resident.fecundity(j);
    // migrant chain
    for (std::size_t i = 1; i < n; ++i)
        a(i, i - 1) = s.migrant.transitions[i - 1].probability(x[i - 1]);
    a(n - 1, n - 1) = s.migrant.transitions[n - 1].probability(x[n - 1]);
    // resident egg row (row n+1)
    for (std::size_t j = 2; j <= n; ++j) a(n, j - 1) = (1.0 - s.phi_s) * s.migrant.fecundity(j);
    for (std::size_t j = 2; j <= m; ++j) a(n, n + j - 1) = s.phi_r * s.resident.fecundity(j);
    // resident chain
    for (std::size_t j = 1; j < m; ++j)
        a(n + j, n + j - 1) = s.resident.transitions[j - 1].probability(x[n + j - 1]);
    a(dim - 1, dim - 1) = s.resident.transitions[m - 1].probability(x[dim - 1]);
    return a;
}

inline Matrix assemble(const ModelSpec& spec, const Vec& x) {
    return std::visit([&](const auto& s) -> Matrix {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, IsolatedSpec>) return assemble_isolated(s, x);
        else if constexpr (std::is_same_v<T, SingleEggSpec>) return assemble_single_egg(s, x);
        else return assemble_two_egg(s, x);
    }, spec);
}

/// Linearization at the origin (the Jacobian of x -> A(x)x at 0).
inline Matrix linearization(const ModelSpec& spec) {
    return assemble(spec, Vec(state_dimension(spec), 0.0));
}

/// Row indices that receive newborns (the egg rows); all fecundity entries of
/// the assembled matrix live in these rows.
inline std::vector<std::size_t> egg_rows(const ModelSpec& spec) {
    if (std::holds_alternative<TwoEggSpec>(spec)) {
        const auto& s = std::get<TwoEggSpec>(spec);
        return {0, s.migrant.stages()};
    }
    return {0};
}

/// Next-generation decomposition A = F + T of the linearization at 0:
/// F keeps only the fecundity (egg-row) entries, T only the transitions.
struct NextGenDecomposition {
    Matrix fecundity;   // F
    Matrix transition;  // T
};

inline NextGenDecomposition next_generation_split(const ModelSpec& spec) {
    Matrix a0 = linearization(spec);
    const std::size_t dim = a0.rows();
    const auto eggs = egg_rows(spec);
    NextGenDecomposition d{Matrix(dim, dim), Matrix(dim, dim)};
    for (std::size_t i = 0; i < dim; ++i) {
        const bool is_egg_row =
            std::find(eggs.begin(), eggs.end(), i) != eggs.end();
        for (std::size_t j = 0; j < dim; ++j) {
            if (is_egg_row)
                d.fecundity(i, j) = a0(i, j);
            else
                d.transition(i, j) = a0(i, j);
        }
    }
    return d;
}

}  // namespace pm
