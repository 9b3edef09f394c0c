#pragma once

#include "mflab/field.hpp"

#include <limits>
#include <numeric>

namespace mflab {

/// Decreasing rearrangement: distinct levels with the cumulative area at or
/// above each level.
struct RearrangementProfile {
    std::vector<double> levels;
    std::vector<double> cum_area;
    double total_area = 0.0;

    /// Measure of {ω = levels[i]}.
    double level_area(size_t i) const { return i == 0 ? cum_area[0] : cum_area[i] - cum_area[i - 1]; }
};

struct ClosureMembership {
    bool member = false;
    double worst_level = 0.0;
    double worst_margin = 0.0;
    /// ∫ω − ∫ω₀.
    double mean_gap = 0.0;
};

/// Cell indices ordered by decreasing value, ties broken by cell index.
inline std::vector<size_t> descending_order(const std::vector<double>& v) {
    std::vector<size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] > v[b]; });
    return idx;
}

inline std::vector<double> sorted_descending(const std::vector<double>& v) {
    std::vector<double> s(v);
    std::sort(s.begin(), s.end(), std::greater<>());
    return s;
}

inline RearrangementProfile profile(const VorticityField& f) {
    const auto order = descending_order(f.values());
    const double a = f.domain().cell_area();
    RearrangementProfile p;
    p.total_area = f.domain().area();
    size_t count = 0;
    for (size_t k = 0; k < order.size(); ++k) {
        const double v = f[order[k]];
        ++count;
        if (k + 1 == order.size() || f[order[k + 1]] != v) {
            p.levels.push_back(v);
            p.cum_area.push_back(count == f.size() ? p.total_area : count * a);
        }
    }
    return p;
}

/// Rebuilds a field from a profile by filling cells in the given order.
inline VorticityField from_profile(const RearrangementProfile& p, const Domain& d, const std::vector<size_t>& order) {
    std::vector<double> v(d.cells());
    const double a = d.cell_area();
    size_t lvl = 0;
    for (size_t k = 0; k < order.size(); ++k) {
        while (lvl + 1 < p.levels.size() && (k + 0.5) * a > p.cum_area[lvl]) ++lvl;
        v[order[k]] = p.levels[lvl];
    }
    return VorticityField::with_auto_bound(d, std::move(v));
}

namespace detail {

/// ∫(ω−c)₊ over cells given values sorted descending and their prefix sums.
inline double positive_part_integral(const std::vector<double>& desc, const std::vector<double>& prefix, double c,
                                     double cell_area) {
    const auto it = std::lower_bound(desc.begin(), desc.end(), c, std::greater<>());
    const size_t k = static_cast<size_t>(it - desc.begin());
    // entries strictly greater than c come first; equal entries contribute 0
    return (prefix[k] - static_cast<double>(k) * c) * cell_area;
}

inline std::vector<double> prefix_sums(const std::vector<double>& desc) {
    std::vector<double> p(desc.size() + 1, 0.0);
    Accumulator acc;
    for (size_t k = 0; k < desc.size(); ++k) {
        acc.add(desc[k]);
        p[k + 1] = acc.value();
    }
    return p;
}

} // namespace detail

inline double default_membership_tol(const VorticityField& omega0) {
    return 1e-9 * std::max(omega0.sup_norm(), std::numeric_limits<double>::min()) * omega0.domain().area();
}

/// Majorization test ω ⪯ ω₀ at every distinct level of either field.
inline ClosureMembership in_orbit_closure(const VorticityField& omega, const VorticityField& omega0,
                                          double tol = -1.0) {
    require_same_domain(omega.domain(), omega0.domain());
    if (tol < 0) tol = default_membership_tol(omega0);
    const double a = omega.domain().cell_area();
    const auto d1 = sorted_descending(omega.values());
    const auto d0 = sorted_descending(omega0.values());
    const auto p1 = detail::prefix_sums(d1);
    const auto p0 = detail::prefix_sums(d0);
    ClosureMembership m;
    m.mean_gap = (p1.back() - p0.back()) * a;
    m.worst_margin = std::numeric_limits<double>::infinity();
    auto check = [&](double c) {
        const double margin = detail::positive_part_integral(d0, p0, c, a) - detail::positive_part_integral(d1, p1, c, a);
        if (margin < m.worst_margin) {
            m.worst_margin = margin;
            m.worst_level = c;
        }
    };
    for (size_t k = 0; k < d0.size(); ++k)
        if (k == 0 || d0[k] != d0[k - 1]) check(d0[k]);
    for (size_t k = 0; k < d1.size(); ++k)
        if (k == 0 || d1[k] != d1[k - 1]) check(d1[k]);
    m.member = std::abs(m.mean_gap) <= tol && m.worst_margin >= -tol;
    return m;
}

/// Profiles agree level by level (sorted cell values within tol).
inline bool equimeasurable(const VorticityField& a, const VorticityField& b, double tol = -1.0) {
    require_same_domain(a.domain(), b.domain());
    if (tol < 0) tol = 1e-12 * std::max({1.0, a.sup_norm(), b.sup_norm()});
    const auto sa = sorted_descending(a.values());
    const auto sb = sorted_descending(b.values());
    for (size_t k = 0; k < sa.size(); ++k)
        if (std::abs(sa[k] - sb[k]) > tol) return false;
    return true;
}

/// Convex integrand for Casimirs I_f(ω) = ∫f(ω).
struct ConvexFunctionSpec {
    enum class Kind { Quadratic, PowerP, Entropy, NegEntropyBoltzmann, Exp, Tabulated };
    Kind kind = Kind::Quadratic;
    double p = 2.0;
    std::vector<double> nodes;
    std::vector<double> values;

    static ConvexFunctionSpec quadratic() { return {}; }
    static ConvexFunctionSpec power(double p) {
        if (!(p > 1.0)) throw Error(ErrorCode::Precondition, "PowerP needs p > 1");
        ConvexFunctionSpec f;
        f.kind = Kind::PowerP;
        f.p = p;
        return f;
    }
    static ConvexFunctionSpec entropy() { return with_kind(Kind::Entropy); }
    static ConvexFunctionSpec neg_entropy_boltzmann() { return with_kind(Kind::NegEntropyBoltzmann); }
    static ConvexFunctionSpec exponential() { return with_kind(Kind::Exp); }
    /// Piecewise-linear interpolant; convexity checked by second differences.
    static ConvexFunctionSpec tabulated(std::vector<double> x, std::vector<double> y) {
        if (x.size() < 2 || x.size() != y.size())
            throw Error(ErrorCode::Precondition, "tabulated function needs matching node/value arrays");
        for (size_t k = 1; k < x.size(); ++k)
            if (!(x[k] > x[k - 1])) throw Error(ErrorCode::Precondition, "tabulated nodes must increase");
        for (size_t k = 1; k + 1 < x.size(); ++k) {
            const double s0 = (y[k] - y[k - 1]) / (x[k] - x[k - 1]);
            const double s1 = (y[k + 1] - y[k]) / (x[k + 1] - x[k]);
            if (s1 < s0 - 1e-12 * (1.0 + std::abs(s0)))
                throw Error(ErrorCode::Precondition, "tabulated function is not convex at node " + std::to_string(k));
        }
        ConvexFunctionSpec f;
        f.kind = Kind::Tabulated;
        f.nodes = std::move(x);
        f.values = std::move(y);
        return f;
    }

    /// −1 for the concave Boltzmann entropy, +1 otherwise.
    double sign() const { return kind == Kind::NegEntropyBoltzmann ? -1.0 : 1.0; }
    bool strictly_convex() const { return kind != Kind::Tabulated; }

    std::string name() const {
        switch (kind) {
        case Kind::Quadratic: return "quadratic";
        case Kind::PowerP: return "power(" + detail::fmt17(p) + ")";
        case Kind::Entropy: return "entropy";
        case Kind::NegEntropyBoltzmann: return "neg-entropy";
        case Kind::Exp: return "exp";
        case Kind::Tabulated: return "tabulated";
        }
        return "?";
    }

    bool in_domain(double x) const {
        switch (kind) {
        case Kind::Entropy:
        case Kind::NegEntropyBoltzmann: return x >= 0.0;
        case Kind::Tabulated: return x >= nodes.front() && x <= nodes.back();
        default: return std::isfinite(x);
        }
    }

    /// The convex part φ (x log x for both entropy kinds).
    double convex(double x) const {
        switch (kind) {
        case Kind::Quadratic: return 0.5 * x * x;
        case Kind::PowerP: return std::pow(std::abs(x), p);
        case Kind::Entropy:
        case Kind::NegEntropyBoltzmann: return x > 0.0 ? x * std::log(x) : 0.0;
        case Kind::Exp: return std::exp(x);
        case Kind::Tabulated: {
            const auto it = std::upper_bound(nodes.begin(), nodes.end(), x);
            size_t k = static_cast<size_t>(it - nodes.begin());
            k = std::clamp<size_t>(k, 1, nodes.size() - 1);
            const double t = (x - nodes[k - 1]) / (nodes[k] - nodes[k - 1]);
            return values[k - 1] + t * (values[k] - values[k - 1]);
        }
        }
        return 0.0;
    }
    double operator()(double x) const { return sign() * convex(x); }

    /// φ′ (right derivative for the tabulated kind).
    double derivative(double x) const {
        switch (kind) {
        case Kind::Quadratic: return x;
        case Kind::PowerP: return p * std::pow(std::abs(x), p - 1.0) * (x < 0 ? -1.0 : 1.0);
        case Kind::Entropy:
        case Kind::NegEntropyBoltzmann: return std::log(x) + 1.0;
        case Kind::Exp: return std::exp(x);
        case Kind::Tabulated: {
            const auto it = std::upper_bound(nodes.begin(), nodes.end(), x);
            size_t k = std::clamp<size_t>(static_cast<size_t>(it - nodes.begin()), 1, nodes.size() - 1);
            return (values[k] - values[k - 1]) / (nodes[k] - nodes[k - 1]);
        }
        }
        return 0.0;
    }

    double second_derivative(double x) const {
        switch (kind) {
        case Kind::Quadratic: return 1.0;
        case Kind::PowerP: return p * (p - 1.0) * std::pow(std::abs(x), p - 2.0);
        case Kind::Entropy:
        case Kind::NegEntropyBoltzmann: return 1.0 / x;
        case Kind::Exp: return std::exp(x);
        case Kind::Tabulated: return 0.0;
        }
        return 0.0;
    }

    /// (φ′)⁻¹(y); the exponential kind requires y > 0.
    double inverse_derivative(double y) const {
        switch (kind) {
        case Kind::Quadratic: return y;
        case Kind::PowerP: return (y < 0 ? -1.0 : 1.0) * std::pow(std::abs(y) / p, 1.0 / (p - 1.0));
        case Kind::Entropy:
        case Kind::NegEntropyBoltzmann: return std::exp(y - 1.0);
        case Kind::Exp: return y > 0 ? std::log(y) : -std::numeric_limits<double>::infinity();
        case Kind::Tabulated: break;
        }
        throw Error(ErrorCode::Precondition, "inverse derivative needs a strictly convex function");
    }

    /// Supremum of admissible derivative arguments for inverse_derivative.
    double derivative_sup() const { return std::numeric_limits<double>::infinity(); }
    double derivative_inf() const { return kind == Kind::Exp ? 0.0 : -std::numeric_limits<double>::infinity(); }

private:
    static ConvexFunctionSpec with_kind(Kind k) {
        ConvexFunctionSpec f;
        f.kind = k;
        return f;
    }
};

/// I_f(ω) by exact cell quadrature.
inline double casimir(const VorticityField& f, const ConvexFunctionSpec& spec) {
    Accumulator acc;
    for (size_t k = 0; k < f.size(); ++k) {
        if (!spec.in_domain(f[k]))
            throw Error(ErrorCode::FunctionDomain,
                        spec.name() + " undefined at cell " + std::to_string(k) + " value " + detail::fmt17(f[k]));
        acc.add(spec(f[k]));
    }
    return acc.value() * f.domain().cell_area();
}

} // namespace mflab
