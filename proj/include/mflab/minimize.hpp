#pragma once

#include "mflab/greens.hpp"
#include "mflab/isotonic.hpp"
#include "mflab/rearrange.hpp"

#include <Eigen/Dense>

#include <deque>
#include <future>
#include <random>

namespace mflab {

struct MinimizeOptions {
    /// Allowed |E(ω*) − E₀| relative to E₀.
    double energy_tol = 1e-8;
    /// Outer iterations stop once sup|Δω| ≤ step_tol·range(ω₀).
    double step_tol = 1e-12;
    int max_outer = 20000;
    int multi_starts = 5;
    std::uint64_t seed = 20240917;
    int fw_max_iter = 100000;
    double fw_gap_tol = 1e-8;
    /// Frank–Wolfe steps used to warm-start each convex inner solve.
    int fw_warm_iter = 50;
    int prox_max_iter = 200000;
    int threads = 1;
};

struct MinimizeResiduals {
    double energy_gap = 0.0;
    double mean_gap = 0.0;
    double momentum_gap = 0.0;
    /// ‖ω* − Prox(multipliers, ψ*)‖₂ / ‖ω*‖₂.
    double stationarity = 0.0;
    /// Isotonic (ψ*, ω*) residual relative to ‖ω*‖₂.
    double isotonic = 0.0;
};

/// Stationarity model: f′(ω*) − βψ* + γ + Σᵢ λᵢ χ{ω* > aᵢ} = 0, i.e.
/// μ₀ = −β and μ₁ = γ in the two-level clamp form.
struct MinimalFlowResult {
    VorticityField omega_star;
    StreamSolution psi_star;
    VorticityField omega_ref;
    ConvexFunctionSpec casimir;
    bool fix_momentum = false;
    double beta = 0.0;
    double gamma = 0.0;
    /// Momentum multiplier (angular momentum on the disk).
    double eta = 0.0;
    std::vector<double> lambda_levels;
    std::vector<double> lambda;
    double f_value = 0.0;
    double f_value0 = 0.0;
    double energy0 = 0.0;
    double energy_ref = 0.0;
    MinimizeResiduals residuals;
    /// "constant", "reference", "linearized", "linearized-vertex" or "convex".
    std::string regime;
    int iterations = 0;
    int starts = 0;
    int best_start = 0;
    std::uint64_t seed = 0;
    /// Root bracket with E(β_lo) ≥ E₀ ≥ E(β_hi) (convex regime).
    double beta_lo = 0.0, beta_hi = 0.0, energy_lo = 0.0, energy_hi = 0.0;
};

namespace detail {

/// Sign-change bracket: f(neg) < 0 ≤ f(pos). The points need not be ordered.
struct Bracket {
    double neg, fneg, pos, fpos;
};

/// Illinois refinement until |f| ≤ ftol or the bracket is narrower than xtol.
template <class G>
Bracket refine_bracket(G&& g, Bracket b, double xtol, double ftol, int max_iter = 300) {
    int side = 0;
    for (int it = 0; it < max_iter; ++it) {
        if (std::abs(b.pos - b.neg) <= xtol || b.fpos <= ftol || -b.fneg <= ftol) break;
        double c = (b.neg * b.fpos - b.pos * b.fneg) / (b.fpos - b.fneg);
        const double lo = std::min(b.neg, b.pos), hi = std::max(b.neg, b.pos);
        if (!(c > lo && c < hi)) c = 0.5 * (lo + hi);
        const double fc = g(c);
        if (fc >= 0) {
            b.pos = c;
            b.fpos = fc;
            if (side == 1) b.fneg *= 0.5;
            side = 1;
        } else {
            b.neg = c;
            b.fneg = fc;
            if (side == -1) b.fpos *= 0.5;
            side = -1;
        }
    }
    return b;
}

/// Bracket end with the smaller residual.
inline double best_point(const Bracket& b) { return std::abs(b.fpos) <= std::abs(b.fneg) ? b.pos : b.neg; }

/// φ(x) = s·f(x) + (q/2)x² for a strictly convex f and s > 0.
struct ShiftedConvex {
    ConvexFunctionSpec f;
    double q = 0.0;
    double s = 1.0;

    bool positive_domain() const {
        return f.kind == ConvexFunctionSpec::Kind::Entropy || f.kind == ConvexFunctionSpec::Kind::NegEntropyBoltzmann;
    }
    double derivative(double x) const { return s * f.derivative(x) + q * x; }
    double curvature(double x) const { return s * f.second_derivative(x) + q; }
    double inverse(double y) const {
        if (f.kind == ConvexFunctionSpec::Kind::Quadratic) return y / (s + q);
        if (q == 0.0) return f.inverse_derivative(y / s);
        return invert(y);
    }

private:
    double invert(double y) const {
        const bool pos = positive_domain();
        auto h = [&](double x) { return derivative(x) - y; };
        double x0 = pos ? 1.0 : 0.0;
        if (y / s > f.derivative_inf()) {
            const double t = f.inverse_derivative(y / s);
            if (std::isfinite(t) && (!pos || t > 0)) x0 = t;
        }
        const double h0 = h(x0);
        if (h0 == 0.0) return x0;
        Bracket b{x0, h0, x0, h0};
        double step = std::max(1.0, std::abs(x0));
        if (h0 > 0) {
            double x = x0;
            do {
                x = pos ? 0.5 * x : x - step;
                step *= 2.0;
            } while (h(x) >= 0 && std::isfinite(x) && x != 0.0);
            b.neg = x;
            b.fneg = h(x);
        } else {
            double x = x0;
            do {
                x = x + step;
                step *= 2.0;
            } while (h(x) < 0 && std::isfinite(x));
            b.pos = x;
            b.fpos = h(x);
        }
        b = refine_bracket(h, b, 0.0, 0.0, 200);
        return best_point(b);
    }
};

struct ProxBlock {
    size_t begin = 0;
    size_t len = 0;
    double lambda = 0.0;
    double sum_c = 0.0;
    double lse_m = 0.0;
    double lse_s = 0.0;
};

struct ProxResult {
    std::vector<double> x;
    std::vector<ProxBlock> blocks;

    /// Λ of the block holding the most cells (the free mean multiplier).
    double dominant_lambda() const {
        size_t best = 0;
        for (size_t b = 1; b < blocks.size(); ++b)
            if (blocks[b].len > blocks[best].len) best = b;
        return blocks.empty() ? 0.0 : blocks[best].lambda;
    }
};

/// argmin Σφ(xᵢ) − cᵢxᵢ over {x ⪯ w, Σx = Σw} by generalized pool-adjacent-violators.
class PermutohedronProx {
public:
    PermutohedronProx(ShiftedConvex phi, const std::vector<double>& w_desc)
        : phi_(std::move(phi)), w_(w_desc), prefix_(prefix_sums(w_desc)) {}

    ProxResult operator()(const std::vector<double>& c) const {
        const size_t n = c.size();
        const auto order = descending_order(c);
        std::vector<double> cs(n);
        for (size_t k = 0; k < n; ++k) cs[k] = c[order[k]];
        std::vector<ProxBlock> st;
        st.reserve(n);
        for (size_t k = 0; k < n; ++k) {
            ProxBlock b;
            b.begin = k;
            b.len = 1;
            b.lambda = cs[k] - phi_.derivative(w_[k]);
            b.sum_c = cs[k];
            b.lse_m = cs[k] / phi_.s - 1.0;
            b.lse_s = 1.0;
            st.push_back(b);
            while (st.size() >= 2 && st[st.size() - 2].lambda < st.back().lambda) {
                ProxBlock hi = st.back();
                st.pop_back();
                st.back() = merge(st.back(), hi, cs);
            }
        }
        ProxResult r;
        r.x.assign(n, 0.0);
        for (const ProxBlock& b : st) {
            for (size_t k = b.begin; k < b.begin + b.len; ++k)
                r.x[order[k]] = b.len == 1 ? w_[k] : phi_.inverse(cs[k] - b.lambda);
        }
        r.blocks = std::move(st);
        return r;
    }

private:
    bool closed_entropy() const { return phi_.q == 0.0 && phi_.positive_domain(); }

    ProxBlock merge(const ProxBlock& a, const ProxBlock& b, const std::vector<double>& cs) const {
        ProxBlock m;
        m.begin = a.begin;
        m.len = a.len + b.len;
        m.sum_c = a.sum_c + b.sum_c;
        m.lse_m = std::max(a.lse_m, b.lse_m);
        m.lse_s = a.lse_s * std::exp(a.lse_m - m.lse_m) + b.lse_s * std::exp(b.lse_m - m.lse_m);
        const double S = prefix_[m.begin + m.len] - prefix_[m.begin];
        if (phi_.f.kind == ConvexFunctionSpec::Kind::Quadratic) {
            m.lambda = (m.sum_c - (phi_.s + phi_.q) * S) / static_cast<double>(m.len);
        } else if (closed_entropy()) {
            if (S < 0) throw Error(ErrorCode::FunctionDomain, "entropy prox on a block with negative mass");
            m.lambda = S == 0.0 ? std::numeric_limits<double>::infinity()
                                : phi_.s * (m.lse_m + std::log(m.lse_s) - std::log(S));
        } else {
            m.lambda = solve_block(cs, m.begin, m.len, S, a.lambda, b.lambda, a.len >= b.len ? a.lambda : b.lambda);
        }
        return m;
    }

    /// Root of H(Λ) = Σφ′⁻¹(cᵢ − Λ) − S, decreasing in Λ, with H(lo) ≥ 0 ≥ H(hi),
    /// by Newton steps kept inside the bracket.
    double solve_block(const std::vector<double>& cs, size_t begin, size_t len, double S, double lo, double hi,
                       double guess) const {
        auto eval = [&](double lam, double& slope) {
            Accumulator acc;
            slope = 0.0;
            for (size_t k = begin; k < begin + len; ++k) {
                const double x = phi_.inverse(cs[k] - lam);
                acc.add(x);
                slope -= 1.0 / phi_.curvature(x);
            }
            return acc.value() - S;
        };
        double slope = 0.0;
        if (!std::isfinite(hi)) {
            double step = 1.0 + std::abs(lo);
            hi = lo + step;
            while (eval(hi, slope) > 0) {
                step *= 2.0;
                hi = lo + step;
            }
        }
        double lam = std::isfinite(guess) ? guess : 0.5 * (lo + hi);
        for (int it = 0; it < 200; ++it) {
            const double h = eval(lam, slope);
            if (h == 0.0) return lam;
            (h > 0 ? lo : hi) = lam;
            double next = lam - h / slope;
            if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
            if (std::abs(next - lam) <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(lam)) ||
                hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(lam)))
                return next;
            lam = next;
        }
        return lam;
    }

    ShiftedConvex phi_;
    std::vector<double> w_;
    std::vector<double> prefix_;
};

} // namespace detail

/// The discrete variational problem: polytope {ω ⪯ ω₀}, energy shell E₀, and
/// optionally the momentum (angular momentum on the disk).
class MinimalFlowProblem {
public:
    MinimalFlowProblem(const VorticityField& omega0, const ConvexFunctionSpec& f, bool fix_momentum)
        : omega0_(omega0), f_(f), fix_momentum_(fix_momentum), solver_(omega0.domain()),
          w_desc_(sorted_descending(omega0.values())) {
        if (!f.strictly_convex())
            throw Error(ErrorCode::Precondition, "minimization needs a strictly convex integrand");
        for (size_t k = 0; k < omega0.size(); ++k)
            if (!f.in_domain(omega0[k]))
                throw Error(ErrorCode::FunctionDomain, f.name() + " undefined on the datum at cell " + std::to_string(k));
        const Domain& d = omega0.domain();
        m_.resize(d.cells());
        for (int j = 0; j < d.ny; ++j) {
            const double s = (j + 0.5) / d.ny;
            const double y = d.kind == DomainKind::DiskRadial ? 0.5 * d.ly * d.ly * (1.0 - s) : d.x2(j);
            for (int i = 0; i < d.nx; ++i) m_[d.index(i, j)] = y;
        }
        psi0_ = psi(omega0.values());
        energy0_ = energy(omega0.values(), psi0_);
        momentum0_ = momentum(omega0.values());
    }

    const Domain& domain() const { return omega0_.domain(); }
    const VorticityField& omega0() const { return omega0_; }
    const ConvexFunctionSpec& casimir() const { return f_; }
    bool fix_momentum() const { return fix_momentum_; }
    size_t size() const { return omega0_.size(); }
    double cell_area() const { return domain().cell_area(); }
    const std::vector<double>& w_desc() const { return w_desc_; }
    const std::vector<double>& momentum_weights() const { return m_; }
    double energy0() const { return energy0_; }
    double momentum0() const { return momentum0_; }
    double range() const { return w_desc_.front() - w_desc_.back(); }

    std::vector<double> psi(const std::vector<double>& z) const { return physical_psi(solver_, z); }
    double energy(const std::vector<double>& z, const std::vector<double>& psi_z) const {
        return -0.5 * dot(psi_z, z) * cell_area();
    }
    /// Green pairing ⟨x, z⟩ = −∫ψ_x z.
    double pairing(const std::vector<double>& psi_x, const std::vector<double>& z) const {
        return -dot(psi_x, z) * cell_area();
    }
    double momentum(const std::vector<double>& z) const { return -dot(m_, z) * cell_area(); }
    /// ∫f(z) for the convex part of the integrand.
    double objective(const std::vector<double>& z) const {
        Accumulator acc;
        for (double x : z) acc.add(f_.convex(x));
        return acc.value() * cell_area();
    }

    /// argmin Σ s·f(xᵢ) + (q/2)xᵢ² − cᵢxᵢ over the polytope.
    detail::ProxResult prox(const std::vector<double>& c, double q = 0.0, double s = 1.0) const {
        return detail::PermutohedronProx(detail::ShiftedConvex{f_, q, s}, w_desc_)(c);
    }
    /// Polytope vertex maximizing ⟨g, x⟩: sorted ω₀ paired with sorted g.
    std::vector<double> vertex(const std::vector<double>& g) const {
        const auto order = descending_order(g);
        std::vector<double> v(g.size());
        for (size_t k = 0; k < order.size(); ++k) v[order[k]] = w_desc_[k];
        return v;
    }

    static double dot(const std::vector<double>& a, const std::vector<double>& b) {
        Accumulator acc;
        for (size_t k = 0; k < a.size(); ++k) acc.add(a[k] * b[k]);
        return acc.value();
    }

private:
    VorticityField omega0_;
    ConvexFunctionSpec f_;
    bool fix_momentum_;
    PoissonSolver solver_;
    std::vector<double> w_desc_;
    std::vector<double> m_;
    std::vector<double> psi0_;
    double energy0_ = 0.0;
    double momentum0_ = 0.0;
};

namespace detail {

inline double sup_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t k = 0; k < a.size(); ++k) s = std::max(s, std::abs(a[k] - b[k]));
    return s;
}

inline double l2_rel(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, den = 0.0;
    for (size_t k = 0; k < a.size(); ++k) {
        num += (a[k] - b[k]) * (a[k] - b[k]);
        den += b[k] * b[k];
    }
    return den > 0 ? std::sqrt(num / den) : std::sqrt(num);
}

/// Coefficient vector c = s·g + η·m.
inline std::vector<double> linear_coeffs(const MinimalFlowProblem& P, const std::vector<double>& g, double s,
                                         double eta) {
    const auto& m = P.momentum_weights();
    std::vector<double> c(g.size());
    for (size_t k = 0; k < g.size(); ++k) c[k] = s * g[k] + eta * m[k];
    return c;
}

/// Prox with the momentum multiplier chosen so that M(x) = M₀.
/// make_c(η) builds the linear coefficients; eta carries the warm start in and the root out.
template <class MakeC>
ProxResult momentum_prox(const MinimalFlowProblem& P, MakeC&& make_c, double q, double& eta) {
    if (!P.fix_momentum()) {
        eta = 0.0;
        return P.prox(make_c(0.0), q);
    }
    const double M0 = P.momentum0();
    auto g = [&](double e) { return P.momentum(P.prox(make_c(e), q).x) - M0; };
    // M decreases as η grows
    const double scale = 1.0 + std::abs(eta);
    double e0 = eta;
    double g0 = g(e0);
    if (g0 == 0.0) return P.prox(make_c(e0), q);
    Bracket b{};
    double step = scale;
    if (g0 > 0) {
        b.pos = e0;
        b.fpos = g0;
        double e = e0, ge = g0;
        for (int it = 0; it < 200 && ge > 0; ++it) {
            e += step;
            step *= 2.0;
            ge = g(e);
        }
        if (ge > 0) throw Error(ErrorCode::NonConvergence, "momentum multiplier bracket not found");
        if (ge == 0.0) {
            eta = e;
            return P.prox(make_c(e), q);
        }
        b.neg = e;
        b.fneg = ge;
    } else {
        b.neg = e0;
        b.fneg = g0;
        double e = e0, ge = g0;
        for (int it = 0; it < 200 && ge < 0; ++it) {
            e -= step;
            step *= 2.0;
            ge = g(e);
        }
        if (ge < 0) throw Error(ErrorCode::NonConvergence, "momentum multiplier bracket not found");
        b.pos = e;
        b.fpos = ge;
    }
    const double mscale = std::abs(M0) + P.range() * P.domain().area();
    b = refine_bracket(g, b, 1e-15 * (std::abs(b.pos) + std::abs(b.neg)), 1e-14 * mscale);
    eta = best_point(b);
    return P.prox(make_c(eta), q);
}

/// Minimizer of ∫f over the polytope (with momentum if fixed).
inline std::vector<double> reference_state(const MinimalFlowProblem& P, double& eta) {
    const std::vector<double> zero(P.size(), 0.0);
    eta = 0.0;
    return momentum_prox(P, [&](double e) { return linear_coeffs(P, zero, 0.0, e); }, 0.0, eta).x;
}

/// Move along ω_ref + t(z − ω_ref), t ∈ [0, 1], onto the energy shell E = E₀.
/// Requires E(ω_ref) and E(z) on opposite sides of E₀.
inline std::vector<double> blend_to_shell(const MinimalFlowProblem& P, const std::vector<double>& ref,
                                          const std::vector<double>& z) {
    const double E0 = P.energy0();
    const auto psi_r = P.psi(ref);
    const double Er = P.energy(ref, psi_r);
    std::vector<double> d(z.size());
    for (size_t k = 0; k < z.size(); ++k) d[k] = z[k] - ref[k];
    const auto psi_d = P.psi(d);
    const double C = P.energy(d, psi_d);
    const double B = P.pairing(psi_r, d);
    const double Ez = Er + B + C;
    if ((Ez - E0) * (Er - E0) > 0) return z;
    // C t² + B t + (Er − E0) = 0
    double t = 1.0;
    const double disc = B * B + 4.0 * C * (E0 - Er);
    if (C > 0 && disc >= 0) {
        const double r = std::sqrt(disc);
        const double t1 = (-B + r) / (2.0 * C), t2 = (-B - r) / (2.0 * C);
        t = (t1 >= 0 && t1 <= 1.0 + 1e-12) ? t1 : t2;
    } else if (B != 0) {
        t = (E0 - Er) / B;
    }
    t = std::clamp(t, 0.0, 1.0);
    if (t == 1.0) return z;
    std::vector<double> out(z.size());
    for (size_t k = 0; k < z.size(); ++k) out[k] = ref[k] + t * d[k];
    return out;
}

struct LinearizedStep {
    std::vector<double> x;
    double nu = 0.0;
    double eta = 0.0;
    double gamma = 0.0;
    bool saturated = false;
};

/// Minimize ∫f over the polytope subject to the linearized energy ℓ ≥ E₀ at z.
inline LinearizedStep linearized_step(const MinimalFlowProblem& P, const std::vector<double>& z,
                                      const std::vector<double>& psi, double Ez, double eta_warm = 0.0) {
    const double E0 = P.energy0();
    const double a = P.cell_area();
    auto ell = [&](const std::vector<double>& x) {
        Accumulator acc;
        for (size_t k = 0; k < x.size(); ++k) acc.add(psi[k] * (x[k] - z[k]));
        return Ez - a * acc.value();
    };
    LinearizedStep out;
    out.x = z;
    std::vector<double> mpsi(psi.size());
    for (size_t k = 0; k < psi.size(); ++k) mpsi[k] = -psi[k];
    if (!P.fix_momentum()) {
        const auto v = P.vertex(mpsi);
        if (ell(v) <= E0 * (1.0 + 1e-12)) {
            out.saturated = true;
            return out;
        }
    }
    double eta = eta_warm;
    auto solve = [&](double nu) {
        return momentum_prox(P, [&](double e) { return linear_coeffs(P, mpsi, nu, e); }, 0.0, eta);
    };
    auto h = [&](double nu) { return ell(solve(nu).x) - E0; };
    double psi_sup = 0.0;
    for (double p : psi) psi_sup = std::max(psi_sup, std::abs(p));
    if (psi_sup == 0.0) {
        out.saturated = true;
        return out;
    }
    Bracket b{0.0, h(0.0), 0.0, 0.0};
    if (b.fneg >= 0) {
        auto r = solve(0.0);
        out.x = r.x;
        out.eta = eta;
        out.gamma = r.dominant_lambda();
        return out;
    }
    double nu = std::max(P.range(), 1e-300) / psi_sup;
    double hv = h(nu);
    int grow = 0;
    while (hv < 0 && grow < 400) {
        b.neg = nu;
        b.fneg = hv;
        nu *= 4.0;
        hv = h(nu);
        ++grow;
    }
    if (hv < 0) {
        out.saturated = true;
        return out;
    }
    b.pos = nu;
    b.fpos = hv;
    b = refine_bracket(h, b, 1e-15 * b.pos, 1e-14 * E0);
    const double root = best_point(b);
    auto r = solve(root);
    out.x = std::move(r.x);
    out.nu = root;
    out.eta = eta;
    out.gamma = r.dominant_lambda();
    return out;
}

struct RunResult {
    std::vector<double> z;
    double f_value = 0.0;
    int iterations = 0;
    bool vertex = false;
};

/// z ⪯ w by sorted prefix sums.
inline bool in_polytope(const MinimalFlowProblem& P, const std::vector<double>& z) {
    const auto zd = sorted_descending(z);
    const auto& w = P.w_desc();
    const double tol = 1e-12 * P.range() * static_cast<double>(z.size());
    Accumulator az, aw;
    for (size_t k = 0; k < z.size(); ++k) {
        az.add(zd[k]);
        aw.add(w[k]);
        if (az.value() > aw.value() + tol) return false;
    }
    return std::abs(az.value() - aw.value()) <= tol;
}

/// Sequential linearization of the concave energy constraint from a start with
/// E ≥ E₀, with Anderson mixing of the step map kept inside the polytope.
inline RunResult run_linearized(const MinimalFlowProblem& P, std::vector<double> z, const MinimizeOptions& opts) {
    constexpr size_t kDepth = 6;
    RunResult out;
    auto psi = P.psi(z);
    double E = P.energy(z, psi);
    double eta = 0.0;
    const double tol = opts.step_tol * P.range();
    std::vector<double> plain = z;
    double f_plain = P.objective(z);
    bool mixed = false;
    std::deque<std::vector<double>> dX, dF;
    std::vector<double> x_prev, f_prev;
    for (int it = 0; it < opts.max_outer; ++it) {
        auto step = linearized_step(P, z, psi, E, eta);
        out.iterations = it + 1;
        if (step.saturated) {
            out.vertex = it == 0;
            break;
        }
        const double f_step = P.objective(step.x);
        if (mixed && f_step > f_plain + 1e-15 * std::abs(f_plain)) {
            // the mixed point did not descend: fall back to the last plain iterate
            z = plain;
            psi = P.psi(z);
            E = P.energy(z, psi);
            dX.clear();
            dF.clear();
            x_prev.clear();
            mixed = false;
            continue;
        }
        eta = step.eta;
        const size_t n = z.size();
        std::vector<double> f(n);
        for (size_t k = 0; k < n; ++k) f[k] = step.x[k] - z[k];
        const double diff = sup_diff(step.x, z);
        plain = std::move(step.x);
        f_plain = f_step;
        if (diff <= tol) break;
        if (!x_prev.empty()) {
            std::vector<double> dx(n), df(n);
            for (size_t k = 0; k < n; ++k) {
                dx[k] = z[k] - x_prev[k];
                df[k] = f[k] - f_prev[k];
            }
            dX.push_back(std::move(dx));
            dF.push_back(std::move(df));
            if (dX.size() > kDepth) {
                dX.pop_front();
                dF.pop_front();
            }
        }
        x_prev = z;
        f_prev = f;
        std::vector<double> cand = plain;
        mixed = false;
        if (!dF.empty()) {
            const auto cols = static_cast<Eigen::Index>(dF.size());
            Eigen::MatrixXd F(static_cast<Eigen::Index>(n), cols);
            for (Eigen::Index c = 0; c < cols; ++c)
                for (size_t k = 0; k < n; ++k) F(static_cast<Eigen::Index>(k), c) = dF[static_cast<size_t>(c)][k];
            Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(n));
            Eigen::VectorXd g = F.colPivHouseholderQr().solve(rhs);
            for (Eigen::Index c = 0; c < cols; ++c) {
                const auto& dx = dX[static_cast<size_t>(c)];
                const auto& df = dF[static_cast<size_t>(c)];
                for (size_t k = 0; k < n; ++k) cand[k] -= g(c) * (dx[k] + df[k]);
            }
            mixed = g.allFinite() && in_polytope(P, cand);
            if (!mixed) {
                cand = plain;
                dX.clear();
                dF.clear();
            }
        }
        z = std::move(cand);
        psi = P.psi(z);
        E = P.energy(z, psi);
    }
    out.z = std::move(plain);
    out.f_value = P.objective(out.z);
    return out;
}

/// Vertex energy ascent: repeatedly jump to the vertex maximizing the linearized energy.
inline std::vector<double> vertex_ascent(const MinimalFlowProblem& P, std::vector<double> z, int max_iter = 500) {
    auto psi = P.psi(z);
    double E = P.energy(z, psi);
    for (int it = 0; it < max_iter; ++it) {
        std::vector<double> g(psi.size());
        for (size_t k = 0; k < psi.size(); ++k) g[k] = -psi[k];
        auto v = P.vertex(g);
        auto pv = P.psi(v);
        const double Ev = P.energy(v, pv);
        if (Ev <= E * (1.0 + 1e-14)) break;
        z = std::move(v);
        psi = std::move(pv);
        E = Ev;
    }
    return z;
}

/// Φ(z) = Σf(zᵢ) − (β/2)Σψᵢzᵢ − ηΣmᵢzᵢ, the convex-regime objective per unit cell area.
inline double convex_objective(const MinimalFlowProblem& P, const std::vector<double>& z,
                               const std::vector<double>& psi, double beta, double eta) {
    const auto& m = P.momentum_weights();
    Accumulator acc;
    for (size_t k = 0; k < z.size(); ++k) acc.add(P.casimir().convex(z[k]) - 0.5 * beta * psi[k] * z[k] - eta * m[k] * z[k]);
    return acc.value();
}

/// Largest eigenvalue of ω ↦ −ψ(ω) by power iteration, with a safety margin.
inline double green_operator_norm(const MinimalFlowProblem& P) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    std::vector<double> v(P.size());
    for (double& x : v) x = U(rng);
    double lam = 0.0;
    for (int it = 0; it < 60; ++it) {
        auto psi = P.psi(v);
        double nrm = 0.0;
        for (double p : psi) nrm += p * p;
        nrm = std::sqrt(nrm);
        if (nrm == 0.0) return 0.0;
        double nv = 0.0;
        for (double x : v) nv += x * x;
        lam = nrm / std::sqrt(nv);
        for (size_t k = 0; k < v.size(); ++k) v[k] = -psi[k] / nrm;
    }
    return 1.1 * lam;
}

} // namespace detail

struct FrankWolfeTrace {
    std::vector<double> objective;
    std::vector<double> gap;
};

/// Frank–Wolfe with exact line search on Φ(z) = Σf(z) + (β/a)E(z) − ηΣmz (β ≥ 0).
inline std::vector<double> frank_wolfe(const MinimalFlowProblem& P, double beta, double eta, std::vector<double> z,
                                       int max_iter, double gap_tol, FrankWolfeTrace* trace = nullptr) {
    if (beta < 0) throw Error(ErrorCode::Precondition, "Frank-Wolfe line search needs beta >= 0");
    const auto& f = P.casimir();
    const auto& m = P.momentum_weights();
    auto psi = P.psi(z);
    for (int it = 0; it < max_iter; ++it) {
        const double obj = detail::convex_objective(P, z, psi, beta, eta);
        std::vector<double> g(z.size()), mg(z.size());
        for (size_t k = 0; k < z.size(); ++k) {
            g[k] = f.derivative(z[k]) - beta * psi[k] - eta * m[k];
            mg[k] = -g[k];
        }
        auto s = P.vertex(mg);
        Accumulator gap_acc;
        for (size_t k = 0; k < z.size(); ++k) gap_acc.add(g[k] * (z[k] - s[k]));
        const double gap = gap_acc.value();
        if (trace) {
            trace->objective.push_back(obj);
            trace->gap.push_back(gap);
        }
        if (gap <= gap_tol * std::max(std::abs(obj), 1e-300)) break;
        std::vector<double> d(z.size());
        for (size_t k = 0; k < z.size(); ++k) d[k] = s[k] - z[k];
        const auto psi_d = P.psi(d);
        auto dphi = [&](double t) {
            Accumulator acc;
            for (size_t k = 0; k < z.size(); ++k)
                acc.add((f.derivative(z[k] + t * d[k]) - beta * (psi[k] + t * psi_d[k]) - eta * m[k]) * d[k]);
            return acc.value();
        };
        double t = 1.0;
        if (dphi(1.0) > 0) {
            double lo = 0.0, hi = 1.0;
            for (int b = 0; b < 60; ++b) {
                const double mid = 0.5 * (lo + hi);
                (dphi(mid) > 0 ? hi : lo) = mid;
            }
            t = lo;
        }
        if (t == 0.0) break;
        for (size_t k = 0; k < z.size(); ++k) {
            z[k] += t * d[k];
            psi[k] += t * psi_d[k];
        }
    }
    return z;
}

namespace detail {

/// Proximal gradient on Φ. The quadratic integrand uses the Euclidean prox with
/// restarted acceleration; other integrands take Bregman steps with kernel f,
/// argmin (1+L)f(x) − x·(βψₖ + ηm + L f′(xₖ)), with L doubled on any increase of Φ.
inline std::vector<double> prox_gradient(const MinimalFlowProblem& P, double beta, double eta, std::vector<double> x,
                                         double L, int max_iter, double tol) {
    const auto& m = P.momentum_weights();
    if (beta == 0.0) {
        const std::vector<double> zero(P.size(), 0.0);
        return P.prox(linear_coeffs(P, zero, 0.0, eta)).x;
    }
    const auto& f = P.casimir();
    if (f.kind == ConvexFunctionSpec::Kind::Quadratic) {
        std::vector<double> y = x;
        double t = 1.0;
        for (int it = 0; it < max_iter; ++it) {
            const auto psi_y = P.psi(y);
            std::vector<double> c(x.size());
            for (size_t k = 0; k < c.size(); ++k) c[k] = beta * psi_y[k] + eta * m[k] + L * y[k];
            auto xn = P.prox(c, L).x;
            double restart = 0.0;
            for (size_t k = 0; k < x.size(); ++k) restart += (y[k] - xn[k]) * (xn[k] - x[k]);
            const double diff = sup_diff(xn, x);
            const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
            if (restart > 0) {
                y = xn;
                t = 1.0;
            } else {
                for (size_t k = 0; k < x.size(); ++k) y[k] = xn[k] + ((t - 1.0) / tn) * (xn[k] - x[k]);
                t = tn;
            }
            x = std::move(xn);
            if (diff <= tol) break;
        }
        return x;
    }
    // relative smoothness constant: β‖A‖ / min f″ over the datum range
    const auto& w = P.w_desc();
    double curv = std::numeric_limits<double>::infinity();
    for (int q = 0; q <= 64; ++q) {
        const double xq = w.back() + (w.front() - w.back()) * q / 64.0;
        const double h = 1e-4 * (w.front() - w.back()) + 1e-8;
        const double lo = std::max(xq - h, w.back()), hi = std::min(xq + h, w.front());
        if (hi > lo && f.in_domain(lo)) {
            const double d2 = (f.derivative(hi) - f.derivative(lo)) / (hi - lo);
            if (std::isfinite(d2) && d2 > 0) curv = std::min(curv, d2);
        }
    }
    if (!std::isfinite(curv)) curv = 1.0;
    double Lr = L / curv;
    auto psi = P.psi(x);
    double phi = convex_objective(P, x, psi, beta, eta);
    for (int it = 0; it < max_iter; ++it) {
        std::vector<double> c(x.size());
        for (size_t k = 0; k < c.size(); ++k) {
            double fp = f.derivative(x[k]);
            if (!std::isfinite(fp)) fp = fp < 0 ? -700.0 : 700.0;
            c[k] = beta * psi[k] + eta * m[k] + Lr * fp;
        }
        auto xn = P.prox(c, 0.0, 1.0 + Lr).x;
        auto psi_n = P.psi(xn);
        const double phin = convex_objective(P, xn, psi_n, beta, eta);
        if (phin > phi + 1e-14 * std::abs(phi) && Lr < 1e12) {
            Lr *= 2.0;
            continue;
        }
        const double diff = sup_diff(xn, x);
        x = std::move(xn);
        psi = std::move(psi_n);
        phi = phin;
        if (diff <= tol) break;
    }
    return x;
}

struct ConvexInner {
    std::vector<double> z;
    double eta = 0.0;
};

inline ConvexInner convex_inner(const MinimalFlowProblem& P, double beta, const std::vector<double>& warm,
                                double eta_warm, double L_op, const MinimizeOptions& opts) {
    const double tol = opts.step_tol * P.range();
    auto solve_eta = [&](double eta) {
        auto z = frank_wolfe(P, beta, eta, warm, opts.fw_warm_iter, opts.fw_gap_tol);
        return prox_gradient(P, beta, eta, std::move(z), beta * L_op, opts.prox_max_iter, tol);
    };
    ConvexInner out;
    if (!P.fix_momentum()) {
        out.z = solve_eta(0.0);
        return out;
    }
    const double M0 = P.momentum0();
    auto g = [&](double e) { return P.momentum(solve_eta(e)) - M0; };
    double e = eta_warm, ge = g(e);
    Bracket b{};
    double step = 1.0 + std::abs(e);
    if (ge >= 0) {
        b.pos = e;
        b.fpos = ge;
        double x = e, gx = ge;
        for (int it = 0; it < 200 && gx >= 0 && gx != 0.0; ++it) {
            x += step;
            step *= 2.0;
            gx = g(x);
        }
        b.neg = x;
        b.fneg = gx >= 0 ? -0.0 : gx;
        if (gx >= 0) {
            out.eta = x;
            out.z = solve_eta(x);
            return out;
        }
    } else {
        b.neg = e;
        b.fneg = ge;
        double x = e, gx = ge;
        for (int it = 0; it < 200 && gx < 0; ++it) {
            x -= step;
            step *= 2.0;
            gx = g(x);
        }
        if (gx < 0) throw Error(ErrorCode::NonConvergence, "momentum multiplier bracket not found");
        b.pos = x;
        b.fpos = gx;
    }
    const double mscale = std::abs(M0) + P.range() * P.domain().area();
    b = refine_bracket(g, b, 1e-15 * (std::abs(b.pos) + std::abs(b.neg)), 1e-13 * mscale);
    out.eta = best_point(b);
    out.z = solve_eta(out.eta);
    return out;
}

} // namespace detail

/// Isotonic fit of ω against ψ.
struct MonotoneFitReport {
    enum class Direction { Increasing, Decreasing };
    Direction direction = Direction::Increasing;
    /// (∫(ω − F(ψ))²)^{1/2} for the best monotone F.
    double isotonic_residual = 0.0;
    std::vector<double> plateau_levels;
    std::vector<double> plateau_areas;
};

inline const char* direction_name(MonotoneFitReport::Direction d) {
    return d == MonotoneFitReport::Direction::Increasing ? "increasing" : "decreasing";
}

/// Levels are clustered when consecutive sorted values differ by at most
/// merge_rel·range; clusters covering at least min_fraction of the area are plateaus.
inline MonotoneFitReport monotone_fit(const VorticityField& omega, const VorticityField& psi,
                                      double min_fraction = 0.01, double merge_rel = 1e-6) {
    require_same_domain(omega.domain(), psi.domain());
    const size_t n = omega.size();
    const double pmin = psi.min(), pmax = psi.max();
    if (!(pmax - pmin > 1e-14 * std::max(1.0, std::max(std::abs(pmin), std::abs(pmax)))))
        throw Error(ErrorCode::Degenerate, "streamfunction is constant; no monotone relation to fit");
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return psi[a] < psi[b]; });
    // cells with identical ψ are pooled so that the fit is a function of ψ
    std::vector<double> y, w;
    std::vector<size_t> group_start;
    for (size_t k = 0; k < n;) {
        size_t e = k;
        Accumulator acc;
        while (e < n && psi[idx[e]] == psi[idx[k]]) acc.add(omega[idx[e++]]);
        group_start.push_back(k);
        y.push_back(acc.value() / static_cast<double>(e - k));
        w.push_back(static_cast<double>(e - k));
        k = e;
    }
    group_start.push_back(n);
    auto residual_of = [&](const std::vector<double>& fit) {
        Accumulator acc;
        for (size_t gi = 0; gi + 1 < group_start.size(); ++gi)
            for (size_t k = group_start[gi]; k < group_start[gi + 1]; ++k) {
                const double r = omega[idx[k]] - fit[gi];
                acc.add(r * r);
            }
        return std::sqrt(acc.value() * omega.domain().cell_area());
    };
    const double r_inc = residual_of(isotonic_increasing(y, w));
    std::vector<double> yneg(y);
    for (double& v : yneg) v = -v;
    auto fit_dec = isotonic_increasing(yneg, w);
    for (double& v : fit_dec) v = -v;
    const double r_dec = residual_of(fit_dec);
    MonotoneFitReport rep;
    rep.direction = r_inc <= r_dec ? MonotoneFitReport::Direction::Increasing : MonotoneFitReport::Direction::Decreasing;
    rep.isotonic_residual = std::min(r_inc, r_dec);

    const auto sorted = sorted_descending(omega.values());
    const double range = sorted.front() - sorted.back();
    const double a = omega.domain().cell_area();
    for (size_t k = 0; k < n;) {
        size_t e = k + 1;
        while (e < n && sorted[e - 1] - sorted[e] <= merge_rel * range) ++e;
        const double area = static_cast<double>(e - k) * a;
        if (e - k >= 2 && area >= min_fraction * omega.domain().area()) {
            Accumulator acc;
            for (size_t q = k; q < e; ++q) acc.add(sorted[q]);
            rep.plateau_levels.push_back(acc.value() / static_cast<double>(e - k));
            rep.plateau_areas.push_back(area);
        }
        k = e;
    }
    return rep;
}

struct KktReport {
    /// Distinct datum levels in increasing order.
    std::vector<double> levels;
    /// λ per level; the extreme levels act as the box and report 0.
    std::vector<double> lambda;
    std::vector<double> slack;
    double mu0 = 0.0;
    double mu1 = 0.0;
    size_t equations = 0;
    double fit_residual = 0.0;
    double max_negative_lambda = 0.0;
    double max_complementarity = 0.0;
    double max_bracket_violation = 0.0;
    bool rank_deficient = false;
};

namespace detail {

/// Lawson–Hanson nonnegative least squares.
inline Eigen::VectorXd nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, int max_iter = 500) {
    const Eigen::Index n = A.cols();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    if (n == 0) return x;
    std::vector<bool> passive(static_cast<size_t>(n), false);
    const double tol = 1e-12 * std::max(1.0, A.norm() * b.norm());
    for (int it = 0; it < max_iter; ++it) {
        Eigen::VectorXd w = A.transpose() * (b - A * x);
        Eigen::Index jmax = -1;
        double wmax = tol;
        for (Eigen::Index j = 0; j < n; ++j)
            if (!passive[static_cast<size_t>(j)] && w(j) > wmax) {
                wmax = w(j);
                jmax = j;
            }
        if (jmax < 0) break;
        passive[static_cast<size_t>(jmax)] = true;
        for (int inner = 0; inner < 2 * n + 2; ++inner) {
            std::vector<Eigen::Index> P;
            for (Eigen::Index j = 0; j < n; ++j)
                if (passive[static_cast<size_t>(j)]) P.push_back(j);
            Eigen::MatrixXd AP(A.rows(), static_cast<Eigen::Index>(P.size()));
            for (size_t q = 0; q < P.size(); ++q) AP.col(static_cast<Eigen::Index>(q)) = A.col(P[q]);
            Eigen::VectorXd zP = AP.colPivHouseholderQr().solve(b);
            bool ok = true;
            for (Eigen::Index q = 0; q < zP.size(); ++q) ok = ok && zP(q) > 0;
            if (ok) {
                x.setZero();
                for (size_t q = 0; q < P.size(); ++q) x(P[q]) = zP(static_cast<Eigen::Index>(q));
                break;
            }
            double alpha = 1.0;
            for (size_t q = 0; q < P.size(); ++q) {
                const double zq = zP(static_cast<Eigen::Index>(q));
                if (zq <= 0) alpha = std::min(alpha, x(P[q]) / (x(P[q]) - zq));
            }
            for (size_t q = 0; q < P.size(); ++q)
                x(P[q]) += alpha * (zP(static_cast<Eigen::Index>(q)) - x(P[q]));
            for (size_t q = 0; q < P.size(); ++q)
                if (x(P[q]) <= 1e-15) {
                    x(P[q]) = 0.0;
                    passive[static_cast<size_t>(P[q])] = false;
                }
        }
    }
    return x;
}

inline std::vector<double> distinct_levels(const VorticityField& f) {
    std::vector<double> v(f.values());
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

} // namespace detail

/// Reconstructs (μ₀, μ₁, λᵢ) from f′(ω*) + μ₀ψ* + μ₁ + Σλᵢχ{ω* > aᵢ} = 0 on off-level
/// cells, then checks signs, complementary slackness and the level-set brackets.
inline KktReport kkt_report(const MinimalFlowResult& r, const VorticityField& omega0, double level_tol = -1.0) {
    const auto levels = detail::distinct_levels(omega0);
    if (levels.size() > 64)
        throw Error(ErrorCode::LevelCap, "kkt_report needs at most 64 datum levels, got " + std::to_string(levels.size()));
    const VorticityField& w = r.omega_star;
    const auto& psi = r.psi_star.psi;
    const auto& f = r.casimir;
    const size_t N = levels.size();
    const double a = w.domain().cell_area();
    if (level_tol < 0) level_tol = 1e-9 * std::max(1.0, omega0.sup_norm());
    KktReport rep;
    rep.levels = levels;
    rep.lambda.assign(N, 0.0);
    rep.slack.assign(N, 0.0);
    {
        const auto d0 = sorted_descending(omega0.values());
        const auto d1 = sorted_descending(w.values());
        const auto p0 = detail::prefix_sums(d0), p1 = detail::prefix_sums(d1);
        for (size_t j = 0; j < N; ++j)
            rep.slack[j] = detail::positive_part_integral(d0, p0, levels[j], a) -
                           detail::positive_part_integral(d1, p1, levels[j], a);
    }
    if (N < 2) {
        rep.rank_deficient = true;
        return rep;
    }
    // per cell: at-level index (or −1) and the highest level strictly below
    const size_t n = w.size();
    std::vector<long> at(n, -1), below(n, -1);
    for (size_t k = 0; k < n; ++k) {
        for (size_t j = 0; j < N; ++j) {
            if (std::abs(w[k] - levels[j]) <= level_tol) at[k] = static_cast<long>(j);
            if (w[k] > levels[j] + level_tol) below[k] = static_cast<long>(j);
        }
    }
    const size_t nl = N > 2 ? N - 2 : 0;
    // column q ↔ level index q + 1; active for cells strictly above that level
    auto lam_count = [&](long j_below) { return j_below < 1 ? size_t{0} : std::min<size_t>(static_cast<size_t>(j_below), nl); };
    std::vector<size_t> rows;
    for (size_t k = 0; k < n; ++k)
        if (at[k] < 0) rows.push_back(k);
    rep.equations = rows.size();
    if (rows.empty()) {
        rep.rank_deficient = true;
        return rep;
    }
    const auto m = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd Af(m, 2), An(m, static_cast<Eigen::Index>(nl));
    Eigen::VectorXd b(m);
    An.setZero();
    for (Eigen::Index q = 0; q < m; ++q) {
        const size_t k = rows[static_cast<size_t>(q)];
        Af(q, 0) = psi[k];
        Af(q, 1) = 1.0;
        for (size_t c = 0; c < lam_count(below[k]); ++c) An(q, static_cast<Eigen::Index>(c)) = 1.0;
        b(q) = -f.derivative(w[k]);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Af);
    qr.setThreshold(1e-12);
    if (qr.rank() < 2) rep.rank_deficient = true;
    Eigen::VectorXd lam = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nl));
    if (nl > 0) {
        // eliminate the free pair (μ₀, μ₁) by projecting onto the complement of span(Af)
        Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(m, qr.rank());
        Eigen::MatrixXd Bn = An - Q * (Q.transpose() * An);
        Eigen::VectorXd rb = b - Q * (Q.transpose() * b);
        lam = detail::nnls(Bn, rb);
        std::vector<Eigen::Index> act;
        for (Eigen::Index j = 0; j < lam.size(); ++j)
            if (lam(j) > 0) act.push_back(j);
        if (!act.empty()) {
            Eigen::MatrixXd BA(m, static_cast<Eigen::Index>(act.size()));
            for (size_t q = 0; q < act.size(); ++q) BA.col(static_cast<Eigen::Index>(q)) = Bn.col(act[q]);
            Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qa(BA);
            qa.setThreshold(1e-12);
            if (qa.rank() < static_cast<Eigen::Index>(act.size())) rep.rank_deficient = true;
        }
    }
    Eigen::VectorXd mu = qr.solve(b - An * lam);
    rep.mu0 = mu(0);
    rep.mu1 = mu(1);
    for (size_t c = 0; c < nl; ++c) rep.lambda[c + 1] = lam(static_cast<Eigen::Index>(c));
    Eigen::VectorXd res = Af * mu + An * lam - b;
    rep.fit_residual = b.norm() > 0 ? res.norm() / b.norm() : res.norm();

    for (size_t j = 0; j < N; ++j) {
        rep.max_negative_lambda = std::max(rep.max_negative_lambda, -rep.lambda[j]);
        rep.max_complementarity = std::max(rep.max_complementarity, std::abs(rep.lambda[j] * rep.slack[j]));
    }
    std::vector<double> cum(N + 1, 0.0);
    for (size_t j = 1; j <= N; ++j) cum[j] = cum[j - 1] + rep.lambda[j - 1];
    for (size_t k = 0; k < n; ++k) {
        if (at[k] < 0) continue;
        const size_t j = static_cast<size_t>(at[k]);
        const double base = f.derivative(w[k]) + rep.mu0 * psi[k] + rep.mu1;
        double viol;
        if (j == 0) {
            viol = std::max(0.0, -base);
        } else if (j + 1 == N) {
            viol = std::max(0.0, base + (cum[N - 1] - cum[1]));
        } else {
            const double rr = base + (cum[j] - cum[1]);
            viol = std::max({0.0, rr, -rep.lambda[j] - rr});
        }
        rep.max_bracket_violation = std::max(rep.max_bracket_violation, viol);
    }
    return rep;
}

namespace detail {

inline void finalize_result(const MinimalFlowProblem& P, MinimalFlowResult& res, std::vector<double> z,
                            const std::vector<double>& ref) {
    const Domain& d = P.domain();
    res.omega_star = VorticityField(d, std::move(z), P.omega0().bound());
    res.omega_ref = VorticityField(d, ref, P.omega0().bound());
    res.psi_star.domain = d;
    res.psi_star.psi = P.psi(res.omega_star.values());
    PoissonSolver solver(d);
    solver.velocity(res.psi_star.psi, 0.0, 0.0, res.psi_star.u1, res.psi_star.u2);
    if (d.kind == DomainKind::Channel)
        res.psi_star.boundary_values = {0.0, 0.0};
    else if (d.kind == DomainKind::DiskRadial)
        res.psi_star.boundary_values = {0.0};
    res.f_value = P.objective(res.omega_star.values());
    const double E = P.energy(res.omega_star.values(), res.psi_star.psi);
    res.residuals.energy_gap = E - P.energy0();
    res.residuals.mean_gap = (stable_sum(res.omega_star.values().begin(), res.omega_star.values().end()) -
                              stable_sum(P.omega0().values().begin(), P.omega0().values().end())) *
                             d.cell_area();
    res.residuals.momentum_gap = P.fix_momentum() ? P.momentum(res.omega_star.values()) - P.momentum0() : 0.0;
    double nrm = 0.0;
    for (double x : res.omega_star.values()) nrm += x * x;
    nrm = std::sqrt(nrm * d.cell_area());
    const double pmin = *std::min_element(res.psi_star.psi.begin(), res.psi_star.psi.end());
    const double pmax = *std::max_element(res.psi_star.psi.begin(), res.psi_star.psi.end());
    if (pmax > pmin) {
        auto mf = monotone_fit(res.omega_star, res.psi_star.psi_field());
        res.residuals.isotonic = nrm > 0 ? mf.isotonic_residual / nrm : mf.isotonic_residual;
    }
    if (detail::distinct_levels(P.omega0()).size() <= 64) {
        auto k = kkt_report(res, P.omega0());
        res.lambda_levels = k.levels;
        res.lambda = k.lambda;
    }
}

} // namespace detail

/// min ∫f(ω) over the orbit closure of ω₀ at E(ω) = E(ω₀), optionally at fixed
/// momentum (angular momentum on the disk). The Boltzmann kind is minimized
/// through its convex part ∫ω log ω.
inline MinimalFlowResult minimize_casimir(const VorticityField& omega0, const ConvexFunctionSpec& f, bool fix_momentum,
                                          const MinimizeOptions& opts = {}) {
    MinimalFlowProblem P(omega0, f, fix_momentum);
    MinimalFlowResult res;
    res.casimir = f;
    res.fix_momentum = fix_momentum;
    res.seed = opts.seed;
    res.energy0 = P.energy0();
    res.f_value0 = P.objective(omega0.values());

    if (P.range() <= 1e-14 * std::max(1.0, omega0.sup_norm())) {
        res.regime = "constant";
        detail::finalize_result(P, res, omega0.values(), omega0.values());
        return res;
    }
    double eta_ref = 0.0;
    const auto ref = detail::reference_state(P, eta_ref);
    const double Eref = P.energy(ref, P.psi(ref));
    res.energy_ref = Eref;
    const double E0 = P.energy0();

    if (std::abs(E0 - Eref) <= 1e-12 * std::max(std::abs(E0), std::abs(Eref))) {
        res.regime = "reference";
        res.eta = eta_ref;
        auto pr = P.prox(detail::linear_coeffs(P, std::vector<double>(P.size(), 0.0), 0.0, eta_ref));
        res.gamma = pr.dominant_lambda();
        detail::finalize_result(P, res, ref, ref);
        return res;
    }

    if (E0 > Eref) {
        // β ≤ 0: sequential linearization of the energy constraint, multi-started
        std::vector<std::vector<double>> starts{omega0.values()};
        std::mt19937_64 rng(opts.seed);
        for (int s = 1; s < opts.multi_starts; ++s) {
            std::vector<double> v(omega0.values());
            std::shuffle(v.begin(), v.end(), rng);
            starts.push_back(std::move(v));
        }
        auto run_one = [&](size_t s) {
            MinimalFlowProblem Q(omega0, f, fix_momentum);
            std::vector<double> z = starts[s];
            if (s > 0) {
                z = detail::vertex_ascent(Q, std::move(z));
                if (Q.energy(z, Q.psi(z)) < E0 || (fix_momentum && std::abs(Q.momentum(z) - Q.momentum0()) >
                                                                     1e-12 * (1.0 + std::abs(Q.momentum0()))))
                    return detail::RunResult{{}, std::numeric_limits<double>::infinity(), 0, false};
            }
            auto rr = detail::run_linearized(Q, std::move(z), opts);
            rr.z = detail::blend_to_shell(Q, ref, rr.z);
            rr.f_value = Q.objective(rr.z);
            return rr;
        };
        std::vector<detail::RunResult> runs(starts.size());
        if (opts.threads > 1 && starts.size() > 1) {
            std::vector<std::future<detail::RunResult>> fut;
            for (size_t s = 0; s < starts.size(); ++s) fut.push_back(std::async(std::launch::async, run_one, s));
            for (size_t s = 0; s < starts.size(); ++s) runs[s] = fut[s].get();
        } else {
            for (size_t s = 0; s < starts.size(); ++s) runs[s] = run_one(s);
        }
        size_t best = 0;
        for (size_t s = 1; s < runs.size(); ++s)
            if (runs[s].f_value < runs[best].f_value) best = s;
        res.starts = static_cast<int>(starts.size());
        res.best_start = static_cast<int>(best);
        res.iterations = runs[best].iterations;
        auto z = runs[best].z;
        const auto psi = P.psi(z);
        const double E = P.energy(z, psi);
        // multipliers from one more linearized step at the returned state
        auto step = detail::linearized_step(P, z, psi, std::max(E, E0));
        if (step.saturated) {
            res.regime = "linearized-vertex";
            res.beta = std::numeric_limits<double>::quiet_NaN();
            res.gamma = std::numeric_limits<double>::quiet_NaN();
            res.residuals.stationarity = 0.0;
        } else {
            res.regime = "linearized";
            res.beta = -step.nu;
            res.gamma = step.gamma;
            res.eta = step.eta;
            res.residuals.stationarity = detail::l2_rel(step.x, z);
        }
        detail::finalize_result(P, res, std::move(z), ref);
        return res;
    }

    // β ≥ 0: convex inner problems and a monotone root search on β
    res.regime = "convex";
    const double Lop = detail::green_operator_norm(P);
    std::vector<double> warm = ref;
    double eta = eta_ref;
    auto energy_at = [&](double beta) {
        auto in = detail::convex_inner(P, beta, warm, eta, Lop, opts);
        warm = in.z;
        eta = in.eta;
        return P.energy(in.z, P.psi(in.z)) - E0;
    };
    detail::Bracket br{0.0, 0.0, 0.0, Eref - E0};
    double beta = Lop > 0 ? 1.0 / Lop : 1.0;
    double h = energy_at(beta);
    int grow = 0;
    while (h > 0 && grow < 200) {
        br.pos = beta;
        br.fpos = h;
        beta *= 4.0;
        h = energy_at(beta);
        ++grow;
    }
    if (h > 0) throw Error(ErrorCode::InfeasibleEnergy, "energy shell not reached for any beta >= 0");
    br.neg = beta;
    br.fneg = h;
    if (h < 0) br = detail::refine_bracket(energy_at, br, 1e-15 * br.neg, 1e-3 * opts.energy_tol * E0, 200);
    res.beta_lo = br.pos;
    res.energy_lo = br.fpos + E0;
    res.beta_hi = br.neg;
    res.energy_hi = br.fneg + E0;
    const double beta_star = detail::best_point(br);
    auto in = detail::convex_inner(P, beta_star, warm, eta, Lop, opts);
    auto z = detail::blend_to_shell(P, ref, in.z);
    res.beta = beta_star;
    res.eta = in.eta;
    const auto psi = P.psi(z);
    std::vector<double> g(psi);
    double eta_s = in.eta;
    auto pr = detail::momentum_prox(P, [&](double e) { return detail::linear_coeffs(P, g, res.beta, e); }, 0.0, eta_s);
    res.gamma = pr.dominant_lambda();
    res.residuals.stationarity = detail::l2_rel(pr.x, z);
    detail::finalize_result(P, res, std::move(z), ref);
    return res;
}

namespace detail {

/// Maximizer of ⟨g, x⟩ over the polytope at momentum M₀: the relaxed vertices of
/// g + τm bracketing M₀, blended to hit M₀.
inline std::vector<double> momentum_vertex(const MinimalFlowProblem& P, const std::vector<double>& g) {
    const auto& m = P.momentum_weights();
    const double M0 = P.momentum0();
    auto vert = [&](double tau) {
        std::vector<double> c(g.size());
        for (size_t k = 0; k < g.size(); ++k) c[k] = g[k] + tau * m[k];
        return P.vertex(c);
    };
    double gs = 0.0, ms = 0.0;
    for (size_t k = 0; k < g.size(); ++k) {
        gs = std::max(gs, std::abs(g[k]));
        ms = std::max(ms, std::abs(m[k]));
    }
    // larger τ pushes mass to large m, lowering M = −∫mω
    double lo = -gs / std::max(ms, 1e-300), hi = -lo;
    while (P.momentum(vert(lo)) < M0 && lo > -1e300) lo *= 2.0;
    while (P.momentum(vert(hi)) > M0 && hi < 1e300) hi *= 2.0;
    for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        (P.momentum(vert(mid)) >= M0 ? lo : hi) = mid;
    }
    auto v1 = vert(lo), v2 = vert(hi);
    const double M1 = P.momentum(v1), M2 = P.momentum(v2);
    const double lam = M1 == M2 ? 1.0 : std::clamp((M0 - M2) / (M1 - M2), 0.0, 1.0);
    for (size_t k = 0; k < v1.size(); ++k) v1[k] = lam * v1[k] + (1.0 - lam) * v2[k];
    return v1;
}

} // namespace detail

struct MinimalityProbeReport {
    int attempted = 0;
    int accepted = 0;
    int violations = 0;
    /// min over accepted samples of I_f(sample) − I_f(ω*).
    double worst_gap = std::numeric_limits<double>::infinity();
};

/// Random near-identity bistochastic mixings K = (1−θ)I + θΣwₖPₖ of ω*, moved
/// back onto the energy shell inside the polytope, compared by ∫f.
inline MinimalityProbeReport minimality_probe(const MinimalFlowResult& r, const VorticityField& omega0, int samples,
                                              std::uint64_t seed, double tol = -1.0) {
    MinimalFlowProblem P(omega0, r.casimir, r.fix_momentum);
    const auto& ws = r.omega_star.values();
    const double f_star = P.objective(ws);
    if (tol < 0) tol = 1e-9 * std::max(1.0, std::abs(f_star));
    const double E0 = P.energy0();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    MinimalityProbeReport rep;
    const size_t n = ws.size();
    while (rep.accepted < samples && rep.attempted < 20 * samples) {
        ++rep.attempted;
        const double theta = std::pow(10.0, -1.0 - 3.0 * U(rng));
        const int nperm = 1 + static_cast<int>(3.0 * U(rng));
        std::vector<double> wts(static_cast<size_t>(nperm));
        double wsum = 0.0;
        for (double& x : wts) wsum += (x = -std::log(1.0 - U(rng)));
        std::vector<double> x(n);
        for (size_t k = 0; k < n; ++k) x[k] = (1.0 - theta) * ws[k];
        std::vector<size_t> perm(n);
        const int nx = P.domain().nx;
        for (int p = 0; p < nperm; ++p) {
            std::iota(perm.begin(), perm.end(), size_t{0});
            if (r.fix_momentum) {
                // row-wise shuffles keep the momentum
                for (size_t row = 0; row < n; row += static_cast<size_t>(nx))
                    std::shuffle(perm.begin() + static_cast<long>(row), perm.begin() + static_cast<long>(row) + nx, rng);
            } else {
                std::shuffle(perm.begin(), perm.end(), rng);
            }
            for (size_t k = 0; k < n; ++k) x[k] += theta * wts[static_cast<size_t>(p)] / wsum * ws[perm[k]];
        }
        auto psi_x = P.psi(x);
        const double Ex = P.energy(x, psi_x);
        std::vector<double> target;
        if (r.fix_momentum) {
            if ((Ex - E0) * (r.energy_ref - E0) < 0) {
                target = r.omega_ref.values();
            } else {
                std::vector<double> g(n);
                for (size_t k = 0; k < n; ++k) g[k] = Ex < E0 ? -psi_x[k] : psi_x[k];
                target = detail::momentum_vertex(P, g);
            }
        } else if (Ex < E0) {
            std::vector<double> g(n);
            for (size_t k = 0; k < n; ++k) g[k] = -psi_x[k];
            target = P.vertex(g);
        } else if (r.energy_ref < E0) {
            target = r.omega_ref.values();
        } else {
            target = P.vertex(psi_x);
        }
        std::vector<double> d(n);
        for (size_t k = 0; k < n; ++k) d[k] = target[k] - x[k];
        const auto psi_d = P.psi(d);
        const double C = P.energy(d, psi_d), B = P.pairing(psi_x, d), A0 = Ex - E0;
        double s = -1.0;
        if (A0 == 0.0) {
            s = 0.0;
        } else if (C > 0) {
            const double disc = B * B - 4.0 * C * A0;
            if (disc >= 0) {
                const double rt = std::sqrt(disc);
                for (double cand : {(-B - rt) / (2.0 * C), (-B + rt) / (2.0 * C)})
                    if (cand >= 0 && cand <= 1.0 && (s < 0 || cand < s)) s = cand;
            }
        } else if (B != 0) {
            const double cand = -A0 / B;
            if (cand >= 0 && cand <= 1.0) s = cand;
        }
        if (s < 0 || s > 1.0 - 1e-9) continue;
        for (size_t k = 0; k < n; ++k) x[k] += s * d[k];
        const double E = P.energy(x, P.psi(x));
        if (std::abs(E - E0) > 1e-8 * E0) continue;
        if (r.fix_momentum && std::abs(P.momentum(x) - P.momentum0()) > 1e-8 * (1.0 + std::abs(P.momentum0())))
            continue;
        ++rep.accepted;
        const double gap = P.objective(x) - f_star;
        rep.worst_gap = std::min(rep.worst_gap, gap);
        if (gap < -tol) ++rep.violations;
    }
    return rep;
}

} // namespace mflab
