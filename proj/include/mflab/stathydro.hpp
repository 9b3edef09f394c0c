#pragma once

#include "mflab/anderson.hpp"
#include "mflab/greens.hpp"
#include "mflab/parallel.hpp"

#include <complex>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>

namespace mflab {

enum class MeanFieldModel { SelectiveDecay, Liouville, SinhPoisson, MRS };

inline const char* model_name(MeanFieldModel m) {
    switch (m) {
    case MeanFieldModel::SelectiveDecay: return "selective-decay";
    case MeanFieldModel::Liouville: return "liouville";
    case MeanFieldModel::SinhPoisson: return "sinh-poisson";
    case MeanFieldModel::MRS: return "mrs";
    }
    return "?";
}

/// Stationary mean-field state ω̄ = Δψ̄ = F(ψ̄).
struct MeanFieldSolution {
    MeanFieldModel model = MeanFieldModel::SelectiveDecay;
    VorticityField psi_bar;
    VorticityField omega_bar;
    double beta = std::numeric_limits<double>::quiet_NaN();
    /// 𝒵 of the Liouville and sinh-Poisson relations.
    double z_norm = std::numeric_limits<double>::quiet_NaN();
    /// λ₁ for selective decay.
    double eigenvalue = std::numeric_limits<double>::quiet_NaN();
    double energy = 0.0;
    double target_energy = std::numeric_limits<double>::quiet_NaN();
    /// Relative discrete L² residual of the defining elliptic relation.
    double residual = 0.0;
    int iterations = 0;
};

struct MeanFieldOptions {
    /// Iteration stops once the relative residual falls below this.
    double tol = 1e-13;
    /// Solutions with a final residual above this are reported as failures.
    double accept = 1e-8;
    int max_iter = 5000;
    double relaxation = 0.5;
};

namespace detail {

inline double weighted_norm(const std::vector<double>& v) {
    Accumulator a;
    for (double x : v) a.add(x * x);
    return std::sqrt(a.value());
}

inline double weighted_dot(const std::vector<double>& a, const std::vector<double>& b) {
    Accumulator s;
    for (size_t k = 0; k < a.size(); ++k) s.add(a[k] * b[k]);
    return s.value();
}

/// Energy −½∫ψω with the uniform part removed on the torus.
inline double physical_energy(const PoissonSolver& solver, const std::vector<double>& w) {
    const auto psi = physical_psi(solver, w);
    return -0.5 * weighted_dot(psi, w) * solver.domain().cell_area();
}

} // namespace detail

enum class SelectiveDecayNorm {
    /// Energy of the returned state equals E(ω₀).
    Energy,
    /// ‖ψ‖²_{L²} = E(ω₀)/λ₁, which gives energy E(ω₀)/2.
    PsiL2
};

/// First Dirichlet eigenpair −Δψ = λ₁ψ by inverse iteration, scaled to the
/// energy of ω₀ and oriented like ω₀'s own streamfunction.
inline MeanFieldSolution selective_decay(const VorticityField& omega0, SelectiveDecayNorm norm = SelectiveDecayNorm::Energy,
                                         const MeanFieldOptions& o = {}) {
    const Domain& d = omega0.domain();
    if (d.kind == DomainKind::Torus)
        throw Error(ErrorCode::UnsupportedDomain, "the first eigenspace on the torus is not one-dimensional");
    PoissonSolver solver(d);
    const size_t n = d.cells();
    std::vector<double> v(n, 1.0);
    double lambda = 0.0, res = 1.0, best = std::numeric_limits<double>::infinity();
    int it = 0, stall = 0;
    for (; it < o.max_iter; ++it) {
        auto w = solver.solve(v);
        const double nw = detail::weighted_norm(w);
        for (size_t k = 0; k < n; ++k) v[k] = -w[k] / nw;
        const auto lv = solver.laplacian(v);
        lambda = -detail::weighted_dot(v, lv);
        std::vector<double> r(n);
        for (size_t k = 0; k < n; ++k) r[k] = lv[k] + lambda * v[k];
        res = detail::weighted_norm(r) / lambda;
        if (res <= o.tol) break;
        // stop at the rounding floor
        if (res < 0.5 * best) {
            best = res;
            stall = 0;
        } else if (++stall >= 10 && res <= o.accept) {
            break;
        }
    }
    if (!(res <= o.accept))
        throw Error(ErrorCode::NonConvergence, "eigensolver stalled with residual " + detail::fmt17(res));

    const double e0 = energy(omega0);
    const auto psi0 = solver.solve(omega0.values());
    if (detail::weighted_dot(psi0, v) < 0)
        for (double& x : v) x = -x;

    double scale = 0.0;
    if (e0 > 0) {
        if (norm == SelectiveDecayNorm::PsiL2) {
            scale = std::sqrt(e0 / (lambda * d.cell_area()));
        } else {
            std::vector<double> w(n);
            for (size_t k = 0; k < n; ++k) w[k] = -lambda * v[k];
            scale = std::sqrt(e0 / detail::physical_energy(solver, w));
        }
    }
    std::vector<double> psi(n), om(n);
    for (size_t k = 0; k < n; ++k) {
        psi[k] = scale * v[k];
        om[k] = -lambda * psi[k];
    }
    MeanFieldSolution s;
    s.model = MeanFieldModel::SelectiveDecay;
    s.eigenvalue = lambda;
    s.target_energy = e0;
    s.omega_bar = VorticityField::with_auto_bound(d, om);
    s.psi_bar = VorticityField::with_auto_bound(d, psi);
    s.energy = detail::physical_energy(solver, om);
    s.residual = res;
    s.iterations = it + 1;
    return s;
}

/// Smallest admissible β for the Liouville solver: −8π + 0.1.
inline constexpr double kLiouvilleBetaMin = -8.0 * kPi + 0.1;

namespace detail {

/// Liouville map ω(ψ) = Γ e^{βψ}/∫e^{βψ} on the radial grid.
inline std::vector<double> liouville_rhs(const std::vector<double>& psi, double beta, double gamma, double cell,
                                         std::vector<double>* expo = nullptr, double* sum = nullptr) {
    double top = -std::numeric_limits<double>::infinity();
    for (double p : psi) top = std::max(top, beta * p);
    std::vector<double> e(psi.size());
    Accumulator s;
    for (size_t k = 0; k < psi.size(); ++k) {
        e[k] = std::exp(beta * psi[k] - top);
        s.add(e[k] * cell);
    }
    std::vector<double> w(psi.size());
    for (size_t k = 0; k < psi.size(); ++k) w[k] = gamma * e[k] / s.value();
    if (expo) *expo = std::move(e);
    if (sum) *sum = s.value();
    return w;
}

struct LiouvilleState {
    std::vector<double> psi;
    double residual = 0.0;
    int iterations = 0;
    bool converged = false;
};

inline double liouville_residual(const PoissonSolver& solver, const std::vector<double>& psi, double beta, double gamma) {
    const auto w = liouville_rhs(psi, beta, gamma, solver.domain().cell_area());
    const auto lap = solver.laplacian(psi);
    return relative_residual(lap, w);
}

/// Damped Picard warm start followed by Newton with a backtracking line
/// search. The Jacobian is tridiagonal plus a rank-one term.
inline LiouvilleState liouville_newton(const PoissonSolver& solver, std::vector<double> psi, double beta, double gamma,
                                       const MeanFieldOptions& o) {
    const Domain& d = solver.domain();
    const size_t n = d.cells();
    const double cell = d.cell_area();
    const auto& T = solver.radial_matrix();
    const double sc = solver.radial_scale();
    LiouvilleState st;
    double res = liouville_residual(solver, psi, beta, gamma);
    for (int k = 0; k < 30 && res > 1e-3; ++k) {
        auto w = liouville_rhs(psi, beta, gamma, cell);
        auto target = solver.solve(w);
        std::vector<double> trial(n);
        for (size_t j = 0; j < n; ++j) trial[j] = (1.0 - o.relaxation) * psi[j] + o.relaxation * target[j];
        const double r = liouville_residual(solver, trial, beta, gamma);
        if (!(r < res)) break;
        psi = std::move(trial);
        res = r;
        ++st.iterations;
    }
    for (; st.iterations < o.max_iter && res > o.tol; ++st.iterations) {
        std::vector<double> e;
        double S = 0.0;
        const auto w = liouville_rhs(psi, beta, gamma, cell, &e, &S);
        const auto lap = solver.laplacian(psi);
        std::vector<double> g(n);
        for (size_t j = 0; j < n; ++j) g[j] = -(lap[j] - w[j]);
        detail::Tridiag M;
        M.lower.resize(n);
        M.upper.resize(n);
        M.diag.resize(n);
        std::vector<double> u(n), v(n);
        for (size_t j = 0; j < n; ++j) {
            M.lower[j] = sc * T.lower[j];
            M.upper[j] = sc * T.upper[j];
            M.diag[j] = sc * T.diag[j] - gamma * beta * e[j] / S;
            u[j] = gamma * beta * e[j] / S;
            v[j] = e[j] * cell / S;
        }
        M.factor();
        M.solve(g);
        M.solve(u);
        const double denom = 1.0 + weighted_dot(v, u);
        const double coef = weighted_dot(v, g) / denom;
        std::vector<double> step(n);
        for (size_t j = 0; j < n; ++j) step[j] = g[j] - coef * u[j];
        double t = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
            std::vector<double> trial(n);
            for (size_t j = 0; j < n; ++j) trial[j] = psi[j] + t * step[j];
            const double r = liouville_residual(solver, trial, beta, gamma);
            if (std::isfinite(r) && r < (1.0 - 1e-4 * t) * res) {
                psi = std::move(trial);
                res = r;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
    }
    st.psi = std::move(psi);
    st.residual = res;
    st.converged = res <= o.accept;
    return st;
}

} // namespace detail

/// Δψ = 𝒵⁻¹e^{βψ} on the radial disk with ψ = 0 on the wall and
/// 𝒵 = ∫e^{βψ}/∫ω₀.
inline MeanFieldSolution liouville_solve(const VorticityField& omega0, double beta, const MeanFieldOptions& o = {}) {
    const Domain& d = omega0.domain();
    if (d.kind != DomainKind::DiskRadial) throw Error(ErrorCode::UnsupportedDomain, "the Liouville solver runs on the disk");
    if (!std::isfinite(beta)) throw Error(ErrorCode::ParameterOutOfRange, "beta must be finite");
    if (beta < kLiouvilleBetaMin)
        throw Error(ErrorCode::ParameterOutOfRange, "beta = " + detail::fmt17(beta) + " is below the admissible bound " +
                                                        detail::fmt17(kLiouvilleBetaMin) + " (-8*pi + 0.1)");
    const double gamma = omega0.integral();
    if (!(std::abs(gamma) > 1e-14 * std::max(1.0, omega0.sup_norm()) * d.area()))
        throw Error(ErrorCode::Precondition, "the Liouville relation needs a nonzero circulation");
    PoissonSolver solver(d);
    const size_t n = d.cells();
    std::vector<double> flat(n, gamma / d.area());
    auto st = detail::liouville_newton(solver, solver.solve(flat), beta, gamma, o);
    int total = st.iterations;
    for (int pieces = 4; !st.converged && pieces <= 256; pieces *= 4) {
        // continuation in β from the uniform state
        auto psi = solver.solve(flat);
        bool ok = true;
        for (int k = 1; k <= pieces && ok; ++k) {
            st = detail::liouville_newton(solver, psi, beta * k / pieces, gamma, o);
            total += st.iterations;
            ok = st.converged;
            psi = st.psi;
        }
    }
    if (!st.converged)
        throw Error(ErrorCode::Divergence, "Liouville iteration diverged; last residual " + detail::fmt17(st.residual));
    double cell = d.cell_area(), S = 0.0;
    std::vector<double> e;
    auto w = detail::liouville_rhs(st.psi, beta, gamma, cell, &e, &S);
    double top = -std::numeric_limits<double>::infinity();
    for (double p : st.psi) top = std::max(top, beta * p);
    MeanFieldSolution s;
    s.model = MeanFieldModel::Liouville;
    s.beta = beta;
    s.z_norm = S * std::exp(top) / gamma;
    s.psi_bar = VorticityField::with_auto_bound(d, st.psi);
    s.omega_bar = VorticityField::with_auto_bound(d, w);
    s.energy = detail::physical_energy(solver, w);
    s.target_energy = energy(omega0);
    s.residual = st.residual;
    s.iterations = total;
    return s;
}

/// Cell averages of the explicit unit-disk solution
/// ω = Γ(1−A)/π · (1 − A r²)⁻², A = β/(8π + β).
inline std::vector<double> liouville_explicit(const Domain& d, double beta, double gamma = 1.0) {
    if (d.kind != DomainKind::DiskRadial || d.ly != 1.0)
        throw Error(ErrorCode::UnsupportedDomain, "the explicit solution is for the unit disk");
    const double A = beta / (8.0 * kPi + beta);
    const int n = d.ny;
    std::vector<double> w(n);
    for (int j = 0; j < n; ++j) {
        const double s0 = static_cast<double>(j) / n, s1 = static_cast<double>(j + 1) / n;
        // ∫(1−As)⁻² ds over the annulus in s = r²
        double avg;
        if (std::abs(A) < 1e-14)
            avg = 1.0;
        else
            avg = (1.0 / (1.0 - A * s1) - 1.0 / (1.0 - A * s0)) / (A * (s1 - s0));
        w[j] = gamma * (1.0 - A) / kPi * avg;
    }
    return w;
}

/// Δψ = 𝒵⁻¹sinh(βψ) on the torus. With ∫ω₀ = 0 the constant of ψ is fixed by
/// ∫sinh(βψ) = 0 and 𝒵 by matching the positive mass ∫(ω₀)₊.
inline MeanFieldSolution sinh_poisson_solve(const VorticityField& omega0, double beta, const MeanFieldOptions& o = {},
                                            const std::optional<VorticityField>& initial = std::nullopt) {
    const Domain& d = omega0.domain();
    if (d.kind != DomainKind::Torus) throw Error(ErrorCode::UnsupportedDomain, "the sinh-Poisson solver runs on the torus");
    detail::check_torus_mean(omega0);
    if (!std::isfinite(beta)) throw Error(ErrorCode::ParameterOutOfRange, "beta must be finite");
    if (beta > 0)
        throw Error(ErrorCode::ParameterOutOfRange,
                    "beta > 0 admits only the trivial sinh-Poisson state on the torus; use beta <= 0");
    PoissonSolver solver(d);
    const size_t n = d.cells();
    const double cell = d.cell_area();
    Accumulator mp;
    for (double x : omega0.values()) mp.add(std::max(x, 0.0) * cell);
    const double mplus = mp.value();

    MeanFieldSolution s;
    s.model = MeanFieldModel::SinhPoisson;
    s.beta = beta;
    s.target_energy = energy(omega0);
    if (beta == 0.0 || mplus == 0.0) {
        s.psi_bar = VorticityField::zeros(d);
        s.omega_bar = VorticityField::zeros(d);
        s.z_norm = std::numeric_limits<double>::infinity();
        return s;
    }

    // ψ from mean-free ω, then the shift c = βψ̄ − βψ with ∫sinh(βψ + c) = 0
    auto map = [&](const std::vector<double>& w, std::vector<double>& psi_bar, double& z) {
        auto psi = physical_psi(solver, w);
        Accumulator sh, ch;
        for (double p : psi) {
            sh.add(std::sinh(beta * p));
            ch.add(std::cosh(beta * p));
        }
        const double c = std::atanh(-sh.value() / ch.value());
        std::vector<double> out(n);
        Accumulator pos;
        for (size_t k = 0; k < n; ++k) {
            out[k] = std::sinh(beta * psi[k] + c);
            pos.add(std::max(out[k], 0.0) * cell);
        }
        z = pos.value() / mplus;
        for (double& x : out) x /= z;
        psi_bar.resize(n);
        for (size_t k = 0; k < n; ++k) psi_bar[k] = psi[k] + c / beta;
        return out;
    };

    std::vector<double> w = initial ? initial->values() : omega0.values();
    if (initial) require_same_domain(initial->domain(), d);
    {
        Accumulator pos;
        for (double x : w) pos.add(std::max(x, 0.0) * cell);
        if (!(pos.value() > 0)) throw Error(ErrorCode::Precondition, "initial guess has no positive part");
        for (double& x : w) x *= mplus / pos.value();
    }
    std::vector<double> psi_bar, best_w = w;
    double z = 0.0, best = std::numeric_limits<double>::infinity();
    int stall = 0, it = 0;
    detail::AndersonMixer mixer(6, o.relaxation);
    for (; it < o.max_iter; ++it) {
        auto next = map(w, psi_bar, z);
        std::vector<double> dv(n);
        for (size_t k = 0; k < n; ++k) dv[k] = next[k] - w[k];
        const double diff = detail::weighted_norm(dv) / detail::weighted_norm(next);
        if (!std::isfinite(diff)) throw Error(ErrorCode::Divergence, "sinh-Poisson iteration produced non-finite values");
        if (diff < best) {
            best_w = w;
            if (diff < 0.9 * best) stall = 0;
            best = diff;
        }
        if (diff <= o.tol) break;
        if (++stall > std::max(200, o.max_iter / 10)) break;
        if (diff > 4.0 * best) {
            // mixing overshot: restart from the best iterate
            mixer.reset();
            w = best_w;
            continue;
        }
        w = mixer.step(w, next);
    }
    w = best_w;
    auto fw = map(w, psi_bar, z);
    std::vector<double> lhs = w;
    const double m = stable_sum(lhs.begin(), lhs.end()) / static_cast<double>(n);
    for (double& x : lhs) x -= m;
    const double res = detail::relative_residual(lhs, fw);
    if (!(res <= o.accept))
        throw Error(ErrorCode::Divergence, "sinh-Poisson iteration stalled; last residual " + detail::fmt17(res) +
                                                   " (degenerate first-shell content drifts slowly at small |beta|)");
    s.z_norm = z;
    s.omega_bar = VorticityField::with_auto_bound(d, lhs);
    s.psi_bar = VorticityField::with_auto_bound(d, psi_bar);
    s.energy = detail::physical_energy(solver, lhs);
    s.residual = res;
    s.iterations = it + 1;
    return s;
}

/// Maximum-entropy distribution ρ(x, σᵢ) = gᵢe^{−βσᵢψ̄(x)}/Z(x) over the
/// levels of a piecewise-constant datum.
struct MrsDistribution {
    Domain domain;
    std::vector<double> levels;
    /// Area occupied by each level in the datum.
    std::vector<double> level_area;
    std::vector<double> log_g;
    /// rho[x·L + i] for cell x and level i.
    std::vector<double> rho;
    VorticityField psi_bar;
    VorticityField omega_bar;
    /// Second moment Σᵢσᵢ²ρ per cell.
    std::vector<double> omega2_bar;
    double beta = 0.0;
    double energy = 0.0;
    double target_energy = std::numeric_limits<double>::quiet_NaN();
    /// Residual of Δψ̄ = ω̄ relative to the larger of ‖ω̄‖ and ‖ω₀‖ (uniform
    /// parts removed on the torus).
    double residual = 0.0;
    int iterations = 0;
    int sinkhorn_sweeps = 0;

    size_t level_count() const { return levels.size(); }
    double prob(size_t cell, size_t level) const { return rho[cell * levels.size() + level]; }

    /// F(ψ) = Σσge^{−βσψ}/Σge^{−βσψ}.
    double F(double psi) const {
        double top = -std::numeric_limits<double>::infinity();
        for (size_t i = 0; i < levels.size(); ++i) top = std::max(top, log_g[i] - beta * levels[i] * psi);
        Accumulator num, den;
        for (size_t i = 0; i < levels.size(); ++i) {
            const double e = std::exp(log_g[i] - beta * levels[i] * psi - top);
            num.add(levels[i] * e);
            den.add(e);
        }
        return num.value() / den.value();
    }

    std::vector<double> variance() const {
        std::vector<double> v(omega2_bar.size());
        for (size_t k = 0; k < v.size(); ++k) v[k] = omega2_bar[k] - omega_bar[k] * omega_bar[k];
        return v;
    }

    /// max over cells of |Σᵢρ − 1|.
    double normalization_error() const {
        double e = 0.0;
        const size_t L = levels.size();
        for (size_t x = 0; x < domain.cells(); ++x) {
            Accumulator s;
            for (size_t i = 0; i < L; ++i) s.add(rho[x * L + i]);
            e = std::max(e, std::abs(s.value() - 1.0));
        }
        return e;
    }
    /// max over levels of |∫ρ(·, σᵢ) − aᵢ|/aᵢ.
    double marginal_error() const {
        double e = 0.0;
        const size_t L = levels.size();
        for (size_t i = 0; i < L; ++i) {
            Accumulator s;
            for (size_t x = 0; x < domain.cells(); ++x) s.add(rho[x * L + i]);
            e = std::max(e, std::abs(s.value() * domain.cell_area() - level_area[i]) / level_area[i]);
        }
        return e;
    }
    double min_variance() const {
        const auto v = variance();
        return *std::min_element(v.begin(), v.end());
    }

    MeanFieldSolution mean_field() const {
        MeanFieldSolution s;
        s.model = MeanFieldModel::MRS;
        s.psi_bar = psi_bar;
        s.omega_bar = omega_bar;
        s.beta = beta;
        s.energy = energy;
        s.target_energy = target_energy;
        s.residual = residual;
        s.iterations = iterations;
        return s;
    }
};

inline constexpr size_t kMrsMaxLevels = 64;

namespace detail {

/// Distinct values of a piecewise-constant field, clustered at 1e-12 of the range.
inline void level_sets(const VorticityField& f, std::vector<double>& levels, std::vector<size_t>& label) {
    const size_t n = f.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return f[a] < f[b]; });
    const double gap = 1e-12 * std::max(1.0, f.max() - f.min());
    levels.clear();
    label.assign(n, 0);
    for (size_t k = 0; k < n;) {
        size_t e = k + 1;
        while (e < n && f[idx[e]] - f[idx[e - 1]] <= gap) ++e;
        if (levels.size() == kMrsMaxLevels)
            throw Error(ErrorCode::LevelCap, "datum has more than " + std::to_string(kMrsMaxLevels) + " levels");
        for (size_t q = k; q < e; ++q) label[idx[q]] = levels.size();
        levels.push_back(f[idx[k]]);
        k = e;
    }
}

} // namespace detail

/// Self-consistent coarse graining: Sinkhorn scaling of g for the level
/// marginals inside a damped fixed point ψ̄ ← Δ⁻¹F(ψ̄).
inline MrsDistribution mrs_coarse_grain(const VorticityField& omega0, double beta, const MeanFieldOptions& o = {}) {
    const Domain& d = omega0.domain();
    if (!std::isfinite(beta)) throw Error(ErrorCode::ParameterOutOfRange, "beta must be finite");
    std::vector<size_t> label;
    MrsDistribution r;
    r.domain = d;
    r.beta = beta;
    detail::level_sets(omega0, r.levels, label);
    const size_t L = r.levels.size(), n = d.cells();
    const double cell = d.cell_area();
    r.level_area.assign(L, 0.0);
    {
        std::vector<size_t> count(L, 0);
        for (size_t x = 0; x < n; ++x) ++count[label[x]];
        for (size_t i = 0; i < L; ++i) r.level_area[i] = static_cast<double>(count[i]) * cell;
    }
    r.log_g.assign(L, 0.0);
    for (size_t i = 0; i < L; ++i) r.log_g[i] = std::log(r.level_area[i] / d.area());
    r.target_energy = d.kind == DomainKind::Torus ? detail::physical_energy(PoissonSolver(d), omega0.values())
                                                  : energy(omega0);
    PoissonSolver solver(d);

    std::vector<double> logz(n), rho(n * L);
    auto fill_rho = [&](const std::vector<double>& psi) {
        for (size_t x = 0; x < n; ++x) {
            double top = -std::numeric_limits<double>::infinity();
            for (size_t i = 0; i < L; ++i) top = std::max(top, r.log_g[i] - beta * r.levels[i] * psi[x]);
            Accumulator s;
            for (size_t i = 0; i < L; ++i) s.add(std::exp(r.log_g[i] - beta * r.levels[i] * psi[x] - top));
            logz[x] = top + std::log(s.value());
            for (size_t i = 0; i < L; ++i) rho[x * L + i] = std::exp(r.log_g[i] - beta * r.levels[i] * psi[x] - logz[x]);
        }
    };
    auto sinkhorn = [&](const std::vector<double>& psi) {
        for (int sweep = 0; sweep < 10000; ++sweep) {
            fill_rho(psi);
            ++r.sinkhorn_sweeps;
            double worst = 0.0;
            std::vector<double> col(L);
            for (size_t i = 0; i < L; ++i) {
                Accumulator s;
                for (size_t x = 0; x < n; ++x) s.add(rho[x * L + i]);
                col[i] = s.value() * cell;
                worst = std::max(worst, std::abs(col[i] / r.level_area[i] - 1.0));
            }
            if (worst <= 1e-14) return;
            for (size_t i = 0; i < L; ++i) r.log_g[i] += std::log(r.level_area[i] / col[i]);
        }
        throw Error(ErrorCode::NonConvergence, "Sinkhorn scaling did not meet the level marginals");
    };
    auto mean_vorticity = [&]() {
        std::vector<double> w(n);
        for (size_t x = 0; x < n; ++x) {
            Accumulator s;
            for (size_t i = 0; i < L; ++i) s.add(r.levels[i] * rho[x * L + i]);
            w[x] = s.value();
        }
        return w;
    };

    std::vector<double> psi = physical_psi(solver, omega0.values());
    // scales that stay meaningful when the state approaches the uniform one
    const double psi_scale = std::max(detail::weighted_norm(psi), 1e-300);
    double w_scale = 0.0;
    {
        std::vector<double> w0 = omega0.values();
        if (d.kind == DomainKind::Torus) {
            const double m = stable_sum(w0.begin(), w0.end()) / static_cast<double>(n);
            for (double& x : w0) x -= m;
        }
        w_scale = detail::weighted_norm(w0);
    }
    int it = 0;
    if (L > 1 && beta != 0.0) {
        detail::AndersonMixer mixer(6, o.relaxation);
        std::vector<double> best_psi = psi;
        double best = std::numeric_limits<double>::infinity();
        int stall = 0;
        for (; it < o.max_iter; ++it) {
            sinkhorn(psi);
            const auto target = physical_psi(solver, mean_vorticity());
            std::vector<double> dv(n);
            for (size_t x = 0; x < n; ++x) dv[x] = target[x] - psi[x];
            const double diff = detail::weighted_norm(dv) / std::max(detail::weighted_norm(target), psi_scale);
            if (!std::isfinite(diff)) throw Error(ErrorCode::Divergence, "coarse-graining iteration produced non-finite values");
            if (diff < best) {
                best_psi = psi;
                if (diff < 0.9 * best) stall = 0;
                best = diff;
            }
            if (diff <= o.tol || ++stall > 200) break;
            if (diff > 4.0 * best) {
                mixer.reset();
                psi = best_psi;
                continue;
            }
            psi = mixer.step(psi, target);
        }
        psi = best_psi;
    }
    sinkhorn(psi);
    auto w = mean_vorticity();
    r.rho = rho;
    r.omega2_bar.assign(n, 0.0);
    for (size_t x = 0; x < n; ++x) {
        Accumulator s;
        for (size_t i = 0; i < L; ++i) s.add(r.levels[i] * r.levels[i] * rho[x * L + i]);
        r.omega2_bar[x] = s.value();
    }
    std::vector<double> wp = w;
    if (d.kind == DomainKind::Torus) {
        const double m = stable_sum(wp.begin(), wp.end()) / static_cast<double>(n);
        for (double& x : wp) x -= m;
    }
    if (L == 1 || beta == 0.0) psi = physical_psi(solver, w);
    {
        const auto lap = solver.laplacian(psi);
        std::vector<double> dv(n);
        for (size_t x = 0; x < n; ++x) dv[x] = lap[x] - wp[x];
        r.residual = detail::weighted_norm(dv) / std::max({detail::weighted_norm(wp), w_scale, 1e-300});
    }
    if (!(r.residual <= o.accept))
        throw Error(ErrorCode::Divergence, "coarse-graining iteration stalled; last residual " + detail::fmt17(r.residual));
    r.psi_bar = VorticityField::with_auto_bound(d, psi);
    r.omega_bar = VorticityField(d, w, omega0.bound());
    r.energy = detail::physical_energy(solver, w);
    r.iterations = it + 1;
    return r;
}

/// Secant on β (Illinois safeguard) for E(β) = E₀ inside [lo, hi], where the
/// bracket must straddle the target.
inline double match_beta(const std::function<double(double)>& energy_of_beta, double target, double lo, double hi,
                         double rel_tol = 1e-10, int max_iter = 200) {
    double flo = energy_of_beta(lo) - target, fhi = energy_of_beta(hi) - target;
    if (!(flo * fhi <= 0))
        throw Error(ErrorCode::NonConvergence, "target energy " + detail::fmt17(target) + " is not bracketed by beta in [" +
                                                   detail::fmt17(lo) + ", " + detail::fmt17(hi) + "]");
    int side = 0;
    for (int k = 0; k < max_iter; ++k) {
        double b = (lo * fhi - hi * flo) / (fhi - flo);
        if (!(b > std::min(lo, hi) && b < std::max(lo, hi))) b = 0.5 * (lo + hi);
        const double fb = energy_of_beta(b) - target;
        if (std::abs(fb) <= rel_tol * std::abs(target) || std::abs(hi - lo) <= 1e-15 * std::max(1.0, std::abs(b)))
            return b;
        if (fb * fhi < 0) {
            lo = hi;
            flo = fhi;
            hi = b;
            fhi = fb;
            if (side == -1) flo *= 0.5;
            side = -1;
        } else {
            hi = b;
            fhi = fb;
            if (side == 1) flo *= 0.5;
            side = 1;
        }
    }
    throw Error(ErrorCode::NonConvergence, "energy matching in beta did not converge");
}

/// Liouville state with E(ψ̄) = E₀, searching β over (−8π + 0.1, β_max].
inline MeanFieldSolution liouville_match_energy(const VorticityField& omega0, double target_energy,
                                                const MeanFieldOptions& o = {}, double beta_max = 4096.0) {
    auto e = [&](double b) { return liouville_solve(omega0, b, o).energy; };
    const double b = match_beta(e, target_energy, kLiouvilleBetaMin, beta_max);
    auto s = liouville_solve(omega0, b, o);
    s.target_energy = target_energy;
    return s;
}

/// sinh-Poisson state with E = E₀, searching β over [β_min, −1e-6].
inline MeanFieldSolution sinh_poisson_match_energy(const VorticityField& omega0, double target_energy,
                                                   const MeanFieldOptions& o = {}, double beta_min = -64.0) {
    auto e = [&](double b) { return sinh_poisson_solve(omega0, b, o).energy; };
    const double b = match_beta(e, target_energy, beta_min, -1e-6);
    auto s = sinh_poisson_solve(omega0, b, o);
    s.target_energy = target_energy;
    return s;
}

/// Independent β points solved in parallel; results are in input order.
inline std::vector<MeanFieldSolution> beta_scan(MeanFieldModel model, const VorticityField& omega0,
                                                const std::vector<double>& betas, int threads = 1,
                                                const MeanFieldOptions& o = {}) {
    std::vector<MeanFieldSolution> out(betas.size());
    parallel_for(betas.size(), threads, [&](size_t k) {
        switch (model) {
        case MeanFieldModel::Liouville: out[k] = liouville_solve(omega0, betas[k], o); break;
        case MeanFieldModel::SinhPoisson: out[k] = sinh_poisson_solve(omega0, betas[k], o); break;
        case MeanFieldModel::MRS: out[k] = mrs_coarse_grain(omega0, betas[k], o).mean_field(); break;
        case MeanFieldModel::SelectiveDecay: out[k] = selective_decay(omega0); break;
        }
    });
    return out;
}

/// ‖∇⊥ψ·∇ω‖₂ / (‖∇⊥ψ‖∞‖∇ω‖₂): zero for exact steady states. Spectral on the
/// torus, spectral-in-x₁ with centred differences in x₂ on the channel, and
/// identically zero for radial disk data.
inline double steady_state_residual(const VorticityField& omega, const VorticityField& psi) {
    const Domain& d = omega.domain();
    require_same_domain(d, psi.domain());
    if (d.kind == DomainKind::DiskRadial) return 0.0;
    const size_t n = d.cells();
    detail::Dft dft(d.ny, d.nx, d.kind == DomainKind::Torus ? detail::Dft::Layout::Grid2D : detail::Dft::Layout::Rows);
    auto d1 = [&](const std::vector<double>& f) {
        std::vector<detail::cplx> c(n);
        dft.forward_real(f.data(), c.data());
        for (int m2 = 0; m2 < d.ny; ++m2)
            for (int m1 = 0; m1 < d.nx; ++m1) {
                const size_t idx = d.index(m1, m2);
                const double k = 2 * m1 == d.nx ? 0.0 : kTwoPi * detail::signed_mode(m1, d.nx) / d.lx;
                c[idx] *= detail::cplx(0.0, k) / static_cast<double>(d.kind == DomainKind::Torus ? n : d.nx);
            }
        std::vector<double> out(n);
        dft.backward_real(c.data(), out.data());
        return out;
    };
    auto d2 = [&](const std::vector<double>& f, bool odd_walls) {
        std::vector<double> out(n);
        if (d.kind == DomainKind::Torus) {
            std::vector<detail::cplx> c(n);
            dft.forward_real(f.data(), c.data());
            for (int m2 = 0; m2 < d.ny; ++m2)
                for (int m1 = 0; m1 < d.nx; ++m1) {
                    const size_t idx = d.index(m1, m2);
                    const double k = 2 * m2 == d.ny ? 0.0 : kTwoPi * detail::signed_mode(m2, d.ny) / d.ly;
                    c[idx] *= detail::cplx(0.0, k) / static_cast<double>(n);
                }
            dft.backward_real(c.data(), out.data());
            return out;
        }
        const double h = d.dy();
        for (int j = 0; j < d.ny; ++j)
            for (int i = 0; i < d.nx; ++i) {
                const double self = f[d.index(i, j)];
                const double below = j > 0 ? f[d.index(i, j - 1)] : (odd_walls ? -self : self);
                const double above = j + 1 < d.ny ? f[d.index(i, j + 1)] : (odd_walls ? -self : self);
                out[d.index(i, j)] = (above - below) / (2.0 * h);
            }
        return out;
    };
    const auto& w = omega.values();
    const auto& p = psi.values();
    const auto p1 = d1(p), p2 = d2(p, true), w1 = d1(w), w2 = d2(w, false);
    double umax = 0.0;
    Accumulator jac, grad;
    for (size_t k = 0; k < n; ++k) {
        umax = std::max(umax, std::hypot(p1[k], p2[k]));
        const double j = -p2[k] * w1[k] + p1[k] * w2[k];
        jac.add(j * j);
        grad.add(w1[k] * w1[k] + w2[k] * w2[k]);
    }
    const double den = umax * std::sqrt(grad.value());
    return den > 0 ? std::sqrt(jac.value()) / den : 0.0;
}

} // namespace mflab
