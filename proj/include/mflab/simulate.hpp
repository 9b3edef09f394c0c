#pragma once

#include "mflab/bistoch.hpp"
#include "mflab/minimize.hpp"
#include "mflab/rearrange.hpp"

#include <cstdint>
#include <random>

namespace mflab {

enum class Truncation { Fejer, TwoThirds };

inline const char* truncation_name(Truncation t) { return t == Truncation::Fejer ? "fejer" : "two-thirds"; }

struct SimConfig {
    Domain domain = Domain::torus(64, 64);
    double dt = 0.01;
    double t_end = 1.0;
    /// 0 picks the largest cutoff keeping the filtered products alias free (n/4).
    int fejer_N = 0;
    int record_every = 10;
    uint64_t seed = 0;
    Truncation truncation = Truncation::Fejer;
    double cfl = 0.5;
    /// Harmonic (mean) velocity component.
    double mean_u1 = 0.0;
    double mean_u2 = 0.0;
};

struct SimDiagnostics {
    double t = 0;
    double energy = 0;
    double enstrophy = 0;
    double mean = 0;
    double casimir4 = 0;
    double momentum1 = 0;
    double momentum2 = 0;
    /// |ω̂_k| for the modes listed by `low_modes()`.
    std::vector<double> low_modes;
};

struct Snapshot {
    double t = 0;
    VorticityField omega;
};

struct Trajectory {
    SimConfig config;
    std::vector<Snapshot> snapshots;
    std::vector<SimDiagnostics> diagnostics;
    size_t steps = 0;
    size_t substeps = 0;
    /// Number of base steps that needed dt halving.
    size_t halved_steps = 0;
};

/// (k₁, k₂) with k₁ ≥ 0, half-plane representative, 0 < |k| ≤ 4.
inline std::vector<std::pair<int, int>> low_modes() {
    std::vector<std::pair<int, int>> out;
    for (int k1 = 0; k1 <= 4; ++k1)
        for (int k2 = -4; k2 <= 4; ++k2) {
            if (k1 * k1 + k2 * k2 > 16 || (k1 == 0 && k2 <= 0)) continue;
            out.emplace_back(k1, k2);
        }
    return out;
}

inline int default_cutoff(const Domain& d) { return std::min(d.nx, d.ny) / 4; }

namespace detail {

inline void check_sim_domain(const Domain& d) {
    if (d.kind != DomainKind::Torus) throw Error(ErrorCode::UnsupportedDomain, "the simulator runs on the torus only");
}

inline int resolve_cutoff(const Domain& d, int N) {
    if (N == 0) N = default_cutoff(d);
    const int cap = default_cutoff(d);
    if (N < 1 || N > cap)
        throw Error(ErrorCode::CutoffTooLarge,
                    "Fejér cutoff must lie in [1, " + std::to_string(cap) + "], got " + std::to_string(N));
    return N;
}

} // namespace detail

/// Pseudo-spectral RK4 integrator for ∂ₜω + K(Ku·∇ω) + U·∇ω = 0, where K is
/// the truncation and U the harmonic velocity.
class EulerSimulator {
public:
    EulerSimulator(const VorticityField& omega0, int fejer_N = 0, Truncation trunc = Truncation::Fejer,
                   double mean_u1 = 0.0, double mean_u2 = 0.0, double cfl = 0.5)
        : d_(omega0.domain()), n_(omega0.size()), dft_(d_.ny, d_.nx, detail::Dft::Layout::Grid2D), U1_(mean_u1),
          U2_(mean_u2), cfl_(cfl) {
        detail::check_sim_domain(d_);
        if (!(cfl > 0 && std::isfinite(cfl))) throw Error(ErrorCode::Precondition, "cfl must be positive");
        if (!std::isfinite(mean_u1) || !std::isfinite(mean_u2))
            throw Error(ErrorCode::NonFinite, "mean velocity must be finite");
        N_ = trunc == Truncation::Fejer ? detail::resolve_cutoff(d_, fejer_N) : 0;
        k1_.resize(d_.nx);
        k2_.resize(d_.ny);
        for (int m = 0; m < d_.nx; ++m) k1_[m] = kTwoPi * detail::signed_mode(m, d_.nx) / d_.lx;
        for (int m = 0; m < d_.ny; ++m) k2_[m] = kTwoPi * detail::signed_mode(m, d_.ny) / d_.ly;
        filter_.resize(n_);
        for (int m2 = 0; m2 < d_.ny; ++m2)
            for (int m1 = 0; m1 < d_.nx; ++m1) {
                const int a = std::abs(detail::signed_mode(m1, d_.nx)), b = std::abs(detail::signed_mode(m2, d_.ny));
                double w;
                if (trunc == Truncation::Fejer)
                    w = std::max(0.0, 1.0 - a / static_cast<double>(N_)) * std::max(0.0, 1.0 - b / static_cast<double>(N_));
                else
                    w = (3 * a < d_.nx && 3 * b < d_.ny) ? 1.0 : 0.0;
                filter_[d_.index(m1, m2)] = w;
            }
        what_.resize(n_);
        dft_.forward_real(omega0.values().data(), what_.data());
        for (auto& c : what_) c /= static_cast<double>(n_);
        for (auto* v : {&u1_, &u2_, &wx_, &wy_, &nl_}) v->resize(n_);
        spec_.resize(n_);
    }

    const Domain& domain() const { return d_; }
    double time() const { return t_; }
    int cutoff() const { return N_; }

    VorticityField omega() const {
        std::vector<cplx> c(what_);
        std::vector<double> v(n_);
        const_cast<detail::Dft&>(dft_).backward_real(c.data(), v.data());
        return VorticityField::with_auto_bound(d_, std::move(v));
    }

    /// Largest |U + K u| over the grid.
    double max_speed() {
        velocity(what_);
        double s = 0;
        for (size_t k = 0; k < n_; ++k) s = std::max(s, std::hypot(u1_[k], u2_[k]));
        return s;
    }

    /// Number of RK4 substeps needed for |h|·max|u|/Δx ≤ cfl.
    int substeps_for(double h) {
        const double speed = max_speed(), dx = std::min(d_.dx(), d_.dy());
        int m = 1;
        while (std::abs(h) / m * speed / dx > cfl_) {
            m *= 2;
            if (m > (1 << 20)) throw Error(ErrorCode::Divergence, "CFL halving exceeded 2^20 substeps");
        }
        return m;
    }

    /// One step of size h (either sign), split into CFL substeps. Returns the substep count.
    int step(double h) {
        const int m = substeps_for(h);
        for (int s = 0; s < m; ++s) rk4(h / m);
        t_ += h;
        return m;
    }

    SimDiagnostics diagnostics() {
        SimDiagnostics g;
        g.t = t_;
        Accumulator e;
        for (int m2 = 0; m2 < d_.ny; ++m2)
            for (int m1 = 0; m1 < d_.nx; ++m1) {
                const double ksq = k1_[m1] * k1_[m1] + k2_[m2] * k2_[m2];
                if (ksq > 0) e.add(std::norm(what_[d_.index(m1, m2)]) / ksq);
            }
        g.energy = 0.5 * e.value() * d_.area();
        const auto w = omega();
        Accumulator z, c4, mean;
        for (double x : w.values()) {
            z.add(x * x);
            c4.add(x * x * x * x);
            mean.add(x);
        }
        const double a = d_.cell_area();
        g.enstrophy = 0.5 * z.value() * a;
        g.casimir4 = c4.value() * a;
        g.mean = mean.value() / static_cast<double>(n_);
        velocity(what_);
        g.momentum1 = stable_sum(u1_.begin(), u1_.end()) * a;
        g.momentum2 = stable_sum(u2_.begin(), u2_.end()) * a;
        for (auto [k1, k2] : low_modes()) {
            const int m1 = (k1 % d_.nx + d_.nx) % d_.nx, m2 = (k2 % d_.ny + d_.ny) % d_.ny;
            g.low_modes.push_back(std::abs(what_[d_.index(m1, m2)]));
        }
        return g;
    }

private:
    using cvec = std::vector<cplx>;

    /// K∇⊥ψ (plus U if requested) on the grid for spectral ω̂.
    void velocity(const cvec& w, bool with_mean = true) {
        for (int m2 = 0; m2 < d_.ny; ++m2)
            for (int m1 = 0; m1 < d_.nx; ++m1) {
                const size_t k = d_.index(m1, m2);
                const double ksq = k1_[m1] * k1_[m1] + k2_[m2] * k2_[m2];
                spec_[k] = ksq > 0 ? -filter_[k] * w[k] / ksq : cplx(0.0);
            }
        // u₁ = −∂₂ψ, u₂ = ∂₁ψ
        cvec tmp(n_);
        for (int m2 = 0; m2 < d_.ny; ++m2)
            for (int m1 = 0; m1 < d_.nx; ++m1) tmp[d_.index(m1, m2)] = -cplx(0, k2_[m2]) * spec_[d_.index(m1, m2)];
        dft_.backward_real(tmp.data(), u1_.data());
        for (int m2 = 0; m2 < d_.ny; ++m2)
            for (int m1 = 0; m1 < d_.nx; ++m1) tmp[d_.index(m1, m2)] = cplx(0, k1_[m1]) * spec_[d_.index(m1, m2)];
        dft_.backward_real(tmp.data(), u2_.data());
        if (with_mean)
            for (size_t k = 0; k < n_; ++k) {
                u1_[k] += U1_;
                u2_[k] += U2_;
            }
    }

    /// −K[Ku·∇ω] − U·∇ω in spectral space; the zero mode is left at 0.
    void tendency(const cvec& w, cvec& out) {
        velocity(w, false);
        cvec tmp(n_);
        for (int m2 = 0; m2 < d_.ny; ++m2)
            for (int m1 = 0; m1 < d_.nx; ++m1) tmp[d_.index(m1, m2)] = cplx(0, k1_[m1]) * w[d_.index(m1, m2)];
        dft_.backward_real(tmp.data(), wx_.data());
        for (int m2 = 0; m2 < d_.ny; ++m2)
            for (int m1 = 0; m1 < d_.nx; ++m1) tmp[d_.index(m1, m2)] = cplx(0, k2_[m2]) * w[d_.index(m1, m2)];
        dft_.backward_real(tmp.data(), wy_.data());
        for (size_t k = 0; k < n_; ++k) nl_[k] = u1_[k] * wx_[k] + u2_[k] * wy_[k];
        dft_.forward_real(nl_.data(), out.data());
        const double inv = 1.0 / static_cast<double>(n_);
        for (int m2 = 0; m2 < d_.ny; ++m2)
            for (int m1 = 0; m1 < d_.nx; ++m1) {
                const size_t k = d_.index(m1, m2);
                out[k] = -filter_[k] * inv * out[k] - cplx(0, U1_ * k1_[m1] + U2_ * k2_[m2]) * w[k];
            }
        out[0] = 0.0;
    }

    void rk4(double h) {
        cvec k1(n_), k2(n_), k3(n_), k4(n_), y(n_);
        tendency(what_, k1);
        for (size_t k = 0; k < n_; ++k) y[k] = what_[k] + 0.5 * h * k1[k];
        tendency(y, k2);
        for (size_t k = 0; k < n_; ++k) y[k] = what_[k] + 0.5 * h * k2[k];
        tendency(y, k3);
        for (size_t k = 0; k < n_; ++k) y[k] = what_[k] + h * k3[k];
        tendency(y, k4);
        for (size_t k = 0; k < n_; ++k) what_[k] += h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
        // keep ω̂ Hermitian so the grid field stays real
        for (int m2 = 0; m2 < d_.ny; ++m2)
            for (int m1 = 0; m1 < d_.nx; ++m1) {
                const size_t a = d_.index(m1, m2), b = d_.index((d_.nx - m1) % d_.nx, (d_.ny - m2) % d_.ny);
                if (a < b) {
                    const cplx s = 0.5 * (what_[a] + std::conj(what_[b]));
                    what_[a] = s;
                    what_[b] = std::conj(s);
                } else if (a == b) {
                    what_[a] = what_[a].real();
                }
            }
    }

    Domain d_;
    size_t n_;
    mutable detail::Dft dft_;
    double U1_, U2_, cfl_;
    int N_ = 0;
    double t_ = 0.0;
    std::vector<double> k1_, k2_, filter_;
    cvec what_, spec_;
    std::vector<double> u1_, u2_, wx_, wy_, nl_;
};

struct StepResult {
    VorticityField omega;
    int substeps = 1;
};

/// One RK4 step of the truncated vorticity equation with CFL halving.
inline StepResult step(const VorticityField& omega, double dt, int fejer_N = 0) {
    EulerSimulator sim(omega, fejer_N);
    const int m = sim.step(dt);
    return {sim.omega(), m};
}

inline void validate(const SimConfig& c) {
    detail::check_sim_domain(c.domain);
    if (!(c.dt > 0 && std::isfinite(c.dt))) throw Error(ErrorCode::Precondition, "dt must be positive");
    if (!(c.t_end >= 0 && std::isfinite(c.t_end))) throw Error(ErrorCode::Precondition, "t_end must be >= 0");
    if (c.record_every < 1) throw Error(ErrorCode::Precondition, "record_every must be >= 1");
    if (c.truncation == Truncation::Fejer) detail::resolve_cutoff(c.domain, c.fejer_N);
}

/// Integrates from t = 0 to t_end, recording a snapshot and diagnostics every
/// `record_every` steps and at the final time.
inline Trajectory run(const SimConfig& config, const VorticityField& initial) {
    validate(config);
    require_same_domain(config.domain, initial.domain());
    Trajectory tr;
    tr.config = config;
    EulerSimulator sim(initial, config.fejer_N, config.truncation, config.mean_u1, config.mean_u2, config.cfl);
    auto record = [&](double t) {
        tr.snapshots.push_back({t, sim.omega()});
        tr.diagnostics.push_back(sim.diagnostics());
        tr.diagnostics.back().t = t;
    };
    record(0.0);
    const auto total = static_cast<size_t>(std::ceil(config.t_end / config.dt - 1e-9));
    for (size_t s = 0; s < total; ++s) {
        const double h = s + 1 == total ? config.t_end - static_cast<double>(s) * config.dt : config.dt;
        const int m = sim.step(h);
        tr.substeps += static_cast<size_t>(m);
        tr.halved_steps += m > 1;
        ++tr.steps;
        if ((s + 1) % static_cast<size_t>(config.record_every) == 0 || s + 1 == total)
            record(s + 1 == total ? config.t_end : static_cast<double>(s + 1) * config.dt);
    }
    return tr;
}

/// Smooth random datum with zero mean: modes 0 < |k| ≤ kmax with amplitude ~ 1/|k|.
inline VorticityField random_datum(const Domain& d, uint64_t seed, int kmax = 6) {
    detail::check_sim_domain(d);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    std::vector<double> v(d.cells(), 0.0);
    for (int k1 = 0; k1 <= kmax; ++k1)
        for (int k2 = -kmax; k2 <= kmax; ++k2) {
            if ((k1 == 0 && k2 <= 0) || k1 * k1 + k2 * k2 > kmax * kmax) continue;
            const double a = U(rng) / std::hypot(k1, k2), b = U(rng) / std::hypot(k1, k2);
            for (int j = 0; j < d.ny; ++j)
                for (int i = 0; i < d.nx; ++i) {
                    const double ph = kTwoPi * (k1 * d.x1(i) / d.lx + k2 * d.x2(j) / d.ly);
                    v[d.index(i, j)] += a * std::cos(ph) + b * std::sin(ph);
                }
        }
    return VorticityField::with_auto_bound(d, std::move(v));
}

struct OmegaLimitProbe {
    VorticityField candidate;
    size_t snapshots_used = 0;
    ClosureMembership membership;
    double isotonic_residual = 0;
    double enstrophy_datum = 0;
    double enstrophy_candidate = 0;
    /// L² distance from the candidate to the last coarse-grained snapshot.
    double distance_to_last = 0;
};

/// Average of Fejér-coarse-grained snapshots with t ≥ t_last − window.
inline OmegaLimitProbe omega_limit_probe(const Trajectory& tr, double window, int fejer_N = 0) {
    if (tr.snapshots.empty()) throw Error(ErrorCode::WindowTooLarge, "trajectory has no snapshots");
    const double t0 = tr.snapshots.front().t, t1 = tr.snapshots.back().t;
    if (!(window >= 0) || window > t1 - t0 + 1e-12)
        throw Error(ErrorCode::WindowTooLarge,
                    "window " + detail::fmt17(window) + " exceeds trajectory span " + detail::fmt17(t1 - t0));
    const Domain& d = tr.snapshots.front().omega.domain();
    const int N = fejer_N == 0 ? default_cutoff(d) : fejer_N;
    std::vector<double> acc(d.cells(), 0.0);
    OmegaLimitProbe p{VorticityField::zeros(d), 0, {}, 0, 0, 0, 0};
    VorticityField last = VorticityField::zeros(d);
    for (const auto& s : tr.snapshots) {
        if (s.t < t1 - window - 1e-12) continue;
        last = fejer(N, s.omega);
        for (size_t k = 0; k < acc.size(); ++k) acc[k] += last[k];
        ++p.snapshots_used;
    }
    for (double& x : acc) x /= static_cast<double>(p.snapshots_used);
    p.candidate = VorticityField::with_auto_bound(d, std::move(acc));
    const auto& w0 = tr.snapshots.front().omega;
    p.membership = in_orbit_closure(p.candidate, w0);
    PoissonSolver solver(d);
    const auto psi = VorticityField::with_auto_bound(d, physical_psi(solver, p.candidate.values()));
    p.isotonic_residual = psi.sup_norm() > 0 ? monotone_fit(p.candidate, psi).isotonic_residual : 0.0;
    p.enstrophy_datum = 0.5 * inner(w0, w0);
    p.enstrophy_candidate = 0.5 * inner(p.candidate, p.candidate);
    const auto diff = p.candidate - last;
    p.distance_to_last = std::sqrt(inner(diff, diff));
    return p;
}

inline std::string diagnostics_csv_header() {
    std::string h = "t,energy,enstrophy,mean,casimir4,momentum1,momentum2";
    for (auto [k1, k2] : low_modes()) h += ",absw_" + std::to_string(k1) + "_" + std::to_string(k2);
    return h;
}

inline std::string diagnostics_csv_row(const SimDiagnostics& g) {
    std::string r = detail::fmt17(g.t) + "," + detail::fmt17(g.energy) + "," + detail::fmt17(g.enstrophy) + "," +
                    detail::fmt17(g.mean) + "," + detail::fmt17(g.casimir4) + "," + detail::fmt17(g.momentum1) + "," +
                    detail::fmt17(g.momentum2);
    for (double a : g.low_modes) r += "," + detail::fmt17(a);
    return r;
}

inline void write_diagnostics_csv(const Trajectory& tr, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw Error(ErrorCode::Io, "cannot write " + path);
    os << diagnostics_csv_header() << "\n";
    for (const auto& g : tr.diagnostics) os << diagnostics_csv_row(g) << "\n";
}

} // namespace mflab
