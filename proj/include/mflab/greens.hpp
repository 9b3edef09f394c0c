#pragma once

#include "mflab/field.hpp"

#include <memory>

namespace mflab {

/// Streamfunction with Δψ = ω, velocity u = ∇⊥ψ = (−∂₂ψ, ∂₁ψ) per cell.
/// On the disk u1 is radial (always 0) and u2 azimuthal.
struct StreamSolution {
    Domain domain;
    std::vector<double> psi;
    std::vector<double> u1;
    std::vector<double> u2;
    /// Channel: {ψ̂₀(0), ψ̂₀(1)}; disk: {ψ(R)}; torus: empty.
    std::vector<double> boundary_values;
    /// Momentum value that fixed ψ̂₀(1) = gauge/Lx on the channel.
    double gauge = 0.0;
    /// Relative discrete residual ‖Δψ − ω‖/‖ω‖.
    double residual = 0.0;

    VorticityField psi_field() const { return VorticityField::with_auto_bound(domain, psi); }
};

namespace detail {

/// Thomas elimination for a real tridiagonal matrix, reused across right-hand sides.
struct Tridiag {
    std::vector<double> lower, diag, upper;
    std::vector<double> cp, inv;

    void factor() {
        const size_t n = diag.size();
        cp.assign(n, 0.0);
        inv.assign(n, 0.0);
        double den = diag[0];
        inv[0] = 1.0 / den;
        cp[0] = n > 1 ? upper[0] * inv[0] : 0.0;
        for (size_t j = 1; j < n; ++j) {
            den = diag[j] - lower[j] * cp[j - 1];
            inv[j] = 1.0 / den;
            cp[j] = j + 1 < n ? upper[j] * inv[j] : 0.0;
        }
    }

    template <class T>
    void solve(std::vector<T>& rhs) const {
        const size_t n = diag.size();
        rhs[0] = rhs[0] * inv[0];
        for (size_t j = 1; j < n; ++j) rhs[j] = (rhs[j] - lower[j] * rhs[j - 1]) * inv[j];
        for (size_t j = n - 1; j-- > 0;) rhs[j] = rhs[j] - cp[j] * rhs[j + 1];
    }

    template <class T>
    std::vector<T> apply(const std::vector<T>& x) const {
        const size_t n = diag.size();
        std::vector<T> y(n);
        for (size_t j = 0; j < n; ++j) {
            T v = diag[j] * x[j];
            if (j > 0) v += lower[j] * x[j - 1];
            if (j + 1 < n) v += upper[j] * x[j + 1];
            y[j] = v;
        }
        return y;
    }
};

} // namespace detail

/// Reusable Poisson solver for one domain. Channel: spectral in x₁, second-order
/// finite volumes in x₂ with Dirichlet faces. Torus: spectral. Disk: radial
/// finite volumes in s = (r/R)².
class PoissonSolver {
public:
    explicit PoissonSolver(const Domain& d) : d_(d) {
        d_.validate();
        if (d_.kind == DomainKind::Channel) {
            dft_ = std::make_unique<detail::Dft>(d_.ny, d_.nx, detail::Dft::Layout::Rows);
            const double h = d_.dy();
            for (int m = 0; m <= d_.nx / 2; ++m) {
                const double k = kTwoPi * m / d_.lx;
                detail::Tridiag t;
                t.lower.assign(d_.ny, 1.0);
                t.upper.assign(d_.ny, 1.0);
                t.diag.assign(d_.ny, -(2.0 + k * k * h * h));
                t.diag.front() -= 1.0;
                t.diag.back() -= 1.0;
                t.factor();
                modes_.push_back(std::move(t));
            }
        } else if (d_.kind == DomainKind::Torus) {
            dft_ = std::make_unique<detail::Dft>(d_.ny, d_.nx, detail::Dft::Layout::Grid2D);
        } else {
            const int n = d_.ny;
            detail::Tridiag t;
            t.lower.assign(n, 0.0);
            t.upper.assign(n, 0.0);
            t.diag.assign(n, 0.0);
            for (int j = 0; j < n; ++j) {
                const double sl = static_cast<double>(j) / n;
                const double su = static_cast<double>(j + 1) / n;
                t.lower[j] = sl;
                t.upper[j] = su;
                t.diag[j] = -(sl + su);
            }
            t.diag[n - 1] -= 1.0; // ghost reflection through the wall face s = 1
            t.factor();
            modes_.push_back(std::move(t));
        }
    }

    const Domain& domain() const { return d_; }

    /// Disk only: Δ = radial_scale()·T with T the tridiagonal returned here
    /// (wall value 0).
    const detail::Tridiag& radial_matrix() const {
        if (d_.kind != DomainKind::DiskRadial) throw Error(ErrorCode::UnsupportedDomain, "radial operator is disk-only");
        return modes_[0];
    }
    double radial_scale() const {
        const double ds = 1.0 / d_.ny;
        return 4.0 / (d_.ly * d_.ly * ds * ds);
    }

    /// ψ for the given cell values. `gauge` is the channel momentum fixing
    /// ψ̂₀(1) = gauge/Lx; `wall` is the disk boundary value.
    std::vector<double> solve(const std::vector<double>& w, double gauge = 0.0, double wall = 0.0) const {
        if (w.size() != d_.cells()) throw Error(ErrorCode::SizeMismatch, "cell count mismatch in Poisson solve");
        switch (d_.kind) {
        case DomainKind::Channel: return solve_channel(w, gauge);
        case DomainKind::Torus: return solve_torus(w);
        case DomainKind::DiskRadial: return solve_disk(w, wall);
        }
        return {};
    }

    /// Discrete Laplacian with the same boundary data as solve().
    std::vector<double> laplacian(const std::vector<double>& psi, double gauge = 0.0, double wall = 0.0) const {
        const size_t n = d_.cells();
        std::vector<double> out(n);
        if (d_.kind == DomainKind::Torus) {
            std::vector<cplx> c(n);
            dft_->forward_real(psi.data(), c.data());
            for (int m2 = 0; m2 < d_.ny; ++m2)
                for (int m1 = 0; m1 < d_.nx; ++m1) c[d_.index(m1, m2)] *= -ksq(m1, m2) / static_cast<double>(n);
            dft_->backward_real(c.data(), out.data());
        } else if (d_.kind == DomainKind::Channel) {
            const double h = d_.dy();
            std::vector<cplx> c(n);
            dft_->forward_real(psi.data(), c.data());
            for (auto& z : c) z /= static_cast<double>(d_.nx);
            std::vector<cplx> col(d_.ny);
            for (int m = 0; m < d_.nx; ++m) {
                for (int j = 0; j < d_.ny; ++j) col[j] = c[d_.index(m, j)];
                auto y = modes_[std::abs(detail::signed_mode(m, d_.nx))].apply(col);
                if (m == 0) y.back() += 2.0 * gauge / d_.lx;
                for (int j = 0; j < d_.ny; ++j) c[d_.index(m, j)] = y[j] / (h * h);
            }
            dft_->backward_real(c.data(), out.data());
        } else {
            auto y = modes_[0].apply(psi);
            y.back() += 2.0 * wall;
            const double ds = 1.0 / d_.ny;
            const double sc = 4.0 / (d_.ly * d_.ly * ds * ds);
            for (size_t j = 0; j < n; ++j) out[j] = y[j] * sc;
        }
        return out;
    }

    double ksq(int m1, int m2) const {
        const double a = kTwoPi * detail::signed_mode(m1, d_.nx) / d_.lx;
        const double b = kTwoPi * detail::signed_mode(m2, d_.ny) / d_.ly;
        return a * a + b * b;
    }

    /// Velocity per cell from ψ (u1 = −∂₂ψ, u2 = ∂₁ψ; disk: u2 = u_θ).
    void velocity(const std::vector<double>& psi, double gauge, double wall, std::vector<double>& u1,
                  std::vector<double>& u2) const {
        const size_t n = d_.cells();
        u1.assign(n, 0.0);
        u2.assign(n, 0.0);
        if (d_.kind == DomainKind::DiskRadial) {
            const int nr = d_.ny;
            const double ds = 1.0 / nr;
            for (int j = 0; j < nr; ++j) {
                const double up = j + 1 < nr ? psi[j + 1] : 2.0 * wall - psi[j];
                double dpsi;
                if (j == 0)
                    dpsi = (up - psi[0]) / ds;
                else
                    dpsi = (up - psi[j - 1]) / (2.0 * ds);
                const double r = d_.x2(j);
                u2[j] = 2.0 * r / (d_.ly * d_.ly) * dpsi;
            }
            return;
        }
        std::vector<cplx> c(n);
        dft_->forward_real(psi.data(), c.data());
        const bool torus = d_.kind == DomainKind::Torus;
        std::vector<cplx> cx(n);
        for (int m2 = 0; m2 < d_.ny; ++m2)
            for (int m1 = 0; m1 < d_.nx; ++m1) {
                const size_t idx = d_.index(m1, m2);
                const bool nyq = 2 * m1 == d_.nx;
                const double k1 = nyq ? 0.0 : kTwoPi * detail::signed_mode(m1, d_.nx) / d_.lx;
                cx[idx] = cplx(0.0, k1) * c[idx] / (torus ? static_cast<double>(n) : static_cast<double>(d_.nx));
            }
        dft_->backward_real(cx.data(), u2.data());
        if (torus) {
            std::vector<cplx> cy(n);
            for (int m2 = 0; m2 < d_.ny; ++m2)
                for (int m1 = 0; m1 < d_.nx; ++m1) {
                    const size_t idx = d_.index(m1, m2);
                    const bool nyq = 2 * m2 == d_.ny;
                    const double k2 = nyq ? 0.0 : kTwoPi * detail::signed_mode(m2, d_.ny) / d_.ly;
                    cy[idx] = -cplx(0.0, k2) * c[idx] / static_cast<double>(n);
                }
            dft_->backward_real(cy.data(), u1.data());
        } else {
            const double h = d_.dy();
            const double top = gauge / d_.lx;
            for (int j = 0; j < d_.ny; ++j)
                for (int i = 0; i < d_.nx; ++i) {
                    const double below = j > 0 ? psi[d_.index(i, j - 1)] : -psi[d_.index(i, 0)];
                    const double above = j + 1 < d_.ny ? psi[d_.index(i, j + 1)] : 2.0 * top - psi[d_.index(i, j)];
                    u1[d_.index(i, j)] = -(above - below) / (2.0 * h);
                }
        }
    }

private:
    std::vector<double> solve_channel(const std::vector<double>& w, double gauge) const {
        const size_t n = d_.cells();
        const double h = d_.dy();
        std::vector<cplx> c(n);
        dft_->forward_real(w.data(), c.data());
        std::vector<cplx> col(d_.ny);
        for (int m = 0; m < d_.nx; ++m) {
            for (int j = 0; j < d_.ny; ++j) col[j] = c[d_.index(m, j)] * (h * h / d_.nx);
            if (m == 0) col.back() -= 2.0 * gauge / d_.lx;
            modes_[std::abs(detail::signed_mode(m, d_.nx))].solve(col);
            for (int j = 0; j < d_.ny; ++j) c[d_.index(m, j)] = col[j];
        }
        std::vector<double> psi(n);
        dft_->backward_real(c.data(), psi.data());
        return psi;
    }

    std::vector<double> solve_torus(const std::vector<double>& w) const {
        const size_t n = d_.cells();
        std::vector<cplx> c(n);
        dft_->forward_real(w.data(), c.data());
        for (int m2 = 0; m2 < d_.ny; ++m2)
            for (int m1 = 0; m1 < d_.nx; ++m1) {
                const size_t idx = d_.index(m1, m2);
                const double k2 = ksq(m1, m2);
                c[idx] = k2 == 0.0 ? cplx(0.0) : -c[idx] / (k2 * static_cast<double>(n));
            }
        std::vector<double> psi(n);
        dft_->backward_real(c.data(), psi.data());
        return psi;
    }

    std::vector<double> solve_disk(const std::vector<double>& w, double wall) const {
        const double ds = 1.0 / d_.ny;
        const double sc = d_.ly * d_.ly * ds * ds / 4.0;
        std::vector<double> rhs(w.size());
        for (size_t j = 0; j < w.size(); ++j) rhs[j] = w[j] * sc;
        rhs.back() -= 2.0 * wall;
        modes_[0].solve(rhs);
        return rhs;
    }

    Domain d_;
    std::unique_ptr<detail::Dft> dft_;
    std::vector<detail::Tridiag> modes_;
};

namespace detail {

inline void check_torus_mean(const VorticityField& f) {
    if (f.domain().kind != DomainKind::Torus) return;
    const double tol = 1e-12 * std::max(1.0, f.sup_norm());
    if (std::abs(f.mean()) > tol)
        throw Error(ErrorCode::TorusMeanNonzero, "torus vorticity must have zero mean, got " + fmt17(f.mean()));
}

inline double relative_residual(const std::vector<double>& lap, const std::vector<double>& w) {
    Accumulator num, den;
    for (size_t k = 0; k < w.size(); ++k) {
        num.add((lap[k] - w[k]) * (lap[k] - w[k]));
        den.add(w[k] * w[k]);
    }
    const double d = std::sqrt(den.value());
    return d > 0 ? std::sqrt(num.value()) / d : std::sqrt(num.value());
}

} // namespace detail

/// Biot–Savart solve. Channel ψ̂₀(0) = 0 and ψ̂₀(1) = gauge_momentum/Lx; the
/// default gauge 0 is the Dirichlet channel Green's function.
inline StreamSolution solve_stream(const VorticityField& f, double gauge_momentum = 0.0) {
    const Domain& d = f.domain();
    detail::check_torus_mean(f);
    PoissonSolver solver(d);
    StreamSolution s;
    s.domain = d;
    s.gauge = d.kind == DomainKind::Channel ? gauge_momentum : 0.0;
    s.psi = solver.solve(f.values(), s.gauge);
    solver.velocity(s.psi, s.gauge, 0.0, s.u1, s.u2);
    if (d.kind == DomainKind::Channel)
        s.boundary_values = {0.0, s.gauge / d.lx};
    else if (d.kind == DomainKind::DiskRadial)
        s.boundary_values = {0.0};
    s.residual = detail::relative_residual(solver.laplacian(s.psi, s.gauge), f.values());
    return s;
}

/// ψ for any-mean data: on the torus the mean is removed first, as the
/// uniform part carries no velocity.
inline std::vector<double> physical_psi(const PoissonSolver& solver, const std::vector<double>& w) {
    if (solver.domain().kind != DomainKind::Torus) return solver.solve(w);
    const double m = stable_sum(w.begin(), w.end()) / static_cast<double>(w.size());
    std::vector<double> z(w);
    for (double& x : z) x -= m;
    return solver.solve(z);
}

/// E = −½ΣψωΔA with the Dirichlet (gauge 0) streamfunction.
inline double energy(const VorticityField& f) {
    detail::check_torus_mean(f);
    PoissonSolver solver(f.domain());
    auto psi = solver.solve(f.values());
    Accumulator acc;
    for (size_t k = 0; k < psi.size(); ++k) acc.add(psi[k] * f[k]);
    return -0.5 * acc.value() * f.domain().cell_area();
}

/// Symmetric Green bilinear form ⟨a, −Δ⁻¹b⟩, so energy(ω) = ½·green_form(ω, ω).
inline double green_form(const VorticityField& a, const VorticityField& b) {
    require_same_domain(a.domain(), b.domain());
    detail::check_torus_mean(b);
    PoissonSolver solver(a.domain());
    auto psi = solver.solve(b.values());
    Accumulator acc;
    for (size_t k = 0; k < psi.size(); ++k) acc.add(-psi[k] * a[k]);
    return acc.value() * a.domain().cell_area();
}

/// Velocity-form energy ½∫|∇ψ|² by a consistent staggered quadrature
/// (channel faces, radial faces) or spectral Parseval on the torus.
inline double kinetic_energy(const VorticityField& f) {
    const Domain& d = f.domain();
    detail::check_torus_mean(f);
    PoissonSolver solver(d);
    auto psi = solver.solve(f.values());
    Accumulator acc;
    if (d.kind == DomainKind::Torus) {
        detail::Dft dft(d.ny, d.nx, detail::Dft::Layout::Grid2D);
        std::vector<cplx> c(d.cells());
        dft.forward_real(psi.data(), c.data());
        const double n = static_cast<double>(d.cells());
        for (int m2 = 0; m2 < d.ny; ++m2)
            for (int m1 = 0; m1 < d.nx; ++m1) acc.add(solver.ksq(m1, m2) * std::norm(c[d.index(m1, m2)] / n));
        return 0.5 * acc.value() * d.area();
    }
    if (d.kind == DomainKind::Channel) {
        const double h = d.dy();
        detail::Dft dft(d.ny, d.nx, detail::Dft::Layout::Rows);
        std::vector<cplx> c(d.cells());
        dft.forward_real(psi.data(), c.data());
        for (auto& z : c) z /= static_cast<double>(d.nx);
        for (int m = 0; m < d.nx; ++m) {
            const double k = kTwoPi * detail::signed_mode(m, d.nx) / d.lx;
            for (int j = 0; j < d.ny; ++j) {
                const cplx v = c[d.index(m, j)];
                acc.add(k * k * std::norm(v) * h);
                if (j + 1 < d.ny) acc.add(std::norm(c[d.index(m, j + 1)] - v) / h);
            }
            acc.add(std::norm(2.0 * c[d.index(m, 0)]) / (2.0 * h));
            acc.add(std::norm(2.0 * c[d.index(m, d.ny - 1)]) / (2.0 * h));
        }
        return 0.5 * acc.value() * d.lx;
    }
    const int n = d.ny;
    const double ds = 1.0 / n;
    for (int j = 0; j + 1 < n; ++j) {
        const double diff = psi[j + 1] - psi[j];
        acc.add(static_cast<double>(j + 1) / n * diff * diff);
    }
    acc.add(0.5 * 4.0 * psi[n - 1] * psi[n - 1]);
    return 2.0 * kPi * acc.value() / ds;
}

/// M(ω) = −∫x₂ω (channel, torus).
inline double momentum(const VorticityField& f) {
    const Domain& d = f.domain();
    if (d.kind == DomainKind::DiskRadial)
        throw Error(ErrorCode::FunctionalUnsupported, "momentum is defined on channel and torus");
    Accumulator acc;
    for (int j = 0; j < d.ny; ++j) {
        Accumulator row;
        for (int i = 0; i < d.nx; ++i) row.add(f.at(i, j));
        acc.add(d.x2(j) * row.value());
    }
    return -acc.value() * d.cell_area();
}

/// A(ω) = −∫½(R²−|x|²)ω on the disk.
inline double angular_momentum(const VorticityField& f) {
    const Domain& d = f.domain();
    if (d.kind != DomainKind::DiskRadial)
        throw Error(ErrorCode::FunctionalUnsupported, "angular momentum is defined on the disk");
    const double R2 = d.ly * d.ly;
    Accumulator acc;
    for (int j = 0; j < d.ny; ++j) {
        const double s = (j + 0.5) / d.ny;
        acc.add(0.5 * R2 * (1.0 - s) * f[j]);
    }
    return -acc.value() * d.cell_area();
}

/// Circulation around boundary component i: channel 0 = bottom wall,
/// 1 = top wall (both positively oriented); disk 0 = the circle.
inline double circulation(const VorticityField& f, int component, double gauge_momentum = 0.0) {
    const Domain& d = f.domain();
    if (d.kind == DomainKind::Torus)
        throw Error(ErrorCode::FunctionalUnsupported, "circulation needs a boundary (channel or disk)");
    PoissonSolver solver(d);
    auto psi = solver.solve(f.values(), gauge_momentum);
    if (d.kind == DomainKind::DiskRadial) {
        if (component != 0) throw Error(ErrorCode::Precondition, "disk has one boundary component");
        const double ds = 1.0 / d.ny;
        return 4.0 * kPi * 2.0 * (0.0 - psi.back()) / ds;
    }
    if (component != 0 && component != 1) throw Error(ErrorCode::Precondition, "channel components are 0 and 1");
    const double h = d.dy();
    Accumulator acc;
    if (component == 0) {
        for (int i = 0; i < d.nx; ++i) acc.add(psi[d.index(i, 0)]);
        return -d.dx() * 2.0 * acc.value() / h;
    }
    const double top = gauge_momentum / d.lx;
    for (int i = 0; i < d.nx; ++i) acc.add(top - psi[d.index(i, d.ny - 1)]);
    return d.dx() * 2.0 * acc.value() / h;
}

} // namespace mflab
