#pragma once

#include "mflab/greens.hpp"
#include "mflab/parallel.hpp"
#include "mflab/rearrange.hpp"

#include <random>
#include <sstream>

namespace mflab {

/// ξ = ω_b + δε⁻²𝟙_B𝟙_A with B = [cx−ε, cx+ε] (periodic) and A = [cy−ε, cy+ε],
/// cell averaged so that ‖ξ − ω_b‖_{L¹} = 4δ holds in quadrature.
struct PeakedDatum {
    VorticityField base;
    double delta = 0.0;
    double eps = 0.0;
    VorticityField xi;
    double cx = kPi;
    double cy = 0.5;

    VorticityField perturbation() const { return xi - base; }
};

namespace detail {

/// Length of [a, b] ∩ [lo, hi] after wrapping [a, b] onto the period.
inline double periodic_overlap(double a, double b, double lo, double hi, double period) {
    double s = 0.0;
    for (int shift = -1; shift <= 1; ++shift) {
        const double l = std::max(a + shift * period, lo), r = std::min(b + shift * period, hi);
        if (r > l) s += r - l;
    }
    return s;
}

} // namespace detail

inline PeakedDatum build_peaked(const VorticityField& base, double delta, double eps, double cx = kPi,
                                double cy = 0.5) {
    const Domain& d = base.domain();
    if (d.kind != DomainKind::Channel) throw Error(ErrorCode::UnsupportedDomain, "peaked data live on the channel");
    if (!(eps > 0 && delta > 0 && std::isfinite(delta)))
        throw Error(ErrorCode::Precondition, "delta and eps must be positive");
    if (!(eps < delta))
        throw Error(ErrorCode::Precondition, "eps must be smaller than delta (got eps = " + detail::fmt17(eps) +
                                                 ", delta = " + detail::fmt17(delta) + ")");
    if (!(cy - eps >= 0.0 && cy + eps <= 1.0))
        throw Error(ErrorCode::Precondition, "box must lie inside the channel");
    if (2.0 * eps < 4.0 * d.dx() || 2.0 * eps < 4.0 * d.dy())
        throw Error(ErrorCode::EpsUnresolved, "box of width 2*eps spans fewer than 4 cells; refine the grid");
    std::vector<double> fx(d.nx), fy(d.ny);
    for (int i = 0; i < d.nx; ++i)
        fx[i] = detail::periodic_overlap(cx - eps, cx + eps, i * d.dx(), (i + 1) * d.dx(), d.lx) / d.dx();
    for (int j = 0; j < d.ny; ++j)
        fy[j] = detail::periodic_overlap(cy - eps, cy + eps, j * d.dy(), (j + 1) * d.dy(), 1e300) / d.dy();
    const double peak = delta / (eps * eps);
    std::vector<double> v(base.values());
    for (int j = 0; j < d.ny; ++j)
        for (int i = 0; i < d.nx; ++i) v[d.index(i, j)] += peak * fx[i] * fy[j];
    PeakedDatum p;
    p.base = base;
    p.delta = delta;
    p.eps = eps;
    p.cx = cx;
    p.cy = cy;
    p.xi = VorticityField(d, std::move(v), std::max(base.bound(), base.sup_norm() + peak));
    return p;
}

/// Kolmogorov shear A·sin(2πx₂), exactly cell averaged.
inline VorticityField kolmogorov_field(const Domain& d, double amplitude = 1.0) {
    if (d.kind != DomainKind::Channel) throw Error(ErrorCode::UnsupportedDomain, "Kolmogorov shear is a channel datum");
    std::vector<double> v(d.cells());
    const double h = d.dy();
    for (int j = 0; j < d.ny; ++j) {
        const double a = amplitude * (std::cos(kTwoPi * j * h) - std::cos(kTwoPi * (j + 1) * h)) / (kTwoPi * h);
        for (int i = 0; i < d.nx; ++i) v[d.index(i, j)] = a;
    }
    return VorticityField(d, std::move(v), std::max(1.0, std::abs(amplitude)));
}

/// Closed-form energy of the pure box vortex ω = δε⁻²𝟙_B𝟙_A (centred at
/// x₂ = ½, channel length 2π), split per wavenumber: E = δ(ℰ₀ + Σ_{k≠0} ℰ_k).
struct SpectralEnergy {
    double delta = 0.0;
    double eps = 0.0;
    double e0 = 0.0;
    /// ℰ_k for k = 1..modes.size() (ℰ₋ₖ = ℰ_k).
    std::vector<double> modes;
    long long kmax = 0;
    /// Σ_{|k| ≤ kmax} E_k; a lower bound for E since every term is nonnegative.
    double head = 0.0;
    /// Upper bound for Σ_{|k| > kmax} E_k.
    double tail_bound = 0.0;
    double energy() const { return head; }
    double energy_upper() const { return head + tail_bound; }
};

namespace detail {

/// E_k for one wavenumber k ≥ 1: (2δ²/(πε³k⁴)) sin²(kε)·B with
/// B = 1 − ((1 − e^{−2x}) + τ(cosh 2x − 1))/(2x), x = kε, τ = 1 − tanh(k/2).
inline double box_mode_energy(double k, double delta, double eps) {
    const double x = k * eps;
    double b;
    if (x < 1e-3) {
        b = x * (1.0 + x * (-2.0 / 3.0 + x * (1.0 / 3.0 + x * (-2.0 / 15.0))));
    } else {
        b = 1.0 + std::expm1(-2.0 * x) / (2.0 * x);
    }
    if (k < 40.0) {
        const double tau = 2.0 / (std::exp(k) + 1.0);
        const double sh = std::sinh(x);
        b -= tau * sh * sh / x;
    }
    const double s = std::sin(x);
    const double k2 = k * k;
    return 2.0 * delta * delta / (kPi * eps * eps * eps * k2 * k2) * s * s * b;
}

/// Chunked, order-fixed sum of a positive series over k = 1..n.
template <class Term>
double ordered_mode_sum(long long n, int threads, Term&& term) {
    constexpr long long chunk = 1 << 16;
    const long long chunks = (n + chunk - 1) / chunk;
    std::vector<double> partial(static_cast<size_t>(chunks), 0.0);
    parallel_for(static_cast<size_t>(chunks), threads, [&](size_t c) {
        const long long lo = static_cast<long long>(c) * chunk + 1;
        const long long hi = std::min(n, lo + chunk - 1);
        Accumulator acc;
        for (long long k = hi; k >= lo; --k) acc.add(term(static_cast<double>(k)));
        partial[c] = acc.value();
    });
    Accumulator acc;
    for (size_t c = partial.size(); c-- > 0;) acc.add(partial[c]);
    return acc.value();
}

} // namespace detail

/// Spectral energy with the frequency sum truncated at max(10/ε, min_kmax).
inline SpectralEnergy box_energy_spectral(double delta, double eps, long long min_kmax = 0, int threads = 1,
                                          size_t keep_modes = 4096) {
    if (!(eps > 0 && eps < 0.5)) throw Error(ErrorCode::Precondition, "box half-width must lie in (0, 1/2)");
    if (!(delta >= 0 && std::isfinite(delta))) throw Error(ErrorCode::Precondition, "delta must be nonnegative");
    SpectralEnergy s;
    s.delta = delta;
    s.eps = eps;
    s.kmax = std::max<long long>(static_cast<long long>(std::ceil(10.0 / eps)), min_kmax);
    const double E0 = delta * delta / kPi * (1.0 - 4.0 * eps / 3.0);
    s.e0 = delta > 0 ? E0 / delta : 0.0;
    const size_t keep = static_cast<size_t>(std::min<long long>(s.kmax, static_cast<long long>(keep_modes)));
    s.modes.resize(keep);
    for (size_t k = 1; k <= keep; ++k)
        s.modes[k - 1] = delta > 0 ? detail::box_mode_energy(static_cast<double>(k), delta, eps) / delta : 0.0;
    const double sum = detail::ordered_mode_sum(s.kmax, threads, [&](double k) { return detail::box_mode_energy(k, delta, eps); });
    s.head = E0 + 2.0 * sum;
    const double K = static_cast<double>(s.kmax);
    s.tail_bound = 4.0 * delta * delta / (3.0 * kPi * eps * eps * eps * K * K * K);
    return s;
}

/// Spectral energy of a grid datum's perturbation; requires a zero base, the
/// box centred at x₂ = ½ and channel length 2π.
inline SpectralEnergy peaked_energy_spectral(const PeakedDatum& p, int threads = 1) {
    for (double v : p.base.values())
        if (v != 0.0) throw Error(ErrorCode::Precondition, "spectral expansion needs a zero background");
    if (p.cy != 0.5 || p.xi.domain().lx != kTwoPi)
        throw Error(ErrorCode::Precondition, "spectral expansion needs the box at x2 = 1/2 on a 2*pi channel");
    return box_energy_spectral(p.delta, p.eps, p.xi.domain().nx / 2, threads);
}

/// Upper bound for the energy of any shear flow in the orbit closure of ω₀:
/// (‖ω₀⁺‖²_{L¹} + ‖ω₀⁻‖²_{L¹})/(16π). The momentum only shifts every
/// competitor's energy by the same amount, so it does not enter.
inline double shear_bound_from_masses(double mass_pos, double mass_neg) {
    return (mass_pos * mass_pos + mass_neg * mass_neg) / (16.0 * kPi);
}

inline std::pair<double, double> sign_masses(const VorticityField& f) {
    Accumulator p, n;
    for (double v : f.values()) {
        if (v > 0) p.add(v);
        if (v < 0) n.add(-v);
    }
    const double a = f.domain().cell_area();
    return {p.value() * a, n.value() * a};
}

inline double max_shear_energy_bound(const VorticityField& omega0, double M0) {
    if (omega0.domain().kind != DomainKind::Channel)
        throw Error(ErrorCode::UnsupportedDomain, "shear bound is defined on the channel");
    if (!std::isfinite(M0)) throw Error(ErrorCode::NonFinite, "momentum must be finite");
    const auto [p, n] = sign_masses(omega0);
    return shear_bound_from_masses(p, n);
}

/// The cruder single-mass form ‖ω₀‖²_{L¹}/(16π).
inline double shear_energy_bound_l1(const VorticityField& omega0) {
    const auto [p, n] = sign_masses(omega0);
    return (p + n) * (p + n) / (16.0 * kPi);
}

namespace detail {

/// Dirichlet k = 0 channel problem on ny strips, matching the channel solver.
inline double strip_energy(const std::vector<double>& p, double lx) {
    const size_t n = p.size();
    const double h = 1.0 / static_cast<double>(n);
    Tridiag t;
    t.lower.assign(n, 1.0 / (h * h));
    t.upper.assign(n, 1.0 / (h * h));
    t.diag.assign(n, -2.0 / (h * h));
    t.diag[0] = t.diag[n - 1] = -3.0 / (h * h);
    t.factor();
    std::vector<double> psi(p);
    t.solve(psi);
    Accumulator acc;
    for (size_t j = 0; j < n; ++j) acc.add(psi[j] * p[j]);
    return -0.5 * acc.value() * h * lx;
}

inline std::vector<double> strip_psi(const std::vector<double>& p) {
    const size_t n = p.size();
    const double h = 1.0 / static_cast<double>(n);
    Tridiag t;
    t.lower.assign(n, 1.0 / (h * h));
    t.upper.assign(n, 1.0 / (h * h));
    t.diag.assign(n, -2.0 / (h * h));
    t.diag[0] = t.diag[n - 1] = -3.0 / (h * h);
    t.factor();
    std::vector<double> psi(p);
    t.solve(psi);
    return psi;
}

} // namespace detail

struct ShearSearchResult {
    double energy = 0.0;
    /// Strip values of the best shear found, one per x₂ row.
    std::vector<double> profile;
    int restarts = 0;
};

/// Vertex-ascent search for high-energy shears in the orbit closure of ω₀.
/// Vertices assign the ny consecutive nx-blocks of the sorted values to
/// rows; each ascent step reassigns blocks by the ordering of −ψ.
inline ShearSearchResult max_shear_energy_heuristic(const VorticityField& omega0, int restarts = 100,
                                                    std::uint64_t seed = 1) {
    const Domain& d = omega0.domain();
    if (d.kind != DomainKind::Channel) throw Error(ErrorCode::UnsupportedDomain, "shear search needs the channel");
    const auto desc = sorted_descending(omega0.values());
    const size_t ny = static_cast<size_t>(d.ny), nx = static_cast<size_t>(d.nx);
    std::vector<double> blocks(ny);
    for (size_t b = 0; b < ny; ++b) {
        Accumulator acc;
        for (size_t q = 0; q < nx; ++q) acc.add(desc[b * nx + q]);
        blocks[b] = acc.value() / static_cast<double>(nx);
    }
    std::mt19937_64 rng(seed);
    ShearSearchResult best;
    best.energy = -std::numeric_limits<double>::infinity();
    for (int r = 0; r < restarts; ++r) {
        std::vector<size_t> assign(ny);
        std::iota(assign.begin(), assign.end(), size_t{0});
        std::shuffle(assign.begin(), assign.end(), rng);
        std::vector<double> p(ny);
        for (size_t j = 0; j < ny; ++j) p[j] = blocks[assign[j]];
        double e = detail::strip_energy(p, d.lx);
        for (int it = 0; it < 1000; ++it) {
            auto psi = detail::strip_psi(p);
            std::vector<size_t> rows(ny);
            std::iota(rows.begin(), rows.end(), size_t{0});
            std::stable_sort(rows.begin(), rows.end(), [&](size_t a, size_t b) { return psi[a] < psi[b]; });
            std::vector<double> q(ny);
            for (size_t k = 0; k < ny; ++k) q[rows[k]] = blocks[k];
            const double eq = detail::strip_energy(q, d.lx);
            if (!(eq > e)) break;
            p = std::move(q);
            e = eq;
        }
        if (e > best.energy) {
            best.energy = e;
            best.profile = p;
        }
    }
    best.restarts = restarts;
    return best;
}

/// Background quantities entering the certificate.
struct BaseSummary {
    std::string name;
    double energy = 0.0;
    double mass_pos = 0.0;
    double mass_neg = 0.0;
    double momentum = 0.0;
    /// Upper bound for E(|ω_b|).
    double abs_energy = 0.0;
    /// max ψ_b, used for the rigorous cross-term bound −∫ψ_bω ≥ −4δ·max ψ_b.
    double psi_max = 0.0;
    /// When set, −∫ψ_bω = 4δ·cross_per_mass exactly (box at x₂ = ½).
    bool cross_exact = false;
    double cross_per_mass = 0.0;
};

inline BaseSummary zero_base() {
    BaseSummary b;
    b.name = "zero";
    b.cross_exact = true;
    return b;
}

/// A·sin(2πx₂): E_b = A²/(8π), ‖ω_b^±‖ = 2|A|, M_b = A, and the box at
/// x₂ = ½ sees no cross term by odd symmetry.
inline BaseSummary kolmogorov_base(double amplitude = 1.0) {
    BaseSummary b;
    b.name = "kolmogorov";
    b.energy = amplitude * amplitude / (8.0 * kPi);
    b.mass_pos = b.mass_neg = 2.0 * std::abs(amplitude);
    b.momentum = amplitude;
    b.abs_energy = amplitude * amplitude / kPi;
    b.psi_max = std::abs(amplitude) / (4.0 * kPi * kPi);
    b.cross_exact = true;
    return b;
}

inline BaseSummary summarize_base(const VorticityField& base) {
    const Domain& d = base.domain();
    if (d.kind != DomainKind::Channel) throw Error(ErrorCode::UnsupportedDomain, "background must live on the channel");
    BaseSummary b;
    b.name = "grid";
    b.energy = energy(base);
    std::tie(b.mass_pos, b.mass_neg) = sign_masses(base);
    b.momentum = momentum(base);
    std::vector<double> a(base.values());
    for (double& x : a) x = std::abs(x);
    b.abs_energy = energy(VorticityField::with_auto_bound(d, a));
    const auto psi = PoissonSolver(d).solve(base.values());
    b.psi_max = std::max(0.0, *std::max_element(psi.begin(), psi.end()));
    return b;
}

struct ExclusionOptions {
    /// Required gap as a fraction of E(ξ).
    double margin = 0.05;
    /// Relative pointwise size of the perturbations covered by the robustness check.
    double robust_rel = 0.01;
    /// The threshold scan stops below this ε.
    double eps_floor = 1e-7;
    /// Relative width of the final threshold bracket.
    double threshold_rel = 1e-3;
    /// Skip the ε-threshold scan (epsilon_threshold stays NaN).
    bool scan_threshold = true;
    int threads = 1;
};

/// Both sides of the certificate inequality at one ε. energy_xi is a lower
/// bound for E(ξ) and bound an upper bound for every feasible shear.
struct ExclusionSides {
    double delta = 0.0;
    double eps = 0.0;
    double energy_omega = 0.0;
    double energy_tail = 0.0;
    double energy_base = 0.0;
    double cross = 0.0;
    double energy_xi = 0.0;
    double mass_pos = 0.0;
    double mass_neg = 0.0;
    double bound = 0.0;
    double l1_bound = 0.0;
    double margin = 0.0;
    bool verdict = false;
};

inline ExclusionSides exclusion_sides(const BaseSummary& b, double delta, double eps, const ExclusionOptions& o = {}) {
    const auto se = box_energy_spectral(delta, eps, 0, o.threads, 0);
    ExclusionSides s;
    s.delta = delta;
    s.eps = eps;
    s.energy_omega = se.head;
    s.energy_tail = se.tail_bound;
    s.energy_base = b.energy;
    s.cross = b.cross_exact ? 4.0 * delta * b.cross_per_mass : -4.0 * delta * b.psi_max;
    s.energy_xi = s.energy_base + s.energy_omega + s.cross;
    s.mass_pos = b.mass_pos + 4.0 * delta;
    s.mass_neg = b.mass_neg;
    s.bound = shear_bound_from_masses(s.mass_pos, s.mass_neg);
    s.l1_bound = (s.mass_pos + s.mass_neg) * (s.mass_pos + s.mass_neg) / (16.0 * kPi);
    s.margin = o.margin * s.energy_xi;
    s.verdict = s.energy_xi > s.bound + s.margin;
    return s;
}

struct ExclusionCertificate {
    std::string base;
    double delta = 0.0;
    double eps = 0.0;
    double energy_xi = 0.0;
    double shear_energy_bound = 0.0;
    double l1_bound = 0.0;
    /// M(ξ), the momentum every competing shear must carry.
    double momentum_match = 0.0;
    double margin = 0.0;
    bool verdict = false;
    /// Largest tested ε with a true verdict (NaN if none above eps_floor).
    double epsilon_threshold = std::numeric_limits<double>::quiet_NaN();
    /// Uniform check over all ξ̃ with |ξ̃ − ξ| ≤ robust_rel·|ξ| pointwise.
    bool robust = false;
    double robust_energy_lower = 0.0;
    double robust_bound = 0.0;
    std::vector<ExclusionSides> scan;
};

namespace detail {

inline void robust_check(ExclusionCertificate& c, double energy_xi, double energy_omega_upper, double abs_base_energy,
                         const ExclusionOptions& o) {
    const double r = o.robust_rel;
    const double drop = r * (std::sqrt(std::max(0.0, energy_omega_upper)) + std::sqrt(std::max(0.0, abs_base_energy)));
    const double root = std::sqrt(std::max(0.0, energy_xi)) - drop;
    c.robust_energy_lower = root > 0 ? root * root : 0.0;
    c.robust_bound = (1.0 + r) * (1.0 + r) * c.shear_energy_bound;
    c.robust = c.verdict && c.robust_energy_lower > c.robust_bound + o.margin * c.robust_energy_lower;
}

} // namespace detail

/// Scans ε = ε₀·2^{−j/2} downwards until the verdict holds, then bisects in
/// log ε. Every evaluated point is appended to `scan`.
inline double epsilon_threshold(const BaseSummary& b, double delta, const ExclusionOptions& o,
                                std::vector<ExclusionSides>* scan = nullptr) {
    auto eval = [&](double e) {
        auto s = exclusion_sides(b, delta, e, o);
        if (scan) scan->push_back(s);
        return s.verdict;
    };
    double hi = std::min(delta, 0.5) * (1.0 - 1e-9);
    if (eval(hi)) return hi;
    double lo = hi;
    bool found = false;
    while (lo > o.eps_floor) {
        hi = lo;
        lo = std::max(o.eps_floor, lo / std::sqrt(2.0));
        if (eval(lo)) {
            found = true;
            break;
        }
        if (lo == o.eps_floor) break;
    }
    if (found)
        while (hi / lo > 1.0 + o.threshold_rel) {
            const double mid = std::sqrt(hi * lo);
            if (eval(mid))
                lo = mid;
            else
                hi = mid;
        }
    if (scan) std::sort(scan->begin(), scan->end(), [](const ExclusionSides& a, const ExclusionSides& c) { return a.eps > c.eps; });
    return found ? lo : std::numeric_limits<double>::quiet_NaN();
}

/// Certificate for the analytic background described by `b`.
inline ExclusionCertificate certify_no_shear(const BaseSummary& b, double delta, double eps,
                                             const ExclusionOptions& o = {}) {
    if (!(eps > 0 && delta > 0)) throw Error(ErrorCode::Precondition, "delta and eps must be positive");
    if (!(eps < delta))
        throw Error(ErrorCode::Precondition, "eps must be smaller than delta (got eps = " + detail::fmt17(eps) +
                                                 ", delta = " + detail::fmt17(delta) + ")");
    const auto s = exclusion_sides(b, delta, eps, o);
    ExclusionCertificate c;
    c.base = b.name;
    c.delta = delta;
    c.eps = eps;
    c.energy_xi = s.energy_xi;
    c.shear_energy_bound = s.bound;
    c.l1_bound = s.l1_bound;
    c.momentum_match = b.momentum - 2.0 * delta;
    c.margin = s.margin;
    c.verdict = s.verdict;
    detail::robust_check(c, s.energy_xi, s.energy_omega + s.energy_tail, b.abs_energy, o);
    if (o.scan_threshold) c.epsilon_threshold = epsilon_threshold(b, delta, o, &c.scan);
    return c;
}

/// Grid certificate for an arbitrary channel field: E(ξ) > bound(ξ) + margin.
inline ExclusionCertificate certify_field(const VorticityField& xi, const ExclusionOptions& o = {}) {
    ExclusionCertificate c;
    c.base = "field";
    c.energy_xi = energy(xi);
    c.shear_energy_bound = max_shear_energy_bound(xi, momentum(xi));
    c.l1_bound = shear_energy_bound_l1(xi);
    c.momentum_match = momentum(xi);
    c.margin = o.margin * c.energy_xi;
    c.verdict = c.energy_xi > c.shear_energy_bound + c.margin;
    return c;
}

/// Grid certificate for a peaked datum plus the ε-threshold scan for its
/// background (box at x₂ = ½ on a 2π channel).
inline ExclusionCertificate certify_no_shear(const PeakedDatum& p, const ExclusionOptions& o = {}) {
    ExclusionCertificate c = certify_field(p.xi, o);
    c.base = "grid";
    c.delta = p.delta;
    c.eps = p.eps;
    std::vector<double> a(p.base.values());
    for (double& x : a) x = std::abs(x);
    const double abs_base = energy(VorticityField::with_auto_bound(p.base.domain(), a));
    detail::robust_check(c, c.energy_xi, energy(p.perturbation()), abs_base, o);
    if (o.scan_threshold && p.cy == 0.5 && p.xi.domain().lx == kTwoPi)
        c.epsilon_threshold = epsilon_threshold(summarize_base(p.base), p.delta, o, &c.scan);
    return c;
}

inline std::string certificate_text(const ExclusionCertificate& c) {
    std::ostringstream os;
    os << "base = " << c.base << "\n"
       << "delta = " << detail::fmt17(c.delta) << "\n"
       << "eps = " << detail::fmt17(c.eps) << "\n"
       << "energy_xi = " << detail::fmt17(c.energy_xi) << "\n"
       << "shear_energy_bound = " << detail::fmt17(c.shear_energy_bound) << "\n"
       << "l1_bound = " << detail::fmt17(c.l1_bound) << "\n"
       << "momentum_match = " << detail::fmt17(c.momentum_match) << "\n"
       << "margin = " << detail::fmt17(c.margin) << "\n"
       << "verdict = " << (c.verdict ? "true" : "false") << "\n"
       << "epsilon_threshold = " << detail::fmt17(c.epsilon_threshold) << "\n"
       << "robust = " << (c.robust ? "true" : "false") << "\n"
       << "robust_energy_lower = " << detail::fmt17(c.robust_energy_lower) << "\n"
       << "robust_bound = " << detail::fmt17(c.robust_bound) << "\n";
    return os.str();
}

inline std::string scan_csv(const ExclusionCertificate& c) {
    std::ostringstream os;
    os << "eps,energy_xi,bound,verdict\n";
    for (const auto& s : c.scan)
        os << detail::fmt17(s.eps) << "," << detail::fmt17(s.energy_xi) << "," << detail::fmt17(s.bound) << ","
           << (s.verdict ? 1 : 0) << "\n";
    return os.str();
}

} // namespace mflab
