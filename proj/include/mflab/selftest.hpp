#pragma once

#include "mflab/config.hpp"
#include "mflab/exclude.hpp"
#include "mflab/minimize.hpp"
#include "mflab/simulate.hpp"
#include "mflab/stathydro.hpp"

#include <functional>
#include <string>
#include <vector>

namespace mflab {

struct SelfCheck {
    std::string name;
    std::function<bool()> run;
};

namespace detail {

inline bool throws_code(ErrorCode c, const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code() == c;
    }
    return false;
}

inline bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

inline VorticityField cos_x(const Domain& d) {
    return VorticityField::sample(d, [](double x, double) { return std::cos(x); });
}

inline VorticityField opposite_patches(const Domain& d) {
    return VorticityField::sample(d, [](double x, double y) { return std::sin(x) + 0.5 * std::sin(y) > 0 ? 1.0 : -1.0; });
}

} // namespace detail

/// Closed-form identity cases for every module.
inline std::vector<SelfCheck> selftest_checks() {
    using detail::near;
    using detail::throws_code;
    const Domain t16 = Domain::torus(16, 16);
    const Domain c16 = Domain::channel(16, 16);
    return {
        {"field: constant has only the k=0 coefficient",
         [=] {
             const auto s = to_spectral(VorticityField::constant(t16, 2.5));
             double off = 0;
             for (size_t k = 1; k < s.coefficients.size(); ++k) off = std::max(off, std::abs(s.coefficients[k]));
             return near(s.coefficients[0].real(), 2.5, 1e-14) && off < 1e-14;
         }},
        {"field: cos x has coefficients of modulus 1/2 at k = (+-1, 0)",
         [=] {
             const auto s = to_spectral(detail::cos_x(t16));
             double off = 0;
             for (size_t k = 0; k < s.coefficients.size(); ++k)
                 if (k != 1 && k != 15) off = std::max(off, std::abs(s.coefficients[k]));
             return near(std::abs(s.at(1, 0)), 0.5, 1e-14) && near(std::abs(s.at(15, 0)), 0.5, 1e-14) && off < 1e-14;
         }},
        {"field: write then read gives identical values",
         [] {
             const auto f = random_datum(Domain::torus(32, 32), 3);
             std::ostringstream os;
             os << field_header(f.domain()) << "\n";
             for (double x : f.values()) detail::write_le_double(os, x);
             return parse_field(os.str()).values() == f.values();
         }},
        {"field: header with nx = 0 is malformed",
         [] { return throws_code(ErrorCode::MalformedHeader, [] { parse_field("MFLAB1 torus 0 4 6.28 6.28\n"); }); }},
        {"field: NaN cell is rejected",
         [] {
             std::ostringstream os;
             os << "MFLAB1 torus 4 4 6.2831853071795862 6.2831853071795862\n";
             for (int k = 0; k < 16; ++k) detail::write_le_double(os, k == 5 ? std::nan("") : 0.0);
             return throws_code(ErrorCode::NonFinite, [&] { parse_field(os.str()); });
         }},
        {"greens: zero vorticity gives zero streamfunction",
         [=] {
             const auto s = solve_stream(VorticityField::zeros(c16));
             return std::all_of(s.psi.begin(), s.psi.end(), [](double x) { return x == 0.0; });
         }},
        {"greens: sin x inverts to -sin x",
         [=] {
             const auto w = VorticityField::sample(t16, [](double x, double) { return std::sin(x); });
             const auto psi = solve_stream(w).psi;
             double e = 0;
             for (size_t k = 0; k < w.size(); ++k) e = std::max(e, std::abs(psi[k] + w[k]));
             return e < 1e-13;
         }},
        {"greens: zero field has zero energy", [=] { return energy(VorticityField::zeros(c16)) == 0.0; }},
        {"greens: unit vorticity on the channel has momentum -pi",
         [=] { return near(momentum(VorticityField::constant(c16, 1.0)), -kPi, 1e-13); }},
        {"greens: zero field has zero angular momentum and circulations",
         [=] {
             const auto d = VorticityField::zeros(Domain::disk(16));
             const auto c = VorticityField::zeros(c16);
             return angular_momentum(d) == 0.0 && circulation(c, 0) == 0.0 && circulation(c, 1) == 0.0;
         }},
        {"rearrange: constant field has a single level",
         [=] {
             const auto p = profile(VorticityField::constant(c16, 0.7));
             return p.levels.size() == 1 && p.levels[0] == 0.7 && near(p.cum_area[0], p.total_area, 1e-13);
         }},
        {"rearrange: two-patch profile",
         [=] {
             const auto f = VorticityField::sample(c16, [](double, double y) { return y < 0.25 ? 3.0 : 1.0; });
             const auto p = profile(f);
             return p.levels == std::vector<double>{3.0, 1.0} && near(p.cum_area[0], kTwoPi * 0.25, 1e-12) &&
                    near(p.cum_area[1], kTwoPi, 1e-12);
         }},
        {"rearrange: a field lies in its own orbit closure",
         [=] {
             const auto f = random_datum(t16, 5);
             const auto m = in_orbit_closure(f, f);
             return m.member && m.worst_margin >= 0 && m.mean_gap == 0.0;
         }},
        {"rearrange: shifted field is not a member",
         [=] {
             const auto f = random_datum(t16, 5);
             const auto m = in_orbit_closure(f + VorticityField::constant(t16, 0.1), f);
             return !m.member && m.mean_gap != 0.0;
         }},
        {"rearrange: a cell permutation is equimeasurable",
         [=] {
             const auto f = random_datum(t16, 7);
             std::vector<double> v(f.values().rbegin(), f.values().rend());
             return equimeasurable(VorticityField(t16, v, f.bound()), f);
         }},
        {"rearrange: a mixed field is not equimeasurable",
         [=] {
             const auto f = random_datum(t16, 7);
             return !equimeasurable(fejer(2, f), f);
         }},
        {"rearrange: quadratic casimir of opposite patches is |M|/2",
         [=] { return near(casimir(detail::opposite_patches(t16), ConvexFunctionSpec::quadratic()), 0.5 * t16.area(), 1e-12); }},
        {"bistoch: identity matrix leaves the field unchanged",
         [] {
             const Domain d = Domain::channel(4, 4);
             std::vector<double> id(256, 0.0);
             for (size_t i = 0; i < 16; ++i) id[i * 17] = 1.0;
             const auto f = random_datum(Domain::torus(4, 4), 2, 1);
             const auto g = VorticityField(d, f.values(), f.bound());
             return apply(BistochasticMatrix(16, id), g).values() == g.values();
         }},
        {"bistoch: identity decomposes into one permutation",
         [] {
             std::vector<double> id(16, 0.0);
             for (size_t i = 0; i < 4; ++i) id[i * 5] = 1.0;
             const auto b = birkhoff(BistochasticMatrix(4, id));
             return b.weights.size() == 1 && near(b.weights[0], 1.0, 1e-15);
         }},
        {"bistoch: Fejer leaves constants unchanged",
         [=] {
             const auto f = VorticityField::constant(t16, 0.3);
             return detail::sup_diff(fejer(3, f).values(), f.values()) < 1e-15;
         }},
        {"bistoch: swap with eps = 0 is the identity, eps = 1 a rearrangement",
         [=] {
             const auto f = random_datum(t16, 9);
             const std::vector<size_t> q1{0, 1, 2}, q2{100, 101, 102};
             return swap_mix(q1, q2, 0.0, f).values() == f.values() && equimeasurable(swap_mix(q1, q2, 1.0, f), f);
         }},
        {"minimize: constant datum is returned unchanged",
         [] {
             const auto w = VorticityField::constant(Domain::channel(8, 8), 0.5);
             const auto r = minimize_casimir(w, ConvexFunctionSpec::quadratic(), false);
             return r.omega_star.values() == w.values() && r.residuals.energy_gap == 0.0;
         }},
        {"minimize: tanh(psi) is already monotone",
         [=] {
             const auto psi = random_datum(t16, 4);
             std::vector<double> w(psi.size());
             for (size_t k = 0; k < w.size(); ++k) w[k] = std::tanh(psi[k]);
             const auto m = monotone_fit(VorticityField::with_auto_bound(t16, w), psi);
             return m.isotonic_residual <= 1e-10 && m.direction == MonotoneFitReport::Direction::Increasing;
         }},
        {"exclude: zero base gives a box of integral 4 delta",
         [] {
             const auto p = build_peaked(VorticityField::zeros(Domain::channel(256, 64)), 0.2, 1.0 / 8);
             return near(p.xi.integral(), 0.8, 1e-12);
         }},
        {"exclude: eps = delta is a precondition error",
         [] { return throws_code(ErrorCode::Precondition, [] { certify_no_shear(kolmogorov_base(), 0.1, 0.1); }); }},
        {"exclude: zero datum has shear bound 0",
         [=] { return max_shear_energy_bound(VorticityField::zeros(c16), 0.0) == 0.0; }},
        {"exclude: the Kolmogorov shear bound covers its own energy",
         [] {
             const auto k = kolmogorov_field(Domain::channel(32, 64));
             return max_shear_energy_bound(k, momentum(k)) >= energy(k);
         }},
        {"exclude: pure shear is not excluded",
         [] { return !certify_field(kolmogorov_field(Domain::channel(32, 64))).verdict; }},
        {"stathydro: selective decay eigenvalue is near pi^2",
         [] {
             const auto w = VorticityField::sample(Domain::channel(8, 128), [](double, double y) { return std::sin(kPi * y); });
             return near(selective_decay(w).eigenvalue, kPi * kPi, 0.005 * kPi * kPi);
         }},
        {"stathydro: zero datum decays to zero",
         [] { return selective_decay(VorticityField::zeros(Domain::channel(8, 32))).omega_bar.sup_norm() == 0.0; }},
        {"stathydro: Liouville at beta = 0 is uniform",
         [] {
             const auto s = liouville_solve(VorticityField::constant(Domain::disk(32), 1.0), 0.0);
             return s.omega_bar.max() - s.omega_bar.min() < 1e-13;
         }},
        {"stathydro: sinh-Poisson at beta = 0 is trivial",
         [=] { return sinh_poisson_solve(detail::cos_x(t16), 0.0).omega_bar.sup_norm() == 0.0; }},
        {"stathydro: MRS with one level reproduces the datum",
         [] {
             const auto d = mrs_coarse_grain(VorticityField::constant(Domain::torus(8, 8), 0.3), 1.0);
             return d.level_count() == 1 && d.omega_bar.min() == 0.3 && d.omega_bar.max() == 0.3;
         }},
        {"stathydro: MRS at beta = 0 gives area fractions",
         [=] {
             const auto d = mrs_coarse_grain(detail::opposite_patches(t16), 0.0);
             return near(d.prob(0, 0), 0.5, 1e-12) && near(d.prob(77, 1), 0.5, 1e-12) && d.omega_bar.sup_norm() < 1e-12;
         }},
        {"simulate: shear cos y is steady",
         [] {
             const auto w = VorticityField::sample(Domain::torus(32, 32), [](double, double y) { return std::cos(y); });
             EulerSimulator sim(w);
             for (int k = 0; k < 10; ++k) sim.step(0.1);
             return detail::sup_diff(sim.omega().values(), w.values()) < 1e-10;
         }},
        {"simulate: cos x is steady",
         [] {
             const auto w = detail::cos_x(Domain::torus(32, 32));
             EulerSimulator sim(w);
             for (int k = 0; k < 10; ++k) sim.step(0.1);
             return detail::sup_diff(sim.omega().values(), w.values()) < 1e-10;
         }},
        {"simulate: zero-length run has one snapshot",
         [] {
             SimConfig c;
             c.domain = Domain::torus(16, 16);
             c.t_end = 0;
             return run(c, random_datum(c.domain, 1, 3)).snapshots.size() == 1;
         }},
        {"simulate: probe on a steady datum is a member",
         [] {
             SimConfig c;
             c.domain = Domain::torus(32, 32);
             c.t_end = 1;
             c.dt = 0.1;
             c.record_every = 1;
             const auto p = omega_limit_probe(run(c, detail::cos_x(c.domain)), 0.5);
             return p.membership.member;
         }},
        {"cli: empty config gives defaults",
         [] {
             const auto c = parse_config("", {ConfigKey::real("time.dt", 0.01, 0, 1)});
             return c.real("time.dt") == 0.01 && !c.is_explicit("time.dt");
         }},
        {"cli: duplicate key is rejected",
         [] {
             return throws_code(ErrorCode::Config, [] {
                 parse_config("[time]\ndt = 0.1\ndt = 0.2\n", {ConfigKey::real("time.dt", 0.01, 0, 1)});
             });
         }},
        {"cli: out-of-range key is rejected",
         [] {
             return throws_code(ErrorCode::Config,
                                [] { parse_config("[time]\ndt = 5\n", {ConfigKey::real("time.dt", 0.01, 0, 1)}); });
         }},
    };
}

} // namespace mflab
