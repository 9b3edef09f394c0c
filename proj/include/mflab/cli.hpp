#pragma once

#include "mflab/config.hpp"
#include "mflab/exclude.hpp"
#include "mflab/manifest.hpp"
#include "mflab/minimize.hpp"
#include "mflab/selftest.hpp"
#include "mflab/simulate.hpp"
#include "mflab/stathydro.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <ostream>

namespace mflab::cli {

/// Exit codes of `dispatch`.
inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitUsage = 2;

/// MFLAB_THREADS wins over the requested count; 0 means all cores.
inline int resolve_threads(int requested) {
    if (const char* env = std::getenv("MFLAB_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return requested > 0 ? requested : default_threads();
}

namespace detail {

using mflab::detail::fmt17;

inline std::string kv(const std::string& k, double v) { return k + " = " + fmt17(v) + "\n"; }
inline std::string kv(const std::string& k, const std::string& v) { return k + " = " + v + "\n"; }
inline std::string kv(const std::string& k, bool v) { return k + " = " + (v ? "true" : "false") + "\n"; }
inline std::string kv(const std::string& k, long long v) { return k + " = " + std::to_string(v) + "\n"; }
inline std::string kv(const std::string& k, int v) { return kv(k, static_cast<long long>(v)); }
inline std::string kv(const std::string& k, size_t v) { return kv(k, static_cast<long long>(v)); }

/// Command context shared by all subcommands.
struct Run {
    std::vector<std::string> argv;
    std::ostream& out;
    std::ostream& err;
    RunManifest manifest;

    void input(const std::string& path) { manifest.input_digests.push_back({path, sha256_file(path)}); }
    void config(const std::string& canonical) {
        manifest.config_text = canonical;
        manifest.config_hash = sha256_hex(canonical);
    }
};

inline std::string gnuplot_stub(const std::string& csv, const std::string& title, int xcol, int ycol,
                                 const std::string& style = "points pt 7 ps 0.3") {
    return "# gnuplot -p " + csv.substr(0, csv.size() - 4) + ".gp\nset datafile separator ','\nset key off\nset title '" +
           title + "'\nplot '" + csv + "' every ::1 using " + std::to_string(xcol) + ":" + std::to_string(ycol) +
           " with " + style + "\n";
}

inline std::string scatter_csv(const VorticityField& psi, const VorticityField& omega) {
    std::string s = "psi,omega\n";
    for (size_t k = 0; k < omega.size(); ++k) s += fmt17(psi[k]) + "," + fmt17(omega[k]) + "\n";
    return s;
}

inline VorticityField two_patches(int n) {
    return VorticityField::sample(Domain::torus(n, n),
                                  [](double x, double y) { return std::sin(x) + 0.5 * std::sin(y) > 0 ? 1.0 : -1.0; });
}

inline VorticityField flat_shear(int n) {
    return VorticityField::sample(Domain::channel(n, n), [](double, double y) { return y > 0.25 && y < 0.75 ? -1.0 : 0.0; });
}

inline VorticityField two_level_disk(int n) {
    return VorticityField::sample(Domain::disk(n), [](double, double r) { return r < 0.5 ? 2.0 : 0.5; });
}

inline VorticityField vortex_pair(const Domain& d) {
    return VorticityField::sample(d, [&](double x, double y) {
        const double cx = d.lx / 2, cy = d.ly / 2;
        auto g = [&](double a) { return std::exp(-((x - a) * (x - a) + (y - cy) * (y - cy)) / 0.3); };
        return g(cx - 0.95) - g(cx + 0.95);
    });
}

inline VorticityField ellipse(const Domain& d) {
    return VorticityField::sample(d, [&](double x, double y) {
        const double cx = d.lx / 2, cy = d.ly / 2;
        return std::exp(-(x - cx) * (x - cx) / 4 - 2 * (y - cy) * (y - cy));
    });
}

inline Domain make_domain(const std::string& kind, int nx, int ny, double lx, double ly) {
    if (kind == "torus") return Domain::torus(nx, ny, lx, ly);
    if (kind == "channel") return Domain::channel(nx, ny, lx);
    return Domain::disk(ny, ly);
}

/// Named built-in data used by `fields --generate` and as model defaults.
inline VorticityField generate(const std::string& kind, const Domain& d, std::uint64_t seed, double amplitude,
                               double delta, double eps) {
    auto need = [&](DomainKind k, const char* what) {
        if (d.kind != k) throw Error(ErrorCode::UnsupportedDomain, std::string(kind) + " needs the " + what + " domain");
    };
    if (kind == "cos") {
        need(DomainKind::Torus, "torus");
        return VorticityField::sample(d, [&](double x, double) { return amplitude * std::cos(kTwoPi * x / d.lx); });
    }
    if (kind == "shear") {
        need(DomainKind::Torus, "torus");
        return VorticityField::sample(d, [&](double, double y) { return amplitude * std::cos(kTwoPi * y / d.ly); });
    }
    if (kind == "smooth-random") return random_datum(d, seed);
    if (kind == "random") {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(-amplitude, amplitude);
        std::vector<double> v(d.cells());
        for (double& x : v) x = u(rng);
        if (d.kind == DomainKind::Torus) {
            const double m = stable_sum(v.begin(), v.end()) / static_cast<double>(v.size());
            for (double& x : v) x -= m;
        }
        return VorticityField::with_auto_bound(d, std::move(v));
    }
    if (kind == "patches") {
        need(DomainKind::Torus, "torus");
        return VorticityField::sample(d, [&](double x, double y) {
            return std::sin(kTwoPi * x / d.lx) + 0.5 * std::sin(kTwoPi * y / d.ly) > 0 ? amplitude : -amplitude;
        });
    }
    if (kind == "vortex-pair") {
        need(DomainKind::Torus, "torus");
        return amplitude * vortex_pair(d);
    }
    if (kind == "ellipse") {
        need(DomainKind::Torus, "torus");
        return amplitude * ellipse(d);
    }
    if (kind == "kolmogorov") {
        need(DomainKind::Channel, "channel");
        return kolmogorov_field(d, amplitude);
    }
    if (kind == "flat-shear") {
        need(DomainKind::Channel, "channel");
        return VorticityField::sample(d, [&](double, double y) { return y > 0.25 && y < 0.75 ? -amplitude : 0.0; });
    }
    if (kind == "peaked") {
        need(DomainKind::Channel, "channel");
        return build_peaked(kolmogorov_field(d, amplitude), delta, eps).xi;
    }
    if (kind == "uniform") {
        need(DomainKind::DiskRadial, "disk");
        return VorticityField::constant(d, amplitude / d.area());
    }
    if (kind == "two-level") {
        need(DomainKind::DiskRadial, "disk");
        return VorticityField::sample(d, [&](double, double r) { return r < 0.5 * d.ly ? 2.0 * amplitude : 0.5 * amplitude; });
    }
    throw Error(ErrorCode::Precondition, "unknown field kind '" + kind + "'");
}

inline const std::vector<std::string>& generator_kinds() {
    static const std::vector<std::string> k{"cos",       "shear",      "smooth-random", "random", "patches",
                                            "vortex-pair", "ellipse",  "kolmogorov",    "flat-shear",
                                            "peaked",    "uniform",    "two-level"};
    return k;
}

inline std::string field_info(const VorticityField& f) {
    const Domain& d = f.domain();
    std::string s;
    s += kv("kind", std::string(kind_token(d.kind)));
    s += kv("nx", d.nx);
    s += kv("ny", d.ny);
    s += kv("lx", d.lx);
    s += kv("ly", d.ly);
    s += kv("integral", f.integral());
    s += kv("mean", f.mean());
    s += kv("min", f.min());
    s += kv("max", f.max());
    s += kv("l2", f.l2());
    s += kv("enstrophy", 0.5 * f.l2() * f.l2());
    const bool torus_nonzero = d.kind == DomainKind::Torus && std::abs(f.mean()) > 1e-12 * std::max(1.0, f.sup_norm());
    if (!torus_nonzero) s += kv("energy", energy(f));
    if (d.kind != DomainKind::DiskRadial) s += kv("momentum", momentum(f));
    if (d.kind == DomainKind::DiskRadial) s += kv("angular_momentum", angular_momentum(f));
    if (d.kind == DomainKind::Channel) {
        s += kv("circulation_bottom", circulation(f, 0));
        s += kv("circulation_top", circulation(f, 1));
    }
    return s;
}

} // namespace detail

/// Schema of `mflab simulate --config`.
inline ConfigSchema simulate_schema() {
    const double big = 1e6;
    return {
        ConfigKey::integer("threads", 0, 0, 1024, "worker threads, 0 = all cores (MFLAB_THREADS overrides)"),
        ConfigKey::integer("domain.nx", 64, 8, 4096, "grid points in x1"),
        ConfigKey::integer("domain.ny", 64, 8, 4096, "grid points in x2"),
        ConfigKey::real("domain.lx", kTwoPi, 1e-6, big, "period in x1"),
        ConfigKey::real("domain.ly", kTwoPi, 1e-6, big, "period in x2"),
        ConfigKey::real("time.dt", 0.01, 1e-9, 10.0, "base time step"),
        ConfigKey::real("time.t_end", 1.0, 0.0, big, "final time"),
        ConfigKey::integer("time.record_every", 10, 1, 1000000000, "steps between snapshots"),
        ConfigKey::string("truncation.kind", "fejer", {"fejer", "two-thirds"}),
        ConfigKey::integer("truncation.fejer_n", 0, 0, 1024, "Fejér cutoff, 0 = n/4"),
        ConfigKey::real("flow.cfl", 0.5, 1e-3, 10.0, "CFL number enforced by dt halving"),
        ConfigKey::real("flow.mean_u1", 0.0, -1e3, 1e3, "harmonic velocity component"),
        ConfigKey::real("flow.mean_u2", 0.0, -1e3, 1e3, "harmonic velocity component"),
        ConfigKey::string("initial.kind", "smooth-random",
                          {"smooth-random", "cos", "shear", "vortex-pair", "ellipse", "patches", "file"}),
        ConfigKey::string("initial.path", "", {}, "field file when kind = file"),
        ConfigKey::integer("initial.seed", 1, 0, 9007199254740992.0),
        ConfigKey::real("initial.amplitude", 1.0, -big, big),
        ConfigKey::string("output.snapshots", "all", {"all", "last", "none"}),
        ConfigKey::real("output.probe_window", 0.0, 0.0, big, "time window of the omega-limit probe, 0 = off"),
    };
}

namespace detail {

inline int cmd_rearrange(Run& r, const std::string& input, const std::string& against, double tol,
                         const std::string& out) {
    r.input(input);
    r.input(against);
    const auto a = read_field(input), b = read_field(against);
    const auto m = in_orbit_closure(a, b, tol);
    const double used_tol = tol < 0 ? default_membership_tol(b) : tol;
    std::string rep;
    rep += kv("member", m.member);
    rep += kv("worst_level", m.worst_level);
    rep += kv("worst_margin", m.worst_margin);
    rep += kv("mean_gap", m.mean_gap);
    rep += kv("tol", used_tol);
    rep += kv("equimeasurable", equimeasurable(a, b));
    r.out << rep;
    r.config(kv("tol", tol));
    if (!out.empty()) {
        OutputDir dir(out);
        dir.text("report.txt", rep);
        dir.finish(r.manifest, "orbit-closure membership of " + input + " against " + against + "\n" + rep);
    }
    return kExitOk;
}

inline ConvexFunctionSpec casimir_from_name(const std::string& name, double p) {
    if (name == "quadratic") return ConvexFunctionSpec::quadratic();
    if (name == "power") return ConvexFunctionSpec::power(p);
    if (name == "entropy") return ConvexFunctionSpec::entropy();
    if (name == "neg-entropy") return ConvexFunctionSpec::neg_entropy_boltzmann();
    if (name == "exp") return ConvexFunctionSpec::exponential();
    throw Error(ErrorCode::Precondition, "unknown casimir '" + name + "'");
}

inline int cmd_minimize(Run& r, const std::string& input, const std::string& casimir, double p, bool fix_momentum,
                        std::uint64_t seed, int starts, int probe, int threads, const std::string& out) {
    r.input(input);
    const auto w0 = read_field(input);
    MinimizeOptions o;
    o.seed = seed;
    o.multi_starts = starts;
    o.threads = threads;
    const auto f = casimir_from_name(casimir, p);
    std::string cfg = kv("casimir", casimir) + kv("p", p) + kv("fix_momentum", fix_momentum) +
                      kv("seed", static_cast<long long>(seed)) + kv("multi_starts", starts) + kv("probe", probe);
    r.config(cfg);
    r.manifest.seed = seed;
    const auto res = minimize_casimir(w0, f, fix_momentum, o);
    std::string rep;
    rep += kv("casimir", f.name());
    rep += kv("regime", res.regime);
    rep += kv("f_value", res.f_value);
    rep += kv("f_value0", res.f_value0);
    rep += kv("energy0", res.energy0);
    rep += kv("beta", res.beta);
    rep += kv("gamma", res.gamma);
    if (fix_momentum) rep += kv("eta", res.eta);
    rep += kv("iterations", res.iterations);
    rep += kv("starts", res.starts);
    rep += kv("residual.energy_gap", res.residuals.energy_gap);
    rep += kv("residual.mean_gap", res.residuals.mean_gap);
    rep += kv("residual.momentum_gap", res.residuals.momentum_gap);
    rep += kv("residual.stationarity", res.residuals.stationarity);
    rep += kv("residual.isotonic", res.residuals.isotonic);
    const auto mem = in_orbit_closure(res.omega_star, w0);
    rep += kv("member", mem.member);
    rep += kv("worst_margin", mem.worst_margin);
    std::string lambda_table = "level,lambda,slack\n";
    try {
        const auto k = kkt_report(res, w0);
        rep += kv("kkt.mu0", k.mu0);
        rep += kv("kkt.mu1", k.mu1);
        rep += kv("kkt.fit_residual", k.fit_residual);
        rep += kv("kkt.max_bracket_violation", k.max_bracket_violation);
        for (size_t i = 0; i < k.levels.size(); ++i)
            lambda_table += fmt17(k.levels[i]) + "," + fmt17(k.lambda[i]) + "," + fmt17(k.slack[i]) + "\n";
    } catch (const Error& e) {
        rep += kv("kkt", std::string("unavailable (") + e.what() + ")");
    }
    if (probe > 0) {
        const auto pr = minimality_probe(res, w0, probe, seed + 1);
        rep += kv("probe.accepted", pr.accepted);
        rep += kv("probe.violations", pr.violations);
        rep += kv("probe.worst_gap", pr.worst_gap);
    }
    OutputDir dir(out);
    dir.field("omega_star.fld", res.omega_star);
    dir.field("psi_star.fld", res.psi_star.psi_field());
    dir.text("report.txt", rep);
    dir.text("lambda.csv", lambda_table);
    dir.text("scatter.csv", scatter_csv(res.psi_star.psi_field(), res.omega_star));
    dir.text("scatter.gp", gnuplot_stub("scatter.csv", "omega* against psi*", 1, 2));
    dir.finish(r.manifest, "minimal flow for " + input + "\n" + rep);
    r.out << rep;
    return kExitOk;
}

inline int cmd_exclude(Run& r, const std::string& base, double amplitude, double delta, double eps, double margin,
                       const std::string& input, int threads, const std::string& out) {
    ExclusionOptions o;
    o.margin = margin;
    o.threads = threads;
    ExclusionCertificate c;
    std::string cfg = kv("base", base) + kv("amplitude", amplitude) + kv("delta", delta) + kv("eps", eps) +
                      kv("margin", margin);
    if (!input.empty()) {
        r.input(input);
        cfg += kv("input", input);
        c = certify_field(read_field(input), o);
    } else if (base == "kolmogorov") {
        c = certify_no_shear(kolmogorov_base(amplitude), delta, eps, o);
    } else if (base == "zero") {
        c = certify_no_shear(zero_base(), delta, eps, o);
    } else {
        throw Error(ErrorCode::Precondition, "unknown base '" + base + "'");
    }
    r.config(cfg);
    const auto text = certificate_text(c);
    OutputDir dir(out);
    dir.text("certificate.txt", text);
    dir.text("scan.csv", scan_csv(c));
    dir.text("scan.gp", "set datafile separator ','\nset logscale x\nset xlabel 'eps'\n"
                        "plot 'scan.csv' every ::1 using 1:2 with linespoints title 'E(xi)', \\\n"
                        "     'scan.csv' every ::1 using 1:3 with lines title 'shear bound'\n");
    dir.finish(r.manifest, "shear-exclusion certificate\n" + text);
    r.out << text;
    return kExitOk;
}

inline MeanFieldModel model_from_name(const std::string& m) {
    if (m == "selective-decay") return MeanFieldModel::SelectiveDecay;
    if (m == "liouville") return MeanFieldModel::Liouville;
    if (m == "sinh-poisson") return MeanFieldModel::SinhPoisson;
    if (m == "mrs") return MeanFieldModel::MRS;
    throw Error(ErrorCode::Precondition, "unknown model '" + m + "'");
}

inline VorticityField default_datum(MeanFieldModel m, int n) {
    switch (m) {
    case MeanFieldModel::SelectiveDecay:
        return VorticityField::sample(Domain::channel(n, n), [](double x, double y) {
            return std::sin(kPi * y) + 0.5 * std::cos(x) * std::sin(2 * kPi * y);
        });
    case MeanFieldModel::Liouville: return VorticityField::constant(Domain::disk(n), 1.0 / kPi);
    case MeanFieldModel::SinhPoisson: return two_patches(n);
    case MeanFieldModel::MRS: return two_patches(n);
    }
    throw Error(ErrorCode::Precondition, "unknown model");
}

inline double default_beta(MeanFieldModel m) {
    switch (m) {
    case MeanFieldModel::Liouville: return 4 * kPi;
    case MeanFieldModel::SinhPoisson: return -4.0;
    case MeanFieldModel::MRS: return 1.0;
    default: return 0.0;
    }
}

inline std::string mean_field_report(const MeanFieldSolution& s) {
    std::string rep;
    rep += kv("model", std::string(model_name(s.model)));
    rep += kv("beta", s.beta);
    rep += kv("z_norm", s.z_norm);
    if (!std::isnan(s.eigenvalue)) rep += kv("eigenvalue", s.eigenvalue);
    rep += kv("energy", s.energy);
    rep += kv("target_energy", s.target_energy);
    rep += kv("residual", s.residual);
    rep += kv("iterations", s.iterations);
    rep += kv("steady_state_residual", steady_state_residual(s.omega_bar, s.psi_bar));
    return rep;
}

inline int cmd_stathydro(Run& r, const std::string& model_name_s, double beta, const std::string& target,
                         const std::string& input, int n, const std::string& norm, const std::vector<double>& scan,
                         int threads, const std::string& out) {
    const auto model = model_from_name(model_name_s);
    VorticityField w0 = VorticityField::zeros(Domain::torus(4, 4));
    if (!input.empty()) {
        r.input(input);
        w0 = read_field(input);
    } else {
        w0 = default_datum(model, n);
    }
    r.config(kv("model", model_name_s) + kv("beta", beta) + kv("target_energy", target) + kv("input", input) +
             kv("n", n) + kv("norm", norm));
    std::optional<double> target_energy;
    if (target == "auto") {
        target_energy = energy(w0);
    } else if (target != "none") {
        double t = 0;
        if (!mflab::detail::parse_double(target, t) || !(t > 0))
            throw Error(ErrorCode::Precondition, "--target-energy must be 'none', 'auto' or a positive number");
        target_energy = t;
    }
    OutputDir dir(out);
    std::string rep;
    VorticityField psi = w0, omega = w0;
    if (model == MeanFieldModel::MRS) {
        if (target_energy) throw Error(ErrorCode::Precondition, "energy matching is offered for liouville and sinh-poisson");
        const auto d = mrs_coarse_grain(w0, beta);
        psi = d.psi_bar;
        omega = d.omega_bar;
        rep += kv("model", std::string("MRS"));
        rep += kv("beta", d.beta);
        rep += kv("levels", d.level_count());
        rep += kv("energy", d.energy);
        rep += kv("residual", d.residual);
        rep += kv("iterations", d.iterations);
        rep += kv("sinkhorn_sweeps", d.sinkhorn_sweeps);
        rep += kv("normalization_error", d.normalization_error());
        rep += kv("marginal_error", d.marginal_error());
        rep += kv("min_variance", d.min_variance());
        rep += kv("isotonic_residual", monotone_fit(d.omega_bar, d.psi_bar).isotonic_residual);
        rep += kv("steady_state_residual", steady_state_residual(d.omega_bar, d.psi_bar));
        std::string lv = "level,log_g,area\n";
        for (size_t i = 0; i < d.level_count(); ++i)
            lv += fmt17(d.levels[i]) + "," + fmt17(d.log_g[i]) + "," + fmt17(d.level_area[i]) + "\n";
        dir.text("levels.csv", lv);
    } else {
        MeanFieldSolution s;
        if (model == MeanFieldModel::SelectiveDecay) {
            if (target_energy) throw Error(ErrorCode::Precondition, "selective decay keeps the datum energy by construction");
            s = selective_decay(w0, norm == "psi-l2" ? SelectiveDecayNorm::PsiL2 : SelectiveDecayNorm::Energy);
        } else if (model == MeanFieldModel::Liouville) {
            s = target_energy ? liouville_match_energy(w0, *target_energy) : liouville_solve(w0, beta);
        } else {
            s = target_energy ? sinh_poisson_match_energy(w0, *target_energy) : sinh_poisson_solve(w0, beta);
        }
        psi = s.psi_bar;
        omega = s.omega_bar;
        rep = mean_field_report(s);
    }
    if (!scan.empty()) {
        if (model == MeanFieldModel::SelectiveDecay) throw Error(ErrorCode::Precondition, "selective decay has no beta");
        const auto rows = beta_scan(model, w0, scan, threads);
        std::string csv = "beta,energy,residual\n";
        for (const auto& s : rows) csv += fmt17(s.beta) + "," + fmt17(s.energy) + "," + fmt17(s.residual) + "\n";
        dir.text("scan.csv", csv);
        dir.text("scan.gp", gnuplot_stub("scan.csv", "energy against beta", 1, 2, "linespoints"));
    }
    dir.field("psi_bar.fld", psi);
    dir.field("omega_bar.fld", omega);
    dir.text("report.txt", rep);
    dir.text("scatter.csv", scatter_csv(psi, omega));
    dir.text("scatter.gp", gnuplot_stub("scatter.csv", "omega_bar against psi_bar", 1, 2));
    if (w0.domain().kind == DomainKind::DiskRadial) {
        std::string prof = "r,omega,psi\n";
        for (int j = 0; j < w0.domain().ny; ++j)
            prof += fmt17(w0.domain().x2(j)) + "," + fmt17(omega[j]) + "," + fmt17(psi[j]) + "\n";
        dir.text("profile.csv", prof);
        dir.text("profile.gp", gnuplot_stub("profile.csv", "radial profile", 1, 2, "lines"));
    }
    dir.finish(r.manifest, "mean-field solution\n" + rep);
    r.out << rep;
    return kExitOk;
}

inline int cmd_simulate(Run& r, const std::string& config_path, const std::string& input, const std::string& out) {
    const auto schema = simulate_schema();
    Config cfg = config_path.empty() ? parse_config("", schema) : load_config(config_path, schema);
    if (!config_path.empty()) r.input(config_path);
    SimConfig sc;
    sc.domain = Domain::torus(static_cast<int>(cfg.integer("domain.nx")), static_cast<int>(cfg.integer("domain.ny")),
                              cfg.real("domain.lx"), cfg.real("domain.ly"));
    sc.dt = cfg.real("time.dt");
    sc.t_end = cfg.real("time.t_end");
    sc.record_every = static_cast<int>(cfg.integer("time.record_every"));
    sc.truncation = cfg.str("truncation.kind") == "fejer" ? Truncation::Fejer : Truncation::TwoThirds;
    sc.fejer_N = static_cast<int>(cfg.integer("truncation.fejer_n"));
    sc.cfl = cfg.real("flow.cfl");
    sc.mean_u1 = cfg.real("flow.mean_u1");
    sc.mean_u2 = cfg.real("flow.mean_u2");
    sc.seed = static_cast<std::uint64_t>(cfg.integer("initial.seed"));
    r.manifest.seed = sc.seed;
    r.manifest.threads = resolve_threads(static_cast<int>(cfg.integer("threads")));
    r.config(cfg.canonical() + kv("input", input));

    std::string kind = cfg.str("initial.kind");
    std::string path = !input.empty() ? input : cfg.str("initial.path");
    VorticityField w0 = VorticityField::zeros(sc.domain);
    if (!input.empty() || kind == "file") {
        if (path.empty()) throw Error(ErrorCode::Config, "initial.kind = file needs initial.path or --input");
        r.input(path);
        w0 = read_field(path);
        require_same_domain(sc.domain, w0.domain());
    } else {
        w0 = generate(kind, sc.domain, sc.seed, cfg.real("initial.amplitude"), 0.1, 0.03125);
        if (kind == "smooth-random" && cfg.real("initial.amplitude") != 1.0) w0 = cfg.real("initial.amplitude") * w0;
    }

    const auto tr = run(sc, w0);
    OutputDir dir(out);
    const std::string snaps = cfg.str("output.snapshots");
    for (size_t k = 0; k < tr.snapshots.size(); ++k) {
        if (snaps == "none" || (snaps == "last" && k + 1 != tr.snapshots.size())) continue;
        char name[32];
        std::snprintf(name, sizeof name, "snap_%05zu.fld", k);
        dir.field(name, tr.snapshots[k].omega);
    }
    write_diagnostics_csv(tr, dir.path("diagnostics.csv"));
    dir.add("diagnostics.csv");
    dir.text("diagnostics.gp", "set datafile separator ','\nset xlabel 't'\n"
                               "plot 'diagnostics.csv' every ::1 using 1:2 with lines title 'energy', \\\n"
                               "     'diagnostics.csv' every ::1 using 1:3 with lines title 'enstrophy'\n");
    dir.text("config_effective.toml", cfg.canonical());
    const auto& g0 = tr.diagnostics.front();
    const auto& g1 = tr.diagnostics.back();
    std::string rep;
    rep += kv("steps", tr.steps);
    rep += kv("substeps", tr.substeps);
    rep += kv("halved_steps", tr.halved_steps);
    rep += kv("t_end", g1.t);
    rep += kv("energy0", g0.energy);
    rep += kv("energy_rel_drift", g0.energy > 0 ? std::abs(g1.energy - g0.energy) / g0.energy : 0.0);
    rep += kv("mean_drift", std::abs(g1.mean - g0.mean));
    rep += kv("enstrophy0", g0.enstrophy);
    rep += kv("enstrophy1", g1.enstrophy);
    const double window = cfg.real("output.probe_window");
    if (window > 0) {
        const auto p = omega_limit_probe(tr, window, sc.truncation == Truncation::Fejer ? sc.fejer_N : 0);
        dir.field("probe_candidate.fld", p.candidate);
        rep += kv("probe.snapshots", p.snapshots_used);
        rep += kv("probe.member", p.membership.member);
        rep += kv("probe.worst_margin", p.membership.worst_margin);
        rep += kv("probe.isotonic_residual", p.isotonic_residual);
        rep += kv("probe.enstrophy_datum", p.enstrophy_datum);
        rep += kv("probe.enstrophy_candidate", p.enstrophy_candidate);
        rep += kv("probe.distance_to_last", p.distance_to_last);
    }
    dir.text("report.txt", rep);
    dir.finish(r.manifest, "Euler simulation\n" + rep);
    r.out << rep;
    return kExitOk;
}

inline int cmd_fields(Run& r, const std::string& input, const std::string& gen, const std::string& domain, int nx,
                      int ny, double lx, double ly, std::uint64_t seed, double amplitude, double delta, double eps,
                      const std::string& out) {
    if (!input.empty()) {
        r.input(input);
        const auto f = read_field(input);
        const auto info = field_info(f);
        r.out << info;
        if (!out.empty()) {
            OutputDir dir(out);
            dir.text("info.txt", info);
            write_csv(f, dir.path("field.csv"));
            dir.add("field.csv");
            r.config(kv("input", input));
            dir.finish(r.manifest, "field summary for " + input + "\n" + info);
        }
        return kExitOk;
    }
    if (gen.empty()) throw CLI::RequiredError("--input or --generate");
    if (out.empty()) throw CLI::RequiredError("--out");
    const Domain d = make_domain(domain, nx, ny, lx, ly);
    const auto f = generate(gen, d, seed, amplitude, delta, eps);
    r.config(kv("generate", gen) + kv("domain", domain) + kv("nx", nx) + kv("ny", ny) + kv("lx", lx) + kv("ly", ly) +
             kv("seed", static_cast<long long>(seed)) + kv("amplitude", amplitude) + kv("delta", delta) + kv("eps", eps));
    r.manifest.seed = seed;
    OutputDir dir(out);
    dir.field("field.fld", f);
    write_csv(f, dir.path("field.csv"));
    dir.add("field.csv");
    const auto info = field_info(f);
    dir.text("info.txt", info);
    dir.finish(r.manifest, "generated field '" + gen + "'\n" + info);
    r.out << info;
    return kExitOk;
}

/// Closed-form checks; one PASS/FAIL line each.
inline int cmd_selftest(Run& r) {
    const auto checks = selftest_checks();
    size_t failed = 0;
    for (const auto& c : checks) {
        bool ok = false;
        std::string why;
        try {
            ok = c.run();
        } catch (const std::exception& e) {
            why = e.what();
        }
        r.out << (ok ? "PASS " : "FAIL ") << c.name << (why.empty() ? "" : " (" + why + ")") << "\n";
        failed += !ok;
    }
    r.out << (failed == 0 ? "selftest passed" : "selftest failed") << " (" << checks.size() - failed << "/"
          << checks.size() << ")\n";
    return failed == 0 ? kExitOk : kExitDomain;
}

} // namespace detail

namespace detail {
inline int replay_manifest(const std::string& manifest_path, const std::string& out_dir, std::ostream& out,
                           std::ostream& err);
} // namespace detail

/// Parses argv, runs one subcommand and returns the exit code: 0 on success,
/// 1 on a domain error, 2 on a usage error.
inline int dispatch(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"mflab: minimal-flow laboratory", "mflab"};
    app.require_subcommand(0, 1);
    app.set_version_flag("--version", kToolVersion);
    int threads = 0;
    app.add_option("--threads", threads, "worker threads (0 = all cores; MFLAB_THREADS overrides)")->check(CLI::Range(0, 1024));
    std::string replay, replay_out;
    app.add_option("--replay", replay, "re-run the command recorded in a manifest.json")->check(CLI::ExistingFile);
    app.add_option("--replay-out", replay_out, "output directory of the replay")->needs("--replay");

    std::string input, against, out_dir, casimir = "quadratic", base = "kolmogorov", model, target = "none", norm = "energy",
                                           config_path, gen, domain = "torus";
    double tol = -1, p = 4.0, amplitude = 1.0, delta = 0.1, eps = 0.03125, margin = 0.05, lx = kTwoPi,
           ly = kTwoPi;
    bool fix_momentum = false;
    std::uint64_t seed = 20240917;
    int starts = 5, probe = 0, n = 0, nx = 64, ny = 64;
    std::optional<double> beta;
    std::vector<double> scan;

    auto* rearrange = app.add_subcommand("rearrange", "orbit-closure membership of --input against --against");
    rearrange->add_option("--input", input, "field file")->required()->check(CLI::ExistingFile);
    rearrange->add_option("--against", against, "reference field file")->required()->check(CLI::ExistingFile);
    rearrange->add_option("--tol", tol, "membership tolerance (negative = automatic)");
    rearrange->add_option("--out", out_dir, "output directory");

    auto* minimize = app.add_subcommand("minimize", "minimal flow of a datum");
    minimize->add_option("--input", input, "datum field file")->required()->check(CLI::ExistingFile);
    minimize->add_option("--casimir", casimir)->check(CLI::IsMember({"quadratic", "power", "entropy", "neg-entropy", "exp"}));
    minimize->add_option("--p", p, "exponent for --casimir power")->check(CLI::Range(1.0 + 1e-12, 1e6));
    minimize->add_flag("--fix-momentum", fix_momentum);
    minimize->add_option("--seed", seed);
    minimize->add_option("--starts", starts, "multi-starts")->check(CLI::Range(1, 1000));
    minimize->add_option("--probe", probe, "minimality probe samples")->check(CLI::Range(0, 100000));
    minimize->add_option("--out", out_dir)->required();

    auto* exclude = app.add_subcommand("exclude", "shear-exclusion certificate");
    exclude->add_option("--base", base)->check(CLI::IsMember({"kolmogorov", "zero"}));
    exclude->add_option("--amplitude", amplitude, "background amplitude");
    exclude->add_option("--delta", delta)->check(CLI::PositiveNumber);
    exclude->add_option("--eps", eps)->check(CLI::PositiveNumber);
    exclude->add_option("--margin", margin)->check(CLI::Range(0.0, 1.0));
    exclude->add_option("--input", input, "certify a channel field instead")->check(CLI::ExistingFile);
    exclude->add_option("--out", out_dir)->required();

    auto* stathydro = app.add_subcommand("stathydro", "mean-field equilibria");
    stathydro->add_option("--model", model)->required()->check(CLI::IsMember({"selective-decay", "liouville", "sinh-poisson", "mrs"}));
    stathydro->add_option("--beta", beta, "inverse temperature (default: 4pi, -4 or 1 by model)");
    stathydro->add_option("--target-energy", target, "none, auto (datum energy) or a value");
    stathydro->add_option("--input", input, "datum field file (default: built-in datum per model)")->check(CLI::ExistingFile);
    stathydro->add_option("--n", n, "resolution of the built-in datum")->check(CLI::Range(8, 1 << 16));
    stathydro->add_option("--norm", norm, "selective-decay normalization")->check(CLI::IsMember({"energy", "psi-l2"}));
    stathydro->add_option("--beta-scan", scan, "extra beta values solved in parallel")->delimiter(',');
    stathydro->add_option("--out", out_dir)->required();

    auto* simulate = app.add_subcommand("simulate", "truncated Euler run on the torus");
    bool print_template = false;
    simulate->add_option("--config", config_path, "TOML config file")->check(CLI::ExistingFile);
    simulate->add_option("--input", input, "initial field (overrides [initial])")->check(CLI::ExistingFile);
    simulate->add_flag("--print-template", print_template, "print every config key with its default and exit");
    simulate->add_option("--out", out_dir, "output directory (required unless --print-template)");

    auto* fields = app.add_subcommand("fields", "field summaries and built-in data");
    fields->add_option("--input", input, "summarize a field file")->check(CLI::ExistingFile);
    fields->add_option("--generate", gen, "built-in datum")->check(CLI::IsMember(detail::generator_kinds()));
    fields->add_option("--domain", domain)->check(CLI::IsMember({"torus", "channel", "disk"}));
    fields->add_option("--nx", nx)->check(CLI::Range(1, 1 << 16));
    fields->add_option("--ny", ny)->check(CLI::Range(4, 1 << 16));
    fields->add_option("--lx", lx)->check(CLI::PositiveNumber);
    fields->add_option("--ly", ly, "x2 period, or disk radius")->check(CLI::PositiveNumber);
    fields->add_option("--seed", seed);
    fields->add_option("--amplitude", amplitude);
    fields->add_option("--delta", delta)->check(CLI::PositiveNumber);
    fields->add_option("--eps", eps)->check(CLI::PositiveNumber);
    fields->add_option("--out", out_dir);

    auto* selftest = app.add_subcommand("selftest", "quick closed-form checks");

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << kToolVersion << "\n";
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    if (!replay.empty()) {
        if (app.get_subcommands().size() > 0 || replay_out.empty()) {
            err << "usage error: --replay takes --replay-out and no subcommand\n\n" << app.help();
            return kExitUsage;
        }
        try {
            return detail::replay_manifest(replay, replay_out, out, err);
        } catch (const Error& e) {
            err << "error: " << e.what() << "\n";
            return kExitDomain;
        }
    }
    if (app.get_subcommands().empty()) {
        err << "usage error: a subcommand is required\n\n" << app.help();
        return kExitUsage;
    }

    detail::Run r{args, out, err, {}};
    const int nthreads = resolve_threads(threads);
    r.manifest.threads = nthreads;
    std::string cmd = "mflab";
    for (const auto& a : args) cmd += " " + a;
    r.manifest.command = cmd;
    r.manifest.argv = args;
    try {
        if (rearrange->parsed()) return detail::cmd_rearrange(r, input, against, tol, out_dir);
        if (minimize->parsed())
            return detail::cmd_minimize(r, input, casimir, p, fix_momentum, seed, starts, probe, nthreads, out_dir);
        if (exclude->parsed()) return detail::cmd_exclude(r, base, amplitude, delta, eps, margin, input, nthreads, out_dir);
        if (stathydro->parsed()) {
            const MeanFieldModel m = detail::model_from_name(model);
            const int res = n > 0 ? n : (m == MeanFieldModel::Liouville ? 512 : 64);
            return detail::cmd_stathydro(r, model, beta.value_or(detail::default_beta(m)), target, input, res, norm, scan, nthreads, out_dir);
        }
        if (simulate->parsed()) {
            if (print_template) {
                out << config_template(simulate_schema());
                return kExitOk;
            }
            if (out_dir.empty()) throw CLI::RequiredError("--out");
            return detail::cmd_simulate(r, config_path, input, out_dir);
        }
        if (fields->parsed())
            return detail::cmd_fields(r, input, gen, domain, domain == "disk" ? 1 : nx, ny, lx,
                                      domain == "disk" && ly == kTwoPi ? 1.0 : ly, seed, amplitude, delta, eps, out_dir);
        if (selftest->parsed()) return detail::cmd_selftest(r);
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitDomain;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitDomain;
    }
    return kExitUsage;
}

namespace detail {

/// Re-runs the argv stored in a manifest with its output directory replaced
/// and compares every output digest.
inline int replay_manifest(const std::string& manifest_path, const std::string& out_dir, std::ostream& out,
                           std::ostream& err) {
    const RunManifest m = read_manifest(manifest_path);
    std::vector<std::string> argv = m.argv;
    bool replaced = false;
    for (size_t k = 0; k < argv.size(); ++k) {
        if (argv[k] == "--out" && k + 1 < argv.size()) {
            argv[k + 1] = out_dir;
            replaced = true;
        } else if (argv[k].rfind("--out=", 0) == 0) {
            argv[k] = "--out=" + out_dir;
            replaced = true;
        }
    }
    if (!replaced) throw Error(ErrorCode::Precondition, "manifest command has no --out directory");
    std::ostringstream sink;
    const int code = dispatch(argv, sink, err);
    if (code != kExitOk) return code;
    const RunManifest again = read_manifest((std::filesystem::path(out_dir) / "manifest.json").string());
    size_t same = 0;
    for (const auto& o : m.outputs) {
        auto it = std::find_if(again.outputs.begin(), again.outputs.end(), [&](const FileDigest& d) { return d.path == o.path; });
        const bool ok = it != again.outputs.end() && it->sha256 == o.sha256;
        same += ok;
        if (!ok) out << "DIFFERS " << o.path << "\n";
    }
    const bool all = same == m.outputs.size() && again.outputs.size() == m.outputs.size() && again.config_hash == m.config_hash;
    out << (all ? "replay identical" : "replay differs") << " (" << same << "/" << m.outputs.size() << " outputs)\n";
    return all ? kExitOk : kExitDomain;
}

} // namespace detail

inline int dispatch(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return dispatch(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

} // namespace mflab::cli
