#include "mflab/minimize.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>

using namespace mflab;
using mflab::testing::rel_l2;

namespace {

VorticityField two_patches(int n) {
    const Domain d = Domain::torus(n, n);
    return VorticityField::sample(d, [](double x, double y) { return std::sin(x) + 0.5 * std::sin(y) > 0 ? 1.0 : -1.0; });
}

VorticityField three_level_blob(int nx, int ny, double yc = 0.5, double offset = 0.0) {
    const Domain d = Domain::channel(nx, ny);
    return VorticityField::sample(d, [=](double x, double y) {
        const double r2 = (x - 3.0) * (x - 3.0) + 9.0 * (y - yc) * (y - yc);
        return offset + (r2 < 0.5 ? 2.0 : (r2 < 2.0 ? 1.0 : 0.0));
    });
}

VorticityField flat_shear(int n) {
    const Domain d = Domain::channel(n, n);
    return VorticityField::sample(d, [](double, double y) { return y > 0.25 && y < 0.75 ? -1.0 : 0.0; });
}

VorticityField wall_strips(int n) {
    const Domain d = Domain::channel(n, n);
    return VorticityField::sample(d, [](double x, double y) { return y < 0.2 || y > 0.8 ? 1.0 + 0.3 * std::sin(x) : 0.0; });
}

void expect_feasible(const MinimalFlowResult& r, const VorticityField& w0, double etol = 1e-8) {
    EXPECT_TRUE(in_orbit_closure(r.omega_star, w0).member);
    EXPECT_LE(std::abs(r.residuals.energy_gap), etol * r.energy0);
    EXPECT_LE(std::abs(r.residuals.mean_gap), 1e-12 * w0.domain().area() * std::max(1.0, w0.sup_norm()));
    EXPECT_LE(r.f_value, r.f_value0 + 1e-12 * std::abs(r.f_value0));
}

/// Optimality over conv{permutations of w}: x in the polytope and
/// ⟨φ′(x) − c, v − x⟩ ≥ 0 at every permutation v.
void expect_prox_optimal(const detail::ShiftedConvex& phi, const std::vector<double>& w, const std::vector<double>& c,
                         const std::vector<double>& x) {
    const Domain d = Domain::disk(static_cast<int>(w.size()));
    EXPECT_TRUE(in_orbit_closure(VorticityField::with_auto_bound(d, x), VorticityField::with_auto_bound(d, w), 1e-11).member);
    std::vector<double> g(x.size());
    double gs = 0.0;
    for (size_t k = 0; k < x.size(); ++k) {
        g[k] = phi.derivative(x[k]) - c[k];
        gs = std::max(gs, std::abs(g[k]));
    }
    std::vector<double> v(w);
    std::sort(v.begin(), v.end());
    double worst = std::numeric_limits<double>::infinity();
    do {
        double s = 0.0;
        for (size_t k = 0; k < x.size(); ++k) s += g[k] * (v[k] - x[k]);
        worst = std::min(worst, s);
    } while (std::next_permutation(v.begin(), v.end()));
    EXPECT_GE(worst, -1e-9 * (1.0 + gs));
}

} // namespace

TEST(Prox, PermutohedronProxSatisfiesVertexOptimality) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> U(0.1, 2.0), C(-3.0, 3.0);
    const std::vector<detail::ShiftedConvex> phis{
        {ConvexFunctionSpec::quadratic(), 0.0, 1.0},  {ConvexFunctionSpec::quadratic(), 0.7, 2.5},
        {ConvexFunctionSpec::entropy(), 0.0, 1.0},    {ConvexFunctionSpec::entropy(), 0.0, 3.0},
        {ConvexFunctionSpec::entropy(), 1.3, 1.0},    {ConvexFunctionSpec::power(3.0), 0.0, 1.0},
        {ConvexFunctionSpec::power(1.5), 0.4, 1.0},   {ConvexFunctionSpec::exponential(), 0.0, 1.0},
        {ConvexFunctionSpec::exponential(), 2.0, 0.5}};
    for (const auto& phi : phis) {
        for (int trial = 0; trial < 20; ++trial) {
            const size_t n = 6;
            std::vector<double> w(n), c(n);
            for (double& x : w) x = U(rng);
            for (double& x : c) x = C(rng);
            if (phi.f.kind == ConvexFunctionSpec::Kind::Exp && phi.q == 0.0)
                for (double& x : c) x = std::abs(x) + 0.5;
            std::sort(w.begin(), w.end(), std::greater<>());
            auto r = detail::PermutohedronProx(phi, w)(c);
            expect_prox_optimal(phi, w, c, r.x);
        }
    }
}

TEST(Prox, EntropyHandlesZeroLevels) {
    const detail::ShiftedConvex phi{ConvexFunctionSpec::entropy(), 0.0, 1.0};
    const std::vector<double> w{2.0, 1.0, 0.0, 0.0, 0.0};
    const std::vector<double> c{0.3, -0.2, 0.1, 0.4, -1.0};
    auto r = detail::PermutohedronProx(phi, w)(c);
    for (double x : r.x) EXPECT_GT(x, 0.0);
    expect_prox_optimal(phi, w, c, r.x);
}

TEST(Minimize, ConstantDatumIsReturnedUnchanged) {
    const auto w0 = VorticityField::constant(Domain::channel(8, 8), 0.7);
    auto r = minimize_casimir(w0, ConvexFunctionSpec::quadratic(), false);
    EXPECT_EQ(r.regime, "constant");
    EXPECT_EQ(r.omega_star.values(), w0.values());
    EXPECT_EQ(r.residuals.energy_gap, 0.0);
    EXPECT_EQ(r.residuals.mean_gap, 0.0);
    EXPECT_EQ(r.f_value, r.f_value0);
}

TEST(Minimize, RejectsNonStrictlyConvexAndOutOfDomain) {
    const auto w0 = two_patches(8);
    EXPECT_THROW(minimize_casimir(w0, ConvexFunctionSpec::tabulated({-2, 0, 2}, {2, 0, 2}), false), Error);
    try {
        minimize_casimir(w0, ConvexFunctionSpec::entropy(), false);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::FunctionDomain);
    }
}

TEST(Minimize, TwoPatchTorusSatisfiesClampRelation) {
    const auto w0 = two_patches(32);
    auto r = minimize_casimir(w0, ConvexFunctionSpec::quadratic(), false);
    EXPECT_EQ(r.regime, "linearized");
    expect_feasible(r, w0);
    EXPECT_LE(r.beta, 0.0);
    // independent check: refit μ₀, μ₁ on unsaturated cells from a fresh Biot–Savart solve
    const auto psi = physical_psi(PoissonSolver(w0.domain()), r.omega_star.values());
    std::vector<size_t> free_cells;
    for (size_t k = 0; k < w0.size(); ++k)
        if (std::abs(r.omega_star[k]) < 1.0 - 1e-9) free_cells.push_back(k);
    ASSERT_GT(free_cells.size(), 10u);
    Eigen::MatrixXd A(static_cast<Eigen::Index>(free_cells.size()), 2);
    Eigen::VectorXd b(static_cast<Eigen::Index>(free_cells.size()));
    for (size_t q = 0; q < free_cells.size(); ++q) {
        A(static_cast<Eigen::Index>(q), 0) = -psi[free_cells[q]];
        A(static_cast<Eigen::Index>(q), 1) = -1.0;
        b(static_cast<Eigen::Index>(q)) = r.omega_star[free_cells[q]];
    }
    Eigen::Vector2d mu = A.colPivHouseholderQr().solve(b);
    std::vector<double> clamp(w0.size());
    for (size_t k = 0; k < w0.size(); ++k) clamp[k] = std::clamp(-mu(0) * psi[k] - mu(1), -1.0, 1.0);
    EXPECT_LE(rel_l2(clamp, r.omega_star.values()), 1e-6);
    EXPECT_NEAR(mu(0), -r.beta, 1e-6 * std::abs(r.beta));
    EXPECT_NEAR(mu(1), r.gamma, 1e-6);

    const auto mf = monotone_fit(r.omega_star, r.psi_star.psi_field());
    EXPECT_LE(mf.isotonic_residual, 1e-4 * r.omega_star.l2());
    EXPECT_EQ(mf.direction, MonotoneFitReport::Direction::Decreasing);
    ASSERT_GE(mf.plateau_levels.size(), 2u);
    EXPECT_NEAR(mf.plateau_levels.front(), 1.0, 1e-12);
    EXPECT_NEAR(mf.plateau_levels.back(), -1.0, 1e-12);
    EXPECT_GT(mf.plateau_areas.front() + mf.plateau_areas.back(), 0.5 * w0.domain().area());

    const auto k = kkt_report(r, w0);
    for (double l : k.lambda) EXPECT_EQ(l, 0.0);
    EXPECT_LE(k.fit_residual, 1e-8);
    EXPECT_LE(k.max_bracket_violation, 1e-8);

    const auto probe = minimality_probe(r, w0, 100, 3);
    EXPECT_GE(probe.accepted, 100);
    EXPECT_EQ(probe.violations, 0);
}

TEST(Minimize, FlatShearIsAlreadyMinimal) {
    const auto w0 = flat_shear(32);
    for (bool mom : {false, true}) {
        auto r = minimize_casimir(w0, ConvexFunctionSpec::quadratic(), mom);
        EXPECT_TRUE(equimeasurable(r.omega_star, w0));
        EXPECT_LE(std::abs(r.f_value - r.f_value0), 1e-8);
        expect_feasible(r, w0);
    }
}

TEST(Minimize, ThreeLevelKktMatchesDenseOracle) {
    const auto w0 = three_level_blob(16, 16);
    auto r = minimize_casimir(w0, ConvexFunctionSpec::quadratic(), false);
    expect_feasible(r, w0);
    EXPECT_LE(r.residuals.stationarity, 1e-9);
    const auto k = kkt_report(r, w0);
    ASSERT_EQ(k.levels.size(), 3u);
    EXPECT_FALSE(k.rank_deficient);
    EXPECT_LE(k.fit_residual, 1e-8);
    EXPECT_LE(k.max_negative_lambda, 0.0);
    EXPECT_LE(k.max_complementarity, 1e-9);
    EXPECT_LE(k.max_bracket_violation, 1e-8);

    // dense oracle: levels with zero slack are active, others carry λ = 0;
    // solve the stationarity equations on off-level cells by least squares
    const auto& w = r.omega_star;
    const auto& psi = r.psi_star.psi;
    const double lt = 1e-9 * 2.0;
    const bool middle_active = std::abs(k.slack[1]) <= 1e-10;
    std::vector<std::array<double, 3>> rows;
    std::vector<double> rhs;
    for (size_t c = 0; c < w.size(); ++c) {
        bool on_level = false;
        for (double a : k.levels) on_level = on_level || std::abs(w[c] - a) <= lt;
        if (on_level) continue;
        rows.push_back({psi[c], 1.0, w[c] > k.levels[1] ? 1.0 : 0.0});
        rhs.push_back(-w[c]);
    }
    const Eigen::Index cols = middle_active ? 3 : 2;
    Eigen::MatrixXd A(static_cast<Eigen::Index>(rows.size()), cols);
    Eigen::VectorXd b(static_cast<Eigen::Index>(rows.size()));
    for (size_t q = 0; q < rows.size(); ++q) {
        for (Eigen::Index j = 0; j < cols; ++j) A(static_cast<Eigen::Index>(q), j) = rows[q][static_cast<size_t>(j)];
        b(static_cast<Eigen::Index>(q)) = rhs[q];
    }
    Eigen::VectorXd x = A.householderQr().solve(b);
    EXPECT_NEAR(k.mu0, x(0), 1e-6 * std::max(1.0, std::abs(x(0))));
    EXPECT_NEAR(k.mu1, x(1), 1e-6 * std::max(1.0, std::abs(x(1))));
    EXPECT_NEAR(k.lambda[1], middle_active ? x(2) : 0.0, 1e-6 * std::max(1.0, std::abs(k.lambda[1])));
    EXPECT_NEAR(k.mu0, -r.beta, 1e-6 * std::abs(r.beta));
}

TEST(Minimize, ReturnedDatumHasExactComplementarity) {
    const auto w0 = flat_shear(16);
    auto r = minimize_casimir(w0, ConvexFunctionSpec::quadratic(), false);
    const auto k = kkt_report(r, w0);
    for (double s : k.slack) EXPECT_EQ(s, 0.0);
    EXPECT_EQ(k.max_complementarity, 0.0);
}

TEST(Minimize, ConvexRegimeBracketsTheEnergy) {
    const auto w0 = wall_strips(32);
    auto r = minimize_casimir(w0, ConvexFunctionSpec::quadratic(), false);
    EXPECT_EQ(r.regime, "convex");
    EXPECT_GE(r.beta, 0.0);
    EXPECT_GE(r.energy_lo, r.energy0);
    EXPECT_LE(r.energy_hi, r.energy0);
    EXPECT_LE(r.beta_lo, r.beta_hi);
    expect_feasible(r, w0);
    EXPECT_LE(r.residuals.stationarity, 1e-8);
    const auto probe = minimality_probe(r, w0, 100, 9);
    EXPECT_GE(probe.accepted, 100);
    EXPECT_EQ(probe.violations, 0);
}

TEST(Minimize, FrankWolfeObjectiveIsNonIncreasing) {
    const auto w0 = wall_strips(16);
    for (const auto& f : {ConvexFunctionSpec::quadratic(), ConvexFunctionSpec::entropy()}) {
        const auto data = f.kind == ConvexFunctionSpec::Kind::Entropy ? w0 + VorticityField::constant(w0.domain(), 0.2) : w0;
        MinimalFlowProblem P(data, f, false);
        FrankWolfeTrace trace;
        frank_wolfe(P, 10.0, 0.0, data.values(), 300, 0.0, &trace);
        ASSERT_GT(trace.objective.size(), 10u);
        for (size_t k = 1; k < trace.objective.size(); ++k)
            EXPECT_LE(trace.objective[k], trace.objective[k - 1] + 1e-13 * std::abs(trace.objective[k - 1]));
        EXPECT_LT(trace.gap.back(), trace.gap.front());
    }
}

TEST(Minimize, MomentumConstraintIsHeld) {
    const auto w0 = three_level_blob(16, 16, 0.35);
    auto free = minimize_casimir(w0, ConvexFunctionSpec::quadratic(), false);
    auto fixed = minimize_casimir(w0, ConvexFunctionSpec::quadratic(), true);
    expect_feasible(fixed, w0);
    EXPECT_LE(std::abs(fixed.residuals.momentum_gap), 1e-10);
    EXPECT_NE(fixed.eta, 0.0);
    EXPECT_GE(fixed.f_value, free.f_value - 1e-10);
    const auto probe = minimality_probe(fixed, w0, 100, 4);
    EXPECT_GE(probe.accepted, 100);
    EXPECT_EQ(probe.violations, 0);
}

TEST(Minimize, OtherConvexFamilies) {
    const auto base = three_level_blob(16, 16);
    for (const auto& f : {ConvexFunctionSpec::entropy(), ConvexFunctionSpec::power(3.0), ConvexFunctionSpec::exponential()}) {
        const auto w0 = f.kind == ConvexFunctionSpec::Kind::Entropy ? base + VorticityField::constant(base.domain(), 0.5) : base;
        auto r = minimize_casimir(w0, f, false);
        expect_feasible(r, w0);
        EXPECT_LE(r.residuals.stationarity, 1e-9) << f.name();
        const auto probe = minimality_probe(r, w0, 100, 6);
        EXPECT_EQ(probe.violations, 0) << f.name();
    }
}

TEST(Minimize, EightCellDenseSamplingOracle) {
    // disk with 8 annuli; brute force over mixtures of permutations moved onto the shell
    const Domain d = Domain::disk(8);
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::vector<double> vals(8);
    for (double& v : vals) v = 1e-3 * U(rng);
    const auto w0 = VorticityField(d, vals, 1.0);
    const auto f = ConvexFunctionSpec::quadratic();
    auto r = minimize_casimir(w0, f, false);
    expect_feasible(r, w0, 1e-10);

    PoissonSolver solver(d);
    const double a = d.cell_area();
    auto E = [&](const std::vector<double>& z) {
        auto p = solver.solve(z);
        double s = 0.0;
        for (size_t k = 0; k < z.size(); ++k) s += p[k] * z[k];
        return -0.5 * a * s;
    };
    auto If = [&](const std::vector<double>& z) {
        double s = 0.0;
        for (double x : z) s += 0.5 * x * x;
        return s * a;
    };
    const double E0 = E(vals);
    std::vector<std::vector<double>> perms;
    std::vector<double> p(vals);
    std::sort(p.begin(), p.end());
    do perms.push_back(p);
    while (std::next_permutation(p.begin(), p.end()));
    std::vector<double> pe(perms.size());
    for (size_t q = 0; q < perms.size(); ++q) pe[q] = E(perms[q]);
    std::uniform_int_distribution<size_t> pick(0, perms.size() - 1);
    double best = std::numeric_limits<double>::infinity();
    for (int s = 0; s < 200000; ++s) {
        const int K = 1 + static_cast<int>(8 * U(rng));
        std::vector<double> x(8, 0.0);
        double wsum = 0.0;
        std::vector<std::pair<size_t, double>> mix;
        for (int k = 0; k < K; ++k) {
            const double wk = -std::log(1.0 - U(rng));
            mix.push_back({pick(rng), wk});
            wsum += wk;
        }
        for (auto& [q, wk] : mix)
            for (size_t c = 0; c < 8; ++c) x[c] += wk / wsum * perms[q][c];
        const double Ex = E(x);
        size_t q = pick(rng);
        for (int tries = 0; tries < 50 && (pe[q] - E0) * (Ex - E0) >= 0; ++tries) q = pick(rng);
        if ((pe[q] - E0) * (Ex - E0) >= 0) continue;
        // E(x + t(v − x)) = E0 with t ∈ (0, 1)
        std::vector<double> dv(8);
        for (size_t c = 0; c < 8; ++c) dv[c] = perms[q][c] - x[c];
        const double C = E(dv), Ev = pe[q];
        const double B = Ev - Ex - C;
        const double disc = B * B - 4.0 * C * (Ex - E0);
        const double t = (-B + (B > 0 ? -1 : 1) * std::sqrt(disc)) / (2.0 * C);
        double tt = (t > 0 && t < 1) ? t : (Ex - E0) / (C * t);
        if (!(tt > 0 && tt < 1)) continue;
        for (size_t c = 0; c < 8; ++c) x[c] += tt * dv[c];
        if (std::abs(E(x) - E0) > 1e-9 * E0) continue;
        best = std::min(best, If(x));
    }
    ASSERT_TRUE(std::isfinite(best));
    EXPECT_LE(r.f_value, best + 1e-12 * best);
    EXPECT_LE(best - r.f_value, 0.02 * (r.f_value0 - r.f_value));
}

TEST(Minimize, DeterministicAcrossRunsAndThreads) {
    const auto w0 = two_patches(16);
    MinimizeOptions o1, o2;
    o2.threads = 3;
    auto a = minimize_casimir(w0, ConvexFunctionSpec::quadratic(), false, o1);
    auto b = minimize_casimir(w0, ConvexFunctionSpec::quadratic(), false, o1);
    auto c = minimize_casimir(w0, ConvexFunctionSpec::quadratic(), false, o2);
    EXPECT_EQ(a.omega_star.values(), b.omega_star.values());
    EXPECT_EQ(a.omega_star.values(), c.omega_star.values());
    EXPECT_EQ(a.beta, c.beta);
}

TEST(MonotoneFit, SyntheticProfiles) {
    const Domain d = Domain::torus(32, 32);
    const auto psi = VorticityField::sample(d, [](double x, double y) { return std::sin(x) * std::cos(y) + 0.1 * std::sin(2 * y); });
    std::vector<double> t(psi.size()), sq(psi.size()), neg(psi.size());
    for (size_t k = 0; k < psi.size(); ++k) {
        t[k] = std::tanh(psi[k]);
        sq[k] = psi[k] * psi[k];
        neg[k] = -2.0 * psi[k];
    }
    const auto ft = monotone_fit(VorticityField::with_auto_bound(d, t), psi);
    EXPECT_LE(ft.isotonic_residual, 1e-10);
    EXPECT_EQ(ft.direction, MonotoneFitReport::Direction::Increasing);
    const auto w2 = VorticityField::with_auto_bound(d, sq);
    const auto fs = monotone_fit(w2, psi);
    EXPECT_GT(fs.isotonic_residual, 0.01 * w2.l2());
    EXPECT_EQ(monotone_fit(VorticityField::with_auto_bound(d, neg), psi).direction,
              MonotoneFitReport::Direction::Decreasing);
    EXPECT_TRUE(ft.plateau_levels.empty());
}

TEST(MonotoneFit, OracleOnSmallScatter) {
    // pooled blocks worked out by hand
    const Domain d = Domain::disk(6);
    const std::vector<double> psi{0.0, 1.0, 2.0, 3.0, 4.0, 5.0};
    const std::vector<double> w{1.0, 3.0, 2.0, 2.0, 5.0, 4.0};
    const auto rep = monotone_fit(VorticityField(d, w, 5.0), VorticityField(d, psi, 5.0));
    // {1}, {3,2,2} → 7/3, {5,4} → 4.5
    const double a = d.cell_area();
    const double ss = (3 - 7.0 / 3) * (3 - 7.0 / 3) + 2 * (2 - 7.0 / 3) * (2 - 7.0 / 3) + 2 * 0.25;
    EXPECT_NEAR(rep.isotonic_residual, std::sqrt(ss * a), 1e-14);
}

TEST(MonotoneFit, DegenerateStreamfunctionThrows) {
    const Domain d = Domain::torus(8, 8);
    try {
        monotone_fit(VorticityField::constant(d, 1.0), VorticityField::constant(d, 2.0));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Degenerate);
    }
}

TEST(Kkt, LevelCapIsEnforced) {
    const auto w0 = mflab::testing::random_field(Domain::torus(16, 16), 5);
    MinimalFlowResult r;
    r.omega_star = w0;
    r.psi_star = solve_stream(mflab::testing::zero_mean(w0));
    EXPECT_THROW(kkt_report(r, w0), Error);
}
