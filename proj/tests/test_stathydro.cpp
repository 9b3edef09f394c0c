#include "mflab/bistoch.hpp"
#include "mflab/minimize.hpp"
#include "mflab/stathydro.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>

using namespace mflab;
using mflab::testing::max_abs_diff;

namespace {

double l2_sq(const VorticityField& f) {
    double s = 0;
    for (double x : f.values()) s += x * x;
    return s * f.domain().cell_area();
}

/// F′(ψ) of the coarse-grained relation by the complex-step derivative.
double complex_step_fprime(const MrsDistribution& r, double psi) {
    using C = std::complex<double>;
    const double h = 1e-30;
    const C z(psi, h);
    double top = -1e300;
    for (size_t i = 0; i < r.levels.size(); ++i) top = std::max(top, r.log_g[i] - r.beta * r.levels[i] * psi);
    C num = 0, den = 0;
    for (size_t i = 0; i < r.levels.size(); ++i) {
        const C e = std::exp(C(r.log_g[i] - top) - r.beta * r.levels[i] * z);
        num += r.levels[i] * e;
        den += e;
    }
    return (num / den).imag() / h;
}

VorticityField two_level_disk(int n) {
    return VorticityField::sample(Domain::disk(n), [](double, double r) { return r < 0.5 ? 2.0 : 0.5; });
}

VorticityField two_level_torus(int n) {
    const double r0 = std::sqrt(2.0 * kPi);
    return VorticityField::sample(Domain::torus(n, n),
                                  [&](double x, double y) { return std::hypot(x - kPi, y - kPi) < r0 ? 1.0 : -1.0; });
}

} // namespace

TEST(SelectiveDecay, ChannelEigenvalueIsTheDiscreteSineMode) {
    for (int ny : {64, 128, 256}) {
        const auto d = Domain::channel(32, ny);
        const auto w = VorticityField::sample(d, [](double x, double y) { return std::sin(x) * y + 0.3 * std::cos(2 * x); });
        const auto s = selective_decay(w);
        const double h = 1.0 / ny;
        const double discrete = 4.0 / (h * h) * std::pow(std::sin(kPi * h / 2), 2);
        EXPECT_NEAR(s.eigenvalue, discrete, 1e-10 * discrete);
        // O(h²) with the leading constant π⁴/12
        EXPECT_NEAR((kPi * kPi - s.eigenvalue) / (h * h), std::pow(kPi, 4) / 12, 0.01);
        EXPECT_LE(s.residual, 1e-8);
        if (ny == 256) {
            EXPECT_LE(std::abs(s.eigenvalue / (kPi * kPi) - 1), 0.005);
        }
    }
}

TEST(SelectiveDecay, DiskEigenvalueMatchesDenseRadialOperator) {
    const int n = 96;
    const auto d = Domain::disk(n);
    const auto s = selective_decay(VorticityField::constant(d, 1.0));
    // finite volumes in s = r²: Δψ ≈ (4/ds²)[s₊(ψ₊−ψ) − s₋(ψ−ψ₋)], reflected ghost at the wall
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    const double ds = 1.0 / n, sc = 4.0 / (ds * ds);
    for (int j = 0; j < n; ++j) {
        const double sl = j * ds, su = (j + 1) * ds;
        A(j, j) = sc * (sl + su) + (j == n - 1 ? sc * su : 0.0);
        if (j > 0) A(j, j - 1) = -sc * sl;
        if (j + 1 < n) A(j, j + 1) = -sc * su;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    EXPECT_NEAR(s.eigenvalue, es.eigenvalues()(0), 1e-10 * es.eigenvalues()(0));
    const double j01 = 2.404825557695773;
    EXPECT_NEAR(s.eigenvalue, j01 * j01, 1e-3);
}

TEST(SelectiveDecay, ZeroEnergyDatumGivesZeroState) {
    const auto s = selective_decay(VorticityField::zeros(Domain::channel(16, 32)));
    EXPECT_EQ(s.omega_bar.sup_norm(), 0.0);
    EXPECT_EQ(s.psi_bar.sup_norm(), 0.0);
    EXPECT_EQ(s.energy, 0.0);
}

TEST(SelectiveDecay, BothNormalizations) {
    const auto d = Domain::channel(32, 64);
    const auto w = mflab::testing::random_field(d, 11);
    const double e0 = energy(w);
    const auto s = selective_decay(w);
    EXPECT_NEAR(s.energy, e0, 1e-10 * e0);
    EXPECT_NEAR(energy(s.omega_bar), e0, 1e-10 * e0);
    for (size_t k = 0; k < w.size(); ++k) ASSERT_DOUBLE_EQ(s.omega_bar[k], -s.eigenvalue * s.psi_bar[k]);

    const auto p = selective_decay(w, SelectiveDecayNorm::PsiL2);
    EXPECT_NEAR(l2_sq(p.psi_bar), e0 / p.eigenvalue, 1e-10 * e0 / p.eigenvalue);
    EXPECT_NEAR(p.energy, 0.5 * e0, 1e-8 * e0);
    EXPECT_DOUBLE_EQ(steady_state_residual(s.omega_bar, s.psi_bar), 0.0);
}

TEST(SelectiveDecay, OrientationFollowsTheDatum) {
    const auto d = Domain::channel(16, 64);
    const auto up = VorticityField::sample(d, [](double, double y) { return std::sin(kPi * y); });
    const auto down = (-1.0) * up;
    EXPECT_LT(selective_decay(up).psi_bar[d.index(0, 32)], 0.0);
    EXPECT_GT(selective_decay(down).psi_bar[d.index(0, 32)], 0.0);
}

TEST(SelectiveDecay, TorusIsRejected) {
    try {
        selective_decay(VorticityField::zeros(Domain::torus(8, 8)));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::UnsupportedDomain);
    }
}

TEST(Liouville, ExplicitDiskSolutionAtFourPi) {
    const auto d = Domain::disk(2048);
    const auto w0 = VorticityField::constant(d, 1.0 / kPi);
    const double beta = 4 * kPi;
    const auto s = liouville_solve(w0, beta);
    const auto exact = liouville_explicit(d, beta);
    EXPECT_LE(max_abs_diff(s.omega_bar.values(), exact), 1e-6);
    EXPECT_LE(s.residual, 1e-8);
    EXPECT_NEAR(s.omega_bar.integral(), 1.0, 1e-12);
    // A = 1/3, so ω runs from 2/(3π) at the centre to 3/(2π) on the wall
    EXPECT_NEAR(s.omega_bar[0], 2.0 / (3.0 * kPi), 1e-4);
    EXPECT_NEAR(s.omega_bar[2047], 3.0 / (2.0 * kPi), 2e-4);
    const double A = 1.0 / 3.0, ds = 1.0 / 2048;
    EXPECT_NEAR(s.omega_bar[2047], (2.0 / 3.0) / kPi * (1 / (1 - A) - 1 / (1 - A * (1 - ds))) / (A * ds), 1e-6);
}

TEST(Liouville, DiscretizationErrorIsSecondOrder) {
    for (double beta : {-20.0, 50.0}) {
        double prev = 0;
        for (int n : {256, 512, 1024}) {
            const auto d = Domain::disk(n);
            const auto s = liouville_solve(VorticityField::constant(d, 1.0 / kPi), beta);
            const double err = max_abs_diff(s.omega_bar.values(), liouville_explicit(d, beta));
            if (prev > 0) {
                EXPECT_NEAR(prev / err, 4.0, 0.4) << "beta " << beta << " n " << n;
            }
            prev = err;
        }
    }
}

TEST(Liouville, BetaZeroIsUniform) {
    const auto d = Domain::disk(64);
    const auto w0 = VorticityField::sample(d, [](double, double r) { return 1.0 + r * r; });
    const auto s = liouville_solve(w0, 0.0);
    const double c = w0.integral() / d.area();
    for (double x : s.omega_bar.values()) EXPECT_NEAR(x, c, 1e-13);
    PoissonSolver solver(d);
    EXPECT_LE(max_abs_diff(s.psi_bar.values(), solver.solve(std::vector<double>(d.cells(), c))), 1e-12);
}

TEST(Liouville, PartitionNormalization) {
    const auto d = Domain::disk(256);
    const auto w0 = VorticityField::constant(d, 2.0);
    const auto s = liouville_solve(w0, 10.0);
    double z = 0;
    for (double p : s.psi_bar.values()) z += std::exp(10.0 * p) * d.cell_area();
    z /= w0.integral();
    EXPECT_NEAR(s.z_norm, z, 1e-12 * z);
    for (size_t k = 0; k < d.cells(); ++k)
        EXPECT_NEAR(s.omega_bar[k], std::exp(10.0 * s.psi_bar[k]) / z, 1e-12 * s.omega_bar.sup_norm());
}

TEST(Liouville, CriticalTemperatureGuard) {
    const auto w0 = VorticityField::constant(Domain::disk(512), 1.0 / kPi);
    for (double beta : {-8 * kPi + 0.05, -8 * kPi, -30.0}) {
        try {
            liouville_solve(w0, beta);
            FAIL() << beta;
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::ParameterOutOfRange);
        }
    }
    // the energy grows without bound as A → −∞
    const auto a = liouville_solve(w0, -8 * kPi + 2.0), b = liouville_solve(w0, -8 * kPi + 0.2);
    EXPECT_GT(b.energy, a.energy);
    EXPECT_LE(b.residual, 1e-8);
}

TEST(Liouville, PreconditionsAndDomains) {
    try {
        liouville_solve(VorticityField::zeros(Domain::disk(32)), 1.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Precondition);
    }
    try {
        liouville_solve(VorticityField::constant(Domain::channel(8, 8), 1.0), 1.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::UnsupportedDomain);
    }
}

TEST(Liouville, EnergyMatchingRecoversBeta) {
    const auto w0 = VorticityField::constant(Domain::disk(256), 1.0 / kPi);
    const double e = liouville_solve(w0, 4 * kPi).energy;
    const auto m = liouville_match_energy(w0, e);
    EXPECT_NEAR(m.beta, 4 * kPi, 1e-6);
    EXPECT_NEAR(m.energy, e, 1e-9 * e);
}

TEST(Liouville, ParallelScanMatchesSerial) {
    const auto w0 = VorticityField::constant(Domain::disk(128), 1.0);
    const std::vector<double> betas{-10.0, -1.0, 0.0, 3.0, 30.0};
    const auto a = beta_scan(MeanFieldModel::Liouville, w0, betas, 1);
    const auto b = beta_scan(MeanFieldModel::Liouville, w0, betas, 4);
    for (size_t k = 0; k < betas.size(); ++k) {
        EXPECT_EQ(a[k].omega_bar.values(), b[k].omega_bar.values());
        EXPECT_EQ(a[k].energy, b[k].energy);
    }
}

TEST(SinhPoisson, BetaZeroGivesTheUniformState) {
    const auto w0 = VorticityField::sample(Domain::torus(16, 16), [](double x, double) { return std::cos(x); });
    const auto s = sinh_poisson_solve(w0, 0.0);
    EXPECT_EQ(s.omega_bar.sup_norm(), 0.0);
    EXPECT_EQ(s.energy, 0.0);
}

TEST(SinhPoisson, MatchesTwoTermPerturbationExpansion) {
    // Datum cos x: with u = βψ the relation is u″ + κ sinh u = 0, whose
    // periodic branch is u = a cos x + (a³/192) cos 3x + O(a⁵). Fixing the
    // positive mass gives ψ = −(1 + β²/64) cos x − (β²/192) cos 3x + O(β⁴).
    const auto d = Domain::torus(64, 64);
    const auto w0 = VorticityField::sample(d, [](double x, double) { return std::cos(x); });
    for (double beta : {-0.1, -0.2, -0.4, -0.8, -1.6}) {
        const auto s = sinh_poisson_solve(w0, beta);
        double e1 = 0, e2 = 0;
        for (int j = 0; j < d.ny; ++j)
            for (int i = 0; i < d.nx; ++i) {
                const double x = d.x1(i), p = s.psi_bar.at(i, j);
                e1 = std::max(e1, std::abs(p + std::cos(x)));
                e2 = std::max(e2, std::abs(p + (1 + beta * beta / 64) * std::cos(x) + beta * beta / 192 * std::cos(3 * x)));
            }
        if (std::abs(beta) >= 0.4) {
            EXPECT_LE(e2, 1e-3 * std::pow(beta, 4)) << beta;
        } else {
            EXPECT_NEAR(e1 / (beta * beta), 1.0 / 48.0, 0.03 / 48.0) << beta;
        }
        EXPECT_LT(e2, 0.05 * e1);
        EXPECT_LE(s.residual, 1e-8);
    }
}

TEST(SinhPoisson, RelationGaugeAndNormalization) {
    const auto d = Domain::torus(64, 64);
    const auto w0 = VorticityField::sample(d, [](double x, double y) { return std::cos(x) + 0.2 * std::cos(x) * std::cos(2 * y); });
    const double beta = -2.0;
    const auto s = sinh_poisson_solve(w0, beta);
    double sh = 0, pos = 0, pos0 = 0;
    for (size_t k = 0; k < d.cells(); ++k) {
        sh += std::sinh(beta * s.psi_bar[k]);
        pos += std::max(std::sinh(beta * s.psi_bar[k]), 0.0) * d.cell_area();
        pos0 += std::max(w0[k], 0.0) * d.cell_area();
    }
    EXPECT_LE(std::abs(sh), 1e-9 * d.cells());
    EXPECT_NEAR(s.z_norm, pos / pos0, 1e-12 * s.z_norm);
    std::vector<double> rhs(d.cells());
    for (size_t k = 0; k < d.cells(); ++k) rhs[k] = std::sinh(beta * s.psi_bar[k]) / s.z_norm;
    PoissonSolver solver(d);
    EXPECT_LE(mflab::testing::rel_l2(solver.laplacian(s.psi_bar.values()), rhs), 1e-8);
    EXPECT_LE(steady_state_residual(s.omega_bar, s.psi_bar), 1e-7);
}

TEST(SinhPoisson, OddSymmetryIsPreserved) {
    const auto d = Domain::torus(64, 64);
    const auto w0 = VorticityField::sample(d, [](double x, double y) { return std::cos(x) + std::cos(y); });
    const auto guess =
        VorticityField::sample(d, [](double x, double y) { return std::sin(x) + 0.3 * std::sin(x) * std::cos(2 * y); });
    const auto s = sinh_poisson_solve(w0, -2.0, {}, guess);
    double asym = 0;
    for (int j = 0; j < d.ny; ++j)
        for (int i = 0; i < d.nx; ++i)
            asym = std::max(asym, std::abs(s.omega_bar.at(i, j) + s.omega_bar.at(d.nx - 1 - i, d.ny - 1 - j)));
    EXPECT_LE(asym, 1e-10 * s.omega_bar.sup_norm());
    EXPECT_LE(s.residual, 1e-8);
}

TEST(SinhPoisson, RejectsPositiveBetaAndNonzeroMean) {
    const auto d = Domain::torus(16, 16);
    const auto w0 = VorticityField::sample(d, [](double x, double) { return std::cos(x); });
    try {
        sinh_poisson_solve(w0, 0.5);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ParameterOutOfRange);
    }
    try {
        sinh_poisson_solve(VorticityField::constant(d, 1.0), -1.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::TorusMeanNonzero);
    }
}

TEST(SinhPoisson, EnergyMatching) {
    const auto w0 = VorticityField::sample(Domain::torus(32, 32), [](double x, double) { return std::cos(x); });
    const double target = 1.1 * energy(w0);
    const auto m = sinh_poisson_match_energy(w0, target);
    EXPECT_NEAR(m.energy, target, 1e-9 * target);
    EXPECT_LT(m.beta, 0.0);
}

TEST(Mrs, SingleLevelDatum) {
    const auto w0 = VorticityField::constant(Domain::torus(16, 16), 0.7);
    const auto r = mrs_coarse_grain(w0, 3.0);
    ASSERT_EQ(r.level_count(), 1u);
    for (double p : r.rho) EXPECT_DOUBLE_EQ(p, 1.0);
    for (double x : r.omega_bar.values()) EXPECT_DOUBLE_EQ(x, 0.7);
}

TEST(Mrs, BetaZeroGivesAreaFractions) {
    const auto w0 = two_level_disk(64);
    const auto r = mrs_coarse_grain(w0, 0.0);
    const double area = w0.domain().area();
    for (size_t x = 0; x < w0.size(); ++x)
        for (size_t i = 0; i < r.level_count(); ++i) EXPECT_NEAR(r.prob(x, i), r.level_area[i] / area, 1e-14);
    for (double x : r.omega_bar.values()) EXPECT_NEAR(x, w0.mean(), 1e-14);
}

TEST(Mrs, TwoLevelIdentities) {
    struct Case {
        VorticityField w0;
        double beta;
    };
    for (const auto& c : {Case{two_level_torus(64), 2.0}, Case{two_level_torus(64), 5.0}, Case{two_level_disk(256), -10.0},
                          Case{two_level_disk(256), 5.0}}) {
        const auto r = mrs_coarse_grain(c.w0, c.beta);
        ASSERT_EQ(r.level_count(), 2u);
        const size_t n = c.w0.size();
        // normalization and marginals recomputed from ρ
        double norm_err = 0, var_min = 1e300, fp_err = 0, fp_scale = 0;
        std::vector<double> marg(2, 0.0);
        const auto var = r.variance();
        for (size_t x = 0; x < n; ++x) {
            norm_err = std::max(norm_err, std::abs(r.prob(x, 0) + r.prob(x, 1) - 1.0));
            for (size_t i = 0; i < 2; ++i) marg[i] += r.prob(x, i) * c.w0.domain().cell_area();
            var_min = std::min(var_min, var[x]);
            const double lhs = complex_step_fprime(r, r.psi_bar[x]), rhs = -c.beta * var[x];
            fp_err = std::max(fp_err, std::abs(lhs - rhs));
            fp_scale = std::max(fp_scale, std::abs(rhs));
            EXPECT_NEAR(r.F(r.psi_bar[x]), r.omega_bar[x], 1e-14 * std::max(1.0, std::abs(r.omega_bar[x])));
        }
        EXPECT_LE(norm_err, 1e-7);
        for (size_t i = 0; i < 2; ++i) {
            double a = 0;
            for (size_t x = 0; x < n; ++x) a += (std::abs(c.w0[x] - r.levels[i]) < 1e-12) * c.w0.domain().cell_area();
            EXPECT_NEAR(marg[i], a, 1e-7 * a);
        }
        EXPECT_GE(var_min, 0.0);
        EXPECT_LE(fp_err, 1e-6 * fp_scale);
        EXPECT_LE(r.residual, 1e-8);
        EXPECT_LE(monotone_fit(r.omega_bar, r.psi_bar).isotonic_residual, 1e-6);
        // F(ψ̄) is smooth but not band-limited, so the spectral Jacobian only vanishes up to aliasing
        EXPECT_LE(steady_state_residual(r.omega_bar, r.psi_bar), 1e-3);
        EXPECT_TRUE(in_orbit_closure(r.omega_bar, c.w0).member);
    }
}

TEST(Mrs, TorusBranchesAroundTheFirstEigenvalue) {
    // the uniform state loses stability once β·Var(ω₀) exceeds λ₁ = 1
    const auto w0 = two_level_torus(32);
    EXPECT_LE(mrs_coarse_grain(w0, 0.5).energy, 1e-20);
    EXPECT_LE(mrs_coarse_grain(w0, -1.0).energy, 1e-20);
    EXPECT_GT(mrs_coarse_grain(w0, 2.0).energy, 1.0);
}

TEST(Mrs, CoarseGrainingIsABistochasticKernel) {
    // K(x, y) = ρ(x, σ(y))·ΔA/a_{σ(y)} is bistochastic and maps ω₀ to ω̄
    const auto w0 = two_level_disk(64);
    const auto r = mrs_coarse_grain(w0, -6.0);
    const size_t n = w0.size();
    std::vector<double> k(n * n);
    for (size_t x = 0; x < n; ++x)
        for (size_t y = 0; y < n; ++y) {
            const size_t lvl = std::abs(w0[y] - r.levels[0]) < 1e-12 ? 0 : 1;
            k[x * n + y] = r.prob(x, lvl) * w0.domain().cell_area() / r.level_area[lvl];
        }
    const BistochasticMatrix K(n, k, 1e-12);
    EXPECT_LE(max_abs_diff(apply(K, w0).values(), r.omega_bar.values()), 1e-13);
}

TEST(Mrs, IncreasingRelationIsMinimal) {
    // For two levels F⁻¹ is explicit, so G = ∫F⁻¹ is
    //   G(s) = [(ℓ₁−ℓ₂)s − (σ₁−s)log(σ₁−s) − (s−σ₂)log(s−σ₂)] / (β(σ₁−σ₂)),
    // and on the energy shell I_G(ω) − I_G(ω̄) ≥ E(ω − ω̄) ≥ 0.
    const auto w0 = two_level_disk(64);
    const double beta = -10.0;
    const auto r = mrs_coarse_grain(w0, beta);
    const double s1 = r.levels[1], s2 = r.levels[0], dl = r.log_g[1] - r.log_g[0];
    auto G = [&](double s) {
        return (dl * s - (s1 - s) * std::log(s1 - s) - (s - s2) * std::log(s - s2)) / (beta * (s1 - s2));
    };
    auto Gp = [&](double s) { return (dl + std::log(s1 - s) - std::log(s - s2)) / (beta * (s1 - s2)); };
    for (size_t x = 0; x < w0.size(); ++x) EXPECT_NEAR(Gp(r.omega_bar[x]), r.psi_bar[x], 1e-9);
    auto IG = [&](const std::vector<double>& w) {
        double s = 0;
        for (double v : w) s += G(v);
        return s * w0.domain().cell_area();
    };
    const double e0 = energy(r.omega_bar), i0 = IG(r.omega_bar.values());
    const double m = r.omega_bar.mean();
    const auto d = w0.domain();
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U(0, 1);
    int accepted = 0;
    for (int trial = 0; trial < 400 && accepted < 100; ++trial) {
        const double theta = std::pow(10.0, -1.0 - 2.0 * U(rng));
        std::vector<size_t> perm(d.cells());
        std::iota(perm.begin(), perm.end(), size_t{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<double> eta(d.cells());
        for (size_t k = 0; k < d.cells(); ++k) eta[k] = (1 - theta) * r.omega_bar[k] + theta * r.omega_bar[perm[k]] - m;
        const VorticityField E(d, eta);
        const double a = energy(VorticityField::constant(d, m)), c = energy(E);
        const double b = energy(VorticityField::constant(d, m) + E) - a - c;
        const double disc = b * b - 4 * c * (a - e0);
        if (disc < 0 || c <= 0) continue;
        const double r1 = (-b + std::sqrt(disc)) / (2 * c), r2 = (-b - std::sqrt(disc)) / (2 * c);
        const double t = std::abs(r1 - 1) < std::abs(r2 - 1) ? r1 : r2;
        std::vector<double> w(d.cells());
        bool inside = true;
        for (size_t k = 0; k < d.cells(); ++k) {
            w[k] = m + t * eta[k];
            inside = inside && w[k] > s2 && w[k] < s1;
        }
        if (!inside) continue;
        ++accepted;
        const VorticityField W(d, w);
        EXPECT_NEAR(energy(W), e0, 1e-10 * e0);
        EXPECT_GE(IG(w) - i0, energy(W - r.omega_bar) * (1 - 1e-6) - 1e-13);
    }
    EXPECT_GE(accepted, 50);
}

TEST(Mrs, LevelCap) {
    const auto d = Domain::torus(16, 16);
    std::vector<double> v(d.cells());
    for (size_t k = 0; k < v.size(); ++k) v[k] = static_cast<double>(k % 65);
    try {
        mrs_coarse_grain(VorticityField::with_auto_bound(d, v), 1.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::LevelCap);
    }
}

TEST(SteadyState, DetectsNonStationaryPairs) {
    const auto d = Domain::torus(64, 64);
    const auto w = VorticityField::sample(d, [](double x, double y) { return std::cos(x) + std::cos(2 * y); });
    PoissonSolver solver(d);
    const auto psi = VorticityField::with_auto_bound(d, solver.solve(w.values()));
    EXPECT_GT(steady_state_residual(w, psi), 0.1);
    const auto w1 = VorticityField::sample(d, [](double x, double y) { return std::cos(x) + std::cos(y); });
    const auto psi1 = VorticityField::with_auto_bound(d, solver.solve(w1.values()));
    EXPECT_LE(steady_state_residual(w1, psi1), 1e-14);
    const auto dc = Domain::channel(32, 32);
    const auto wc = VorticityField::sample(dc, [](double x, double y) { return std::sin(x) * std::sin(kPi * y) + y; });
    const auto pc = VorticityField::with_auto_bound(dc, PoissonSolver(dc).solve(wc.values()));
    EXPECT_GT(steady_state_residual(wc, pc), 0.01);
}
