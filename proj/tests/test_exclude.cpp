#include "mflab/exclude.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace mflab;

namespace {

/// Gauss–Legendre nodes and weights on [−1, 1] by Newton on P_n.
std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n) {
    std::vector<double> x(n), w(n);
    for (int i = 0; i < n; ++i) {
        double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = z;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            const double dp = n * (z * p1 - p0) / (z * z - 1.0);
            const double dz = p1 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) {
                x[i] = z;
                w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
                break;
            }
        }
    }
    return {x, w};
}

/// ∫∫_{A×A} g_k with g_k(y, z) = sinh(k·min)·sinh(k(1 − max))/(k sinh k),
/// by composite Gauss–Legendre on the triangle y < z (doubled).
double kernel_double_integral(double k, double eps) {
    const auto [x, w] = gauss_legendre(24);
    const double a = 0.5 - eps, b = 0.5 + eps;
    const int panels = 16;
    const double hp = (b - a) / panels;
    double total = 0.0;
    for (int pz = 0; pz < panels; ++pz)
        for (size_t iz = 0; iz < x.size(); ++iz) {
            const double z = a + hp * (pz + 0.5 * (x[iz] + 1.0));
            const double wz = 0.5 * hp * w[iz];
            // inner ∫_a^z in y, split into the same panels up to z
            double inner = 0.0;
            const int full = pz;
            for (int py = 0; py <= full; ++py) {
                const double lo = a + hp * py, hi = py == full ? z : lo + hp;
                for (size_t iy = 0; iy < x.size(); ++iy) {
                    const double y = lo + (hi - lo) * 0.5 * (x[iy] + 1.0);
                    const double g = std::sinh(k * y) * std::sinh(k * (1.0 - z)) / (k * std::sinh(k));
                    inner += 0.5 * (hi - lo) * w[iy] * g;
                }
            }
            total += wz * inner;
        }
    return 2.0 * total;
}

/// E_k = π|ĉ_k|²J_k with ĉ_k = δε⁻² sin(kε)/(πk).
double oracle_mode_energy(double k, double delta, double eps) {
    const double c = delta / (eps * eps) * std::sin(k * eps) / (kPi * k);
    return kPi * c * c * kernel_double_integral(k, eps);
}

} // namespace

TEST(BuildPeaked, MassAndShape) {
    const Domain d = Domain::channel(512, 512);
    const auto base = kolmogorov_field(d);
    const auto p = build_peaked(base, 0.1, 1.0 / 32);
    const auto w = p.perturbation();
    double l1 = 0.0;
    for (double v : w.values()) l1 += std::abs(v);
    EXPECT_NEAR(l1 * d.cell_area(), 0.4, 1e-12);
    EXPECT_NEAR(w.max(), 0.1 * 1024.0, 1e-9);
    size_t support = 0;
    for (double v : w.values()) support += v > 0 ? 1 : 0;
    const double area = static_cast<double>(support) * d.cell_area();
    const double layer = 2.0 * (2.0 / 32) * (d.dx() + d.dy()) + 4.0 * d.dx() * d.dy();
    EXPECT_NEAR(area, 4.0 / (32.0 * 32.0), layer);
    EXPECT_NEAR(momentum(p.xi) - momentum(base), -0.2, 1e-12);
    EXPECT_LE(std::abs(momentum(p.xi) - momentum(base)), 0.4);
}

TEST(BuildPeaked, ZeroBaseMean) {
    const Domain d = Domain::channel(256, 256);
    const auto p = build_peaked(VorticityField::zeros(d), 0.1, 0.05);
    EXPECT_NEAR(p.xi.mean(), 0.4 / d.area(), 1e-14);
}

TEST(BuildPeaked, Preconditions) {
    const Domain d = Domain::channel(256, 256);
    try {
        build_peaked(VorticityField::zeros(d), 0.1, 0.1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Precondition);
    }
    try {
        build_peaked(VorticityField::zeros(Domain::channel(64, 64)), 0.1, 1.0 / 64);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EpsUnresolved);
    }
    EXPECT_THROW(build_peaked(VorticityField::zeros(Domain::torus(64, 64)), 0.1, 0.05), Error);
}

TEST(SpectralEnergy, ModeTermsMatchQuadrature) {
    for (double eps : {0.03, 0.2})
        for (double k : {1.0, 3.0, 17.0, 60.0}) {
            const double want = oracle_mode_energy(k, 0.1, eps);
            EXPECT_NEAR(detail::box_mode_energy(k, 0.1, eps), want, 1e-9 * want) << "k=" << k << " eps=" << eps;
        }
}

TEST(SpectralEnergy, ZeroModeTerm) {
    const double delta = 0.1, eps = 1.0 / 64;
    const auto s = box_energy_spectral(delta, eps);
    EXPECT_NEAR(s.e0, delta / kPi, delta * eps);
    // ψ̂₀ at the centre is −δ/(2π) + O(δε)
    const double J0 = kernel_double_integral(1e-6, eps);
    EXPECT_NEAR(s.e0 * delta, kPi * std::pow(delta / (kPi * eps), 2) * J0, 1e-9 * s.e0 * delta);
}

TEST(SpectralEnergy, HighModeBoundAndTail) {
    const double delta = 0.1, eps = 1.0 / 32;
    const auto s = box_energy_spectral(delta, eps, 0, 1, 4096);
    const double C = 2.0 * delta / kPi;
    for (size_t k = 1; k <= s.modes.size(); ++k) {
        const double ke = static_cast<double>(k) * eps;
        EXPECT_GE(s.modes[k - 1], 0.0);
        if (ke >= 0.1) {
            EXPECT_LE(s.modes[k - 1], C * eps / std::pow(ke, 4) * (1 + 1e-12));
        }
    }
    double tail = 0.0;
    for (long long k = 200000; k > s.kmax; --k) tail += 2.0 * detail::box_mode_energy(static_cast<double>(k), delta, eps);
    EXPECT_LE(tail, s.tail_bound);
    EXPECT_GT(tail, 0.1 * s.tail_bound);
}

TEST(SpectralEnergy, AgreesWithGridQuadrature) {
    const auto p = build_peaked(VorticityField::zeros(Domain::channel(1024, 1024)), 0.1, 1.0 / 32);
    const auto s = peaked_energy_spectral(p);
    EXPECT_LE(std::abs(energy(p.xi) / s.energy() - 1.0), 0.01);
    EXPECT_THROW(peaked_energy_spectral(build_peaked(kolmogorov_field(Domain::channel(1024, 1024)), 0.1, 1.0 / 32)), Error);
}

TEST(SpectralEnergy, LogScaling) {
    std::vector<double> L, E;
    for (int j = 5; j <= 10; ++j) {
        const double eps = std::ldexp(1.0, -j);
        L.push_back(std::log(1.0 / eps));
        E.push_back(box_energy_spectral(0.1, eps).energy());
    }
    for (size_t i = 1; i < E.size(); ++i) {
        EXPECT_GT(E[i], E[i - 1]);
        const double r0 = E[i - 1] / (0.01 * L[i - 1]), r1 = E[i] / (0.01 * L[i]);
        EXPECT_LE(std::abs(r1 / r0 - 1.0), 0.05);
    }
    // least-squares line E ≈ a + bL
    const double n = static_cast<double>(L.size());
    double sl = 0, se = 0, sll = 0, sle = 0;
    for (size_t i = 0; i < L.size(); ++i) {
        sl += L[i];
        se += E[i];
        sll += L[i] * L[i];
        sle += L[i] * E[i];
    }
    const double b = (n * sle - sl * se) / (n * sll - sl * sl), a = (se - b * sl) / n;
    double res = 0, nrm = 0;
    for (size_t i = 0; i < L.size(); ++i) {
        res += std::pow(E[i] - a - b * L[i], 2);
        nrm += E[i] * E[i];
    }
    EXPECT_GT(b, 0.0);
    EXPECT_LE(std::sqrt(res / nrm), 0.05);
}

TEST(SpectralEnergy, ThreadCountDoesNotChangeBits) {
    const auto a = box_energy_spectral(0.1, 1e-5, 0, 1);
    const auto b = box_energy_spectral(0.1, 1e-5, 0, 4);
    EXPECT_EQ(a.head, b.head);
}

TEST(ShearBound, ZeroAndFeasibleShear) {
    const Domain d = Domain::channel(64, 64);
    EXPECT_EQ(max_shear_energy_bound(VorticityField::zeros(d), 0.0), 0.0);
    const auto k = kolmogorov_field(d);
    EXPECT_GE(max_shear_energy_bound(k, momentum(k)), energy(k));
    EXPECT_LE(max_shear_energy_bound(k, 0.0), shear_energy_bound_l1(k));
    EXPECT_THROW(max_shear_energy_bound(VorticityField::zeros(Domain::torus(8, 8)), 0.0), Error);
}

TEST(ShearBound, StripEnergyMatchesPoissonSolver) {
    const Domain d = Domain::channel(16, 64);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U(-1, 1);
    std::vector<double> p(64), v(d.cells());
    for (double& x : p) x = U(rng);
    for (int j = 0; j < d.ny; ++j)
        for (int i = 0; i < d.nx; ++i) v[d.index(i, j)] = p[j];
    const double e = energy(VorticityField(d, v));
    EXPECT_NEAR(detail::strip_energy(p, d.lx), e, 1e-12 * e);
}

TEST(ShearBound, HeuristicMaximumStaysBelowBound) {
    const Domain d = Domain::channel(16, 64);
    for (int trial = 0; trial < 3; ++trial) {
        const auto w = mflab::testing::random_field(d, 40 + trial);
        const auto h = max_shear_energy_heuristic(w, 100, 7 + trial);
        EXPECT_LE(h.energy, max_shear_energy_bound(w, momentum(w)));
        EXPECT_GT(h.energy, 0.0);
    }
    // a feasible shear datum is reached or beaten
    const auto k = kolmogorov_field(d);
    EXPECT_GE(max_shear_energy_heuristic(k, 20, 3).energy, energy(k) * (1 - 1e-12));
}

TEST(ShearBound, SoundForPeakedDatum) {
    const auto p = build_peaked(kolmogorov_field(Domain::channel(256, 256)), 0.1, 0.05);
    const auto h = max_shear_energy_heuristic(p.xi, 100, 11);
    EXPECT_LE(h.energy, max_shear_energy_bound(p.xi, momentum(p.xi)));
}

TEST(BaseSummary, KolmogorovMatchesGrid) {
    const auto a = kolmogorov_base();
    const auto g = summarize_base(kolmogorov_field(Domain::channel(16, 512)));
    EXPECT_NEAR(g.energy, a.energy, 1e-4 * a.energy);
    EXPECT_NEAR(g.mass_pos, a.mass_pos, 1e-4);
    EXPECT_NEAR(g.mass_neg, a.mass_neg, 1e-4);
    EXPECT_NEAR(g.momentum, a.momentum, 1e-4);
    EXPECT_LE(g.abs_energy, a.abs_energy);
    EXPECT_NEAR(g.psi_max, a.psi_max, 1e-4 * a.psi_max);
}

TEST(Certificate, KolmogorovThreshold) {
    const auto base = kolmogorov_base();
    const auto c = certify_no_shear(base, 0.1, 1.0 / 32);
    EXPECT_FALSE(c.verdict);
    ASSERT_TRUE(std::isfinite(c.epsilon_threshold));
    EXPECT_NEAR(c.momentum_match, 0.8, 1e-15);
    for (int j = 0; j <= 6; ++j) {
        const auto s = exclusion_sides(base, 0.1, c.epsilon_threshold * std::ldexp(1.0, -j));
        EXPECT_TRUE(s.verdict) << j;
        EXPECT_GT(s.energy_xi, s.bound + s.margin);
    }
    EXPECT_FALSE(exclusion_sides(base, 0.1, c.epsilon_threshold * 1.002).verdict);
    const auto in = certify_no_shear(base, 0.1, c.epsilon_threshold / 2);
    EXPECT_TRUE(in.verdict);
    EXPECT_NEAR(in.epsilon_threshold, c.epsilon_threshold, 1e-12 * c.epsilon_threshold);
    EXPECT_FALSE(c.scan.empty());
    for (size_t i = 1; i < c.scan.size(); ++i) EXPECT_GE(c.scan[i - 1].eps, c.scan[i].eps);
}

TEST(Certificate, RobustBelowThreshold) {
    const auto base = kolmogorov_base();
    const double eps_star = certify_no_shear(base, 0.1, 0.05).epsilon_threshold;
    const auto c = certify_no_shear(base, 0.1, eps_star / 4);
    EXPECT_TRUE(c.verdict);
    EXPECT_TRUE(c.robust);
    EXPECT_LT(c.robust_energy_lower, c.energy_xi);
    EXPECT_GT(c.robust_bound, c.shear_energy_bound);
}

TEST(Certificate, RobustLowerBoundHoldsForRandomPerturbations) {
    // on a resolved grid datum the uniform bound must sit below every perturbed energy
    const auto p = build_peaked(kolmogorov_field(Domain::channel(256, 256)), 0.1, 0.05);
    ExclusionOptions o;
    o.eps_floor = 1e-3;
    const auto c = certify_no_shear(p, o);
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> U(-1, 1);
    for (int t = 0; t < 10; ++t) {
        std::vector<double> v(p.xi.values());
        for (double& x : v) x *= 1.0 + 0.01 * U(rng);
        const auto pert = VorticityField::with_auto_bound(p.xi.domain(), v);
        EXPECT_GE(energy(pert), c.robust_energy_lower);
        EXPECT_LE(max_shear_energy_bound(pert, momentum(pert)), c.robust_bound);
    }
}

TEST(Certificate, PureShearIsNeverExcluded) {
    const auto k = kolmogorov_field(Domain::channel(64, 64));
    EXPECT_FALSE(certify_field(k).verdict);
    EXPECT_FALSE(exclusion_sides(kolmogorov_base(), 0.0, 0.01).verdict);
}

TEST(Certificate, BarelyPeakedIsNotExcluded) {
    const auto s = exclusion_sides(kolmogorov_base(), 0.1, 0.4);
    EXPECT_FALSE(s.verdict);
    try {
        certify_no_shear(kolmogorov_base(), 0.1, 0.4);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Precondition);
    }
}

TEST(Certificate, TextAndCsv) {
    const auto c = certify_no_shear(zero_base(), 0.1, 0.01);
    const auto txt = certificate_text(c);
    EXPECT_NE(txt.find("verdict = "), std::string::npos);
    EXPECT_EQ(scan_csv(c).rfind("eps,energy_xi,bound,verdict\n", 0), 0u);
}
