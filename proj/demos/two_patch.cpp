#include "mflab/mflab.hpp"

#include <cstdio>

using namespace mflab;

int main() {
    const auto w0 = VorticityField::sample(Domain::torus(64, 64), [](double x, double y) {
        return std::sin(x) + 0.5 * std::sin(y) > 0 ? 1.0 : -1.0;
    });
    const auto r = minimize_casimir(w0, ConvexFunctionSpec::quadratic(), false);
    const auto kkt = kkt_report(r, w0);
    const auto fit = monotone_fit(r.omega_star, r.psi_star.psi_field());

    std::printf("I_f(omega0) = %.6f  I_f(omega*) = %.6f\n", r.f_value0, r.f_value);
    std::printf("energy %.12f -> %.12f\n", energy(w0), energy(r.omega_star));
    std::printf("clamp fit: mu0 = %.6f mu1 = %.6f residual %.2e\n", kkt.mu0, kkt.mu1, kkt.fit_residual);
    std::printf("in orbit closure: %s\n", in_orbit_closure(r.omega_star, w0).member ? "yes" : "no");
    std::printf("psi-omega relation %s, isotonic residual %.2e\n",
                fit.direction == MonotoneFitReport::Direction::Decreasing ? "decreasing" : "increasing",
                fit.isotonic_residual);
}
