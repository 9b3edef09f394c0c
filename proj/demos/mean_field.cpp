#include "mflab/mflab.hpp"

#include <cstdio>

using namespace mflab;

int main() {
    const Domain disk = Domain::disk(512);
    const auto liou = liouville_solve(VorticityField::constant(disk, 1.0 / kPi), 4 * kPi);
    const double A = 1.0 / 3.0;
    std::printf("Liouville on the unit disk, beta = 4 pi\n%8s %14s %14s\n", "r", "omega_bar", "explicit");
    for (int j = 0; j < 512; j += 64) {
        const double r = disk.x2(j);
        std::printf("%8.4f %14.10f %14.10f\n", r, liou.omega_bar[static_cast<size_t>(j)],
                    (1 - A) / kPi / std::pow(1 - A * r * r, 2));
    }

    const auto two_level = VorticityField::sample(Domain::disk(256), [](double, double r) { return r < 0.5 ? 2.0 : 0.5; });
    std::printf("\nMRS on a two-level disk datum\n%6s %10s %12s\n", "beta", "energy", "min var");
    for (double beta : {-10.0, -1.0, 1.0, 5.0}) {
        const auto m = mrs_coarse_grain(two_level, beta);
        std::printf("%6.1f %10.6f %12.3e\n", beta, m.energy, m.min_variance());
    }
}
