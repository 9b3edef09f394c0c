#include "mflab/mflab.hpp"

#include <cstdio>
#include <iostream>

using namespace mflab;

int main() {
    const auto base = kolmogorov_base();
    const auto c = certify_no_shear(base, 0.1, 1e-6);
    std::cout << certificate_text(c);

    /// E(ξ) grows like log(1/ε) while the shear bound stays put.
    std::printf("\n%10s %12s %12s %8s\n", "eps", "E(xi)", "bound", "verdict");
    for (double eps = 1.0 / 32; eps > 1e-7; eps /= 8) {
        const auto s = exclusion_sides(base, 0.1, eps);
        std::printf("%10.3g %12.6f %12.6f %8s\n", eps, s.energy_xi, s.bound, s.verdict ? "true" : "false");
    }
}
