#include "mflab/mflab.hpp"

#include <cstdio>
#include <iostream>

using namespace mflab;

int main() {
    SimConfig c;
    c.domain = Domain::torus(64, 64);
    c.dt = 0.05;
    c.t_end = 20;
    c.record_every = 40;
    const auto tr = run(c, random_datum(c.domain, 42));

    std::printf("%6s %20s %12s %10s\n", "t", "energy", "enstrophy", "mean");
    for (const auto& g : tr.diagnostics) std::printf("%6.1f %20.15f %12.6f %10.2e\n", g.t, g.energy, g.enstrophy, g.mean);

    const auto probe = omega_limit_probe(tr, 10.0);
    std::cout << "\nomega-limit candidate from " << probe.snapshots_used << " snapshots: member "
              << (probe.membership.member ? "yes" : "no") << ", enstrophy " << probe.enstrophy_datum << " -> "
              << probe.enstrophy_candidate << "\n";
}
