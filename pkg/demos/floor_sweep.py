"""Sweep the retention floor on a tabulated-model portfolio and print the report table.

Each floor is solved on the premium-change grid with the discrete solver.
Run with ``python3 demos/floor_sweep.py [n] [seed]``.
"""

import sys

from renewalopt import Constraints, Scenario, emit_report, generate_synthetic, run_scenario

FLOORS = (0.85, 0.875, 0.90, 0.925, 0.95)


def main(n: int = 2000, seed: int = 0) -> None:
    pf = generate_synthetic(n, seed, model="mc")
    reports = [
        run_scenario(pf, Scenario("volume", Constraints(ell, (-0.2, 0.2)), name=f"floor {ell:.3f}"))
        for ell in FLOORS
    ]
    print(emit_report(reports, "table"))


if __name__ == "__main__":
    main(*(int(a) for a in sys.argv[1:3]))
