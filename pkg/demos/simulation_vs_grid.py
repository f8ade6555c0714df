"""Compare random-search optimisation against the grid solver on one portfolio.

The simulation draws ``m`` candidate premium vectors from a prior, keeps the
feasible ones and reports the best. Larger ``m`` closes the gap to the grid
optimum. Run with ``python3 demos/simulation_vs_grid.py``.
"""

from renewalopt import Constraints, Scenario, generate_synthetic, run_scenario

FLOOR = 0.90


def main(n: int = 500, seed: int = 1) -> None:
    pf = generate_synthetic(n, seed, model="mc")
    cons = Constraints(FLOOR, (-0.2, 0.2))
    grid = run_scenario(pf, Scenario("volume", cons, solver="mdnlp"))
    print(f"grid solver      growth {grid.volume_growth_pct:7.3f}%  retention {grid.retention:.4f}")
    for m in (10, 100, 1000):
        for prior in ("uniform-table", "mdnlp"):
            sim = run_scenario(pf, Scenario("volume", cons, solver="sim", sim_m=m, sim_prior=prior, seed=seed))
            gap = grid.volume_growth_pct - sim.volume_growth_pct
            print(f"sim m={m:<5d} {prior:<14s} growth {sim.volume_growth_pct:7.3f}%  "
                  f"gap {gap:6.3f} pp  acceptance {sim.acceptance_rate:.3f}")


if __name__ == "__main__":
    main()
