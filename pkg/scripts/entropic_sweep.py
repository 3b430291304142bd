"""Entropic objective against the LP optimum as epsilon shrinks.

Writes a CSV (epsilon fraction, iterations, gap / cost range, TV error) to
stdout for one gs instance; pipe it wherever a plot is wanted.

    python scripts/entropic_sweep.py --n 6 --seed 0
"""

import argparse
import csv
import sys

from mmot.cli import preset_cost
from mmot.geometry import uniform_marginal
from mmot.solver import make_instance, solve_entropic, solve_lp


def main(argv=None):
    p = argparse.ArgumentParser()
    p.add_argument("--preset", default="gs")
    p.add_argument("--n", type=int, default=6)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    cost, boxes = preset_cost(args.preset, 3, args.dim)
    inst = make_instance([uniform_marginal(b, args.n, 1000 * args.seed + i) for i, b in enumerate(boxes)], cost)
    lp = solve_lp(inst).coupling.objective
    rng_ = inst.cost_range()
    w = csv.writer(sys.stdout)
    w.writerow(["eps_fraction", "iterations", "converged", "gap_over_range", "tv_error"])
    for frac in (0.2, 0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001):
        res = solve_entropic(inst, frac * rng_)
        w.writerow([frac, res.iterations, res.converged, f"{(res.coupling.objective - lp) / rng_:.6f}", f"{res.tv_error:.2e}"])


if __name__ == "__main__":
    main()
