"""Twist, non-degeneracy and T-negativity verdicts for every preset.

    python scripts/condition_survey.py --samples 50
"""

import argparse

from mmot.cli import PRESETS, preset_cost
from mmot.conditions import check_nondegenerate, check_twist, scan_T_negative


def main(argv=None):
    p = argparse.ArgumentParser()
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    print(f"{'preset':14s} {'twist':>6s} {'nondeg':>7s} {'T':>5s} {'max eig T':>10s}")
    for name in PRESETS:
        cost, boxes = preset_cost(name, 3, args.dim)
        tw = check_twist(cost, 0, 2, args.samples, 4, args.seed, boxes)
        nd = check_nondegenerate(cost, 0, 2, args.samples, args.seed, boxes)
        tt = scan_T_negative(cost, args.samples, args.seed, boxes)
        print(f"{name:14s} {tw.verdict:>6s} {nd.verdict:>7s} {tt.verdict:>5s} {tt.worst_value:10.4f}")


if __name__ == "__main__":
    main()
