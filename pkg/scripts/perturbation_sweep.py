"""How large can a smooth perturbation of a concave-of-sum cost be before T < 0 fails?

c = -|x1 + x2 + x3|^2 + eps * sin(<w1, x1> + <w2, x2> + <w3, x3>); for each eps
the largest eigenvalue of sym(T) over a sampled scan is printed.

    python scripts/perturbation_sweep.py --samples 100
"""

import argparse

import numpy as np

from mmot.conditions import scan_T_negative
from mmot.costs import ConcaveOfSum, SinePerturbation


def main(argv=None):
    p = argparse.ArgumentParser()
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    pert = SinePerturbation([rng.normal(size=args.dim) for _ in range(3)])
    print("eps,max_eig_T,verdict")
    first_fail = None
    for eps in (0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 6.0, 8.0, 12.0, 16.0):
        c = ConcaveOfSum(3, args.dim, perturbation=pert, epsilon=eps)
        r = scan_T_negative(c, args.samples, args.seed)
        print(f"{eps},{r.worst_value:.4f},{r.verdict}")
        if r.verdict == "fail" and first_fail is None:
            first_fail = eps
    print(f"# first failing eps: {first_fail}")


if __name__ == "__main__":
    main()
