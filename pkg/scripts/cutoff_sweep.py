"""Multiplier check for the smooth cutoff as |k| grows.

For each |k| on the lattice, reports the X^{1/2} norm ratio of phi*w to w
against sqrt(<k>) where w is a random band-limited field.
"""
import argparse

import numpy as np

from calderon.bourgain import make_zeta
from calderon.cgo import cutoff_norm_check
from calderon.spectral import ScalarField, create_grid


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--N", type=int, default=32)
    p.add_argument("--s", type=float, default=16.0)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    grid = create_grid(3, args.N, 3.0)
    rng = np.random.default_rng(args.seed)
    w = ScalarField(grid, rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape))
    print("mode,abs_k,ratio,bracket_sqrt,ratio_over_bracket")
    for m in range(0, min(2 * int(args.s / grid.dxi), args.N // 2), 3):
        k = np.array([m, 0, 0], float) * grid.dxi
        z = make_zeta(k, args.s)
        out = cutoff_norm_check(w, z, k)
        print(f"{m},{np.linalg.norm(k):.4f},{out['ratio']:.4e},{out['bracket_sqrt']:.4e},"
              f"{out['ratio'] / out['bracket_sqrt']:.4e}")


if __name__ == "__main__":
    main()
