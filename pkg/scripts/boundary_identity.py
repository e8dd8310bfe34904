"""Volume form of the DtN difference against its harmonic action on CGO traces."""
import argparse

import numpy as np

from calderon.conductivity import gaussian_bump, unit
from calderon.spectral import create_grid
from calderon.stability import boundary_identity_check


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--N", type=int, nargs="+", default=[32, 64])
    p.add_argument("--s", type=float, nargs="+", default=[1.0, 2.0, 3.0])
    p.add_argument("--amplitude", type=float, default=0.1)
    args = p.parse_args(argv)

    model = gaussian_bump(args.amplitude, w=0.5)
    print("N,s,volume_re,boundary_re,rel_diff,tail")
    for N in args.N:
        grid = create_grid(3, N, 3.0)
        for s in args.s:
            k = np.array([2, 1, 0], float) * grid.dxi if s >= 2 else np.zeros(3)
            out = boundary_identity_check(model, unit(), grid, k, s)
            print(f"{N},{s},{np.real(out['volume']):.6e},{np.real(out['boundary']):.6e},"
                  f"{out['rel_diff']:.3e},{out['tail']:.1e}")


if __name__ == "__main__":
    main()
