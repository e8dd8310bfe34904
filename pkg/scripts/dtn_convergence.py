"""Radial DtN eigenvalues: RK4 step convergence and the two-layer limit."""
import argparse

import numpy as np

from calderon.conductivity import gaussian_bump, mollified_two_layer
from calderon.dtn import dtn_of_model, two_layer_reference


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--L-max", type=int, default=16)
    p.add_argument("--steps", type=int, nargs="+", default=[200, 400, 800, 1600])
    args = p.parse_args(argv)

    model = gaussian_bump(0.3, w=0.4)
    ref = dtn_of_model(model, args.L_max, 16 * max(args.steps)).mu
    print("steps,max_err,observed_order")
    prev = None
    for n in args.steps:
        err = float(np.max(np.abs(dtn_of_model(model, args.L_max, n).mu - ref)))
        order = "" if prev is None else f"{np.log2(prev / err):.2f}"
        print(f"{n},{err:.3e},{order}")
        prev = err

    # smoothing width w -> 0 approaches the piecewise-constant closed form
    exact = np.array([two_layer_reference(2.0, 0.5, l) for l in range(args.L_max + 1)])
    print("\nwidth,max_dev_from_two_layer")
    for width in (0.02, 0.005, 0.002, 5e-4):
        steps = max(2000, int(30 / width))
        mu = dtn_of_model(mollified_two_layer(2.0, 0.5, width), args.L_max, steps).mu
        print(f"{width},{np.max(np.abs(mu - exact)):.3e}")


if __name__ == "__main__":
    main()
