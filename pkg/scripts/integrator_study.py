"""Compare the three group-path integrators on a driven two-term generator.

Prints the error of Magnus (orders 2 and 4) against a tight reference as the
number of sub-steps grows, together with Wei-Norman and RK4 errors.
"""

import argparse
import math

import numpy as np

from spqm.evolution import GeneratorSpec, constant, evolve_ode, magnus_expand, wei_norman
from spqm.sp_algebra import build_basis, defining_realization


def drive(n: int) -> GeneratorSpec:
    b = build_basis(n)
    x = b.element(("e", 1, 1)) + b.element(("f", 1, 1))
    y = b.element(("h", 1))
    if n > 1:
        y = y + b.element(("u", 1, n)) + b.element(("u", n, 1))
    return GeneratorSpec([(math.cos, x), (constant(0.5), y)])


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rank", type=int, default=4)
    ap.add_argument("--t", type=float, default=0.5)
    args = ap.parse_args()

    real = defining_realization(args.rank)
    spec = drive(args.rank)
    ref = evolve_ode(spec, np.array([0.0, args.t]), real, substeps=4096).mats[-1]

    print(f"rank {args.rank}, t = {args.t}")
    print(f"{'steps':>6} {'magnus2':>12} {'magnus4':>12}")
    for steps in (1, 2, 4, 8, 16):
        errs = [np.max(np.abs(magnus_expand(spec, args.t, k, real, steps=steps) - ref)) for k in (2, 4)]
        print(f"{steps:>6} {errs[0]:>12.3e} {errs[1]:>12.3e}")

    wn = wei_norman(spec, np.array([0.0, args.t]))
    print(f"wei-norman     {np.max(np.abs(wn.reconstruct(real, 1) - ref)):.3e}")
    for sub in (8, 32, 128):
        rk = evolve_ode(spec, np.array([0.0, args.t]), real, substeps=sub).mats[-1]
        print(f"rk4 x{sub:<4}     {np.max(np.abs(rk - ref)):.3e}")


if __name__ == "__main__":
    main()
