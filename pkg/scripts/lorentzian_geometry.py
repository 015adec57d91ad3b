"""Track the vacuum-expectation metric of the (3,1) model under a u14 + u41 drive.

At t = 0 the metric is diag(1, 1, 1, -1). The drive u14 + u41 rotates the first
and timelike directions into each other: the diagonal entries follow cos(2t)
while the eigenvalues, and so the signature, stay fixed.
"""

import argparse

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from spqm.observables import lorentzian_ground_state, vev_metric


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--tmax", type=float, default=1.0)
    ap.add_argument("--points", type=int, default=6)
    args = ap.parse_args()

    gs = lorentzian_ground_state()
    real = gs.realization
    base = vev_metric(gs.vector, real)
    H = sp.csr_matrix(real.matrix(real.basis.element(("u", 1, 4)) + real.basis.element(("u", 4, 1))))
    print(f"space dimension {real.dim}, scale {base.scale:.6g}")
    print(f"{'t':>6}  {'eta diagonal':<44} signature  |eta - eta0|")
    for t in np.linspace(0.0, args.tmax, args.points):
        psi = expm_multiply(-1j * t * H, gs.vector)
        m = vev_metric(psi, real, scale=base.scale)
        diag = " ".join(f"{v:+.5f}" for v in np.real(np.diag(m.eta)))
        print(f"{t:6.2f}  {diag:<44} {str(m.signature):<10} {np.linalg.norm(m.eta - base.eta):.4f}")


if __name__ == "__main__":
    main()
