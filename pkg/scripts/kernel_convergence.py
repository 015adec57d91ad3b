"""Overlap kernel versus truncated oscillator sums, and the Cayley/exp gap.

The first table shows the truncated Fock overlap approaching the closed-form
scalar kernel as more levels are kept. The second shows the difference between
the Cayley and exponential coherent states shrinking like |z|^3. The
Cayley resolvent series is asymptotic, so the oscillator cutoff stays modest.
"""

import numpy as np

from spqm.coherent_states import SymCoord, cayley_cs, exp_cs, fock_overlap_series, scalar_kernel
from spqm.rep_theory import build_metaplectic


def main():
    zp, zs = 0.45 + 0.1j, 0.3 - 0.35j
    for flavours in (1, 2, 3):
        exact = scalar_kernel(SymCoord(np.array([[zp]])), SymCoord(np.array([[zs]])), flavours / 2)
        row = [abs(fock_overlap_series(zp, zs, flavours, terms=m) - exact) for m in (5, 10, 20, 40)]
        print(f"flavours {flavours}: " + "  ".join(f"{e:.2e}" for e in row))

    real = build_metaplectic(1, 30)
    vac = np.zeros(real.dim, complex)
    vac[0] = 1.0
    print(f"{'|z|':>8} {'|cayley - exp|':>16}")
    prev = None
    for r in (0.2, 0.1, 0.05, 0.025):
        Z = SymCoord(np.array([[r * np.exp(0.7j)]]))
        gap = np.linalg.norm(cayley_cs(Z, real, vac) - exp_cs(Z, real, vac))
        ratio = "" if prev is None else f"  ratio {prev / gap:.2f}"
        print(f"{r:8.3f} {gap:16.3e}{ratio}")
        prev = gap


if __name__ == "__main__":
    main()
