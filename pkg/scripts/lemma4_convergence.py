"""Convergence of the rescaled iterate ratio for a few ray kernels.

Prints, per kernel and t, the limit estimate, the exponential-branch target
and the fitted log-log slope of the error against n.
"""

import argparse

import numpy as np

from goldie.gge import Eta
from goldie.kernel import RayKernel, lemma4_limit
from goldie.popa_core import LinearFunctional


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-max", type=int, default=128)
    ap.add_argument("--n-min", type=int, default=8)
    ap.add_argument("--t", type=float, nargs="+", default=[0.5, 2.0, 3.0])
    args = ap.parse_args()

    rho = LinearFunctional([1.0, -0.5, 0.25])
    zero = LinearFunctional.zero(3)
    kernels = {
        "power s=0.7 kappa=1.3": RayKernel(rho, np.array([1.0, 2.0, -0.5]), 0.7, 1.3),
        "power s=-0.6 kappa=2": RayKernel(rho, np.array([0.5, -1.0, 1.0]), -0.6, 2.0),
        "exponential rho=0": RayKernel(zero, np.array([1.0]), 0.9, 1.0,
                                       LinearFunctional([0.4, -1.0, 0.3])),
    }
    u = np.array([0.3, 0.1, 0.2])
    print(f"{'kernel':<24} {'t':>5} {'estimate':>14} {'target':>14} {'slope':>8}")
    for name, K in kernels.items():
        h = Eta(K.aux().rho)
        for t in args.t:
            lim = lemma4_limit(K, h, K.aux(), u, t, n_max=args.n_max, n_min=args.n_min)
            exact = max(lim.errors) <= 1e-12
            slope = "exact" if exact else f"{lim.rate:8.3f}"
            print(f"{name:<24} {t:5.2f} {lim.estimate:14.10f} {lim.target:14.10f} {slope:>8}")


if __name__ == "__main__":
    main()
