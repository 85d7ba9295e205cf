"""Regenerate the bundled JSON fixtures in src/goldie/fixtures."""

import json
import math
from pathlib import Path

import numpy as np

from goldie.corpus import planted_sigma_families, planted_triples
from goldie.gge import GgeTriple
from goldie.kernel import CompositeKernel, PerturbedKernel, RayKernel
from goldie.popa_core import LinearFunctional

OUT = Path(__file__).resolve().parents[1] / "src" / "goldie" / "fixtures"


def write(name, obj):
    (OUT / name).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    rho = LinearFunctional(np.array([1.0, 0.5, -0.25]))
    alpha = LinearFunctional(np.array([0.3, -1.0, 0.5]))
    zero = LinearFunctional.zero(3)
    y0 = np.array([1.0, -0.5, 2.0])

    write("group_d3.json", {"dim": 3, "rho": rho.to_json()})
    write("link_identity.json", {"gamma": 0.0, "rho": 0.0})
    write("link_power.json", {"gamma": math.log(2.0), "rho": 1.0})
    write("hom_log_to_finite.json", {"rho": "inf", "sigma": 0.5, "kappa": 1.5})
    write("aux_power.json", {"rho": rho.to_json(), "alpha": zero.to_json(), "beta": 2.0})
    write("aux_exponential.json", {"rho": zero.to_json(), "alpha": alpha.to_json(), "beta": 0.0})
    write("aux_mixed.json", {"rho": rho.to_json(), "alpha": {"coeffs": [0.0, 1.0, 2.0]},
                             "beta": 1.0})

    ray_na = RayKernel(rho, y0, 0.8, 1.5)
    ray_nb = RayKernel(zero, y0, 0.8, 1.0, alpha)
    write("kernel_ray_na.json", {**ray_na.to_json(), "regime": "NA"})
    write("kernel_ray_nb.json", {**ray_nb.to_json(), "regime": "NB"})
    write("kernel_linear.json", {"family": "linear", "L": [[1.0, 2.0, 0.0], [0.0, 1.0, -1.0]]})
    sig = np.array([0.5, 0.0, 0.25])
    yc = y0 * (1.25 / (sig @ y0))
    P = np.eye(3) - np.outer(yc, sig) / (sig @ yc)
    L = P @ np.array([[1.0, 0.0, 2.0], [0.5, 1.0, 0.0], [0.0, -1.0, 1.0]])
    comp = CompositeKernel(rho, L, yc, 1.25, 0.8)
    write("kernel_composite.json", {**comp.to_json(), "regime": "NA"})
    write("kernel_perturbed.json", PerturbedKernel(ray_na, 0, 1e-3).to_json())

    for case, T in (("iv", GgeTriple.from_kernel(ray_na)), ("ii", GgeTriple.from_kernel(ray_nb))):
        write(f"triple_case_{case}.json", {**T.to_json(), "case": case})

    write("corpus_sigma.json", [p.to_json() for p in planted_sigma_families(seed=0)])
    write("corpus_triples.json", [p.to_json() for p in planted_triples(seed=0)])


if __name__ == "__main__":
    main()
