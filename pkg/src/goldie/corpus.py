"""Planted instances with known answers, generated from a seed.

* :func:`planted_sigma_families` gives kernels with a known regime and a known
  functional sigma (``g = 1 + sigma(K)``).
* :func:`planted_triples` gives Goldie triples with a known case of the
  tetrachotomy and known directional derivatives along a chosen u.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gge import GgeTriple, One
from .kernel import CompositeKernel, LinearKernel, KernelSpec, RayKernel
from .popa_core import LinearFunctional


@dataclass(eq=False)
class PlantedSigma:
    name: str
    regime: str
    kernel: KernelSpec
    sigma: LinearFunctional

    def to_json(self):
        return {"name": self.name, "regime": self.regime, "kernel": self.kernel.to_json(),
                "sigma": self.sigma.to_json()}


def _functional(rng, d, lo=0.3):
    # coefficients bounded away from zero so rho(e_i) never degenerates
    c = rng.uniform(lo, 1.2, d) * rng.choice([-1.0, 1.0], d)
    return LinearFunctional(c)


def _sigma_and_y0(rng, m, s):
    sig = rng.normal(size=m)
    y0 = rng.normal(size=m)
    y0 *= s / (sig @ y0)
    return sig, y0


def planted_sigma_families(seed=0, n_per_regime=10, max_dim=6):
    """``n_per_regime`` NA and NB kernels with dims in [1, max_dim].

    NA: ray kernels ``k(rho(x)) y0`` and composite kernels
    ``L(x - rho(x) u) + (1 + rho(x))^{..} y0`` with ``s kappa = 1`` and L
    mapping into N(sigma).  NB: exponential rays ``expm1(s alpha(x))/s y0``
    with rho = 0 and alpha != 0.  In every case ``sigma(y0) = s``.
    """
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_per_regime):
        d = int(rng.integers(2, max_dim + 1))
        m = int(rng.integers(1, max_dim + 1))
        s = float(rng.uniform(0.3, 1.5) * rng.choice([-1.0, 1.0]))
        rho = _functional(rng, d)
        composite = i % 2 == 1 and m >= 2
        sig, y0 = _sigma_and_y0(rng, m, s)
        if composite:
            P = np.eye(m) - np.outer(y0, sig) / (sig @ y0)
            L = P @ rng.normal(size=(m, d))
            K = CompositeKernel(rho, L, y0, s, 1.0 / s)
            name = f"na-composite-{i}"
        else:
            K = RayKernel(rho, y0, s, float(rng.uniform(0.3, 2.0)))
            name = f"na-ray-{i}"
        out.append(PlantedSigma(name, "NA", K, LinearFunctional(sig)))
    for i in range(n_per_regime):
        d = int(rng.integers(1, max_dim + 1))
        m = int(rng.integers(1, max_dim + 1))
        s = float(rng.uniform(0.3, 1.5) * rng.choice([-1.0, 1.0]))
        alpha = _functional(rng, d)
        sig, y0 = _sigma_and_y0(rng, m, s)
        K = RayKernel(LinearFunctional.zero(d), y0, s, 1.0, alpha)
        out.append(PlantedSigma(f"nb-ray-{i}", "NB", K, LinearFunctional(sig)))
    return out


@dataclass(eq=False)
class PlantedTriple:
    name: str
    case: str
    triple: GgeTriple
    u: np.ndarray
    rho_u: float
    gamma_u: float
    rho: LinearFunctional

    def to_json(self):
        return {"name": self.name, "case": self.case, "triple": self.triple.to_json(),
                "u": self.u.tolist(), "rho_u": self.rho_u, "gamma_u": self.gamma_u,
                "rho": self.rho.to_json()}


def _direction(rng, d, f=None, lo=0.3, hi=0.8):
    # random u with f(u) in +-[lo, hi] (or any u if f is None)
    while True:
        u = rng.normal(size=d)
        u /= np.linalg.norm(u)
        if f is None:
            return u
        val = f(u)
        if abs(val) > 1e-3:
            target = rng.uniform(lo, hi) * np.sign(val)
            return u * (target / val)


def planted_triples(seed=0, n_per_case=10, max_dim=6):
    """``n_per_case`` triples for each case of the tetrachotomy.

    (i) linear K with h = g = 1; (ii) exponential rays with rho = 0;
    (iii) logarithmic rays ``kappa log(1 + rho(x)) y0`` with g = 1;
    (iv) power rays with g = (1 + rho)^beta, beta not in {0, 1}.
    """
    rng = np.random.default_rng(seed)
    out = []
    for case in ("i", "ii", "iii", "iv"):
        for i in range(n_per_case):
            d = int(rng.integers(1, max_dim + 1))
            m = int(rng.integers(1, max_dim + 1))
            y0 = rng.normal(size=m)
            zero = LinearFunctional.zero(d)
            if case == "i":
                L = rng.normal(size=(m, d))
                K = LinearKernel(L)
                T = GgeTriple.from_kernel(K, One(), One())
                u = _direction(rng, d)
                rho, r, g = zero, 0.0, 0.0
            elif case == "ii":
                s = float(rng.uniform(0.3, 1.5) * rng.choice([-1.0, 1.0]))
                alpha = _functional(rng, d)
                K = RayKernel(zero, y0, s, 1.0, alpha)
                T = GgeTriple.from_kernel(K)
                u = _direction(rng, d, alpha)
                rho, r, g = zero, 0.0, s * float(alpha(u))
            elif case == "iii":
                rho = _functional(rng, d)
                K = RayKernel(rho, y0, 0.0, float(rng.uniform(0.3, 2.0)))
                T = GgeTriple.from_kernel(K)
                u = _direction(rng, d, rho)
                r, g = float(rho(u)), 0.0
            else:
                rho = _functional(rng, d)
                s = float(rng.uniform(0.3, 1.5) * rng.choice([-1.0, 1.0]))
                beta = float(rng.choice([-1.0, 1.0]) * rng.uniform(0.3, 2.5))
                if abs(beta - 1.0) < 0.1:
                    beta += 0.5
                K = RayKernel(rho, y0, s, beta / s)
                T = GgeTriple.from_kernel(K)
                u = _direction(rng, d, rho)
                r = float(rho(u))
                g = beta * r
            out.append(PlantedTriple(f"case-{case}-{i}", case, T, u, r, g, rho))
    return out


def fixture_path(name):
    """Filesystem path of a bundled fixture."""
    from importlib import resources

    return str(resources.files("goldie") / "fixtures" / name)
