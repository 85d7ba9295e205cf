"""Scalar radial functions, the Popa link function and scalar Popa homomorphisms.

All four branches of the link function are evaluated through one stable
primitive.  Write ``ell(t) = log1p(rho t) / rho`` (with ``ell(t) = t`` at
``rho = 0``); then

    g(t)      = exp(gamma * ell(t))
    lambda(t) = expm1(gamma * ell(t)) / expm1(gamma * ell(1))

and the limiting branches are ``ell(t) / ell(1)`` (gamma = 0) and ``t``
(both zero).  Parameters inside ``TAU_BRANCH`` of zero are snapped to the
limiting branch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .popa_core import DomainError, rel_residual

TAU_BRANCH = 1e-8
TOL_ROOT = 1e-8
SERIES_BAND = 1e-5


@dataclass(frozen=True)
class RadialParams:
    """Growth rates (gamma, rho) of the outer and inner auxiliaries along a ray."""

    gamma: float
    rho: float

    def __post_init__(self):
        if not (math.isfinite(self.gamma) and math.isfinite(self.rho)):
            raise ValueError("gamma and rho must be finite")

    def snapped(self, tau=TAU_BRANCH):
        return RadialParams(
            0.0 if abs(self.gamma) <= tau else float(self.gamma),
            0.0 if abs(self.rho) <= tau else float(self.rho),
        )

    def to_json(self):
        return {"gamma": self.gamma, "rho": self.rho}

    @classmethod
    def from_json(cls, obj):
        return cls(float(obj["gamma"]), float(obj["rho"]))


def _check_domain(rho, t):
    if rho != 0.0:
        if not np.all(1.0 + rho * np.asarray(t) > 0.0):
            raise DomainError(f"1 + t*rho <= 0 for rho={rho}")


def additive_log(rho, t):
    """``log1p(rho t) / rho``: the isomorphism of G_rho(R) onto (R, +).

    Inside the snapping band a short series keeps the value continuous across
    the seam instead of jumping to the rho = 0 limit ``t``.
    """
    t = np.asarray(t, dtype=float)
    if rho == 0.0:
        return t
    if abs(rho) <= TAU_BRANCH:
        x = rho * t
        return np.where(np.abs(x) <= SERIES_BAND, t * (1.0 - x / 2.0 + x * x / 3.0),
                        np.log1p(x) / rho)
    return np.log1p(rho * t) / rho


def _expm1_ratio(gamma, a, b):
    # expm1(gamma a) / expm1(gamma b), with the series form near gamma = 0
    ga, gb = gamma * a, gamma * b
    if abs(gamma) <= TAU_BRANCH and np.all(np.abs(ga) <= SERIES_BAND) and abs(gb) <= SERIES_BAND:
        return (a / b) * (1.0 + ga / 2.0 + ga * ga / 6.0) / (1.0 + gb / 2.0 + gb * gb / 6.0)
    return np.expm1(ga) / np.expm1(gb)


def g_radial(p: RadialParams, t):
    """The standard multiplicative radial function ``(1 + t rho)^(gamma/rho)``
    (``exp(gamma t)`` when rho vanishes)."""
    _check_domain(p.snapped().rho, t)
    return np.exp(p.gamma * additive_log(p.rho, t))


def lambda_branch(p: RadialParams):
    q = p.snapped()
    if q.rho != 0.0:
        return "power" if q.gamma != 0.0 else "log"
    return "exp" if q.gamma != 0.0 else "identity"


def lambda_link(p: RadialParams, t):
    """Popa link function lambda(t; gamma, rho).

    Parameters within TAU_BRANCH of zero select the limiting branch; the
    value there is a series in the small parameter, so lambda is continuous
    across the seam.
    """
    q = p.snapped()
    _check_domain(q.rho, t)
    _check_domain(q.rho, 1.0)
    if p.gamma == 0.0 and p.rho == 0.0:
        return np.asarray(t, dtype=float) * 1.0
    return _expm1_ratio(p.gamma, additive_log(p.rho, t), additive_log(p.rho, 1.0))


def scalar_circle(rho, s, t):
    return s + t + rho * s * t


def lambda_satisfies_gfe(p: RadialParams, s, t):
    """Residual of ``lambda(s o t) = lambda(s) + g(s) lambda(t)`` and of the
    circle form ``lambda(s o t) = lambda(s) o_sigma lambda(t)``, sigma = g(1) - 1.

    Returns the larger of the two (relative) residuals.
    """
    q = p.snapped()
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    st = scalar_circle(q.rho, s, t)
    lhs = lambda_link(q, st)
    ls, lt = lambda_link(q, s), lambda_link(q, t)
    gs = g_radial(q, s)
    r1 = rel_residual(lhs - ls - gs * lt, np.maximum(np.abs(lhs), np.abs(gs * lt)))
    sigma = float(g_radial(q, 1.0)) - 1.0
    rhs2 = ls + lt + sigma * ls * lt
    r2 = rel_residual(lhs - rhs2, np.maximum(np.abs(lhs), np.abs(rhs2)))
    return np.maximum(r1, r2)


def _scan_domain(rho, lo=-10.0, hi=10.0, pad=1e-6):
    if rho > 0:
        lo = max(lo, -1.0 / rho + pad)
    elif rho < 0:
        hi = min(hi, -1.0 / rho - pad)
    return lo, hi


def link_fixed_points(p: RadialParams, n_grid=100_000, tol_root=TOL_ROOT):
    """Roots of ``lambda(t) - t`` on the scan domain, found from sign changes
    on a uniform grid and refined by bisection."""
    q = p.snapped()
    lo, hi = _scan_domain(q.rho)
    grid = np.linspace(lo, hi, n_grid)
    f = lambda_link(q, grid) - grid
    roots = list(grid[f == 0.0])
    idx = np.nonzero((f[:-1] * f[1:]) < 0)[0]
    for i in idx:
        a, b = grid[i], grid[i + 1]
        fa = f[i]
        for _ in range(200):
            m = 0.5 * (a + b)
            fm = float(lambda_link(q, m)) - m
            if fm == 0.0 or b - a <= tol_root * 1e-3:
                a = b = m
                break
            if (fa < 0) == (fm < 0):
                a, fa = m, fm
            else:
                b = m
        roots.append(0.5 * (a + b))
    roots = sorted(roots)
    merged = []
    for r in roots:
        if not merged or abs(r - merged[-1]) > tol_root:
            merged.append(r)
    return merged


def lambda_fixed_point_unique(p: RadialParams, n_grid=100_000, tol_root=TOL_ROOT):
    """True iff the only non-trivial solution of ``lambda(t) = t`` is ``t = 1``.

    ``t = 0`` always solves the equation (lambda(0) = 0) and is discarded.
    When gamma == rho the link is the identity and every point is fixed.
    """
    q = p.snapped()
    if q.gamma == 0.0 and q.rho == 0.0:
        raise ValueError("gamma = rho = 0: lambda is the identity")
    if abs(q.gamma - q.rho) <= TAU_BRANCH * max(1.0, abs(q.rho)):
        return False
    roots = [r for r in link_fixed_points(q, n_grid, tol_root) if abs(r) > tol_root]
    return len(roots) == 1 and abs(roots[0] - 1.0) <= tol_root


# -- Scalar Popa homomorphisms ---------------------------------------------


class Kind(Enum):
    ZERO = "zero"
    FINITE = "finite"
    INFINITY = "infinity"


@dataclass(frozen=True)
class PopaParameter:
    """A Popa parameter in [0, inf]; inf is its own state, never a large float."""

    kind: Kind
    value: float = 0.0

    def __post_init__(self):
        if self.kind is Kind.FINITE and not (self.value > 0 and math.isfinite(self.value)):
            raise ValueError("finite Popa parameter must be > 0")

    @classmethod
    def parse(cls, obj):
        if isinstance(obj, PopaParameter):
            return obj
        if isinstance(obj, str):
            if obj.lower() in ("inf", "infinity", "∞"):
                return cls(Kind.INFINITY)
            obj = float(obj)
        if obj == 0:
            return cls(Kind.ZERO)
        if math.isinf(obj):
            return cls(Kind.INFINITY)
        return cls(Kind.FINITE, float(obj))

    def to_json(self):
        if self.kind is Kind.INFINITY:
            return "inf"
        return self.value

    # group structure on the scalar carrier
    @property
    def identity(self):
        return 1.0 if self.kind is Kind.INFINITY else 0.0

    def contains(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind is Kind.ZERO:
            return np.isfinite(t)
        if self.kind is Kind.INFINITY:
            return t > 0
        return 1.0 + self.value * t > 0

    def compose(self, s, t):
        if self.kind is Kind.ZERO:
            return s + t
        if self.kind is Kind.INFINITY:
            return s * t
        return s + t + self.value * s * t


ZERO = PopaParameter(Kind.ZERO)
INF = PopaParameter(Kind.INFINITY)


def finite(v):
    return PopaParameter(Kind.FINITE, float(v))


@dataclass(frozen=True)
class ScalarHom:
    """A continuous homomorphism G_rho(R) -> G_sigma(R) from the 3x3 table,
    with free parameter kappa."""

    rho: PopaParameter
    sigma: PopaParameter
    kappa: float

    @property
    def injective(self):
        return self.kappa != 0.0

    def __call__(self, t):
        return scalar_hom_eval(self, t)

    def to_json(self):
        return {"rho": self.rho.to_json(), "sigma": self.sigma.to_json(), "kappa": self.kappa}

    @classmethod
    def from_json(cls, obj):
        return cls(PopaParameter.parse(obj["rho"]), PopaParameter.parse(obj["sigma"]),
                   float(obj["kappa"]))


def scalar_hom_eval(h: ScalarHom, t):
    t = np.asarray(t, dtype=float)
    if not np.all(h.rho.contains(t)):
        raise DomainError(f"t outside the carrier of the source group ({h.rho.kind.value})")
    k = h.kappa
    # the additive "log" of the source: G_rho -> (R, +), scaled so that kappa enters linearly
    if h.rho.kind is Kind.ZERO:
        x = k * t
    elif h.rho.kind is Kind.FINITE:
        x = (k / h.rho.value) * np.log1p(h.rho.value * t)
    else:
        x = k * np.log(t)
    if h.sigma.kind is Kind.ZERO:
        return x
    if h.sigma.kind is Kind.INFINITY:
        return np.exp(x)
    return np.expm1(h.sigma.value * x) / h.sigma.value


def scalar_hom_check(h: ScalarHom, s, t):
    """Relative residual of ``k(s o_rho t) - k(s) o_sigma k(t)``."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    st = h.rho.compose(s, t)
    lhs = scalar_hom_eval(h, st)
    rhs = h.sigma.compose(scalar_hom_eval(h, s), scalar_hom_eval(h, t))
    return rel_residual(lhs - rhs, np.maximum(np.abs(lhs), np.abs(rhs)))


def sample_scalar(param: PopaParameter, n, rng, spread=2.0):
    """``n`` points of the scalar carrier of ``param``, drawn as images of
    uniform ``z`` in [-spread, spread] under the group's exponential map."""
    z = rng.uniform(-spread, spread, n)
    if param.kind is Kind.ZERO:
        return z
    if param.kind is Kind.INFINITY:
        return np.exp(z)
    return np.expm1(param.value * z) / param.value


def sample_radial(rho, n, rng, spread=2.0):
    """Points of ``{t : 1 + rho t > 0}`` for a real (possibly negative) rho."""
    z = rng.uniform(-spread, spread, n)
    if rho == 0.0:
        return z
    return np.expm1(rho * z) / rho
