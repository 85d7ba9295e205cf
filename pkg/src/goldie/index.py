"""Auxiliary functions ``g(x) = exp(alpha(x)) (1 + rho(x))^beta`` and their index.

``g`` is the outer auxiliary of the Goldie equation, ``gamma = log g`` its
index.  A reference direction ``u_ref`` with ``rho(u_ref) = 1`` is kept for
the normalising constant ``gamma(u_ref)``; by default it is chosen so that
``alpha(u_ref) = 0`` whenever alpha is not a multiple of rho.

Note that ``g`` is rho-multiplicative (``g(u o v) = g(u) g(v)``) exactly when
``alpha`` vanishes or ``rho`` vanishes: the cross term ``rho(u) alpha(v)`` in
``alpha(u o v)`` survives otherwise.  :attr:`AuxiliarySpec.is_multiplicative`
reports this.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import linalg
from .link import additive_log
from .popa_core import (
    TOL_GROUP,
    LinearFunctional,
    PopaGroup,
    as_vector,
    circle,
    rel_residual,
)


def default_u_ref(rho: LinearFunctional, alpha: Optional[LinearFunctional] = None):
    """Reference direction with ``rho(u) = 1`` (and ``alpha(u) = 0`` if possible).

    Picks ``e_i / rho_i`` for the first coordinate of largest ``|rho_i|``; if
    that is not annihilated by alpha, falls back to the minimum-norm solution
    of ``rho(u) = 1, alpha(u) = 0``.  Returns None when rho vanishes.
    """
    if rho.is_zero():
        return None
    i = int(np.argmax(np.abs(rho.coeffs)))
    u = np.zeros(rho.dim)
    u[i] = 1.0 / rho.coeffs[i]
    if alpha is None or abs(alpha(u)) <= TOL_GROUP:
        return u
    a = np.vstack([rho.coeffs, alpha.coeffs])
    sol, *_ = np.linalg.lstsq(a, np.array([1.0, 0.0]), rcond=None)
    if np.max(np.abs(a @ sol - [1.0, 0.0])) > TOL_GROUP:
        return u
    return sol


@dataclass(frozen=True, eq=False)
class AuxiliarySpec:
    rho: LinearFunctional
    alpha: LinearFunctional
    beta: float = 0.0
    u_ref: Optional[np.ndarray] = field(default=None)
    tol: float = TOL_GROUP

    def __post_init__(self):
        if self.alpha.dim != self.rho.dim:
            raise ValueError("alpha and rho live on different spaces")
        if not math.isfinite(self.beta):
            raise ValueError("beta must be finite")
        u = self.u_ref
        if u is None:
            u = default_u_ref(self.rho, self.alpha)
        if u is not None:
            u = as_vector(u, self.dim, "u_ref").copy()
            u.setflags(write=False)
            if abs(self.rho(u) - 1.0) > self.tol:
                raise ValueError(f"rho(u_ref) = {self.rho(u)!r}, expected 1")
        object.__setattr__(self, "u_ref", u)

    @property
    def dim(self):
        return self.rho.dim

    @property
    def group(self):
        return PopaGroup(self.rho)

    @property
    def is_multiplicative(self):
        return self.alpha.is_zero() or self.rho.is_zero()

    @property
    def gamma_of_uref(self):
        """``gamma(u_ref)``; equals ``beta log 2`` whenever alpha(u_ref) = 0,
        which the default u_ref achieves unless alpha is a multiple of rho."""
        if self.u_ref is None:
            return 0.0
        return float(self.alpha(self.u_ref)) + self.beta * math.log(2.0)

    @property
    def derivative(self):
        """Gateaux gradient of g at 0: ``g'_u(0) = alpha(u) + beta rho(u)``."""
        return self.alpha + self.beta * self.rho

    def __call__(self, x):
        return g_eval(self, x)

    def to_json(self):
        return {
            "rho": self.rho.to_json(),
            "alpha": self.alpha.to_json(),
            "beta": self.beta,
            "u_ref": None if self.u_ref is None else self.u_ref.tolist(),
        }

    @classmethod
    def from_json(cls, obj):
        rho = LinearFunctional.from_json(obj["rho"])
        alpha = obj.get("alpha")
        alpha = LinearFunctional.zero(rho.dim) if alpha is None else LinearFunctional.from_json(alpha)
        u = obj.get("u_ref")
        return cls(rho, alpha, float(obj.get("beta", 0.0)),
                   None if u is None else np.asarray(u, dtype=float))

    @classmethod
    def trivial(cls, dim):
        """g == 1."""
        return cls(LinearFunctional.zero(dim), LinearFunctional.zero(dim), 0.0)


def gamma_log(spec: AuxiliarySpec, x):
    """The index ``log g(x) = alpha(x) + beta log(1 + rho(x))``."""
    x = spec.group.admit(x)
    return spec.alpha(x) + spec.beta * np.log1p(spec.rho(x))


def g_eval(spec: AuxiliarySpec, x):
    return np.exp(gamma_log(spec, x))


def verify_M(spec: AuxiliarySpec, u, v):
    """Relative residual of ``g(u o v) = g(u) g(v)``."""
    uv = circle(spec.group, u, v)
    lhs = g_eval(spec, uv)
    rhs = g_eval(spec, u) * g_eval(spec, v)
    return np.abs(lhs - rhs) / (1.0 + np.abs(rhs))


def verify_A(spec: AuxiliarySpec, u, v):
    """Relative residual of ``gamma(u o v) = gamma(u) + gamma(v)``."""
    uv = circle(spec.group, u, v)
    lhs = gamma_log(spec, uv)
    rhs = gamma_log(spec, u) + gamma_log(spec, v)
    return rel_residual(lhs - rhs, rhs)


class CrossValidationError(ArithmeticError):
    pass


def radial_g_form(spec: AuxiliarySpec, w, t, tol=TOL_GROUP):
    """Closed radial form of ``g(t w)``:

        (1 + t rho(w))^(gamma(w) / log(1 + rho(w)))   if rho(w) != 0
        exp(t gamma(w))                               if rho(w) == 0

    cross-checked against ``g_eval(spec, t w)``; raises CrossValidationError if
    they disagree by more than ``tol`` (relative).
    """
    w = as_vector(w, spec.dim, "w")
    if w.ndim != 1:
        raise ValueError("w must be a single vector")
    t = np.asarray(t, dtype=float)
    tw = np.multiply.outer(t, w)
    direct = g_eval(spec, tw)
    rw = float(spec.rho(w))
    if 1.0 + rw <= 0.0:
        # gamma(w) undefined: only the general path applies
        return direct
    gw = float(gamma_log(spec, w))
    # exp(t gamma(w)) on the rho(w) = 0 branch, (1 + t rho(w))^(gamma(w)/log(1 + rho(w))) off it
    closed = np.exp(gw * additive_log(rw, t) / additive_log(rw, 1.0))
    err = np.max(np.abs(closed - direct) / (1.0 + np.abs(direct)))
    if err > tol:
        raise CrossValidationError(
            f"radial closed form disagrees with g_eval by {err:.3e} (is g multiplicative?)")
    return closed


@dataclass(frozen=True, eq=False)
class NullspaceCase:
    case: str  # "NA" or "NB"
    witness: Optional[np.ndarray] = None


def nullspace_classify(spec: AuxiliarySpec, rtol=linalg.RANK_RTOL):
    """NA iff N(rho) is contained in N(alpha); otherwise NB with a witness
    ``v`` in N(rho) \\ N(alpha) (the component of alpha orthogonal to rho)."""
    stacked = np.vstack([spec.rho.coeffs, spec.alpha.coeffs])
    scale = max(np.abs(stacked).max(), 1.0)
    r_rho = linalg.rank(spec.rho.coeffs[None, :], rtol, atol=rtol * scale)
    r_both = linalg.rank(stacked, rtol, atol=rtol * scale)
    if r_both == r_rho:
        return NullspaceCase("NA")
    a, r = spec.alpha.coeffs, spec.rho.coeffs
    rr = r @ r
    w = a - (a @ r / rr) * r if rr > 0 else a.copy()
    return NullspaceCase("NB", w / np.linalg.norm(w))


def nullstar_basis(spec: AuxiliarySpec):
    """Orthonormal basis (columns) of N*(gamma) = N(rho) ∩ N(alpha)."""
    return linalg.null_space(np.vstack([spec.rho.coeffs, spec.alpha.coeffs]))
