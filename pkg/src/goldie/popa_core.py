"""Vectors, linear functionals and Popa groups on R^d.

The Popa group ``G_rho`` is the half-space ``{x : 1 + rho(x) > 0}`` with the
circle operation ``u o v = u + v + rho(u) v``.  Everything here is vectorised
over a leading axis: a "vector" argument may be a single point of shape
``(d,)`` or a stack of points of shape ``(n, d)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CARRIER_EPS = 1e-12
TOL_GROUP = 1e-9


class DomainError(ValueError):
    """A point lies outside the domain of a map (carrier, logarithm, ...)."""


class DimensionError(ValueError):
    pass


def as_vector(x, dim=None, name="vector"):
    """Coerce ``x`` to a float array of shape (d,) or (n, d) with finite entries."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim > 2:
        raise DimensionError(f"{name}: expected shape (d,) or (n, d), got {arr.shape}")
    if arr.shape[-1] == 0:
        raise DimensionError(f"{name}: dimension must be >= 1")
    if dim is not None and arr.shape[-1] != dim:
        raise DimensionError(f"{name}: dimension {arr.shape[-1]} != {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: non-finite coordinates")
    return arr


def rel_residual(diff, scale):
    """Elementwise ``|diff| / (1 + |scale|)`` for scalar identities."""
    return np.abs(np.asarray(diff, dtype=float)) / (1.0 + np.abs(np.asarray(scale, dtype=float)))


def vec_residual(diff, scale):
    """Relative residual for vector-valued identities (norm over the last axis)."""
    d = np.linalg.norm(np.atleast_1d(diff), axis=-1)
    s = np.linalg.norm(np.atleast_1d(scale), axis=-1)
    return d / (1.0 + s)


@dataclass(frozen=True, eq=False)
class LinearFunctional:
    """A linear functional on R^d, stored as its coefficient vector."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = as_vector(self.coeffs, name="coeffs")
        if c.ndim != 1:
            raise DimensionError("coeffs must be one-dimensional")
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zero(cls, dim):
        return cls(np.zeros(dim))

    @property
    def dim(self):
        return self.coeffs.shape[0]

    def __call__(self, x):
        x = as_vector(x, self.dim)
        return x @ self.coeffs

    def is_zero(self, tol=0.0):
        return bool(np.all(np.abs(self.coeffs) <= tol))

    def __add__(self, other):
        return LinearFunctional(self.coeffs + other.coeffs)

    def __sub__(self, other):
        return LinearFunctional(self.coeffs - other.coeffs)

    def __mul__(self, c):
        return LinearFunctional(float(c) * self.coeffs)

    __rmul__ = __mul__

    def __repr__(self):
        return f"LinearFunctional({self.coeffs.tolist()})"

    def __eq__(self, other):
        if not isinstance(other, LinearFunctional):
            return NotImplemented
        return self.dim == other.dim and bool(np.array_equal(self.coeffs, other.coeffs))

    def __hash__(self):
        return hash(self.coeffs.tobytes())

    def to_json(self):
        return {"coeffs": self.coeffs.tolist()}

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, dict):
            obj = obj["coeffs"]
        return cls(np.asarray(obj, dtype=float))


def eta(rho: LinearFunctional, u):
    """``1 + rho(u)``."""
    return 1.0 + rho(u)


@dataclass(frozen=True, eq=False)
class PopaGroup:
    """The Popa group G_rho(R^d)."""

    rho: LinearFunctional
    eps: float = CARRIER_EPS

    @classmethod
    def of(cls, coeffs):
        return cls(LinearFunctional(coeffs))

    @property
    def dim(self):
        return self.rho.dim

    @property
    def identity(self):
        return np.zeros(self.dim)

    def contains(self, x):
        return eta(self.rho, x) > self.eps

    def admit(self, x, name="x"):
        x = as_vector(x, self.dim, name)
        if not np.all(self.contains(x)):
            raise DomainError(f"{name} outside carrier: 1 + rho(x) <= {self.eps}")
        return x

    def circle(self, u, v):
        return circle(self, u, v)

    def inverse(self, u):
        return inverse(self, u)

    def to_json(self):
        return {"dim": self.dim, "rho": self.rho.to_json()}

    @classmethod
    def from_json(cls, obj):
        rho = LinearFunctional.from_json(obj["rho"])
        if "dim" in obj and int(obj["dim"]) != rho.dim:
            raise DimensionError(f"dim {obj['dim']} does not match rho ({rho.dim})")
        return cls(rho)


def circle(group: PopaGroup, u, v):
    """``u + v + rho(u) v``; the result stays in the carrier."""
    u = group.admit(u, "u")
    v = group.admit(v, "v")
    ru = group.rho(u)
    out = u + v + np.expand_dims(ru, -1) * v
    # 1 + rho(u o v) = (1 + rho(u))(1 + rho(v)); cheap sanity check of the carrier
    lhs = eta(group.rho, out)
    rhs = (1.0 + ru) * eta(group.rho, v)
    if not np.all(np.abs(lhs - rhs) <= 1e-9 * (1.0 + np.abs(rhs))):
        raise ArithmeticError("eta is not multiplicative on this product")
    return out


def inverse(group: PopaGroup, u):
    u = group.admit(u, "u")
    return -u / np.expand_dims(eta(group.rho, u), -1)


def project_off_u(rho: LinearFunctional, u, x, tol=TOL_GROUP):
    """``x - rho(x) u``, the projection onto N(rho) along u (needs rho(u) = 1)."""
    u = as_vector(u, rho.dim, "u")
    if abs(rho(u) - 1.0) > tol:
        raise ValueError(f"rho(u) = {rho(u)!r}, expected 1")
    x = as_vector(x, rho.dim, "x")
    return x - np.expand_dims(rho(x), -1) * u


def sample_carrier(group: PopaGroup, n, rng, scale=1.0, margin=0.05):
    """``n`` points drawn uniformly from the box [-scale, scale]^d, rejected
    until ``1 + rho(x) >= margin``."""
    out = np.empty((n, group.dim))
    filled = 0
    while filled < n:
        cand = rng.uniform(-scale, scale, size=(2 * (n - filled) + 8, group.dim))
        cand = cand[eta(group.rho, cand) >= margin]
        take = min(len(cand), n - filled)
        out[filled:filled + take] = cand[:take]
        filled += take
    return out
