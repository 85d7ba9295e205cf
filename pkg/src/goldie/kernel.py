"""Kernels K solving ``K(u o v) = K(u) + g(u) K(v)`` and the radial calculus around them.

Closed-form families (:class:`RayKernel`, :class:`LinearKernel`,
:class:`CompositeKernel`) are certified at construction: each is checked
against its own auxiliary on a random sample of the carrier and rejected if
the residual exceeds ``GATE_TOL``.  The verification routines accept any
callable as K (and g, h), so black-box kernels can be checked as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import linalg
from .diff import gateaux_at_zero
from .index import AuxiliarySpec, default_u_ref, nullspace_classify, nullstar_basis
from .link import TAU_BRANCH, RadialParams, lambda_link
from .popa_core import (
    DomainError,
    LinearFunctional,
    PopaGroup,
    as_vector,
    circle,
    sample_carrier,
)

GATE_SAMPLES = 1000
GATE_TOL = 1e-8
HORNER_BAND = 1e-4


class GateError(ValueError):
    """A kernel descriptor does not solve the Goldie equation with its auxiliary."""


class Inapplicable(ValueError):
    """The precondition of a check fails, so no residual is defined."""


def _norm(x):
    return np.linalg.norm(np.atleast_1d(x), axis=-1)


def identity_residual(lhs, rhs):
    """``|lhs - rhs| / (1 + max(|lhs|, |rhs|))`` with vector norms over the last axis."""
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    return _norm(lhs - rhs) / (1.0 + np.maximum(_norm(lhs), _norm(rhs)))


# -- families ----------------------------------------------------------------


class KernelSpec:
    """Base class for closed-form kernels X = R^d -> Y = R^m."""

    family = "abstract"

    def __call__(self, x):
        raise NotImplementedError

    def aux(self) -> AuxiliarySpec:
        raise NotImplementedError

    @property
    def dim_x(self):
        raise NotImplementedError

    @property
    def dim_y(self):
        raise NotImplementedError

    def radial_params(self, u):
        """(gamma(u), rho(u)): Gateaux derivatives at 0 of g and of 1 + rho along u."""
        a = self.aux()
        return RadialParams(float(a.derivative(u)), float(a.rho(u)))

    def certify(self, n=GATE_SAMPLES, tol=GATE_TOL, seed=0):
        a = self.aux()
        rng = np.random.default_rng(seed)
        grp = a.group
        u = sample_carrier(grp, n, rng)
        v = sample_carrier(grp, n, rng)
        r = float(np.max(verify_gfe(self, a, u, v)))
        if not r <= tol:
            raise GateError(f"{self.family} kernel fails the Goldie equation: residual {r:.3e}")
        return r

    def to_json(self):
        raise NotImplementedError


def _ray_factor(s, index):
    # eta_s^{-1}(exp(s * index)), with the additive limit at s = 0
    if abs(s) <= TAU_BRANCH:
        return index
    return np.expm1(s * index) / s


@dataclass(eq=False)
class RayKernel(KernelSpec):
    """``K(x) = eta_s^{-1}(exp(s (kappa log(1 + rho(x)) + alpha(x)))) y0``.

    With ``alpha = 0`` this is ``k(rho(x)) y0`` for the scalar homomorphism
    ``k: G_1 -> G_s`` with parameter kappa; with ``rho = 0`` it is the
    exponential ray ``expm1(s alpha(x)) / s  y0``.  Its auxiliary is
    ``g = exp(s alpha) (1 + rho)^(s kappa)`` and any sigma with
    ``sigma(y0) = s`` linearises it.
    """

    rho: LinearFunctional
    y0: np.ndarray
    s: float
    kappa: float
    alpha: Optional[LinearFunctional] = None
    check: bool = field(default=True, repr=False)

    family = "ray"

    def __post_init__(self):
        self.y0 = as_vector(self.y0, name="y0")
        if self.alpha is None:
            self.alpha = LinearFunctional.zero(self.rho.dim)
        self._group = PopaGroup(self.rho)
        self._aux = None
        if self.check:
            self.certify()

    @property
    def dim_x(self):
        return self.rho.dim

    @property
    def dim_y(self):
        return self.y0.shape[0]

    def index(self, x):
        x = self._group.admit(x)
        return self.kappa * np.log1p(self.rho(x)) + self.alpha(x)

    def __call__(self, x):
        return np.multiply.outer(_ray_factor(self.s, self.index(x)), self.y0)

    def aux(self):
        if self._aux is None:
            if abs(self.s) <= TAU_BRANCH:
                self._aux = AuxiliarySpec(self.rho, LinearFunctional.zero(self.dim_x), 0.0)
            else:
                alpha = self.s * self.alpha
                self._aux = AuxiliarySpec(self.rho, alpha, self.s * self.kappa,
                                          default_u_ref(self.rho, alpha))
        return self._aux

    def to_json(self):
        return {"family": "ray", "rho": self.rho.to_json(), "y0": self.y0.tolist(),
                "s": self.s, "kappa": self.kappa, "alpha": self.alpha.to_json()}


@dataclass(eq=False)
class LinearKernel(KernelSpec):
    """``K(x) = L x`` with ``g == 1`` and ``rho == 0``: the additive (Cauchy) case."""

    L: np.ndarray
    check: bool = field(default=True, repr=False)

    family = "linear"

    def __post_init__(self):
        self.L = np.atleast_2d(np.asarray(self.L, dtype=float))
        if self.check:
            self.certify()

    @property
    def dim_x(self):
        return self.L.shape[1]

    @property
    def dim_y(self):
        return self.L.shape[0]

    def __call__(self, x):
        return as_vector(x, self.dim_x) @ self.L.T

    def aux(self):
        return AuxiliarySpec.trivial(self.dim_x)

    def to_json(self):
        return {"family": "linear", "L": self.L.tolist()}


@dataclass(eq=False)
class CompositeKernel(KernelSpec):
    """``K(x) = L (x - rho(x) u_ref) + k(rho(x)) y0`` with ``k: G_1 -> G_s`` the
    scalar homomorphism ``expm1(s kappa log(1 + t)) / s``.

    The auxiliary is ``(1 + rho)^(s kappa)``.  The gate only admits it when L
    vanishes on N(rho) or ``s kappa = 1`` (then K is linear and g = 1 + rho).
    """

    rho: LinearFunctional
    L: np.ndarray
    y0: np.ndarray
    s: float
    kappa: float
    u_ref: Optional[np.ndarray] = None
    check: bool = field(default=True, repr=False)

    family = "composite"

    def __post_init__(self):
        self.L = np.atleast_2d(np.asarray(self.L, dtype=float))
        self.y0 = as_vector(self.y0, self.L.shape[0], "y0")
        if self.u_ref is None:
            self.u_ref = default_u_ref(self.rho)
        if self.u_ref is None:
            raise ValueError("composite kernel needs rho != 0")
        self.u_ref = as_vector(self.u_ref, self.rho.dim, "u_ref")
        if abs(self.rho(self.u_ref) - 1.0) > 1e-9:
            raise ValueError("rho(u_ref) must be 1")
        self._group = PopaGroup(self.rho)
        self._aux = AuxiliarySpec(self.rho, LinearFunctional.zero(self.rho.dim),
                                  self.s * self.kappa, self.u_ref)
        if self.check:
            self.certify()

    @property
    def dim_x(self):
        return self.rho.dim

    @property
    def dim_y(self):
        return self.L.shape[0]

    def __call__(self, x):
        x = self._group.admit(x)
        r = self.rho(x)
        n = x - np.expand_dims(r, -1) * self.u_ref
        return n @ self.L.T + np.multiply.outer(_ray_factor(self.s, self.kappa * np.log1p(r)), self.y0)

    def aux(self):
        return self._aux

    def to_json(self):
        return {"family": "composite", "rho": self.rho.to_json(), "L": self.L.tolist(),
                "y0": self.y0.tolist(), "s": self.s, "kappa": self.kappa,
                "u_ref": self.u_ref.tolist()}


@dataclass(eq=False)
class PerturbedKernel(KernelSpec):
    """``base(x) + eps e_coord``: a deliberately broken kernel for negative controls."""

    base: KernelSpec
    coord: int = 0
    eps: float = 1e-3
    check: bool = field(default=False, repr=False)

    family = "perturbed"

    def __post_init__(self):
        if not 0 <= self.coord < self.base.dim_y:
            raise ValueError("coord out of range")
        if self.check:
            self.certify()

    @property
    def dim_x(self):
        return self.base.dim_x

    @property
    def dim_y(self):
        return self.base.dim_y

    def __call__(self, x):
        out = np.array(self.base(x), dtype=float)
        out[..., self.coord] += self.eps
        return out

    def aux(self):
        return self.base.aux()

    def to_json(self):
        return {"family": "perturbed", "base": self.base.to_json(), "coord": self.coord,
                "eps": self.eps}


def kernel_from_json(obj, check=True) -> KernelSpec:
    fam = obj.get("family")
    if fam == "ray":
        rho = LinearFunctional.from_json(obj["rho"])
        alpha = obj.get("alpha")
        return RayKernel(rho, np.asarray(obj["y0"], dtype=float), float(obj["s"]),
                         float(obj.get("kappa", 1.0)),
                         None if alpha is None else LinearFunctional.from_json(alpha), check=check)
    if fam == "linear":
        return LinearKernel(np.asarray(obj["L"], dtype=float), check=check)
    if fam == "composite":
        u = obj.get("u_ref")
        return CompositeKernel(LinearFunctional.from_json(obj["rho"]),
                               np.asarray(obj["L"], dtype=float),
                               np.asarray(obj["y0"], dtype=float), float(obj["s"]),
                               float(obj.get("kappa", 1.0)),
                               None if u is None else np.asarray(u, dtype=float), check=check)
    if fam == "perturbed":
        base = kernel_from_json(obj["base"], check=check)
        return PerturbedKernel(base, int(obj.get("coord", 0)), float(obj.get("eps", 1e-3)))
    raise ValueError(f"unknown kernel family {fam!r}")


# -- verification -------------------------------------------------------------


def _aux_and_rho(g, rho):
    if isinstance(g, AuxiliarySpec):
        return g, (g.rho if rho is None else rho)
    if rho is None:
        raise ValueError("rho is required when g is a plain callable")
    return g, rho


def verify_gfe(K: Callable, g, u, v, rho: Optional[LinearFunctional] = None):
    """Relative residual of ``K(u o v) = K(u) + g(u) K(v)`` (row-wise for stacks)."""
    g, rho = _aux_and_rho(g, rho)
    uv = circle(PopaGroup(rho), u, v)
    lhs = np.asarray(K(uv), dtype=float)
    gu = np.asarray(g(u), dtype=float)
    rhs = np.asarray(K(u), dtype=float) + np.expand_dims(gu, -1) * np.asarray(K(v), dtype=float)
    return identity_residual(lhs, rhs)


def pwp(x, m):
    """Geometric sum ``1 + x + ... + x^(m-1)`` (zero for m = 0)."""
    if m < 0:
        raise ValueError("m must be >= 0")
    if m == 0:
        return 0.0
    if abs(x - 1.0) <= HORNER_BAND:
        acc = 0.0
        for _ in range(m):
            acc = acc * x + 1.0
        return acc
    if x > 0:
        return math.expm1(m * math.log(x)) / (x - 1.0)
    return (x**m - 1.0) / (x - 1.0)


class IterateDomainError(DomainError):
    def __init__(self, j, msg):
        super().__init__(f"iterate j={j} left the domain: {msg}")
        self.j = j


@dataclass
class Lemma4Result:
    lhs: np.ndarray
    rhs: np.ndarray
    lhs_iter: np.ndarray
    rhs_iter: np.ndarray
    path_residual: float
    identity_residual: float
    recurrence_residual: float
    coefficient: float


def lemma4_iterates(K, h, g, u, n, m):
    """Both sides of ``K(p_m(h(u/n)) u/n) = [p_m/p_n](g(u/n)) K(p_n(h(u/n)) u/n)``.

    The sides are computed from the closed geometric-sum form and again by
    iterating ``u^{j+1} = u/n + h(u/n) u^j`` and ``a_{j+1} = 1 + g(u/n) a_j``
    literally; the result carries both pairs and their residuals.
    """
    if n < 1 or m < 0:
        raise ValueError("need n >= 1 and m >= 0")
    u = as_vector(u, name="u")
    x = u / n
    H = float(h(x))
    G = float(g(x))

    def K_at(point, j):
        try:
            return np.asarray(K(point), dtype=float)
        except DomainError as exc:
            raise IterateDomainError(j, str(exc)) from exc

    lhs = K_at(pwp(H, m) * x, m)
    coef = pwp(G, m) / pwp(G, n)
    rhs = coef * K_at(pwp(H, n) * x, n)

    top = max(m, n)
    p = np.zeros_like(x)
    a = 0.0
    Kx = K_at(x, 1)
    K_prev = None
    pts, coefs = {0: p}, {0: 0.0}
    rec = 0.0
    for j in range(1, top + 1):
        p = x + H * p
        a = 1.0 + G * a
        pts[j], coefs[j] = p, a
        Kp = K_at(p, j)
        if K_prev is not None:
            rec = max(rec, float(identity_residual(Kp, Kx + G * K_prev)))
        K_prev = Kp
    lhs_i = K_at(pts[m], m)
    rhs_i = (coefs[m] / coefs[n]) * K_at(pts[n], n)
    path = max(float(identity_residual(lhs, lhs_i)), float(identity_residual(rhs, rhs_i)))
    return Lemma4Result(lhs, rhs, lhs_i, rhs_i, path, float(identity_residual(lhs, rhs)), rec, coef)


@dataclass
class Lemma4Limit:
    estimate: float
    rate: float
    target: float
    constant: float
    ns: list
    estimates: list
    errors: list
    identity_residual: float


def lemma4_limit(K, h, g, u, t, n_max=128, n_min=8, gamma_u=None):
    """Coefficient ratio ``a_m(u/n) / a_n(u/n)`` with ``m = round(t n)`` for
    n = n_min, 2 n_min, ... <= n_max.

    The ratio tends to ``(e^{gamma t} - 1) / (e^gamma - 1)`` with gamma the
    Gateaux derivative of g along u (the exponential branch of the link
    function, whatever rho(u) is).  ``rate`` is the log-log slope of the error
    against n; ``constant`` is ``max_n n * error``.
    """
    if n_max < 4:
        raise ValueError("n_max must be >= 4")
    n_min = min(n_min, n_max)
    n_min = max(n_min, 4)
    u = as_vector(u, name="u")
    if gamma_u is None:
        gamma_u = gateaux_at_zero(g, u)
    target = float(lambda_link(RadialParams(gamma_u, 0.0), t))
    ns, ests, errs = [], [], []
    ident = 0.0
    n = n_min
    while n <= n_max:
        m = int(round(t * n))
        if m < 0:
            raise ValueError("t must be >= 0")
        res = lemma4_iterates(K, h, g, u, n, m)
        ident = max(ident, res.identity_residual)
        ns.append(n)
        ests.append(res.coefficient)
        errs.append(abs(res.coefficient - target))
        n *= 2
    pos = [(nn, e) for nn, e in zip(ns, errs) if e > 0]
    if len(pos) >= 2:
        rate = float(np.polyfit(np.log([p[0] for p in pos]), np.log([p[1] for p in pos]), 1)[0])
    else:
        rate = float("nan")
    const = max(nn * e for nn, e in zip(ns, errs))
    return Lemma4Limit(ests[-1], rate, target, const, ns, ests, errs, ident)


def _require_nonzero(Ku, what="K(u)"):
    if not np.any(np.asarray(Ku) != 0.0):
        raise Inapplicable(f"{what} = 0")


def radiality_check(K, u, t, p: RadialParams):
    """Relative residual of ``K(t u) = lambda(t; gamma, rho) K(u)``."""
    u = as_vector(u, name="u")
    Ku = np.asarray(K(u), dtype=float)
    _require_nonzero(Ku)
    t = np.asarray(t, dtype=float)
    lam = lambda_link(p, t)
    Ktu = np.asarray(K(np.multiply.outer(t, u)), dtype=float)
    return identity_residual(Ktu, np.multiply.outer(lam, Ku))


def _ray_g_nontrivial(g, u, probes):
    vals = []
    for s in probes:
        try:
            vals.append(float(g(s * u)))
        except DomainError:
            continue
    return bool(vals) and all(abs(val - 1.0) > 1e-12 for val in vals)


SWITCH_PROBES = tuple(np.concatenate([np.linspace(-0.9, -0.05, 12), np.linspace(0.05, 3.0, 24)]))


def switching_check(K, g, u, t, probes=SWITCH_PROBES):
    """Residual of ``(g(t u) - 1) K(u) = (g(u) - 1) K(t u)``.

    Raises :class:`Inapplicable` if K(u) = 0 or g hits 1 on the sampled ray.
    """
    u = as_vector(u, name="u")
    Ku = np.asarray(K(u), dtype=float)
    _require_nonzero(Ku)
    if not _ray_g_nontrivial(g, u, probes):
        raise Inapplicable("g = 1 somewhere on the ray away from 0")
    t = np.asarray(t, dtype=float)
    tu = np.multiply.outer(t, u)
    gtu = np.asarray(g(tu), dtype=float)
    lhs = np.multiply.outer(gtu - 1.0, Ku)
    rhs = (float(g(u)) - 1.0) * np.asarray(K(tu), dtype=float)
    return identity_residual(lhs, rhs)


@dataclass
class Corollary1Report:
    a: float
    b: float
    c: float
    b_K: float
    psi_rho: float
    psi_b: float
    c_zero_branch: bool
    residual_additive: float
    residual_linear: float
    residual_induced: float
    residual_shuffle: float

    @property
    def max_residual(self):
        return max(self.residual_additive, self.residual_linear,
                   self.residual_induced, self.residual_shuffle)


def corollary1_maps(K, u, p: RadialParams, s, t, rho_v=None):
    """Induced maps between scalar Popa homomorphisms along the ray of u.

    With ``a = e^rho(u) - 1``, ``b = log(1 + a)`` and ``c = gamma(u)/rho(u)``:

    * additivity ``a(u + v) = a(u) o_1 a(v)`` and ``b(u + v) = b(u) + b(v)``,
      where ``v`` is any vector with ``rho(v) = rho_v`` (default ``s rho(u)``);
    * the induced identity at ``w = a u / rho(u)`` (so that ``rho(w) = a``)::

        eta_a^{-1}(eta_a(1)^c) K(s w) = eta_a^{-1}(eta_a(s)^c) K(w)

    * ``K(psi_rho(t) u) = psi_{b_K}(t) K(u)`` with
      ``psi_r(t) = eta_r^{-1}((1 + r)^t)`` and ``b_K = (1 + rho(u))^c - 1``
      (``t K(u)`` when c = 0).
    """
    r, gam = float(p.rho), float(p.gamma)
    if not r > 0:
        raise ValueError("need rho(u) > 0")
    u = as_vector(u, name="u")
    a = math.expm1(r)
    b = math.log1p(a)
    c = gam / r
    rv = s * r if rho_v is None else float(rho_v)
    a_v = math.expm1(rv)
    a_uv = math.expm1(r + rv)
    res_i = abs(a_uv - (a + a_v + a * a_v)) / (1.0 + abs(a_uv))
    res_b = abs(math.log1p(a_uv) - b - math.log1p(a_v)) / (1.0 + abs(b))

    w = (a / r) * u
    Kw = np.asarray(K(w), dtype=float)
    lhs = (math.expm1(gam) / a) * np.asarray(K(s * w), dtype=float)
    rhs = (math.expm1(c * math.log1p(a * s)) / a) * Kw
    res_ii = float(identity_residual(lhs, rhs))

    L = math.log1p(r)
    psi_r = math.expm1(t * L) / r
    c_zero = abs(c) <= TAU_BRANCH
    b_K = math.expm1(c * L)
    psi_b = t if c_zero else math.expm1(t * c * L) / b_K
    res_iii = float(identity_residual(np.asarray(K(psi_r * u), dtype=float),
                                      psi_b * np.asarray(K(u), dtype=float)))
    return Corollary1Report(a, b, c, b_K, psi_r, psi_b, c_zero, res_i, res_b, res_ii, res_iii)


def nullspace_dichotomy_check(K, aux: AuxiliarySpec):
    """For an NB auxiliary: ``max |K|`` on a basis of N*(alpha) and the numerical
    rank of K on a basis of N(rho).  For NA returns the rank only."""
    case = nullspace_classify(aux)
    nrho = linalg.null_space(aux.rho.coeffs[None, :])
    imgs = np.asarray(K(nrho.T), dtype=float) if nrho.shape[1] else np.zeros((0, 1))
    out = {"case": case.case,
           "rank_K_N_rho": linalg.rank(imgs.T, atol=1e-9) if imgs.size else 0}
    if case.case == "NB":
        basis = nullstar_basis(aux)
        vals = np.asarray(K(basis.T), dtype=float) if basis.shape[1] else np.zeros((0, 1))
        out["max_K_on_nullstar"] = float(np.max(_norm(vals))) if vals.size else 0.0
    return out


def is_nontrivial(K, h, g, directions, probe=2.0, tol=1e-6):
    """Decidable stand-in for "some w has K(w) != 0 and lambda_w != id":
    checks ``|lambda_w(probe) - probe| > tol`` for the given directions."""
    for w in directions:
        w = as_vector(w, name="w")
        try:
            if not np.any(np.asarray(K(w)) != 0.0):
                continue
            p = RadialParams(gateaux_at_zero(g, w), gateaux_at_zero(h, w))
            if abs(float(lambda_link(p, probe)) - probe) > tol:
                return True
        except (DomainError, ValueError):
            continue
    return False
