"""The generalised Goldie equation ``K(u + h(u) v) = K(u) + g(u) K(v)``.

Triples (K, h, g) are black boxes with a domain guard.  Along a direction u
the Gateaux derivatives ``rho(u) = h'_u(0)`` and ``gamma(u) = g'_u(0)``
decide which of four closed forms (h, g) take on the ray; with a linear
derivative of h the equation collapses to the Popa-group form handled in
:mod:`goldie.kernel`.
"""

from __future__ import annotations

import json
import subprocess
import sys
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .diff import T0, DerivativeError, gateaux_at_zero, richardson_derivative
from .index import AuxiliarySpec, default_u_ref, verify_M
from .kernel import (
    KernelSpec,
    Inapplicable,
    identity_residual,
    is_nontrivial,
    kernel_from_json,
    verify_gfe,
)
from .link import RadialParams, lambda_link
from .popa_core import (
    CARRIER_EPS,
    DomainError,
    LinearFunctional,
    PopaGroup,
    as_vector,
    rel_residual,
    sample_carrier,
)

TAU_CLASS = 1e-5
TOL_CLASS_VALIDATE = 1e-6
TOL_LINEARITY = 1e-6
TOL_T5 = 1e-8

__all__ = [
    "GgeTriple", "TetraClass", "gateaux_at_zero", "verify_gge", "radial_equivalence_check",
    "gs_check", "gs_affine_residual", "classify_tetrachotomy", "derivative_identities",
    "theorem5_reduce", "Theorem5Result", "triple_from_json", "SubprocessEvaluator",
    "subprocess_triple", "serve",
]


# -- scalar auxiliaries ------------------------------------------------------


@dataclass(eq=False)
class One:
    def __call__(self, x):
        x = as_vector(x)
        return np.ones(x.shape[:-1]) if x.ndim == 2 else 1.0

    def to_json(self):
        return {"kind": "one"}


@dataclass(eq=False)
class Eta:
    """``1 + rho(x)`` on the carrier of G_rho."""

    rho: LinearFunctional

    def __call__(self, x):
        out = 1.0 + self.rho(x)
        if not np.all(out > CARRIER_EPS):
            raise DomainError("1 + rho(x) <= 0")
        return out

    def to_json(self):
        return {"kind": "eta", "rho": self.rho.to_json()}


def scalar_from_json(obj):
    kind = obj.get("kind")
    if kind == "one":
        return One()
    if kind == "eta":
        return Eta(LinearFunctional.from_json(obj["rho"]))
    if kind == "aux":
        return AuxiliarySpec.from_json(obj)
    raise ValueError(f"unknown scalar descriptor kind {kind!r}")


def _scalar_to_json(f):
    if isinstance(f, AuxiliarySpec):
        return {"kind": "aux", **f.to_json()}
    return f.to_json()


@dataclass(eq=False)
class GgeTriple:
    K: Callable
    h: Callable
    g: Callable
    dim: int
    domain: Optional[Callable] = None
    descriptor: Optional[dict] = field(default=None, repr=False)

    def __post_init__(self):
        h0, g0 = float(self.h(np.zeros(self.dim))), float(self.g(np.zeros(self.dim)))
        if abs(h0 - 1.0) > 1e-9 or abs(g0 - 1.0) > 1e-9:
            raise ValueError(f"triple must be standardised: h(0)={h0}, g(0)={g0}")

    def in_domain(self, x):
        if self.domain is not None:
            return bool(np.all(self.domain(x)))
        try:
            self.h(x)
            self.g(x)
            self.K(x)
        except DomainError:
            return False
        return True

    @classmethod
    def from_kernel(cls, kernel: KernelSpec, h=None, g=None):
        """The Goldie triple of a closed-form kernel: h = 1 + rho, g = its auxiliary."""
        aux = kernel.aux()
        h = Eta(aux.rho) if h is None else h
        g = aux if g is None else g
        desc = {"kernel": kernel.to_json(), "h": _scalar_to_json(h), "g": _scalar_to_json(g)}
        return cls(kernel, h, g, kernel.dim_x, aux.group.contains, desc)

    def to_json(self):
        if self.descriptor is None:
            raise ValueError("black-box triple has no closed-form descriptor")
        return self.descriptor


def triple_from_json(obj, check=True):
    kernel = kernel_from_json(obj["kernel"], check=check)
    h = obj.get("h", "gfe")
    g = obj.get("g", "gfe")
    return GgeTriple.from_kernel(kernel, None if h == "gfe" else scalar_from_json(h),
                                 None if g == "gfe" else scalar_from_json(g))


# -- subprocess evaluators -----------------------------------------------------


class SubprocessEvaluator:
    """Client side of the line-delimited JSON protocol

        {"f": "K"|"h"|"g", "x": [...]}  ->  {"y": [...]}   (or {"error": msg})
    """

    def __init__(self, cmd):
        self.proc = subprocess.Popen(cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                     text=True, bufsize=1)

    def request(self, f, x):
        self.proc.stdin.write(json.dumps({"f": f, "x": list(map(float, x))}) + "\n")
        self.proc.stdin.flush()
        line = self.proc.stdout.readline()
        if not line:
            raise RuntimeError("evaluator process closed its output")
        msg = json.loads(line)
        if "error" in msg:
            raise DomainError(msg["error"])
        return np.asarray(msg["y"], dtype=float)

    def evaluator(self, f, scalar):
        def call(x):
            x = as_vector(x)
            rows = x if x.ndim == 2 else x[None, :]
            out = [self.request(f, r) for r in rows]
            out = np.array([o[0] for o in out]) if scalar else np.array(out)
            return out if x.ndim == 2 else out[0]
        return call

    def close(self):
        if self.proc.poll() is None:
            self.proc.stdin.close()
            self.proc.wait(timeout=10)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def subprocess_triple(cmd, dim):
    ev = SubprocessEvaluator(cmd)
    t = GgeTriple(ev.evaluator("K", False), ev.evaluator("h", True), ev.evaluator("g", True), dim)
    t.evaluator = ev
    return t


def serve(triple: GgeTriple, stdin=sys.stdin, stdout=sys.stdout):
    """Server side of the evaluator protocol; one JSON object per line."""
    fns = {"K": triple.K, "h": triple.h, "g": triple.g}
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
            y = np.atleast_1d(np.asarray(fns[req["f"]](np.asarray(req["x"], dtype=float))))
            reply = {"y": y.tolist()}
        except (DomainError, KeyError, ValueError) as exc:
            reply = {"error": str(exc)}
        stdout.write(json.dumps(reply) + "\n")
        stdout.flush()


# -- checks -------------------------------------------------------------------


def verify_gge(T: GgeTriple, u, v):
    """Relative residual of ``K(u + h(u) v) = K(u) + g(u) K(v)``."""
    u = as_vector(u, T.dim, "u")
    v = as_vector(v, T.dim, "v")
    hu = np.asarray(T.h(u), dtype=float)
    p = u + np.expand_dims(hu, -1) * v
    lhs = np.asarray(T.K(p), dtype=float)
    rhs = np.asarray(T.K(u), dtype=float) + np.expand_dims(np.asarray(T.g(u)), -1) * np.asarray(T.K(v))
    return identity_residual(lhs, rhs)


def radial_params(T: GgeTriple, u, t0=T0):
    return RadialParams(gateaux_at_zero(T.g, u, t0), gateaux_at_zero(T.h, u, t0))


def radial_equivalence_check(T: GgeTriple, w, a, b, params: Optional[RadialParams] = None):
    """Residual of ``lambda_w(h(a + h(a) b) / (h(a) h(b))) = g(a + h(a) b) / (g(a) g(b))``
    with a, b read as the points ``a w`` and ``b w`` of the ray, together with
    the underlying vector identity ``K(H w) = G K(w)``.  Returns the larger."""
    w = as_vector(w, T.dim, "w")
    Kw = np.asarray(T.K(w), dtype=float)
    if not np.any(Kw != 0):
        raise Inapplicable("K(w) = 0")
    if params is None:
        params = radial_params(T, w)
    aw, bw = a * w, b * w
    ha = float(T.h(aw))
    comp = aw + ha * bw
    H = float(T.h(comp)) / (ha * float(T.h(bw)))
    G = float(T.g(comp)) / (float(T.g(aw)) * float(T.g(bw)))
    lam = float(lambda_link(params, H))
    scalar = float(rel_residual(lam - G, G))
    vector = float(identity_residual(np.asarray(T.K(H * w), dtype=float), G * Kw))
    return max(scalar, vector)


def gs_check(f, u, a, b):
    """Residual of the Golab-Schinzel equation ``f(a + f(a) b) = f(a) f(b)`` on the ray of u."""
    u = as_vector(u, name="u")
    fa = float(f(a * u))
    lhs = float(f((a + fa * b) * u))
    rhs = fa * float(f(b * u))
    return float(rel_residual(lhs - rhs, rhs))


def gs_affine_residual(f, u, s_values=np.linspace(-0.5, 2.0, 11)):
    """max over s of ``|f(s u) - (1 + f'_u(0) s)|``: the companion check that a
    continuous solution of (GS) is affine along the ray."""
    u = as_vector(u, name="u")
    slope = gateaux_at_zero(f, u, check_homogeneity=False)
    worst = 0.0
    for s in s_values:
        try:
            val = float(f(s * u))
        except DomainError:
            continue
        worst = max(worst, float(rel_residual(val - (1.0 + slope * s), val)))
    return worst


CASES = {
    "i": "rho = gamma = 0",
    "ii": "rho = 0, gamma != 0",
    "iii": "rho != 0, gamma = 0",
    "iv": "rho != 0, gamma != 0",
}


@dataclass(eq=False)
class TetraClass:
    case: str
    rho_u: float
    gamma_u: float
    direction: np.ndarray
    validation_residual: float = 0.0
    validated: bool = True
    nontrivial: Optional[bool] = None

    def to_json(self):
        return {"case": self.case, "rho_u": self.rho_u, "gamma_u": self.gamma_u,
                "direction": self.direction.tolist(),
                "validation_residual": self.validation_residual,
                "validated": self.validated, "nontrivial": self.nontrivial}


class TetraValidationError(ArithmeticError):
    def __init__(self, msg, result):
        super().__init__(msg)
        self.result = result


def case_of(rho_u, gamma_u, tau=TAU_CLASS):
    zr, zg = abs(rho_u) <= tau, abs(gamma_u) <= tau
    if zr and zg:
        return "i"
    if zr:
        return "ii"
    if zg:
        return "iii"
    return "iv"


def closed_forms(case, rho_u, gamma_u, s):
    """(h(su), g(su)) predicted for a case."""
    s = np.asarray(s, dtype=float)
    one = np.ones_like(s)
    if case == "i":
        return one, one
    if case == "ii":
        return one, np.exp(s * gamma_u)
    if case == "iii":
        return 1.0 + s * rho_u, one
    base = 1.0 + s * rho_u
    return base, np.exp((gamma_u / rho_u) * np.log(base))


S_GRID = tuple(np.linspace(-0.5, 1.5, 9))


def classify_tetrachotomy(T: GgeTriple, u, tau=TAU_CLASS, tol=TOL_CLASS_VALIDATE, s_grid=S_GRID,
                          strict=True, nontrivial_directions=None):
    """Assign case (i)-(iv) from the Gateaux derivatives of h and g along u, then
    validate the case's closed forms for h(su), g(su) on ``s_grid``."""
    u = as_vector(u, T.dim, "u")
    if not np.any(np.asarray(T.K(u)) != 0):
        raise Inapplicable("K(u) = 0")
    p = radial_params(T, u)
    case = case_of(p.rho, p.gamma, tau)
    worst = 0.0
    for s in s_grid:
        su = s * u
        if 1.0 + s * p.rho <= 0.05 or not T.in_domain(su):
            continue
        h_pred, g_pred = closed_forms(case, p.rho, p.gamma, s)
        hv, gv = float(T.h(su)), float(T.g(su))
        worst = max(worst, float(rel_residual(hv - h_pred, h_pred)),
                    float(rel_residual(gv - g_pred, g_pred)))
    dirs = [u] if nontrivial_directions is None else nontrivial_directions
    nontrivial = is_nontrivial(T.K, T.h, T.g, dirs)
    res = TetraClass(case, p.rho, p.gamma, u, worst, worst <= tol, nontrivial)
    if strict and not res.validated:
        raise TetraValidationError(
            f"closed forms of case ({case}) fail along u: residual {worst:.3e}", res)
    return res


def _lambda_prime(p: RadialParams, t, h=1e-4):
    f = lambda x: lambda_link(p, t + x[0])
    return float(richardson_derivative(f, np.array([1.0]), h))


def derivative_identities(T: GgeTriple, u, s, t, params: Optional[RadialParams] = None):
    """Residuals of ``lambda'(1 + t h(su)) h(su) = g(su) lambda'(t)`` and its t = 0
    form, with ``lambda = lambda(.; s gamma(u), s rho(u))``."""
    u = as_vector(u, T.dim, "u")
    if params is None:
        params = radial_params(T, u)
    ps = RadialParams(s * params.gamma, s * params.rho)
    hs, gs = float(T.h(s * u)), float(T.g(s * u))
    d1l = _lambda_prime(ps, 1.0 + t * hs) * hs
    d1r = gs * _lambda_prime(ps, t)
    d2l = _lambda_prime(ps, 1.0) * hs
    d2r = gs * _lambda_prime(ps, 0.0)
    return (float(rel_residual(d1l - d1r, d1r)), float(rel_residual(d2l - d2r, d2r)))


# -- reduction to the Popa form ----------------------------------------------


class ReductionError(ArithmeticError):
    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


@dataclass(eq=False)
class Theorem5Result:
    rho: LinearFunctional
    aux: AuxiliarySpec
    report: dict


def theorem5_reduce(T: GgeTriple, n_validate=1000, seed=0, tol=TOL_T5, tol_lin=TOL_LINEARITY,
                    t0=T0):
    """Recover ``rho = Dh(0)`` and the auxiliary ``g = exp(alpha) (1 + rho)^beta``
    from basis derivatives, then validate the Goldie equation on fresh samples.

    ``beta`` is ``Dg(0)`` at the reference direction u (rho(u) = 1) and
    ``alpha = Dg(0) - beta rho``.
    """
    d = T.dim
    eye = np.eye(d)
    try:
        dh = np.array([gateaux_at_zero(T.h, e, t0) for e in eye])
        dg = np.array([gateaux_at_zero(T.g, e, t0) for e in eye])
    except DerivativeError as exc:
        raise ReductionError(f"derivative probe failed: {exc}") from exc
    lin = 0.0
    for i in range(d):
        for j in range(i + 1, d):
            e = eye[i] + eye[j]
            lin = max(lin, abs(gateaux_at_zero(T.h, e, t0) - dh[i] - dh[j]),
                      abs(gateaux_at_zero(T.g, e, t0) - dg[i] - dg[j]))
    report = {"linearity_residual": float(lin), "Dh0": dh.tolist(), "Dg0": dg.tolist()}
    if lin > tol_lin:
        raise ReductionError("Dh(0) is not linear on the probed basis pairs", report)
    # derivative noise below the linearity tolerance is snapped to zero
    dh = np.where(np.abs(dh) <= tol_lin, 0.0, dh)
    rho = LinearFunctional(dh)
    u = default_u_ref(rho)
    beta = 0.0 if u is None else float(dg @ u)
    a = dg - beta * dh
    alpha = LinearFunctional(np.where(np.abs(a) <= tol_lin, 0.0, a))
    aux = AuxiliarySpec(rho, alpha, beta, u)

    rng = np.random.default_rng(seed)
    grp = PopaGroup(rho)
    xs = sample_carrier(grp, n_validate, rng, margin=0.1)
    ys = sample_carrier(grp, n_validate, rng, margin=0.1)
    Kx = np.asarray(T.K(xs), dtype=float)
    off_kernel = np.linalg.norm(np.atleast_2d(Kx), axis=-1) > 1e-12
    report["excluded_N_K_directions"] = xs[~off_kernel].tolist()
    h_res = rel_residual(np.asarray(T.h(xs)) - (1.0 + rho(xs)), 1.0 + rho(xs))
    report["h_affine_residual"] = float(np.max(h_res[off_kernel])) if off_kernel.any() else 0.0
    gfe = verify_gfe(T.K, aux, xs, ys)
    report["gfe_residual"] = float(np.max(gfe))
    report["aux_M_residual"] = float(np.max(verify_M(aux, xs, ys)))
    g_res = rel_residual(np.asarray(T.g(xs)) - aux(xs), aux(xs))
    report["g_fit_residual"] = float(np.max(g_res))
    if report["gfe_residual"] > tol:
        raise ReductionError("recovered (rho, g) do not solve the Goldie equation", report)
    return Theorem5Result(rho, aux, report)
