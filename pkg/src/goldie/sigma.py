"""Construction of the functional sigma on Y with ``g(x) = 1 + sigma(K(x))``.

Two regimes, decided from the auxiliary alone:

* NA: gamma = log g vanishes on N(rho).  sigma is zero on K(N(rho)) and
  takes the value ``g(u) - 1`` on K(u) for a reference u with rho(u) = 1.
* NB: gamma does not vanish on N(rho).  With V0 = N(rho) ∩ N(gamma), a
  direction v1 in N(rho) normalised to gamma(v1) = 1 and u as before, sigma
  is zero on K(V0), ``g(v1) - 1`` on K(v1) and ``g(u) - 1`` on K(u).

Off span K(X) sigma is set to zero (orthogonal complement).  Every build
also records a ledger of the intermediate identities the construction relies
on, evaluated on a validation sample, so a failure points at one step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import linalg
from .index import AuxiliarySpec, default_u_ref, gamma_log, nullstar_basis
from .kernel import KernelSpec, verify_gfe
from .link import RadialParams, lambda_link
from .popa_core import LinearFunctional, PopaGroup, circle, rel_residual, sample_carrier

TOL_SIGMA = 1e-8
TOL_LEDGER = 1e-9
TOL_REGIME = 1e-9
SPAN_RTOL = 1e-10
N_VALIDATE = 1000


class SigmaBuildError(ArithmeticError):
    """The construction or its validation failed; ``result`` holds what was built."""

    def __init__(self, msg, result=None):
        super().__init__(msg)
        self.result = result


@dataclass(eq=False)
class RegimeDecision:
    regime: str
    witness: Optional[np.ndarray]
    gamma_on_basis: np.ndarray


@dataclass(eq=False)
class SigmaResult:
    sigma: LinearFunctional
    regime: str
    basis_data: dict
    max_residual: float
    ledger: dict = field(default_factory=dict)
    complement_residual: float = 0.0

    def failed_steps(self, tol=TOL_LEDGER):
        return [k for k, v in self.ledger.items() if not v <= tol]

    def to_json(self):
        def conv(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            return v

        return {
            "sigma": self.sigma.to_json(),
            "regime": self.regime,
            "basis_data": {k: conv(v) for k, v in self.basis_data.items()},
            "max_residual": self.max_residual,
            "ledger": dict(self.ledger),
            "complement_residual": self.complement_residual,
        }


def _aux_of(kernel, aux):
    if aux is None:
        if not isinstance(kernel, KernelSpec):
            raise ValueError("an AuxiliarySpec is required for black-box kernels")
        aux = kernel.aux()
    return aux


def decide_regime(kernel, aux: Optional[AuxiliarySpec] = None, tol=TOL_REGIME):
    """NA iff gamma vanishes on every vector of an orthonormal basis of N(rho);
    otherwise NB, with the basis vector of largest |gamma| as witness."""
    aux = _aux_of(kernel, aux)
    basis = linalg.null_space(aux.rho.coeffs[None, :])
    if basis.shape[1] == 0:
        return RegimeDecision("NA", None, np.zeros(0))
    gam = np.atleast_1d(gamma_log(aux, basis.T))
    if np.all(np.abs(gam) <= tol):
        return RegimeDecision("NA", None, gam)
    i = int(np.argmax(np.abs(gam)))
    return RegimeDecision("NB", basis[:, i].copy(), gam)


def _probe_points(aux: AuxiliarySpec):
    # scaled standard basis, kept inside the carrier
    pts = []
    for i in range(aux.dim):
        e = np.zeros(aux.dim)
        e[i] = 0.5 / max(1.0, abs(aux.rho.coeffs[i]))
        pts.append(e)
    return np.array(pts)


def span_KX(kernel, aux: AuxiliarySpec, extra=()):
    """Orthonormal basis of span K(X) from K on the (scaled) standard basis,
    on a basis of N(rho), on u_ref and on any extra points."""
    pts = [_probe_points(aux)]
    nrho = linalg.null_space(aux.rho.coeffs[None, :])
    if nrho.shape[1]:
        pts.append(nrho.T)
    if aux.u_ref is not None:
        pts.append(np.vstack([aux.u_ref, 0.5 * aux.u_ref]))
    for e in extra:
        pts.append(np.atleast_2d(e))
    imgs = np.asarray(kernel(np.vstack(pts)), dtype=float)
    scale = max(np.abs(imgs).max(), 1e-300)
    return linalg.orth(imgs.T, SPAN_RTOL, atol=SPAN_RTOL * scale)


def _sigma_K(sigma, kernel, x):
    return np.asarray(kernel(x), dtype=float) @ sigma.coeffs


def validate_sigma(kernel, aux: AuxiliarySpec, sigma: LinearFunctional, n=N_VALIDATE, seed=0,
                   points=None):
    """Residuals of ``g(x) - 1 = sigma(K(x))`` on a fresh carrier sample."""
    if points is None:
        points = sample_carrier(aux.group, n, np.random.default_rng(seed))
    gm1 = np.exp(gamma_log(aux, points)) - 1.0
    return rel_residual(gm1 - _sigma_K(sigma, kernel, points), gm1)


def _finish(kernel, aux, sigma, regime, basis_data, ledger, n_validate, seed, tol, extra=()):
    q = span_KX(kernel, aux, extra)
    comp = float(np.linalg.norm(sigma.coeffs - q @ (q.T @ sigma.coeffs)))
    basis_data["span_rank"] = q.shape[1]
    res = SigmaResult(sigma, regime, basis_data, 0.0, ledger, comp)
    eq = validate_sigma(kernel, aux, sigma, n_validate, seed)
    ledger["Eq"] = float(np.max(eq))
    rng = np.random.default_rng(seed + 2)
    xs = sample_carrier(aux.group, n_validate, rng)
    ys = sample_carrier(aux.group, n_validate, rng)
    ledger["GFE"] = float(np.max(verify_gfe(kernel, aux, xs, ys)))
    res.max_residual = max(ledger.values())
    if not res.max_residual <= tol:
        raise SigmaBuildError(
            f"g = 1 + sigma(K) fails (residual {res.max_residual:.3e}); "
            f"ledger steps over tolerance: {res.failed_steps(tol)}", res)
    return res


def _trivial_sigma(kernel, aux, regime, basis_data, ledger, n_validate, seed, tol):
    # g == 1 regime: sigma = 0 and g == 1 is asserted on a sample
    pts = sample_carrier(aux.group, n_validate, np.random.default_rng(seed + 1))
    ledger["g_identically_1"] = float(np.max(np.abs(np.exp(gamma_log(aux, pts)) - 1.0)))
    sigma = LinearFunctional.zero(kernel.dim_y if hasattr(kernel, "dim_y")
                                  else np.asarray(kernel(pts[0])).shape[-1])
    return _finish(kernel, aux, sigma, regime, basis_data, ledger, n_validate, seed, tol)


def build_sigma_A(kernel, aux: Optional[AuxiliarySpec] = None, n_validate=N_VALIDATE, seed=0,
                  tol=TOL_SIGMA, u=None):
    """sigma for the NA regime (zero on K(N(rho)), ``g(u) - 1`` on K(u)).

    ``u`` is the reference direction (``rho(u) = 1``); any choice gives the
    same sigma on span K(X).
    """
    aux = _aux_of(kernel, aux)
    ledger = {}
    basis_data = {}
    if u is None:
        u = default_u_ref(aux.rho)
    else:
        u = np.asarray(u, dtype=float)
        if abs(aux.rho(u) - 1.0) > TOL_REGIME:
            raise ValueError("reference direction needs rho(u) = 1")
    if u is None:
        return _trivial_sigma(kernel, aux, "NA", basis_data, ledger, n_validate, seed, tol)
    basis_data["u"] = u
    gu = float(np.exp(gamma_log(aux, u)))
    if abs(gu - 1.0) <= 1e-12:
        return _trivial_sigma(kernel, aux, "NA", basis_data, ledger, n_validate, seed, tol)
    Ku = np.asarray(kernel(u), dtype=float)
    nrho = linalg.null_space(aux.rho.coeffs[None, :])
    KN = np.asarray(kernel(nrho.T), dtype=float) if nrho.shape[1] else np.zeros((0, Ku.size))
    scale = max(np.abs(Ku).max(), np.abs(KN).max() if KN.size else 0.0)
    if scale == 0.0:
        raise SigmaBuildError("K(u) = 0 while g(u) != 1: no sigma exists")
    q0 = linalg.orth(KN.T, SPAN_RTOL, atol=SPAN_RTOL * scale) if KN.size else np.zeros((Ku.size, 0))
    r = Ku - q0 @ (q0.T @ Ku)
    basis_data["K_N_rho_rank"] = q0.shape[1]
    if np.linalg.norm(r) <= SPAN_RTOL * scale:
        raise SigmaBuildError("K(u) lies in K(N(rho)) while g(u) != 1: no sigma exists")
    sigma = LinearFunctional((gu - 1.0) * r / (r @ r))

    pts = sample_carrier(aux.group, n_validate, np.random.default_rng(seed + 1))
    rx = aux.rho(pts)
    ru = np.multiply.outer(rx, u)
    p = RadialParams(float(aux.derivative(u)), 1.0)
    lam = lambda_link(p, rx)
    sKx = _sigma_K(sigma, kernel, pts)
    sKru = _sigma_K(sigma, kernel, ru)
    g_x = np.exp(gamma_log(aux, pts))
    g_ru = np.exp(gamma_log(aux, ru))
    K_ru = np.asarray(kernel(ru), dtype=float)
    lamKu = np.multiply.outer(lam, Ku)
    ledger["A1"] = float(np.max(rel_residual(sKx - sKru, sKx)))
    ledger["A2"] = float(np.max(np.linalg.norm(K_ru - lamKu, axis=-1)
                                / (1.0 + np.linalg.norm(lamKu, axis=-1))))
    ledger["A3"] = float(np.max(rel_residual(sKx - lam * (gu - 1.0), sKx)))
    ledger["A4"] = float(np.max(rel_residual(g_x - g_ru, g_x)))
    ledger["A5"] = float(np.max(rel_residual((g_ru - 1.0) - lam * (gu - 1.0), g_ru - 1.0)))
    return _finish(kernel, aux, sigma, "NA", basis_data, ledger, n_validate, seed, tol, extra=(u,))


def build_sigma_B(kernel, aux: Optional[AuxiliarySpec] = None, witness=None,
                  n_validate=N_VALIDATE, seed=0, tol=TOL_SIGMA):
    """sigma for the NB regime on the blocks K(V0), K(v1), K(u).

    The three image blocks are usually linearly dependent (K(N(rho)) is a line
    in this regime); sigma is then solved on their span in least squares and
    the system's consistency is part of the ledger.
    """
    aux = _aux_of(kernel, aux)
    if witness is None:
        witness = decide_regime(kernel, aux).witness
        if witness is None:
            raise SigmaBuildError("no NB witness: gamma vanishes on N(rho)")
    witness = np.asarray(witness, dtype=float)
    if abs(aux.rho(witness)) > TOL_REGIME * (1.0 + np.linalg.norm(witness)):
        raise ValueError("witness must lie in N(rho)")
    gw = float(gamma_log(aux, witness))
    if abs(gw) <= TOL_REGIME:
        raise ValueError("witness must have gamma != 0")
    v1 = witness / gw
    u = default_u_ref(aux.rho)
    u = np.zeros(aux.dim) if u is None else u
    V0 = nullstar_basis(aux)
    basis_data = {"v1": v1, "u": u, "V0": V0.T}

    blocks, targets = [], []
    for col in V0.T:
        blocks.append(np.asarray(kernel(col), dtype=float))
        targets.append(0.0)
    blocks.append(np.asarray(kernel(v1), dtype=float))
    targets.append(float(np.exp(gamma_log(aux, v1))) - 1.0)
    if np.any(u != 0):
        blocks.append(np.asarray(kernel(u), dtype=float))
        targets.append(float(np.exp(gamma_log(aux, u))) - 1.0)
    B = np.array(blocks).T
    targets = np.array(targets)
    scale = max(np.abs(B).max(), 1e-300)
    q = linalg.orth(B, SPAN_RTOL, atol=SPAN_RTOL * scale)
    coords = q.T @ B
    c, *_ = np.linalg.lstsq(coords.T, targets, rcond=None)
    sigma = LinearFunctional(q @ c)
    basis_data["block_rank"] = q.shape[1]
    basis_data["n_blocks"] = B.shape[1]
    ledger = {"blocks_consistent": float(np.max(rel_residual(coords.T @ c - targets, targets)))}

    pts = sample_carrier(aux.group, n_validate, np.random.default_rng(seed + 1))
    rx = aux.rho(pts)
    ru = np.multiply.outer(rx, u)
    a = aux.alpha(pts - ru) if np.any(u != 0) else aux.alpha(pts)
    av1 = np.multiply.outer(a, v1)
    v0 = pts - av1 - ru
    g = lambda z: np.exp(gamma_log(aux, z))
    g_x, g_av1, g_ru, g_v0 = g(pts), g(av1), g(ru), g(v0)
    K_x = np.asarray(kernel(pts), dtype=float)
    K_parts = (np.asarray(kernel(v0), dtype=float) + np.asarray(kernel(av1), dtype=float)
               + g_av1[:, None] * np.asarray(kernel(ru), dtype=float))
    ledger["B0_g_product"] = float(np.max(rel_residual(g_v0 * g_av1 * g_ru - g_x, g_x)))
    ledger["B0_K_decomposition"] = float(np.max(np.linalg.norm(K_x - K_parts, axis=-1)
                                                / (1.0 + np.linalg.norm(K_x, axis=-1))))
    ledger["B1"] = float(np.max(rel_residual(_sigma_K(sigma, kernel, ru) - (g_ru - 1.0), g_ru - 1.0)))
    ledger["B2"] = float(np.max(rel_residual(_sigma_K(sigma, kernel, av1) - (g_av1 - 1.0),
                                             g_av1 - 1.0)))
    ledger["V0_annihilated"] = float(np.max(np.abs(_sigma_K(sigma, kernel, v0))))
    if not ledger["blocks_consistent"] <= TOL_LEDGER:
        res = SigmaResult(sigma, "NB", basis_data, float("inf"), ledger)
        raise SigmaBuildError("block values are inconsistent on span K(X)", res)
    return _finish(kernel, aux, sigma, "NB", basis_data, ledger, n_validate, seed, tol,
                   extra=(v1, u))


def build_sigma(kernel, aux: Optional[AuxiliarySpec] = None, **kw):
    aux = _aux_of(kernel, aux)
    dec = decide_regime(kernel, aux)
    if dec.regime == "NA":
        return build_sigma_A(kernel, aux, **kw)
    return build_sigma_B(kernel, aux, dec.witness, **kw)


def _sample_for(kernel, n, seed, rho):
    if rho is None:
        if not isinstance(kernel, KernelSpec):
            raise ValueError("rho is required for black-box kernels")
        rho = kernel.aux().rho
    return sample_carrier(PopaGroup(rho), n, np.random.default_rng(seed))


def uniqueness_check(kernel, sigma1: LinearFunctional, sigma2: LinearFunctional, n=N_VALIDATE,
                     seed=0, rho=None, points=None):
    """``max |sigma1(K(x)) - sigma2(K(x))|`` over a carrier sample."""
    if points is None:
        points = _sample_for(kernel, n, seed, rho)
    Kx = np.asarray(kernel(points), dtype=float)
    return float(np.max(np.abs(Kx @ (sigma1.coeffs - sigma2.coeffs))))


def hom_check(kernel, sigma: LinearFunctional, u, v, rho: Optional[LinearFunctional] = None):
    """Residual of ``K(u o_rho v) = K(u) o_sigma K(v)`` and of its scalar image
    ``sigma K(u o v) = sigma K(u) o_1 sigma K(v)`` (the larger of the two)."""
    if rho is None:
        rho = kernel.aux().rho
    uv = circle(PopaGroup(rho), u, v)
    Kuv = np.asarray(kernel(uv), dtype=float)
    Ku = np.asarray(kernel(u), dtype=float)
    Kv = np.asarray(kernel(v), dtype=float)
    su, sv, suv = Ku @ sigma.coeffs, Kv @ sigma.coeffs, Kuv @ sigma.coeffs
    scal = rel_residual(suv - (su + sv + su * sv), suv)
    rhs = Ku + Kv + np.expand_dims(su, -1) * Kv
    vec = (np.linalg.norm(np.atleast_1d(Kuv - rhs), axis=-1)
           / (1.0 + np.linalg.norm(np.atleast_1d(Kuv), axis=-1)))
    return np.maximum(scal, vec)
