"""Command-line front end: JSON in, a JSON run report out.

Exit codes: 0 when the report's verdict is ``pass``, 1 on ``fail``, 2 on
usage or domain errors (including malformed input and inapplicable checks).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import shlex
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib import resources

import numpy as np

from .gge import (
    Eta,
    ReductionError,
    TAU_CLASS,
    TetraValidationError,
    classify_tetrachotomy,
    gateaux_at_zero,
    gs_check,
    radial_equivalence_check,
    subprocess_triple,
    theorem5_reduce,
    triple_from_json,
    verify_gge,
)
from .index import (
    AuxiliarySpec,
    CrossValidationError,
    g_eval,
    gamma_log,
    nullspace_classify,
    radial_g_form,
    verify_M,
)
from .kernel import (
    GATE_TOL,
    Inapplicable,
    IterateDomainError,
    corollary1_maps,
    kernel_from_json,
    lemma4_iterates,
    lemma4_limit,
    radiality_check,
    switching_check,
    verify_gfe,
)
from .link import (
    INF,
    ZERO,
    RadialParams,
    ScalarHom,
    finite,
    g_radial,
    lambda_branch,
    lambda_fixed_point_unique,
    lambda_link,
    lambda_satisfies_gfe,
    sample_radial,
    sample_scalar,
    scalar_hom_check,
    scalar_hom_eval,
)
from .popa_core import (
    DomainError,
    LinearFunctional,
    PopaGroup,
    circle,
    eta,
    inverse,
    project_off_u,
    sample_carrier,
)
from .sigma import (
    N_VALIDATE,
    SigmaBuildError,
    build_sigma_A,
    build_sigma_B,
    decide_regime,
    hom_check,
    uniqueness_check,
    validate_sigma,
)

SCHEMA_VERSION = "1.0"

# each library operation and the one verb that exposes it
OP_TO_VERB = {
    "eta": "group verify",
    "circle": "group verify",
    "inverse": "group verify",
    "project_off_u": "group verify",
    "g_radial": "link eval",
    "lambda_link": "link eval",
    "scalar_hom_eval": "link table",
    "lambda_satisfies_gfe": "link check",
    "lambda_fixed_point_unique": "link check",
    "scalar_hom_check": "link check",
    "g_eval": "index eval",
    "gamma_log": "index eval",
    "radial_g_form": "index eval",
    "verify_M": "index verify",
    "nullspace_classify": "index classify",
    "verify_gfe": "kernel verify",
    "radiality_check": "kernel radial",
    "corollary1_maps": "kernel radial",
    "switching_check": "kernel switch",
    "lemma4_iterates": "kernel lemma4",
    "lemma4_limit": "kernel limit",
    "decide_regime": "sigma build",
    "build_sigma_A": "sigma build",
    "build_sigma_B": "sigma build",
    "uniqueness_check": "sigma check",
    "hom_check": "sigma check",
    "gateaux_at_zero": "gge classify",
    "classify_tetrachotomy": "gge classify",
    "theorem5_reduce": "gge reduce",
    "verify_gge": "gge verify",
    "radial_equivalence_check": "gge verify",
    "gs_check": "gge verify",
}


class UsageError(Exception):
    pass


class InapplicableRun(Exception):
    def __init__(self, msg, report):
        super().__init__(msg)
        self.report = report


# -- input -----------------------------------------------------------------------


_SCHEMAS = None


def _registry():
    global _SCHEMAS
    if _SCHEMAS is None:
        from referencing import Registry, Resource

        resources_ = []
        for entry in resources.files("goldie.schemas").iterdir():
            if entry.name.endswith(".json"):
                schema = json.loads(entry.read_text())
                resources_.append((schema["$id"], Resource.from_contents(schema)))
        _SCHEMAS = Registry().with_resources(resources_)
    return _SCHEMAS


def validate(obj, schema_name, source):
    """Validate against a bundled schema; the error names the JSON path."""
    from jsonschema import Draft202012Validator
    from jsonschema.exceptions import best_match

    reg = _registry()
    schema = reg.contents(f"https://goldie.invalid/schemas/{schema_name}.json")
    validator = Draft202012Validator(schema, registry=reg)
    err = best_match(validator.iter_errors(obj))
    if err is not None:
        # descend into oneOf/anyOf branches to the deepest failing location
        while err.context:
            err = max(err.context, key=lambda e: len(e.absolute_path))
        path = "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)
        raise UsageError(f"{source}: {path}: {err.message}")
    return obj


def load_json(path, schema_name=None):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"{path}: {exc.strerror}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}:{exc.lineno}:{exc.colno}: malformed JSON: {exc.msg}") from exc
    if schema_name is not None:
        validate(obj, schema_name, path)
    return obj


def parse_inline(text, source, schema_name="vector"):
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{source}:1:{exc.colno}: malformed JSON: {exc.msg}") from exc
    validate(obj, schema_name, source)
    return obj


def _build(fn, obj, source):
    try:
        return fn(obj)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"{source}: {exc}") from exc


# -- output -----------------------------------------------------------------------


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.floating, float)):
        o = float(o)
        return o if math.isfinite(o) else None
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    return o


def dumps(obj):
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, ensure_ascii=False)


def digest(command, inputs, args):
    payload = {"command": command, "inputs": inputs, "args": args}
    return hashlib.sha256(dumps(payload).encode("utf-8")).hexdigest()


def summarize(residuals):
    arr = np.concatenate([np.ravel(np.asarray(r, dtype=float)) for r in residuals]) \
        if residuals else np.zeros(0)
    arr = arr[~np.isnan(arr)]
    if arr.size == 0:
        return {"max": 0.0, "mean": 0.0, "p99": 0.0}
    return {"max": float(np.max(arr)), "mean": float(np.mean(arr)),
            "p99": float(np.percentile(arr, 99))}


def histogram(residuals, lo=-18, hi=0):
    """Counts of log10(residual) in unit bins; zeros go to the lowest bin."""
    r = np.ravel(np.asarray(residuals, dtype=float))
    logs = np.log10(np.maximum(r, 10.0**lo))
    edges = np.arange(lo, hi + 2)
    counts, _ = np.histogram(np.clip(logs, lo, hi + 1 - 1e-9), bins=edges)
    return {"log10_edges": edges.tolist(), "counts": counts.tolist()}


class Run:
    """Collects named residual arrays for one command and renders the report."""

    def __init__(self, args, command, tol):
        self.args = args
        self.command = command
        self.tol = tol
        self.inputs = {}
        self.ledger = {}
        self.result = {}
        self.diagnostic = None

    def input(self, name, obj):
        self.inputs[name] = obj
        return obj

    def record(self, name, residuals):
        self.ledger[name] = np.ravel(np.asarray(residuals, dtype=float))

    def report(self, verdict=None):
        summ = summarize(list(self.ledger.values()))
        if verdict is None:
            verdict = "pass" if summ["max"] <= self.tol else "fail"
        args = {k: v for k, v in sorted(vars(self.args).items())
                if k not in ("func", "out", "report", "parallel")}
        rep = {
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "inputs_digest": digest(self.command, self.inputs, args),
            "seed": self.args.seed,
            "tolerance": self.tol,
            "residual_summary": summ,
            "verdict": verdict,
            "ledger": [{"name": k, "residual": float(np.max(v)) if v.size else 0.0}
                       for k, v in self.ledger.items()],
            "result": self.result,
        }
        if self.diagnostic:
            rep["diagnostic"] = self.diagnostic
        return rep


def chunked(fn, arrays, workers):
    """Apply ``fn`` to row-chunks of the arrays, in order, on ``workers`` threads."""
    n = len(arrays[0])
    if workers <= 1 or n < 2 * workers:
        return fn(*arrays)
    bounds = np.linspace(0, n, workers + 1).astype(int)
    parts = [tuple(a[bounds[i]:bounds[i + 1]] for a in arrays) for i in range(workers)]
    with ThreadPoolExecutor(workers) as ex:
        outs = list(ex.map(lambda p: fn(*p), parts))
    return np.concatenate([np.atleast_1d(o) for o in outs])


def _rng(args, stream=0):
    return np.random.default_rng([args.seed, stream])


# -- group ---------------------------------------------------------------------


def cmd_group_verify(args, run):
    obj = run.input("group", load_json(args.group, "group"))
    grp = _build(PopaGroup.from_json, obj, args.group)
    rng = _rng(args)
    u, v, w = (sample_carrier(grp, args.n, rng, scale=args.scale) for _ in range(3))
    rel = lambda a, b: np.linalg.norm(a - b, axis=-1) / (1.0 + np.linalg.norm(b, axis=-1))
    zero = np.zeros_like(u)

    def assoc(u, v, w):
        return rel(circle(grp, circle(grp, u, v), w), circle(grp, u, circle(grp, v, w)))

    run.record("associativity", chunked(assoc, (u, v, w), args.parallel))
    run.record("identity", np.maximum(rel(circle(grp, u, zero), u), rel(circle(grp, zero, u), u)))
    inv = inverse(grp, u)
    run.record("inverse", np.maximum(rel(circle(grp, u, inv), zero), rel(circle(grp, inv, u), zero)))
    uv = circle(grp, u, v)
    lhs, rhs = eta(grp.rho, uv), eta(grp.rho, u) * eta(grp.rho, v)
    run.record("eta_multiplicative", np.abs(lhs - rhs) / np.abs(rhs))
    if not grp.rho.is_zero():
        i = int(np.argmax(np.abs(grp.rho.coeffs)))
        ur = np.zeros(grp.dim)
        ur[i] = 1.0 / grp.rho.coeffs[i]
        p = project_off_u(grp.rho, ur, u)
        run.record("projection_in_kernel", np.abs(grp.rho(p)) / (1.0 + np.linalg.norm(u, axis=-1)))
    run.result = {"dim": grp.dim, "samples": args.n}


# -- link --------------------------------------------------------------------


def _params(args, run):
    obj = run.input("params", load_json(args.params))
    if isinstance(obj, dict) and "sigma" in obj:
        validate(obj, "scalar_hom", args.params)
        return _build(ScalarHom.from_json, obj, args.params)
    validate(obj, "radial_params", args.params)
    return _build(RadialParams.from_json, obj, args.params)


def cmd_link_eval(args, run):
    p = _params(args, run)
    if not isinstance(p, RadialParams):
        raise UsageError(f"{args.params}: link eval takes {{gamma, rho}}; use link table for homomorphisms")
    t = np.asarray(args.t, dtype=float)
    try:
        lam, g = lambda_link(p, t), g_radial(p, t)
    except DomainError as exc:
        raise UsageError(f"--t: {exc}") from exc
    run.record("lambda(0)", abs(float(lambda_link(p, 0.0))))
    run.record("lambda(1)-1", abs(float(lambda_link(p, 1.0)) - 1.0))
    run.result = {"t": t, "lambda": np.atleast_1d(lam), "g": np.atleast_1d(g),
                  "branch": lambda_branch(p)}


def cmd_link_check(args, run):
    p = _params(args, run)
    rng = _rng(args)
    if isinstance(p, ScalarHom):
        s = sample_scalar(p.rho, args.n, rng)
        t = sample_scalar(p.rho, args.n, rng)
        run.record("hom_identity", chunked(lambda a, b: scalar_hom_check(p, a, b), (s, t), args.parallel))
        run.result = {"kind": "scalar_hom", "samples": args.n}
        return
    q = p.snapped()
    s = sample_radial(q.rho, args.n, rng)
    t = sample_radial(q.rho, args.n, rng)
    run.record("gfe_link", chunked(lambda a, b: lambda_satisfies_gfe(p, a, b), (s, t), args.parallel))
    run.record("lambda(0)", abs(float(lambda_link(p, 0.0))))
    run.record("lambda(1)-1", abs(float(lambda_link(p, 1.0)) - 1.0))
    if q.gamma == q.rho:
        unique = None  # lambda is the identity: every t is fixed
    else:
        unique = bool(lambda_fixed_point_unique(p))
        run.record("fixed_point_unique", 0.0 if unique else 1.0)
    run.result = {"kind": "radial", "samples": args.n, "fixed_point_unique": unique}


def cmd_link_table(args, run):
    rng = _rng(args)
    params = {"0": ZERO, "finite": None, "inf": INF}
    run.input("table", {"kappa": args.kappa, "rho": args.rho_value, "sigma": args.sigma_value})
    probe = np.array([0.25, 0.5, 2.0])
    cells = []
    for rn, rp in params.items():
        rp = finite(args.rho_value) if rp is None else rp
        for sn, sp in params.items():
            sp = finite(args.sigma_value) if sp is None else sp
            h = ScalarHom(rp, sp, args.kappa)
            s = sample_scalar(rp, args.n, rng)
            t = sample_scalar(rp, args.n, rng)
            res = scalar_hom_check(h, s, t)
            run.record(f"rho={rn},sigma={sn}", res)
            cells.append({"rho": rp.to_json(), "sigma": sp.to_json(),
                          "k(probe)": scalar_hom_eval(h, probe), "max_residual": float(np.max(res))})
    run.result = {"kappa": args.kappa, "probe": probe, "cells": cells}


# -- index -------------------------------------------------------------------------


def _aux(args, run, path=None):
    path = path or args.aux
    obj = run.input("aux", load_json(path, "aux"))
    return _build(AuxiliarySpec.from_json, obj, path)


def _vectors(text, source, dim):
    obj = parse_inline(text, source, "vector") if not text.strip().startswith("[[") else json.loads(text)
    x = np.asarray(obj, dtype=float)
    if x.shape[-1] != dim:
        raise UsageError(f"{source}: expected dimension {dim}, got {x.shape[-1]}")
    return x


def cmd_index_eval(args, run):
    spec = _aux(args, run)
    x = _vectors(args.x, "--x", spec.dim)
    run.input("x", x)
    try:
        g, gam = g_eval(spec, x), gamma_log(spec, x)
    except DomainError as exc:
        raise UsageError(f"--x: {exc}") from exc
    run.record("log_g_vs_gamma", np.abs(np.log(g) - gam) / (1.0 + np.abs(gam)))
    run.result = {"g": np.atleast_1d(g), "gamma": np.atleast_1d(gam)}
    if args.w is not None:
        w = _vectors(args.w, "--w", spec.dim)
        t = np.asarray(args.t, dtype=float)
        run.input("w", w)
        try:
            closed = radial_g_form(spec, w, t, tol=math.inf)
            direct = g_eval(spec, np.multiply.outer(t, w))
        except DomainError as exc:
            raise UsageError(f"--w/--t: {exc}") from exc
        run.record("radial_form", np.abs(closed - direct) / (1.0 + np.abs(direct)))
        run.result["radial"] = {"t": t, "g_tw": np.atleast_1d(closed)}


def cmd_index_verify(args, run):
    spec = _aux(args, run)
    rng = _rng(args)
    u = sample_carrier(spec.group, args.n, rng, scale=args.scale)
    v = sample_carrier(spec.group, args.n, rng, scale=args.scale)
    run.record("multiplicativity", chunked(lambda a, b: verify_M(spec, a, b), (u, v), args.parallel))
    worst = []
    for w in sample_carrier(spec.group, min(args.n, 50), rng, scale=args.scale, margin=0.2):
        rw = float(spec.rho(w))
        t = rng.uniform(0.0, 2.0, 16) if rw >= 0 else rng.uniform(0.0, 0.9 / -rw, 16)
        closed = radial_g_form(spec, w, t, tol=math.inf)
        direct = g_eval(spec, np.multiply.outer(t, w))
        worst.append(np.abs(closed - direct) / (1.0 + np.abs(direct)))
    run.record("radial_form", np.concatenate(worst))
    run.result = {"multiplicative": spec.is_multiplicative, "samples": args.n}


def cmd_index_classify(args, run):
    spec = _aux(args, run)
    case = nullspace_classify(spec)
    if case.witness is not None:
        w = case.witness
        run.record("witness_in_N_rho", abs(float(spec.rho(w))))
        run.record("witness_off_N_alpha", float(abs(spec.alpha(w)) <= 1e-12))
    run.result = {"case": case.case, "witness": case.witness}


# -- kernel ------------------------------------------------------------------------


def _kernel(args, run, check=False):
    obj = run.input("kernel", load_json(args.kernel, "kernel"))
    K = _build(lambda o: kernel_from_json(o, check=check), obj, args.kernel)
    aux = _aux(args, run) if getattr(args, "aux", None) else K.aux()
    if aux.dim != K.dim_x:
        raise UsageError(f"{args.aux}: dimension {aux.dim} does not match the kernel ({K.dim_x})")
    return K, aux


def _vector_or_default(args, run, aux, rng):
    if args.u is not None:
        u = _vectors(args.u, "--u", aux.dim)
    else:
        u = sample_carrier(aux.group, 1, rng, scale=0.5, margin=0.3)[0]
    run.input("u", u)
    return u


def cmd_kernel_verify(args, run):
    K, aux = _kernel(args, run)
    rng = _rng(args)
    u = sample_carrier(aux.group, args.n, rng, scale=args.scale)
    v = sample_carrier(aux.group, args.n, rng, scale=args.scale)
    run.record("gfe", chunked(lambda a, b: verify_gfe(K, aux, a, b), (u, v), args.parallel))
    run.result = {"family": K.family, "samples": args.n}


def cmd_kernel_radial(args, run):
    K, aux = _kernel(args, run)
    rng = _rng(args)
    us = sample_carrier(aux.group, args.n, rng, scale=args.scale, margin=0.2)
    ts = rng.uniform(0.0, 3.0, args.n)
    res, cor = [], []
    for u, t in zip(us, ts):
        p = RadialParams(float(aux.derivative(u)), float(aux.rho(u)))
        if 1.0 + t * p.rho <= 0.05 or not np.any(np.asarray(K(u)) != 0):
            continue
        res.append(float(radiality_check(K, u, t, p)))
        if p.rho > 0.05:
            cor.append(corollary1_maps(K, u, p, float(rng.uniform(0.1, 1.5)), t).max_residual)
    if not res:
        raise InapplicableRun("K vanishes on every sampled direction", run)
    run.record("radiality", res)
    if cor:
        run.record("induced_maps", cor)
    run.result = {"checked": len(res), "induced_checked": len(cor)}


def cmd_kernel_switch(args, run):
    K, aux = _kernel(args, run)
    rng = _rng(args)
    us = sample_carrier(aux.group, args.n, rng, scale=args.scale, margin=0.2)
    ts = rng.uniform(0.0, 3.0, args.n)
    res, skipped = [], 0
    for u, t in zip(us, ts):
        if 1.0 + t * float(aux.rho(u)) <= 0.05:
            continue
        try:
            res.append(float(switching_check(K, aux, u, t)))
        except Inapplicable:
            skipped += 1
    if not res:
        raise InapplicableRun("g is trivial on every sampled ray (or K vanishes)", run)
    run.record("switching", res)
    run.result = {"checked": len(res), "skipped": skipped}


def cmd_kernel_lemma4(args, run):
    K, aux = _kernel(args, run)
    u = _vector_or_default(args, run, aux, _rng(args))
    h = Eta(aux.rho)
    path, ident, rec = [], [], []
    try:
        for n in range(1, args.n_max + 1):
            for m in range(0, args.n_max + 1):
                r = lemma4_iterates(K, h, aux, u, n, m)
                path.append(r.path_residual)
                ident.append(r.identity_residual)
                rec.append(r.recurrence_residual)
    except IterateDomainError as exc:
        raise UsageError(f"--u: {exc}") from exc
    run.record("closed_vs_recurrence", path)
    run.record("identity", ident)
    run.record("recurrence_step", rec)
    run.result = {"u": u, "n_max": args.n_max, "pairs": len(path)}


def cmd_kernel_limit(args, run):
    K, aux = _kernel(args, run)
    u = _vector_or_default(args, run, aux, _rng(args))
    h = Eta(aux.rho)
    out = []
    for t in args.t:
        try:
            lim = lemma4_limit(K, h, aux, u, t, n_max=args.n_max, n_min=args.n_min,
                               gamma_u=float(aux.derivative(u)))
        except IterateDomainError as exc:
            raise UsageError(f"--u: {exc}") from exc
        exact = max(lim.errors) <= 1e-12
        run.record(f"rate_deviation(t={t:g})", 0.0 if exact else abs(lim.rate + 1.0))
        out.append({"t": t, "estimate": lim.estimate, "target": lim.target, "rate": lim.rate,
                    "ns": lim.ns, "errors": lim.errors, "exact": exact})
    run.result = {"u": u, "limits": out}


# -- sigma ---------------------------------------------------------------------


def cmd_sigma_build(args, run):
    K, aux = _kernel(args, run)
    decision = decide_regime(K, aux)
    regime = decision.regime if args.regime == "auto" else args.regime
    run.result = {"regime": regime, "decided_regime": decision.regime}
    try:
        if regime == "NA":
            res = build_sigma_A(K, aux, n_validate=args.n, seed=args.seed, tol=run.tol)
        else:
            res = build_sigma_B(K, aux, witness=decision.witness, n_validate=args.n,
                                seed=args.seed, tol=run.tol)
    except SigmaBuildError as exc:
        run.diagnostic = str(exc)
        if exc.result is not None:
            for k, v in exc.result.ledger.items():
                run.record(k, v)
            run.result["sigma"] = exc.result.sigma.to_json()
        else:
            run.record("construction", math.inf)
        return "fail"
    for k, v in res.ledger.items():
        run.record(k, v)
    eq = validate_sigma(K, aux, res.sigma, args.n, args.seed)
    run.result.update({"sigma": res.sigma.to_json(), "basis_data": res.to_json()["basis_data"],
                       "complement_residual": res.complement_residual,
                       "histogram": histogram(eq)})
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(dumps(res.sigma.to_json()) + "\n")
    return None


def cmd_sigma_check(args, run):
    K, aux = _kernel(args, run)
    s1 = _build(LinearFunctional.from_json, run.input("sigma", load_json(args.sigma, "functional")),
                args.sigma)
    if s1.dim != K.dim_y:
        raise UsageError(f"{args.sigma}: sigma has dimension {s1.dim}, kernel values {K.dim_y}")
    rng = _rng(args)
    u = sample_carrier(aux.group, args.n, rng, scale=args.scale)
    v = sample_carrier(aux.group, args.n, rng, scale=args.scale)
    run.record("homomorphism", chunked(lambda a, b: hom_check(K, s1, a, b, aux.rho), (u, v),
                                       args.parallel))
    run.record("g_equals_1_plus_sigma_K", validate_sigma(K, aux, s1, points=u))
    if args.sigma2:
        s2 = _build(LinearFunctional.from_json,
                    run.input("sigma2", load_json(args.sigma2, "functional")), args.sigma2)
        run.record("uniqueness", uniqueness_check(K, s1, s2, points=v))
    run.result = {"samples": args.n}


# -- gge -----------------------------------------------------------------------


def _triple(args, run):
    if args.triple:
        obj = run.input("triple", load_json(args.triple, "triple"))
        return _build(lambda o: triple_from_json(o, check=False), obj, args.triple)
    if args.evaluator:
        if args.dim is None:
            raise UsageError("--evaluator needs --dim")
        run.input("evaluator", args.evaluator)
        return subprocess_triple(shlex.split(args.evaluator), args.dim)
    raise UsageError("one of --triple or --evaluator is required")


def _close(T):
    ev = getattr(T, "evaluator", None)
    if ev is not None:
        ev.close()


def _gge_direction(args, run, T):
    if args.u is not None:
        u = _vectors(args.u, "--u", T.dim)
    else:
        u = _rng(args).normal(size=T.dim)
        u *= 0.5 / np.linalg.norm(u)
    run.input("u", u)
    return u


def cmd_gge_classify(args, run):
    T = _triple(args, run)
    try:
        u = _gge_direction(args, run, T)
        c = classify_tetrachotomy(T, u, tau=args.tau, tol=run.tol, strict=False)
        rho_u = gateaux_at_zero(T.h, u)
    except Inapplicable as exc:
        raise InapplicableRun(str(exc), run) from exc
    finally:
        _close(T)
    run.record("closed_form_validation", c.validation_residual)
    run.result = c.to_json()
    run.result["rho_u_check"] = rho_u


def cmd_gge_reduce(args, run):
    T = _triple(args, run)
    try:
        r = theorem5_reduce(T, n_validate=args.n, seed=args.seed, tol=run.tol)
    except ReductionError as exc:
        run.diagnostic = str(exc)
        rep = exc.report or {}
        for k in ("linearity_residual", "gfe_residual"):
            if k in rep:
                run.record(k, rep[k])
        if not run.ledger:
            run.record("reduction", math.inf)
        run.result = {"report": rep}
        return "fail"
    finally:
        _close(T)
    run.record("gfe_residual", r.report["gfe_residual"])
    run.record("linearity_residual", 0.0 if r.report["linearity_residual"] <= 1e-6
               else r.report["linearity_residual"])
    run.result = {"rho": r.rho.to_json(), "aux": r.aux.to_json(),
                  "report": {k: v for k, v in r.report.items() if k != "excluded_N_K_directions"},
                  "excluded_N_K_directions": r.report["excluded_N_K_directions"]}
    return None


def _domain_sample(T, n, rng, scale):
    out = []
    while len(out) < n:
        x = rng.uniform(-scale, scale, T.dim)
        if T.in_domain(x):
            out.append(x)
    return np.array(out)


def cmd_gge_verify(args, run):
    T = _triple(args, run)
    try:
        rng = _rng(args)
        u = _domain_sample(T, args.n, rng, args.scale)
        v = _domain_sample(T, args.n, rng, args.scale)
        hu = np.asarray(T.h(u), dtype=float)
        keep = np.array([T.in_domain(a + b * c) for a, b, c in zip(u, hu, v)])
        run.record("gge", chunked(lambda a, b: verify_gge(T, a, b), (u[keep], v[keep]),
                                  args.parallel if T.domain is not None else 1))
        rad, gs = [], []
        for w in _domain_sample(T, args.radial_samples, rng, args.scale):
            a, b = rng.uniform(0.1, 1.0, 2)
            if not (T.in_domain(a * w) and T.in_domain(b * w)
                    and np.any(np.asarray(T.K(w)) != 0)):
                continue
            try:
                rad.append(radial_equivalence_check(T, w, a, b))
                gs.append(gs_check(T.h, w, a, b))
            except (DomainError, Inapplicable):
                continue
        if rad:
            run.record("radial_equivalence", rad)
            run.record("golab_schinzel_h", gs)
    finally:
        _close(T)
    run.result = {"samples": int(keep.sum()), "radial_checked": len(rad)}


# -- parser --------------------------------------------------------------------


def _common(p, tol, n=1000, scale=1.0):
    p.add_argument("--seed", type=int, default=0, help="64-bit sampling seed (default 0)")
    p.add_argument("--tol", type=float, default=tol, help=f"pass tolerance (default {tol:g})")
    p.add_argument("--n", type=int, default=n, help="number of samples")
    p.add_argument("--scale", type=float, default=scale, help="sampling box half-width")
    p.add_argument("--parallel", type=int, default=1, metavar="WORKERS",
                   help="threads for data-parallel sampling; output is unchanged")
    p.add_argument("--report", help="also write the report to this file")


def build_parser():
    ap = argparse.ArgumentParser(prog="goldie", description=__doc__.splitlines()[0])
    top = ap.add_subparsers(dest="group_", required=True)

    def verb(group, name, func, tol, **kw):
        p = group.add_parser(name)
        _common(p, tol, **kw)
        p.set_defaults(func=func, command=f"{group.noun} {name}")
        return p

    def noun(name):
        g = top.add_parser(name).add_subparsers(dest="verb", required=True)
        g.noun = name
        return g

    g = noun("group")
    p = verb(g, "verify", cmd_group_verify, 1e-9)
    p.add_argument("--group", required=True)

    g = noun("link")
    p = verb(g, "eval", cmd_link_eval, 0.0)
    p.add_argument("--params", required=True)
    p.add_argument("--t", type=float, nargs="+", required=True)
    p = verb(g, "check", cmd_link_check, 1e-9)
    p.add_argument("--params", required=True)
    p = verb(g, "table", cmd_link_table, 1e-9)
    p.add_argument("--kappa", type=float, default=1.3)
    p.add_argument("--rho-value", type=float, default=0.7)
    p.add_argument("--sigma-value", type=float, default=0.4)

    g = noun("index")
    p = verb(g, "eval", cmd_index_eval, 1e-9)
    p.add_argument("--aux", required=True)
    p.add_argument("--x", required=True, help="JSON vector or list of vectors")
    p.add_argument("--w", help="JSON direction for the radial form")
    p.add_argument("--t", type=float, nargs="+", default=[0.5, 1.0, 2.0])
    p = verb(g, "verify", cmd_index_verify, 1e-9, scale=0.5)
    p.add_argument("--aux", required=True)
    p = verb(g, "classify", cmd_index_classify, 0.0)
    p.add_argument("--aux", required=True)

    g = noun("kernel")
    for name, func, tol in (("verify", cmd_kernel_verify, GATE_TOL),
                            ("radial", cmd_kernel_radial, 1e-9),
                            ("switch", cmd_kernel_switch, 1e-9),
                            ("lemma4", cmd_kernel_lemma4, 1e-9),
                            ("limit", cmd_kernel_limit, 0.2)):
        p = verb(g, name, func, tol, scale=0.5 if name != "verify" else 1.0)
        p.add_argument("--kernel", required=True)
        p.add_argument("--aux")
        if name in ("lemma4", "limit"):
            p.add_argument("--u", help="JSON direction (default: seeded random)")
        if name == "lemma4":
            p.add_argument("--n-max", type=int, default=64)
        if name == "limit":
            p.add_argument("--t", type=float, nargs="+", default=[0.5, 2.0, 3.0])
            p.add_argument("--n-max", type=int, default=128)
            p.add_argument("--n-min", type=int, default=8)

    g = noun("sigma")
    p = verb(g, "build", cmd_sigma_build, 1e-8, n=N_VALIDATE)
    p.add_argument("--kernel", required=True)
    p.add_argument("--aux")
    p.add_argument("--regime", choices=("auto", "NA", "NB"), default="auto")
    p.add_argument("--out", help="write sigma JSON here")
    p = verb(g, "check", cmd_sigma_check, 1e-8)
    p.add_argument("--kernel", required=True)
    p.add_argument("--aux")
    p.add_argument("--sigma", required=True)
    p.add_argument("--sigma2")

    g = noun("gge")
    for name, func, tol in (("classify", cmd_gge_classify, 1e-6),
                            ("reduce", cmd_gge_reduce, 1e-8),
                            ("verify", cmd_gge_verify, 1e-8)):
        p = verb(g, name, func, tol, scale=0.5)
        p.add_argument("--triple", help="closed-form triple JSON")
        p.add_argument("--evaluator", help="command serving the evaluator protocol")
        p.add_argument("--dim", type=int)
        if name == "classify":
            p.add_argument("--u", help="JSON direction (default: seeded random)")
            p.add_argument("--tau", type=float, default=TAU_CLASS)
        if name == "verify":
            p.add_argument("--radial-samples", type=int, default=20)
    return ap


def _emit(report, args):
    text = dumps(report) + "\n"
    sys.stdout.write(text)
    if getattr(args, "report", None):
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(text)


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    if args.parallel < 1 or args.n < 1:
        sys.stderr.write("error: --parallel and --n must be >= 1\n")
        return 2
    run = Run(args, args.command, args.tol)
    try:
        verdict = args.func(args, run)
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except InapplicableRun as exc:
        run.diagnostic = str(exc)
        _emit(run.report("inapplicable"), args)
        return 2
    except (DomainError, CrossValidationError, TetraValidationError, ArithmeticError) as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return 2
    report = run.report(verdict)
    _emit(report, args)
    return 0 if report["verdict"] == "pass" else 1


if __name__ == "__main__":
    sys.exit(main())
