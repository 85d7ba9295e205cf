"""One test per acceptance criterion; each prints a PASS/FAIL line."""

import json
import math

import numpy as np

from conftest import ACCEPTANCE_LINES
from goldie import cli
from goldie.corpus import fixture_path, planted_sigma_families, planted_triples
from goldie.gge import Eta, classify_tetrachotomy, gateaux_at_zero, theorem5_reduce
from goldie.index import AuxiliarySpec, g_eval, radial_g_form, verify_M
from goldie.kernel import (
    CompositeKernel,
    PerturbedKernel,
    RayKernel,
    lemma4_iterates,
    lemma4_limit,
    radiality_check,
    switching_check,
    verify_gfe,
)
from goldie.link import (
    INF,
    TAU_BRANCH,
    ZERO,
    RadialParams,
    ScalarHom,
    finite,
    lambda_fixed_point_unique,
    lambda_link,
    lambda_satisfies_gfe,
    sample_radial,
    sample_scalar,
    scalar_hom_check,
)
from goldie.popa_core import LinearFunctional, PopaGroup, circle, eta, inverse, sample_carrier
from goldie.sigma import build_sigma, decide_regime, span_KX, validate_sigma

F = LinearFunctional


def verdict(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})"
    print("\n" + line)
    ACCEPTANCE_LINES.append(line)
    assert ok, detail


def _rel(a, b):
    return np.linalg.norm(a - b, axis=-1) / (1.0 + np.linalg.norm(b, axis=-1))


def test_group_axioms():
    rng = np.random.default_rng(101)
    worst_axiom, worst_eta = 0.0, 0.0
    for d in (1, 2, 5):
        for rho in (F(rng.normal(size=d)), F.zero(d)):
            grp = PopaGroup(rho)
            u, v, w = (sample_carrier(grp, 10_000, rng) for _ in range(3))
            zero = np.zeros_like(u)
            res = [
                _rel(circle(grp, circle(grp, u, v), w), circle(grp, u, circle(grp, v, w))),
                _rel(circle(grp, u, zero), u),
                _rel(circle(grp, zero, u), u),
                _rel(circle(grp, u, inverse(grp, u)), zero),
                _rel(circle(grp, inverse(grp, u), u), zero),
            ]
            worst_axiom = max(worst_axiom, max(float(np.max(r)) for r in res))
            lhs = eta(rho, circle(grp, u, v))
            rhs = eta(rho, u) * eta(rho, v)
            worst_eta = max(worst_eta, float(np.max(np.abs(lhs - rhs) / np.abs(rhs))))
    verdict(1, "group axioms", worst_axiom <= 1e-9 and worst_eta <= 1e-12,
            f"axioms {worst_axiom:.2e} <= 1e-9, eta {worst_eta:.2e} <= 1e-12")


def _random_params(rng, n):
    # mix of O(1) values and values near or inside the branch band
    mag = lambda: 10.0 ** rng.uniform(-12, 0.4, n) * rng.choice([-1.0, 1.0], n)
    gam = np.where(rng.random(n) < 0.5, rng.uniform(-3, 3, n), mag())
    rho = np.where(rng.random(n) < 0.5, rng.uniform(-0.95, 3, n), mag())
    rho = np.maximum(rho, -0.95)
    return [RadialParams(float(g), float(r)) for g, r in zip(gam, rho)]


def test_link_suite():
    rng = np.random.default_rng(202)
    params = _random_params(rng, 1000)
    exact = all(float(lambda_link(p, 0.0)) == 0.0 and float(lambda_link(p, 1.0)) == 1.0
                for p in params)
    gfe = 0.0
    for p in params:
        q = p.snapped()
        s, t = sample_radial(q.rho, 20, rng, 1.5), sample_radial(q.rho, 20, rng, 1.5)
        gfe = max(gfe, float(np.max(lambda_satisfies_gfe(p, s, t))))
    seam = 0.0
    ts = np.array([0.0, 0.25, 0.5, 1.0, 2.0, 3.0])
    for other in (0.8, -0.2, 2.0, TAU_BRANCH):
        for sign in (1.0, -1.0):
            at, off = sign * TAU_BRANCH, sign * TAU_BRANCH * (1 + 1e-6)
            for pa, pb in ((RadialParams(at, other), RadialParams(off, other)),
                           (RadialParams(other, at), RadialParams(other, off))):
                a, b = lambda_link(pa, ts), lambda_link(pb, ts)
                seam = max(seam, float(np.max(np.abs(a - b) / (1 + np.abs(a)))))
    unique = 0
    for _ in range(100):
        g, r = float(rng.uniform(-3, 3)), float(rng.uniform(-0.9, 3))
        unique += bool(lambda_fixed_point_unique(RadialParams(g, r)))
    ok = exact and gfe <= 1e-9 and seam <= 1e-8 and unique == 100
    verdict(2, "link function suite", ok,
            f"endpoints exact={exact}, gfe {gfe:.2e} <= 1e-9, seam {seam:.2e} <= 1e-8, "
            f"unique root t=1 in {unique}/100")


def test_scalar_homomorphism_table():
    rng = np.random.default_rng(303)
    worst = {}
    for rn, rp in (("0", ZERO), ("finite", finite(0.7)), ("inf", INF)):
        for sn, sp in (("0", ZERO), ("finite", finite(0.4)), ("inf", INF)):
            h = ScalarHom(rp, sp, 1.3)
            s, t = sample_scalar(rp, 1000, rng), sample_scalar(rp, 1000, rng)
            worst[f"{rn}->{sn}"] = float(np.max(scalar_hom_check(h, s, t)))
    top = max(worst.values())
    verdict(3, "nine scalar homomorphism cells", len(worst) == 9 and top <= 1e-9,
            f"max residual {top:.2e} <= 1e-9 over {len(worst)} cells")


def test_index_multiplicativity_and_radial_forms():
    rng = np.random.default_rng(404)
    d = 5
    rho = F(rng.uniform(0.3, 1.2, d) * rng.choice([-1.0, 1.0], d))
    specs = [AuxiliarySpec(rho, F.zero(d), 1.7), AuxiliarySpec(rho, F.zero(d), -0.6),
             AuxiliarySpec(F.zero(d), F(rng.normal(size=d)), 0.0)]
    mult, radial = 0.0, 0.0
    for spec in specs:
        u = sample_carrier(spec.group, 10_000, rng)
        v = sample_carrier(spec.group, 10_000, rng)
        mult = max(mult, float(np.max(verify_M(spec, u, v))))
    for spec in specs:
        for w in sample_carrier(spec.group, 200, rng, margin=0.2):
            rw = float(spec.rho(w))
            t = rng.uniform(0, 2, 16) if rw >= 0 else rng.uniform(0, 0.9 / -rw, 16)
            closed = radial_g_form(spec, w, t, tol=math.inf)
            direct = g_eval(spec, np.multiply.outer(t, w))
            radial = max(radial, float(np.max(np.abs(closed - direct) / (1 + np.abs(direct)))))
    verdict(4, "index multiplicativity and radial forms", mult <= 1e-9 and radial <= 1e-9,
            f"verify_M {mult:.2e} <= 1e-9, radial forms {radial:.2e} <= 1e-9")


def test_iterates_and_limit_rate():
    rho = F([1.0, -0.5, 0.25])
    rays = [RayKernel(rho, np.array([1.0, 2.0, -0.5]), 0.7, 1.3),
            RayKernel(rho, np.array([0.5, -1.0, 1.0]), -0.6, 2.0),
            RayKernel(rho, np.array([1.0, 0.0, 0.0]), 1.2, 0.4)]
    u = np.array([0.3, 0.1, 0.2])  # rho(u) = 0.3
    path = 0.0
    for K in rays:
        h, g = Eta(rho), K.aux()
        for n in range(1, 65):
            for m in range(0, 65):
                r = lemma4_iterates(K, h, g, u, n, m)
                path = max(path, r.path_residual, r.recurrence_residual)
    slopes, target_err = [], 0.0
    for K in rays:
        for t in (0.5, 2.0, 3.0):
            lim = lemma4_limit(K, Eta(rho), K.aux(), u, t, n_max=128, n_min=8)
            slopes.append(lim.rate)
            want = float(lambda_link(RadialParams(float(K.aux().derivative(u)), 0.0), t))
            target_err = max(target_err, abs(lim.target - want) / (1 + abs(want)))
    ok = path <= 1e-9 and all(-1.2 <= s <= -0.8 for s in slopes) and target_err <= 1e-12
    verdict(5, "iterate closed form and limit rate", ok,
            f"closed vs recurrence {path:.2e} <= 1e-9, slopes "
            f"[{min(slopes):.3f}, {max(slopes):.3f}] in -1 +- 0.2")


def test_radiality_and_switching():
    rng = np.random.default_rng(606)
    rho = F([1.0, -0.5, 0.25])
    fams = [RayKernel(rho, np.array([1.0, 2.0, -0.5]), 0.7, 1.3),
            RayKernel(F.zero(3), np.array([0.5, 1.0]), 0.9, 1.0, F([0.4, -1.0, 0.3])),
            CompositeKernel(rho, np.zeros((2, 3)), np.array([1.0, -1.0]), 0.8, 2.0)]
    rad = sw = 0.0
    count = 0
    for K in fams:
        us = sample_carrier(K.aux().group, 1000, rng, scale=0.5, margin=0.2)
        ts = rng.uniform(0, 3, 1000)
        for u, t in zip(us, ts):
            p = K.radial_params(u)
            if 1 + t * p.rho <= 0.05:
                continue
            rad = max(rad, float(radiality_check(K, u, t, p)))
            sw = max(sw, float(switching_check(K, K.aux(), u, t)))
            count += 1
    K = RayKernel(rho, np.array([1.0, 2.0, -0.5]), 0.5, 2.0)  # gamma = rho
    hom = 0.0
    for u in sample_carrier(K.aux().group, 100, rng, scale=0.5, margin=0.2):
        for t in rng.uniform(0, 3, 10):
            if 1 + t * rho(u) > 0.05:
                hom = max(hom, float(_rel(K(t * u), t * K(u))))
    ok = rad <= 1e-9 and sw <= 1e-9 and hom <= 1e-9
    verdict(6, "radiality, switching and homogeneity", ok,
            f"radiality {rad:.2e}, switching {sw:.2e} on {count} pairs, K(tu)=tK(u) {hom:.2e}")


def test_sigma_end_to_end():
    fams = planted_sigma_families(seed=0, n_per_regime=10, max_dim=6)
    regimes = sum(decide_regime(f.kernel).regime == f.regime for f in fams)
    eq = span_err = 0.0
    for i, f in enumerate(fams):
        res = build_sigma(f.kernel, n_validate=10_000, seed=1000 + i)
        fresh = validate_sigma(f.kernel, f.kernel.aux(), res.sigma, n=10_000, seed=5000 + i)
        eq = max(eq, res.max_residual, float(np.max(fresh)))
        q = span_KX(f.kernel, f.kernel.aux())
        span_err = max(span_err, float(np.max(np.abs(q.T @ (res.sigma.coeffs - f.sigma.coeffs)))))
    ok = regimes == 20 and eq <= 1e-8 and span_err <= 1e-7
    verdict(7, "sigma construction on planted families", ok,
            f"regimes {regimes}/20, g = 1 + sigma(K) {eq:.2e} <= 1e-8, "
            f"sigma on span {span_err:.2e} <= 1e-7")


def test_tetrachotomy():
    rng = np.random.default_rng(808)
    triples = planted_triples(seed=0, n_per_case=10, max_dim=6)
    correct, deriv, valid, rho_err, gfe = 0, 0.0, 0.0, 0.0, 0.0
    for pt in triples:
        c = classify_tetrachotomy(pt.triple, pt.u)
        correct += c.case == pt.case
        d_rho = gateaux_at_zero(pt.triple.h, pt.u)
        deriv = max(deriv, abs(c.rho_u - pt.rho_u), abs(c.gamma_u - pt.gamma_u),
                    abs(d_rho - pt.rho_u))
        valid = max(valid, c.validation_residual)
        r = theorem5_reduce(pt.triple)
        rho_err = max(rho_err, float(np.max(np.abs(r.rho.coeffs - pt.rho.coeffs))))
        u = sample_carrier(r.aux.group, 1000, rng, scale=0.5)
        v = sample_carrier(r.aux.group, 1000, rng, scale=0.5)
        gfe = max(gfe, float(np.max(verify_gfe(pt.triple.K, r.aux, u, v))))
    ok = correct == 40 and deriv <= 1e-6 and valid <= 1e-6 and rho_err <= 1e-6 and gfe <= 1e-8
    verdict(8, "tetrachotomy on planted triples", ok,
            f"{correct}/40 correct, derivatives {deriv:.2e}, validation {valid:.2e}, "
            f"rho {rho_err:.2e}, gfe {gfe:.2e}")


def test_negative_control(capsys):
    base = RayKernel(F([1.0, 0.5, -0.25]), np.array([1.0, -0.5, 2.0]), 0.8, 1.5)
    K = PerturbedKernel(base, coord=1, eps=1e-3)
    rng = np.random.default_rng(909)
    u = sample_carrier(base.aux().group, 1000, rng)
    v = sample_carrier(base.aux().group, 1000, rng)
    gfe = float(np.max(verify_gfe(K, base.aux(), u, v)))
    code = cli.main(["sigma", "build", "--kernel", fixture_path("kernel_perturbed.json")])
    rep = json.loads(capsys.readouterr().out)
    failing = [e["name"] for e in rep["ledger"] if e["residual"] > rep["tolerance"]]
    steps = [n for n in failing if n.startswith("A")]
    ok = gfe > 1e-4 and code == 1 and bool(steps)
    verdict(9, "perturbed kernel is rejected", ok,
            f"gfe {gfe:.2e} > 1e-4, sigma build exit {code}, failing ledger steps {failing}")
