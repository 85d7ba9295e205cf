import json
import math
import sys

import numpy as np
import pytest

from goldie.corpus import planted_triples
from goldie.diff import DerivativeError
from goldie.gge import (
    Eta,
    GgeTriple,
    One,
    ReductionError,
    classify_tetrachotomy,
    derivative_identities,
    gateaux_at_zero,
    gs_affine_residual,
    gs_check,
    radial_equivalence_check,
    subprocess_triple,
    theorem5_reduce,
    triple_from_json,
    verify_gge,
)
from goldie.kernel import LinearKernel, RayKernel, verify_gfe
from goldie.link import RadialParams, g_radial
from goldie.popa_core import LinearFunctional, sample_carrier

F = LinearFunctional


def test_gateaux_examples():
    rho = F([3.0, -1.0])
    u = np.array([0.5, 0.25])
    assert gateaux_at_zero(Eta(rho), u) == pytest.approx(rho(u), abs=1e-13)
    assert gateaux_at_zero(One(), u) == 0.0
    gam, r = 0.8, 0.5
    f = lambda x: g_radial(RadialParams(gam, r), np.asarray(x)[..., 0])
    assert gateaux_at_zero(f, np.array([2.0])) == pytest.approx(2.0 * gam, rel=1e-10)


def test_gateaux_rejects_non_finite():
    f = lambda x: np.where(np.asarray(x)[..., 0] > 0, np.nan, 1.0)
    with pytest.raises(DerivativeError):
        gateaux_at_zero(f, np.array([1.0]))


@pytest.fixture
def ray_triple():
    return GgeTriple.from_kernel(RayKernel(F([1.0, 0.5, -0.25]), np.array([1.0, -1.0]), 0.8, 1.5))


def test_verify_gge_examples(ray_triple):
    K = ray_triple.K
    rng = np.random.default_rng(0)
    u = sample_carrier(K.aux().group, 200, rng)
    v = sample_carrier(K.aux().group, 200, rng)
    assert np.all(verify_gge(ray_triple, u, np.zeros_like(u)) <= 1e-15)
    np.testing.assert_allclose(verify_gge(ray_triple, u, v), verify_gfe(K, K.aux(), u, v),
                               atol=1e-15)
    assert np.max(verify_gge(ray_triple, u, v)) <= 1e-9


def test_radial_equivalence(ray_triple):
    w = np.array([0.3, 0.2, 0.1])
    assert radial_equivalence_check(ray_triple, w, 0.0, 0.7) <= 1e-12
    for a, b in [(0.2, 0.5), (0.9, 0.3), (1.2, 1.1)]:
        assert radial_equivalence_check(ray_triple, w, a, b) <= 1e-8


def test_gs_examples():
    u = np.array([1.0])
    affine = lambda x: 1.0 + 0.7 * np.asarray(x)[..., 0]
    for a, b in [(0.0, 1.0), (0.5, 2.0), (1.5, -0.2)]:
        assert gs_check(affine, u, a, b) <= 1e-15
    expo = lambda x: np.exp(np.asarray(x)[..., 0])
    assert gs_check(expo, u, 0.0, 0.3) <= 1e-15
    want = abs(math.exp(1 + math.e) - math.e**2) / (1 + math.e**2)
    assert gs_check(expo, u, 1.0, 1.0) == pytest.approx(want, rel=1e-12)
    assert gs_affine_residual(affine, u) <= 1e-10
    assert gs_affine_residual(expo, u) > 1e-2


def _scalar_triple(h, g, K=None):
    K = K or (lambda x: np.asarray(x, dtype=float)[..., :1] * 1.0)
    return GgeTriple(K, h, g, 1)


def test_prop4_examples():
    u = np.array([1.0])
    t1 = _scalar_triple(One(), One())
    assert classify_tetrachotomy(t1, u).case == "i"

    K2 = RayKernel(F.zero(1), np.array([1.0]), 1.0, 1.0, F([2.0]))
    c2 = classify_tetrachotomy(GgeTriple.from_kernel(K2), u)
    assert c2.case == "ii" and c2.gamma_u == pytest.approx(2.0, abs=1e-9)

    K4 = RayKernel(F([3.0]), np.array([1.0]), 1.0, 2.0)
    c4 = classify_tetrachotomy(GgeTriple.from_kernel(K4), u)
    assert c4.case == "iv"
    assert c4.rho_u == pytest.approx(3.0, abs=1e-9)
    assert c4.gamma_u == pytest.approx(6.0, abs=1e-9)


@pytest.mark.parametrize("pt", planted_triples(seed=3, n_per_case=3), ids=lambda p: p.name)
def test_planted_triples(pt):
    c = classify_tetrachotomy(pt.triple, pt.u)
    assert c.case == pt.case
    assert abs(c.rho_u - pt.rho_u) <= 1e-6 and abs(c.gamma_u - pt.gamma_u) <= 1e-6
    assert c.validation_residual <= 1e-6
    d1, d2 = derivative_identities(pt.triple, pt.u, 0.7, 0.4)
    assert d1 <= 1e-6 and d2 <= 1e-6
    r = theorem5_reduce(pt.triple)
    np.testing.assert_allclose(r.rho.coeffs, pt.rho.coeffs, atol=1e-6)
    assert r.report["gfe_residual"] <= 1e-8
    assert r.report["aux_M_residual"] <= 1e-8


def test_reduce_additive_regime():
    K = RayKernel(F.zero(2), np.array([1.0]), 0.5, 1.0, F([1.0, -2.0]))
    r = theorem5_reduce(GgeTriple.from_kernel(K))
    assert r.rho.is_zero()
    np.testing.assert_allclose(r.aux.alpha.coeffs, [0.5, -1.0], atol=1e-8)


def test_reduce_rejects_nonlinear_h():
    h = lambda x: 1.0 + np.asarray(x)[..., 0] * np.asarray(x)[..., 1] * 50 + np.asarray(x)[..., 0]
    T = GgeTriple(LinearKernel(np.eye(2)), h, One(), 2)
    with pytest.raises((ReductionError, DerivativeError)):
        theorem5_reduce(T)


def test_wrong_case_is_flagged():
    # h(su) = 1 + s with g(su) = 1 + s^2 is not one of the closed forms
    h = lambda x: 1.0 + np.asarray(x)[..., 0]
    g = lambda x: 1.0 + np.asarray(x)[..., 0] ** 2
    T = _scalar_triple(h, g)
    c = classify_tetrachotomy(T, np.array([0.5]), strict=False)
    assert c.case == "iii"
    assert not c.validated


def test_standardisation_is_required():
    with pytest.raises(ValueError):
        _scalar_triple(lambda x: 2.0 + 0 * np.asarray(x)[..., 0], One())


def test_subprocess_protocol(tmp_path, ray_triple):
    path = tmp_path / "triple.json"
    path.write_text(json.dumps(ray_triple.to_json()))
    T = subprocess_triple([sys.executable, "-m", "goldie.evaluator", str(path)], 3)
    try:
        u = np.array([0.3, 0.2, 0.1])
        np.testing.assert_array_equal(T.K(u), ray_triple.K(u))
        assert T.g(u) == ray_triple.g(u)
        c = classify_tetrachotomy(T, u)
        assert c.case == "iv"
        assert not T.in_domain(np.array([-5.0, 0.0, 0.0]))
    finally:
        T.evaluator.close()


def test_triple_json_roundtrip(ray_triple):
    T = triple_from_json(ray_triple.to_json())
    x = np.array([0.1, 0.2, 0.3])
    np.testing.assert_array_equal(T.K(x), ray_triple.K(x))
    assert T.h(x) == ray_triple.h(x) and T.g(x) == ray_triple.g(x)
