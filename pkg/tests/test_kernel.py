import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from goldie.gge import Eta, One
from goldie.index import AuxiliarySpec
from goldie.kernel import (
    CompositeKernel,
    GateError,
    Inapplicable,
    LinearKernel,
    PerturbedKernel,
    RayKernel,
    corollary1_maps,
    is_nontrivial,
    kernel_from_json,
    lemma4_iterates,
    lemma4_limit,
    nullspace_dichotomy_check,
    pwp,
    radiality_check,
    switching_check,
    verify_gfe,
)
from goldie.popa_core import LinearFunctional, sample_carrier

F = LinearFunctional
RHO = F([1.0, -0.5, 0.25])
Y0 = np.array([1.0, 2.0, -0.5])


@pytest.fixture
def ray():
    return RayKernel(RHO, Y0, 0.7, 1.3)


def carrier(K, n, seed, scale=0.5, margin=0.2):
    return sample_carrier(K.aux().group, n, np.random.default_rng(seed), scale, margin)


def test_gfe_with_zero_second_argument(ray):
    u = carrier(ray, 20, 0)
    assert np.all(verify_gfe(ray, ray.aux(), u, np.zeros_like(u)) == 0)


def test_gfe_ray_family(ray):
    u, v = carrier(ray, 1000, 1, 1.0, 0.05), carrier(ray, 1000, 2, 1.0, 0.05)
    assert np.max(verify_gfe(ray, ray.aux(), u, v)) <= 1e-9


def test_gfe_linear_family():
    K = LinearKernel(np.array([[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]]))
    rng = np.random.default_rng(3)
    u, v = rng.normal(size=(100, 2)), rng.normal(size=(100, 2))
    assert np.max(verify_gfe(K, AuxiliarySpec.trivial(2), u, v)) <= 1e-15


def test_gate_rejects_mixed_ray():
    with pytest.raises(GateError):
        RayKernel(RHO, Y0, 0.7, 1.0, F([0.0, 1.0, 0.0]))


def test_gate_rejects_composite_with_free_kernel_part():
    L = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]])
    with pytest.raises(GateError):
        CompositeKernel(RHO, L, Y0, 0.7, 1.3)
    K = CompositeKernel(RHO, L, Y0, 0.7, 1.0 / 0.7)
    assert K.certify() <= 1e-8


def test_perturbed_kernel_breaks_gfe(ray):
    bad = PerturbedKernel(ray, 1, 1e-3)
    u, v = carrier(ray, 1000, 4), carrier(ray, 1000, 5)
    assert np.max(verify_gfe(bad, ray.aux(), u, v)) > 1e-4


@pytest.mark.parametrize("obj", [
    {"family": "ray", "rho": [1.0, 0.5], "y0": [1.0], "s": 0.5, "kappa": 2.0},
    {"family": "linear", "L": [[1.0, 0.0]]},
    {"family": "composite", "rho": {"coeffs": [1.0, 0.0]}, "L": [[0.0, 1.0]], "y0": [1.0],
     "s": 0.5, "kappa": 2.0},
])
def test_kernel_json_roundtrip(obj):
    K = kernel_from_json(obj)
    K2 = kernel_from_json(K.to_json())
    x = np.array([[0.3, -0.2], [0.1, 0.4]])
    np.testing.assert_array_equal(K(x), K2(x))


@pytest.mark.parametrize("x", [0.3, 0.99995, 1.0, 1.00003, 1.7, -0.6])
@pytest.mark.parametrize("m", [0, 1, 2, 7, 40])
def test_pwp_matches_direct_sum(x, m):
    direct = math.fsum(x**j for j in range(m))
    assert pwp(x, m) == pytest.approx(direct, rel=1e-13, abs=1e-15)


def test_lemma4_same_index_is_exact(ray):
    u = np.array([0.3, 0.1, 0.2])
    r = lemma4_iterates(ray, Eta(RHO), ray.aux(), u, 16, 16)
    np.testing.assert_array_equal(r.lhs, r.rhs)
    assert r.coefficient == 1.0


def test_lemma4_coefficient_with_trivial_g():
    K = LinearKernel(np.eye(2))
    r = lemma4_iterates(K, One(), One(), np.array([0.5, -1.0]), 8, 20)
    assert r.coefficient == pytest.approx(20 / 8, rel=1e-15)
    assert r.identity_residual <= 1e-15


def test_lemma4_closed_form_vs_recurrence(ray):
    u = carrier(ray, 1, 6)[0]
    r = lemma4_iterates(ray, Eta(RHO), ray.aux(), u, 16, 24)
    assert r.path_residual <= 1e-8
    assert r.identity_residual <= 1e-8
    assert r.recurrence_residual <= 1e-8


def test_lemma4_limit_trivial_points(ray):
    u = np.array([0.3, 0.1, 0.2])
    lim1 = lemma4_limit(ray, Eta(RHO), ray.aux(), u, 1.0)
    assert all(e == pytest.approx(1.0) for e in lim1.estimates)
    lim0 = lemma4_limit(ray, Eta(RHO), ray.aux(), u, 0.0)
    assert lim0.estimate == 0.0


def test_lemma4_limit_exponential_example():
    # rho = 0 ray with gamma(u) = s alpha(u) = 1
    alpha = F([0.5, 1.0])
    K = RayKernel(F.zero(2), np.array([1.0, 1.0]), 2.0, 1.0, alpha)
    u = np.array([1.0, 0.0])
    lim = lemma4_limit(K, One(), K.aux(), u, 2.0)
    expected = (math.e**2 - 1) / (math.e - 1)
    assert lim.target == pytest.approx(expected, rel=1e-14)
    assert lim.estimate == pytest.approx(expected, rel=1e-12)


def test_lemma4_limit_rate(ray):
    u = np.array([0.3, 0.1, 0.2])
    lim = lemma4_limit(ray, Eta(RHO), ray.aux(), u, 2.0)
    assert -1.2 <= lim.rate <= -0.8
    assert all(b < a for a, b in zip(lim.errors, lim.errors[1:]))


def test_radiality_and_switching(ray):
    rng = np.random.default_rng(8)
    for u in carrier(ray, 50, 9):
        p = ray.radial_params(u)
        t = rng.uniform(0, 3, 10)
        t = t[1 + t * p.rho > 0.05]
        assert np.max(radiality_check(ray, u, t, p)) <= 1e-9
        assert np.max(switching_check(ray, ray.aux(), u, t)) <= 1e-9
        assert radiality_check(ray, u, 1.0, p) <= 1e-15
        assert switching_check(ray, ray.aux(), u, 1.0) <= 1e-15
        assert switching_check(ray, ray.aux(), u, 0.0) == 0.0


def test_gamma_equal_rho_family_is_homogeneous():
    K = RayKernel(RHO, Y0, 0.5, 2.0)  # s kappa = 1: g = 1 + rho
    u = np.array([0.2, 0.4, -0.3])
    assert K.radial_params(u).gamma == pytest.approx(K.radial_params(u).rho)
    for t in (0.0, 0.5, 2.0, 3.0):
        np.testing.assert_allclose(K(t * u), t * K(u), rtol=1e-12, atol=1e-15)


def test_switching_inapplicable_for_trivial_g():
    K = LinearKernel(np.eye(2))
    with pytest.raises(Inapplicable):
        switching_check(K, K.aux(), np.array([1.0, 0.0]), 0.5)


def test_corollary1_example_values(ray):
    u = np.array([math.log(2.0), 0.0, 0.0])
    p = ray.radial_params(u)
    rep = corollary1_maps(ray, u, p, 0.8, 1.5)
    assert rep.a == pytest.approx(1.0)
    assert rep.b == pytest.approx(math.log(2.0))
    assert rep.max_residual <= 1e-12
    assert corollary1_maps(ray, u, p, 1.0, 1.5).residual_induced <= 1e-15


def test_corollary1_zero_exponent_branch():
    K = RayKernel(RHO, Y0, 0.0, 1.2)  # g == 1, gamma = 0
    u = np.array([0.4, 0.0, 0.0])
    rep = corollary1_maps(K, u, K.radial_params(u), 0.5, 2.0)
    assert rep.c_zero_branch
    assert rep.psi_b == 2.0
    assert rep.residual_shuffle <= 1e-12


def test_nullspace_dichotomy():
    nb = RayKernel(F([0.0, 0.0, 0.0]), Y0, 0.7, 1.0, F([1.0, 0.0, 0.0]))
    out = nullspace_dichotomy_check(nb, nb.aux())
    assert out["case"] == "NB"
    assert out["max_K_on_nullstar"] <= 1e-15
    assert out["rank_K_N_rho"] == 1


def test_nontriviality_flag(ray):
    u = np.array([0.3, 0.1, 0.2])
    assert is_nontrivial(ray, Eta(RHO), ray.aux(), [u])
    lin = LinearKernel(np.eye(3))
    assert not is_nontrivial(lin, One(), One(), [u])


@given(
    arrays(np.float64, 3, elements=st.floats(-1.5, 1.5)),
    st.floats(-2, 2).filter(lambda s: abs(s) > 1e-3),
    st.floats(-2, 2),
    st.integers(0, 2**32 - 1),
)
def test_ray_family_solves_gfe(c, s, kappa, seed):
    K = RayKernel(F(c), Y0, s, kappa, check=False)
    u, v = carrier(K, 100, seed, 1.0, 0.05), carrier(K, 100, seed + 1, 1.0, 0.05)
    assert np.max(verify_gfe(K, K.aux(), u, v)) <= 1e-9
