import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import bundles
from measlap import green_operator, heat_semigroup, poisson_semigroup, riesz_decompose
from measlap.errors import RecurrentError, SeriesTruncationBudgetExceeded
from measlap.semigroups import (
    generator_error,
    heat_series_discrepancy,
    riesz_norm_identity,
    site_rate_heat_series,
    uniformized_heat_series,
)
from oracles import green_inv, heat_eig, poisson_expm

T = st.floats(0.0, 4.0)


def test_poisson_two_site_closed_form(fx):
    _, a = fx["FX-A"]
    for t in (0.1, 1.0, 5.0):
        Q = poisson_semigroup(a, 1.0, t)
        expected = math.exp(-t) * (math.cosh(t) * np.eye(2) + math.sinh(t) * np.asarray(a.P))
        np.testing.assert_allclose(Q, expected, rtol=0, atol=1e-12)
        np.testing.assert_allclose(np.diag(Q), (1 + math.exp(-2 * t)) / 2, rtol=0, atol=1e-12)


def test_poisson_at_zero_is_identity(fx):
    for name in ("FX-A", "FX-B", "FX-D"):
        np.testing.assert_array_equal(poisson_semigroup(fx[name][1], 2.0, 0.0), np.eye(fx[name][0].n))


def test_poisson_semigroup_law_fx_b(fx):
    _, b = fx["FX-B"]
    lhs = poisson_semigroup(b, 1.0, 0.3) @ poisson_semigroup(b, 1.0, 0.7)
    assert np.max(np.abs(lhs - poisson_semigroup(b, 1.0, 1.0))) <= 1e-10


def test_poisson_argument_checks(fx):
    _, b = fx["FX-B"]
    with pytest.raises(ValueError):
        poisson_semigroup(b, 1.0, -1.0)
    with pytest.raises(ValueError):
        poisson_semigroup(b, 0.0, 1.0)
    with pytest.raises(SeriesTruncationBudgetExceeded):
        poisson_semigroup(b, 1.0, 1e4, max_terms=100)


def test_generator_is_first_order(fx):
    _, b = fx["FX-B"]
    e1, e2 = generator_error(b, 1.0, 1e-2), generator_error(b, 1.0, 1e-3)
    assert 5 < e1 / e2 < 20


def test_heat_examples(fx):
    am, a = fx["FX-A"]
    for t in (0.0, 0.5, 2.0):
        S = heat_semigroup(a, t)
        w = np.sort(np.linalg.eigvalsh(S))
        np.testing.assert_allclose(w, sorted([1.0, math.exp(-2 * t)]), atol=1e-14)
    np.testing.assert_array_equal(heat_semigroup(a, 0.0), np.eye(2))
    _, c = fx["FX-C"]
    for t in (0.3, 3.0):
        np.testing.assert_allclose(heat_semigroup(c, t) @ np.ones(8), 1.0, atol=1e-14)


def test_site_rate_series_constant_degree(fx):
    for name in ("FX-A", "FX-C"):
        _, b = fx[name]
        for t in (0.1, 1.0, 5.0):
            assert np.max(np.abs(site_rate_heat_series(b, t) - heat_semigroup(b, t))) <= 1e-12


def test_site_rate_series_differs_for_varying_degree(fx):
    # the frozen-rate mixture is not exp(-t Delta) once c varies
    _, b = fx["FX-B"]
    site, unif = heat_series_discrepancy(b, 1.0)
    assert site > 0.1
    assert unif <= 1e-12


def test_green_examples(fx):
    _, d = fx["FX-D"]
    G = green_operator(d, "direct")
    np.testing.assert_array_equal(G, [[2, 2], [1, 2]])
    np.testing.assert_allclose(green_operator(d, "series"), [[2, 2], [1, 2]], rtol=0, atol=1e-10)
    for name in ("FX-A", "FX-B", "FX-C"):
        for mode in ("direct", "series"):
            with pytest.raises(RecurrentError):
                green_operator(fx[name][1], mode)
    with pytest.raises(ValueError):
        green_operator(d, "lanczos")


def test_riesz_examples(fx):
    _, d = fx["FX-D"]
    r = riesz_decompose(d, [1.0, 0.0])
    np.testing.assert_array_equal(r.phi, [1, -0.5])
    np.testing.assert_array_equal(r.h, [0, 0])
    r = riesz_decompose(d, [0.0, 1.0])
    np.testing.assert_array_equal(r.phi, [-1, 1])
    np.testing.assert_array_equal(r.G @ r.phi, [0, 1])
    np.testing.assert_array_equal(r.h, [0, 0])
    r = riesz_decompose(d, [0.0, 0.0])
    assert not r.phi.any() and not r.h.any()
    with pytest.raises(RecurrentError):
        riesz_decompose(fx["FX-B"][1], [1.0, 2.0, 3.0])


def test_riesz_norm_identity_swap_chain(fx):
    # rows of the swap chain are point masses, so the one-step variance
    # vanishes and the identity holds with h the projection on constants
    model, a = fx["FX-A"]
    for f in ([0.0, 1.0], [2.0, -3.0], [0.5, 0.5]):
        lhs, rhs = riesz_norm_identity(a, f)
        assert lhs == pytest.approx(rhs, abs=1e-14)


@given(bundles(), T, T)
def test_poisson_semigroup_property_and_expm(bundle, s, t):
    Qs, Qt = poisson_semigroup(bundle, 1.3, s), poisson_semigroup(bundle, 1.3, t)
    Qst = poisson_semigroup(bundle, 1.3, s + t)
    assert np.max(np.abs(Qs @ Qt - Qst)) <= 1e-10
    assert np.max(np.abs(Qt - poisson_expm(bundle.P, 1.3, t))) <= 1e-11


@given(bundles(), T)
def test_heat_semigroup_against_eigen_route(bundle, t):
    S = heat_semigroup(bundle, t)
    assert np.max(np.abs(S - heat_eig(np.asarray(bundle.Delta), bundle.mu, t))) <= 1e-10
    assert np.max(np.abs(uniformized_heat_series(bundle, t) - S)) <= 1e-10
    # self-adjoint in L2(mu) and contractive
    muS = bundle.mu[:, None] * S
    assert np.max(np.abs(muS - muS.T)) <= 1e-12 * np.max(np.abs(muS))
    s = np.sqrt(bundle.mu)
    assert np.linalg.norm(s[:, None] * S / s[None, :], 2) <= 1 + 1e-12


@given(bundles(leaky=True))
def test_green_on_leaky_models(bundle):
    G = green_operator(bundle, "direct")
    ref = green_inv(bundle.P)
    assert np.max(np.abs(G - ref)) <= 1e-10 * np.max(np.abs(ref))
    Gs = green_operator(bundle, "series", tol=1e-13)
    assert np.max(np.abs(G - Gs)) <= 1e-9 * max(1.0, np.max(np.abs(G)))


@given(bundles(leaky=False))
def test_recurrent_models_raise(bundle):
    with pytest.raises(RecurrentError):
        green_operator(bundle)


@given(bundles(leaky=True), st.integers(0, 2**32 - 1))
def test_riesz_decomposition_properties(bundle, seed):
    f = np.random.default_rng(seed).standard_normal(bundle.n)
    r = riesz_decompose(bundle, f)
    scale = max(1.0, np.max(np.abs(r.G)) * bundle.n)
    assert r.reconstruction_residual <= 1e-10 * scale
    assert r.harmonic_residual <= 1e-10 * scale
    # unique: decomposing the potential part again gives no harmonic part
    again = riesz_decompose(bundle, r.G @ r.phi, r.G)
    np.testing.assert_allclose(again.phi, r.phi, atol=1e-10 * scale)
