import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import bundles, models
from measlap import (
    EnergyElement,
    assemble_operators,
    boundary_embed,
    disjoint_union,
    energy_inner,
    energy_via_laplacian,
    indicator_identities,
    norm_decomposition,
    orthocomplement_test,
    royden_project,
    symmetric_pair_check,
)
from measlap.energy import boundary_norm_sq, energy_gram, energy_norm_sq
from measlap.errors import DefectModel, Disconnected, EmptySpectralWindow
from measlap.model import ConnectivityWarning
from measlap.operators import residual_scale
from oracles import energy_loop


def test_energy_examples(fx):
    a, b = fx["FX-A"][0], fx["FX-B"][0]
    assert energy_inner(a, [0, 1], [0, 1]) == 1
    assert energy_inner(b, [0, 1, 2], [0, 1, 2]) == 2
    assert energy_inner(b, [3, 3, 3], [1, -2, 5]) == 0


def test_boundary_examples(fx):
    a, c = fx["FX-A"][0], fx["FX-C"][0]
    assert boundary_norm_sq(a, boundary_embed(a, [0, 1])) == pytest.approx(1, abs=1e-15)
    assert not boundary_embed(c, np.full(8, 2.5)).any()
    f = np.random.default_rng(1).standard_normal(8)
    F = boundary_embed(c, f)
    assert abs(boundary_norm_sq(c, F) - energy_norm_sq(c, f)) <= 1e-13


def test_indicator_examples(fx):
    a, b, c = fx["FX-A"][0], fx["FX-B"][0], fx["FX-C"][0]
    r = indicator_identities(a, [0], [0])
    assert r.norm_sq == 1 == r.rho_A_Ac
    r = indicator_identities(b, [0], [2])
    assert r.inner == 0 and r.inner_formula == 0 and r.orthogonal and r.orthogonality_consistent
    r = indicator_identities(c, c.cells["left"], c.cells["right"])
    assert r.norm_sq == pytest.approx(0.25, abs=1e-13)


@pytest.mark.parametrize("name", ["FX-A", "FX-B"])
def test_indicator_identities_exact_on_all_subsets(fx, name):
    model = fx[name][0]
    subsets = list(itertools.product([False, True], repeat=model.n))
    for A in subsets:
        for B in subsets:
            r = indicator_identities(model, np.array(A), np.array(B))
            assert r.norm_residual == 0 and r.inner_residual == 0
            assert r.orthogonality_consistent


def test_norm_decomposition_examples(fx):
    _, a = fx["FX-A"]
    r = norm_decomposition(a, [0, 1])
    assert (r.deterministic_term, r.stochastic_term, r.norm_sq) == (2, 0, 1)
    r = norm_decomposition(a, [4, 4])
    assert r.deterministic_term == r.stochastic_term == r.norm_sq == 0
    _, b = fx["FX-B"]
    f = np.array([0.0, 1.0, 2.0])
    r = norm_decomposition(b, f)
    # brute force: Pf = (1, 1, 1), P(f^2) = (1, 2, 1)
    assert r.deterministic_term == 1 * 1 + 2 * 0 + 1 * 1
    assert r.stochastic_term == 1 * 0 + 2 * (2 - 1) + 1 * 0
    assert r.norm_sq == 2 == 0.5 * (r.deterministic_term + r.stochastic_term)
    with pytest.raises(DefectModel):
        norm_decomposition(fx["FX-D"][1], [0, 1])


def test_energy_via_laplacian_examples(fx):
    assert energy_via_laplacian(fx["FX-A"][1], [0, 1]) == 1
    assert energy_via_laplacian(fx["FX-B"][1], [0, 1, 2]) == 2
    assert energy_via_laplacian(fx["FX-B"][1], [7, 7, 7]) == 0


def test_energy_via_laplacian_has_killing_term_on_leaky_model(fx):
    model, d = fx["FX-D"]
    f = np.array([0.3, -1.2])
    kill = math.fsum(model.nu * model.stochastic_defect * f * f)
    assert energy_via_laplacian(d, f) == pytest.approx(energy_norm_sq(model, f) + kill, abs=1e-15)


def test_royden_examples(fx):
    model, b = fx["FX-B"]
    r = royden_project(b, [0.2, -1.0, 3.0])
    np.testing.assert_array_equal(r.harmonic_part, 0)
    _, a = fx["FX-A"]
    r = royden_project(a, [5.0, 6.0])
    np.testing.assert_allclose(r.dfin_part, [0, 1], atol=1e-15)
    assert r.characterization_residual <= 1e-14


def test_royden_two_components(fx):
    model, split = fx["FX-SPLIT"]
    with pytest.raises(Disconnected):
        royden_project(split, [0, 0, 1, 1])
    f = np.array([0.0, 0.0, 1.0, 1.0])
    r = royden_project(split, f, allow_disconnected=True)
    np.testing.assert_allclose(r.harmonic_part, [0, 0, 1, 1], atol=1e-12)
    np.testing.assert_allclose(r.dfin_part, 0, atol=1e-12)
    # nonzero in L2 but carries no energy between components
    assert energy_norm_sq(model, r.harmonic_part) == pytest.approx(0, abs=1e-24)
    assert r.characterization_residual <= 1e-12


def test_orthocomplement_examples(fx):
    a, b = fx["FX-A"][0], fx["FX-B"][0]
    S = np.array([[1.0, 2.0], [2.0, -1.0]])
    r = orthocomplement_test(a, S)
    assert r.is_orthogonal and r.residual == 0
    r = orthocomplement_test(a, boundary_embed(a, [0, 1]))
    assert not r.is_orthogonal
    assert r.residual == pytest.approx(math.sqrt(2), abs=1e-15)  # |Delta f| * 2 / sqrt 2
    # antisymmetric F on the path with R~(F) = 0: it may only live off the support
    F = np.zeros((3, 3))
    F[0, 2], F[2, 0] = 1.0, -1.0
    r = orthocomplement_test(b, F)
    assert r.is_orthogonal and r.residual == 0


def test_orthocomplement_antisymmetric_null_direction():
    # on a triangle, circulation around the cycle is antisymmetric with R~(F) = 0
    from measlap import DiscretizedMeasureSpace, KernelSpec, build_model

    tri = build_model(DiscretizedMeasureSpace.counting(3),
                      KernelSpec.edge_list([(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)]))
    F = np.array([[0.0, 1.0, -1.0], [-1.0, 0.0, 1.0], [1.0, -1.0, 0.0]])
    r = orthocomplement_test(tri, F)
    assert r.is_orthogonal and r.residual == 0 and r.consistency == 0
    assert r.singleton_residual == 0


def test_symmetric_pair_examples(fx):
    _, a = fx["FX-A"]
    r = symmetric_pair_check(a, 2.0, 3.0)
    np.testing.assert_allclose(r.eigenvalues, [2.0])
    assert r.pairing_residual == 0
    with pytest.raises(EmptySpectralWindow):
        symmetric_pair_check(a, 1.0, 1.5)
    _, b = fx["FX-B"]
    r = symmetric_pair_check(b, 2.0, 4.0, n_pairs=32)
    assert r.pairing_residual <= 1e-12
    assert r.jstar_j_residual <= 1e-12
    with pytest.raises(DefectModel):
        symmetric_pair_check(fx["FX-D"][1], 2.0, 4.0)


def test_energy_element_gauges(fx):
    model = fx["FX-B"][0]
    e = EnergyElement.from_values([3.0, 4.0, 6.0])
    np.testing.assert_array_equal(e.values, [0, 1, 3])
    assert e == EnergyElement.from_values([10.0, 11.0, 13.0])
    m = EnergyElement.from_values([3.0, 4.0, 6.0], gauge="nu_mean_zero", nu=model.nu)
    assert math.fsum(model.nu * m.values) == pytest.approx(0, abs=1e-15)
    assert energy_inner(model, e, e) == energy_inner(model, m, m) == pytest.approx(5.0)


@given(models(), st.integers(0, 2**32 - 1))
def test_energy_matches_loop_oracle_and_is_symmetric(model, seed):
    rng = np.random.default_rng(seed)
    f, g = rng.standard_normal(model.n), rng.standard_normal(model.n)
    fg = energy_inner(model, f, g)
    assert fg == energy_inner(model, g, f)
    assert fg == pytest.approx(energy_loop(model.c_matrix, model.mu, f, g), rel=1e-12, abs=1e-14)


@given(models(), st.integers(0, 2**32 - 1), st.floats(-100, 100))
def test_gauge_invariance(model, seed, shift):
    rng = np.random.default_rng(seed)
    f, g = rng.standard_normal(model.n), rng.standard_normal(model.n)
    base = energy_inner(model, f, g)
    shifted = energy_inner(model, f + shift, g)
    # rounding f + shift perturbs each difference by ~eps (|f_i| + |f_j| + 2|shift|)
    mag = np.add.outer(np.abs(f), np.abs(f)) + 2 * abs(shift)
    terms = (model.rho * mag * np.abs(np.subtract.outer(g, g))).ravel()
    assert abs(shifted - base) <= 1e-13 * residual_scale(terms) + 1e-300


@given(models(), st.integers(-8, 8))
def test_gauge_invariance_exact_for_dyadic_shift(model, k):
    # integer-valued f with a power-of-two shift: every difference is exact
    f = np.arange(model.n, dtype=float) * 3 - 2
    assert energy_inner(model, f + 2.0**k, f) == energy_inner(model, f, f)


@given(models())
def test_energy_gram_psd_with_constant_kernel(model):
    E = energy_gram(model)
    w = np.linalg.eigvalsh(E)
    assert w[0] >= -1e-12 * np.max(np.abs(w))
    assert np.linalg.matrix_rank(E, tol=1e-10 * np.max(np.abs(w))) == model.n - 1
    np.testing.assert_allclose(E @ np.ones(model.n), 0, atol=1e-12 * np.max(np.abs(E)) * model.n)


@given(bundles(leaky=False), st.integers(0, 2**32 - 1))
def test_norm_decomposition_and_laplacian(bundle, seed):
    rng = np.random.default_rng(seed)
    for _ in range(5):
        f = rng.standard_normal(bundle.n)
        r = norm_decomposition(bundle, f)
        assert r.residuals["half_sum"] <= 1e-12 * r.scale
        assert r.residuals["laplacian"] <= 1e-12 * r.scale
        assert r.stochastic_term >= -1e-14 * r.scale
        # I - P is a contraction from energy space into L2(nu) up to the factor 2
        assert r.deterministic_term <= 2 * r.norm_sq * (1 + 1e-12) + 1e-14


@given(bundles(), st.integers(0, 2**32 - 1))
def test_boundary_isometry(bundle, seed):
    f = np.random.default_rng(seed).standard_normal(bundle.n)
    model = bundle.model
    F = boundary_embed(model, f)
    terms = (F * F * model.rho).ravel()
    assert abs(boundary_norm_sq(model, F) - energy_norm_sq(model, f)) <= 1e-13 * residual_scale(terms)


@given(bundles(), st.integers(0, 2**32 - 1))
def test_orthocomplement_routes_agree(bundle, seed):
    rng = np.random.default_rng(seed)
    model = bundle.model
    F = rng.standard_normal((model.n, model.n))
    r = orthocomplement_test(model, F)
    assert r.consistency <= 1e-12 * max(1.0, np.max(np.abs(F)) * model.n * np.max(model.rho))
    assert orthocomplement_test(model, F + F.T).is_orthogonal
    f = rng.standard_normal(model.n)
    assert not orthocomplement_test(model, boundary_embed(model, f)).is_orthogonal


@given(bundles(leaky=False), st.integers(0, 2**32 - 1))
def test_royden_trivial_on_connected(bundle, seed):
    f = np.random.default_rng(seed).standard_normal(bundle.n)
    r = royden_project(bundle, f)
    np.testing.assert_allclose(r.harmonic_part, 0, atol=1e-10 * np.max(np.abs(f)))
    np.testing.assert_allclose(r.dfin_part, f - f[0], atol=1e-10 * np.max(np.abs(f)))


@given(bundles(leaky=False))
def test_symmetric_pair_full_window(bundle):
    r = symmetric_pair_check(bundle, 1e6, 2 * float(np.max(bundle.model.degree)) + 1, n_pairs=8)
    assert r.pairing_residual <= 1e-11 * r.scale
    assert r.jstar_j_residual <= 1e-11 * max(1.0, float(np.max(r.eigenvalues)))
    assert r.invariance_residual <= 1e-10
