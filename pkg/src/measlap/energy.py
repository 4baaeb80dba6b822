"""The finite energy space of a symmetric measure.

The energy form is

    xi(f, g) = 1/2 sum_ij rho_ij (f_i - f_j)(g_i - g_j)

on site functions modulo additive constants.  All energy sums are
correctly rounded (``math.fsum`` over ordered pairs), which makes the
symmetric identities below hold bit for bit whenever the two sides are
the same multiset of terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DefectModel, Disconnected, EmptySpectralWindow
from .model import as_mask, rho_rectangle
from .operators import apply_Rtilde, jensen_gap, residual_scale, symmetrized_Delta

__all__ = [
    "EnergyElement",
    "EnergyReport",
    "energy_inner",
    "energy_norm_sq",
    "energy_gram",
    "boundary_embed",
    "boundary_norm_sq",
    "indicator_identities",
    "norm_decomposition",
    "energy_via_laplacian",
    "royden_project",
    "orthocomplement_test",
    "symmetric_pair_check",
]


@dataclass(frozen=True, eq=False)
class EnergyElement:
    """A site function modulo constants, stored as a gauged representative.

    ``gauge`` is ``"anchor"`` (value at ``anchor`` pinned to 0) or
    ``"nu_mean_zero"`` (zero mean against ``nu``; pass ``nu``).
    """

    values: np.ndarray
    gauge: str = "anchor"
    anchor: int = 0

    @classmethod
    def from_values(cls, values, gauge="anchor", anchor=0, nu=None):
        v = np.array(values, dtype=float)
        if gauge == "anchor":
            v = v - v[anchor]
        elif gauge == "nu_mean_zero":
            if nu is None:
                raise ValueError("nu_mean_zero gauge needs nu")
            nu = np.asarray(nu, dtype=float)
            v = v - math.fsum(nu * v) / math.fsum(nu)
        else:
            raise ValueError(f"unknown gauge {gauge!r}")
        v.setflags(write=False)
        return cls(v, gauge, anchor)

    def __eq__(self, other):
        if not isinstance(other, EnergyElement):
            return NotImplemented
        return self.gauge == other.gauge and np.array_equal(self.values, other.values)

    __hash__ = None


def _vec(f, n):
    f = np.asarray(getattr(f, "values", f), dtype=float)
    if f.shape != (n,):
        raise ValueError(f"expected a vector of length {n}, got {f.shape}")
    return f


def energy_inner(model, f, g) -> float:
    """``1/2 sum_ij c_ij mu_i mu_j (f_i - f_j)(g_i - g_j)``."""
    f, g = _vec(f, model.n), _vec(g, model.n)
    df = f[:, None] - f[None, :]
    dg = g[:, None] - g[None, :]
    # df * dg first, so that swapping f and g gives the same bits
    return 0.5 * math.fsum((model.rho * (df * dg)).ravel())


def energy_norm_sq(model, f) -> float:
    return energy_inner(model, f, f)


def energy_gram(model) -> np.ndarray:
    """Matrix ``E`` with ``xi(f, g) = f^T E g``."""
    rho = np.array(model.rho)
    np.fill_diagonal(rho, 0.0)
    return np.diag(rho.sum(axis=1)) - rho


def boundary_embed(model, f) -> np.ndarray:
    """``F_ij = (f_i - f_j) / sqrt(2)``, an isometry from energy space into ``L2(rho)``."""
    f = _vec(f, model.n)
    return (f[:, None] - f[None, :]) / math.sqrt(2.0)


def boundary_norm_sq(model, F) -> float:
    """``||F||^2_{L2(rho)} = sum_ij F_ij^2 rho_ij``."""
    F = np.asarray(F, dtype=float)
    return math.fsum((F * F * model.rho).ravel())


@dataclass
class IndicatorReport:
    norm_sq: float          # ||chi_A||^2_H
    rho_A_Ac: float         # rho(A x A^c)
    inner: float            # <chi_A, chi_B>_H
    inner_formula: float    # rho((A & B) x V) - rho(A x B)
    orth_lhs: float         # rho((A \ B) x B)
    orth_rhs: float         # rho((A & B) x B^c)

    @property
    def norm_residual(self) -> float:
        return abs(self.norm_sq - self.rho_A_Ac)

    @property
    def inner_residual(self) -> float:
        return abs(self.inner - self.inner_formula)

    @property
    def orthogonal(self) -> bool:
        return self.inner == 0.0

    @property
    def orthogonality_consistent(self) -> bool:
        return self.orthogonal == (self.orth_lhs == self.orth_rhs)


def indicator_identities(model, A, B) -> IndicatorReport:
    n = model.n
    a, b = as_mask(n, A), as_mask(n, B)
    chi_a, chi_b = a.astype(float), b.astype(float)
    rho = model.rho
    every = np.ones(n, dtype=bool)
    formula = math.fsum(
        np.concatenate([rho[np.ix_(a & b, every)].ravel(), -rho[np.ix_(a, b)].ravel()])
    )
    return IndicatorReport(
        norm_sq=energy_inner(model, chi_a, chi_a),
        rho_A_Ac=rho_rectangle(model, a, ~a),
        inner=energy_inner(model, chi_a, chi_b),
        inner_formula=formula,
        orth_lhs=rho_rectangle(model, a & ~b, b),
        orth_rhs=rho_rectangle(model, a & b, ~b),
    )


@dataclass
class EnergyReport:
    norm_sq: float
    deterministic_term: float
    stochastic_term: float
    laplacian_form: float
    scale: float
    residuals: dict = field(default_factory=dict)


def norm_decomposition(bundle, f) -> EnergyReport:
    """Energy norm as half the sum of a deterministic and a stochastic term.

    ``deterministic = ||f - Pf||^2_{L2(nu)}`` and ``stochastic =
    int (P(f^2) - (Pf)^2) dnu``.  Only meaningful for closed models.

    Raises
    ------
    DefectModel
        For sub-Markov truncations, where the identity does not hold.
    """
    if not bundle.model.is_closed:
        raise DefectModel("norm decomposition needs P(1) = 1; model has a declared leak")
    f = _vec(f, bundle.n)
    nu = bundle.nu
    d = f - bundle.P @ f
    det_terms = nu * d * d
    sto_terms = nu * jensen_gap(bundle, f)
    det = math.fsum(det_terms)
    sto = math.fsum(sto_terms)
    norm = energy_inner(bundle.model, f, f)
    lap = energy_via_laplacian(bundle, f)
    df = f[:, None] - f[None, :]
    scale = residual_scale(det_terms, sto_terms, (bundle.model.rho * df * df).ravel())
    return EnergyReport(
        norm_sq=norm,
        deterministic_term=det,
        stochastic_term=sto,
        laplacian_form=lap,
        scale=scale,
        residuals={
            "half_sum": abs(0.5 * (det + sto) - norm),
            "laplacian": abs(lap - norm),
        },
    )


def energy_via_laplacian(bundle, f) -> float:
    """``<f, Delta f>_{L2(mu)}``.

    Equals the energy for closed models; a declared leak adds the killing
    term ``sum_i nu_i d_i f_i^2``.
    """
    f = _vec(f, bundle.n)
    return math.fsum(bundle.mu * f * (bundle.Delta @ f))


@dataclass
class RoydenDecomposition:
    dfin_part: np.ndarray
    harmonic_part: np.ndarray
    characterization_residual: float


def royden_project(bundle, f, allow_disconnected=False) -> RoydenDecomposition:
    """Split ``f`` into a part in the span of indicators and a harmonic part.

    The harmonic functions are the locally constant functions on the
    leak-free components of the support graph, so the harmonic part is the
    ``nu``-weighted mean of ``f`` on each such component.  Both parts are
    gauged at site 0; on a connected model the harmonic part is exactly 0
    and the first part is ``f``.  The returned ``h`` is checked against the
    characterization ``<h, g - Pg>_H = 0`` for every ``g``.

    Raises
    ------
    Disconnected
        For a disconnected model unless ``allow_disconnected`` is set.
    """
    model = bundle.model
    if not model.is_connected and not allow_disconnected:
        raise Disconnected(f"model {model.name!r} has {model.n_components} components")
    f = _vec(f, bundle.n)
    nu = model.nu
    h = np.zeros(bundle.n)
    for label in np.unique(model.component_labels):
        comp = model.component_labels == label
        if np.any(model.stochastic_defect[comp] > 0):
            continue
        h[comp] = math.fsum(nu[comp] * f[comp]) / math.fsum(nu[comp])
    h = h - h[0]
    dfin = f - h
    dfin = dfin - dfin[0]
    char = h @ energy_gram(model) @ (np.eye(bundle.n) - bundle.P)
    return RoydenDecomposition(dfin, h, float(np.max(np.abs(char))))


@dataclass
class OrthocomplementResult:
    is_orthogonal: bool
    residual: float
    singleton_residual: float  # max over k of |<F, d chi_k>_{L2(rho)}|
    consistency: float         # agreement of the two routes


def orthocomplement_test(model, F, tol=1e-12) -> OrthocomplementResult:
    """Is ``F`` orthogonal to the image of energy space in ``L2(rho)``?

    Criterion: ``R~(F) = R~(F^#)`` with ``F^#_ij = F_ji``.  Cross-checked
    against the inner products with ``d chi_{k}`` for every singleton.
    """
    F = np.asarray(F, dtype=float)
    n = model.n
    if F.shape != (n, n):
        raise ValueError(f"expected an {n}x{n} array, got {F.shape}")
    diff = apply_Rtilde(model, F) - apply_Rtilde(model, F.T)
    r = float(np.max(np.abs(diff)))
    inner = np.array(
        [boundary_norm_inner(model, F, np.eye(n)[k]) for k in range(n)]
    )
    # <F, d chi_k>_{L2(rho)} = mu_k (R~F - R~F^#)_k / sqrt 2
    consistency = float(np.max(np.abs(inner - model.mu * diff / math.sqrt(2.0))))
    scale = residual_scale(F * model.c_matrix * model.mu[None, :])
    return OrthocomplementResult(r <= tol * scale, r, float(np.max(np.abs(inner))), consistency)


def boundary_norm_inner(model, F, f) -> float:
    """``<F, boundary_embed(f)>_{L2(rho)}``."""
    G = boundary_embed(model, f)
    return math.fsum((np.asarray(F, dtype=float) * G * model.rho).ravel())


@dataclass
class SymmetricPairReport:
    window: tuple
    eigenvalues: np.ndarray
    pairing_residual: float
    jstar_j_residual: float
    invariance_residual: float
    harmonic_residual: float
    scale: float


def symmetric_pair_check(bundle, n_window, m_window, n_pairs=32, seed=0) -> SymmetricPairReport:
    """Check ``<J phi, psi>_H = <phi, K psi>_{L2(mu)}`` on a spectral window.

    ``D_Q`` is the range of the spectral projection of ``Delta`` (in
    ``L2(mu)``) onto ``[1/n_window, m_window]``; ``J`` is the inclusion
    into energy space and ``K = Delta`` there (``K = 0`` on constants).

    Raises
    ------
    EmptySpectralWindow
        If no eigenvalue lies in the window.
    DefectModel
        For models with a declared leak.
    """
    if not bundle.model.is_closed:
        raise DefectModel("energy form and Delta disagree on leaky models")
    lo, hi = 1.0 / n_window, float(m_window)
    w, v = np.linalg.eigh(0.5 * (symmetrized_Delta(bundle) + symmetrized_Delta(bundle).T))
    keep = (w >= lo) & (w <= hi)
    if not np.any(keep):
        raise EmptySpectralWindow(f"no eigenvalue of Delta in [{lo:g}, {hi:g}]")
    model = bundle.model
    mu = bundle.mu
    basis = v[:, keep] / np.sqrt(mu)[:, None]  # mu-orthonormal eigenfunctions
    rng = np.random.default_rng(seed)

    pairing = 0.0
    scale = np.finfo(float).tiny
    for _ in range(n_pairs):
        phi = basis @ rng.standard_normal(basis.shape[1])
        psi = basis @ rng.standard_normal(basis.shape[1])
        lhs = energy_inner(model, phi, psi)
        terms = mu * phi * (bundle.Delta @ psi)
        pairing = max(pairing, abs(lhs - math.fsum(terms)))
        scale = max(scale, residual_scale(terms))

    k = basis.shape[1]
    energy = np.array([[energy_inner(model, basis[:, a], basis[:, b]) for b in range(k)] for a in range(k)])
    jstar_j = float(np.max(np.abs(energy - np.diag(w[keep]))))

    # Delta maps D_Q into itself
    image = bundle.Delta @ basis
    coeff = basis.T @ (mu[:, None] * image)
    invariance = float(np.max(np.abs(image - basis @ coeff)))

    # constants: K 1 = 0 and <J phi, 1>_H = 0
    ones = np.ones(bundle.n)
    harm = max(
        float(np.max(np.abs(bundle.Delta @ ones))),
        max(abs(energy_inner(model, basis[:, a], ones)) for a in range(k)),
    )
    return SymmetricPairReport((lo, hi), w[keep], pairing, jstar_j, invariance, harm, scale)
