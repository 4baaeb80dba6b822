"""Poisson and heat semigroups, Green's operator and the Riesz decomposition."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln
from scipy.stats import poisson

from .errors import RecurrentError, SeriesTruncationBudgetExceeded
from .operators import harmonic_projection, spectral_radius

__all__ = [
    "poisson_semigroup",
    "poisson_generator",
    "heat_semigroup",
    "site_rate_heat_series",
    "uniformized_heat_series",
    "heat_series_discrepancy",
    "generator_error",
    "GreenDecomposition",
    "green_operator",
    "riesz_decompose",
    "riesz_norm_identity",
    "RECURRENCE_THRESHOLD",
]

RECURRENCE_THRESHOLD = 1e-10
MAX_SERIES_TERMS = 100_000


def _poisson_cutoff(mean, tol, max_terms):
    """Smallest N with P(Poisson(mean) > N) <= tol."""
    if mean == 0:
        return 0
    N = int(poisson.isf(tol, mean)) if tol > 0 else max_terms + 1
    while N <= max_terms and poisson.sf(N, mean) > tol:
        N += 1
    if N > max_terms:
        raise SeriesTruncationBudgetExceeded(
            f"Poisson series with mean {mean:g} needs more than {max_terms} terms for tol {tol:g}"
        )
    return N


def _poisson_series(K, mean, tol, max_terms):
    """``sum_n e^{-mean} mean^n / n! K^n`` truncated where the Poisson tail <= tol.

    ``K`` is entrywise nonnegative with row sums <= 1, so every ``K^n`` has
    max-norm <= 1 and the neglected tail is bounded by the Poisson tail.
    """
    n = K.shape[0]
    N = _poisson_cutoff(mean, tol, max_terms)
    out = np.zeros((n, n))
    power = np.eye(n)
    for k in range(N + 1):
        if mean > 0:
            w = math.exp(-mean + k * math.log(mean) - gammaln(k + 1))
        else:
            w = 1.0 if k == 0 else 0.0
        out += w * power
        power = power @ K
    return out


def poisson_semigroup(bundle, rate: float, t: float, series_tol=1e-13, max_terms=MAX_SERIES_TERMS):
    """``Q_t = sum_n e^{-rate t} (rate t)^n / n! P^n``.

    The series is truncated once the Poisson tail is below ``series_tol``,
    which bounds the max-norm truncation error because ``P`` is
    (sub-)stochastic.  ``Q_0`` is the identity.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if rate <= 0:
        raise ValueError("rate must be > 0")
    return _poisson_series(bundle.P, rate * t, series_tol, max_terms)


def poisson_generator(bundle, rate: float) -> np.ndarray:
    """Generator ``rate (P - I)`` of the Poisson semigroup."""
    return rate * (bundle.P - np.eye(bundle.n))


def generator_error(bundle, rate: float, h: float, series_tol=1e-15) -> float:
    """``max|(Q_h - I)/h - rate (P - I)|``; first order in ``h``."""
    Qh = poisson_semigroup(bundle, rate, h, series_tol)
    return float(np.max(np.abs((Qh - np.eye(bundle.n)) / h - poisson_generator(bundle, rate))))


def heat_semigroup(bundle, t: float) -> np.ndarray:
    """``S_t = exp(-t Delta)`` (matrix exponential, treated as ground truth)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    return expm(-t * bundle.Delta)


def site_rate_heat_series(bundle, t: float, series_tol=1e-13, max_terms=MAX_SERIES_TERMS):
    """Row ``x`` equals ``e^{-c(x) t} sum_n (c(x) t)^n / n! P^n(x, .)``.

    Each row is a Poisson mixture frozen at the degree of its starting
    site.  It coincides with ``exp(-t Delta)`` when the degree is constant;
    otherwise the two differ (see :func:`heat_series_discrepancy`).
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    c = bundle.c
    out = np.empty((bundle.n, bundle.n))
    cache = {}
    for i, ci in enumerate(c):
        key = float(ci)
        if key not in cache:
            cache[key] = _poisson_series(bundle.P, key * t, series_tol, max_terms)
        out[i] = cache[key][i]
    return out


def uniformized_heat_series(bundle, t: float, series_tol=1e-13, max_terms=MAX_SERIES_TERMS):
    """Poisson series for ``exp(-t Delta)`` at the uniform rate ``max c``.

    ``exp(-t Delta) = sum_n e^{-L t} (L t)^n / n! K^n`` with
    ``K = I - Delta / L`` entrywise nonnegative and sub-stochastic.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    L = float(np.max(bundle.c))
    K = np.eye(bundle.n) - bundle.Delta / L
    K = np.clip(K, 0.0, None)  # diagonal rounding only
    return _poisson_series(K, L * t, series_tol, max_terms)


def heat_series_discrepancy(bundle, t: float, series_tol=1e-13):
    """``(max|site-rate series - exp(-t Delta)|, max|uniformized - exp(-t Delta)|)``."""
    exact = heat_semigroup(bundle, t)
    site = site_rate_heat_series(bundle, t, series_tol)
    unif = uniformized_heat_series(bundle, t, series_tol)
    return float(np.max(np.abs(site - exact))), float(np.max(np.abs(unif - exact)))


def green_operator(bundle, mode="direct", tol=1e-13, max_n=1_000_000):
    """Green's operator ``G = sum_n P^n = (I - P)^{-1}``.

    Parameters
    ----------
    mode : {"direct", "series"}
        ``direct`` solves ``(I - P) G = I``; ``series`` sums powers of ``P``
        until the geometric tail bound drops below ``tol``.

    Raises
    ------
    RecurrentError
        If the spectral radius of ``P`` is within ``1e-10`` of 1.
    """
    n = bundle.n
    r = spectral_radius(bundle)
    if abs(1.0 - r) < RECURRENCE_THRESHOLD or r > 1.0:
        raise RecurrentError(
            f"spectral radius of P is {r:.16g}; Green's function is infinite (recurrent case)"
        )
    if mode == "direct":
        return np.linalg.solve(np.eye(n) - bundle.P, np.eye(n))
    if mode != "series":
        raise ValueError(f"unknown mode {mode!r}")
    # ||P^m||_2 <= kappa r^m with kappa = sqrt(max nu / min nu) (P is
    # similar to a symmetric matrix through D_nu^{1/2})
    kappa = math.sqrt(float(np.max(bundle.nu) / np.min(bundle.nu)))
    G = np.eye(n)
    power = np.eye(n)
    for m in range(1, max_n + 1):
        power = power @ bundle.P
        G += power
        tail = kappa * r ** (m + 1) / (1.0 - r)
        if tail < tol:
            return G
    raise RecurrentError(f"Green series did not converge in {max_n} terms")


@dataclass
class GreenDecomposition:
    G: np.ndarray
    phi: np.ndarray
    h: np.ndarray
    converged: bool
    reconstruction_residual: float
    harmonic_residual: float


def riesz_decompose(bundle, f, G=None) -> GreenDecomposition:
    """Split ``f = G(phi) + h`` with ``phi = (I - P) f`` and ``h`` harmonic.

    Raises :class:`RecurrentError` when Green's operator does not exist.
    """
    f = np.asarray(f, dtype=float)
    if G is None:
        G = green_operator(bundle, "direct")
    phi = f - bundle.P @ f
    Gphi = G @ phi
    h = f - Gphi
    recon = float(np.max(np.abs(Gphi + h - f))) if f.size else 0.0
    harm = float(np.max(np.abs(h - bundle.P @ h))) if f.size else 0.0
    return GreenDecomposition(G, phi, h, True, recon, harm)


def riesz_norm_identity(bundle, f, h=None):
    """Both sides of ``||f||_H^2 = 1/2 (||phi||^2_nu + int (P(h^2) - h^2) dnu)``.

    ``phi = (I - P) f``.  When ``h`` is not given it is the Riesz harmonic
    part for transient models and the ``nu``-projection of ``f`` onto the
    harmonic functions otherwise.  Returns ``(lhs, rhs)``; the identity is
    not asserted here because it drops the one-step variance of ``f``.
    """
    from .energy import energy_inner

    f = np.asarray(f, dtype=float)
    phi = f - bundle.P @ f
    if h is None:
        try:
            h = riesz_decompose(bundle, f).h
        except RecurrentError:
            h = harmonic_projection(bundle, f)
    nu = bundle.nu
    rhs = 0.5 * (math.fsum(nu * phi * phi) + math.fsum(nu * (bundle.P @ (h * h) - h * h)))
    return energy_inner(bundle.model, f, f), rhs
