"""Matrix realizations of R, R-tilde, Delta and P and their spectral checks.

In the site basis

    R_ij = c_ij mu_j,      Delta = diag(c) - R,      P = diag(1/c) R.

``P`` is self-adjoint in ``L2(nu)`` and ``Delta`` in ``L2(mu)``; both
claims are reduced to symmetric eigenproblems via the similarity
``D_w^{1/2} A D_w^{-1/2}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EigSolverFailure
from .model import SymmetricMeasureModel, as_mask

__all__ = [
    "OperatorBundle",
    "SymmetryReport",
    "SpectralReport",
    "assemble_operators",
    "apply_R",
    "apply_Rtilde",
    "residual_scale",
    "check_symmetric_operator",
    "detailed_balance_residual",
    "stationarity_residual",
    "symmetrized_P",
    "symmetrized_Delta",
    "spectral_report",
    "spectral_radius",
    "harmonic_space",
    "harmonic_projection",
    "cesaro_average",
    "rho_n",
    "jensen_gap",
    "laplacian_quadratic_form",
    "rtilde_contraction",
    "coboundary_complement",
]


def _frozen(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class OperatorBundle:
    """Dense matrices of R, Delta and P for one model."""

    model: SymmetricMeasureModel
    R: np.ndarray
    Delta: np.ndarray
    P: np.ndarray

    @property
    def n(self) -> int:
        return self.model.n

    @property
    def mu(self) -> np.ndarray:
        return self.model.mu

    @property
    def nu(self) -> np.ndarray:
        return self.model.nu

    @property
    def c(self) -> np.ndarray:
        return self.model.degree


def assemble_operators(model: SymmetricMeasureModel) -> OperatorBundle:
    c = model.degree
    R = model.c_matrix * model.mu[None, :]
    Delta = np.diag(c) - R
    P = R / c[:, None]
    if model.is_closed:
        P = _exact_stochastic(P)
    return OperatorBundle(model, _frozen(R), _frozen(Delta), _frozen(P))


def _exact_stochastic(P):
    """Push the rounding of each row into its largest entry so that the
    compensated row sum is exactly 1."""
    P = P / P.sum(axis=1, keepdims=True)
    for row in P:
        k = int(np.argmax(row))
        for _ in range(4):
            s = math.fsum(row)
            if s == 1.0:
                break
            row[k] += 1.0 - s
    return P


def apply_R(bundle: OperatorBundle, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (bundle.n,):
        raise ValueError(f"expected a vector of length {bundle.n}, got {f.shape}")
    return bundle.R @ f


def apply_Rtilde(model: SymmetricMeasureModel, F) -> np.ndarray:
    """``R~(F)_i = sum_j F_ij c_ij mu_j`` for a two-variable function ``F``."""
    F = np.asarray(F, dtype=float)
    if F.shape != (model.n, model.n):
        raise ValueError(f"expected an {model.n}x{model.n} array, got {F.shape}")
    return np.sum(F * model.c_matrix * model.mu[None, :], axis=1)


def residual_scale(*arrays) -> float:
    """Magnitude used to make residual tolerances relative.

    ``len * max|entry|`` over all arrays (never below the smallest normal
    float), i.e. the size of a plain sum of the entries involved.
    """
    size = 0
    peak = 0.0
    for a in arrays:
        a = np.asarray(a, dtype=float)
        if a.size:
            size = max(size, a.shape[0] if a.ndim else 1)
            peak = max(peak, float(np.max(np.abs(a))))
    return max(size * peak, np.finfo(float).tiny)


@dataclass
class SymmetryReport:
    r_residual: float
    p_residual: float
    r_scale: float
    p_scale: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return (
            self.r_residual <= self.tolerance * self.r_scale
            and self.p_residual <= self.tolerance * self.p_scale
        )


def check_symmetric_operator(bundle, n_trials=16, seed=0, tolerance=1e-12) -> SymmetryReport:
    """Residuals of ``<f, Rg>_mu = <Rf, g>_mu`` and ``<Pf, g>_nu = <f, Pg>_nu``.

    Runs over a battery of ``n_trials`` random pairs; reports the largest
    residuals and the matching magnitude scales.
    """
    rng = np.random.default_rng(seed)
    mu, nu = bundle.mu, bundle.nu
    r_res = p_res = 0.0
    r_scale = p_scale = np.finfo(float).tiny
    for _ in range(n_trials):
        f = rng.standard_normal(bundle.n)
        g = rng.standard_normal(bundle.n)
        a, b = mu * f * (bundle.R @ g), mu * (bundle.R @ f) * g
        r_res = max(r_res, abs(math.fsum(a) - math.fsum(b)))
        r_scale = max(r_scale, residual_scale(a, b))
        a, b = nu * (bundle.P @ f) * g, nu * f * (bundle.P @ g)
        p_res = max(p_res, abs(math.fsum(a) - math.fsum(b)))
        p_scale = max(p_scale, residual_scale(a, b))
    return SymmetryReport(r_res, p_res, r_scale, p_scale, tolerance)


def detailed_balance_residual(bundle):
    """``(max|nu_i P_ij - nu_j P_ji|, scale)``."""
    flux = bundle.nu[:, None] * bundle.P
    return float(np.max(np.abs(flux - flux.T))), residual_scale(flux)


def stationarity_residual(bundle):
    """``(max_j |sum_i nu_i P_ij - nu_j|, scale)``; zero only for closed models."""
    flux = bundle.nu[:, None] * bundle.P
    nuP = np.array([math.fsum(col) for col in flux.T])
    return float(np.max(np.abs(nuP - bundle.nu))), residual_scale(flux)


def symmetrized_P(bundle) -> np.ndarray:
    """``D_nu^{1/2} P D_nu^{-1/2}`` (symmetric up to rounding)."""
    s = np.sqrt(bundle.nu)
    return s[:, None] * bundle.P / s[None, :]


def symmetrized_Delta(bundle) -> np.ndarray:
    """``D_mu^{1/2} Delta D_mu^{-1/2}`` (symmetric up to rounding)."""
    s = np.sqrt(bundle.mu)
    return s[:, None] * bundle.Delta / s[None, :]


def _eigh(a, vectors=False):
    a = 0.5 * (a + a.T)
    try:
        return np.linalg.eigh(a) if vectors else np.linalg.eigvalsh(a)
    except np.linalg.LinAlgError as exc:
        raise EigSolverFailure(str(exc)) from exc


@dataclass
class SpectralReport:
    p_eigenvalues: np.ndarray
    delta_eigenvalues: np.ndarray
    p_selfadjoint_residual: float
    delta_selfadjoint_residual: float
    p_scale: float
    delta_scale: float
    spectral_radius: float
    max_degree: float
    flags: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not any(self.flags.values())


def spectral_report(bundle, tol=1e-10, selfadjoint_tol=1e-13) -> SpectralReport:
    """Spectra of P in ``L2(nu)`` and Delta in ``L2(mu)`` with claim flags.

    Flags (True means the claim failed): ``p_outside_unit_interval``,
    ``delta_negative``, ``delta_norm_exceeds_2max_c``,
    ``p_not_selfadjoint``, ``delta_not_selfadjoint``.
    """
    sp = symmetrized_P(bundle)
    mu_delta = bundle.mu[:, None] * bundle.Delta
    p_res = float(np.max(np.abs(sp - sp.T)))
    d_res = float(np.max(np.abs(mu_delta - mu_delta.T)))
    p_eval = np.sort(_eigh(sp))
    d_eval = np.sort(_eigh(symmetrized_Delta(bundle)))
    radius = float(np.max(np.abs(p_eval)))
    cmax = float(np.max(bundle.c))
    p_scale, d_scale = residual_scale(sp), residual_scale(mu_delta)
    flags = {
        "p_outside_unit_interval": bool(p_eval[0] < -1 - tol or p_eval[-1] > 1 + tol),
        "delta_negative": bool(d_eval[0] < -tol * max(1.0, cmax)),
        "delta_norm_exceeds_2max_c": bool(np.max(np.abs(d_eval)) > 2 * cmax * (1 + tol)),
        "p_not_selfadjoint": bool(p_res > selfadjoint_tol * p_scale),
        "delta_not_selfadjoint": bool(d_res > selfadjoint_tol * d_scale),
    }
    return SpectralReport(p_eval, d_eval, p_res, d_res, p_scale, d_scale, radius, cmax, flags)


def spectral_radius(bundle) -> float:
    return float(np.max(np.abs(_eigh(symmetrized_P(bundle)))))


def harmonic_space(bundle, tol=1e-10) -> np.ndarray:
    """``L2(nu)``-orthonormal basis of ``ker(I - P)`` as columns."""
    w, v = _eigh(symmetrized_P(bundle), vectors=True)
    keep = np.abs(w - 1.0) <= tol
    basis = v[:, keep] / np.sqrt(bundle.nu)[:, None]
    return basis


def harmonic_projection(bundle, f, tol=1e-10) -> np.ndarray:
    """``nu``-orthogonal projection of ``f`` onto the harmonic functions."""
    f = np.asarray(f, dtype=float)
    H = harmonic_space(bundle, tol)
    if H.shape[1] == 0:
        return np.zeros_like(f)
    return H @ (H.T @ (bundle.nu * f))


def cesaro_average(bundle, f, N: int) -> np.ndarray:
    """``(1/N) sum_{n=1}^{N} P^n f``."""
    if N < 1:
        raise ValueError("N must be >= 1")
    g = np.asarray(f, dtype=float)
    total = np.zeros_like(g)
    for _ in range(N):
        g = bundle.P @ g
        total += g
    return total / N


def rho_n(bundle, A, B, n: int) -> float:
    """``rho_n(A x B) = <chi_A, P^n chi_B>_{L2(nu)}``."""
    if n < 0:
        raise ValueError("n must be >= 0")
    a = as_mask(bundle.n, A)
    v = as_mask(bundle.n, B).astype(float)
    for _ in range(n):
        v = bundle.P @ v
    return math.fsum(bundle.nu[a] * v[a])


def jensen_gap(bundle, f) -> np.ndarray:
    """``P(f^2) - (Pf)^2``, the one-step conditional variance of ``f(X_1)``."""
    f = np.asarray(f, dtype=float)
    Pf = bundle.P @ f
    return bundle.P @ (f * f) - Pf * Pf


def laplacian_quadratic_form(bundle, f):
    """``(<f, Delta f>_mu, 2 int f^2 c dmu)``."""
    f = np.asarray(f, dtype=float)
    q = math.fsum(bundle.mu * f * (bundle.Delta @ f))
    upper = 2.0 * math.fsum(f * f * bundle.nu)
    return q, upper


def rtilde_contraction(bundle, F):
    """``(||R~ F||^2_{L2(mu)}, ||F||^2_{L2(c rho)})``; the first never exceeds the second."""
    model = bundle.model
    F = np.asarray(F, dtype=float)
    lhs = math.fsum(model.mu * apply_Rtilde(model, F) ** 2)
    rhs = math.fsum((F * F * model.degree[:, None] * model.rho).ravel())
    return lhs, rhs


def coboundary_complement(bundle, tol=1e-10):
    """Basis of the ``nu``-orthogonal complement of ``{g - Pg}``.

    Returns ``(rank of I - P, complement basis as columns)``.  For a closed
    connected model the complement is spanned by the constants.
    """
    n = bundle.n
    C = np.eye(n) - bundle.P
    # u is nu-orthogonal to every column of C  <=>  C^T D_nu u = 0
    M = C.T * bundle.nu[None, :]
    _, s, vt = np.linalg.svd(M)
    cutoff = tol * max(1.0, s[0] if s.size else 0.0)
    rank = int(np.sum(s > cutoff))
    return rank, vt[rank:].T
