"""Path space of the Markov chain: cylinder probabilities, sampling, dissipation space.

The path measure started at ``nu`` is ``lambda = sum_x nu_x P_x``.  The
dissipation inner product is

    <F, G>_D = 1/2 sum_x nu_x E_x(F G),

evaluated exactly by enumerating the support tree of the chain up to a
finite horizon.  Cylinder functions are :class:`CylinderFunction` objects
that evaluate on an integer array of paths with shape ``(m, k + 1)``.

Sub-Markov models send the missing mass to a cemetery (site ``-1`` in
sampled trajectories); every cylinder function vanishes there.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix

from .errors import BudgetExceeded, DefectModel
from .model import as_mask
from .operators import residual_scale, rho_n

__all__ = [
    "CEMETERY",
    "CylinderEvent",
    "CylinderFunction",
    "PathEnsemble",
    "DissipationValue",
    "cylinder_prob_exact",
    "lambda_event_exact",
    "sample_paths",
    "lambda_rectangle",
    "enumerate_paths",
    "dissipation_inner_exact",
    "check_key_lemma",
    "shift_check",
    "apply_S",
    "check_S",
    "w_isometry_residual",
    "boundary_isometry_residual",
]

CEMETERY = -1
DEFAULT_BUDGET = 10**7
BLOCK_SIZE = 8192


@dataclass(frozen=True)
class CylinderEvent:
    """``{X_0 in A_0, X_1 in A_1, ..., X_k in A_k}``; ``start_set=None`` leaves ``X_0`` free."""

    sets: tuple
    start_set: Optional[np.ndarray] = None

    @classmethod
    def of(cls, n, sets, start_set=None):
        masks = tuple(as_mask(n, A) for A in sets)
        start = None if start_set is None else as_mask(n, start_set)
        return cls(masks, start)

    @classmethod
    def parse(cls, model, text: str):
        """Parse ``"A_0;A_1;...;A_k"``.

        Each set is a comma-separated index list, a named cell of the
        model, or ``*`` for the whole space.  The first entry is ``A_0``.
        """
        parts = [p.strip() for p in text.split(";")]
        if not parts or parts == [""]:
            raise ValueError("event needs at least A_0")
        masks = [_parse_set(model, p) for p in parts]
        return cls(tuple(masks[1:]), masks[0])

    @property
    def horizon(self) -> int:
        return len(self.sets)


def _parse_set(model, token):
    n = model.n
    if token in ("*", "V"):
        return np.ones(n, dtype=bool)
    if token in model.cells:
        return as_mask(n, model.cells[token])
    if token == "":
        return np.zeros(n, dtype=bool)
    return as_mask(n, [int(t) for t in token.split(",")])


def cylinder_prob_exact(bundle, x: int, event: CylinderEvent) -> float:
    """``P_x(X_0 in A_0, X_1 in A_1, ..., X_k in A_k)`` by nested matrix products."""
    if event.start_set is not None and not event.start_set[x]:
        return 0.0
    v = np.ones(bundle.n)
    for A in reversed(event.sets):
        v = bundle.P @ (A * v)
    return float(v[x])


def lambda_event_exact(bundle, event: CylinderEvent) -> float:
    """``lambda(event) = sum_x nu_x P_x(event)``."""
    v = np.ones(bundle.n)
    for A in reversed(event.sets):
        v = bundle.P @ (A * v)
    w = bundle.nu * v
    if event.start_set is not None:
        w = w[event.start_set]
    return math.fsum(w)


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Seeded sample of trajectories ``X_0 .. X_k`` (cemetery = -1)."""

    start: object
    horizon: int
    count: int
    seed: int
    trajectories: np.ndarray
    nu_total: float
    n_sites: int

    @property
    def weight(self) -> float:
        """Mass represented by each path: ``1/M`` (fixed start) or ``nu(V)/M``."""
        scale = self.nu_total if self.start == "nu" else 1.0
        return scale / self.count

    def event_indicator(self, event: CylinderEvent) -> np.ndarray:
        traj = self.trajectories
        if event.horizon > self.horizon:
            raise ValueError("event is longer than the sampled horizon")
        alive = np.ones(self.count, dtype=bool)
        if event.start_set is not None:
            alive &= _member(event.start_set, traj[:, 0])
        for t, A in enumerate(event.sets, start=1):
            alive &= _member(A, traj[:, t])
        return alive

    def estimate(self, event: CylinderEvent):
        """``(estimate, stderr)`` of ``P_x(event)`` or ``lambda(event)``."""
        p = float(np.mean(self.event_indicator(event)))
        scale = self.nu_total if self.start == "nu" else 1.0
        return scale * p, scale * math.sqrt(p * (1.0 - p) / self.count)

    def occupation(self, t: int) -> np.ndarray:
        """Empirical distribution of ``X_t`` over the sites (cemetery excluded)."""
        n = self.n_sites
        col = self.trajectories[:, t]
        return np.bincount(col[col >= 0], minlength=n) / self.count

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{t}" for t in range(self.horizon + 1)])
            w.writerows(self.trajectories.tolist())


def _member(mask, sites):
    out = np.zeros(sites.shape, dtype=bool)
    ok = sites >= 0
    out[ok] = mask[sites[ok]]
    return out


def _cumulative_rows(bundle):
    P = np.asarray(bundle.P)
    cum = np.cumsum(P, axis=1)
    closed = bundle.model.stochastic_defect == 0
    cum[closed] /= cum[closed, -1:]
    cum[closed, -1] = 1.0
    return cum


def _sample_block(cum, start_cum, start_site, horizon, size, seed, block):
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))
    n = cum.shape[0]
    traj = np.empty((size, horizon + 1), dtype=np.int64)
    if start_cum is None:
        traj[:, 0] = start_site
    else:
        traj[:, 0] = np.minimum(np.searchsorted(start_cum, rng.random(size), side="right"), n - 1)
    for t in range(horizon):
        cur = traj[:, t]
        u = rng.random(size)
        nxt = np.full(size, CEMETERY, dtype=np.int64)
        for s in np.unique(cur[cur >= 0]):
            sel = cur == s
            nxt[sel] = np.searchsorted(cum[s], u[sel], side="right")
        nxt[nxt >= n] = CEMETERY
        traj[:, t + 1] = nxt
    return traj


def sample_paths(bundle, start, horizon: int, count: int, seed: int, workers: int = 1,
                 block_size: int = BLOCK_SIZE) -> PathEnsemble:
    """Sample ``count`` trajectories of length ``horizon`` from a site or from ``nu``.

    Trajectory ``i`` is drawn from the Philox substream of block
    ``i // block_size`` keyed by ``(seed, block)``, so the ensemble is bit
    for bit independent of ``workers``.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    n = bundle.n
    cum = _cumulative_rows(bundle)
    if start == "nu":
        start_cum = np.cumsum(bundle.nu) / math.fsum(bundle.nu)
        start_cum[-1] = 1.0
        start_site = None
    else:
        start_site = int(start)
        if not 0 <= start_site < n:
            raise IndexError(f"start site {start_site} out of range")
        start_cum = None
    blocks = [(b, min(block_size, count - b * block_size)) for b in range(-(-count // block_size))]

    def run(item):
        b, size = item
        return _sample_block(cum, start_cum, start_site, horizon, size, int(seed), b)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, blocks))
    else:
        parts = [run(item) for item in blocks]
    traj = np.concatenate(parts, axis=0)
    traj.setflags(write=False)
    return PathEnsemble("nu" if start == "nu" else start_site, horizon, count, int(seed), traj,
                        math.fsum(bundle.nu), n)


@dataclass
class DissipationValue:
    exact: Optional[float]
    mc_estimate: float
    mc_stderr: float

    def agrees(self, k: float = 4.0) -> bool:
        return self.exact is None or abs(self.exact - self.mc_estimate) <= k * self.mc_stderr


def lambda_rectangle(bundle, A, B, n: int, count: int = 10**5, seed: int = 0,
                     ensemble: Optional[PathEnsemble] = None, workers: int = 1) -> DissipationValue:
    """``lambda(X_0 in A, X_n in B)``: exact ``rho_n(A x B)`` and a Monte Carlo estimate."""
    if ensemble is None:
        ensemble = sample_paths(bundle, "nu", n, count, seed, workers)
    N = bundle.n
    sets = [np.ones(N, dtype=bool)] * max(n - 1, 0) + ([as_mask(N, B)] if n >= 1 else [])
    if n == 0:
        event = CylinderEvent((), as_mask(N, A) & as_mask(N, B))
    else:
        event = CylinderEvent(tuple(sets), as_mask(N, A))
    est, err = ensemble.estimate(event)
    return DissipationValue(rho_n(bundle, A, B, n), est, err)


class CylinderFunction:
    """Function of ``(X_0, ..., X_k)`` evaluated on arrays of paths.

    Build with :meth:`compose` (``f o X_t``), :meth:`tabulated` (an array
    of shape ``(n,) * (k + 1)``), :meth:`constant` or directly from a
    vectorized callable ``fn(paths) -> values``.
    """

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], horizon: int):
        self.fn = fn
        self.horizon = int(horizon)

    def __call__(self, paths) -> np.ndarray:
        paths = np.asarray(paths)
        return np.asarray(self.fn(paths), dtype=float)

    @classmethod
    def compose(cls, f, t: int, horizon: Optional[int] = None):
        f = np.asarray(f, dtype=float)
        return cls(lambda p: _at_sites(f, p[:, t]), t if horizon is None else max(horizon, t))

    @classmethod
    def tabulated(cls, table):
        table = np.asarray(table, dtype=float)
        k = table.ndim - 1

        def fn(p):
            cols = p[:, : k + 1]
            alive = np.all(cols >= 0, axis=1)
            out = np.zeros(p.shape[0])
            out[alive] = table[tuple(cols[alive, i] for i in range(k + 1))]
            return out

        return cls(fn, k)

    @classmethod
    def constant(cls, value: float, horizon: int = 0):
        return cls(lambda p: np.full(p.shape[0], float(value)), horizon)

    def _combine(self, other, op):
        if isinstance(other, CylinderFunction):
            return CylinderFunction(lambda p: op(self(p), other(p)), max(self.horizon, other.horizon))
        value = float(other)
        return CylinderFunction(lambda p: op(self(p), value), self.horizon)

    def __add__(self, other):
        return self._combine(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __rsub__(self, other):
        return self._combine(other, lambda a, b: b - a)

    def __mul__(self, other):
        return self._combine(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return CylinderFunction(lambda p: -self(p), self.horizon)

    def with_horizon(self, horizon: int):
        return CylinderFunction(self.fn, max(self.horizon, horizon))


def _at_sites(f, sites):
    """``f[sites]`` with 0 at the cemetery."""
    out = np.zeros(sites.shape)
    ok = sites >= 0
    out[ok] = f[sites[ok]]
    return out


def enumerate_paths(bundle, horizon: int, budget: int = DEFAULT_BUDGET):
    """All support paths of length ``horizon`` with their ``lambda`` weights.

    Returns ``(paths, weights)`` with ``weights = nu_x0 P(x0, x1) ... P(x_{k-1}, x_k)``.
    On leaky models a step into the cemetery (``-1``) carries weight
    ``d_x`` and the cemetery is absorbing.

    Raises
    ------
    BudgetExceeded
        If ``n * (max out-degree)^horizon`` exceeds ``budget``.
    """
    n = bundle.n
    P = csr_matrix(np.asarray(bundle.P))
    P.eliminate_zeros()
    outdeg = np.diff(P.indptr)
    branching = int(outdeg.max(initial=0)) + int(np.any(bundle.model.stochastic_defect > 0))
    bound = n * branching ** horizon
    if bound > budget:
        raise BudgetExceeded(f"path tree has up to {bound} terms (budget {budget})")
    leak = np.asarray(bundle.model.stochastic_defect, dtype=float)
    paths = np.arange(n, dtype=np.int64)[:, None]
    weights = np.array(bundle.nu, dtype=float)
    for _ in range(horizon):
        last = paths[:, -1]
        live = last >= 0
        lv = last[live]
        deg = outdeg[lv]
        rows = np.flatnonzero(live)
        parent = np.repeat(rows, deg)
        start = np.repeat(P.indptr[lv], deg)
        offset = np.arange(parent.size) - np.repeat(np.cumsum(deg) - deg, deg)
        slot = start + offset
        new_paths = [np.hstack([paths[parent], P.indices[slot][:, None]])]
        new_w = [weights[parent] * P.data[slot]]
        # paths entering or already in the cemetery
        dying = rows[leak[lv] > 0]
        dead = np.flatnonzero(~live)
        for src, w in ((dying, weights[dying] * leak[last[dying]]), (dead, weights[dead])):
            if src.size:
                new_paths.append(np.hstack([paths[src], np.full((src.size, 1), CEMETERY)]))
                new_w.append(w)
        paths = np.concatenate(new_paths)
        weights = np.concatenate(new_w)
    return paths, weights


def _horizon_of(*fs):
    return max(f.horizon for f in fs)


def dissipation_inner_exact(bundle, F: CylinderFunction, G: CylinderFunction,
                            budget: int = DEFAULT_BUDGET, return_scale: bool = False):
    """``<F, G>_D = 1/2 sum_x nu_x E_x(F G)`` by exact path-tree summation."""
    paths, w = enumerate_paths(bundle, _horizon_of(F, G), budget)
    terms = 0.5 * w * F(paths) * G(paths)
    value = math.fsum(terms)
    if return_scale:
        return value, residual_scale(terms)
    return value


@dataclass
class KeyLemmaReport:
    key_residual: float
    orth_residual: float
    pythagoras_residual: float
    scale: float


def check_key_lemma(bundle, g1, g2, n: int, budget: int = DEFAULT_BUDGET) -> KeyLemmaReport:
    """Orthogonality of the martingale increment ``P(g2) o X_n - g2 o X_{n+1}``.

    Checks it against ``g1 o X_n`` and against ``(I - P) g2 o X_n``, and
    the resulting Pythagoras split of ``||d_n g2||_D^2``.
    """
    g1 = np.asarray(g1, dtype=float)
    g2 = np.asarray(g2, dtype=float)
    Pg2 = bundle.P @ g2
    k = n + 1
    incr = CylinderFunction.compose(Pg2, n, k) - CylinderFunction.compose(g2, k, k)
    first = CylinderFunction.compose(g1, n, k)
    coboundary = CylinderFunction.compose(g2 - Pg2, n, k)
    dn = CylinderFunction.compose(g2, k, k) - CylinderFunction.compose(g2, n, k)

    key, s1 = dissipation_inner_exact(bundle, first, incr, budget, True)
    orth, s2 = dissipation_inner_exact(bundle, coboundary, incr, budget, True)
    full, s3 = dissipation_inner_exact(bundle, dn, dn, budget, True)
    a, s4 = dissipation_inner_exact(bundle, coboundary, coboundary, budget, True)
    b, s5 = dissipation_inner_exact(bundle, incr, incr, budget, True)
    return KeyLemmaReport(abs(key), abs(orth), abs(full - (a + b)), max(s1, s2, s3, s4, s5))


def shift_check(bundle, event: CylinderEvent):
    """``(lambda(event), lambda(sigma^{-1} event))``: the event and its one-step delay.

    Needs ``nu P = nu``, hence a closed model.
    """
    if not bundle.model.is_closed:
        raise DefectModel("shift invariance of lambda needs nu P = nu")
    n = bundle.n
    start = event.start_set if event.start_set is not None else np.ones(n, dtype=bool)
    delayed = CylinderEvent((start,) + tuple(event.sets), None)
    return lambda_event_exact(bundle, event), lambda_event_exact(bundle, delayed)


def apply_S(bundle, F: CylinderFunction, horizon: Optional[int] = None) -> CylinderFunction:
    """Replace the last coordinate of ``F`` by its ``P``-average.

    ``(S F)(w) = sum_y F(w_0, ..., w_{k-1}, y) P(w_{k-1}, y)`` where ``k``
    is the horizon of ``F`` (or ``horizon`` if larger).  The result is a
    function of ``w_0 .. w_{k-1}``, reported with horizon ``k``.
    """
    k = max(F.horizon, horizon or 0)
    if k < 1:
        raise ValueError("S needs a cylinder function of horizon >= 1")
    P = np.asarray(bundle.P)
    n = bundle.n

    def fn(paths):
        m = paths.shape[0]
        expanded = np.repeat(paths[:, : k + 1], n, axis=0)
        expanded[:, k] = np.tile(np.arange(n), m)
        vals = F(expanded).reshape(m, n)
        prev = paths[:, k - 1]
        out = np.zeros(m)
        ok = prev >= 0
        out[ok] = np.sum(vals[ok] * P[prev[ok]], axis=1)
        return out

    return CylinderFunction(fn, k)


def check_S(bundle, F: CylinderFunction, G: CylinderFunction, budget: int = DEFAULT_BUDGET):
    """``(||SF||^2 - ||F||^2, <SF, G> - <F, SG>, scale)``; contractive means the first is <= 0."""
    k = _horizon_of(F, G)
    SF, SG = apply_S(bundle, F, k), apply_S(bundle, G, k)
    nsf, s1 = dissipation_inner_exact(bundle, SF, SF, budget, True)
    nf, s2 = dissipation_inner_exact(bundle, F.with_horizon(k), F.with_horizon(k), budget, True)
    a, s3 = dissipation_inner_exact(bundle, SF, G.with_horizon(k), budget, True)
    b, s4 = dissipation_inner_exact(bundle, F.with_horizon(k), SG, budget, True)
    return nsf - nf, abs(a - b), max(s1, s2, s3, s4)


def w_isometry_residual(bundle, f, n: int, budget: int = DEFAULT_BUDGET):
    """``(||sqrt2 f o X_n||^2_D, ||f||^2_{L2(nu)})``."""
    f = np.asarray(f, dtype=float)
    W = math.sqrt(2.0) * CylinderFunction.compose(f, n)
    return dissipation_inner_exact(bundle, W, W, budget), math.fsum(bundle.nu * f * f)


def boundary_isometry_residual(bundle, f, n: int = 0, budget: int = DEFAULT_BUDGET):
    """``(||f o X_{n+1} - f o X_n||^2_D, ||f||^2_H)``."""
    from .energy import energy_inner

    f = np.asarray(f, dtype=float)
    d = CylinderFunction.compose(f, n + 1) - CylinderFunction.compose(f, n, n + 1)
    return dissipation_inner_exact(bundle, d, d, budget), energy_inner(bundle.model, f, f)
