"""Symmetric measures on a finite discretization of a measure space.

A model is a finite set of sites carrying positive weights ``mu`` together
with a symmetric, nonnegative conductance matrix ``c``.  The symmetric
measure of a rectangle is

    rho(A x B) = sum_{i in A, j in B} c_ij mu_i mu_j,

the degree (total fiber mass) is ``c_i = sum_j c_ij mu_j`` and the
stationary measure is ``nu_i = c_i mu_i``.

Truncations of infinite models are represented with a declared
``stochastic_defect``: site ``i`` leaks a fraction ``d_i`` of its fiber
mass to an absorbing cemetery, so its degree is
``sum_j c_ij mu_j / (1 - d_i)`` and row ``i`` of the Markov matrix sums
to ``1 - d_i``.
"""

from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import (
    AsymmetricKernel,
    ConflictingEdge,
    Disconnected,
    IncompleteCover,
    ModelError,
    NegativeEntry,
    NonFiniteEntry,
    OverlappingCells,
    ZeroDegree,
)

__all__ = [
    "DiscretizedMeasureSpace",
    "KernelSpec",
    "SymmetricMeasureModel",
    "IndexSet",
    "PartitionGraph",
    "ConnectivityWarning",
    "build_model",
    "index_set",
    "as_mask",
    "rho_rectangle",
    "degree",
    "nu_mass",
    "build_partition_graph",
    "singleton_partition",
    "find_chain",
    "disjoint_union",
]


class ConnectivityWarning(UserWarning):
    """The support graph of a model is not connected (irreducibility fails)."""


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DiscretizedMeasureSpace:
    """Finite stand-in for a sigma-finite measure space.

    Parameters
    ----------
    mu : array_like
        Positive weight of every site.
    coordinates : array_like, optional
        Node coordinates, shape ``(n,)`` or ``(n, d)``; only builtin kernels
        use them.
    """

    mu: np.ndarray
    coordinates: Optional[np.ndarray] = None

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        if mu.ndim != 1 or mu.size == 0:
            raise ModelError("mu must be a non-empty 1-d vector")
        if not np.all(np.isfinite(mu)):
            raise NonFiniteEntry("mu contains non-finite values")
        if np.any(mu <= 0):
            raise ModelError("every site weight mu_i must be > 0")
        object.__setattr__(self, "mu", _frozen(mu))
        if self.coordinates is not None:
            x = np.asarray(self.coordinates, dtype=float)
            if x.shape[0] != mu.size:
                raise ModelError("coordinates must have one row per site")
            object.__setattr__(self, "coordinates", _frozen(x))

    @property
    def n_sites(self) -> int:
        return int(self.mu.size)

    @classmethod
    def counting(cls, n_sites: int, coordinates=None) -> "DiscretizedMeasureSpace":
        return cls(np.ones(int(n_sites)), coordinates)

    @classmethod
    def midpoint(cls, n_sites: int, a: float = 0.0, b: float = 1.0):
        """Midpoint quadrature nodes and weights on ``[a, b]``."""
        h = (b - a) / n_sites
        x = a + h * (np.arange(n_sites) + 0.5)
        return cls(np.full(n_sites, h), x)


@dataclass(frozen=True)
class KernelSpec:
    """Declarative description of a conductance kernel.

    ``variant`` is one of ``"explicit_matrix"``, ``"edge_list"`` or
    ``"builtin"``.  Builtin names: ``constant`` (``value``), ``gaussian``
    (``sigma``), ``determinantal_abs2`` (rank-one ``K(x, y) =
    phi(x) conj(phi(y))`` given by per-site ``phi``).
    """

    variant: str
    values: Optional[object] = None
    edges: Optional[Sequence] = None
    name: Optional[str] = None
    params: Mapping[str, object] = field(default_factory=dict)

    @classmethod
    def explicit(cls, values) -> "KernelSpec":
        return cls("explicit_matrix", values=values)

    @classmethod
    def edge_list(cls, edges) -> "KernelSpec":
        return cls("edge_list", edges=list(edges))

    @classmethod
    def builtin(cls, name: str, **params) -> "KernelSpec":
        return cls("builtin", name=name, params=dict(params))

    def evaluate(self, space: DiscretizedMeasureSpace) -> np.ndarray:
        """Conductance matrix ``c_ij`` on the sites of ``space``."""
        n = space.n_sites
        if self.variant == "explicit_matrix":
            c = np.array(self.values, dtype=float)
            if c.shape != (n, n):
                raise ModelError(f"explicit matrix must be {n}x{n}, got {c.shape}")
            _check_entries(c)
            asym = np.max(np.abs(c - c.T)) if n else 0.0
            if asym > 0:
                raise AsymmetricKernel(f"max |c_ij - c_ji| = {asym:.3e} > 0")
            return c
        if self.variant == "edge_list":
            return _edges_to_matrix(n, self.edges or [])
        if self.variant == "builtin":
            return _builtin_kernel(self.name, self.params, space)
        raise ModelError(f"unknown kernel variant {self.variant!r}")


def _check_entries(c):
    if not np.all(np.isfinite(c)):
        raise NonFiniteEntry("kernel contains non-finite values")
    if np.any(c < 0):
        raise NegativeEntry("kernel contains negative values")


def _edges_to_matrix(n, edges):
    c = np.zeros((n, n))
    seen = {}
    for edge in edges:
        if len(edge) == 2:
            i, j, w = edge[0], edge[1], 1.0
        elif len(edge) == 3:
            i, j, w = edge
        else:
            raise ModelError(f"edge must be (i, j) or (i, j, weight): {edge!r}")
        i, j, w = int(i), int(j), float(w)
        if not (0 <= i < n and 0 <= j < n):
            raise ModelError(f"edge ({i}, {j}) out of range for {n} sites")
        if not math.isfinite(w):
            raise NonFiniteEntry(f"edge ({i}, {j}) has non-finite weight")
        if w < 0:
            raise NegativeEntry(f"edge ({i}, {j}) has negative weight {w}")
        key = (min(i, j), max(i, j))
        if key in seen:
            if seen[key] != w:
                raise ConflictingEdge(f"edge {key} declared with weights {seen[key]} and {w}")
            continue
        seen[key] = w
        c[i, j] = w
        c[j, i] = w
    return c


def _builtin_kernel(name, params, space):
    n = space.n_sites
    params = dict(params)
    if name == "constant":
        value = float(params.pop("value", 1.0))
        _reject_params(name, params)
        c = np.full((n, n), value)
        _check_entries(c)
        return c
    if name == "gaussian":
        sigma = float(params.pop("sigma"))
        _reject_params(name, params)
        if not sigma > 0:
            raise ModelError("gaussian kernel needs sigma > 0")
        if space.coordinates is None:
            raise ModelError("gaussian kernel needs node coordinates")
        x = space.coordinates.reshape(n, -1)
        c = np.zeros((n, n))
        # one evaluation per unordered pair keeps c exactly symmetric
        for i in range(n):
            d2 = np.sum((x[i:] - x[i]) ** 2, axis=1)
            row = np.exp(-d2 / (2.0 * sigma**2))
            c[i, i:] = row
            c[i:, i] = row
        return c
    if name == "determinantal_abs2":
        phi = params.pop("phi")
        _reject_params(name, params)
        phi = _complex_vector(phi, n)
        a = np.abs(phi) ** 2
        c = np.zeros((n, n))
        for i in range(n):
            row = a[i] * a[i:]
            c[i, i:] = row
            c[i:, i] = row
        _check_entries(c)
        return c
    raise ModelError(f"unknown builtin kernel {name!r}")


def _reject_params(name, leftover):
    if leftover:
        raise ModelError(f"unexpected parameters for {name} kernel: {sorted(leftover)}")


def _complex_vector(phi, n):
    arr = np.asarray(phi)
    if arr.ndim == 2 and arr.shape == (n, 2):
        arr = arr[:, 0] + 1j * arr[:, 1]
    arr = np.asarray(arr, dtype=complex)
    if arr.shape != (n,):
        raise ModelError(f"phi must have one value per site ({n})")
    return arr


@dataclass(frozen=True, eq=False)
class SymmetricMeasureModel:
    """Immutable symmetric-measure model; build it with :func:`build_model`."""

    space: DiscretizedMeasureSpace
    c_matrix: np.ndarray
    support_mask: np.ndarray
    degree: np.ndarray
    nu: np.ndarray
    stochastic_defect: np.ndarray
    rho: np.ndarray
    n_components: int
    component_labels: np.ndarray
    name: str = ""
    cells: Mapping[str, "IndexSet"] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.space.n_sites

    @property
    def mu(self) -> np.ndarray:
        return self.space.mu

    @property
    def is_closed(self) -> bool:
        """True when every row of P sums to one (no declared leak)."""
        return not np.any(self.stochastic_defect > 0)

    @property
    def is_connected(self) -> bool:
        return self.n_components == 1


def build_model(space, spec, defect=None, name="", cells=None, warn=True):
    """Build a :class:`SymmetricMeasureModel` from a space and a kernel.

    Parameters
    ----------
    space : DiscretizedMeasureSpace
    spec : KernelSpec or array_like
        Kernel description; a bare matrix is treated as explicit.
    defect : array_like, optional
        Declared per-site leak ``d_i`` in ``[0, 1)``.
    name : str
        Label used in reports.
    cells : mapping, optional
        Named index sets, e.g. ``{"left": [0, 1, 2, 3]}``.
    warn : bool
        Emit :class:`ConnectivityWarning` for disconnected support graphs.

    Raises
    ------
    AsymmetricKernel, NegativeEntry, ZeroDegree
    """
    if not isinstance(spec, KernelSpec):
        spec = KernelSpec.explicit(spec)
    n = space.n_sites
    c = spec.evaluate(space)
    mu = space.mu

    if defect is None:
        d = np.zeros(n)
    else:
        d = np.asarray(defect, dtype=float)
        if d.shape != (n,):
            raise ModelError(f"defect must have {n} entries")
        if not np.all(np.isfinite(d)) or np.any(d < 0) or np.any(d >= 1):
            raise ModelError("defect entries must lie in [0, 1)")

    # correctly rounded row sums, so that Delta 1 vanishes to an ulp
    fiber = np.array([math.fsum(row) for row in c * mu[None, :]])
    if np.any(fiber <= 0):
        bad = np.flatnonzero(fiber <= 0).tolist()
        raise ZeroDegree(f"sites {bad} have zero degree c(x) = 0")
    deg = fiber / (1.0 - d)
    nu = deg * mu
    rho = c * np.outer(mu, mu)
    mask = c > 0
    ncomp, labels = connected_components(mask.astype(np.int8), directed=False)
    if warn and ncomp > 1:
        warnings.warn(
            f"support graph of model {name!r} has {ncomp} components; "
            "the symmetric measure is not irreducible",
            ConnectivityWarning,
            stacklevel=2,
        )
    model = SymmetricMeasureModel(
        space=space,
        c_matrix=_frozen(c),
        support_mask=_frozen(mask, bool),
        degree=_frozen(deg),
        nu=_frozen(nu),
        stochastic_defect=_frozen(d),
        rho=_frozen(rho),
        n_components=int(ncomp),
        component_labels=_frozen(labels, int),
        name=name,
        cells={},
    )
    if cells:
        named = {k: index_set(model, v) for k, v in cells.items()}
        object.__setattr__(model, "cells", named)
    return model


def disjoint_union(a: SymmetricMeasureModel, b: SymmetricMeasureModel, name=""):
    """Block-diagonal model with the sites of ``a`` followed by those of ``b``."""
    n = a.n + b.n
    c = np.zeros((n, n))
    c[: a.n, : a.n] = a.c_matrix
    c[a.n :, a.n :] = b.c_matrix
    space = DiscretizedMeasureSpace(np.concatenate([a.mu, b.mu]))
    d = np.concatenate([a.stochastic_defect, b.stochastic_defect])
    return build_model(space, KernelSpec.explicit(c), d, name=name, warn=False)


@dataclass(frozen=True)
class IndexSet:
    """A measurable set of the discretization, with its mu-mass."""

    indices: tuple
    mu_mass: float

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)


def as_mask(n: int, A) -> np.ndarray:
    """Boolean mask of length ``n`` for an IndexSet, mask or iterable of ints."""
    if isinstance(A, IndexSet):
        A = A.indices
    arr = np.asarray(A)
    if arr.dtype == bool:
        if arr.shape != (n,):
            raise IndexError(f"mask must have length {n}")
        return arr
    idx = np.asarray(list(A) if not isinstance(A, np.ndarray) else A, dtype=int).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"index out of range for {n} sites")
    mask = np.zeros(n, dtype=bool)
    mask[idx] = True
    return mask


def index_set(model_or_space, A) -> IndexSet:
    space = getattr(model_or_space, "space", model_or_space)
    mask = as_mask(space.n_sites, A)
    idx = tuple(int(i) for i in np.flatnonzero(mask))
    return IndexSet(idx, math.fsum(space.mu[list(idx)]))


def rho_rectangle(model: SymmetricMeasureModel, A, B) -> float:
    """``rho(A x B)``; exactly symmetric in ``(A, B)``.

    The sum is correctly rounded (``math.fsum``) over the symmetric
    matrix ``rho_ij = c_ij mu_i mu_j``, so swapping the arguments returns
    the identical float.
    """
    a = as_mask(model.n, A)
    b = as_mask(model.n, B)
    return math.fsum(model.rho[np.ix_(a, b)].ravel())


def degree(model: SymmetricMeasureModel, i: int) -> float:
    if not 0 <= i < model.n:
        raise IndexError(f"site {i} out of range")
    return float(model.degree[i])


def nu_mass(model: SymmetricMeasureModel, A) -> float:
    """``nu(A) = sum_{i in A} c_i mu_i`` (equals ``rho(A x V)`` for closed models)."""
    return math.fsum(model.nu[as_mask(model.n, A)])


@dataclass(frozen=True, eq=False)
class PartitionGraph:
    """Graph on the cells of a partition; ``adjacency[i, j] = rho(A_i x A_j)``."""

    cells: tuple
    adjacency: np.ndarray
    leak: np.ndarray  # rho(A x A^c) per cell

    @property
    def n_cells(self) -> int:
        return len(self.cells)


def build_partition_graph(model, partition) -> PartitionGraph:
    cells = tuple(index_set(model, A) for A in partition)
    count = np.zeros(model.n, dtype=int)
    for cell in cells:
        count[list(cell.indices)] += 1
    if np.any(count > 1):
        raise OverlappingCells(f"sites {np.flatnonzero(count > 1).tolist()} lie in several cells")
    if np.any(count == 0):
        raise IncompleteCover(f"sites {np.flatnonzero(count == 0).tolist()} are not covered")
    k = len(cells)
    adj = np.zeros((k, k))
    for i in range(k):
        for j in range(i, k):
            adj[i, j] = adj[j, i] = rho_rectangle(model, cells[i], cells[j])
    everything = np.ones(model.n, dtype=bool)
    leak = np.array(
        [rho_rectangle(model, cell, everything & ~as_mask(model.n, cell)) for cell in cells]
    )
    return PartitionGraph(cells, _frozen(adj), _frozen(leak))


def singleton_partition(model) -> list:
    return [[i] for i in range(model.n)]


def find_chain(graph: PartitionGraph, start: int, stop: int) -> list:
    """Shortest chain of cells with ``rho(A_i x A_{i+1}) > 0`` (breadth first).

    Raises
    ------
    Disconnected
        If ``stop`` cannot be reached from ``start``.
    """
    k = graph.n_cells
    if not (0 <= start < k and 0 <= stop < k):
        raise IndexError("cell index out of range")
    if start == stop:
        return [start]
    parent = {start: None}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in np.flatnonzero(graph.adjacency[u] > 0):
            v = int(v)
            if v in parent:
                continue
            parent[v] = u
            if v == stop:
                chain = [v]
                while parent[chain[-1]] is not None:
                    chain.append(parent[chain[-1]])
                return chain[::-1]
            queue.append(v)
    raise Disconnected(f"cell {stop} is not reachable from cell {start}")
