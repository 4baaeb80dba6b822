"""Suite configuration, report records and the suite runner.

A suite config is a TOML file::

    models = ["fixture:FX-A", "models/my_model.toml"]
    suites = ["validate", "energy"]      # or ["all"]
    seed = 0
    output = "report.jsonl"              # optional
    workers = 1
    mc_paths = 100000

    [tolerances]                         # optional overrides
    energy = 1e-12

Relative paths are resolved against the directory of the config file.
Every record is one JSON line; ``wall_time`` is kept out of the JSON so
that equal seeds give byte-identical output.
"""

from __future__ import annotations

import itertools
import json
import math
import time
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import energy as en
from . import operators as op
from . import paths as pth
from . import semigroups as sg
from .errors import (
    BadTolerance,
    BudgetExceeded,
    ConfigError,
    DefectModel,
    Disconnected,
    EmptySpectralWindow,
    MeasLapError,
    ParseError,
    RecurrentError,
    UnknownKey,
)
from .fixtures import FIXTURES, load_fixture
from .model import build_partition_graph, find_chain, rho_rectangle, singleton_partition
from .modelfile import load_model, read_toml

__all__ = [
    "SUITES",
    "DEFAULT_TOLERANCES",
    "SuiteConfig",
    "ReportRecord",
    "load_config",
    "resolve_model",
    "run_suite",
    "records_to_jsonl",
    "summary_table",
]

SUITES = ("validate", "spectrum", "energy", "dissipation", "semigroup", "green", "simulate", "connect")

# relative tolerances; residuals are compared against tol * scale
DEFAULT_TOLERANCES = {
    "detailed_balance": 1e-14,
    "stationarity": 1e-13,
    "selfadjoint": 1e-13,
    "operator_symmetry": 1e-12,
    "spectrum": 1e-10,
    "closed_form": 1e-12,
    "energy": 1e-12,
    "boundary": 1e-13,
    "orthocomplement": 1e-12,
    "dissipation": 1e-12,
    "path_isometry": 1e-13,
    "semigroup": 1e-10,
    "heat": 1e-8,
    "green": 1e-10,
    "cesaro": 1e-3,
    "mc_sigma": 4.0,
}
# not rescaled by --tol-scale
_UNSCALED = {"mc_sigma"}

_CONFIG_KEYS = {"models", "suites", "seed", "output", "workers", "mc_paths", "tolerances"}
DEFAULT_MODELS = ("fixture:FX-A", "fixture:FX-B", "fixture:FX-C", "fixture:FX-D")


@dataclass
class SuiteConfig:
    models: list
    suites: list
    tolerances: dict
    seed: int = 0
    output: Optional[str] = None
    workers: int = 1
    mc_paths: int = 100_000
    base_dir: Path = field(default_factory=Path.cwd)

    def echo(self) -> dict:
        """Fully resolved config (defaults filled in)."""
        return {
            "models": list(self.models),
            "suites": list(self.suites),
            "seed": self.seed,
            "output": self.output,
            "workers": self.workers,
            "mc_paths": self.mc_paths,
            "tolerances": dict(sorted(self.tolerances.items())),
        }

    def scaled(self, factor: float) -> "SuiteConfig":
        if not factor > 0:
            raise BadTolerance(f"tolerance scale must be positive, got {factor}")
        tols = {k: (v if k in _UNSCALED else v * factor) for k, v in self.tolerances.items()}
        _check_tolerances(tols)
        return replace(self, tolerances=tols)


def _check_tolerances(tols):
    eps = np.finfo(float).eps
    for k, v in tols.items():
        if k not in DEFAULT_TOLERANCES:
            raise UnknownKey(f"unknown tolerance {k!r}; known: {sorted(DEFAULT_TOLERANCES)}")
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise BadTolerance(f"tolerance {k} must be a finite number, got {v!r}")
        if v < eps:
            raise BadTolerance(f"tolerance {k} = {v!r} is below machine epsilon")


def _check_suites(suites):
    if isinstance(suites, str):
        suites = [suites]
    out = []
    for s in suites:
        if s == "all":
            out.extend(x for x in SUITES if x not in out)
        elif s in SUITES:
            if s not in out:
                out.append(s)
        else:
            raise UnknownKey(f"unknown suite {s!r}; known: {list(SUITES)} or 'all'")
    return out


def make_config(models=None, suites=("all",), tolerances=None, seed=0, output=None, workers=1,
                mc_paths=100_000, base_dir=None) -> SuiteConfig:
    """Validated config from keyword arguments (defaults filled in)."""
    tols = dict(DEFAULT_TOLERANCES)
    overrides = dict(tolerances or {})
    _check_tolerances(overrides)
    tols.update(overrides)
    if int(workers) < 1:
        raise ConfigError("workers must be >= 1")
    if int(mc_paths) < 1:
        raise ConfigError("mc_paths must be >= 1")
    models = list(models) if models else list(DEFAULT_MODELS)
    return SuiteConfig(models, _check_suites(suites), tols, int(seed), output, int(workers),
                       int(mc_paths), Path(base_dir) if base_dir else Path.cwd())


def load_config(path) -> SuiteConfig:
    """Read and validate a suite config file.

    Raises
    ------
    ParseError
        Unreadable file or malformed TOML (with line and column).
    UnknownKey
        Unknown top-level key, suite name or tolerance name.
    BadTolerance
        Tolerance override below machine epsilon (or not a number).
    """
    path = Path(path)
    doc = read_toml(path)
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise UnknownKey(f"unknown config key(s): {sorted(unknown)}")
    models = doc.get("models", doc.get("model"))
    if isinstance(models, str):
        models = [models]
    tols = doc.get("tolerances", {})
    if not isinstance(tols, dict):
        raise ParseError("[tolerances] must be a table")
    return make_config(
        models=models,
        suites=doc.get("suites", ["all"]),
        tolerances=tols,
        seed=doc.get("seed", 0),
        output=doc.get("output"),
        workers=doc.get("workers", 1),
        mc_paths=doc.get("mc_paths", 100_000),
        base_dir=path.parent,
    )


def resolve_model(ref, base_dir=None):
    """``fixture:NAME``, a bare fixture name or a model file path."""
    ref = str(ref)
    if ref.startswith("fixture:"):
        return load_fixture(ref.split(":", 1)[1])
    if ref in FIXTURES:
        return load_fixture(ref)
    p = Path(ref)
    if not p.is_absolute() and base_dir is not None:
        p = Path(base_dir) / p
    return load_model(p)


@dataclass
class ReportRecord:
    suite: str
    claim: str
    fixture: str
    status: str                      # "pass" | "fail" | "skipped"
    value: Optional[float] = None
    residual: Optional[float] = None
    tolerance: Optional[float] = None
    scale: Optional[float] = None
    stderr: Optional[float] = None
    detail: str = ""
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return self.status != "fail"

    def to_dict(self) -> dict:
        d = {
            "suite": self.suite,
            "claim": self.claim,
            "fixture": self.fixture,
            "status": self.status,
            "value": _num(self.value),
            "residual": _num(self.residual),
            "tolerance": _num(self.tolerance),
            "scale": _num(self.scale),
            "stderr": _num(self.stderr),
            "detail": self.detail,
        }
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else repr(x)


def records_to_jsonl(records) -> str:
    return "".join(r.to_json() + "\n" for r in records)


def summary_table(records) -> str:
    rows = [("suite", "claim", "fixture", "status", "residual", "bound")]
    for r in records:
        bound = "" if r.tolerance is None else f"{r.tolerance * (r.scale or 1.0):.3g}"
        res = "" if r.residual is None else f"{r.residual:.3g}"
        rows.append((r.suite, r.claim, r.fixture, r.status.upper(), res, bound))
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in rows]
    n_fail = sum(r.status == "fail" for r in records)
    n_skip = sum(r.status == "skipped" for r in records)
    lines.append(f"{len(records)} records: {len(records) - n_fail - n_skip} pass, "
                 f"{n_fail} fail, {n_skip} skipped")
    return "\n".join(lines)


# ---------------------------------------------------------------- runner


class _Recorder:
    def __init__(self, suite, fixture, tols):
        self.suite = suite
        self.fixture = fixture
        self.tols = tols
        self.records = []
        self._t = time.perf_counter()

    def _add(self, rec):
        now = time.perf_counter()
        rec.wall_time = now - self._t
        self._t = now
        self.records.append(rec)

    def bound(self, claim, residual, tol_key, scale=1.0, value=None, detail=""):
        """Pass iff ``residual <= tol * scale``."""
        tol = self.tols[tol_key]
        ok = bool(residual <= tol * scale)
        self._add(ReportRecord(self.suite, claim, self.fixture, "pass" if ok else "fail", value,
                               residual, tol, scale, None, detail))

    def exact(self, claim, residual, value=None, detail=""):
        ok = residual == 0
        self._add(ReportRecord(self.suite, claim, self.fixture, "pass" if ok else "fail", value,
                               residual, 0.0, None, None, detail))

    def flag(self, claim, ok, value=None, detail=""):
        self._add(ReportRecord(self.suite, claim, self.fixture, "pass" if ok else "fail", value,
                               None, None, None, None, detail))

    def mc(self, claim, exact, estimate, stderr, detail=""):
        k = self.tols["mc_sigma"]
        ok = abs(exact - estimate) <= k * stderr
        self._add(ReportRecord(self.suite, claim, self.fixture, "pass" if ok else "fail", estimate,
                               abs(exact - estimate), k, stderr, stderr, detail))

    def skip(self, claim, exc):
        self._add(ReportRecord(self.suite, claim, self.fixture, "skipped", detail=
                               f"SKIPPED({type(exc).__name__}): {exc}"))


def _rng(seed, fixture, suite):
    key = [int(seed), zlib.crc32(fixture.encode()), zlib.crc32(suite.encode())]
    return np.random.default_rng(np.random.SeedSequence(key))


def _closed_components(model):
    """Number of connected components carrying no leak (= dim ker(I - P))."""
    labels = model.component_labels
    leaky = {int(l) for l, d in zip(labels, model.stochastic_defect) if d > 0}
    return len(set(int(l) for l in labels) - leaky)


def _suite_validate(rec, bundle, rng, cfg):
    model = bundle.model
    n = model.n
    worst = 0.0
    for _ in range(100):
        A = rng.random(n) < 0.5
        B = rng.random(n) < 0.5
        worst = max(worst, abs(rho_rectangle(model, A, B) - rho_rectangle(model, B, A)))
    rec.exact("measure.rectangle_symmetry", worst, detail="100 random rectangles")
    rec.flag("measure.degree_positive", bool(np.all(model.degree > 0)), float(np.min(model.degree)))
    rows = np.array([math.fsum(r) for r in bundle.P])
    rec.bound("markov.row_sums", float(np.max(np.abs(rows - (1 - model.stochastic_defect)))),
              "stationarity", float(n), detail="P(1) = 1 - leak")
    res, scale = op.detailed_balance_residual(bundle)
    rec.bound("markov.detailed_balance", res, "detailed_balance", scale)
    if model.is_closed:
        res, scale = op.stationarity_residual(bundle)
        rec.bound("markov.stationarity", res, "stationarity", scale)
    else:
        rec.skip("markov.stationarity", DefectModel("nu P = nu needs a closed model"))
    sym = op.check_symmetric_operator(bundle, n_trials=16, seed=int(rng.integers(2**31)))
    rec.bound("operator.R_selfadjoint", sym.r_residual, "operator_symmetry", sym.r_scale)
    rec.bound("operator.P_selfadjoint", sym.p_residual, "operator_symmetry", sym.p_scale)
    rec.flag("model.connectivity", True, float(model.n_components),
             detail=f"{model.n_components} support component(s)")


def _suite_spectrum(rec, bundle, rng, cfg):
    model = bundle.model
    rep = op.spectral_report(bundle, tol=cfg.tolerances["spectrum"],
                             selfadjoint_tol=cfg.tolerances["selfadjoint"])
    lo, hi = float(rep.p_eigenvalues[0]), float(rep.p_eigenvalues[-1])
    rec.bound("spectrum.P_in_unit_interval", max(0.0, -1 - lo, hi - 1), "spectrum", 1.0,
              detail=f"[{lo:.6g}, {hi:.6g}]")
    rec.bound("spectrum.Delta_nonnegative", max(0.0, -float(rep.delta_eigenvalues[0])), "spectrum",
              max(1.0, rep.max_degree))
    rec.bound("spectrum.Delta_norm_bound",
              max(0.0, float(np.max(np.abs(rep.delta_eigenvalues))) - 2 * rep.max_degree),
              "spectrum", 2 * rep.max_degree)
    rec.bound("spectrum.P_selfadjoint", rep.p_selfadjoint_residual, "selfadjoint", rep.p_scale)
    rec.bound("spectrum.Delta_selfadjoint", rep.delta_selfadjoint_residual, "selfadjoint",
              rep.delta_scale)
    worst = 0.0
    for _ in range(200):
        f = rng.standard_normal(model.n)
        q, upper = op.laplacian_quadratic_form(bundle, f)
        worst = max(worst, max(0.0, -q) / max(upper, 1e-300), max(0.0, q - upper) / max(upper, 1e-300))
    rec.bound("laplacian.quadratic_form_range", worst, "spectrum", 1.0, detail="200 random f")
    dim = op.harmonic_space(bundle).shape[1]
    expected = _closed_components(model)
    rec.flag("harmonic.dimension", dim == expected, float(dim), detail=f"expected {expected}")
    rank, comp = op.coboundary_complement(bundle)
    rec.flag("harmonic.coboundary_complement", comp.shape[1] == expected, float(comp.shape[1]),
             detail=f"rank(I - P) = {rank}")
    f = np.zeros(model.n)
    f[0] = 1.0
    avg = op.cesaro_average(bundle, f, 1000)
    err = float(np.max(np.abs(avg - op.harmonic_projection(bundle, f))))
    rec.bound("harmonic.cesaro_limit", err, "cesaro", 1.0, detail="N = 1000, f = chi_{0}")


def _suite_energy(rec, bundle, rng, cfg):
    model = bundle.model
    n = model.n
    if model.is_closed:
        half = lap = bnd = 0.0
        half_scale = lap_scale = bnd_scale = np.finfo(float).tiny
        for _ in range(200):
            f = rng.standard_normal(n)
            r = en.norm_decomposition(bundle, f)
            half = max(half, r.residuals["half_sum"] / r.scale)
            lap = max(lap, r.residuals["laplacian"] / r.scale)
            F = en.boundary_embed(model, f)
            terms = (F * F * model.rho).ravel()
            b_res = abs(en.boundary_norm_sq(model, F) - r.norm_sq)
            bnd = max(bnd, b_res / op.residual_scale(terms))
        rec.bound("energy.norm_decomposition", half, "energy", 1.0, detail="relative, 200 random f")
        rec.bound("energy.laplacian_form", lap, "energy", 1.0, detail="relative, 200 random f")
        rec.bound("energy.boundary_isometry", bnd, "boundary", 1.0, detail="relative, 200 random f")
    else:
        exc = DefectModel("model has a declared leak")
        rec.skip("energy.norm_decomposition", exc)
        worst = 0.0
        for _ in range(50):
            f = rng.standard_normal(n)
            kill = math.fsum(model.nu * model.stochastic_defect * f * f)
            terms = np.concatenate([bundle.mu * f * (bundle.Delta @ f), [kill]])
            worst = max(worst, abs(en.energy_via_laplacian(bundle, f)
                                   - en.energy_norm_sq(model, f) - kill) / op.residual_scale(terms))
        rec.bound("energy.laplacian_form_with_killing", worst, "energy", 1.0, detail="relative, 50 random f")

    if n <= 10:
        subsets = [np.array(bits, dtype=bool) for bits in itertools.product([False, True], repeat=n)]
        pairs = [(a, b) for a in subsets for b in subsets]
        label = "all subsets"
    else:
        pairs = [(rng.random(n) < 0.5, rng.random(n) < 0.5) for _ in range(50)]
        label = "50 random subsets"
    norm_res = inner_res = 0.0
    consistent = True
    for a, b in pairs:
        r = en.indicator_identities(model, a, b)
        norm_res = max(norm_res, r.norm_residual)
        inner_res = max(inner_res, r.inner_residual)
        consistent &= r.orthogonality_consistent
    rec.exact("energy.indicator_norm", norm_res, detail=label)
    rec.exact("energy.indicator_inner", inner_res, detail=label)
    rec.flag("energy.indicator_orthogonality", bool(consistent), detail=label)

    f = rng.standard_normal(n)
    try:
        roy = en.royden_project(bundle, f)
        rec.bound("energy.royden_characterization", roy.characterization_residual, "energy",
                  op.residual_scale(en.energy_gram(model)) * float(np.max(np.abs(f))) * n)
    except Disconnected as exc:
        rec.skip("energy.royden_characterization", exc)
    sym = rng.standard_normal((n, n))
    sym = sym + sym.T
    res = en.orthocomplement_test(model, sym, tol=cfg.tolerances["orthocomplement"])
    rec.flag("energy.orthocomplement_symmetric", res.is_orthogonal, res.residual,
             detail="F = F^T is orthogonal to the image of energy space")
    grad = en.boundary_embed(model, f)
    res2 = en.orthocomplement_test(model, grad, tol=cfg.tolerances["orthocomplement"])
    nonconstant = en.energy_norm_sq(model, f) > 0
    rec.flag("energy.orthocomplement_gradient", res2.is_orthogonal != nonconstant, res2.residual,
             detail="boundary of a nonconstant f is not orthogonal")
    try:
        w = op.spectral_report(bundle).delta_eigenvalues
        pos = w[w > 1e-9]
        if pos.size == 0:
            raise EmptySpectralWindow("Delta has no positive eigenvalue")
        n_window = 2.0 / float(pos[0])
        rep = en.symmetric_pair_check(bundle, n_window, 2 * float(np.max(model.degree)),
                                      seed=int(rng.integers(2**31)))
        rec.bound("energy.symmetric_pair", rep.pairing_residual, "energy", rep.scale)
        rec.bound("energy.symmetric_pair_invariance", rep.invariance_residual, "energy",
                  float(np.max(model.degree)) * n)
    except (DefectModel, EmptySpectralWindow) as exc:
        rec.skip("energy.symmetric_pair", exc)


def _suite_dissipation(rec, bundle, rng, cfg):
    model = bundle.model
    n = model.n
    tol = cfg.tolerances
    try:
        for k in (0, 1, 2):
            g1, g2 = rng.standard_normal(n), rng.standard_normal(n)
            r = pth.check_key_lemma(bundle, g1, g2, k)
            rec.bound(f"dissipation.key_lemma[n={k}]", r.key_residual, "dissipation", r.scale)
            rec.bound(f"dissipation.orthogonal_split[n={k}]", max(r.orth_residual, r.pythagoras_residual),
                      "dissipation", r.scale)
    except BudgetExceeded as exc:
        rec.skip("dissipation.key_lemma", exc)
        return
    if not model.is_closed:
        exc = DefectModel("isometries and shift invariance need nu P = nu")
        for claim in ("dissipation.W_isometry", "dissipation.boundary_isometry",
                      "dissipation.shift_invariance"):
            rec.skip(claim, exc)
    else:
        f = rng.standard_normal(n)
        for k in (0, 1, 2):
            a, b = pth.w_isometry_residual(bundle, f, k)
            rec.bound(f"dissipation.W_isometry[n={k}]", abs(a - b), "path_isometry",
                      op.residual_scale(model.nu * f * f))
        a, b = pth.boundary_isometry_residual(bundle, f)
        df = f[:, None] - f[None, :]
        rec.bound("dissipation.boundary_isometry", abs(a - b), "path_isometry",
                  op.residual_scale((model.rho * df * df).ravel()))
        worst = 0.0
        for _ in range(20):
            sets = [rng.random(n) < 0.5 for _ in range(3)]
            ev = pth.CylinderEvent(tuple(sets[1:]), sets[0])
            x, y = pth.shift_check(bundle, ev)
            worst = max(worst, abs(x - y) / max(math.fsum(model.nu), 1e-300))
        rec.bound("dissipation.shift_invariance", worst, "path_isometry", 1.0, detail="20 random cylinders")
    table = rng.standard_normal((n, n, n))
    other = rng.standard_normal((n, n, n))
    F = pth.CylinderFunction.tabulated(table)
    G = pth.CylinderFunction.tabulated(other)
    try:
        growth, selfadj, scale = pth.check_S(bundle, F, G)
        rec.bound("dissipation.S_contraction", max(0.0, growth), "dissipation", scale)
        rec.bound("dissipation.S_selfadjoint", selfadj, "dissipation", scale)
    except BudgetExceeded as exc:
        rec.skip("dissipation.S_contraction", exc)


def _suite_semigroup(rec, bundle, rng, cfg):
    model = bundle.model
    grid = (0.1, 0.5, 2.0)
    worst = 0.0
    for s in grid:
        Qs = sg.poisson_semigroup(bundle, 1.0, s)
        for t in grid:
            Qt = sg.poisson_semigroup(bundle, 1.0, t)
            worst = max(worst, float(np.max(np.abs(Qs @ Qt - sg.poisson_semigroup(bundle, 1.0, s + t)))))
    rec.bound("semigroup.poisson_property", worst, "semigroup", 1.0, detail="3x3 (s, t) grid")
    e1 = sg.generator_error(bundle, 1.0, 1e-2)
    e2 = sg.generator_error(bundle, 1.0, 1e-3)
    ratio = e1 / e2 if e2 > 0 else float("inf")
    first_order = e2 == 0 or 5.0 <= ratio <= 20.0
    rec.flag("semigroup.generator_first_order", first_order, ratio,
             detail=f"err(1e-2) = {e1:.3g}, err(1e-3) = {e2:.3g}")
    if model.name == "FX-A":
        err = 0.0
        for t in (0.1, 1.0, 5.0):
            Q = sg.poisson_semigroup(bundle, 1.0, t)
            err = max(err, float(np.max(np.abs(np.diag(Q) - (1 + math.exp(-2 * t)) / 2))))
        rec.bound("semigroup.two_site_closed_form", err, "closed_form", 1.0, detail="t in {0.1, 1, 5}")
    site = unif = 0.0
    for t in (0.1, 1.0, 5.0):
        a, b = sg.heat_series_discrepancy(bundle, t)
        site, unif = max(site, a), max(unif, b)
    c = model.degree
    rec.bound("semigroup.heat_site_rate_series", site, "heat", 1.0,
              detail=f"degree range [{float(np.min(c)):.6g}, {float(np.max(c)):.6g}]")
    rec.bound("semigroup.heat_uniformized_series", unif, "heat", 1.0)


def _suite_green(rec, bundle, rng, cfg):
    model = bundle.model
    n = model.n
    radius = op.spectral_radius(bundle)
    try:
        G = sg.green_operator(bundle, "direct")
    except RecurrentError as exc:
        recurrent = True
        rec.flag("green.recurrent_raises", True, radius, detail=f"RecurrentError: {exc}")
        for claim in ("green.series_agreement", "green.riesz_reconstruction", "green.riesz_harmonic"):
            rec.skip(claim, exc)
    else:
        recurrent = False
        Gs = sg.green_operator(bundle, "series")
        rec.bound("green.series_agreement", float(np.max(np.abs(G - Gs))), "green", 1.0)
        resid = float(np.max(np.abs((np.eye(n) - bundle.P) @ G - np.eye(n))))
        rec.bound("green.inverse_residual", resid, "green", 1.0)
        rr = hr = 0.0
        for _ in range(50):
            d = sg.riesz_decompose(bundle, rng.standard_normal(n), G)
            rr, hr = max(rr, d.reconstruction_residual), max(hr, d.harmonic_residual)
        rec.bound("green.riesz_reconstruction", rr, "green", 1.0, detail="50 random f")
        rec.bound("green.riesz_harmonic", hr, "green", 1.0, detail="50 random f")
        if model.name == "FX-D":
            exact = np.array([[2.0, 2.0], [1.0, 2.0]])
            rec.exact("green.two_site_leak_exact", float(np.max(np.abs(G - exact))))
    near_one = abs(1.0 - radius) < sg.RECURRENCE_THRESHOLD
    rec.flag("green.recurrence_dichotomy", recurrent == near_one, radius,
             detail="RecurrentError iff spectral radius of P is 1")
    if not model.is_closed:
        rec.skip("energy.norm_decomposition", DefectModel("model has a declared leak"))


def _suite_simulate(rec, bundle, rng, cfg):
    model = bundle.model
    n = model.n
    horizon = 3
    ens = pth.sample_paths(bundle, "nu", horizon, cfg.mc_paths, cfg.seed, cfg.workers)
    cases = []
    if model.name == "FX-B":
        cases.append(([0], [2], 2))
    while len(cases) < 20:
        A = np.flatnonzero(rng.random(n) < 0.5).tolist() or [0]
        B = np.flatnonzero(rng.random(n) < 0.5).tolist() or [n - 1]
        cases.append((A, B, int(rng.integers(0, horizon + 1))))
    reseeded = None
    for i, (A, B, k) in enumerate(cases):
        v = pth.lambda_rectangle(bundle, A, B, k, ensemble=ens)
        detail = f"A={A} B={B} n={k}"
        if not v.agrees(cfg.tolerances["mc_sigma"]) and reseeded is None:
            reseeded = pth.sample_paths(bundle, "nu", horizon, cfg.mc_paths, cfg.seed + 1, cfg.workers)
        if not v.agrees(cfg.tolerances["mc_sigma"]):
            v = pth.lambda_rectangle(bundle, A, B, k, ensemble=reseeded)
            detail += " (reseeded)"
        rec.mc(f"paths.lambda_rectangle[{i}]", v.exact, v.mc_estimate, v.mc_stderr, detail)
    if model.name == "FX-B":
        rec.exact("paths.two_step_end_to_end", abs(op.rho_n(bundle, [0], [2], 2) - 0.5),
                  value=op.rho_n(bundle, [0], [2], 2))


def _suite_connect(rec, bundle, rng, cfg):
    model = bundle.model
    if model.cells:
        # greedy choice of disjoint named cells, in name order
        names, used = [], np.zeros(model.n, dtype=bool)
        for name in sorted(model.cells):
            mask = np.zeros(model.n, dtype=bool)
            mask[list(model.cells[name])] = True
            if not np.any(mask & used):
                names.append(name)
                used |= mask
        if used.all():
            graph = build_partition_graph(model, [model.cells[k] for k in names])
            _chain_record(rec, graph, 0, len(names) - 1, f"{names[0]} -> {names[-1]}")
    graph = build_partition_graph(model, singleton_partition(model))
    _chain_record(rec, graph, 0, model.n - 1, f"site 0 -> site {model.n - 1}")


def _chain_record(rec, graph, a, b, label):
    try:
        chain = find_chain(graph, a, b)
    except Disconnected as exc:
        rec.flag("connect.find_chain", False, detail=f"{label}: Disconnected: {exc}")
        return
    ok = chain[0] == a and chain[-1] == b and all(
        graph.adjacency[x, y] > 0 for x, y in zip(chain, chain[1:])
    )
    rec.flag("connect.find_chain", bool(ok), float(len(chain) - 1), detail=f"{label}: {list(chain)}")


_RUNNERS = {
    "validate": _suite_validate,
    "spectrum": _suite_spectrum,
    "energy": _suite_energy,
    "dissipation": _suite_dissipation,
    "semigroup": _suite_semigroup,
    "green": _suite_green,
    "simulate": _suite_simulate,
    "connect": _suite_connect,
}


def run_suite(config: SuiteConfig, models=None):
    """Run every configured suite on every configured model, in config order.

    ``models`` may supply already-built models (skipping resolution).
    Errors raised by the modules are re-raised with the fixture and suite
    prepended to the message.
    """
    if models is None:
        models = [resolve_model(ref, config.base_dir) for ref in config.models]
    records = []
    for model in models:
        bundle = op.assemble_operators(model)
        label = model.name or "model"
        for suite in config.suites:
            rec = _Recorder(suite, label, config.tolerances)
            try:
                _RUNNERS[suite](rec, bundle, _rng(config.seed, label, suite), config)
            except MeasLapError as exc:
                raise _wrap(exc, f"[{label}/{suite}] ") from exc
            records.extend(rec.records)
    return records


def _wrap(exc, prefix):
    try:
        return type(exc)(prefix + str(exc))
    except TypeError:  # pragma: no cover - exotic constructor
        return MeasLapError(prefix + str(exc))
