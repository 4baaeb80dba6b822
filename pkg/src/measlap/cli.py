"""Command line entry point: ``measlap <suite> [options]``.

Exit status is 0 when every record passes, 1 when some claim fails and 2
for usage or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import re
import sys

import numpy as np

from . import energy as en
from . import operators as op
from . import paths as pth
from .errors import ConfigError, DefectModel, MeasLapError, ModelError
from .reports import (
    SUITES,
    load_config,
    make_config,
    records_to_jsonl,
    resolve_model,
    run_suite,
    summary_table,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="suite config file (TOML)")
    common.add_argument("--model", action="append",
                        help="model file or fixture:NAME (repeatable; overrides the config)")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", help="write JSON lines here instead of standard output")
    common.add_argument("--tol-scale", type=float, default=1.0, help="multiply every tolerance")
    common.add_argument("--workers", type=int, help="sampling threads (results do not depend on it)")
    common.add_argument("--quiet", action="store_true", help="omit the summary table")

    parser = argparse.ArgumentParser(
        prog="measlap", description="Verify operator, energy and path-space identities on model files."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUITES + ("all",):
        label = "every suite" if name == "all" else f"the {name} suite"
        p = sub.add_parser(name, parents=[common], help=f"run {label}")
        if name == "energy":
            p.add_argument("--function", help="inline:v0,v1,... | indicator:SET | linear | random:SEED")
        if name == "simulate":
            p.add_argument("--start", default="nu", help="site index or 'nu'")
            p.add_argument("--horizon", type=int, help="path length K")
            p.add_argument("--paths", type=int, help="number of sampled paths M")
            p.add_argument("--event", help='cylinder "A_0;A_1;...;A_k"')
            p.add_argument("--csv", help="with --event: dump sampled trajectories to this CSV file")
    return parser


def _config(args, suites):
    if args.config:
        cfg = load_config(args.config)
        cfg.suites = [s for s in cfg.suites if s in suites] or list(suites)
    else:
        cfg = make_config(suites=list(suites))
    if args.model:
        cfg.models = list(args.model)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg.workers = args.workers
    if args.out:
        cfg.output = args.out
    if args.tol_scale != 1.0:
        cfg = cfg.scaled(args.tol_scale)
    return cfg


def _emit(text, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def parse_function(spec: str, model) -> np.ndarray:
    """Test function from ``inline:..``, ``indicator:..``, ``linear`` or ``random:SEED``.

    ``indicator(SET)`` and ``random(SEED)`` are accepted as well.
    """
    m = re.fullmatch(r"\s*(\w+)\s*(?:[:(]\s*(.*?)\s*\)?)?\s*", spec)
    if not m:
        raise ConfigError(f"cannot parse function spec {spec!r}")
    kind, arg = m.group(1), m.group(2) or ""
    n = model.n
    if kind == "inline":
        vals = [float(t) for t in arg.split(",") if t.strip()]
        if len(vals) != n:
            raise ConfigError(f"inline function has {len(vals)} values, model has {n} sites")
        return np.array(vals)
    if kind == "indicator":
        mask = pth._parse_set(model, arg)
        return mask.astype(float)
    if kind == "linear":
        coords = model.space.coordinates
        if coords is None:
            return np.arange(n, dtype=float)
        coords = np.asarray(coords, dtype=float)
        return coords if coords.ndim == 1 else coords[:, 0]
    if kind == "random":
        return np.random.default_rng(int(arg or 0)).standard_normal(n)
    raise ConfigError(f"unknown function kind {kind!r}")


def _energy_report(args, cfg):
    model = resolve_model(cfg.models[0], cfg.base_dir)
    bundle = op.assemble_operators(model)
    f = parse_function(args.function, model)
    out = {"fixture": model.name, "function": args.function,
           "energy": en.energy_norm_sq(model, f),
           "laplacian_form": en.energy_via_laplacian(bundle, f)}
    try:
        r = en.norm_decomposition(bundle, f)
    except DefectModel as exc:
        out.update(status="skipped", detail=f"SKIPPED(DefectModel): {exc}")
        ok = True
    else:
        tol = cfg.tolerances["energy"]
        ok = all(v <= tol * r.scale for v in r.residuals.values())
        out.update(deterministic=r.deterministic_term, stochastic=r.stochastic_term,
                   scale=r.scale, residuals=r.residuals, tolerance=tol,
                   status="pass" if ok else "fail")
    _emit(json.dumps(out, sort_keys=True) + "\n", cfg.output)
    return EXIT_OK if ok else EXIT_FAIL


def _simulate_report(args, cfg):
    if args.horizon is None or args.paths is None:
        raise ConfigError("--event needs --horizon and --paths")
    model = resolve_model(cfg.models[0], cfg.base_dir)
    bundle = op.assemble_operators(model)
    event = pth.CylinderEvent.parse(model, args.event)
    if event.horizon > args.horizon:
        raise ConfigError(f"event has {event.horizon} steps but --horizon is {args.horizon}")
    start = "nu" if args.start == "nu" else int(args.start)
    ens = pth.sample_paths(bundle, start, args.horizon, args.paths, cfg.seed, cfg.workers)
    if start == "nu":
        exact = pth.lambda_event_exact(bundle, event)
    else:
        exact = pth.cylinder_prob_exact(bundle, start, event)
    mc, stderr = ens.estimate(event)
    ok = abs(mc - exact) <= cfg.tolerances["mc_sigma"] * stderr
    if args.csv:
        ens.to_csv(args.csv)
    out = {"exact": exact, "mc": mc, "stderr": stderr, "pass": bool(ok)}
    _emit(json.dumps(out, sort_keys=True) + "\n", cfg.output)
    return EXIT_OK if ok else EXIT_FAIL


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    suites = SUITES if args.command == "all" else (args.command,)
    try:
        cfg = _config(args, suites)
        if args.command == "energy" and args.function:
            return _energy_report(args, cfg)
        if args.command == "simulate" and args.event:
            return _simulate_report(args, cfg)
        if args.command == "simulate" and args.csv:
            raise ConfigError("--csv needs --event")
        records = run_suite(cfg)
    except (ConfigError, ModelError, ValueError) as exc:
        print(f"measlap: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MeasLapError as exc:
        print(f"measlap: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    _emit(records_to_jsonl(records), cfg.output)
    if not args.quiet:
        stream = sys.stdout if cfg.output else sys.stderr
        print(summary_table(records), file=stream)
    return EXIT_FAIL if any(r.status == "fail" for r in records) else EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
