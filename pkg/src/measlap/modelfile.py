"""TOML model files.

Layout (every key outside this list is rejected)::

    name = "FX-B"                 # optional label

    [space]
    n_sites = 3
    mu = "counting"               # or a list of positive weights,
                                  # or "midpoint" (weights 1/n on [0, 1])
    coordinates = [0.0, 0.5, 1.0] # optional; "midpoint" fills them in

    [kernel]
    variant = "edge_list"         # "explicit_matrix" | "edge_list" | "builtin"
    edges = [[0, 1, 1.0], [1, 2, 1.0]]
    # explicit_matrix:  values = [[...], ...]
    # builtin:          name = "constant" | "gaussian" | "determinantal_abs2"
    #                   value = 1.0 / sigma = 0.2 / phi = [...]

    [defect]                      # optional
    leak = [0.0, 0.5]

    [cells]                       # optional named index sets
    left = [0, 1, 2, 3]
"""

from __future__ import annotations

import re
import sys
from pathlib import Path

from .errors import ParseError, UnknownKey
from .model import DiscretizedMeasureSpace, KernelSpec, build_model

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

__all__ = ["load_model", "parse_model", "read_toml"]

_TOP_KEYS = {"name", "space", "kernel", "defect", "cells"}
_SPACE_KEYS = {"n_sites", "mu", "coordinates"}
_KERNEL_KEYS = {
    "explicit_matrix": {"variant", "values"},
    "edge_list": {"variant", "edges"},
    "builtin": {"variant", "name", "value", "sigma", "phi"},
}
_DEFECT_KEYS = {"leak"}
_LOC = re.compile(r"line (\d+), column (\d+)")


def read_toml(path):
    """Parse a TOML file, converting decoder errors to :class:`ParseError`."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = _LOC.search(str(exc))
        line, col = (int(m.group(1)), int(m.group(2))) if m else (None, None)
        raise ParseError(f"{path}: {exc}", line, col) from exc


def _check_keys(where, table, allowed):
    if not isinstance(table, dict):
        raise ParseError(f"[{where}] must be a table")
    unknown = set(table) - allowed
    if unknown:
        raise UnknownKey(f"unknown key(s) in [{where}]: {sorted(unknown)}")


def parse_model(doc: dict, default_name=""):
    """Build a model from an already-parsed TOML document."""
    _check_keys("top level", doc, _TOP_KEYS)
    for required in ("space", "kernel"):
        if required not in doc:
            raise ParseError(f"missing [{required}] section")

    space_t = doc["space"]
    _check_keys("space", space_t, _SPACE_KEYS)
    mu = space_t.get("mu", "counting")
    coords = space_t.get("coordinates")
    if isinstance(mu, str):
        if "n_sites" not in space_t:
            raise ParseError(f"mu = {mu!r} needs n_sites")
        n = int(space_t["n_sites"])
        if mu == "counting":
            space = DiscretizedMeasureSpace.counting(n, coords)
        elif mu == "midpoint":
            space = DiscretizedMeasureSpace.midpoint(n)
            if coords is not None:
                space = DiscretizedMeasureSpace(space.mu, coords)
        else:
            raise ParseError(f"unknown mu keyword {mu!r}")
    else:
        space = DiscretizedMeasureSpace(mu, coords)
        if "n_sites" in space_t and int(space_t["n_sites"]) != space.n_sites:
            raise ParseError("n_sites disagrees with the length of mu")

    kern = doc["kernel"]
    variant = kern.get("variant") if isinstance(kern, dict) else None
    if variant not in _KERNEL_KEYS:
        raise ParseError(f"[kernel] variant must be one of {sorted(_KERNEL_KEYS)}")
    _check_keys("kernel", kern, _KERNEL_KEYS[variant])
    if variant == "explicit_matrix":
        spec = KernelSpec.explicit(kern["values"])
    elif variant == "edge_list":
        spec = KernelSpec.edge_list(kern.get("edges", []))
    else:
        params = {k: v for k, v in kern.items() if k not in ("variant", "name")}
        spec = KernelSpec.builtin(kern["name"], **params)

    defect = None
    if "defect" in doc:
        _check_keys("defect", doc["defect"], _DEFECT_KEYS)
        defect = doc["defect"].get("leak")

    cells = doc.get("cells") or {}
    if not isinstance(cells, dict):
        raise ParseError("[cells] must be a table")
    return build_model(space, spec, defect, name=doc.get("name", default_name), cells=cells)


def load_model(path):
    """Read and validate a model file."""
    path = Path(path)
    return parse_model(read_toml(path), default_name=path.stem)
