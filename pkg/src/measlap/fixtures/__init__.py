"""Bundled model files used by the test and acceptance suites."""

from __future__ import annotations

from pathlib import Path

FIXTURE_DIR = Path(__file__).resolve().parent

FIXTURES = {
    "FX-A": "fx_a.toml",
    "FX-B": "fx_b.toml",
    "FX-C": "fx_c.toml",
    "FX-D": "fx_d.toml",
    "FX-SPLIT": "fx_split.toml",
    "FX-G": "fx_g.toml",
}


def fixture_path(name: str) -> Path:
    try:
        return FIXTURE_DIR / FIXTURES[name]
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; known: {sorted(FIXTURES)}") from None


def load_fixture(name: str, warn: bool = False):
    """Load a bundled fixture model by name (``"FX-A"`` ... ``"FX-D"``)."""
    import warnings

    from ..modelfile import load_model
    from ..model import ConnectivityWarning

    with warnings.catch_warnings():
        if not warn:
            warnings.simplefilter("ignore", ConnectivityWarning)
        return load_model(fixture_path(name))
