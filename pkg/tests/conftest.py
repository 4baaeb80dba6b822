import sys
import warnings
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))

from measlap import DiscretizedMeasureSpace, KernelSpec, assemble_operators, build_model, load_fixture
from measlap.model import ConnectivityWarning

settings.register_profile(
    "default", deadline=None, max_examples=25, derandomize=True, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

FIXTURE_NAMES = ("FX-A", "FX-B", "FX-C", "FX-D")


@pytest.fixture(scope="session")
def fx():
    """Fixture name -> (model, bundle)."""
    out = {}
    for name in ("FX-A", "FX-B", "FX-C", "FX-D", "FX-SPLIT", "FX-G"):
        m = load_fixture(name)
        out[name] = (m, assemble_operators(m))
    return out


@st.composite
def models(draw, min_n=2, max_n=6, leaky=None, connected=True):
    """Random symmetric measure models (connected by default)."""
    n = draw(st.integers(min_n, max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    c = rng.random((n, n)) * (rng.random((n, n)) < 0.6)
    c = c + c.T
    if connected:
        # a spanning path keeps every degree positive and the graph connected
        for i in range(n - 1):
            c[i, i + 1] = c[i + 1, i] = c[i, i + 1] + 0.1 + rng.random()
    mu = 0.1 + rng.random(n)
    use_leak = draw(st.booleans()) if leaky is None else leaky
    leak = None
    if use_leak:
        leak = np.where(rng.random(n) < 0.5, 0.9 * rng.random(n), 0.0)
        leak[rng.integers(n)] = 0.3
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConnectivityWarning)
        return build_model(DiscretizedMeasureSpace(mu), KernelSpec.explicit(c), leak, name="random")


@st.composite
def bundles(draw, **kw):
    return assemble_operators(draw(models(**kw)))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(results):
        terminalreporter.write_line(results[k])
