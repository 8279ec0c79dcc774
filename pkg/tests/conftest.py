import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tlsreflect.simulator import courtyard, trace_scene

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def small_scene(seed=0):
    """Coarse one-wall courtyard (about 9e4 points) for fast end-to-end tests."""
    return courtyard(("south",), {"specular": 0.8, "transmittance": 0.2}, interior_depth=5.0,
                     step_deg=0.6, seed=seed)


@pytest.fixture(scope="session")
def small_spec():
    return small_scene()


@pytest.fixture(scope="session")
def small_cloud(small_spec):
    return trace_scene(small_spec)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_cloud(n, rng, colors=True, corrected=True):
    from tlsreflect.core import PointCloud

    count = rng.integers(1, 4, n).astype(np.uint8)
    index = np.minimum(rng.integers(1, 4, n), count).astype(np.uint8)
    return PointCloud(
        positions=rng.normal(0, 10, (n, 3)),
        scanner_origin=rng.normal(0, 1, 3),
        intensity=rng.uniform(0, 1000, n).astype(np.float32),
        colors=rng.integers(0, 256, (n, 3)).astype(np.uint8) if colors else None,
        intensity_corrected=rng.uniform(0, 1000, n).astype(np.float32) if corrected else None,
        echo_index=index,
        echo_count=count,
        gt_label=rng.choice([0, 1, 255], n).astype(np.uint8),
        pred_label=rng.choice([0, 1, 255], n).astype(np.uint8),
    )


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
