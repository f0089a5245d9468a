import numpy as np
import pytest

from geoenhance.scene_io import DegradationConfig, SceneSpec, degrade_dataset, synth_scene


@pytest.fixture(scope="session")
def scene():
    return synth_scene(SceneSpec())


@pytest.fixture(scope="session")
def degraded(scene):
    return degrade_dataset(scene, DegradationConfig())


@pytest.fixture(scope="session")
def small_scene():
    """Cheap 8-view 32 x 32 scene for plumbing tests."""
    return degrade_dataset(synth_scene(SceneSpec(view_count=8, width=32, height=32)), DegradationConfig())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance verdicts, printed once at the end of the run
ACCEPTANCE: dict = {}


def record(key: str, ok: bool, detail: str) -> None:
    ACCEPTANCE[key] = (ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key} {'PASS' if ok else 'FAIL'}: {detail}")
