import numpy as np
import pytest

from rrpcp.model import ScenarioConfig, SupportEvent

ACCEPTANCE_LINES: dict[int, str] = {}


def small_scenario(seed=0, t0=300, horizon=120, k_objects=1, add_at=5, delete_at=60):
    """48-pixel scenario with six stable directions, one addition and one decay."""
    m = 48
    sigma = np.zeros(m)
    sigma[:7] = np.geomspace(400.0, 20.0, 7)
    events = [SupportEvent(time=1, add=(0, 1, 2, 4, 5, 6))]
    if add_at is not None:
        events.append(SupportEvent(time=t0 + add_at, add=(3,)))
    if delete_at is not None:
        events.append(SupportEvent(time=t0 + delete_at, delete=(1,)))
    return ScenarioConfig(
        m=m, frame_h=8, frame_w=6, f=0.9, f_d=0.1, theta=0.4, sigma_sq=tuple(sigma),
        events=tuple(events), t0=t0, T_total=t0 + horizon, k_objects=k_objects, seed=seed,
    )


@pytest.fixture
def small_cfg():
    return small_scenario()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
