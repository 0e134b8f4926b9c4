import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))

from equidiv.model import ModelParams  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# headline parameter sets
BASE_SET = ModelParams(mu=2.0, sigma=1.0, delta=0.1, beta=0.2, lmax=1.9, lam=-50.0, alpha=0.5)
REGION = ModelParams(mu=2.0, sigma=1.0, delta=0.1, beta=0.2, lmax=4.0, lam=-10.0, alpha=0.01)
# b* = 0 example: classical threshold zero and lam above Lambda
DEGENERATE = ModelParams(mu=1.0, sigma=2.0, delta=0.5, beta=0.3, lmax=0.5, lam=-0.1, alpha=0.5)
# fast discounting, used where the simulation horizon must stay short
FAST = ModelParams(mu=2.0, sigma=1.0, delta=0.4, beta=0.5, lmax=3.0, lam=-10.0, alpha=0.2)


@st.composite
def model_params(draw, beta_zero=False, lam_zero=False):
    mu = draw(st.floats(0.5, 3.0))
    sigma = draw(st.floats(0.8, 2.0))
    delta = draw(st.floats(0.05, 0.5))
    beta = 0.0 if beta_zero else draw(st.floats(0.05, 1.0))
    lmax = draw(st.floats(0.3, 4.0))
    lam = 0.0 if lam_zero else -draw(st.one_of(st.just(0.0), st.floats(1e-6, 100.0)))
    alpha = draw(st.floats(0.01, 0.99))
    return ModelParams(mu, sigma, delta, beta, lmax, lam, alpha)


def random_params(rng: np.random.Generator, n: int) -> list[ModelParams]:
    out = []
    for _ in range(n):
        out.append(ModelParams(
            mu=rng.uniform(0.5, 3.0), sigma=rng.uniform(0.8, 2.0), delta=rng.uniform(0.05, 0.5),
            beta=rng.uniform(0.05, 1.0), lmax=rng.uniform(0.3, 4.0), lam=-rng.uniform(0.0, 100.0),
            alpha=rng.uniform(0.01, 0.99)))
    return out


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
