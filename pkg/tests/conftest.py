import numpy as np
import pytest

from obcal.experiment import ObservedExperiment


def random_experiment(rng, N=50, k=3, n1=None, binary=False):
    X = rng.normal(size=(N, k))
    n1 = N // 2 if n1 is None else n1
    z = np.zeros(N, dtype=bool)
    z[rng.choice(N, n1, replace=False)] = True
    signal = X @ rng.normal(size=k) + 0.5 * z
    if binary:
        y = (signal + rng.logistic(size=N) > 0).astype(float)
    else:
        y = signal + np.sin(X[:, 0]) + rng.normal(size=N)
    return ObservedExperiment(z=z, y=y, X=X)


def scalar_binary_experiment(rng, N=40, n1=None):
    """Scalar covariate, binary outcome; linear base fits are collinear."""
    x = rng.uniform(-3, 3, size=(N, 1))
    n1 = N // 2 if n1 is None else n1
    z = np.zeros(N, dtype=bool)
    z[rng.choice(N, n1, replace=False)] = True
    y = (rng.uniform(size=N) < 1 / (1 + np.exp(-x[:, 0] + 0.5 * x[:, 0] ** 2 - 1))).astype(float)
    # keep both outcome values in both arms so logistic fits exist
    for arm in (False, True):
        idx = np.flatnonzero(z == arm)
        y[idx[0]], y[idx[1]] = 0.0, 1.0
    return ObservedExperiment(z=z, y=y, X=x)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
