import numpy as np
import pytest

from gmtrj.core import ChainState, RngStream
from gmtrj.quad import LocalExpansion
from gmtrj.samplers import SAME_DESTINATION, MTMInvWeights, StepRecord, multiple_try_step

ACCEPTANCE_LINES: list[str] = []


class GaussianTarget:
    """Independent N(mean_m, cov_m) in each model with log model weights."""

    def __init__(self, means, covs, log_w=None):
        self.means = {m: np.asarray(v, dtype=float) for m, v in means.items()}
        self.covs = {m: np.asarray(c, dtype=float) for m, c in covs.items()}
        self.prec = {m: np.linalg.inv(c) for m, c in self.covs.items()}
        self.log_w = log_w or {m: 0.0 for m in means}

    def log_target(self, state):
        m = state.model
        d = state.params - self.means[m]
        _, logdet = np.linalg.slogdet(self.covs[m])
        return float(self.log_w[m] - 0.5 * d @ self.prec[m] @ d - 0.5 * logdet - 0.5 * len(d) * np.log(2 * np.pi))

    def expansion(self, model, point):
        point = np.asarray(point, dtype=float)
        score = -self.prec[model] @ (point - self.means[model])
        return LocalExpansion(point, score, -self.prec[model])

    def embed(self, params, from_model, to_model):
        return np.asarray(params, dtype=float)


def paired_log_alphas(source_cls, state, seed, data, priors, target, settings):
    """log alpha of a single-try up move and of the down move that undoes it."""
    up = source_cls(True, SAME_DESTINATION, data, priors, settings)
    rec = StepRecord()
    multiple_try_step(RngStream(seed), state, 1, up, MTMInvWeights(), target, record=rec)
    fwd = rec.forward.trials[0]
    y = fwd.state
    down = source_cls(False, SAME_DESTINATION, data, priors, settings)
    info = {"pair": fwd.info.get("pair"), "c_star": fwd.info.get("c_star"), "class": state.C}
    down._chosen = type(fwd)(state, 0.0, 0.0, info)
    undo = up.density(y, state)
    redo = down.density(state, y)
    back = (target.log_target(state) + redo.log_q) - (target.log_target(y) + undo.log_q) + undo.log_jac
    return rec.log_alpha, back


@pytest.fixture
def gauss2():
    return GaussianTarget({1: [0.3, -0.2]}, {1: [[1.0, 0.4], [0.4, 0.8]]})


@pytest.fixture
def origin2():
    return ChainState(1, [0.0, 0.0])


@pytest.fixture
def report():
    """Record one summary line per acceptance criterion."""
    def add(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
