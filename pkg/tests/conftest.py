import numpy as np
import pytest
from hypothesis import settings

from dualdo.ambient import Laplacian, NonlinearitySpec, SampleSpace, SpatialGrid
from dualdo.core import LowRankState, Problem
from dualdo.problems import linear_example

settings.register_profile("dualdo", max_examples=40, deadline=None)
settings.load_profile("dualdo")


def small_problem(Q=7, n=9, seed=0, f="tanh", nu=0.3):
    """Tiny random problem for brute-force comparisons."""
    rng = np.random.default_rng(seed)
    grid = SpatialGrid(n)
    samples = SampleSpace.monte_carlo(Q, dim=2, seed=seed)
    spec = NonlinearitySpec(
        a=rng.uniform(-1, 1, (Q, n)), b=rng.uniform(0.5, 1.5, (Q, n)), c=rng.standard_normal((Q, n)), f=f
    )
    u0 = rng.standard_normal((Q, n))
    return Problem(grid, samples, Laplacian(grid, nu), spec, u0, name="small")


def random_state(problem, S, seed=0, t=0.0):
    """Orthonormal Y (w.r.t. the sample weights) and random U."""
    rng = np.random.default_rng(seed)
    Q, n = problem.samples.size, problem.grid.n
    sw = np.sqrt(problem.samples.weights)
    A = rng.standard_normal((Q, S)) * sw[:, None]
    Qm, _ = np.linalg.qr(A)
    Y = (Qm / sw[:, None]).T
    U = rng.standard_normal((S, n))
    return LowRankState(U=U, Y=Y, t=t)


@pytest.fixture
def tiny():
    return small_problem()


@pytest.fixture(scope="session")
def linear():
    return linear_example()


ACCEPTANCE_LINES = []


def record_acceptance(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
