"""Ready-made problems on ``(-1, 1)``-uniform Monte Carlo sample spaces.

All use ``F(v) = a * f(v * b) + c`` with bounded ``f'`` and the Dirichlet
Laplacian on a 1D grid.
"""

from __future__ import annotations

import numpy as np

from .ambient import Laplacian, NonlinearitySpec, SampleSpace, SpatialGrid
from .core import Problem

__all__ = [
    "PROBLEMS",
    "make_problem",
    "linear_example",
    "tanh_example",
    "zero_forcing",
    "exact_rank2",
    "collapse",
    "collapse_time",
]


def _setup(n, n_samples, seed, domain, nu, dim=4):
    grid = SpatialGrid(n, tuple(domain))
    samples = SampleSpace.monte_carlo(n_samples, dim=dim, seed=seed)
    return grid, samples, Laplacian(grid, nu), samples.points


def _smooth_u0(grid, xi, amps=(1.0, 0.5, 0.3, 0.2, 0.1)):
    """``sin(pi x) + sum_k amp_k xi_k sin((k+1) pi x)``, rank ``len(amps)``."""
    u0 = amps[0] * np.outer(np.ones(len(xi)), grid.sine_mode(1))
    order = [0, 2, 3, 1]
    for k, amp in enumerate(amps[1:]):
        u0 = u0 + amp * np.outer(xi[:, order[k % 4]], grid.sine_mode(k + 2))
    return u0


def linear_example(n=64, n_samples=200, seed=0, domain=(0.0, 1.0), nu=0.05, a0=0.5, a1=0.5, c0=1.0):
    """``F(v) = a v + c`` with ``a(omega)`` constant in space and smooth random ``c``."""
    grid, samples, lap, xi = _setup(n, n_samples, seed, domain, nu)
    Q = samples.size
    a = np.repeat((a0 + a1 * xi[:, 0])[:, None], n, axis=1)
    c = c0 * np.outer(1.0 + 0.5 * xi[:, 1], grid.sine_mode(1))
    spec = NonlinearitySpec(a=a, b=np.ones((Q, n)), c=c, f="identity")
    return Problem(grid, samples, lap, spec, _smooth_u0(grid, xi), name="linear")


def tanh_example(n=64, n_samples=200, seed=0, domain=(0.0, 1.0), nu=0.05, a0=1.0, a1=0.5, c0=0.5):
    """Multiplicative and additive noise with ``f = tanh``."""
    grid, samples, lap, xi = _setup(n, n_samples, seed, domain, nu)
    x = grid.x
    a = a0 + a1 * np.outer(xi[:, 0], np.cos(np.pi * x))
    b = 1.0 + 0.3 * np.outer(xi[:, 1], np.ones(n))
    c = c0 * np.outer(xi[:, 2], grid.sine_mode(1))
    spec = NonlinearitySpec(a=a, b=b, c=c, f="tanh")
    return Problem(grid, samples, lap, spec, _smooth_u0(grid, xi), name="tanh")


def zero_forcing(n=64, n_samples=200, seed=0, domain=(0.0, 1.0), nu=0.05):
    """``F = 0``: pure diffusion of a random initial field."""
    grid, samples, lap, xi = _setup(n, n_samples, seed, domain, nu)
    Q = samples.size
    z = np.zeros((Q, n))
    spec = NonlinearitySpec(a=z, b=np.ones((Q, n)), c=z, f="identity")
    return Problem(grid, samples, lap, spec, _smooth_u0(grid, xi), name="zero")


def exact_rank2(n=64, n_samples=200, seed=0, domain=(0.0, 1.0), nu=0.05, a0=0.5, c0=1.0):
    """Deterministic ``a`` and ``c`` with ``u0 = g1 + xi g2``: the solution stays rank 2."""
    grid, samples, lap, xi = _setup(n, n_samples, seed, domain, nu)
    Q = samples.size
    a = np.full((Q, n), float(a0))
    c = c0 * np.outer(np.ones(Q), grid.sine_mode(1))
    spec = NonlinearitySpec(a=a, b=np.ones((Q, n)), c=c, f="identity")
    u0 = np.outer(np.ones(Q), grid.sine_mode(1)) + 0.5 * np.outer(xi[:, 0], grid.sine_mode(2))
    return Problem(grid, samples, lap, spec, u0, name="exact_rank2")


def collapse(n=64, n_samples=200, seed=0, domain=(0.0, 1.0), nu=0.05, kappa=2.0):
    """Two deterministic modes collapse in finite time.

    ``u0 = g1 + xi g2`` and ``F = -kappa xi g2``.  The ``xi g2`` coefficient
    solves ``beta' = -mu beta - kappa`` with ``mu`` the second Dirichlet
    eigenvalue, so it reaches zero at ``ln(1 + mu/kappa)/mu`` and ``Z_U``
    becomes singular there.
    """
    grid, samples, lap, xi = _setup(n, n_samples, seed, domain, nu)
    Q = samples.size
    g2 = grid.sine_mode(2)
    c = -kappa * np.outer(xi[:, 0], g2)
    spec = NonlinearitySpec(a=np.zeros((Q, n)), b=np.ones((Q, n)), c=c, f="identity")
    u0 = np.outer(np.ones(Q), grid.sine_mode(1)) + np.outer(xi[:, 0], g2)
    return Problem(grid, samples, lap, spec, u0, name="collapse")


def collapse_time(problem: Problem, kappa: float = 2.0) -> float:
    """Continuous-time collapse instant of :func:`collapse` for the discrete Laplacian."""
    mu = problem.laplacian.eigenvalues()[1]
    return float(np.log1p(mu / kappa) / mu)


PROBLEMS = {
    "linear": linear_example,
    "tanh": tanh_example,
    "zero": zero_forcing,
    "exact_rank2": exact_rank2,
    "collapse": collapse,
}


def make_problem(kind: str, **params) -> Problem:
    try:
        factory = PROBLEMS[kind]
    except KeyError:
        raise ValueError(f"unknown problem kind {kind!r}; expected one of {sorted(PROBLEMS)}")
    return factory(**params)
