"""Discretization of the ambient space L2(Omega; H).

Random fields are stored as ``(Q, n)`` arrays: row ``q`` is the spatial field
attached to sample point ``q``.  Deterministic spatial fields are length-``n``
vectors over the interior nodes of a uniform 1D grid with homogeneous
Dirichlet conditions, and random variables are length-``Q`` vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.fft import dst, idst
from scipy.linalg import solve_banded

__all__ = [
    "SampleSpace",
    "SpatialGrid",
    "Laplacian",
    "NonlinearitySpec",
    "inner_h",
    "norm_h",
    "expect",
    "inner_l2omega_h",
    "norm_l2omega_h",
    "eval_f_nonlinear",
]


@dataclass(frozen=True)
class SampleSpace:
    """Finite probability space: sample points with nonnegative weights."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size < 1:
            raise ValueError("weights must be a non-empty 1D array")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > 1e-14:
            raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
        pts = np.asarray(self.points)
        if len(pts) != w.size:
            raise ValueError("points and weights differ in length")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "points", pts)

    @property
    def size(self) -> int:
        return self.weights.size

    @classmethod
    def monte_carlo(cls, n_samples: int, dim: int = 1, seed: int = 0) -> "SampleSpace":
        """Uniform(-1, 1)^dim draws with equal weights."""
        if n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        rng = np.random.default_rng(seed)
        pts = rng.uniform(-1.0, 1.0, size=(n_samples, dim))
        w = np.full(n_samples, 1.0 / n_samples)
        # equal weights may miss sum == 1 by an ulp; push the residual into the last entry
        w[-1] = 1.0 - w[:-1].sum()
        return cls(points=pts, weights=w)

    @classmethod
    def gauss_legendre(cls, n_samples: int) -> "SampleSpace":
        """Gauss-Legendre nodes for the uniform law on (-1, 1)."""
        x, w = np.polynomial.legendre.leggauss(n_samples)
        w = w / 2.0
        w[-1] = 1.0 - w[:-1].sum()
        return cls(points=x[:, None], weights=w)

    def restrict(self, index) -> "SampleSpace":
        """Sub-sample space on ``index``, weights renormalized."""
        w = self.weights[index]
        w = w / w.sum()
        w[-1] = 1.0 - w[:-1].sum()
        return SampleSpace(points=self.points[index], weights=w)


@dataclass(frozen=True)
class SpatialGrid:
    """Interior nodes of a uniform grid on ``[a, b]``."""

    n: int
    domain: tuple = (0.0, 1.0)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("grid needs n >= 2 interior nodes")
        a, b = map(float, self.domain)
        if not b > a:
            raise ValueError("domain must satisfy b > a")
        object.__setattr__(self, "domain", (a, b))

    @property
    def h(self) -> float:
        a, b = self.domain
        return (b - a) / (self.n + 1)

    @property
    def x(self) -> np.ndarray:
        a, _ = self.domain
        return a + self.h * np.arange(1, self.n + 1)

    def sine_mode(self, k: int) -> np.ndarray:
        """k-th Dirichlet eigenvector sampled at the nodes (unnormalized)."""
        a, b = self.domain
        return np.sin(k * np.pi * (self.x - a) / (b - a))


def inner_h(f, g, grid: SpatialGrid):
    """Discrete L2(D) inner product ``h * sum_i f_i g_i`` along the last axis.

    Broadcasts over leading axes, so ``inner_h(U, V, grid)`` with ``(S, n)``
    inputs returns the row-wise products.
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape[-1] != grid.n or g.shape[-1] != grid.n:
        raise ValueError(
            f"spatial dimension mismatch: {f.shape[-1]}, {g.shape[-1]} vs grid n={grid.n}"
        )
    return grid.h * np.einsum("...i,...i->...", f, g)


def norm_h(f, grid: SpatialGrid):
    return np.sqrt(inner_h(f, f, grid))


def expect(x, samples: SampleSpace):
    """Weighted mean over the sample axis (axis 0)."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] != samples.size:
        raise ValueError(f"expected {samples.size} samples, got {x.shape[0]}")
    return np.tensordot(samples.weights, x, axes=(0, 0))


def inner_l2omega_h(u, v, samples: SampleSpace, grid: SpatialGrid) -> float:
    """``E[<u, v>]`` for random fields of shape ``(Q, n)``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.shape != (samples.size, grid.n):
        raise ValueError(f"shape mismatch: {u.shape} vs {v.shape}")
    return float(expect(inner_h(u, v, grid), samples))


def norm_l2omega_h(u, samples: SampleSpace, grid: SpatialGrid) -> float:
    return float(np.sqrt(max(inner_l2omega_h(u, u, samples, grid), 0.0)))


class Laplacian:
    """``nu`` times the 3-point Dirichlet Laplacian on ``grid``.

    Acts along the last axis of its argument.
    """

    def __init__(self, grid: SpatialGrid, nu: float = 1.0):
        if nu < 0:
            raise ValueError("diffusion coefficient nu must be nonnegative")
        self.grid = grid
        self.nu = float(nu)

    def __repr__(self):
        return f"Laplacian(n={self.grid.n}, nu={self.nu})"

    def apply(self, f):
        f = np.asarray(f, dtype=float)
        if f.shape[-1] != self.grid.n:
            raise ValueError("spatial dimension mismatch")
        out = -2.0 * f
        out[..., 1:] += f[..., :-1]
        out[..., :-1] += f[..., 1:]
        return (self.nu / self.grid.h**2) * out

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues of ``-Lambda``, mode ``k = 1..n`` in order."""
        n, h = self.grid.n, self.grid.h
        k = np.arange(1, n + 1)
        return self.nu * (4.0 / h**2) * np.sin(k * np.pi / (2 * (n + 1))) ** 2

    def solve_shifted(self, g, alpha: float):
        """Solve ``(I - alpha * Lambda) f = g`` along the last axis."""
        if not alpha > 0:
            raise ValueError(f"alpha must be positive, got {alpha!r}")
        g = np.asarray(g, dtype=float)
        n = self.grid.n
        if g.shape[-1] != n:
            raise ValueError("spatial dimension mismatch")
        r = alpha * self.nu / self.grid.h**2
        ab = np.empty((3, n))
        ab[0, :] = -r
        ab[1, :] = 1.0 + 2.0 * r
        ab[2, :] = -r
        rhs = g.reshape(-1, n).T
        f = solve_banded((1, 1), ab, rhs, check_finite=False)
        return f.T.reshape(g.shape)

    def semigroup(self, g, t: float):
        """Exact ``exp(t * Lambda) g`` through the type-I sine transform."""
        g = np.asarray(g, dtype=float)
        if t == 0:
            return g.copy()
        coeff = dst(g, type=1, axis=-1)
        coeff *= np.exp(-t * self.eigenvalues())
        return idst(coeff, type=1, axis=-1)


_BOUNDED_F = {
    # tag: (f, sup |f'|)
    "identity": (lambda s: s, 1.0),
    "tanh": (np.tanh, 1.0),
    "sin": (np.sin, 1.0),
}


@dataclass(frozen=True)
class NonlinearitySpec:
    """``F(v) = a * f(v * b) + c`` with pointwise products.

    ``a``, ``b``, ``c`` are broadcastable to ``(Q, n)``.  Custom ``f`` must come
    with a declared bound on ``|f'|``; unknown tags without one are rejected.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    f: str = "identity"
    custom: Optional[Callable] = field(default=None, repr=False, compare=False)
    fprime_bound: Optional[float] = None

    def __post_init__(self):
        for name in ("a", "b", "c"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, arr)
        if self.f == "custom":
            if self.custom is None or self.fprime_bound is None:
                raise ValueError("custom f needs a callable and fprime_bound")
            if not np.isfinite(self.fprime_bound) or self.fprime_bound < 0:
                raise ValueError("fprime_bound must be finite and >= 0")
        elif self.f not in _BOUNDED_F:
            raise ValueError(f"unknown nonlinearity tag {self.f!r}")

    @property
    def func(self) -> Callable:
        return self.custom if self.f == "custom" else _BOUNDED_F[self.f][0]

    @property
    def fprime_sup(self) -> float:
        return float(self.fprime_bound if self.f == "custom" else _BOUNDED_F[self.f][1])

    def scaled(self, factor: float) -> "NonlinearitySpec":
        """Same nonlinearity with ``a`` and ``c`` multiplied by ``factor``."""
        return NonlinearitySpec(
            a=factor * self.a,
            b=self.b,
            c=factor * self.c,
            f=self.f,
            custom=self.custom,
            fprime_bound=self.fprime_bound,
        )

    # -- constants used by the stability and growth checks -----------------

    def lipschitz(self) -> float:
        """``||a||_inf ||b||_inf sup|f'|``."""
        return float(np.max(np.abs(self.a)) * np.max(np.abs(self.b)) * self.fprime_sup)

    def offset_norm(self, samples: SampleSpace, grid: SpatialGrid) -> float:
        """``|| |a| |f(0)| + |c| ||`` in L2(Omega; H)."""
        f0 = abs(float(self.func(np.float64(0.0))))
        g = np.broadcast_to(np.abs(self.a) * f0 + np.abs(self.c), (samples.size, grid.n))
        return norm_l2omega_h(g, samples, grid)

    def linear_growth(self, samples: SampleSpace, grid: SpatialGrid) -> float:
        """``C'_F`` with ``||F(v)|| <= C'_F (1 + ||v||)``."""
        return max(self.lipschitz(), self.offset_norm(samples, grid))

    def stability_constant(self, samples: SampleSpace, grid: SpatialGrid) -> float:
        """``C_{Lambda,F}`` with ``E<Lambda v + F(v), v> <= C (1 + ||v||^2)``.

        Pointwise ``F(v) v <= (|a||f(0)| + |c|)|v| + L v^2`` with
        ``L = lipschitz()``.  Cauchy-Schwarz and ``s <= (1 + s^2) / 2`` give
        ``E<F(v), v> <= K ||v|| + L ||v||^2 <= (L + K/2)(1 + ||v||^2)`` where
        ``K = offset_norm()``; ``<Lambda v, v> <= 0`` drops the linear part.
        """
        return self.lipschitz() + 0.5 * self.offset_norm(samples, grid)

    def lambda_growth_constant(self, samples: SampleSpace, grid: SpatialGrid, lap: Laplacian):
        """``C_F`` with ``||Lambda F(v)|| <= C_F (1 + ||Lambda v||)``, or None.

        Only available for ``f = identity``, ``b = 1`` and ``a`` constant in
        space per sample: then ``Lambda F(v) = a Lambda v + Lambda c`` exactly on
        the grid and ``C_F = max(||a||_inf, ||Lambda c||)``.
        """
        if self.f != "identity" or not np.all(self.b == 1.0):
            return None
        a = np.broadcast_to(self.a, (samples.size, grid.n))
        if not np.all(a == a[:, :1]):
            return None
        c = np.broadcast_to(self.c, (samples.size, grid.n))
        lam_c = norm_l2omega_h(lap.apply(c), samples, grid)
        return max(float(np.max(np.abs(a))), lam_c)


def eval_f_nonlinear(u, spec: NonlinearitySpec):
    """Pointwise ``a * f(u * b) + c``."""
    u = np.asarray(u, dtype=float)
    for name in ("a", "b", "c"):
        arr = getattr(spec, name)
        try:
            ok = np.broadcast_shapes(arr.shape, u.shape) == u.shape
        except ValueError:
            ok = False
        if not ok:
            raise ValueError(f"{name} with shape {arr.shape} does not match field {u.shape}")
    return spec.a * spec.func(u * spec.b) + spec.c
