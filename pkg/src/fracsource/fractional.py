"""Discrete fractional calculus on uniformly sampled time signals.

Provides the L1 approximation of the multi-term Caputo derivative, the
piecewise-linear product-integration Riemann-Liouville integral, and the
weakly singular Laplace convolution of a signal against a relaxation kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import roots_jacobi

from .mlf import RelaxationKernelSpec, eval_kernel_grid


class GridTooCoarse(ValueError):
    """Signal grid has too few intervals for the requested operation."""


class InvalidSpec(ValueError):
    """Fractional operator orders violate their ordering constraints."""


class InvalidOrder(ValueError):
    """Riemann-Liouville integration order must be positive."""


class QuadratureFailure(RuntimeError):
    """Convolution quadrature did not stabilize under node doubling."""


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid 0 = t_0 < t_1 < ... < t_N = T."""

    T: float
    N: int

    def __post_init__(self) -> None:
        if self.T <= 0.0:
            raise ValueError(f"horizon must be positive, got {self.T}")
        if self.N < 1:
            raise ValueError(f"need at least one interval, got {self.N}")

    @property
    def tau(self) -> float:
        return self.T / self.N

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.N + 1)


@dataclass
class TimeSeries:
    """Function of time sampled on a uniform grid."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.N + 1,):
            raise ValueError(
                f"expected {self.grid.N + 1} values, got {self.values.shape}"
            )

    @classmethod
    def from_function(cls, grid: TimeGrid, fn) -> "TimeSeries":
        return cls(grid, np.asarray(fn(grid.nodes), dtype=float))

    @classmethod
    def zeros(cls, grid: TimeGrid) -> "TimeSeries":
        return cls(grid, np.zeros(grid.N + 1))

    def __add__(self, other: "TimeSeries") -> "TimeSeries":
        return TimeSeries(self.grid, self.values + other.values)

    def __mul__(self, c: float) -> "TimeSeries":
        return TimeSeries(self.grid, self.values * c)

    __rmul__ = __mul__


@dataclass(frozen=True)
class FractionalOperatorSpec:
    """Multi-term Caputo operator D^alpha + sum_i psi_i D^alpha_i with
    0 < alpha_m < ... < alpha_1 < alpha <= 1 and psi_i >= 0."""

    alpha: float
    terms: tuple[tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise InvalidSpec(f"leading order must be in (0, 1], got {self.alpha}")
        prev = self.alpha
        for psi, alpha_i in self.terms:
            if psi < 0.0:
                raise InvalidSpec(f"weights must be nonnegative, got {psi}")
            if not 0.0 < alpha_i < prev:
                raise InvalidSpec(
                    "orders must satisfy 0 < alpha_m < ... < alpha_1 < alpha"
                )
            prev = alpha_i

    def all_terms(self) -> tuple[tuple[float, float], ...]:
        """Weight/order pairs including the leading unit-weight term."""
        return ((1.0, self.alpha),) + self.terms


def _l1_single(values: np.ndarray, tau: float, alpha: float) -> np.ndarray:
    """L1 approximation of a single Caputo derivative of order alpha <= 1;
    reduces to the first-order backward difference at alpha = 1."""
    du = np.diff(values)
    if alpha == 1.0:
        out = np.empty_like(values)
        out[0] = 0.0
        out[1:] = du / tau
        return out
    n = values.size - 1
    p = np.arange(n)
    b = (p + 1.0) ** (1.0 - alpha) - p ** (1.0 - alpha)
    conv = np.convolve(du, b)[:n]
    out = np.empty_like(values)
    out[0] = 0.0
    out[1:] = conv * tau ** (-alpha) / math.gamma(2.0 - alpha)
    return out


def caputo_multiterm(signal: TimeSeries, op: FractionalOperatorSpec) -> TimeSeries:
    """Apply the multi-term Caputo operator to a sampled signal via the L1
    scheme.  The value at t_0 is reported as 0 by convention."""
    if signal.grid.N < 2:
        raise GridTooCoarse("the L1 scheme needs at least 2 intervals")
    tau = signal.grid.tau
    out = np.zeros(signal.grid.N + 1)
    for psi, alpha in op.all_terms():
        if psi:
            out += psi * _l1_single(signal.values, tau, alpha)
    return TimeSeries(signal.grid, out)


def rl_integral(signal: TimeSeries, xi: float) -> TimeSeries:
    """Riemann-Liouville integral of order xi by product integration of the
    piecewise-linear interpolant (exact for piecewise-linear signals)."""
    if xi <= 0.0:
        raise InvalidOrder(f"integration order must be positive, got {xi}")
    tau = signal.grid.tau
    n = signal.grid.N
    u = signal.values
    du = np.diff(u)
    p = np.arange(n, dtype=float)
    # Interval i contributes u_{i-1} * A_{j-i} + (du_i / tau) * B_{j-i} where
    # A and B are moments of (t_j - s)^(xi - 1) over one interval.
    a = tau**xi * ((p + 1.0) ** xi - p**xi) / xi
    b = tau ** (xi + 1.0) * (
        -(p**xi) / xi + ((p + 1.0) ** (xi + 1.0) - p ** (xi + 1.0)) / (xi * (xi + 1.0))
    )
    conv = np.convolve(u[:-1], a)[:n] + np.convolve(du / tau, b)[:n]
    out = np.empty_like(u)
    out[0] = 0.0
    out[1:] = conv / math.gamma(xi)
    return TimeSeries(signal.grid, out)


# singular convolution -------------------------------------------------------

_JACOBI_NODES = 32
_PANEL_NODES = 16
_PANEL_RATIO = 4.0


@lru_cache(maxsize=256)
def _jacobi_rule(n: int, eta: float) -> tuple[np.ndarray, np.ndarray]:
    # weight (1 + x)^(eta - 1) on [-1, 1]
    return roots_jacobi(n, 0.0, eta - 1.0)


@lru_cache(maxsize=32)
def _legendre_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(n)


class SmoothKernelFactor:
    """Cached evaluator of the smooth factor of a relaxation kernel,
    E(-m_1 s^xi_1, ...) = e(s) * s^(1 - eta), on (0, t_max].

    Built from direct kernel evaluations on a dense logarithmic grid and
    interpolated with a cubic spline in log s; the factor varies slowly on
    that scale, so the spline reproduces direct evaluation to ~1e-9.
    """

    _cache: dict = {}

    def __init__(self, spec: RelaxationKernelSpec, t_max: float,
                 points_per_decade: int = 320):
        spec = spec.reduced()
        self.spec = spec
        self.t_max = t_max
        if not spec.terms:
            self.constant = 1.0 / math.gamma(spec.eta)
            self.spline = None
            return
        self.constant = None
        # Below s_lo every argument satisfies m_j s^xi_j <= 1e-4, so the
        # two-term series expansion is accurate to ~1e-8 there and the spline
        # table only has to cover [s_lo, t_max].
        s_lo = min(
            min((1e-4 / m) ** (1.0 / xi) for m, xi in spec.terms),
            1e-10 * t_max,
        )
        decades = math.log10(t_max / s_lo)
        npts = min(max(int(decades * points_per_decade), 50), 20000)
        s = np.geomspace(s_lo, t_max, npts)
        smooth = eval_kernel_grid(spec, s) * s ** (1.0 - spec.eta)
        self.s_lo = s_lo
        self.spline = CubicSpline(np.log(s), smooth)

    def _expansion(self, s: np.ndarray) -> np.ndarray:
        out = np.full_like(s, 1.0 / math.gamma(self.spec.eta))
        for m, xi in self.spec.terms:
            out -= m * s**xi / math.gamma(self.spec.eta + xi)
        return out

    @classmethod
    def get(cls, spec: RelaxationKernelSpec, t_max: float) -> "SmoothKernelFactor":
        key = (spec.reduced(), float(t_max))
        table = cls._cache.get(key)
        if table is None:
            table = cls(spec, t_max)
            cls._cache[key] = table
        return table

    def __call__(self, s: np.ndarray) -> np.ndarray:
        if self.spline is None:
            return np.full_like(s, self.constant)
        below = s < self.s_lo
        if not np.any(below):
            return self.spline(np.log(s))
        out = np.empty_like(s)
        out[below] = self._expansion(s[below])
        out[~below] = self.spline(np.log(s[~below]))
        return out


def _convolve_at(
    t: float,
    eta: float,
    smooth,
    ginterp,
    scale: float,
    tau: float,
    nq: int,
) -> float:
    """One evaluation of int_0^t g(t - s) s^(eta-1) * smooth(s) ds.

    The Gauss-Jacobi panel carries the power weight s^(eta-1) exactly, but
    the smooth factor itself contains fractional powers s^(xi_j) at the
    origin, so the panel is kept short enough that the factor is constant
    there to well below tolerance; the remainder is covered by geometric
    Gauss-Legendre panels graded toward both endpoints — toward s = 0 for
    the kernel, and toward s = t because g often varies fastest right after
    t = 0 (grading stops at the signal's grid spacing ``tau``, below which
    the interpolant is a single cubic).
    """
    a = t if math.isinf(scale) else 1e-10 * min(t, scale)
    x, w = _jacobi_rule(nq, eta)
    s = a * (x + 1.0) / 2.0
    total = (a / 2.0) ** eta * float(np.dot(w, smooth(s) * ginterp(t - s)))
    if a >= t:
        return total
    mid_pt = t / 2.0
    left = [a]
    while left[-1] * _PANEL_RATIO < mid_pt:
        left.append(left[-1] * _PANEL_RATIO)
    right = [t - mid_pt]  # distances from t, shrinking geometrically
    while right[-1] / _PANEL_RATIO > tau / 2.0:
        right.append(right[-1] / _PANEL_RATIO)
    edges = np.concatenate([left, [mid_pt], t - np.asarray(right[1:]), [t]])
    xg, wg = _legendre_rule(max(nq // 2, 4))
    mid = (edges[1:] + edges[:-1]) / 2.0
    half = (edges[1:] - edges[:-1]) / 2.0
    s = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    vals = s ** (eta - 1.0) * smooth(s) * ginterp(t - s)
    total += float(np.dot(vals, (half[:, None] * wg[None, :]).ravel()))
    return total


def singular_convolve(
    g: TimeSeries,
    spec: RelaxationKernelSpec,
    grid: TimeGrid | None = None,
    validate: bool = True,
) -> TimeSeries:
    """Laplace convolution (g * e)(t_j) with the relaxation kernel ``e``.

    The kernel is factored as s^(eta-1) times a smooth part; the weakly
    singular first panel is handled by Gauss-Jacobi quadrature carrying the
    power weight and the remainder by geometrically graded Gauss-Legendre
    panels (the smooth factor of stiff kernels decays on a scale much shorter
    than the grid spacing).  Signal values between nodes come from a cubic
    spline.  Node counts are doubled once for validation.
    """
    if grid is None:
        grid = g.grid
    spec = spec.reduced()
    eta = spec.eta
    smooth = SmoothKernelFactor.get(spec, grid.T)
    nodes = grid.nodes
    ginterp = CubicSpline(nodes, g.values) if grid.N >= 3 else (
        lambda s: np.interp(s, nodes, g.values)
    )
    scale = spec.decay_scale()

    out = np.zeros(grid.N + 1)
    if not np.any(g.values):
        return TimeSeries(grid, out)
    # A-priori bound on the convolution, max|g| * int_0^T e: node values more
    # than 10 digits below it are accepted on absolute accuracy grounds
    # (relative digits are unrecoverable that far down in doubles).
    bound = abs(
        eval_kernel_grid(spec.with_eta(eta + 1.0), np.asarray([grid.T]))[0]
    ) * np.max(np.abs(g.values))
    for j in range(1, grid.N + 1):
        t = float(nodes[j])
        v = _convolve_at(t, eta, smooth, ginterp, scale, grid.tau, _JACOBI_NODES)
        if validate:
            v2 = _convolve_at(
                t, eta, smooth, ginterp, scale, grid.tau, 2 * _JACOBI_NODES
            )
            if abs(v - v2) > max(1e-7 * abs(v2), 1e-10 * bound):
                raise QuadratureFailure(
                    f"convolution quadrature unstable at t={t:g}: {v:g} vs {v2:g}"
                )
            v = v2
        out[j] = v
    return TimeSeries(grid, out)
