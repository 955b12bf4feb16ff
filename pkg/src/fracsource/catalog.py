"""Named analytic inputs for the solvers and the CLI.

All catalog fields are smooth closed forms whose regularity and boundary
compatibility can be guaranteed symbolically, which is what the solution
theory requires of the data.  Space-time sources are stored as sums of
separable terms g(x, y) * h(t) so each spatial factor is projected once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fractional import FractionalOperatorSpec, TimeGrid, TimeSeries
from .spectral import (
    Field2D,
    SpectralCoefficients,
    enumerate_modes,
    field_mean,
    project,
    snap_tiny,
)


class UnknownCatalogName(KeyError):
    """Requested catalog entry does not exist."""


# spatial fields --------------------------------------------------------------


def _poly_field(terms) -> Field2D:
    terms = [(float(c), int(px), int(py)) for c, px, py in terms]

    def fn(x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        out = np.zeros(x.shape)
        for c, px, py in terms:
            out = out + c * x**px * y**py
        return out

    return Field2D.analytic(fn, f"poly {terms}")


def _cos_mode_field(n: int, k: int, amplitude: float = 1.0) -> Field2D:
    n, k = int(n), int(k)

    def fn(x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return amplitude * np.cos(2 * n * math.pi * x) * np.cos(k * math.pi * y)

    return Field2D.analytic(fn, f"cos_mode n={n} k={k}")


def _cos_exp_field(amplitude: float = 1.0) -> Field2D:
    # (1 + cos(2 pi x)) exp(cos(pi y)): periodic-compatible in x, all odd
    # y-derivatives vanish at y = 0 and y = 1, coefficients decay
    # super-algebraically in both indices.
    def fn(x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return amplitude * (1.0 + np.cos(2 * math.pi * x)) * np.exp(np.cos(math.pi * y))

    return Field2D.analytic(fn, "cos_exp")


_FIELDS = {
    "constant": lambda value=1.0: Field2D.constant(float(value)),
    "poly": lambda terms=((1.0, 0, 0),): _poly_field(terms),
    "cos_mode": _cos_mode_field,
    "cos_exp": _cos_exp_field,
}


def make_field(name: str, params: dict | None = None) -> Field2D:
    """Instantiate a named spatial field from the catalog."""
    try:
        ctor = _FIELDS[name]
    except KeyError:
        raise UnknownCatalogName(
            f"unknown field {name!r}; available: {sorted(_FIELDS)}"
        ) from None
    return ctor(**(params or {}))


# time amplitudes --------------------------------------------------------------


def _poly_t(coeffs=(1.0,)):
    coeffs = [float(c) for c in coeffs]

    def fn(t):
        t = np.asarray(t, dtype=float)
        return sum(c * t**p for p, c in enumerate(coeffs))

    return fn


def _exp_t(rate=1.0, amplitude=1.0):
    def fn(t):
        return amplitude * np.exp(rate * np.asarray(t, dtype=float))

    return fn


_TIME_FNS = {
    "constant": lambda value=1.0: _poly_t((value,)),
    "poly_t": _poly_t,
    "exp_t": _exp_t,
}


def make_time_fn(name: str, params: dict | None = None):
    """Instantiate a named time amplitude from the catalog."""
    try:
        ctor = _TIME_FNS[name]
    except KeyError:
        raise UnknownCatalogName(
            f"unknown time amplitude {name!r}; available: {sorted(_TIME_FNS)}"
        ) from None
    return ctor(**(params or {}))


# space-time sources -----------------------------------------------------------


@dataclass
class SpaceTimeField:
    """Source term f(x, y, t) stored as a sum of separable terms."""

    terms: tuple  # of (Field2D, callable of t)

    @classmethod
    def static(cls, field: Field2D) -> "SpaceTimeField":
        return cls(terms=((field, _poly_t((1.0,))),))

    @classmethod
    def separable(cls, field: Field2D, time_fn) -> "SpaceTimeField":
        return cls(terms=((field, time_fn),))

    def __call__(self, x, y, t: float) -> np.ndarray:
        out = None
        for g, h in self.terms:
            v = g(x, y) * float(np.asarray(h(t)))
            out = v if out is None else out + v
        return out

    def mean_series(self, grid: TimeGrid) -> TimeSeries:
        """Spatial mean of f at every grid node."""
        vals = np.zeros(grid.N + 1)
        for g, h in self.terms:
            vals += field_mean(g) * np.asarray(h(grid.nodes), dtype=float)
        return TimeSeries(grid, vals)

    def coeff_series(
        self, grid: TimeGrid, n_max: int, k_max: int
    ) -> SpectralCoefficients:
        """Projections f_nk(t) onto the conjugate family as TimeSeries."""
        out = SpectralCoefficients(n_max, k_max)
        hvals = [np.asarray(h(grid.nodes), dtype=float) for _, h in self.terms]
        modes = enumerate_modes(n_max, k_max)
        spatial = []
        for g, _ in self.terms:
            cs = {index: project(g, index) for index in modes}
            snap_tiny(cs)
            spatial.append(cs)
        for index in modes:
            vals = np.zeros(grid.N + 1)
            for cs, hv in zip(spatial, hvals):
                if cs[index] != 0.0:
                    vals += cs[index] * hv
            out[index] = TimeSeries(grid, vals)
        return out


# manufactured solutions --------------------------------------------------------


def manufactured_quadratic(op: FractionalOperatorSpec):
    """Manufactured data with exact solution u*(x,y,t) = (1+t^2) cos(2 pi x) cos(pi y).

    The spatial factor satisfies both the nonlocal x-conditions and the
    homogeneous y-conditions, so substituting u* into the equation yields the
    forcing amplitude exactly; the source is returned with a(t) = 1 and the
    full amplitude folded into f's time factor.
    """
    kappa = (2 * math.pi) ** 4 + math.pi**4

    def time_amp(t):
        t = np.asarray(t, dtype=float)
        out = kappa * (1.0 + t**2)
        for psi, beta in op.all_terms():
            out = out + psi * 2.0 * t ** (2.0 - beta) / math.gamma(3.0 - beta)
        return out

    phi = _cos_mode_field(1, 1)
    source = SpaceTimeField.separable(_cos_mode_field(1, 1), time_amp)

    def exact(x, y, t):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return (1.0 + float(t) ** 2) * np.cos(2 * math.pi * x) * np.cos(math.pi * y)

    return phi, source, exact
