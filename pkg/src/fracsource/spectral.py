"""Bi-orthogonal spectral machinery on the unit square.

The fourth-order operator with value/second-derivative coupling between the
faces x = 0 and x = 1 is not self-adjoint; its root functions come in three
families (indexed Zero / Odd / Even) that pair with a conjugate family into a
bi-orthonormal system.  This module evaluates both families, projects data
onto the conjugate functions, synthesizes fields from coefficients, and fits
coefficient-decay exponents as a regularity diagnostic.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field

from functools import lru_cache

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .fractional import QuadratureFailure, TimeSeries


class MissingCoefficient(KeyError):
    """A mode index inside the truncation box has no stored coefficient."""


class InsufficientData(ValueError):
    """Too few populated shells to fit decay exponents."""


class Family(enum.Enum):
    """The three bi-orthogonal families: indices 0k, (2n-1)k and 2nk."""

    Zero = "zero"
    Odd = "odd"
    Even = "even"


@dataclass(frozen=True, order=True)
class ModeIndex:
    family: Family
    n: int
    k: int

    def __post_init__(self) -> None:
        if self.family is Family.Zero:
            if self.n != 0:
                raise ValueError("family Zero carries no x-index; use n=0")
        elif self.n < 1:
            raise ValueError(f"n must be >= 1 for {self.family}, got {self.n}")
        if self.k < 0:
            raise ValueError(f"k must be >= 0, got {self.k}")


@dataclass(frozen=True)
class EigenData:
    mu_k: float
    lambda_n: float
    sigma_nk: float


def eigen(index: ModeIndex) -> EigenData:
    """Eigenvalues mu_k = (k pi)^4, lambda_n = (2 n pi)^4 and their sum."""
    mu = (index.k * math.pi) ** 4
    lam = 0.0 if index.family is Family.Zero else (2 * index.n * math.pi) ** 4
    return EigenData(mu_k=mu, lambda_n=lam, sigma_nk=mu + lam)


def _y_factor(k: int, y) -> np.ndarray:
    # k = 0 takes normalization 1 (the constant member of the Neumann cosine
    # basis); k >= 1 takes the usual sqrt(2) normalization.
    if k == 0:
        return np.ones_like(np.asarray(y, dtype=float))
    return math.sqrt(2.0) * np.cos(k * math.pi * np.asarray(y, dtype=float))


def eval_Z(index: ModeIndex, x, y) -> np.ndarray:
    """Evaluate the root function Z at points of the closed unit square."""
    x = np.asarray(x, dtype=float)
    if index.family is Family.Zero:
        xf = np.ones_like(x)
    elif index.family is Family.Odd:
        xf = np.cos(2 * index.n * math.pi * x)
    else:
        xf = x * np.sin(2 * index.n * math.pi * x)
    return xf * _y_factor(index.k, y)


def eval_W(index: ModeIndex, x, y) -> np.ndarray:
    """Evaluate the conjugate function W paired with Z at the same index."""
    x = np.asarray(x, dtype=float)
    if index.family is Family.Zero:
        xf = 2.0 * (1.0 - x)
    elif index.family is Family.Odd:
        xf = 4.0 * (1.0 - x) * np.cos(2 * index.n * math.pi * x)
    else:
        xf = 4.0 * np.sin(2 * index.n * math.pi * x)
    return xf * _y_factor(index.k, y)


def mode_mean(index: ModeIndex) -> float:
    """Closed-form integral of Z over the unit square.

    Only k = 0 modes have nonzero mean: the Zero mode is the constant 1 and
    the Even modes integrate to -1/(2 n pi); the Odd cosines are mean-free.
    """
    if index.k != 0:
        return 0.0
    if index.family is Family.Zero:
        return 1.0
    if index.family is Family.Even:
        return -1.0 / (2 * index.n * math.pi)
    return 0.0


def enumerate_modes(n_max: int, k_max: int) -> list[ModeIndex]:
    """All mode indices in the truncation box, Zero then Odd/Even per n."""
    out = [ModeIndex(Family.Zero, 0, k) for k in range(k_max + 1)]
    for n in range(1, n_max + 1):
        for k in range(k_max + 1):
            out.append(ModeIndex(Family.Odd, n, k))
            out.append(ModeIndex(Family.Even, n, k))
    return out


# fields ----------------------------------------------------------------------


class Field2D:
    """Scalar field on the closed unit square.

    Either wraps an analytic callable of vectorized (x, y) or a tabulated
    rectangular grid of values with bilinear interpolation.
    """

    def __init__(self, fn, description: str = "analytic"):
        self._fn = fn
        self.description = description

    @classmethod
    def analytic(cls, fn, description: str = "analytic") -> "Field2D":
        return cls(fn, description)

    @classmethod
    def constant(cls, c: float) -> "Field2D":
        return cls(lambda x, y: np.broadcast_arrays(
            np.full_like(np.asarray(x, dtype=float), c), y)[0], f"constant {c}")

    @classmethod
    def tabulated(cls, xs: np.ndarray, ys: np.ndarray, values: np.ndarray) -> "Field2D":
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        values = np.asarray(values, dtype=float)
        if xs.size < 2 or ys.size < 2:
            raise ValueError("tabulated fields need at least a 2x2 grid")
        if values.shape != (xs.size, ys.size):
            raise ValueError(
                f"value grid shape {values.shape} does not match axes "
                f"({xs.size}, {ys.size})"
            )
        interp = RegularGridInterpolator(
            (xs, ys), values, method="linear", bounds_error=False, fill_value=None
        )

        def fn(x, y):
            x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
            pts = np.stack([x.ravel(), y.ravel()], axis=-1)
            return interp(pts).reshape(x.shape)

        return cls(fn, f"tabulated {xs.size}x{ys.size}")

    @classmethod
    def from_csv(cls, path) -> "Field2D":
        """Load a tabulated field from CSV.

        Two layouts are accepted: a header ``x,y,value`` followed by one row
        per grid point (the points must form a full rectangular grid), or a
        bare rectangular block of values assumed uniform over the square with
        rows indexing x and columns indexing y.
        """
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
        if not rows:
            raise ValueError(f"{path}: empty field file")
        header = [c.strip().lower() for c in rows[0]]
        if header == ["x", "y", "value"]:
            data = np.array([[float(c) for c in r] for r in rows[1:]])
            xs = np.unique(data[:, 0])
            ys = np.unique(data[:, 1])
            if data.shape[0] != xs.size * ys.size:
                raise ValueError(f"{path}: points do not form a full grid")
            grid = np.full((xs.size, ys.size), np.nan)
            ix = np.searchsorted(xs, data[:, 0])
            iy = np.searchsorted(ys, data[:, 1])
            grid[ix, iy] = data[:, 2]
            if np.any(np.isnan(grid)):
                raise ValueError(f"{path}: grid has missing entries")
            return cls.tabulated(xs, ys, grid)
        block = np.array([[float(c) for c in r] for r in rows])
        xs = np.linspace(0.0, 1.0, block.shape[0])
        ys = np.linspace(0.0, 1.0, block.shape[1])
        return cls.tabulated(xs, ys, block)

    def __call__(self, x, y) -> np.ndarray:
        return np.asarray(self._fn(x, y), dtype=float)


# projection and synthesis ----------------------------------------------------


@lru_cache(maxsize=64)
def _gauss01(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1.0) / 2.0, w / 2.0


def _project_once(field: Field2D, index: ModeIndex, q: int) -> float:
    gx, wx = _gauss01(q)
    gy, wy = _gauss01(q)
    X, Y = np.meshgrid(gx, gy, indexing="ij")
    vals = field(X, Y) * eval_W(index, X, Y)
    return float(wx @ vals @ wy)


def project(field: Field2D, index: ModeIndex, tol: float = 1e-9) -> float:
    """Coefficient <field, W_index> by tensor Gauss-Legendre quadrature.

    The per-axis node count grows with the mode frequency so the oscillatory
    factors stay resolved; the count is doubled once and the two results must
    agree to ``tol`` absolutely.
    """
    q = max(32, 4 * max(2 * index.n, index.k))
    v1 = _project_once(field, index, q)
    v2 = _project_once(field, index, 2 * q)
    if abs(v1 - v2) > tol:
        raise QuadratureFailure(
            f"projection onto {index} unstable under node doubling: "
            f"{v1:.12g} vs {v2:.12g}"
        )
    return v2


def snap_tiny(coeff_map: dict, rel: float = 1e-12) -> None:
    """Zero out scalar coefficients below ``rel`` of the largest magnitude.

    Projection values that far down are quadrature roundoff, not data, and
    letting them seed mode trajectories produces cancellation-dominated
    convolutions that cannot be validated.
    """
    mags = [abs(v) for v in coeff_map.values() if isinstance(v, (int, float))]
    if not mags:
        return
    floor = rel * max(mags)
    for key, value in coeff_map.items():
        if isinstance(value, (int, float)) and abs(value) <= floor:
            coeff_map[key] = 0.0


def _mean_once(field: Field2D, q: int) -> float:
    gx, wx = _gauss01(q)
    gy, wy = _gauss01(q)
    X, Y = np.meshgrid(gx, gy, indexing="ij")
    return float(wx @ field(X, Y) @ wy)


def field_mean(field: Field2D, tol: float = 1e-9) -> float:
    """Integral of the field over the unit square (tensor Gauss-Legendre
    with one node-doubling validation)."""
    v1 = _mean_once(field, 32)
    v2 = _mean_once(field, 64)
    if abs(v1 - v2) > tol:
        raise QuadratureFailure(
            f"field mean unstable under node doubling: {v1:.12g} vs {v2:.12g}"
        )
    return v2


@dataclass
class SpectralCoefficients:
    """Dense coefficient storage over a truncation box.

    Values are floats for static data (projections of phi) or TimeSeries for
    time-dependent data (source coefficients, mode trajectories).
    """

    N_max: int
    K_max: int
    data: dict = field(default_factory=dict)

    def __setitem__(self, index: ModeIndex, value) -> None:
        if index.n > self.N_max or index.k > self.K_max:
            raise ValueError(f"{index} outside truncation box")
        self.data[index] = value

    def __getitem__(self, index: ModeIndex):
        try:
            return self.data[index]
        except KeyError:
            raise MissingCoefficient(str(index)) from None

    def __contains__(self, index: ModeIndex) -> bool:
        return index in self.data

    def indices(self) -> list[ModeIndex]:
        return sorted(self.data, key=lambda i: (i.family.value, i.n, i.k))

    @classmethod
    def project_field(
        cls, field2d: Field2D, n_max: int, k_max: int
    ) -> "SpectralCoefficients":
        out = cls(n_max, k_max)
        for index in enumerate_modes(n_max, k_max):
            out[index] = project(field2d, index)
        snap_tiny(out.data)
        return out


@dataclass
class SynthesisResult:
    values: np.ndarray
    tail_indicator: float


def _coefficient_at(value, time_index) -> float:
    if isinstance(value, TimeSeries):
        if time_index is None:
            raise ValueError("time-dependent coefficients need a time index")
        return float(value.values[time_index])
    return float(value)


def synthesize(
    coeffs: SpectralCoefficients,
    points,
    time_index: int | None = None,
) -> SynthesisResult:
    """Evaluate the truncated expansion sum_i c_i Z_i at the given points.

    The tail indicator is the coefficient magnitude on the outermost diagonal
    shell max(n, k) = max(N_max, K_max populated), a cheap proxy for the
    truncation error of the box.
    """
    pts = np.asarray(points, dtype=float)
    x = pts[..., 0]
    y = pts[..., 1]
    values = np.zeros(x.shape)
    shell_mag = 0.0
    last_shell = -1
    for index in enumerate_modes(coeffs.N_max, coeffs.K_max):
        c = _coefficient_at(coeffs[index], time_index)
        if c != 0.0:
            values = values + c * eval_Z(index, x, y)
        shell = max(index.n, index.k)
        if shell > last_shell:
            last_shell = shell
            shell_mag = 0.0
        if shell == last_shell:
            shell_mag = max(shell_mag, abs(c))
    return SynthesisResult(values=values, tail_indicator=shell_mag)


def _gram_once(modes: list[ModeIndex], q: int) -> np.ndarray:
    gx, wx = _gauss01(q)
    gy, wy = _gauss01(q)
    X, Y = np.meshgrid(gx, gy, indexing="ij")
    wgt = np.outer(wx, wy).ravel()
    Z = np.stack([eval_Z(i, X, Y).ravel() for i in modes])
    W = np.stack([eval_W(i, X, Y).ravel() for i in modes])
    return (Z * wgt) @ W.T


def biorthogonality_matrix(N: int, K: int, tol: float = 1e-9) -> np.ndarray:
    """Gram matrix <Z_i, W_j> over the truncation box; identity when the
    families are bi-orthonormal.  Row/column order follows enumerate_modes.

    All modes share one quadrature grid sized for the highest frequency, so
    the matrix is two dense products; the node count is doubled once and the
    two results must agree entrywise to ``tol``.
    """
    modes = enumerate_modes(N, K)
    q = max(32, 4 * max(2 * N, K))
    g1 = _gram_once(modes, q)
    g2 = _gram_once(modes, 2 * q)
    if np.max(np.abs(g1 - g2)) > tol:
        raise QuadratureFailure("Gram matrix unstable under node doubling")
    return g2


# decay diagnostics -----------------------------------------------------------


class DatumKind(enum.Enum):
    SourceF = "source"
    InitialPhi = "initial"


@dataclass
class DecayReport:
    datum_kind: DatumKind
    k_exponent: float
    joint_exponent: float
    predicted_k_exponent: float
    predicted_joint_exponent: float

    @property
    def k_ok(self) -> bool:
        return self.k_exponent <= self.predicted_k_exponent

    @property
    def joint_ok(self) -> bool:
        return self.joint_exponent <= self.predicted_joint_exponent


def _static_magnitude(value) -> float:
    if isinstance(value, TimeSeries):
        return float(np.max(np.abs(value.values)))
    return abs(float(value))


def decay_report(coeffs: SpectralCoefficients, datum_kind: DatumKind) -> DecayReport:
    """Fit decay exponents of the coefficient magnitudes.

    The k-exponent comes from log|h_0k| against log k over the Zero family;
    the joint exponent from log|h_(2n-1)k| against log(nk) over the Odd
    family with n, k >= 1.  Magnitudes below a floor relative to the largest
    coefficient are treated as exact zeros and excluded.
    """
    mags = {i: _static_magnitude(v) for i, v in coeffs.data.items()}
    if not mags:
        raise InsufficientData("no coefficients stored")
    floor = 1e-13 * max(mags.values())

    zero_pts = [
        (math.log(i.k), math.log(m))
        for i, m in mags.items()
        if i.family is Family.Zero and i.k >= 1 and m > floor
    ]
    odd_pts = [
        (math.log(i.n * i.k), math.log(m))
        for i, m in mags.items()
        if i.family is Family.Odd and i.n >= 1 and i.k >= 1 and m > floor
    ]

    def fit(pts, label):
        shells = {round(a, 12) for a, _ in pts}
        if len(shells) < 4:
            raise InsufficientData(
                f"only {len(shells)} populated shells for the {label} fit"
            )
        a = np.array([p[0] for p in pts])
        b = np.array([p[1] for p in pts])
        return float(np.polyfit(a, b, 1)[0])

    if datum_kind is DatumKind.InitialPhi:
        predicted_k, predicted_joint = -2.0, -1.0
    else:
        predicted_k, predicted_joint = -1.0, -1.0
    return DecayReport(
        datum_kind=datum_kind,
        k_exponent=fit(zero_pts, "k-decay"),
        joint_exponent=fit(odd_pts, "joint-decay"),
        predicted_k_exponent=predicted_k,
        predicted_joint_exponent=predicted_joint,
    )
