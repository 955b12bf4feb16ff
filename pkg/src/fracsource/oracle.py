"""Brute-force finite-difference reference solver for the forward problem.

A fully discrete cross-check for the spectral construction: second-order
central differences for the fourth-order spatial operator with ghost nodes
eliminated through the boundary conditions, and an implicit L1 discretization
of the multi-term Caputo derivative in time.  The scheme shares no code path
with the spectral solver, so agreement between the two is meaningful
evidence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .forward import ProblemData, SolutionBundle
from .fractional import TimeSeries


class SingularSystem(RuntimeError):
    """The implicit system matrix could not be factorized."""


class StepRejected(RuntimeError):
    """The solution norm exploded in a single step (instability guard)."""


_GROWTH_LIMIT = 1e6


@dataclass(frozen=True)
class FDGrid:
    """Uniform tensor grid: Mx, My spatial intervals, N time intervals."""

    Mx: int
    My: int
    N: int
    T: float = 1.0

    def __post_init__(self):
        if self.Mx < 8 or self.My < 8:
            raise ValueError("need at least 8 intervals per spatial axis")
        if self.N < 1 or self.T <= 0.0:
            raise ValueError("need N >= 1 time intervals and T > 0")

    @property
    def hx(self) -> float:
        return 1.0 / self.Mx

    @property
    def hy(self) -> float:
        return 1.0 / self.My

    @property
    def tau(self) -> float:
        return self.T / self.N

    @property
    def xs(self) -> np.ndarray:
        """All x nodes including both boundaries (x = 1 duplicates x = 0)."""
        return np.linspace(0.0, 1.0, self.Mx + 1)

    @property
    def ys(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.My + 1)

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.N + 1)


def _fourth_diff_x(Mx: int) -> sp.csr_matrix:
    """Fourth x-difference on the unknowns u_0..u_{Mx-1}.

    Ghosts: u_{-1} = u_1 and u_{-2} = u_2 (even reflection from the
    homogeneous first and third derivative conditions at x = 0);
    u_{Mx} = u_0 (value coupling) and u_{Mx+1} = 2 u_1 - u_{Mx-1}
    (second-difference coupling between the two nonlocal edges).
    """
    A = sp.lil_matrix((Mx, Mx))
    stencil = (1.0, -4.0, 6.0, -4.0, 1.0)
    for i in range(Mx):
        for off, c in zip(range(-2, 3), stencil):
            j = i + off
            if j == -1:
                A[i, 1] += c
            elif j == -2:
                A[i, 2] += c
            elif j == Mx:
                A[i, 0] += c
            elif j == Mx + 1:
                A[i, 1] += 2.0 * c
                A[i, Mx - 1] -= c
            else:
                A[i, j] += c
    return A.tocsr()


def _fourth_diff_y(My: int) -> sp.csr_matrix:
    """Fourth y-difference on u_0..u_{My} with even reflection at both faces
    (homogeneous first and third derivative conditions)."""
    M = My + 1
    A = sp.lil_matrix((M, M))
    stencil = (1.0, -4.0, 6.0, -4.0, 1.0)
    for j in range(M):
        for off, c in zip(range(-2, 3), stencil):
            i = j + off
            if i < 0:
                i = -i
            elif i > My:
                i = 2 * My - i
            A[j, i] += c
    return A.tocsr()


def _spatial_operator(grid: FDGrid) -> sp.csr_matrix:
    Ax = _fourth_diff_x(grid.Mx) / grid.hx**4
    Ay = _fourth_diff_y(grid.My) / grid.hy**4
    Iy = sp.identity(grid.My + 1, format="csr")
    Ix = sp.identity(grid.Mx, format="csr")
    return (sp.kron(Ax, Iy) + sp.kron(Ix, Ay)).tocsr()


@dataclass
class FieldHistory:
    """FD solution snapshots on the full node set including x = 1."""

    grid: FDGrid
    values: np.ndarray  # (N+1, Mx+1, My+1)
    metadata: dict = field(default_factory=dict)

    def energy(self) -> TimeSeries:
        """Spatial mean at every step (trapezoid on both axes)."""
        from .fractional import TimeGrid

        wy = np.full(self.grid.My + 1, self.grid.hy)
        wy[0] = wy[-1] = 0.5 * self.grid.hy
        # x is value-coupled at the edges, so interior-style weights apply
        vals = np.einsum("tij,j->t", self.values[:, :-1, :], wy) * self.grid.hx
        return TimeSeries(TimeGrid(self.grid.T, self.grid.N), vals)


def _amplitude_on(grid: FDGrid, problem: ProblemData) -> np.ndarray:
    if problem.amplitude is None:
        return np.ones(grid.N + 1)
    src = problem.amplitude
    if abs(src.grid.T - grid.T) > 1e-12 * max(src.grid.T, grid.T):
        raise ValueError("amplitude horizon does not match the FD grid")
    return np.interp(grid.times, src.grid.nodes, src.values)


def fdm_forward(problem: ProblemData, grid: FDGrid) -> FieldHistory:
    """March the implicit L1 / central-difference scheme.

    One sparse factorization is reused across all steps; the L1 history is
    kept in full and contracted against the convolution weights each step.
    """
    op = problem.op
    xs = grid.xs[:-1]
    ys = grid.ys
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    dof = grid.Mx * (grid.My + 1)

    L = _spatial_operator(grid)
    tau = grid.tau
    terms = op.all_terms()  # includes the leading (1, alpha)
    gammas = np.array(
        [psi * tau ** (-beta) / math.gamma(2.0 - beta) for psi, beta in terms]
    )
    q = np.arange(grid.N + 1, dtype=float)
    weights = np.stack(
        [(q + 1.0) ** (1.0 - beta) - q ** (1.0 - beta) for _, beta in terms]
    )  # (nterms, N+1); weights[:, 0] = 1
    c0 = float(gammas.sum())

    system = (c0 * sp.identity(dof, format="csc") + L.tocsc())
    try:
        solver = splu(system)
    except RuntimeError as exc:
        raise SingularSystem(f"factorization failed: {exc}") from exc

    a_vals = _amplitude_on(grid, problem)
    u = np.asarray(problem.phi(X, Y), dtype=float).reshape(dof)
    diffs = np.zeros((grid.N + 1, dof))
    out = np.empty((grid.N + 1, grid.Mx + 1, grid.My + 1))

    def store(p: int, flat: np.ndarray) -> None:
        plane = flat.reshape(grid.Mx, grid.My + 1)
        out[p, :-1, :] = plane
        out[p, -1, :] = plane[0, :]  # value coupling at the nonlocal edge

    store(0, u)
    for p in range(1, grid.N + 1):
        t = p * tau
        F = a_vals[p] * np.asarray(
            problem.source(X, Y, t), dtype=float
        ).reshape(dof)
        rhs = F + c0 * u
        if p > 1:
            # history sum: per-term weights against stored differences
            w = weights[:, 1:p][:, ::-1]  # (nterms, p-1), aligned to diffs 1..p-1
            rhs -= (gammas @ w) @ diffs[1:p]
        new = solver.solve(rhs)
        if not np.all(np.isfinite(new)):
            raise StepRejected(f"non-finite solution at step {p}")
        if np.linalg.norm(new) > _GROWTH_LIMIT * max(1.0, np.linalg.norm(u)):
            raise StepRejected(f"norm growth beyond {_GROWTH_LIMIT:g} at step {p}")
        diffs[p] = new - u
        u = new
        store(p, u)

    return FieldHistory(
        grid=grid,
        values=out,
        metadata={"dof": dof, "steps": grid.N, "terms": len(terms)},
    )


@dataclass
class ErrorReport:
    """Relative errors of the spectral solution against the FD reference."""

    times: list[float]
    l2: list[float]
    sup: list[float]

    @property
    def max_l2(self) -> float:
        return max(self.l2)

    @property
    def max_sup(self) -> float:
        return max(self.sup)


def compare(bundle: SolutionBundle, history: FieldHistory, times) -> ErrorReport:
    """Sample the spectral expansion at the FD nodes at the requested times
    and report relative L2 and sup discrepancies (normalized by the FD
    solution's norms, with an absolute fallback for vanishing fields)."""
    grid = history.grid
    tgrid = bundle.energy.grid
    X, Y = np.meshgrid(grid.xs, grid.ys, indexing="ij")
    pts = np.stack([X, Y], axis=-1)
    wx = np.full(grid.Mx + 1, grid.hx)
    wx[0] = wx[-1] = 0.5 * grid.hx
    wy = np.full(grid.My + 1, grid.hy)
    wy[0] = wy[-1] = 0.5 * grid.hy
    wgt = np.outer(wx, wy)

    out_t, out_l2, out_sup = [], [], []
    for t in np.atleast_1d(np.asarray(times, dtype=float)):
        p = int(round(t / grid.tau))
        j = int(round(t / tgrid.tau))
        if not (
            abs(p * grid.tau - t) < 1e-9 * grid.T
            and abs(j * tgrid.tau - t) < 1e-9 * tgrid.T
        ):
            raise ValueError(f"t = {t:g} is not a node of both time grids")
        ref = history.values[p]
        spec = bundle.sample(pts, time_index=j).values
        diff = spec - ref
        ref_l2 = math.sqrt(float(np.sum(wgt * ref**2)))
        ref_sup = float(np.max(np.abs(ref)))
        out_t.append(float(t))
        out_l2.append(
            math.sqrt(float(np.sum(wgt * diff**2))) / max(ref_l2, 1e-300)
            if ref_l2 > 0.0
            else float(np.max(np.abs(diff)))
        )
        out_sup.append(
            float(np.max(np.abs(diff))) / max(ref_sup, 1e-300)
            if ref_sup > 0.0
            else float(np.max(np.abs(diff)))
        )
    return ErrorReport(times=out_t, l2=out_l2, sup=out_sup)
