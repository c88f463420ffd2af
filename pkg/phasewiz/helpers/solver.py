"""Dirichlet solver for Lap u = W'(u) on grid boxes."""

from __future__ import annotations

from dataclasses import dataclass, field
from logging import getLogger
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import cg, spsolve

from phasewiz.errors import DomainError
from phasewiz.helpers.calculus import gradient, laplacian
from phasewiz.models.field import ScalarField
from phasewiz.models.profile import planar_solution

if TYPE_CHECKING:
    from typing import List, Optional

    from numpy.typing import NDArray

    from phasewiz.models.field import Ball, Grid
    from phasewiz.models.potential import DoubleWellPotential
    from phasewiz.models.profile import HeteroclinicProfile

LOGGER = getLogger("phasewiz.solver")

METHODS = ("gradient-flow", "newton")


@dataclass
class SolveConfig:
    """How solve_dirichlet iterates.

    `newton_switch` is the residual below which gradient flow hands over to
    damped Newton; None keeps pure gradient flow.
    """

    method: str = "gradient-flow"
    pseudo_time_step: Optional[float] = None
    tolerance: float = 1e-10
    max_iterations: int = 200_000
    newton_switch: Optional[float] = 1e-3
    check_every: int = 50

    def step_for(self, grid: Grid) -> float:
        limit = grid.spacing**2 / (2 * grid.dim)
        if self.pseudo_time_step is None:
            return 0.9 * limit
        if self.pseudo_time_step > limit * (1.0 + 1e-12):
            raise DomainError(
                f"pseudo_time_step {self.pseudo_time_step} "
                f"exceeds the stable limit {limit}"
            )
        return self.pseudo_time_step

    def validate(self) -> None:
        if self.method not in METHODS:
            raise DomainError(f"unknown method '{self.method}', use one of {METHODS}")
        if not self.tolerance > 0.0:
            raise DomainError("tolerance must be positive")
        if self.max_iterations < 1:
            raise DomainError("max_iterations must be positive")


@dataclass
class SolveResult:
    field: ScalarField
    converged: bool
    iterations: int
    residual: float
    certified_residual: float
    newton_steps: int = 0
    energy_history: List[float] = field(default_factory=list)


def _stencil_residual(values: NDArray, pot: DoubleWellPotential, h: float) -> NDArray:
    """Discrete Lap u - W'(u) on interior nodes, zero on the boundary."""
    out = np.zeros_like(values)
    inner = tuple(slice(1, -1) for _ in range(values.ndim))
    lap = np.zeros_like(values[inner])
    for axis in range(values.ndim):
        lo = [slice(1, -1)] * values.ndim
        hi = [slice(1, -1)] * values.ndim
        lo[axis] = slice(0, -2)
        hi[axis] = slice(2, None)
        lap += values[tuple(lo)] + values[tuple(hi)]
    lap = (lap - 2 * values.ndim * values[inner]) / h**2
    out[inner] = lap - pot.Wp(values[inner])
    return out


def interior_laplacian_matrix(grid: Grid) -> sparse.csr_matrix:
    """Sparse 2n+1 point Laplacian acting on interior unknowns (C order)."""
    sizes = [n - 2 for n in grid.shape]
    ops = []
    for m in sizes:
        ones = np.ones(m - 1)
        ops.append(sparse.diags([ones, -2.0 * np.ones(m), ones], [-1, 0, 1]))
    total = None
    for axis, op in enumerate(ops):
        term = op
        for other, m in enumerate(sizes):
            if other < axis:
                term = sparse.kron(sparse.identity(m), term)
            elif other > axis:
                term = sparse.kron(term, sparse.identity(m))
        total = term if total is None else total + term
    return (total / grid.spacing**2).tocsr()


def discrete_energy(values: NDArray, pot: DoubleWellPotential, h: float) -> float:
    """Energy with forward differences, decreasing along the explicit flow."""
    total = float(np.sum(pot.W(values)))
    for axis in range(values.ndim):
        total += 0.5 * float(np.sum(np.diff(values, axis=axis) ** 2)) / h**2
    return total * h**values.ndim


def harmonic_extension(grid: Grid, boundary: NDArray) -> NDArray:
    """Discrete harmonic function with the given boundary values, clamped to [-1, 1]."""
    inner = tuple(slice(1, -1) for _ in range(grid.dim))
    shell = np.where(grid.boundary_mask(), boundary, 0.0)
    rhs = -(laplacian(ScalarField(grid, shell, "b", "derived")).values[inner]).ravel()
    matrix = interior_laplacian_matrix(grid)
    interior = spsolve(matrix.tocsc(), rhs).reshape([n - 2 for n in grid.shape])
    out = shell.copy()
    out[inner] = interior
    return np.clip(out, -1.0, 1.0)


def _newton_step(
    values: NDArray,
    pot: DoubleWellPotential,
    matrix: sparse.csr_matrix,
    h: float,
) -> NDArray:
    """One damped Newton correction; returns the new iterate."""
    inner = tuple(slice(1, -1) for _ in range(values.ndim))
    residual = _stencil_residual(values, pot, h)
    r_inner = residual[inner].ravel()
    jacobian = (-matrix + sparse.diags(pot.Wpp(values[inner]).ravel())).tocsr()
    delta, info = cg(jacobian, r_inner, rtol=1e-12, maxiter=2000)
    if info != 0:
        LOGGER.warning("cg did not converge (info=%s); using a direct solve", info)
        delta = spsolve(jacobian.tocsc(), r_inner)
    start = np.abs(residual).max()
    damping = 1.0
    for _ in range(30):
        trial = values.copy()
        trial[inner] += damping * delta.reshape(trial[inner].shape)
        np.clip(trial, -1.0, 1.0, out=trial)
        if np.abs(_stencil_residual(trial, pot, h)).max() < start:
            return trial
        damping *= 0.5
    return trial


def solve_dirichlet(
    pot: DoubleWellPotential,
    grid: Grid,
    boundary: NDArray,
    cfg: Optional[SolveConfig] = None,
    record_every: int = 0,
) -> SolveResult:
    """Solves Lap u = W'(u) with u = boundary on the faces of the box.

    `boundary` holds a value for every node; only boundary nodes are used.
    """
    cfg = cfg or SolveConfig()
    cfg.validate()
    boundary = np.asarray(boundary, dtype=float)
    if boundary.shape != grid.shape:
        raise DomainError(f"boundary values must have shape {grid.shape}")
    faces = grid.boundary_mask()
    if np.any(np.abs(boundary[faces]) > 1.0):
        raise DomainError("boundary values must lie in [-1, 1]")
    h = grid.spacing
    tau = cfg.step_for(grid)

    values = harmonic_extension(grid, boundary)
    values[faces] = boundary[faces]
    matrix = interior_laplacian_matrix(grid)
    history: List[float] = []
    use_newton = cfg.method == "newton"
    newton_steps = 0
    residual = float(np.abs(_stencil_residual(values, pot, h)).max())
    iteration = 0

    while residual > cfg.tolerance and iteration < cfg.max_iterations:
        iteration += 1
        if use_newton:
            values = _newton_step(values, pot, matrix, h)
            newton_steps += 1
            residual = float(np.abs(_stencil_residual(values, pot, h)).max())
            continue
        values += tau * _stencil_residual(values, pot, h)
        np.clip(values, -1.0, 1.0, out=values)
        if record_every and iteration % record_every == 0:
            history.append(discrete_energy(values, pot, h))
        if iteration % cfg.check_every == 0:
            residual = float(np.abs(_stencil_residual(values, pot, h)).max())
            if cfg.newton_switch is not None and residual < cfg.newton_switch:
                LOGGER.info(
                    "Switching to Newton at iteration %s (residual %.3g)",
                    iteration,
                    residual,
                )
                use_newton = True
    residual = float(np.abs(_stencil_residual(values, pot, h)).max())
    converged = residual <= cfg.tolerance

    u = ScalarField(grid, values, "u", "solved", {"iterations": iteration})
    # certified by the general operators, independent of the solver's stencil
    certificate = laplacian(u).values - pot.Wp(values)
    certified = float(np.abs(certificate[grid.interior_mask()]).max())
    if converged:
        LOGGER.info(
            "Solved on %s in %s iterations (%s Newton), residual %.3g",
            grid.describe(),
            iteration,
            newton_steps,
            residual,
        )
    else:
        LOGGER.warning(
            "Solve did not converge in %s iterations, residual %.3g",
            iteration,
            residual,
        )
    u.metadata["converged"] = converged
    return SolveResult(
        u, converged, iteration, residual, certified, newton_steps, history
    )


def energy(
    u: ScalarField, pot: DoubleWellPotential, region: Optional[Ball] = None
) -> float:
    """Integral of |grad u|^2 / 2 + W(u).

    Trapezoid weights on the whole grid, a plain node sum inside a ball.
    """
    grad = gradient(u)
    density = 0.5 * np.sum(grad**2, axis=0) + pot.W(u.values)
    if region is not None:
        mask = region.mask(u.grid, interior=False)
        return float(np.sum(density[mask]) * u.h**u.grid.dim)
    weights = np.ones(u.grid.shape)
    for axis, n in enumerate(u.grid.shape):
        edge = np.ones(n)
        edge[[0, -1]] = 0.5
        shape = [1] * u.grid.dim
        shape[axis] = n
        weights = weights * edge.reshape(shape)
    return float(np.sum(weights * density) * u.h**u.grid.dim)


def boundary_from_spec(
    spec: str, grid: Grid, profile: Optional[HeteroclinicProfile] = None
) -> NDArray:
    """Boundary values from "planar:d1;d2[;d3],offset", "constant:v" or a field file."""
    spec = spec.strip()
    if spec.startswith("constant:"):
        value = float(spec.split(":", 1)[1])
        return np.full(grid.shape, value)
    if spec.startswith("planar:"):
        if profile is None:
            raise DomainError("planar boundary data needs a profile")
        body = spec.split(":", 1)[1]
        try:
            direction_text, offset_text = body.rsplit(",", 1)
            direction = np.array([float(c) for c in direction_text.split(";")])
            offset = float(offset_text)
        except ValueError as err:
            raise DomainError(f"could not read planar boundary '{spec}'") from err
        direction = direction / np.linalg.norm(direction)
        return planar_solution(profile, direction, offset, grid).values
    path = Path(spec)
    loaded = ScalarField.load(path)
    if loaded.grid.shape != grid.shape:
        raise DomainError(
            f"boundary file {path} does not match the grid {grid.describe()}"
        )
    return loaded.values
