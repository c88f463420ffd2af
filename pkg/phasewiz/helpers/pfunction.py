"""Modica deficit, P-functions, the operator L and the assumption checkers."""

from __future__ import annotations

from dataclasses import dataclass, field
from logging import getLogger
from typing import TYPE_CHECKING

import numpy as np

from phasewiz.errors import AdmissibilityError, DomainError, EmptyRegionError
from phasewiz.helpers.calculus import (
    GRAD_FLOOR,
    ResidualStats,
    analysis_mask,
    gradient,
    gradient_norm,
    gradient_pieces,
    hessian_norm,
    laplacian,
    qsq_from_pieces,
)

if TYPE_CHECKING:
    from typing import List, Optional, Tuple

    from numpy.typing import NDArray

    from phasewiz.models.field import ScalarField
    from phasewiz.models.potential import DoubleWellPotential

LOGGER = getLogger("phasewiz.pfunction")

BOUNDS = ("hessian", "q")
INTERPRETATIONS = ("Qsq", "Q")


def _check_unit_interval(name: str, value: float) -> None:
    if not 0.0 < value < 1.0:
        raise DomainError(f"{name} must lie in (0, 1), got {value}")


def c0_from_C1(C1: float) -> float:
    """c0 = min{1 - C1, (C1 + 2) / 4}; the second branch is active for C1 < 2/5."""
    _check_unit_interval("C1", C1)
    return min(1.0 - C1, (C1 + 2.0) / 4.0)


def c3_from_C2(C2: float) -> float:
    _check_unit_interval("C2", C2)
    return 1.0 - C2


@dataclass
class PFunctionParams:
    """Constants of the two P-function constructions and of the local theorem."""

    C1: Optional[float] = None
    C2: Optional[float] = None
    theta0: Optional[float] = None
    delta: Optional[float] = None

    def __post_init__(self) -> None:
        if self.C1 is not None:
            _check_unit_interval("C1", self.C1)
        if self.C2 is not None:
            _check_unit_interval("C2", self.C2)
        if self.delta is not None:
            _check_unit_interval("delta", self.delta)
        if self.theta0 is not None and not self.theta0 > 0.0:
            raise DomainError(f"theta0 must be positive, got {self.theta0}")

    @property
    def c0(self) -> float:
        if self.C1 is None:
            raise DomainError("c0 needs C1")
        return c0_from_C1(self.C1)

    @property
    def c3(self) -> float:
        if self.C2 is None:
            raise DomainError("c3 needs C2")
        return c3_from_C2(self.C2)

    def constant(self, bound: str) -> float:
        """c0 for the Hessian bound, c3 for the Q bound."""
        if bound not in BOUNDS:
            raise DomainError(f"unknown bound '{bound}', use one of {BOUNDS}")
        return self.c0 if bound == "hessian" else self.c3


@dataclass
class AlphaValue:
    """The exponent used by the construction and the value printed in the theorem."""

    value: float
    statement_value: float
    mode: str

    @property
    def discrepancy(self) -> bool:
        return not np.isclose(self.value, self.statement_value, rtol=1e-12, atol=0.0)


def alpha_exponent(params: PFunctionParams, mode: str) -> AlphaValue:
    """alpha = 1/c0 (Hessian bound) or 1/(1 - C2) (Q bound)."""
    if mode == "hessian":
        C1 = params.C1
        value = 1.0 / params.c0
        statement = max(1.0 / C1, 4.0 / (C1 + 2.0))
        alpha = AlphaValue(value, statement, mode)
        if alpha.discrepancy:
            LOGGER.warning(
                "alpha from the construction (%.6g) differs from the stated max{1/C1, "
                "4/(C1+2)} = %.6g at C1 = %s; using the construction",
                value,
                statement,
                C1,
            )
        return alpha
    if mode == "q":
        value = 1.0 / params.c3
        return AlphaValue(value, value, mode)
    raise DomainError(f"unknown alpha mode '{mode}', use one of {BOUNDS}")


def modica_deficit(u: ScalarField, pot: DoubleWellPotential) -> ScalarField:
    """|grad u|^2 - 2 W(u), nodewise."""
    norm = gradient_norm(u)
    return u.derived(norm**2 - 2.0 * pot.W(u.values), f"modica({u.name})")


def gradient_floor(u: ScalarField, delta: float) -> float:
    """inf |grad u| over interior nodes with |u| <= 1 - delta."""
    _check_unit_interval("delta", delta)
    mask = u.grid.interior_mask() & (np.abs(u.values) <= 1.0 - delta)
    if not mask.any():
        raise EmptyRegionError(
            f"no interior nodes of {u.name} satisfy |u| <= {1 - delta}"
        )
    return float(gradient_norm(u)[mask].min())


@dataclass
class BoundCheck:
    """Result of a nodewise bound quantity <= constant * reference on a band."""

    name: str
    constant: float
    empirical_constant: float
    violations: int
    count: int
    failing_band: Optional[Tuple[float, float]] = None
    ok_mask: Optional[NDArray] = field(default=None, repr=False)

    @property
    def passed(self) -> bool:
        return self.violations == 0


def _bound_check(
    name: str,
    quantity: NDArray,
    reference: NDArray,
    constant: float,
    mask: NDArray,
    u: ScalarField,
) -> BoundCheck:
    if not mask.any():
        raise EmptyRegionError(f"{name}: the band selects no nodes of {u.name}")
    ratio = quantity[mask] / reference[mask]
    ok = np.zeros_like(mask)
    ok[mask] = quantity[mask] <= constant * reference[mask]
    bad = mask & ~ok
    failing = None
    if bad.any():
        values = u.values[bad]
        failing = (float(values.min()), float(values.max()))
        LOGGER.info("%s fails on %s nodes with u in %s", name, int(bad.sum()), failing)
    return BoundCheck(
        name=name,
        constant=constant,
        empirical_constant=float(ratio.max()),
        violations=int(bad.sum()),
        count=int(mask.sum()),
        failing_band=failing,
        ok_mask=ok,
    )


def check_hessian_bound(
    u: ScalarField,
    C1: float,
    band: Tuple[float, float],
    grad_floor: float = GRAD_FLOOR,
) -> BoundCheck:
    """|D^2 u| <= C1 |grad u| (Frobenius) on the band."""
    norm = gradient_norm(u)
    mask = analysis_mask(u, band, margin=1) & (norm >= grad_floor)
    return _bound_check("hessian_bound", hessian_norm(u), norm, C1, mask, u)


def _q_quantity(qsq: NDArray, interpretation: str) -> NDArray:
    if interpretation not in INTERPRETATIONS:
        raise DomainError(
            f"unknown interpretation '{interpretation}', use {INTERPRETATIONS}"
        )
    return qsq if interpretation == "Qsq" else np.sqrt(np.maximum(qsq, 0.0))


def check_Q_bound(
    u: ScalarField,
    C2: float,
    band: Tuple[float, float],
    interpretation: str = "Qsq",
    grad_floor: float = GRAD_FLOOR,
) -> BoundCheck:
    """Q (or Qsq) <= C2 (1 - u^2) on the band."""
    pieces = gradient_pieces(u)
    quantity = _q_quantity(qsq_from_pieces(pieces, grad_floor), interpretation)
    mask = analysis_mask(u, band) & (pieces.norm >= grad_floor)
    reference = 1.0 - u.values**2
    return _bound_check(f"q_bound[{interpretation}]", quantity, reference, C2, mask, u)


def general_Q_bound(
    u: ScalarField,
    pot: DoubleWellPotential,
    C2: float,
    band: Tuple[float, float],
    interpretation: str = "Qsq",
    grad_floor: float = GRAD_FLOOR,
) -> BoundCheck:
    """Q <= C2 (W'^2 - 2 W W'') / (2 W), where the bracket is positive."""
    values = u.values
    W = pot.W(values)
    bracket = pot.Wp(values) ** 2 - 2.0 * W * pot.Wpp(values)
    pieces = gradient_pieces(u)
    mask = analysis_mask(u, band) & (pieces.norm >= grad_floor)
    broken = mask & ((bracket <= 0.0) | (W <= 0.0))
    if broken.any():
        raise AdmissibilityError(
            f"W'^2 - 2 W W'' > 0 fails on the sub-band "
            f"[{values[broken].min():.6g}, {values[broken].max():.6g}]",
            np.unique(values[broken]).tolist(),
        )
    quantity = _q_quantity(qsq_from_pieces(pieces, grad_floor), interpretation)
    reference = np.where(mask, bracket / np.where(W > 0, 2.0 * W, 1.0), 1.0)
    return _bound_check(
        f"general_q_bound[{interpretation}]", quantity, reference, C2, mask, u
    )


def p_function(
    u: ScalarField, pot: DoubleWellPotential, params: PFunctionParams, bound: str
) -> ScalarField:
    """2 c W(u) - |grad u|^2, i.e. c/2 (1 - u^2)^2 - |grad u|^2 for the canonical W."""
    c = params.constant(bound)
    norm = gradient_norm(u)
    return u.derived(2.0 * c * pot.W(u.values) - norm**2, f"P[{bound}]({u.name})", c=c)


def subharmonic_lower_bound(
    u: ScalarField, pot: DoubleWellPotential, C1: float
) -> ScalarField:
    """The lower bound I for Lap P under the Hessian bound.

    I = 2 |grad u|^2 (W''(u)(c0 - 1) - C1) + 2 c0 W'(u)^2.
    """
    c0 = c0_from_C1(C1)
    norm_sq = gradient_norm(u) ** 2
    values = u.values
    lower = 2.0 * norm_sq * (pot.Wpp(values) * (c0 - 1.0) - C1)
    lower += 2.0 * c0 * pot.Wp(values) ** 2
    return u.derived(lower, f"I({u.name})", C1=C1, c0=c0)


@dataclass
class SubharmonicCheck:
    min_laplacian: float
    violations: List[Tuple[float, ...]]
    count: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return not self.violations


def check_subharmonic(
    P: ScalarField,
    mask: NDArray,
    tolerance: Optional[float] = None,
    lower: Optional[ScalarField] = None,
) -> SubharmonicCheck:
    """min of the discrete Lap P over interior mask nodes; passes iff >= -tolerance.

    With `lower`, the comparison is Lap P >= lower - tolerance instead.
    """
    tolerance = 10.0 * P.h if tolerance is None else tolerance
    lap = laplacian(P).values
    region = mask & P.grid.interior_mask(2)
    if not region.any():
        raise EmptyRegionError("check_subharmonic: the mask selects no interior nodes")
    reference = 0.0 if lower is None else lower.values
    excess = lap - reference
    bad = region & (excess < -tolerance)
    coords = P.grid.coordinates()[bad]
    return SubharmonicCheck(
        min_laplacian=float(lap[region].min()),
        violations=[tuple(float(c) for c in point) for point in coords],
        count=int(region.sum()),
        tolerance=tolerance,
    )


@dataclass
class OperatorResult:
    """Pieces of L P~ = Lap P~ + B . grad P~ + C P~ and its closed-form value J."""

    P: ScalarField
    LP: ScalarField
    J: ScalarField
    B: NDArray
    C: ScalarField
    residual: ScalarField
    mask: NDArray
    excluded: int

    def stats(self, tolerance: Optional[float] = None) -> ResidualStats:
        return ResidualStats.over(
            "operator_identity",
            self.residual.values,
            self.mask,
            tolerance,
            self.excluded,
        )


def elliptic_operator_L(
    u: ScalarField,
    pot: DoubleWellPotential,
    C2: float,
    grad_floor: float = GRAD_FLOOR,
) -> OperatorResult:
    """Assembles L P~ from finite differences and J from u alone."""
    c3 = c3_from_C2(C2)
    values = u.values
    W, Wp, Wpp = pot.W(values), pot.Wp(values), pot.Wpp(values)
    pieces = gradient_pieces(u)
    norm_sq = pieces.norm**2
    active = pieces.norm >= grad_floor
    safe_sq = np.where(active, norm_sq, 1.0)

    P = u.derived(2.0 * c3 * W - norm_sq, f"P[q]({u.name})", c=c3)
    grad_P = gradient(P)
    lap_P = laplacian(P).values
    qsq = qsq_from_pieces(pieces, grad_floor)

    B = grad_P / (2.0 * safe_sq) - 2.0 * c3 * Wp * pieces.grad / safe_sq
    C = np.minimum(2.0 * (c3 - 1.0) * Wpp - 2.0 * qsq, 0.0)
    LP = lap_P + np.sum(B * grad_P, axis=0) + C * P.values
    J = (
        2.0 * norm_sq * ((c3 - 1.0) * Wpp - qsq - 0.5 * C)
        + 2.0 * c3 * (1.0 - c3) * Wp**2
        + 2.0 * c3 * W * C
    )
    LP = np.where(active, LP, 0.0)
    J = np.where(active, J, 0.0)
    mask = analysis_mask(u) & active
    excluded = int((analysis_mask(u) & ~active).sum())
    if excluded:
        LOGGER.info(
            "operator L: %s nodes below the gradient floor were skipped", excluded
        )
    return OperatorResult(
        P=P,
        LP=u.derived(LP, "LP"),
        J=u.derived(J, "J"),
        B=B,
        C=u.derived(C, "C"),
        residual=u.derived(LP - J, "LP-J"),
        mask=mask,
        excluded=excluded,
    )


def gradient_norm_identities(
    u: ScalarField,
    pot: DoubleWellPotential,
    C2: float,
    grad_floor: float = GRAD_FLOOR,
) -> Tuple[ResidualStats, ResidualStats]:
    """Residuals of |D^2 u|^2 = Qsq |grad u|^2 + |grad|grad u||^2 and of

    |grad|grad u||^2 = (|grad P~|^2 - 4 c3 W' grad u . grad P~ + 4 c3^2 W'^2 |grad u|^2)
                       / (4 |grad u|^2).
    """
    c3 = c3_from_C2(C2)
    pieces = gradient_pieces(u)
    norm_sq = pieces.norm**2
    active = pieces.norm >= grad_floor
    safe_sq = np.where(active, norm_sq, 1.0)
    qsq = qsq_from_pieces(pieces, grad_floor)
    Wp = pot.Wp(u.values)

    first = pieces.hess_sq - (qsq * norm_sq + pieces.grad_norm_grad_sq)

    P = u.derived(2.0 * c3 * pot.W(u.values) - norm_sq, "P[q]")
    grad_P = gradient(P)
    expansion = (
        np.sum(grad_P**2, axis=0)
        - 4.0 * c3 * Wp * np.sum(pieces.grad * grad_P, axis=0)
        + 4.0 * c3**2 * Wp**2 * norm_sq
    ) / (4.0 * safe_sq)
    second = pieces.grad_norm_grad_sq - expansion

    mask = analysis_mask(u) & active
    excluded = int((analysis_mask(u) & ~active).sum())
    return (
        ResidualStats.over("hessian_split", first, mask, excluded=excluded),
        ResidualStats.over("gradient_norm_expansion", second, mask, excluded=excluded),
    )


@dataclass
class StabilityForm:
    lhs: float
    rhs: float

    @property
    def deficit(self) -> float:
        return self.lhs - self.rhs


def stability_form(
    u: ScalarField, xi: NDArray, grad_floor: float = GRAD_FLOOR
) -> StabilityForm:
    """int |grad xi|^2 |grad u|^2 and int Qsq xi^2 |grad u|^2 by node sums."""
    xi = np.asarray(getattr(xi, "values", xi), dtype=float)
    if xi.shape != u.grid.shape:
        raise DomainError("xi must live on the grid of u")
    if np.any(xi[~u.grid.interior_mask(2)] != 0.0):
        raise DomainError("xi must vanish within two nodes of the grid boundary")
    pieces = gradient_pieces(u)
    test = u.derived(xi, "xi")
    grad_xi = gradient(test)
    weight = u.h**u.grid.dim
    norm_sq = pieces.norm**2
    lhs = float(np.sum(np.sum(grad_xi**2, axis=0) * norm_sq) * weight)
    rhs = float(np.sum(qsq_from_pieces(pieces, grad_floor) * xi**2 * norm_sq) * weight)
    return StabilityForm(lhs, rhs)
