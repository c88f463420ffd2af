"""Model objects for uniform grids, balls and the scalar fields sampled on them."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from logging import getLogger
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from phasewiz.errors import DomainError, EmptyRegionError, GridError

if TYPE_CHECKING:
    from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

    from numpy.typing import ArrayLike, NDArray

LOGGER = getLogger("phasewiz.field")

MIN_NODES = 8
PROVENANCES = ("analytic", "solved", "transformed", "derived", "file")


@dataclass(frozen=True)
class Grid:
    """An isotropic uniform grid on a box in one, two or three dimensions."""

    extents: Tuple[Tuple[float, float], ...]
    spacing: float

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "extents", tuple((float(lo), float(hi)) for lo, hi in self.extents)
        )
        if not 1 <= len(self.extents) <= 3:
            raise GridError(f"grids have 1 to 3 axes, got {len(self.extents)}")
        if not self.spacing > 0.0:
            raise GridError(f"grid spacing must be positive, got {self.spacing}")
        for axis, (lo, hi) in enumerate(self.extents):
            cells = (hi - lo) / self.spacing
            if abs(cells - round(cells)) > 1e-9 * max(1.0, cells):
                raise GridError(
                    f"axis {axis}: extent [{lo}, {hi}] "
                    f"is not a multiple of h = {self.spacing}"
                )
            if round(cells) + 1 < MIN_NODES:
                raise GridError(f"axis {axis}: at least {MIN_NODES} nodes are required")

    @classmethod
    def cube(cls, dim: int, lower: float, upper: float, spacing: float) -> Grid:
        return cls(tuple((lower, upper) for _ in range(dim)), spacing)

    @property
    def dim(self) -> int:
        return len(self.extents)

    @property
    def h(self) -> float:
        return self.spacing

    @cached_property
    def shape(self) -> Tuple[int, ...]:
        return tuple(
            int(round((hi - lo) / self.spacing)) + 1 for lo, hi in self.extents
        )

    @cached_property
    def axes(self) -> List[NDArray]:
        return [
            np.linspace(lo, hi, n) for (lo, hi), n in zip(self.extents, self.shape)
        ]

    def coordinates(self) -> NDArray:
        """Node coordinates with shape (*shape, dim)."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def interior_mask(self, margin: int = 1) -> NDArray:
        """Nodes at least `margin` nodes away from every face of the box."""
        mask = np.zeros(self.shape, dtype=bool)
        inner = tuple(slice(margin, n - margin) for n in self.shape)
        mask[inner] = True
        return mask

    def boundary_mask(self) -> NDArray:
        return ~self.interior_mask(1)

    def contains(self, points: ArrayLike, margin: float = 0.0) -> NDArray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        inside = np.ones(points.shape[0], dtype=bool)
        for axis, (lo, hi) in enumerate(self.extents):
            coordinate = points[:, axis]
            inside &= (coordinate >= lo + margin) & (coordinate <= hi - margin)
        return inside

    def nearest_index(self, point: ArrayLike) -> Tuple[int, ...]:
        point = np.asarray(point, dtype=float)
        return tuple(
            int(np.clip(round((p - lo) / self.spacing), 0, n - 1))
            for p, (lo, _), n in zip(point, self.extents, self.shape)
        )

    def node(self, index: Sequence[int]) -> NDArray:
        return np.array([ax[i] for ax, i in zip(self.axes, index)])

    def describe(self) -> str:
        box = " x ".join(f"[{lo:g}, {hi:g}]" for lo, hi in self.extents)
        return f"{box}, h = {self.spacing:g}"


@dataclass(frozen=True)
class Ball:
    """A closed Euclidean ball, realized on a grid as the nodes it contains."""

    center: Tuple[float, ...]
    radius: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not self.radius > 0.0:
            raise DomainError(f"ball radius must be positive, got {self.radius}")

    @property
    def center_array(self) -> NDArray:
        return np.asarray(self.center)

    def contains(self, points: ArrayLike, scale: float = 1.0) -> NDArray:
        points = np.asarray(points, dtype=float)
        distance = np.linalg.norm(points - self.center_array, axis=-1)
        return distance <= scale * self.radius

    def mask(self, grid: Grid, interior: bool = True) -> NDArray:
        """Grid nodes inside the ball, optionally restricted to interior nodes."""
        if len(self.center) != grid.dim:
            raise DomainError(f"ball center must have {grid.dim} components")
        mask = self.contains(grid.coordinates())
        if interior:
            mask &= grid.interior_mask()
        if not mask.any():
            raise EmptyRegionError(
                f"ball at {self.center} with radius {self.radius} "
                "holds no interior nodes"
            )
        return mask

    def shrunk(self, scale: float) -> Ball:
        return Ball(self.center, scale * self.radius)


@dataclass
class ScalarField:
    """Real values on every node of a grid, plus where they came from."""

    grid: Grid
    values: NDArray
    name: str = "u"
    provenance: str = "analytic"
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise GridError(
                f"field '{self.name}' has shape {self.values.shape}, "
                f"grid has {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise DomainError(f"field '{self.name}' has non-finite values")
        if self.provenance not in PROVENANCES:
            raise DomainError(f"unknown provenance '{self.provenance}'")

    @property
    def h(self) -> float:
        return self.grid.spacing

    def derived(self, values: NDArray, name: str, **metadata: Any) -> ScalarField:
        return ScalarField(self.grid, values, name, "derived", dict(metadata))

    def band_mask(self, band: Tuple[float, float]) -> NDArray:
        """Nodes whose value lies in the closed interval `band`."""
        lo, hi = band
        return (self.values >= lo) & (self.values <= hi)

    def interpolator(self, values: Optional[NDArray] = None) -> RegularGridInterpolator:
        """Multilinear interpolation of this field (or of same-shape values)."""
        data = self.values if values is None else values
        return RegularGridInterpolator(
            self.grid.axes, data, method="linear", bounds_error=False, fill_value=None
        )

    def __call__(self, points: ArrayLike) -> NDArray:
        return self.interpolator()(np.atleast_2d(points))

    # file format ------------------------------------------------------------

    def dump(self, path: Union[str, Path]) -> Path:
        """Writes the plain-text field format; values round-trip bit for bit."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        grid = self.grid
        header = [
            f"dim {grid.dim}",
            "shape " + " ".join(str(n) for n in grid.shape),
            "extents " + " ".join(f"{lo!r} {hi!r}" for lo, hi in grid.extents),
            f"spacing {grid.spacing!r}",
            f"name {self.name}",
            f"provenance {self.provenance}",
            "values",
        ]
        body = "\n".join(f"{v:.17g}" for v in self.values.ravel(order="C"))
        path.write_text("\n".join(header) + "\n" + body + "\n")
        LOGGER.debug("Wrote field %s to %s", self.name, path)
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> ScalarField:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"Could not find a field file at {path}")
        lines = path.read_text().splitlines()
        header: Dict[str, str] = {}
        for i, line in enumerate(lines):
            if line.strip() == "values":
                start = i + 1
                break
            key, _, rest = line.partition(" ")
            header[key] = rest.strip()
        else:
            raise DomainError(f"{path} has no 'values' section")
        try:
            dim = int(header["dim"])
            shape = tuple(int(n) for n in header["shape"].split())
            bounds = [float(v) for v in header["extents"].split()]
            spacing = float(header["spacing"])
        except (KeyError, ValueError) as err:
            raise DomainError(f"{path} has a malformed header: {err}") from err
        extents = tuple((bounds[2 * i], bounds[2 * i + 1]) for i in range(dim))
        grid = Grid(extents, spacing)
        if grid.shape != shape:
            raise GridError(f"{path}: shape {shape} disagrees with extents and spacing")
        values = np.array([float(v) for v in lines[start:] if v.strip()])
        if values.size != int(np.prod(shape)):
            raise GridError(
                f"{path}: expected {np.prod(shape)} values, got {values.size}"
            )
        provenance = header.get("provenance", "file")
        return cls(
            grid,
            values.reshape(shape, order="C"),
            name=header.get("name", path.stem),
            provenance=provenance if provenance in PROVENANCES else "file",
        )
