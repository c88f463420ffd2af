"""Experiment manifests: one TOML file per run, validated before any computation."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from logging import getLogger
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
from tomlkit import array, comment, document, dumps, loads, table

from phasewiz.errors import DomainError, GridError, ManifestError
from phasewiz.helpers import validation
from phasewiz.helpers.configuration import default
from phasewiz.helpers.pfunction import BOUNDS, INTERPRETATIONS, PFunctionParams
from phasewiz.models.density import KINDS as WEIGHT_KINDS
from phasewiz.models.diffeomorphism import KINDS as DIFFEO_KINDS
from phasewiz.models.field import Ball, Grid
from phasewiz.models.potential import potential_from_spec

if TYPE_CHECKING:
    from typing import Any, Dict, List, Optional, Tuple, Union

    from numpy.typing import NDArray

LOGGER = getLogger("phasewiz.harness")

SOURCES = ("planar", "dirichlet", "file")
THETA0_POLICIES = ("measured", "fixed")
DIFFEO_KEYS = ("kind", "t_max", "step", "inverse_h", "corridor", "epsilon")
# the manifest keys that may override the [defaults] table
TOLERANCE_KEYS = (
    "grad_floor",
    "profile_step",
    "profile_t_max",
    "phi_step",
    "phi_t_max",
    "sign_tolerance_factor",
    "gap_tolerance_factor",
    "divergence_tolerance",
    "boundary_identity_factor",
    "solver_tolerance",
)


@dataclass
class Manifest:
    """Everything one verification run needs, read from flat TOML tables."""

    # pylint: disable=too-many-instance-attributes

    name: str
    seed: int = 0
    potential: str = "canonical"
    # [grid]
    dim: int = 2
    lower: float = 0.0
    upper: float = 1.0
    spacing: float = 1.0 / 128.0
    # [field]
    source: str = "planar"
    angle_deg: Optional[float] = None
    direction: Optional[List[float]] = None
    offset: float = 0.0
    boundary: str = ""
    path: str = ""
    # [parameters]
    bound: str = "hessian"
    C1: Optional[float] = None
    C2: Optional[float] = None
    delta: Optional[float] = None
    theta0_policy: str = "measured"
    theta0: Optional[float] = None
    theta0_factor: float = 0.9
    alpha_mode: str = "q"
    q_interpretation: str = "Qsq"
    band: Tuple[float, float] = (-0.9, 0.9)
    # [diffeo]
    kind: str = "gaussian"
    t_max: Optional[float] = None
    step: Optional[float] = None
    inverse_h: str = "unit"
    corridor: str = ""
    epsilon: float = 1e-3
    # [perimeter]
    weights: List[str] = field(default_factory=lambda: list(WEIGHT_KINDS))
    # [competitors]
    count: Optional[int] = None
    amplitude_min: float = 0.05
    amplitude_max: float = 0.2
    chord: bool = True
    # [ball]
    center: Tuple[float, ...] = (0.5, 0.5)
    radius: float = 0.25
    # [tolerances]
    tolerances: Dict[str, float] = field(default_factory=dict)
    source_path: Optional[Path] = None

    # derived objects -----------------------------------------------------------------

    def grid(self) -> Grid:
        return Grid.cube(self.dim, self.lower, self.upper, self.spacing)

    def ball(self) -> Ball:
        return Ball(tuple(self.center), self.radius)

    def params(self) -> PFunctionParams:
        return PFunctionParams(C1=self.C1, C2=self.C2, delta=self.delta, theta0=None)

    def unit_direction(self) -> NDArray:
        """The front normal, from angle_deg in 2D or the direction list."""
        if self.direction is not None:
            vector = np.asarray(self.direction, dtype=float)
        else:
            angle = np.deg2rad(self.angle_deg)
            vector = np.array([np.cos(angle), np.sin(angle)])
        return vector / np.linalg.norm(vector)

    def tolerance(self, key: str) -> Union[float, int, str]:
        """A [tolerances] override, or the value from the [defaults] config table."""
        if key in self.tolerances:
            return self.tolerances[key]
        return default(key)

    @property
    def competitor_count(self) -> int:
        return int(default("competitor_count")) if self.count is None else self.count

    def with_overrides(
        self, seed: Optional[int] = None, spacing: Optional[float] = None
    ) -> Manifest:
        """A copy with the CLI's --seed and --h applied."""
        changes: Dict[str, Any] = {}
        if seed is not None:
            changes["seed"] = seed
        if spacing is not None:
            changes["spacing"] = spacing
        return replace(self, **changes)

    # validation ----------------------------------------------------------------------

    def issues(self) -> List[str]:
        """Every problem with the manifest, each naming its key."""
        issues: List[str] = []
        if not isinstance(self.name, str) or not self.name.strip():
            issues.append("name must be a nonempty string")
        if not (validation.can_be_nonneg_int(self.seed)):
            issues.append("seed must be a nonnegative integer")
        try:
            potential_from_spec(self.potential)
        except DomainError as err:
            issues.append(f"potential.spec: {err}")

        self._grid_issues(issues)
        self._field_issues(issues)
        self._parameter_issues(issues)
        self._diffeo_issues(issues)
        self._perimeter_issues(issues)

        for key, value in self.tolerances.items():
            if key not in TOLERANCE_KEYS:
                issues.append(f"tolerances.{key} is not a known tolerance")
            elif not validation.can_be_pos_float(value):
                issues.append(f"tolerances.{key} must be a positive number")
        return issues

    def _grid_issues(self, issues: List[str]) -> None:
        if self.dim not in (2, 3):
            issues.append("grid.dim must be 2 or 3")
            return
        if not validation.can_be_pos_float(self.spacing):
            issues.append("grid.spacing must be a positive number")
            return
        try:
            self.grid()
        except GridError as err:
            issues.append(f"grid: {err}")

    def _field_issues(self, issues: List[str]) -> None:
        if self.source not in SOURCES:
            issues.append(f"field.source must be one of {SOURCES}")
            return
        given = {
            "planar": self.angle_deg is not None or self.direction is not None,
            "dirichlet": bool(self.boundary),
            "file": bool(self.path),
        }
        extra = [
            name for name, present in given.items() if present and name != self.source
        ]
        if extra:
            issues.append(
                "field: exactly one field source is allowed, "
                f"got {self.source} and {extra}"
            )
        if self.source == "planar":
            if self.direction is not None:
                if not validation.is_point(self.direction, self.dim):
                    issues.append(f"field.direction must have {self.dim} components")
                elif not np.linalg.norm(np.asarray(self.direction, dtype=float)) > 0.0:
                    issues.append("field.direction must be nonzero")
            elif self.angle_deg is None:
                issues.append("field.angle_deg or field.direction is required")
            elif self.dim != 2:
                issues.append(
                    "field.angle_deg only applies to 2D grids; use field.direction"
                )
            if not validation.can_be_float(self.offset):
                issues.append("field.offset must be a number")
        if self.source == "dirichlet" and not self.boundary:
            issues.append("field.boundary is required for a dirichlet source")
        if self.source == "file" and not Path(self.path).is_file():
            issues.append(
                f"field.path must name an existing field file, got '{self.path}'"
            )

    def _parameter_issues(self, issues: List[str]) -> None:
        if self.bound not in BOUNDS:
            issues.append(f"parameters.bound must be one of {BOUNDS}")
        for key in ("C1", "C2"):
            value = getattr(self, key)
            if value is not None and not validation.in_unit_interval(value):
                issues.append(f"parameters.{key} must lie in (0, 1)")
        if self.bound == "hessian" and self.C1 is None:
            issues.append("parameters.C1 is required when parameters.bound is hessian")
        if self.bound == "q" and self.C2 is None:
            issues.append("parameters.C2 is required when parameters.bound is q")
        if self.delta is None:
            issues.append("parameters.delta is required")
        elif not validation.in_unit_interval(self.delta):
            issues.append("parameters.delta must lie in (0, 1)")
        if self.theta0_policy not in THETA0_POLICIES:
            issues.append(f"parameters.theta0_policy must be one of {THETA0_POLICIES}")
        elif self.theta0_policy == "fixed":
            if self.theta0 is None or not 0.0 < self.theta0 < 1.0 / np.sqrt(2.0):
                issues.append(
                    "parameters.theta0 must lie in (0, 1/sqrt(2)) for a fixed policy"
                )
        if not 0.0 < self.theta0_factor <= 1.0:
            issues.append("parameters.theta0_factor must lie in (0, 1]")
        if self.alpha_mode not in BOUNDS:
            issues.append(f"parameters.alpha_mode must be one of {BOUNDS}")
        if self.q_interpretation not in INTERPRETATIONS:
            issues.append(
                f"parameters.q_interpretation must be one of {INTERPRETATIONS}"
            )
        lo, hi = self.band
        if not -1.0 <= lo < hi <= 1.0:
            issues.append("parameters.band must satisfy -1 <= lower < upper <= 1")

    def _diffeo_issues(self, issues: List[str]) -> None:
        if self.kind not in DIFFEO_KINDS:
            issues.append(f"diffeo.kind must be one of {DIFFEO_KINDS}")
        # the power kind takes c0 (or c3) from the bound in force
        if self.kind == "power":
            needed = "C1" if self.bound == "hessian" else "C2"
            if getattr(self, needed) is None:
                issues.append(f"diffeo.kind power needs parameters.{needed}")
        if self.kind == "hadamard" and not self.inverse_h:
            issues.append("diffeo.inverse_h is required for the hadamard kind")
        if self.kind == "corridor" and not self.corridor:
            issues.append("diffeo.corridor is required for the corridor kind")
        for key in ("t_max", "step"):
            value = getattr(self, key)
            if value is not None and not validation.can_be_pos_float(value):
                issues.append(f"diffeo.{key} must be a positive number")
        if not 0.0 < self.epsilon < 1.0:
            issues.append("diffeo.epsilon must lie in (0, 1)")

    def _perimeter_issues(self, issues: List[str]) -> None:
        if not self.weights:
            issues.append("perimeter.weights must name at least one weight")
        for kind in self.weights:
            if kind not in WEIGHT_KINDS:
                issues.append(f"perimeter.weights: unknown weight '{kind}'")
        if "power_alpha" in self.weights:
            needed = "C1" if self.alpha_mode == "hessian" else "C2"
            if getattr(self, needed) is None:
                issues.append(
                    f"perimeter.weights power_alpha needs parameters.{needed}"
                )
        if self.count is not None and not validation.can_be_nonneg_int(self.count):
            issues.append("competitors.count must be a nonnegative integer")
        if not 0.0 <= self.amplitude_min <= self.amplitude_max:
            issues.append(
                "competitors.amplitude_min and amplitude_max need 0 <= min <= max"
            )
        if not validation.is_point(self.center, self.dim):
            issues.append(f"ball.center must have {self.dim} components")
        if not validation.can_be_pos_float(self.radius):
            issues.append("ball.radius must be a positive number")

    def validate(self) -> Manifest:
        issues = self.issues()
        if issues:
            for issue in issues:
                LOGGER.error("%s", issue)
            raise ManifestError(issues)
        LOGGER.debug("Manifest %s validated", self.name)
        return self

    # TOML ----------------------------------------------------------------------------

    @classmethod
    def from_toml(cls, text: str, source_path: Optional[Path] = None) -> Manifest:
        """Reads a manifest; unknown tables and keys are reported together."""
        try:
            doc = loads(text).unwrap()
        except Exception as err:  # tomlkit raises several parse error types
            raise ManifestError([f"could not parse the manifest: {err}"]) from err
        issues: List[str] = []
        values: Dict[str, Any] = {"source_path": source_path}
        layout = {
            "potential": {"spec": "potential"},
            "grid": {k: k for k in ("dim", "lower", "upper", "spacing")},
            "field": {
                "source": "source",
                "angle_deg": "angle_deg",
                "direction": "direction",
                "offset": "offset",
                "boundary": "boundary",
                "path": "path",
            },
            "parameters": {
                k: k
                for k in (
                    "bound",
                    "C1",
                    "C2",
                    "delta",
                    "theta0_policy",
                    "theta0",
                    "theta0_factor",
                    "alpha_mode",
                    "q_interpretation",
                    "band",
                )
            },
            "diffeo": {k: k for k in DIFFEO_KEYS},
            "perimeter": {"weights": "weights"},
            "competitors": {
                "count": "count",
                "amplitude_min": "amplitude_min",
                "amplitude_max": "amplitude_max",
                "chord": "chord",
            },
            "ball": {"center": "center", "radius": "radius"},
        }
        for key, value in doc.items():
            if key in ("name", "seed"):
                values[key] = value
            elif key == "tolerances":
                values["tolerances"] = dict(value)
            elif key in layout:
                if not isinstance(value, dict):
                    issues.append(f"{key} must be a table")
                    continue
                for inner, inner_value in value.items():
                    if inner not in layout[key]:
                        issues.append(f"{key}.{inner} is not a known key")
                        continue
                    values[layout[key][inner]] = inner_value
            else:
                issues.append(f"{key} is not a known table or key")
        if "name" not in values:
            issues.append("name is required")
        for key in ("band", "center"):
            if key in values:
                try:
                    values[key] = tuple(float(v) for v in values[key])
                except (TypeError, ValueError):
                    issues.append(f"{key} must be a list of numbers")
                    values.pop(key)
        if "band" in values and len(values["band"]) != 2:
            issues.append("parameters.band must have two entries")
            values.pop("band")
        if issues:
            raise ManifestError(issues)
        return cls(**values).validate()

    @classmethod
    def load(cls, path: Union[str, Path]) -> Manifest:
        path = Path(path).resolve()
        if not path.is_file():
            raise ManifestError([f"Could not find a manifest at {path}"])
        LOGGER.info("Loading the manifest at %s", path)
        return cls.from_toml(path.read_text(), source_path=path)

    def to_document(self) -> document:
        """The manifest as a TOML document, with the values actually used."""
        doc = document()
        doc.add(comment(f"phasewiz manifest {self.name}"))
        doc["name"] = self.name
        doc["seed"] = self.seed

        pot = table()
        pot["spec"] = self.potential
        doc["potential"] = pot

        grid = table()
        grid["dim"] = self.dim
        grid["lower"] = self.lower
        grid["upper"] = self.upper
        grid["spacing"] = self.spacing
        doc["grid"] = grid

        source = table()
        source["source"] = self.source
        if self.angle_deg is not None:
            source["angle_deg"] = self.angle_deg
        if self.direction is not None:
            source["direction"] = array(list(self.direction))
        source["offset"] = self.offset
        if self.boundary:
            source["boundary"] = self.boundary
        if self.path:
            source["path"] = self.path
        doc["field"] = source

        params = table()
        params["bound"] = self.bound
        for key in ("C1", "C2", "delta", "theta0"):
            if getattr(self, key) is not None:
                params[key] = getattr(self, key)
        params["theta0_policy"] = self.theta0_policy
        params["theta0_factor"] = self.theta0_factor
        params["alpha_mode"] = self.alpha_mode
        params["q_interpretation"] = self.q_interpretation
        params["band"] = array(list(self.band))
        doc["parameters"] = params

        diffeo = table()
        diffeo["kind"] = self.kind
        for key in ("t_max", "step"):
            if getattr(self, key) is not None:
                diffeo[key] = getattr(self, key)
        diffeo["inverse_h"] = self.inverse_h
        if self.corridor:
            diffeo["corridor"] = self.corridor
        diffeo["epsilon"] = self.epsilon
        doc["diffeo"] = diffeo

        perimeter = table()
        perimeter["weights"] = array(list(self.weights))
        doc["perimeter"] = perimeter

        competitors = table()
        competitors["count"] = self.competitor_count
        competitors["amplitude_min"] = self.amplitude_min
        competitors["amplitude_max"] = self.amplitude_max
        competitors["chord"] = self.chord
        doc["competitors"] = competitors

        ball = table()
        ball["center"] = array(list(self.center))
        ball["radius"] = self.radius
        doc["ball"] = ball

        if self.tolerances:
            tolerances = table()
            for key, value in self.tolerances.items():
                tolerances[key] = value
            doc["tolerances"] = tolerances
        return doc

    def dump(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dumps(self.to_document()))
        return path
