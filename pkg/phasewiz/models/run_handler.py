"""Handles a verification run: builds every object a manifest names and checks it."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from datetime import date
from logging import DEBUG, FileHandler, Formatter, getLogger
from pathlib import Path
from time import time
from typing import TYPE_CHECKING

import numpy as np

from phasewiz.errors import EmptyRegionError, MissingLevelSetError
from phasewiz.helpers import calculus
from phasewiz.helpers.calibration import divergence_certificate
from phasewiz.helpers.competitors import generate_competitors
from phasewiz.helpers.configuration import update_config
from phasewiz.helpers.export import (
    export_certificates,
    export_facets,
    export_gaps,
    export_phi,
    export_profile,
    export_vertices,
)
from phasewiz.helpers.extraction import extract_level_set
from phasewiz.helpers.perimeter import (
    RadiusGuard,
    check_condition_325,
    check_integrand_conditions,
    d0_and_radius_guard,
    minimality_gap,
)
from phasewiz.helpers.pfunction import (
    alpha_exponent,
    check_hessian_bound,
    check_Q_bound,
    check_subharmonic,
    elliptic_operator_L,
    gradient_floor,
    gradient_norm_identities,
    modica_deficit,
    p_function,
    subharmonic_lower_bound,
)
from phasewiz.helpers.plot import plot_curves, plot_overlay
from phasewiz.helpers.solver import SolveConfig, boundary_from_spec, solve_dirichlet
from phasewiz.helpers.transform import (
    analytic_laplacian_w,
    certificate_band,
    sign_consistency,
    transform,
)
from phasewiz.models.density import build_weight
from phasewiz.models.diffeomorphism import (
    build_corridor,
    build_gaussian,
    build_hadamard,
    build_power,
)
from phasewiz.models.field import ScalarField
from phasewiz.models.potential import check_hypotheses_H, potential_from_spec
from phasewiz.models.profile import planar_solution, solve_profile
from phasewiz.models.report import CheckRow, Report

if TYPE_CHECKING:
    from logging import Logger
    from typing import Dict, List, Optional, Union

    from phasewiz.helpers.calibration import CalibrationCertificate
    from phasewiz.helpers.perimeter import GapResult
    from phasewiz.models.density import DensityWeight
    from phasewiz.models.diffeomorphism import Diffeomorphism
    from phasewiz.models.level_set import Competitor, LevelSet
    from phasewiz.models.manifest import Manifest
    from phasewiz.models.potential import DoubleWellPotential
    from phasewiz.models.profile import HeteroclinicProfile

# each stage runs every stage before it
STAGES = ("profile", "solve", "analyze", "transform", "perimeter", "verify")
FORMAT = "%(asctime)s - %(thread)d - %(levelname)s - %(name)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

PROFILE_TOLERANCE = 1e-8
PROFILE_ODE_TOLERANCE = 1e-4
MODICA_TOLERANCE = 1e-3
QSQ_TOLERANCE = 1e-4
IDENTITY_TOLERANCE = 1e-2
# |phi^-1| stays below this for the gaussian kind
THETA0_CAP = 0.999 / np.sqrt(2.0)


class RunHandler:
    """Runs one manifest through the pipeline and writes its artifacts."""

    # pylint: disable=too-many-instance-attributes

    def __init__(self, manifest: Manifest, out_dir: Union[str, Path]) -> None:
        self.manifest = manifest
        self.logger: Logger = getLogger("phasewiz.harness")
        self.out_dir = Path(out_dir).joinpath(manifest.name).resolve()
        self.log_handler: FileHandler = None
        self.pool = ThreadPoolExecutor(max_workers=4)
        self.report = Report(manifest.name, manifest.seed, manifest.grid().describe())

        self.potential: DoubleWellPotential = None
        self.profile: HeteroclinicProfile = None
        self.u: ScalarField = None
        self.theta0: Optional[float] = None
        self.phi: Diffeomorphism = None
        self.w: ScalarField = None
        self.surface: LevelSet = None
        self.guard: RadiusGuard = None
        self.competitors: List[Competitor] = []
        self.weights: Dict[str, DensityWeight] = {}
        self.gaps: List[GapResult] = []
        self.certificates: List[CalibrationCertificate] = []

    @property
    def h(self) -> float:
        return self.manifest.spacing

    def tolerance(self, key: str) -> float:
        return float(self.manifest.tolerance(key))

    def update_log_handler(self) -> None:
        """Sets up the per-run log file, replacing the handler of a previous run."""
        id = "".join(char for char in self.manifest.name if char.isalnum())
        log_file = f"{time():.0f}_{id}_{date.today()}.txt"
        logs_dir = self.out_dir.joinpath("logs")
        logs_dir.mkdir(parents=True, exist_ok=True)
        package_logger = getLogger("phasewiz")
        if self.log_handler in package_logger.handlers:  # remove the old one
            package_logger.removeHandler(self.log_handler)
            self.log_handler.close()
        self.log_handler = FileHandler(logs_dir.joinpath(log_file))
        self.log_handler.setFormatter(Formatter(FORMAT, DATE_FORMAT))
        self.log_handler.setLevel(DEBUG)
        package_logger.addHandler(self.log_handler)
        self.logger.info("Set up a log file at %s", log_file)

    def close(self) -> None:
        self.pool.shutdown(wait=True)
        if self.log_handler is not None:
            getLogger("phasewiz").removeHandler(self.log_handler)
            self.log_handler.close()

    def run(self, stage: str = "verify") -> Report:
        """Runs every stage up to and including `stage` and writes the artifacts."""
        if stage not in STAGES:
            raise ValueError(f"unknown stage '{stage}', use one of {STAGES}")
        last = STAGES.index(stage)
        self.update_log_handler()
        self.logger.info(
            "Running %s through the %s stage (seed %s, %s)",
            self.manifest.name,
            stage,
            self.manifest.seed,
            self.report.grid,
        )
        self.manifest.dump(self.out_dir.joinpath("manifest.toml"))
        try:
            steps = (
                self.run_profile,
                self.build_field,
                self.analyze_field,
                self.build_transform,
                self.check_perimeters,
                self.certify,
            )
            for step in steps[: last + 1]:
                if not step():
                    name = step.__name__
                    self.logger.error("Stopping after %s: a prerequisite failed", name)
                    break
            self.write_plots()
            self.report.export(self.out_dir.joinpath("report.csv"))
        finally:
            self.close()
        if self.manifest.source_path is not None:
            update_config("recents", "manifest", str(self.manifest.source_path))
        update_config("recents", "out_dir", str(self.out_dir.parent))
        return self.report

    # stages ----------------------------------------------------------------------
    # each returns False when later stages cannot run

    def run_profile(self) -> bool:
        self.potential = potential_from_spec(self.manifest.potential)
        hypotheses = check_hypotheses_H(self.potential)
        self.report.add(
            CheckRow(
                check="hypotheses_H",
                field=self.potential.name,
                passed=hypotheses.passed,
                note=";".join(hypotheses.failing_clauses()),
            )
        )
        if not hypotheses.passed:
            return False
        self.profile = solve_profile(
            self.potential,
            t_max=self.tolerance("profile_t_max"),
            step=self.tolerance("profile_step"),
        )
        equipartition, ode = self.profile.residuals()
        step = self.profile.step
        for check, value, tol in (
            ("profile_equipartition", equipartition, PROFILE_TOLERANCE),
            ("profile_ode", ode, PROFILE_ODE_TOLERANCE),
        ):
            self.report.add(
                CheckRow(
                    check=check,
                    field="g",
                    passed=value <= tol,
                    h=step,
                    max=value,
                    tolerance=tol,
                )
            )
        if self.potential.is_canonical:
            t = np.linspace(-6.0, 6.0, 2401)
            error = float(np.max(np.abs(self.profile(t) - np.tanh(t / np.sqrt(2.0)))))
            self.report.add(
                CheckRow(
                    check="profile_vs_tanh",
                    field="g",
                    passed=error <= PROFILE_TOLERANCE,
                    band="[-6, 6]",
                    h=step,
                    max=error,
                    tolerance=PROFILE_TOLERANCE,
                )
            )
        export_profile(self.profile, self.out_dir.joinpath("profile.csv"))
        return True

    def build_field(self) -> bool:
        manifest = self.manifest
        grid = manifest.grid()
        if manifest.source == "planar":
            self.u = planar_solution(
                self.profile, manifest.unit_direction(), manifest.offset, grid
            )
        elif manifest.source == "dirichlet":
            boundary = boundary_from_spec(manifest.boundary, grid, self.profile)
            cfg = SolveConfig(tolerance=self.tolerance("solver_tolerance"))
            result = solve_dirichlet(
                self.potential, grid, boundary, cfg, record_every=100
            )
            self.u = result.field
            self.report.add(
                CheckRow(
                    check="solver_residual",
                    field=self.u.name,
                    passed=result.converged,
                    h=self.h,
                    max=result.certified_residual,
                    tolerance=cfg.tolerance,
                    count=result.iterations,
                    note=f"newton_steps={result.newton_steps}",
                )
            )
            if result.energy_history:
                self.report.add(
                    CheckRow.info(
                        "energy", self.u.name, result.energy_history[-1], self.h
                    )
                )
        else:
            self.u = ScalarField.load(manifest.path)
            if self.u.grid.shape != grid.shape:
                self.logger.warning(
                    "The field file grid %s differs from the manifest grid %s",
                    self.u.grid.describe(),
                    grid.describe(),
                )
        self.u.dump(self.out_dir.joinpath("fields", "u.txt"))
        return True

    def analyze_field(self) -> bool:
        manifest, u, pot, h = self.manifest, self.u, self.potential, self.h
        grad_floor = self.tolerance("grad_floor")
        wide = (-0.9, 0.9)

        deficit = modica_deficit(u, pot)
        self.report.add(
            CheckRow.from_stats(
                calculus.ResidualStats.over(
                    "modica_deficit",
                    deficit.values,
                    calculus.analysis_mask(u),
                    MODICA_TOLERANCE,
                ),
                u.name,
                h,
            )
        )
        qsq = calculus.compute_Qsq(u, grad_floor)
        self.report.add(
            CheckRow.from_stats(
                calculus.ResidualStats.over(
                    "qsq",
                    qsq.values,
                    calculus.analysis_mask(u, wide, grad_floor),
                    QSQ_TOLERANCE,
                ),
                u.name,
                h,
                band=wide,
            )
        )
        self.report.add(
            CheckRow.from_stats(
                calculus.check_P_identity(u, pot, wide, grad_floor, IDENTITY_TOLERANCE),
                u.name,
                h,
                band=wide,
            )
        )
        ball = manifest.ball()
        self.report.add(
            CheckRow.info("oscillation", u.name, calculus.oscillation(u, ball), h)
        )
        try:
            ratio = calculus.harnack_ratio(u, ball, manifest.band)
            self.report.add(CheckRow.info("harnack_ratio", u.name, ratio, h))
        except EmptyRegionError as err:
            self.logger.info("%s", err)

        params = manifest.params()
        if manifest.bound == "hessian":
            self.check_hessian_chain()
        else:
            self.check_q_chain()
        if manifest.C2 is not None:
            for stats in gradient_norm_identities(u, pot, manifest.C2, grad_floor):
                stats.tolerance = IDENTITY_TOLERANCE
                self.report.add(
                    CheckRow.from_stats(stats, u.name, h, constants={"C2": manifest.C2})
                )

        alpha = alpha_exponent(params, manifest.alpha_mode)
        self.report.add(
            CheckRow.info(
                f"alpha[{alpha.mode}]",
                u.name,
                alpha.value,
                h,
                constants={"stated": alpha.statement_value},
                note="discrepancy" if alpha.discrepancy else "",
            )
        )

        measured = gradient_floor(u, manifest.delta)
        self.report.add(
            CheckRow.info(
                "gradient_floor",
                u.name,
                measured,
                h,
                constants={"delta": manifest.delta},
            )
        )
        if manifest.theta0_policy == "fixed":
            self.theta0 = manifest.theta0
        else:
            self.theta0 = manifest.theta0_factor * measured
            if self.theta0 >= THETA0_CAP:
                self.logger.warning(
                    "theta0 = %.6g from the measured floor is capped at %.6g",
                    self.theta0,
                    THETA0_CAP,
                )
                self.theta0 = THETA0_CAP
        return True

    def check_hessian_chain(self) -> None:
        manifest, u, pot, h = self.manifest, self.u, self.potential, self.h
        sign_tol = self.tolerance("sign_tolerance_factor") * h
        bound = check_hessian_bound(u, manifest.C1, manifest.band)
        self.report.add(
            CheckRow(
                check=bound.name,
                field=u.name,
                passed=bound.passed,
                band=f"[{manifest.band[0]:.6g}, {manifest.band[1]:.6g}]",
                constants=f"C1={manifest.C1}",
                h=h,
                max=bound.empirical_constant,
                count=bound.count,
                tolerance=bound.constant,
                note=f"violations={bound.violations}",
            )
        )
        P = p_function(u, pot, manifest.params(), "hessian")
        lower = subharmonic_lower_bound(u, pot, manifest.C1)
        regions = (
            ("subharmonic_lower_bound", bound.ok_mask, lower),
            ("subharmonic", bound.ok_mask & (lower.values >= 0.0), None),
        )
        for check, mask, reference in regions:
            try:
                result = check_subharmonic(P, mask, sign_tol, lower=reference)
            except EmptyRegionError as err:
                self.logger.info("%s: %s", check, err)
                continue
            self.report.add(
                CheckRow(
                    check=check,
                    field=P.name,
                    passed=result.passed,
                    h=h,
                    min=result.min_laplacian,
                    count=result.count,
                    tolerance=result.tolerance,
                    note=f"violations={len(result.violations)}",
                )
            )

    def check_q_chain(self) -> None:
        manifest, u, pot, h = self.manifest, self.u, self.potential, self.h
        bound = check_Q_bound(u, manifest.C2, manifest.band, manifest.q_interpretation)
        self.report.add(
            CheckRow(
                check=bound.name,
                field=u.name,
                passed=bound.passed,
                band=f"[{manifest.band[0]:.6g}, {manifest.band[1]:.6g}]",
                constants=f"C2={manifest.C2}",
                h=h,
                max=bound.empirical_constant,
                count=bound.count,
                tolerance=bound.constant,
                note=f"violations={bound.violations}",
            )
        )
        grad_floor = self.tolerance("grad_floor")
        operator = elliptic_operator_L(u, pot, manifest.C2, grad_floor)
        self.report.add(
            CheckRow.from_stats(
                operator.stats(IDENTITY_TOLERANCE),
                u.name,
                h,
                constants={"C2": manifest.C2},
            )
        )
        region = operator.mask & bound.ok_mask
        if region.any():
            floor = float(operator.J.values[region].min())
            tol = self.tolerance("sign_tolerance_factor") * h
            self.report.add(
                CheckRow(
                    check="J_nonnegative",
                    field=u.name,
                    passed=floor >= -tol,
                    h=h,
                    min=floor,
                    count=int(region.sum()),
                    tolerance=tol,
                )
            )

    def build_phi(self) -> Diffeomorphism:
        manifest = self.manifest
        t_max = manifest.t_max or self.tolerance("phi_t_max")
        step = manifest.step or self.tolerance("phi_step")
        if manifest.kind == "gaussian":
            return build_gaussian(self.theta0, t_max, step)
        if manifest.kind == "power":
            return build_power(manifest.params().constant(manifest.bound), t_max, step)
        if manifest.kind == "hadamard":
            return build_hadamard(
                self.potential,
                self.theta0,
                manifest.inverse_h,
                manifest.band,
                t_max,
                step,
            )
        return build_corridor(manifest.corridor, t_max, step, manifest.epsilon)

    def build_transform(self) -> bool:
        manifest, u, h = self.manifest, self.u, self.h
        self.phi = self.build_phi()
        export_phi(self.phi, self.out_dir.joinpath("phi.csv"))
        self.w = transform(u, self.phi)
        self.w.dump(self.out_dir.joinpath("fields", "w.txt"))

        # the gaussian and hadamard certificates hold on the delta band only
        delta = manifest.delta if manifest.kind in ("gaussian", "hadamard") else None
        band = certificate_band(self.w, self.phi, delta)
        tolerance = self.tolerance("sign_tolerance_factor") * h
        sign = sign_consistency(self.w, u, band, tolerance)
        self.report.add(
            CheckRow(
                check=f"sign_consistency[{self.phi.kind}]",
                field=self.w.name,
                passed=sign.passed,
                constants=f"theta0={self.theta0}" if delta is not None else "",
                h=h,
                min=sign.fraction,
                count=sign.count,
                tolerance=sign.tolerance,
                note=f"failing={len(sign.failing)};excluded={sign.excluded}",
            )
        )
        self.report.add(
            CheckRow.from_stats(
                analytic_laplacian_w(
                    u, self.phi, self.potential, w=self.w, tolerance=IDENTITY_TOLERANCE
                ),
                self.w.name,
                h,
            )
        )
        return True

    def check_perimeters(self) -> bool:
        manifest, h = self.manifest, self.h
        self.surface = extract_level_set(self.w, 0.0, "E")
        export_vertices(self.surface, self.out_dir.joinpath("level_set_vertices.csv"))
        export_facets(self.surface, self.out_dir.joinpath("level_set_facets.csv"))

        condition = check_condition_325(self.u, manifest.delta)
        if condition.reached:
            try:
                self.guard = d0_and_radius_guard(self.w, self.phi, manifest.delta)
            except MissingLevelSetError as err:
                self.logger.warning("%s", err)
                self.guard = RadiusGuard(np.inf, np.inf)
        else:
            self.guard = RadiusGuard(np.inf, np.inf)
        self.report.add(
            CheckRow.info(
                "d0",
                self.w.name,
                self.guard.d0,
                h,
                constants={"delta": manifest.delta, "max_abs_u": condition.max_abs},
                note="" if condition.reached else "wells not reached on the grid",
            )
        )

        ball = manifest.ball()
        alpha = None
        if "power_alpha" in manifest.weights:
            alpha = alpha_exponent(manifest.params(), manifest.alpha_mode).value
        band = ball.mask(self.u.grid)
        for kind in manifest.weights:
            weight = build_weight(kind, self.u, self.w, self.theta0, alpha)
            integrand, weight = check_integrand_conditions(
                weight, band, manifest.seed, apply_rescale=True
            )
            self.weights[kind] = weight
            self.report.add(
                CheckRow(
                    check=f"integrand[{kind}]",
                    field=self.u.name,
                    passed=integrand.passed
                    and abs(integrand.post_rescale_min - 1.0) <= 1e-12,
                    constants=(
                        f"mu0={integrand.mu0:.17g};"
                        f"lambda={integrand.lambda_estimate:.17g}"
                    ),
                    h=h,
                    min=integrand.post_rescale_min,
                    max=integrand.homogeneity_error,
                    tolerance=1e-12,
                )
            )

        self.competitors = generate_competitors(
            self.surface,
            ball,
            manifest.competitor_count,
            manifest.seed,
            (manifest.amplitude_min, manifest.amplitude_max),
            manifest.chord,
        )
        factor = self.tolerance("gap_tolerance_factor")
        kinds = [
            kind for kind in manifest.weights if self.guard.allows(ball.radius, kind)
        ]
        for kind in manifest.weights:
            if kind not in kinds:
                self.report.add(
                    CheckRow(
                        check=f"radius_guard[{kind}]",
                        field=self.w.name,
                        passed=False,
                        h=h,
                        max=ball.radius,
                        tolerance=self.guard.r_max,
                    )
                )

        def batch(kind: str) -> List[GapResult]:
            weight = self.weights[kind]
            return [
                minimality_gap(self.surface, F, weight, ball, self.guard, factor)
                for F in self.competitors
            ]

        # batches come back in weight order
        for kind, results in zip(kinds, self.pool.map(batch, kinds)):
            self.gaps.extend(results)
            self.add_gap_rows(kind, results)
        export_gaps(self.gaps, ball.radius, self.out_dir.joinpath("gaps.csv"))
        return True

    def add_gap_rows(self, kind: str, results: List[GapResult]) -> None:
        h = self.h
        identity = [r for r in results if r.competitor == "identity"]
        if identity:
            self.report.add(
                CheckRow(
                    check=f"zero_perturbation_gap[{kind}]",
                    field="E",
                    passed=all(r.gap == 0.0 for r in identity),
                    h=h,
                    max=max(abs(r.gap) for r in identity),
                    tolerance=0.0,
                )
            )
        gaps = np.array([r.gap for r in results])
        worst = int(np.argmin(gaps))
        large = [r for r in results if r.arc_excess > 20.0 * h]
        strict = all(r.gap > 0.0 for r in large)
        self.report.add(
            CheckRow(
                check=f"minimality_gap[{kind}]",
                field="E",
                passed=all(r.passed for r in results) and strict,
                h=h,
                min=float(gaps[worst]),
                max=float(gaps.max()),
                mean=float(gaps.mean()),
                count=len(results),
                tolerance=results[worst].tolerance,
                note=f"strict={len(large)}",
            )
        )

    def certify(self) -> bool:
        manifest, h = self.manifest, self.h
        ball = manifest.ball()
        tolerance = self.tolerance("divergence_tolerance")
        sign_tolerance = self.tolerance("sign_tolerance_factor") * h
        boundary = self.tolerance("boundary_identity_factor")

        def certificate(F: Competitor) -> CalibrationCertificate:
            return divergence_certificate(
                self.w, self.surface, F, ball, tolerance, sign_tolerance, boundary
            )

        self.certificates = list(self.pool.map(certificate, self.competitors))
        export_certificates(
            self.certificates, self.out_dir.joinpath("certificates.csv")
        )
        active = [cert for cert in self.certificates if not cert.trivial]
        if not active:
            self.logger.warning("Every competitor was the zero perturbation")
            return True
        residuals = np.array([cert.relative_residual for cert in active])
        self.report.add(
            CheckRow(
                check="calibration_divergence",
                field=self.w.name,
                passed=all(cert.divergence_passed for cert in active),
                h=h,
                max=float(residuals.max()),
                mean=float(residuals.mean()),
                count=len(active),
                tolerance=tolerance,
            )
        )
        self.report.add(
            CheckRow(
                check="calibration_sign",
                field=self.w.name,
                passed=all(cert.sign_passed for cert in active),
                h=h,
                count=sum(cert.sign_nodes for cert in active),
                tolerance=sign_tolerance,
                note=f"failing={sum(len(cert.failing) for cert in active)}",
            )
        )
        self.report.add(
            CheckRow(
                check="calibration_boundary",
                field=self.w.name,
                passed=all(cert.boundary_passed for cert in active),
                h=h,
                max=max(cert.boundary_max for cert in active),
                tolerance=active[0].boundary_tolerance,
                note=f"bound_excess={max(cert.bound_excess for cert in active):.3g}",
            )
        )
        return True

    def write_plots(self) -> None:
        curves = []
        if self.profile is not None:
            t = self.profile.t_grid
            keep = np.abs(t) <= 6.0
            curves.append(("g", t[keep], self.profile.g_values[keep]))
        if self.phi is not None:
            t = self.phi.t_grid
            keep = np.abs(t) <= 6.0
            curves.append((f"phi[{self.phi.kind}]", t[keep], self.phi.phi_values[keep]))
        if curves:
            plot_curves(
                curves, self.out_dir.joinpath("curves.svg"), title=self.manifest.name
            )
        if self.surface is not None:
            plot_overlay(
                self.surface,
                self.out_dir.joinpath("overlay.svg"),
                ball=self.manifest.ball(),
                competitors=self.competitors[:20],
                title=self.manifest.name,
            )
