"""Fiberwise Ricci-flat metrics, the semi-flat form, the fiber-constant
density F, the base limit equation and the generalized Kahler-Einstein
residual.

Pipeline, run once per scenario:

1. on every fiber solve (omega_y + i d dbar zeta_y)^(n-m) = e^{F_y}
   omega_y^(n-m) and assemble zeta into a global potential;
2. form the semi-flat representative omega_SF = omega_X + i d dbar zeta
   (Kahler in the fiber directions only, not necessarily nonnegative);
3. divide the Ricci-flat volume form Omega from the t = 1 solve by
   omega_SF^(n-m) /\ omega_0^m; the quotient F is constant on fibers and
   descends to the base (checked, and cross-checked against the
   pushforward route f_* Omega / omega_Y^m);
4. solve the base Monge-Ampere equation
   (omega_Y + i d dbar psi)^m = kappa F omega_Y^m and compare the
   collapsing potentials phi_t against the pullback of psi;
5. verify Ric(omega) = Ric(omega_Y) - i d dbar log F and, for isotrivial
   fibers, Ric(omega) = omega_WP = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _parallel, _spectral
from .diagnostics import ExponentFit, exponent_fit
from .errors import ConsistencyError, FiberSolveError, ScenarioError
from .fibration import (BaseField, BaseForm, FiberForm, base_ddbar,
                        base_ricci_form, base_top_density, fiber_block,
                        fiber_volume_density, pullback, pushforward_volume)
from .geometry import (HermitianFormField, PeriodicScalarField,
                       gradient_norm_sq, mixed_wedge_density, top_density)
from .scenario import AdiabaticFamily
from .solver import (SolveReport, SolverConfig, metric_coefficients,
                     newton_monge_ampere, solve_potential)

FIBER_RESIDUAL_TOL = 1e-9
FIBER_CONSTANCY_TOL = 1e-8
SOLVABILITY_TOL = 1e-10


@dataclass(frozen=True)
class FiberRicciData:
    """Fiberwise Ricci potentials and Ricci-flat fiber metrics.

    ``ricci_potential`` holds F_y over the whole grid (one fiber scalar
    per base point); ``zeta`` is the assembled global potential with
    omega_SF|fiber = omega_y + i d dbar zeta_y.
    """

    family: AdiabaticFamily
    ricci_potential: np.ndarray
    zeta: PeriodicScalarField
    max_residual: float
    max_normalization_defect: float

    def potential_on_fiber(self, y: tuple[int, ...]) -> np.ndarray:
        fib = self.family.fibration
        sl = (slice(None),) * (2 * fib.fiber_dim) + tuple(y)
        return self.ricci_potential[sl]

    def zeta_on_fiber(self, y: tuple[int, ...]) -> np.ndarray:
        fib = self.family.fibration
        sl = (slice(None),) * (2 * fib.fiber_dim) + tuple(y)
        return self.zeta.values[sl]


@dataclass(frozen=True)
class LimitConstants:
    """Normalization data for the base limit equation."""

    mixed_volume: float      # integral omega_0^m /\ omega_X^(n-m)
    total_volume: float      # integral omega_1^n
    fiber_volume: float      # common fiber volume under omega_X

    @property
    def factor(self) -> float:
        return self.mixed_volume / (self.total_volume * self.fiber_volume)

    @classmethod
    def of(cls, family: AdiabaticFamily) -> "LimitConstants":
        return cls(family.volume_mixed, family.volume_1,
                   family.fiber_volume_constant)


@dataclass(frozen=True)
class LimitData:
    """Solution of the base limit equation and its ingredients."""

    F: BaseField
    psi_lim: BaseField
    omega: BaseForm
    omega_Y: BaseForm
    constants: LimitConstants
    solvability_defect: float
    residual: float
    omega_top: PeriodicScalarField | None = None


def fiber_ricci_data(omega_y: FiberForm) -> np.ndarray:
    """Ricci potential F_y of one fiber metric, in closed torus form:

    F_y = -log det(h) + c with the gauge
    integral (e^{F_y} - 1) omega_y^(n-m) = 0.
    """
    d = omega_y.fibration.fiber_dim
    if not omega_y.metric_flag:
        raise ScenarioError("fiber Ricci potential requires a fiber metric")
    det = np.linalg.det(omega_y.coeffs).real
    weight = math.factorial(d) * (2.0 ** d) * det
    volume = weight.mean()
    return -np.log(det) + math.log(volume / (math.factorial(d) * 2.0 ** d))


def _fiber_weighted_mean(values: np.ndarray, weight: np.ndarray,
                         axes: tuple[int, ...] | None = None) -> np.ndarray:
    if axes is None:
        return (values * weight).mean() / weight.mean()
    return (values * weight).mean(axis=axes) / weight.mean(axis=axes)


def solve_fiber_ricci_flat(
    omega_y: FiberForm,
    ricci_potential: np.ndarray,
    method: str = "auto",
) -> tuple[np.ndarray, FiberForm]:
    """Solve (omega_y + i d dbar zeta)^(n-m) = e^{F_y} omega_y^(n-m).

    For one-dimensional fibers the equation is linear and solved
    spectrally; ``method='newton'`` forces the nonlinear path (the two
    agree to 1e-10).  The gauge is integral zeta omega_y^(n-m) = 0.
    """
    fib = omega_y.fibration
    d = fib.fiber_dim
    h = omega_y.coeffs
    weight = math.factorial(d) * (2.0 ** d) * np.linalg.det(h).real
    if method == "auto":
        method = "linear" if d == 1 else "newton"
    if method == "linear":
        if d != 1:
            raise ScenarioError("linear fiber solve only for one-dimensional fibers")
        source = (np.exp(ricci_potential) - 1.0) * h[..., 0, 0].real
        zeta = _spectral.constant_coefficient_solve(
            source, np.array([[1.0]]), 1)
    elif method == "newton":
        log_rhs = ricci_potential + np.log(np.linalg.det(h).real)
        config = SolverConfig(residual_tol=1e-12, max_iter=60)
        zeta, _ = newton_monge_ampere(h, log_rhs, d, config)
    else:
        raise ScenarioError(f"unknown fiber solve method {method!r}")
    zeta = zeta - _fiber_weighted_mean(zeta, weight)
    h_sf = h + _spectral.ddbar(zeta, d)
    sf = FiberForm(fib, h_sf, metric_flag=False).coeffs  # validates hermiticity
    residual = np.abs(
        np.linalg.det(sf).real - np.exp(ricci_potential) * np.linalg.det(h).real
    ).max()
    if residual > FIBER_RESIDUAL_TOL:
        raise FiberSolveError(
            f"fiber Ricci-flat residual {residual:.3e} exceeds {FIBER_RESIDUAL_TOL}",
            fiber_index=(),
        )
    return zeta, FiberForm(fib, h_sf, metric_flag=True)


def build_fiber_ricci_data(family: AdiabaticFamily) -> FiberRicciData:
    """Fiberwise Ricci-flat solves over every base point.

    One-dimensional fibers are solved for all base points at once (the
    equation is linear and the spectral inverse acts on the fiber axes
    only); higher-dimensional fibers reuse the Newton core per fiber.
    """
    fib = family.fibration
    d = fib.fiber_dim
    h_fib = fiber_block(family.omega_X.coeffs, fib)
    det = np.linalg.det(h_fib).real
    weight = fiber_volume_density(family.omega_X, fib)
    volumes = weight.mean(axis=fib.fiber_axes)
    c = np.log(volumes / (math.factorial(d) * 2.0 ** d))
    potential = -np.log(det) + pullback(c, fib)

    norm_defect = float(np.abs(
        ((np.exp(potential) - 1.0) * weight).mean(axis=fib.fiber_axes)
    ).max())

    if d == 1:
        source = (np.exp(potential) - 1.0) * h_fib[..., 0, 0].real
        zeta = _spectral.constant_coefficient_solve(
            source, np.array([[1.0]]), 1, axes=fib.fiber_axes)
        zeta = zeta - pullback(
            _fiber_weighted_mean(zeta, weight, fib.fiber_axes), fib)
        h_sf = h_fib + _spectral.ddbar(zeta, 1, axes=fib.fiber_axes)
        residual = float(np.abs(
            np.linalg.det(h_sf).real - np.exp(potential) * det).max())
    else:
        zeta = np.zeros(family.grid.shape)
        points = list(fib.base_points())

        def solve_one(y):
            sl = (slice(None),) * (2 * d) + tuple(y)
            form = FiberForm(fib, h_fib[sl], metric_flag=True)
            try:
                zeta_y, _ = solve_fiber_ricci_flat(form, potential[sl])
            except Exception as exc:  # annotate with the fiber index
                raise FiberSolveError("fiber solve failed", y, exc) from exc
            return zeta_y

        solutions = _parallel.indexed_map(solve_one, points)
        for y, zeta_y in zip(points, solutions):
            zeta[(slice(None),) * (2 * d) + tuple(y)] = zeta_y
        h_sf = h_fib + _spectral.ddbar(zeta, d, axes=fib.fiber_axes)
        residual = float(np.abs(
            np.linalg.det(h_sf).real - np.exp(potential) * det).max())

    if residual > FIBER_RESIDUAL_TOL:
        raise FiberSolveError(
            f"assembled fiber residual {residual:.3e} exceeds {FIBER_RESIDUAL_TOL}",
            fiber_index=(),
        )
    return FiberRicciData(
        family=family,
        ricci_potential=potential,
        zeta=PeriodicScalarField(family.grid, zeta),
        max_residual=residual,
        max_normalization_defect=norm_defect,
    )


def assemble_semiflat(family: AdiabaticFamily,
                      data: FiberRicciData | None = None) -> HermitianFormField:
    """The semi-flat form omega_SF = omega_X + i d dbar zeta.

    Its restriction to each fiber is the fiberwise Ricci-flat metric;
    global positivity is NOT asserted, but omega_SF^(n-m) /\ omega_0^m
    must be strictly positive.
    """
    if data is None:
        data = build_fiber_ricci_data(family)
    n = family.spec.n
    h_sf = family.omega_X.coeffs + _spectral.ddbar(data.zeta.values, n)
    omega_sf = HermitianFormField(family.grid, h_sf)
    dens = mixed_wedge_density(
        h_sf, family.omega_0.coeffs, family.fibration.fiber_dim, n)
    if dens.min() <= 0.0:
        raise ConsistencyError(
            f"omega_SF^(n-m) /\\ omega_0^m has nonpositive minimum {dens.min():.3e}"
        )
    return omega_sf


def density_F(family: AdiabaticFamily, omega_top: PeriodicScalarField,
              omega_sf: HermitianFormField) -> BaseField:
    """F = Omega / (omega_SF^(n-m) /\ omega_0^m), reduced to the base.

    The quotient must be constant on every fiber (relative oscillation
    below 1e-8); a violation flags a solver or assembly bug.
    """
    fib = family.fibration
    n = family.spec.n
    wedge = mixed_wedge_density(
        omega_sf.coeffs, family.omega_0.coeffs, fib.fiber_dim, n)
    ratio = omega_top.values / wedge
    spread = ratio.max(axis=fib.fiber_axes) - ratio.min(axis=fib.fiber_axes)
    rel = float((spread / np.abs(ratio.mean(axis=fib.fiber_axes))).max())
    if rel > FIBER_CONSTANCY_TOL:
        raise ConsistencyError(
            f"F oscillates along fibers (relative oscillation {rel:.3e} "
            f"> {FIBER_CONSTANCY_TOL})"
        )
    return BaseField(fib, ratio.mean(axis=fib.fiber_axes))


def density_F_pushforward(family: AdiabaticFamily,
                          omega_top: PeriodicScalarField) -> BaseField:
    """Independent route: F = f_* Omega / omega_Y^m."""
    fib = family.fibration
    push = pushforward_volume(omega_top, fib)
    return BaseField(fib, push.values / base_top_density(family.omega_Z))


def solve_base_limit(
    F: BaseField,
    omega_y: BaseForm,
    constants: LimitConstants,
    method: str = "auto",
    initial: BaseField | None = None,
    omega_top: PeriodicScalarField | None = None,
) -> LimitData:
    """Solve (omega_Y + i d dbar psi)^m = kappa F omega_Y^m, sup psi = 0.

    kappa = mixed volume / (total volume * fiber volume) makes the two
    sides cohomologically consistent; the identity is checked to 1e-10
    before solving.  For m = 1 the equation is linear and solved
    spectrally, otherwise (or on request) by the Newton core.
    """
    fib = F.fibration
    m = fib.m
    kappa = constants.factor
    dens_y = base_top_density(omega_y)
    target = kappa * F.values * dens_y
    defect = abs(float(target.mean() - dens_y.mean())) / float(dens_y.mean())
    if defect > SOLVABILITY_TOL:
        raise ConsistencyError(
            f"base equation solvability defect {defect:.3e} > {SOLVABILITY_TOL}"
        )
    if (F.values <= 0).any():
        raise ConsistencyError("density F must be positive")

    if method == "auto":
        method = "linear" if m == 1 else "newton"
    if method == "linear":
        if m != 1:
            raise ScenarioError("linear base solve only for one-dimensional bases")
        source = kappa * F.values * omega_y.coeffs[..., 0, 0].real \
            - omega_y.coeffs[..., 0, 0].real
        psi = _spectral.constant_coefficient_solve(source, np.array([[1.0]]), 1)
    elif method == "newton":
        log_rhs = np.log(kappa * F.values) + np.log(
            np.linalg.det(omega_y.coeffs).real)
        config = SolverConfig(residual_tol=1e-12, max_iter=60)
        warm = initial.values if initial is not None else None
        psi, _ = newton_monge_ampere(omega_y.coeffs, log_rhs, m, config,
                                     warm_start=warm)
    else:
        raise ScenarioError(f"unknown base solve method {method!r}")

    psi_field = BaseField(fib, psi).sup_normalized()
    h_omega = omega_y.coeffs + base_ddbar(psi_field.values, fib)
    omega = BaseForm(fib, h_omega, metric_flag=True)
    residual = float(np.abs(
        math.factorial(m) * 2.0 ** m * np.linalg.det(h_omega).real - target
    ).max())
    return LimitData(
        F=F, psi_lim=psi_field, omega=omega, omega_Y=omega_y,
        constants=constants, solvability_defect=defect,
        residual=residual, omega_top=omega_top,
    )


@dataclass(frozen=True)
class ComparisonRow:
    t: float
    c0_difference: float
    c1_difference: float


@dataclass(frozen=True)
class LimitComparison:
    rows: tuple[ComparisonRow, ...]
    c0_fit: ExponentFit | None
    c1_fit: ExponentFit | None


def limit_comparison(reports: list[SolveReport], psi_lim: BaseField,
                     family: AdiabaticFamily) -> LimitComparison:
    """Per-t distance between phi_t and the pulled-back limit potential.

    C0 is the sup norm on the full grid, C1 the sup of the omega_X
    gradient norm of the difference; a log-log exponent fit is attached
    when enough positive values are available.
    """
    fib = family.fibration
    lifted = pullback(psi_lim.values, fib)
    rows = []
    for report in reports:
        diff = report.phi.values - lifted
        diff_field = PeriodicScalarField(family.grid, diff - diff.mean())
        c0 = float(np.abs(diff).max())
        c1 = float(np.sqrt(
            gradient_norm_sq(diff_field, family.omega_X).values.max()))
        rows.append(ComparisonRow(report.t, c0, c1))

    def try_fit(values):
        pairs = [(r.t, v) for r, v in zip(rows, values) if v > 0]
        if len(pairs) < 4:
            return None
        return exponent_fit(pairs)

    return LimitComparison(
        rows=tuple(rows),
        c0_fit=try_fit([r.c0_difference for r in rows]),
        c1_fit=try_fit([r.c1_difference for r in rows]),
    )


@dataclass(frozen=True)
class KeResidualReport:
    """Residual fields of the generalized Kahler-Einstein identity."""

    ric_minus_wp: BaseForm
    intermediate: BaseForm
    linf_ric_minus_wp: float
    linf_intermediate: float


def generalized_ke_residual(
    omega: BaseForm,
    omega_wp: BaseForm | None,
    omega_y: BaseForm,
    F: BaseField,
) -> KeResidualReport:
    """Ric(omega) - omega_WP and Ric(omega) - Ric(omega_Y) + i d dbar log F.

    The second field is the differentiated base equation and must vanish
    identically; the first vanishes whenever omega_WP is the correct
    Weil-Petersson form (zero for isotrivial fibers).
    """
    fib = omega.fibration
    ric = base_ricci_form(omega)
    ric_y = base_ricci_form(omega_y)
    ddbar_log_f = base_ddbar(np.log(F.values), fib)
    wp_coeffs = (omega_wp.coeffs if omega_wp is not None
                 else np.zeros_like(ric.coeffs))
    first = BaseForm(fib, ric.coeffs - wp_coeffs)
    second = BaseForm(fib, ric.coeffs - ric_y.coeffs + ddbar_log_f)
    return KeResidualReport(
        ric_minus_wp=first,
        intermediate=second,
        linf_ric_minus_wp=float(np.abs(first.coeffs).max()),
        linf_intermediate=float(np.abs(second.coeffs).max()),
    )


@dataclass(frozen=True)
class LimitPipeline:
    """Everything the end-to-end collapse-limit verification produces."""

    fiber_data: FiberRicciData
    omega_sf: HermitianFormField
    limit: LimitData
    F_pushforward: BaseField
    route_agreement: float
    comparison: LimitComparison | None
    ke: KeResidualReport


def run_limit_pipeline(
    family: AdiabaticFamily,
    sweep_reports: list[SolveReport] | None = None,
    residual_tol: float = 1e-11,
) -> LimitPipeline:
    """Run the full limit construction for one scenario.

    The volume form Omega is taken from a tight t = 1 solve (the
    pipeline is exercised end to end even in flat scenarios).  When
    sweep reports are supplied, the potentials are compared against the
    pulled-back limit potential.
    """
    warm = None
    if sweep_reports:
        for rep in sweep_reports:
            if rep.t == 1.0:
                warm = rep.phi
    report_1 = solve_potential(
        family, 1.0, SolverConfig(residual_tol=residual_tol), warm_start=warm)
    omega_top = PeriodicScalarField(
        family.grid,
        math.factorial(family.spec.n) * 2.0 ** family.spec.n
        * np.linalg.det(metric_coefficients(family, report_1)).real,
    )

    fiber_data = build_fiber_ricci_data(family)
    omega_sf = assemble_semiflat(family, fiber_data)
    f_wedge = density_F(family, omega_top, omega_sf)
    f_push = density_F_pushforward(family, omega_top)
    agreement = float(np.abs(f_wedge.values - f_push.values).max()
                      / np.abs(f_wedge.values).max())

    limit = solve_base_limit(
        f_wedge, family.omega_Z, LimitConstants.of(family),
        omega_top=omega_top)
    comparison = (limit_comparison(sweep_reports, limit.psi_lim, family)
                  if sweep_reports else None)

    from .weilpetersson import wp_product_case
    zero_wp, _certificate = wp_product_case(family)
    ke = generalized_ke_residual(limit.omega, zero_wp, family.omega_Z, f_wedge)
    return LimitPipeline(
        fiber_data=fiber_data, omega_sf=omega_sf, limit=limit,
        F_pushforward=f_push, route_agreement=agreement,
        comparison=comparison, ke=ke,
    )
