"""Damped Newton solver for the degenerating family of complex
Monge-Ampere equations

    (omega_t + i d dbar phi_t)^n = a_t e^E omega_X^n,   sup phi_t = 0,

with warm-started continuation along a decreasing t-schedule.

The iteration runs in the mean-zero gauge (which removes the constant
kernel of the linearization) and converts to sup-normalization only at
output.  Each Newton step solves the linearized equation

    tr_{omega_tilde} (i d dbar delta) = -(r - c)

by GMRES, preconditioned with the exact inverse of the constant
coefficient operator obtained by spatially averaging the current
metric's inverse; that operator degenerates at the same rate as the
true linearization as t -> 0, so the preconditioner stays effective
through the collapse.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from . import _spectral
from .errors import PositivityError, ScenarioError, SolverError, SweepError
from .geometry import HermitianFormField, PeriodicScalarField
from .scenario import AdiabaticFamily

logger = logging.getLogger("adlab.solver")

_GMRES_RESTART = 40
_GMRES_MAXITER = 300


@dataclass(frozen=True)
class SolverConfig:
    """Newton iteration controls.

    ``residual_tol`` bounds the sup norm of the log residual;
    ``damping_floor`` is the smallest admissible line-search step.
    """

    residual_tol: float = 1e-9
    max_iter: int = 50
    damping_floor: float = 2.0 ** -20
    preconditioner: str = "averaged_inverse_laplacian"

    def __post_init__(self):
        if self.residual_tol <= 0:
            raise ScenarioError("residual_tol must be positive")
        if self.max_iter < 1:
            raise ScenarioError("max_iter must be >= 1")
        if self.preconditioner != "averaged_inverse_laplacian":
            raise ScenarioError(
                f"unknown preconditioner {self.preconditioner!r}"
            )


@dataclass(frozen=True)
class SolveReport:
    """Result of one Monge-Ampere solve at a fixed t."""

    t: float
    phi: PeriodicScalarField
    iterations: int
    final_residual: float
    min_metric_eigenvalue: float
    sup_norm_phi: float
    wall_time: float
    residual_history: tuple[float, ...]


def _min_eig(coeffs: np.ndarray) -> tuple[float, tuple]:
    eig = np.linalg.eigvalsh(coeffs)[..., 0]
    worst = np.unravel_index(int(eig.argmin()), eig.shape)
    return float(eig[worst]), worst


def newton_monge_ampere(
    h_background: np.ndarray,
    log_rhs: np.ndarray,
    dim: int,
    config: SolverConfig,
    warm_start: np.ndarray | None = None,
) -> tuple[np.ndarray, dict]:
    """Solve log det(h_background + ddbar(phi)) = log_rhs for mean-zero phi.

    Args:
        h_background: Hermitian coefficient field, shape grid + (dim, dim).
        log_rhs: log of the target density over dim! 2^dim dV, shape grid.
        dim: complex dimension of the torus being solved on.
        config: iteration controls.
        warm_start: optional initial potential (any gauge).

    Returns:
        (phi, info) with phi mean-zero and info carrying iteration
        counts, the residual history and the final metric eigenvalue.

    Raises:
        PositivityError: the warm start does not give a metric.
        SolverError: iteration cap or damping floor reached.
    """
    shape = log_rhs.shape
    phi = np.zeros(shape) if warm_start is None else warm_start - warm_start.mean()
    h_phi = _spectral.ddbar(phi, dim)

    eig0, where0 = _min_eig(h_background + h_phi)
    if eig0 <= 0.0:
        raise PositivityError("initial potential is not metric-positive", eig0, where0)

    history: list[float] = []
    iterations = 0
    while True:
        h_tilde = h_background + h_phi
        det = np.linalg.det(h_tilde).real
        residual = np.log(det) - log_rhs
        res_norm = float(np.abs(residual).max())
        history.append(res_norm)
        logger.debug("newton iter %d residual %.3e", iterations, res_norm)
        if res_norm <= config.residual_tol:
            min_eig, _ = _min_eig(h_tilde)
            return phi, {
                "iterations": iterations,
                "final_residual": res_norm,
                "min_metric_eigenvalue": min_eig,
                "residual_history": tuple(history),
            }
        if iterations >= config.max_iter:
            raise SolverError(
                f"iteration cap {config.max_iter} exceeded at residual {res_norm:.3e}",
                reason="max_iter", iterations=iterations, residual=res_norm,
            )

        ginv = np.linalg.inv(h_tilde)
        averaged = ginv.reshape(-1, dim, dim).mean(axis=0)
        averaged = 0.5 * (averaged + np.conj(averaged.T))

        def matvec(vec):
            u = vec.reshape(shape)
            h_u = _spectral.ddbar(u, dim)
            lu = np.einsum("...jk,...kj->...", ginv, h_u).real
            return (lu - lu.mean()).ravel()

        def precond(vec):
            u = vec.reshape(shape)
            sol = _spectral.constant_coefficient_solve(u - u.mean(), averaged, dim)
            return sol.ravel()

        size = int(np.prod(shape))
        op = LinearOperator((size, size), matvec=matvec, dtype=float)
        pre = LinearOperator((size, size), matvec=precond, dtype=float)
        rhs = -(residual - residual.mean()).ravel()
        rtol = min(1e-2, res_norm)
        direction, info = gmres(
            op, rhs, M=pre, rtol=rtol, atol=0.0,
            restart=_GMRES_RESTART, maxiter=_GMRES_MAXITER,
        )
        if info > 0:
            logger.warning("gmres reached iteration cap (info=%d); using best iterate", info)
        delta = direction.reshape(shape)
        h_delta = _spectral.ddbar(delta, dim)

        step = 1.0
        last_eig = None
        while step >= config.damping_floor:
            h_trial = h_tilde + step * h_delta
            eig, _ = _min_eig(h_trial)
            last_eig = eig
            if eig > 0.0:
                trial_res = float(
                    np.abs(np.log(np.linalg.det(h_trial).real) - log_rhs).max()
                )
                if trial_res <= res_norm * (1.0 - 0.25 * step) + 1e-14:
                    break
            step *= 0.5
        else:
            raise SolverError(
                "damping floor reached "
                f"(residual {res_norm:.3e}, trial min eigenvalue {last_eig:.3e})",
                reason="damping_floor", iterations=iterations,
                residual=res_norm, min_eigenvalue=last_eig,
            )

        phi = phi + step * delta
        phi -= phi.mean()
        h_phi = h_phi + step * h_delta
        iterations += 1


def ma_residual(family: AdiabaticFamily, phi: PeriodicScalarField,
                t: float) -> PeriodicScalarField:
    """Log residual r = log((omega_t + i d dbar phi)^n / (a_t e^E omega_X^n)).

    Requires omega_t + i d dbar phi to be a metric; the cohomological
    volume identity integral e^r a_t e^E omega_X^n = integral omega_t^n
    holds to quadrature precision.
    """
    if t <= 0:
        raise ScenarioError(f"ma_residual needs t > 0, got {t}")
    h_tilde = family.omega_t(t).coeffs + _spectral.ddbar(phi.values, family.spec.n)
    eig, where = _min_eig(h_tilde)
    if eig <= 0.0:
        raise PositivityError("omega_t + i d dbar phi is not a metric", eig, where)
    vals = np.log(np.linalg.det(h_tilde).real) - family.log_rhs_density(t)
    return PeriodicScalarField(family.grid, vals)


def solve_potential(
    family: AdiabaticFamily,
    t: float,
    config: SolverConfig | None = None,
    warm_start: PeriodicScalarField | None = None,
) -> SolveReport:
    """Solve the Monge-Ampere equation at one t; output sup-normalized.

    Args:
        family: the adiabatic family.
        t: positive parameter; t = 0 is rejected (the family degenerates).
        config: solver controls (defaults are fine for all stock scenarios).
        warm_start: optional potential, must be metric-positive.

    Returns:
        SolveReport with sup phi = 0 exactly and final residual within
        tolerance.
    """
    if t <= 0:
        raise ScenarioError(f"solve_potential requires t > 0, got t={t}")
    config = config or SolverConfig()
    start = time.perf_counter()
    warm = warm_start.values if warm_start is not None else None
    phi, info = newton_monge_ampere(
        family.omega_t(t).coeffs, family.log_rhs_density(t),
        family.spec.n, config, warm_start=warm,
    )
    elapsed = time.perf_counter() - start
    out = PeriodicScalarField(family.grid, phi).sup_normalized()
    return SolveReport(
        t=t, phi=out,
        iterations=info["iterations"],
        final_residual=info["final_residual"],
        min_metric_eigenvalue=info["min_metric_eigenvalue"],
        sup_norm_phi=float(np.abs(out.values).max()),
        wall_time=elapsed,
        residual_history=info["residual_history"],
    )


def continuation_sweep(
    family: AdiabaticFamily,
    schedule: list[float],
    config: SolverConfig | None = None,
) -> list[SolveReport]:
    """Solve along a strictly decreasing positive t-schedule with warm starts.

    On a member failure the completed reports are preserved on the
    raised SweepError.
    """
    if not schedule:
        raise ScenarioError("schedule must be nonempty")
    arr = np.asarray(schedule, dtype=float)
    if (arr <= 0).any() or (np.diff(arr) >= 0).any():
        raise ScenarioError("schedule must be strictly decreasing and positive")
    reports: list[SolveReport] = []
    warm = None
    for t in schedule:
        try:
            report = solve_potential(family, t, config, warm_start=warm)
        except (SolverError, PositivityError) as exc:
            raise SweepError(
                f"sweep aborted at t={t}: {exc}", reports, exc
            ) from exc
        reports.append(report)
        warm = report.phi
    return reports


def metric_coefficients(family: AdiabaticFamily, report: SolveReport) -> np.ndarray:
    """Coefficients of the Ricci-flat metric omega_t + i d dbar phi_t."""
    return family.omega_t(report.t).coeffs + _spectral.ddbar(
        report.phi.values, family.spec.n
    )
