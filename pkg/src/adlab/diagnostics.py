"""Measured collapse diagnostics along a t-sweep.

Every quantity with a proved t-uniform bound or decay rate is measured
here: the Schwarz trace tr_{omega_tilde} omega_0, total and fiber metric
envelopes, the fiberwise C^1 norm of the collapsing metric, the fiber
oscillation of the potential, the fiber volume ratio, and the geometry
constants (diameter, Poincare constant) of the fiber metrics.  Scaling
exponents come from least squares on (log t, log q).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg
import scipy.sparse
from scipy.sparse.csgraph import dijkstra

from . import _spectral
from .errors import ScenarioError
from .fibration import (FiberForm, fiber_average, fiber_block,
                        fiber_normalized_potential, fiber_volume_density,
                        pullback)
from .geometry import PeriodicScalarField, generalized_eigenvalues
from .scenario import AdiabaticFamily
from .solver import SolveReport, metric_coefficients


@dataclass(frozen=True)
class ExponentFit:
    """Least-squares fit of log q = slope * log t + intercept."""

    slope: float
    intercept: float
    r_squared: float
    points: int


def exponent_fit(pairs) -> ExponentFit:
    """Fit a power law q ~ e^intercept * t^slope through positive pairs."""
    pairs = list(pairs)
    if len(pairs) < 4:
        raise ValueError(f"exponent fit needs at least 4 points, got {len(pairs)}")
    t = np.array([p[0] for p in pairs], dtype=float)
    q = np.array([p[1] for p in pairs], dtype=float)
    if (t <= 0).any() or (q <= 0).any():
        raise ValueError("exponent fit needs strictly positive data")
    x, y = np.log(t), np.log(q)
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(((y - fitted) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return ExponentFit(float(slope), float(intercept), r2, len(pairs))


@dataclass(frozen=True)
class DiagnosticRecord:
    """Per-t measured values of every bounded collapse quantity."""

    t: float
    schwarz_sup: float
    schwarz_inf: float
    env_total_min: float
    env_total_max: float
    env_fiber_min: float
    env_fiber_max: float
    s_fiber: float
    osc: float
    vol_ratio: float
    sup_norm_phi: float
    identity_residual: float
    residual: float
    iterations: int


def schwarz_trace(report: SolveReport, family: AdiabaticFamily) -> tuple[float, float]:
    """(sup, inf) of tr_{omega_tilde_t} omega_0 over the grid."""
    h_tilde = metric_coefficients(family, report)
    tr = np.einsum("...jj->...", np.linalg.solve(h_tilde, family.omega_0.coeffs)).real
    return float(tr.max()), float(tr.min())


def eigenvalue_envelope(report: SolveReport, family: AdiabaticFamily,
                        mode: str = "total") -> tuple[float, float]:
    """Extreme generalized eigenvalues of the Ricci-flat metric.

    ``total``: omega_tilde_t against omega_X over the whole grid;
    ``fiber``: the fiber restriction against t * omega_y (so a
    t-independent band certifies the fiber collapse rate).
    """
    h_tilde = metric_coefficients(family, report)
    if mode == "total":
        eigs = generalized_eigenvalues(h_tilde, family.omega_X.coeffs)
    elif mode == "fiber":
        fib = family.fibration
        eigs = generalized_eigenvalues(
            fiber_block(h_tilde, fib),
            report.t * fiber_block(family.omega_X.coeffs, fib),
        )
    else:
        raise ScenarioError(f"unknown envelope mode {mode!r}")
    return float(eigs[..., 0].min()), float(eigs[..., -1].max())


def _fiber_c3_field(family: AdiabaticFamily, report: SolveReport) -> np.ndarray:
    """|nabla^{omega_y} omega_tilde_y|^2_{omega_y} over the whole grid.

    The covariant derivative and all three contractions use the fiber
    metric omega_y = omega_X restricted to the fiber.
    """
    fib = family.fibration
    d = fib.fiber_dim
    axes = fib.fiber_axes
    g = fiber_block(family.omega_X.coeffs, fib)
    h = fiber_block(metric_coefficients(family, report), fib)
    ginv = np.linalg.inv(g)

    dg = np.stack([_spectral.holo_derivative(g, l, axes) for l in range(d)])
    dh = np.stack([_spectral.holo_derivative(h, l, axes) for l in range(d)])
    # Gamma^a_{l j} = g^{a bbar} d_l g_{j bbar}
    gamma = np.einsum("l...jb,...ba->l...ja", dg, ginv)
    nabla = dh - np.einsum("l...ja,...ak->l...jk", gamma, h)
    s = np.einsum(
        "...pl,...qj,...kr,l...jk,p...qr->...",
        ginv, ginv, ginv, nabla, np.conj(nabla),
    ).real
    return s


def fiber_c3_norm(report: SolveReport, family: AdiabaticFamily,
                  y: tuple[int, ...]) -> float:
    """Sup over the fiber X_y of |nabla^{omega_y} omega_tilde_y|^2_{omega_y}."""
    fib = family.fibration
    field = _fiber_c3_field(family, report)
    sl = (slice(None),) * (2 * fib.fiber_dim) + tuple(y)
    return float(field[sl].max())


def oscillation(report: SolveReport, family: AdiabaticFamily) -> float:
    """max over fibers of sup |phi_t - fiber average of phi_t|."""
    fib = family.fibration
    phibar = fiber_average(report.phi, family.omega_X, fib)
    return float(np.abs(report.phi.values - pullback(phibar.values, fib)).max())


class VolumeRatio(NamedTuple):
    ratio: float
    identity_residual: float


def _volume_ratio_fields(family: AdiabaticFamily,
                         report: SolveReport) -> tuple[np.ndarray, np.ndarray]:
    fib = family.fibration
    d = fib.fiber_dim
    t = report.t
    h_tilde_fib = fiber_block(metric_coefficients(family, report), fib)
    h_fib = fiber_block(family.omega_X.coeffs, fib)
    ratio = np.linalg.det(h_tilde_fib).real / np.linalg.det(h_fib).real / t ** d

    psi = fiber_normalized_potential(report.phi, family.omega_X, fib, t)
    h_psi = h_fib + _spectral.ddbar(psi.values, d, axes=fib.fiber_axes)
    identity = np.abs(
        np.linalg.det(h_psi).real - np.linalg.det(h_tilde_fib).real / t ** d
    )
    return ratio, identity


def volume_ratio_check(report: SolveReport, family: AdiabaticFamily,
                       y: tuple[int, ...]) -> VolumeRatio:
    """Sup over X_y of (omega_tilde_y / omega_y)^(n-m) / t^(n-m).

    Also verifies pointwise that the fiber-normalized potential solves
    (omega_y + i d dbar psi)^(n-m) = omega_tilde_y^(n-m) / t^(n-m);
    the residual of that identity is returned alongside.
    """
    fib = family.fibration
    ratio, identity = _volume_ratio_fields(family, report)
    sl = (slice(None),) * (2 * fib.fiber_dim) + tuple(y)
    return VolumeRatio(float(ratio[sl].max()), float(identity[sl].max()))


def _riemannian_edge_quadratic(coeffs: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """g_R(delta, delta) at every fiber point, delta in real coordinates."""
    d = coeffs.shape[-1]
    dz = delta[0::2] + 1j * delta[1::2]
    return 2.0 * np.einsum("...jk,j,k->...", coeffs, dz, np.conj(dz)).real


def fiber_geometry_constants(omega_y: FiberForm) -> tuple[float, float]:
    """(diameter, Poincare constant) of one fiber metric.

    The diameter is the max over pairs of grid points of the shortest
    path through the 8-neighbor grid graph with Riemannian edge lengths
    (error budget 2/N per unit length).  The Poincare constant is
    1/lambda_1 of the Laplace-Beltrami operator, discretized spectrally;
    exact for flat fibers.
    """
    if not omega_y.metric_flag:
        raise ScenarioError("fiber geometry constants require a fiber metric")
    fib = omega_y.fibration
    d = fib.fiber_dim
    N = fib.N
    shape = fib.fiber_shape
    nodes = int(np.prod(shape))
    index = np.arange(nodes).reshape(shape)

    rows, cols, weights = [], [], []
    for offset in itertools.product((-1, 0, 1), repeat=2 * d):
        if all(o == 0 for o in offset):
            continue
        delta = np.asarray(offset, dtype=float) / N
        quad = _riemannian_edge_quadratic(omega_y.coeffs, delta)
        shifted = np.roll(quad, shift=[-o for o in offset],
                          axis=tuple(range(2 * d)))
        length = np.sqrt(0.5 * (quad + shifted))
        rows.append(index.ravel())
        cols.append(np.roll(index, shift=[-o for o in offset],
                            axis=tuple(range(2 * d))).ravel())
        weights.append(length.ravel())
    graph = scipy.sparse.csr_matrix(
        (np.concatenate(weights), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nodes, nodes),
    )
    distances = dijkstra(graph, directed=False)
    diameter = float(distances.max())

    weight = math.factorial(d) * (2.0 ** d) * np.linalg.det(omega_y.coeffs).real
    if d == 1:
        # conformal in two real dimensions: the stiffness form is the
        # flat one, K = -Laplacian (spectral, exactly symmetric)
        freqs = np.fft.fftfreq(N, d=1.0 / N)
        spec_mat = np.fft.ifft(
            np.fft.fft(np.eye(N), axis=0) * (4.0 * np.pi ** 2 * freqs ** 2)[:, None],
            axis=0,
        ).real
        stiffness = np.kron(spec_mat, np.eye(N)) + np.kron(np.eye(N), spec_mat)
    else:
        basis = np.eye(nodes).reshape(shape + (nodes,))
        hessian = _spectral.ddbar(basis, d, axes=fib.fiber_axes)
        ginv = np.linalg.inv(omega_y.coeffs)
        apply_a = -2.0 * np.einsum(
            "...jk,...bjk->...b", np.conj(ginv), hessian).real
        stiffness = (weight.reshape(-1, 1) * apply_a.reshape(nodes, nodes))
    stiffness = 0.5 * (stiffness + stiffness.T)
    mass = np.diag(weight.ravel())
    eigs = scipy.linalg.eigh(stiffness, mass, subset_by_index=[0, 1],
                             eigvals_only=True)
    lambda_1 = float(eigs[1])
    return diameter, 1.0 / lambda_1


def collect_diagnostics(family: AdiabaticFamily,
                        report: SolveReport) -> DiagnosticRecord:
    """All sweep diagnostics for one solve, batched over fibers."""
    schwarz = schwarz_trace(report, family)
    env_total = eigenvalue_envelope(report, family, "total")
    env_fiber = eigenvalue_envelope(report, family, "fiber")
    ratio, identity = _volume_ratio_fields(family, report)
    return DiagnosticRecord(
        t=report.t,
        schwarz_sup=schwarz[0],
        schwarz_inf=schwarz[1],
        env_total_min=env_total[0],
        env_total_max=env_total[1],
        env_fiber_min=env_fiber[0],
        env_fiber_max=env_fiber[1],
        s_fiber=float(_fiber_c3_field(family, report).max()),
        osc=oscillation(report, family),
        vol_ratio=float(ratio.max()),
        sup_norm_phi=report.sup_norm_phi,
        identity_residual=float(identity.max()),
        residual=report.final_residual,
        iterations=report.iterations,
    )
