"""Periodic grids on X = C^n/(Z^n + i Z^n) and pointwise (1,1)-form algebra.

Conventions, fixed project-wide:

* a real (1,1)-form is omega = i * sum_{j,k} h_{j kbar} dz^j /\ dzbar^k with
  Hermitian coefficient matrix h; the flat unit form per complex
  coordinate has h = I/2, so each coordinate 2-torus has area 1;
* the top form is omega^n = n! det(h) 2^n dV with dV the Lebesgue
  measure of total mass 1 on [0,1)^(2n);
* differentiation is exact spectral (Fourier multipliers), integration
  is the grid mean, exact for trigonometric polynomials below the
  Nyquist band.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import _spectral
from .errors import PositivityError, ScenarioError


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid for the total space.

    ``n`` is the complex dimension (2 or 3), ``N`` the number of samples
    per real axis; the grid has N^(2n) points.
    """

    n: int
    N: int

    def __post_init__(self):
        if self.n not in (2, 3):
            raise ScenarioError(f"complex dimension must be 2 or 3, got {self.n}")
        if self.N < 8 or self.N % 2 != 0:
            raise ScenarioError(f"N must be even and >= 8, got {self.N}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * (2 * self.n)

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(2 * self.n))

    def coordinates(self) -> list[np.ndarray]:
        """Broadcastable arrays (x_1, y_1, ..., x_n, y_n) over [0,1)."""
        return _spectral.coordinates(self.n, self.N)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class PeriodicScalarField:
    """Real scalar field sampled on a GridSpec."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise ScenarioError(
                f"field shape {vals.shape} does not match grid {self.grid.shape}"
            )
        if not np.isfinite(vals).all():
            raise ScenarioError("field contains non-finite values")
        object.__setattr__(self, "values", _freeze(vals))

    def spectral_roundtrip(self) -> np.ndarray:
        """values -> fftn -> ifftn; reproduces values to ~1e-12 relative."""
        return np.fft.ifftn(np.fft.fftn(self.values)).real

    def mean(self) -> float:
        return float(self.values.mean())

    def shifted(self, constant: float) -> "PeriodicScalarField":
        return PeriodicScalarField(self.grid, self.values + constant)

    def sup_normalized(self) -> "PeriodicScalarField":
        """Subtract the max so that sup = 0 exactly."""
        return PeriodicScalarField(self.grid, self.values - self.values.max())


@dataclass(frozen=True)
class HermitianFormField:
    """Pointwise Hermitian coefficient matrix h_{j kbar} of a (1,1)-form.

    ``metric_flag`` certifies pointwise positive definiteness; it is
    validated on construction when set.
    """

    grid: GridSpec
    coeffs: np.ndarray
    metric_flag: bool = False

    def __post_init__(self):
        n = self.grid.n
        co = np.asarray(self.coeffs, dtype=complex)
        if co.shape != self.grid.shape + (n, n):
            raise ScenarioError(
                f"coefficient shape {co.shape} does not match grid + ({n},{n})"
            )
        herm_defect = np.abs(co - np.conj(np.swapaxes(co, -1, -2))).max()
        if herm_defect != 0.0:
            raise ScenarioError(
                f"coefficients are not exactly Hermitian (defect {herm_defect:.3e})"
            )
        object.__setattr__(self, "coeffs", _freeze(co))
        if self.metric_flag:
            eig = np.linalg.eigvalsh(co)[..., 0]
            worst = np.unravel_index(int(eig.argmin()), eig.shape)
            if eig[worst] <= 0.0:
                raise PositivityError(
                    "metric flag requires positive definiteness",
                    float(eig[worst]), worst,
                )

    @property
    def n(self) -> int:
        return self.grid.n

    def as_metric(self) -> "HermitianFormField":
        """Return a metric-flagged copy (validates positivity)."""
        if self.metric_flag:
            return self
        return HermitianFormField(self.grid, self.coeffs, metric_flag=True)

    def __add__(self, other: "HermitianFormField") -> "HermitianFormField":
        if other.grid != self.grid:
            raise ScenarioError("grid mismatch in form addition")
        return HermitianFormField(
            self.grid, self.coeffs + other.coeffs,
            metric_flag=self.metric_flag and other.metric_flag,
        )

    def __rmul__(self, scalar: float) -> "HermitianFormField":
        return HermitianFormField(
            self.grid, scalar * self.coeffs,
            metric_flag=self.metric_flag and scalar > 0,
        )


def flat_metric(grid: GridSpec) -> HermitianFormField:
    """The flat unit form: h = I/2 at every point."""
    co = np.zeros(grid.shape + (grid.n, grid.n), dtype=complex)
    idx = np.arange(grid.n)
    co[..., idx, idx] = 0.5
    return HermitianFormField(grid, co, metric_flag=True)


def ddbar(phi: PeriodicScalarField) -> HermitianFormField:
    """The i*d dbar operator: coefficients d^2 phi / dz^j dzbar^k.

    Linear, annihilates constants, entrywise mean free; its trace
    against the identity coefficient matrix is a quarter of the real
    Laplacian of phi.
    """
    h = _spectral.ddbar(phi.values, phi.grid.n)
    return HermitianFormField(phi.grid, h)


def top_density(omega: HermitianFormField) -> PeriodicScalarField:
    """Density of omega^n relative to Lebesgue measure: n! det(h) 2^n."""
    n = omega.n
    dens = math.factorial(n) * (2.0 ** n) * np.linalg.det(omega.coeffs).real
    return PeriodicScalarField(omega.grid, dens)


def mixed_wedge_density(a: np.ndarray, b: np.ndarray, k: int, n: int) -> np.ndarray:
    """Density of alpha^k /\ beta^(n-k) relative to Lebesgue measure.

    Multilinear expansion of det in rows: the coefficient of the mixed
    wedge is k!(n-k)! * sum over row subsets S of size k of
    det(rows S from a, remaining rows from b), times 2^n.
    """
    total = 0.0
    for subset in itertools.combinations(range(n), k):
        rows = [a[..., j, :] if j in subset else b[..., j, :] for j in range(n)]
        mixed = np.stack(rows, axis=-2)
        total = total + np.linalg.det(mixed).real
    return math.factorial(k) * math.factorial(n - k) * (2.0 ** n) * total


def top_ratio(omega: HermitianFormField, eta: HermitianFormField) -> PeriodicScalarField:
    """Pointwise Monge-Ampere density omega^n / eta^n = det(h_omega)/det(h_eta)."""
    if not eta.metric_flag:
        raise ScenarioError("top_ratio requires a metric-flagged denominator")
    ratio = np.linalg.det(omega.coeffs).real / np.linalg.det(eta.coeffs).real
    return PeriodicScalarField(omega.grid, ratio)


def trace_pair(g: HermitianFormField, eta: HermitianFormField) -> PeriodicScalarField:
    """tr_g eta = g^{j kbar} eta_{j kbar}, computed as trace(h_g^{-1} h_eta)."""
    if not g.metric_flag:
        raise ScenarioError("trace_pair requires a metric-flagged first argument")
    solved = np.linalg.solve(g.coeffs, eta.coeffs)
    tr = np.einsum("...jj->...", solved).real
    return PeriodicScalarField(g.grid, tr)


def integrate(phi: PeriodicScalarField, vol: HermitianFormField) -> float:
    """integral of phi * vol^n over the torus (grid-mean quadrature)."""
    if not vol.metric_flag:
        raise ScenarioError("integrate requires a metric-flagged volume form")
    return float((phi.values * top_density(vol).values).mean())


def min_eigenvalue(omega: HermitianFormField) -> PeriodicScalarField:
    """Pointwise smallest eigenvalue of the coefficient matrix."""
    eig = np.linalg.eigvalsh(omega.coeffs)[..., 0]
    return PeriodicScalarField(omega.grid, eig)


def generalized_eigenvalues(omega: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """Eigenvalues of the pencil h_omega v = lambda h_eta v (eta > 0), batched.

    Returned sorted ascending along the last axis.
    """
    chol = np.linalg.cholesky(eta)
    inv_chol = np.linalg.inv(chol)
    middle = inv_chol @ omega @ np.conj(np.swapaxes(inv_chol, -1, -2))
    return np.linalg.eigvalsh(middle)


def gradient_norm_sq(phi: PeriodicScalarField, g: HermitianFormField) -> PeriodicScalarField:
    """|d phi|^2_g = 2 g^{j kbar} phi_j phi_kbar (real, nonnegative)."""
    n = phi.grid.n
    axes = phi.grid.axes
    dholo = np.stack(
        [_spectral.holo_derivative(phi.values, j, axes) for j in range(n)], axis=-1
    )
    ginv = np.linalg.inv(g.coeffs)
    # g^{j kbar} = conj(Ginv[j,k]); |dphi|^2 = 2 Re sum conj(Ginv[j,k]) phi_j conj(phi_k)
    val = 2.0 * np.einsum("...jk,...j,...k->...", np.conj(ginv), dholo, np.conj(dholo)).real
    return PeriodicScalarField(phi.grid, val)


def ricci_form(omega: HermitianFormField) -> HermitianFormField:
    """Ricci form -i d dbar log det(h) of a metric."""
    logdet = np.log(np.linalg.det(omega.as_metric().coeffs).real)
    h = -_spectral.ddbar(logdet, omega.n)
    return HermitianFormField(omega.grid, h)
