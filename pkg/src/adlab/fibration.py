"""Fiber restriction, fiber averaging and pushforward for the projection
f onto the last m complex coordinates.

Fibers are exact coordinate slices of the total grid, so no
interpolation error enters any fiber quantity.  Axis layout on a total
grid of shape (N,)*(2n): the first 2(n-m) axes are the fiber directions,
the last 2m axes the base directions, matching numpy broadcasting so
that pullback from the base is a plain broadcast.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _spectral
from .errors import ScenarioError
from .geometry import GridSpec, HermitianFormField, PeriodicScalarField, _freeze


@dataclass(frozen=True)
class FibrationSpec:
    """Projection X = T^n -> Y = T^m onto the last m complex coordinates."""

    n: int
    m: int
    N: int

    def __post_init__(self):
        if not 0 < self.m < self.n:
            raise ScenarioError(f"need 0 < m < n, got m={self.m}, n={self.n}")

    @property
    def fiber_dim(self) -> int:
        return self.n - self.m

    @property
    def base_shape(self) -> tuple[int, ...]:
        return (self.N,) * (2 * self.m)

    @property
    def fiber_shape(self) -> tuple[int, ...]:
        return (self.N,) * (2 * self.fiber_dim)

    @property
    def fiber_axes(self) -> tuple[int, ...]:
        return tuple(range(2 * self.fiber_dim))

    @property
    def base_axes(self) -> tuple[int, ...]:
        return tuple(range(2 * self.fiber_dim, 2 * self.n))

    def base_points(self):
        """Iterate over base grid indices in deterministic order."""
        return np.ndindex(self.base_shape)

    def total_grid(self) -> GridSpec:
        return GridSpec(self.n, self.N)


@dataclass(frozen=True)
class BaseField:
    """Real scalar field on the base grid."""

    fibration: FibrationSpec
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.fibration.base_shape:
            raise ScenarioError(
                f"base field shape {vals.shape} != {self.fibration.base_shape}"
            )
        if not np.isfinite(vals).all():
            raise ScenarioError("base field contains non-finite values")
        object.__setattr__(self, "values", _freeze(vals))

    def sup_normalized(self) -> "BaseField":
        return BaseField(self.fibration, self.values - self.values.max())


@dataclass(frozen=True)
class BaseForm:
    """Pointwise Hermitian m x m coefficient matrix on the base grid."""

    fibration: FibrationSpec
    coeffs: np.ndarray
    metric_flag: bool = False

    def __post_init__(self):
        m = self.fibration.m
        co = np.asarray(self.coeffs, dtype=complex)
        if co.shape != self.fibration.base_shape + (m, m):
            raise ScenarioError("base form coefficient shape mismatch")
        if np.abs(co - np.conj(np.swapaxes(co, -1, -2))).max() != 0.0:
            raise ScenarioError("base form coefficients not exactly Hermitian")
        object.__setattr__(self, "coeffs", _freeze(co))
        if self.metric_flag:
            eig = np.linalg.eigvalsh(co)[..., 0]
            if eig.min() <= 0.0:
                raise ScenarioError(
                    f"base form flagged metric but min eigenvalue {eig.min():.3e}"
                )


@dataclass(frozen=True)
class FiberForm:
    """Hermitian (n-m) x (n-m) coefficients on one fiber grid."""

    fibration: FibrationSpec
    coeffs: np.ndarray
    metric_flag: bool = False

    def __post_init__(self):
        d = self.fibration.fiber_dim
        co = np.asarray(self.coeffs, dtype=complex)
        if co.shape != self.fibration.fiber_shape + (d, d):
            raise ScenarioError("fiber form coefficient shape mismatch")
        if np.abs(co - np.conj(np.swapaxes(co, -1, -2))).max() != 0.0:
            raise ScenarioError("fiber form coefficients not exactly Hermitian")
        object.__setattr__(self, "coeffs", _freeze(co))
        if self.metric_flag:
            eig = np.linalg.eigvalsh(co)[..., 0]
            if eig.min() <= 0.0:
                raise ScenarioError("fiber form flagged metric but not positive")


def fiber_block(coeffs: np.ndarray, fib: FibrationSpec) -> np.ndarray:
    """Fiber-fiber block of an n x n coefficient field."""
    d = fib.fiber_dim
    return coeffs[..., :d, :d]


def base_block(coeffs: np.ndarray, fib: FibrationSpec) -> np.ndarray:
    d = fib.fiber_dim
    return coeffs[..., d:, d:]


def pullback(base_values: np.ndarray, fib: FibrationSpec) -> np.ndarray:
    """f^* of a base array: broadcast over the leading fiber axes."""
    target = fib.fiber_shape + base_values.shape
    return np.broadcast_to(base_values, target)


def restrict_to_fiber(omega: HermitianFormField, fib: FibrationSpec,
                      y: tuple[int, ...]) -> FiberForm:
    """Fiber-fiber coefficient block on the fiber over base grid index y."""
    if len(y) != 2 * fib.m:
        raise ScenarioError(f"base index must have {2 * fib.m} entries")
    block = fiber_block(omega.coeffs, fib)
    sl = (slice(None),) * (2 * fib.fiber_dim) + tuple(y)
    return FiberForm(fib, block[sl], metric_flag=False)


def fiber_volume_density(omega_x: HermitianFormField, fib: FibrationSpec) -> np.ndarray:
    """Density of omega_y^(n-m) relative to fiber Lebesgue measure.

    Computed from the fiber-fiber block at every total-space point:
    (n-m)! det(h_fiber) 2^(n-m).
    """
    d = fib.fiber_dim
    det = np.linalg.det(fiber_block(omega_x.coeffs, fib)).real
    return math.factorial(d) * (2.0 ** d) * det


def fiber_volume(omega_x: HermitianFormField, fib: FibrationSpec,
                 y: tuple[int, ...]) -> float:
    """Volume of the fiber over y with respect to omega_X restricted to it.

    A cohomological constant: independent of y to roundoff.
    """
    dens = fiber_volume_density(omega_x, fib)
    sl = (slice(None),) * (2 * fib.fiber_dim) + tuple(y)
    return float(dens[sl].mean())


def fiber_volumes(omega_x: HermitianFormField, fib: FibrationSpec) -> np.ndarray:
    """Fiber volumes over every base point (base-grid array)."""
    dens = fiber_volume_density(omega_x, fib)
    return dens.mean(axis=fib.fiber_axes)


def fiber_average(phi: PeriodicScalarField, omega_x: HermitianFormField,
                  fib: FibrationSpec) -> BaseField:
    """Integration along the fibers with omega_y weights.

    phibar(y) = (1/vol) * integral_{X_y} phi omega_y^(n-m); the fiber
    volumes are 1 by the unit-lattice convention whenever n-m = 1, and
    the division makes fiber_average(pullback(u)) = u exact in general.
    """
    w = fiber_volume_density(omega_x, fib)
    num = (phi.values * w).mean(axis=fib.fiber_axes)
    den = w.mean(axis=fib.fiber_axes)
    return BaseField(fib, num / den)


def fiber_normalized_potential(phi: PeriodicScalarField,
                               omega_x: HermitianFormField,
                               fib: FibrationSpec, t: float) -> PeriodicScalarField:
    """(phi - f^* phibar)/t; has zero omega_y-weighted average on every fiber."""
    if t <= 0:
        raise ScenarioError(f"t must be positive, got {t}")
    phibar = fiber_average(phi, omega_x, fib)
    vals = (phi.values - pullback(phibar.values, fib)) / t
    return PeriodicScalarField(phi.grid, vals)


def pushforward_volume(density: PeriodicScalarField, fib: FibrationSpec) -> BaseField:
    """f_* of a top-degree density (relative Lebesgue on both sides).

    Linear, and total mass is preserved: the base integral of the output
    equals the total integral of the input.
    """
    return BaseField(fib, density.values.mean(axis=fib.fiber_axes))


def base_ddbar(values: np.ndarray, fib: FibrationSpec) -> np.ndarray:
    """i d dbar on the base torus (m x m coefficients)."""
    return _spectral.ddbar(values, fib.m)


def base_top_density(form: BaseForm) -> np.ndarray:
    m = form.fibration.m
    return math.factorial(m) * (2.0 ** m) * np.linalg.det(form.coeffs).real


def base_ricci_form(form: BaseForm) -> BaseForm:
    """Ricci form -i d dbar log det(h) of a base metric."""
    logdet = np.log(np.linalg.det(form.coeffs).real)
    return BaseForm(form.fibration, -base_ddbar(logdet, form.fibration))
