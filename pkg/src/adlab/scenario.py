"""Declarative scenarios and construction of the adiabatic family
(omega_X, omega_0, omega_t = omega_0 + t omega_X, E, a_t, c_t, H).

Scenario perturbations are finite Fourier sums, so every derived
quantity has a closed form and the flat-model oracle potential is
available for every admissible scenario: the Ricci-flat representative
of [omega_t] on the torus is the constant-coefficient form, hence

    phi*_t = inf(f^* v + t rho) - (f^* v + t rho).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _spectral
from .errors import PositivityError, ScenarioError
from .fibration import (BaseForm, FibrationSpec, base_ddbar, fiber_volumes,
                        pullback)
from .geometry import (GridSpec, HermitianFormField, PeriodicScalarField,
                       flat_metric, integrate, min_eigenvalue,
                       mixed_wedge_density, top_density)

#: Pointwise eigenvalue floor for omega_X and omega_Z.  Strictly positive
#: but small: the reference perturbation amplitude 0.05 on a product of
#: two unit-frequency cosines already drives the minimum eigenvalue of
#: flat + i d dbar(rho) down to 1/2 - 0.05 pi^2 ~ 0.0065.
POSITIVITY_MARGIN = 0.005


@dataclass(frozen=True)
class Mode:
    """One Fourier mode amp * cos(2 pi k.(x_1,y_1,...,x_n,y_n) + phase)."""

    k: tuple[int, ...]
    amp: float
    phase: float = 0.0


@dataclass(frozen=True)
class ChartSpec:
    """Local non-periodic moduli chart for Weil-Petersson checks.

    tau(w) = tau0 + epsilon * w on [-1/2,1/2]^2 with ``resolution`` cells
    per side (resolution+1 nodes, so w = 0 is a node).
    """

    tau0: complex = 1j
    epsilon: float = 0.0
    resolution: int = 64
    k: int = 1

    def __post_init__(self):
        if self.tau0.imag - abs(self.epsilon) / 2 <= 0.01:
            raise ScenarioError("chart modulus must keep Im tau > 0.01")
        if self.resolution < 8 or self.resolution % 2 != 0:
            raise ScenarioError("chart resolution must be even and >= 8")
        if self.k < 1:
            raise ScenarioError("pluricanonical power k must be >= 1")


@dataclass(frozen=True)
class ScenarioSpec:
    """Declarative description of one adiabatic degeneration scenario."""

    n: int
    m: int
    N: int
    label: str = "scenario"
    rho_modes: tuple[Mode, ...] = ()
    v_modes: tuple[Mode, ...] = ()
    residual_tol: float | None = None
    max_iter: int | None = None
    chart: ChartSpec | None = None

    def __post_init__(self):
        GridSpec(self.n, self.N)  # validates n, N
        if not 0 < self.m < self.n:
            raise ScenarioError(f"need 0 < m < n, got m={self.m}, n={self.n}")
        for mode in self.rho_modes + self.v_modes:
            if len(mode.k) != 2 * self.n:
                raise ScenarioError(
                    f"wave vector {mode.k} must have {2 * self.n} entries"
                )
        d = self.n - self.m
        for mode in self.v_modes:
            if any(mode.k[i] != 0 for i in range(2 * d)):
                raise ScenarioError(
                    f"v mode {mode.k} involves fiber coordinates; "
                    "v must depend only on the base"
                )

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.n, self.N)

    @property
    def fibration(self) -> FibrationSpec:
        return FibrationSpec(self.n, self.m, self.N)


def modes_field(modes, coords) -> np.ndarray:
    """Evaluate a sum of cosine modes on broadcastable coordinates."""
    shape = np.broadcast_shapes(*(c.shape for c in coords)) if coords else ()
    out = np.zeros(shape)
    for mode in modes:
        phase = np.full(shape, float(mode.phase))
        for kj, c in zip(mode.k, coords):
            if kj:
                phase = phase + 2.0 * np.pi * kj * c
        out = out + mode.amp * np.cos(phase)
    return out


def _rho_values(spec: ScenarioSpec) -> np.ndarray:
    vals = modes_field(spec.rho_modes, spec.grid.coordinates())
    return np.broadcast_to(vals, spec.grid.shape).copy()


def _v_values_base(spec: ScenarioSpec) -> np.ndarray:
    """v evaluated on the base grid (uses only base components of k)."""
    fib = spec.fibration
    coords = _spectral.coordinates(spec.m, spec.N)
    base_modes = [Mode(m.k[2 * fib.fiber_dim:], m.amp, m.phase) for m in spec.v_modes]
    vals = modes_field(base_modes, coords)
    return np.broadcast_to(vals, fib.base_shape).copy()


@dataclass(frozen=True)
class JacobianDensity:
    """The positive density H with omega_0^m /\ omega_X^(n-m) = H omega_X^n."""

    H: PeriodicScalarField

    @property
    def min_value(self) -> float:
        return float(self.H.values.min())


@dataclass(frozen=True)
class AdiabaticFamily:
    """All fixed data of one scenario: forms, Ricci potential, volumes.

    ``wedge_volumes[k]`` is binom(n,k) * integral of omega_X^k /\
    omega_0^(n-k), so integral omega_t^n = sum_k wedge_volumes[k] t^k.
    """

    spec: ScenarioSpec
    omega_X: HermitianFormField
    omega_0: HermitianFormField
    omega_Z: BaseForm
    E: PeriodicScalarField
    rho: PeriodicScalarField
    v_base: np.ndarray
    wedge_volumes: tuple[float, ...]

    @property
    def grid(self) -> GridSpec:
        return self.spec.grid

    @property
    def fibration(self) -> FibrationSpec:
        return self.spec.fibration

    @property
    def volume_X(self) -> float:
        """integral of omega_X^n."""
        return self.wedge_volumes[-1]

    @property
    def volume_1(self) -> float:
        """integral of omega_1^n = integral of (omega_0 + omega_X)^n."""
        return float(sum(self.wedge_volumes))

    @property
    def volume_mixed(self) -> float:
        """integral of omega_0^m /\ omega_X^(n-m)."""
        n, m = self.spec.n, self.spec.m
        return self.wedge_volumes[n - m] / math.comb(n, m)

    @property
    def fiber_volume_constant(self) -> float:
        """Common volume of the fibers under omega_X (1 when n-m = 1)."""
        return float(fiber_volumes(self.omega_X, self.fibration).mean())

    def omega_t(self, t: float) -> HermitianFormField:
        if t <= 0:
            raise ScenarioError(f"family is defined for t > 0, got t={t}")
        return HermitianFormField(
            self.grid, self.omega_0.coeffs + t * self.omega_X.coeffs,
            metric_flag=True,
        )

    def flat_representative(self, t: float) -> np.ndarray:
        """Constant coefficient matrix of the Ricci-flat metric in [omega_t]."""
        n, d = self.spec.n, self.fibration.fiber_dim
        h = np.zeros((n, n), dtype=complex)
        for j in range(n):
            h[j, j] = 0.5 * t if j < d else 0.5 * (1.0 + t)
        return h

    def log_rhs_density(self, t: float) -> np.ndarray:
        """log of the Monge-Ampere target a_t e^E omega_X^n over n! 2^n dV."""
        a_t, _ = normalization_constants(self, t)
        det_x = np.linalg.det(self.omega_X.coeffs).real
        return self.E.values + math.log(a_t) + np.log(det_x)


def ricci_potential(omega_x: HermitianFormField, target_volume: float) -> PeriodicScalarField:
    """The potential E with Ric(omega_X) = i d dbar E and
    integral e^E omega_X^n = target_volume.

    On the torus this is exact in closed form:
    E = -log(det h / det h_flat) + c.
    """
    grid = omega_x.grid
    det_ratio = np.linalg.det(omega_x.coeffs).real / (0.5 ** grid.n)
    e0 = PeriodicScalarField(grid, -np.log(det_ratio))
    raw = integrate(PeriodicScalarField(grid, np.exp(e0.values)), omega_x)
    return e0.shifted(math.log(target_volume / raw))


def build_family(spec: ScenarioSpec) -> AdiabaticFamily:
    """Assemble the adiabatic family, rejecting positivity violations."""
    grid = spec.grid
    fib = spec.fibration
    n, m = spec.n, spec.m

    rho = PeriodicScalarField(grid, _rho_values(spec))
    omega_x = flat_metric(grid) + HermitianFormField(grid, _spectral.ddbar(rho.values, n))
    eig_x = min_eigenvalue(omega_x)
    if eig_x.values.min() < POSITIVITY_MARGIN:
        worst = np.unravel_index(int(eig_x.values.argmin()), eig_x.values.shape)
        raise PositivityError(
            "omega_X = flat + i d dbar(rho) is not sufficiently positive "
            f"(floor {POSITIVITY_MARGIN})", float(eig_x.values.min()), worst)
    omega_x = omega_x.as_metric()

    v_base = _v_values_base(spec)
    base_flat = np.zeros(fib.base_shape + (m, m), dtype=complex)
    base_flat[..., np.arange(m), np.arange(m)] = 0.5
    z_coeffs = base_flat + base_ddbar(v_base, fib)
    eig_z = np.linalg.eigvalsh(z_coeffs)[..., 0]
    if eig_z.min() < POSITIVITY_MARGIN:
        worst = np.unravel_index(int(eig_z.argmin()), eig_z.shape)
        raise PositivityError(
            "omega_Z = flat + i d dbar(v) is not sufficiently positive "
            f"(floor {POSITIVITY_MARGIN})", float(eig_z.min()), worst)
    omega_z = BaseForm(fib, z_coeffs, metric_flag=True)

    # omega_0 = f^* omega_Z: base block broadcast, fiber rows/columns zero
    coeffs_0 = np.zeros(grid.shape + (n, n), dtype=complex)
    coeffs_0[..., fib.fiber_dim:, fib.fiber_dim:] = pullback(z_coeffs, fib)
    omega_0 = HermitianFormField(grid, coeffs_0)

    wedge = []
    for k in range(n + 1):
        dens = mixed_wedge_density(omega_x.coeffs, coeffs_0, k, n)
        wedge.append(math.comb(n, k) * float(dens.mean()))
    volume_1 = float(sum(wedge))

    e_field = ricci_potential(omega_x, volume_1)

    return AdiabaticFamily(
        spec=spec, omega_X=omega_x, omega_0=omega_0, omega_Z=omega_z,
        E=e_field, rho=rho, v_base=v_base, wedge_volumes=tuple(wedge),
    )


def normalization_constants(family: AdiabaticFamily, t: float) -> tuple[float, float]:
    """(a_t, c_t): a_t = integral omega_t^n / integral omega_1^n and
    c_t = a_t / t^(n-m), bounded away from zero and infinity on (0,1].
    """
    if t <= 0:
        raise ScenarioError(f"normalization constants need t > 0, got {t}")
    n, m = family.spec.n, family.spec.m
    p_t = sum(w * t ** k for k, w in enumerate(family.wedge_volumes))
    a_t = p_t / family.volume_1
    return a_t, a_t / t ** (n - m)


def jacobian_density(family: AdiabaticFamily) -> JacobianDensity:
    """H = omega_0^m /\ omega_X^(n-m) / omega_X^n, strictly positive here
    (every scenario in this package has no singular fibers)."""
    n, m = family.spec.n, family.spec.m
    mixed = mixed_wedge_density(family.omega_0.coeffs, family.omega_X.coeffs, m, n)
    h_vals = mixed / top_density(family.omega_X).values
    return JacobianDensity(PeriodicScalarField(family.grid, h_vals))


def oracle_potential(family: AdiabaticFamily, t: float) -> PeriodicScalarField:
    """Closed-form sup-normalized solution of the Monge-Ampere family.

    Available for every scenario built from Fourier perturbation
    potentials: phi*_t = inf(f^* v + t rho) - (f^* v + t rho).
    """
    if t <= 0:
        raise ScenarioError(f"oracle potential needs t > 0, got {t}")
    w = pullback(family.v_base, family.fibration) + t * family.rho.values
    return PeriodicScalarField(family.grid, w.min() - w)
