"""adlab: a numerical laboratory for adiabatic limits of Ricci-flat
Kahler metrics on torus fibrations.

The package constructs degenerating families of Kahler classes
[omega_0] + t [omega_X] on X = C^n/(Z^n + i Z^n) fibered over a lower
dimensional torus, solves the associated complex Monge-Ampere equations
along a t-schedule, and measures the collapse: fiber shrinking rates,
oscillation decay, convergence to the base limit metric, and the
generalized Kahler-Einstein identity Ric(omega) = omega_WP, all checked
against exact flat-model oracles.
"""

__version__ = "0.1.0"

from .errors import (AdlabError, ConsistencyError, FiberSolveError,
                     PositivityError, ScenarioError, SchemaError, SolverError,
                     SweepError)
from .geometry import (GridSpec, HermitianFormField, PeriodicScalarField,
                       ddbar, flat_metric, integrate, min_eigenvalue,
                       ricci_form, top_density, top_ratio, trace_pair)
from .fibration import (BaseField, BaseForm, FiberForm, FibrationSpec,
                        fiber_average, fiber_normalized_potential,
                        fiber_volume, pushforward_volume, restrict_to_fiber)
from .scenario import (AdiabaticFamily, ChartSpec, JacobianDensity, Mode,
                       ScenarioSpec, build_family, jacobian_density,
                       normalization_constants, oracle_potential,
                       ricci_potential)
from .solver import (SolveReport, SolverConfig, continuation_sweep,
                     ma_residual, metric_coefficients, solve_potential)
from .semiflat import (FiberRicciData, LimitConstants, LimitData,
                       assemble_semiflat, build_fiber_ricci_data, density_F,
                       fiber_ricci_data, generalized_ke_residual,
                       limit_comparison, run_limit_pipeline,
                       solve_base_limit, solve_fiber_ricci_flat)
from .weilpetersson import (ModuliChart, PluricanonicalSample, wp_metric,
                            wp_product_case, wp_pseudonorm)
from .diagnostics import (DiagnosticRecord, ExponentFit, collect_diagnostics,
                          eigenvalue_envelope, exponent_fit, fiber_c3_norm,
                          fiber_geometry_constants, oscillation,
                          schwarz_trace, volume_ratio_check)
