"""Command line front end: scenario ingestion, orchestration, reports.

Commands (see README for the scenario TOML schema):

    adlab check --scenario F
    adlab solve --scenario F --t T [--out DIR]
    adlab sweep --scenario F --t-start A --t-factor R --steps K [--out DIR]
    adlab limit --scenario F [schedule flags] [--out DIR]
    adlab wp    --scenario F [--out DIR]
    adlab report --from DIR

Exit codes: 0 success, 2 validation error (strict TOML schema, scenario
invariants), 3 solver failure (partial sweep results are preserved).
JSON and CSV outputs are byte-identical across reruns of the same
manifest; the environment variable ADLAB_THREADS caps the worker count
of fiberwise solves.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "adlab"
import matplotlib.pyplot as plt  # noqa: E402

from . import __version__  # noqa: E402
from .diagnostics import collect_diagnostics, exponent_fit  # noqa: E402
from .errors import (AdlabError, ConsistencyError, FiberSolveError,  # noqa: E402
                     PositivityError, ScenarioError, SchemaError, SolverError,
                     SweepError)
from .geometry import min_eigenvalue  # noqa: E402
from .scenario import (AdiabaticFamily, ChartSpec, Mode, ScenarioSpec,  # noqa: E402
                       build_family)
from .semiflat import run_limit_pipeline  # noqa: E402
from .solver import SolverConfig, continuation_sweep, solve_potential  # noqa: E402
from .weilpetersson import (ModuliChart, PluricanonicalSample,  # noqa: E402
                            wp_metric, wp_product_case, wp_pseudonorm)

RECORD_KEYS = (
    "t", "residual", "iterations", "schwarz_sup", "schwarz_inf",
    "env_total_min", "env_total_max", "env_fiber_min", "env_fiber_max",
    "s_fiber", "osc", "vol_ratio", "sup_phi",
    "limit_diff_c0", "limit_diff_c1",
)

_PLOT_KEYS = (
    "osc", "s_fiber", "vol_ratio", "sup_phi", "schwarz_sup",
    "env_total_max", "env_fiber_max", "limit_diff_c0", "limit_diff_c1",
)


# ---------------------------------------------------------------------------
# scenario TOML
# ---------------------------------------------------------------------------

_TOP_KEYS = {"label", "n", "m", "N", "rho_modes", "v_modes", "solver", "chart"}
_MODE_KEYS = {"k", "amp", "phase"}
_SOLVER_KEYS = {"residual_tol", "max_iter"}
_CHART_KEYS = {"tau0", "epsilon", "resolution", "k"}


def _check_keys(table: dict, allowed: set, where: str):
    unknown = set(table) - allowed
    if unknown:
        raise SchemaError(f"unknown key(s) {sorted(unknown)} in {where}")


def _parse_mode(table: dict, where: str) -> Mode:
    _check_keys(table, _MODE_KEYS, where)
    if "k" not in table or "amp" not in table:
        raise SchemaError(f"{where} needs 'k' and 'amp'")
    k = table["k"]
    if not isinstance(k, list) or not all(isinstance(x, int) for x in k):
        raise SchemaError(f"{where}: 'k' must be a list of integers")
    return Mode(tuple(k), float(table["amp"]), float(table.get("phase", 0.0)))


def parse_scenario(text: str) -> ScenarioSpec:
    """Parse and validate a scenario TOML document (strict schema)."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise SchemaError(f"invalid TOML: {exc}") from exc
    _check_keys(doc, _TOP_KEYS, "scenario")
    for key in ("n", "m", "N"):
        if key not in doc:
            raise SchemaError(f"scenario requires key '{key}'")
        if not isinstance(doc[key], int):
            raise SchemaError(f"scenario key '{key}' must be an integer")

    rho = tuple(_parse_mode(tbl, f"rho_modes[{i}]")
                for i, tbl in enumerate(doc.get("rho_modes", [])))
    v = tuple(_parse_mode(tbl, f"v_modes[{i}]")
              for i, tbl in enumerate(doc.get("v_modes", [])))

    residual_tol = max_iter = None
    if "solver" in doc:
        _check_keys(doc["solver"], _SOLVER_KEYS, "[solver]")
        residual_tol = doc["solver"].get("residual_tol")
        max_iter = doc["solver"].get("max_iter")

    chart = None
    if "chart" in doc:
        tbl = doc["chart"]
        _check_keys(tbl, _CHART_KEYS, "[chart]")
        tau0 = tbl.get("tau0", [0.0, 1.0])
        if not (isinstance(tau0, list) and len(tau0) == 2):
            raise SchemaError("[chart] tau0 must be [re, im]")
        chart = ChartSpec(
            tau0=complex(float(tau0[0]), float(tau0[1])),
            epsilon=float(tbl.get("epsilon", 0.0)),
            resolution=int(tbl.get("resolution", 64)),
            k=int(tbl.get("k", 1)),
        )

    return ScenarioSpec(
        n=doc["n"], m=doc["m"], N=doc["N"],
        label=str(doc.get("label", "scenario")),
        rho_modes=rho, v_modes=v,
        residual_tol=residual_tol, max_iter=max_iter, chart=chart,
    )


def load_scenario(path: str | Path) -> ScenarioSpec:
    return parse_scenario(Path(path).read_text(encoding="utf-8"))


def solver_config(spec: ScenarioSpec, residual_tol: float | None = None) -> SolverConfig:
    kwargs = {}
    if spec.residual_tol is not None:
        kwargs["residual_tol"] = spec.residual_tol
    if spec.max_iter is not None:
        kwargs["max_iter"] = spec.max_iter
    if residual_tol is not None:
        kwargs["residual_tol"] = residual_tol
    return SolverConfig(**kwargs)


# ---------------------------------------------------------------------------
# manifests and emission
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunManifest:
    command: str
    scenario_path: str
    scenario_sha256: str
    t_schedule: tuple[float, ...]
    solver: dict
    out_dir: str
    version: str

    @classmethod
    def create(cls, command: str, scenario_path: Path, schedule, config: SolverConfig,
               out_dir: Path) -> "RunManifest":
        digest = hashlib.sha256(scenario_path.read_bytes()).hexdigest()
        return cls(
            command=command,
            scenario_path=str(scenario_path),
            scenario_sha256=digest,
            t_schedule=tuple(float(t) for t in schedule),
            solver={"residual_tol": config.residual_tol, "max_iter": config.max_iter},
            out_dir=str(out_dir),
            version=__version__,
        )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, int, str)) or obj is None:
        return obj
    if isinstance(obj, float):
        return obj
    try:
        import numpy as np
        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, np.floating):
            return float(obj)
    except ImportError:  # pragma: no cover
        pass
    raise TypeError(f"not JSON-serializable: {type(obj)!r}")


def write_json(path: Path, obj) -> None:
    path.write_text(
        json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )


def _record(diag, limit_c0=None, limit_c1=None) -> dict:
    return {
        "t": diag.t,
        "residual": diag.residual,
        "iterations": diag.iterations,
        "schwarz_sup": diag.schwarz_sup,
        "schwarz_inf": diag.schwarz_inf,
        "env_total_min": diag.env_total_min,
        "env_total_max": diag.env_total_max,
        "env_fiber_min": diag.env_fiber_min,
        "env_fiber_max": diag.env_fiber_max,
        "s_fiber": diag.s_fiber,
        "osc": diag.osc,
        "vol_ratio": diag.vol_ratio,
        "sup_phi": diag.sup_norm_phi,
        "limit_diff_c0": limit_c0,
        "limit_diff_c1": limit_c1,
    }


def _fit_or_none(records: list[dict], key: str):
    pairs = [(r["t"], r[key]) for r in records
             if r.get(key) is not None and r[key] > 0 and r["t"] > 0]
    if len(pairs) < 4:
        return None
    fit = exponent_fit(pairs)
    return {"slope": fit.slope, "intercept": fit.intercept,
            "r_squared": fit.r_squared, "points": fit.points}


def emit_report(records: list[dict], out_dir: Path, label: str = "sweep") -> None:
    """Write sweep.json, sweep.csv (rows sorted by descending t),
    fits.json and one log-log SVG per positive diagnostic."""
    if not records:
        raise ScenarioError("emit_report needs at least one record")
    records = sorted(records, key=lambda r: -r["t"])
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(out_dir / "sweep.json",
               {"label": label, "schema": list(RECORD_KEYS), "records": records})

    with (out_dir / "sweep.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RECORD_KEYS)
        for rec in records:
            writer.writerow(
                ["" if rec[k] is None else repr(rec[k]) if isinstance(rec[k], float)
                 else rec[k] for k in RECORD_KEYS])

    fits = {key: _fit_or_none(records, key)
            for key in ("osc", "s_fiber", "limit_diff_c0", "limit_diff_c1")}
    write_json(out_dir / "fits.json", fits)

    for key in _PLOT_KEYS:
        points = [(r["t"], r[key]) for r in records
                  if r.get(key) is not None and r[key] > 0]
        if len(points) < 2:
            continue
        fig, ax = plt.subplots(figsize=(4.5, 3.4))
        ax.loglog([p[0] for p in points], [p[1] for p in points], "o-")
        ax.set_xlabel("t")
        ax.set_ylabel(key)
        ax.grid(True, which="both", alpha=0.3)
        fig.tight_layout()
        fig.savefig(out_dir / f"plot_{key}.svg", metadata={"Date": None})
        plt.close(fig)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _schedule(args) -> list[float]:
    return [args.t_start * args.t_factor ** i for i in range(args.steps + 1)]


def _cmd_check(args) -> int:
    spec = load_scenario(args.scenario)
    family = build_family(spec)
    eig_x = min_eigenvalue(family.omega_X).values.min()
    print(f"scenario '{spec.label}' ok: n={spec.n} m={spec.m} N={spec.N}, "
          f"min eigenvalue of omega_X = {eig_x:.6f}")
    return 0


def _cmd_solve(args) -> int:
    spec = load_scenario(args.scenario)
    out = Path(args.out or f"runs/solve-{spec.label}")
    out.mkdir(parents=True, exist_ok=True)
    config = solver_config(spec)
    manifest = RunManifest.create("solve", Path(args.scenario), [args.t], config, out)
    write_json(out / "manifest.json", manifest.__dict__)
    family = build_family(spec)
    report = solve_potential(family, args.t, config)
    write_json(out / "report.json", {
        "t": report.t,
        "residual": report.final_residual,
        "iterations": report.iterations,
        "min_metric_eigenvalue": report.min_metric_eigenvalue,
        "sup_phi": report.sup_norm_phi,
    })
    print(f"t={report.t}: residual {report.final_residual:.3e} "
          f"in {report.iterations} iterations -> {out}/report.json")
    return 0


def _run_sweep(family: AdiabaticFamily, schedule, config) -> tuple[list, list[dict]]:
    reports = continuation_sweep(family, schedule, config)
    records = [_record(collect_diagnostics(family, rep)) for rep in reports]
    return reports, records


def _cmd_sweep(args) -> int:
    spec = load_scenario(args.scenario)
    out = Path(args.out or f"runs/sweep-{spec.label}")
    out.mkdir(parents=True, exist_ok=True)
    config = solver_config(spec)
    schedule = _schedule(args)
    manifest = RunManifest.create("sweep", Path(args.scenario), schedule, config, out)
    write_json(out / "manifest.json", manifest.__dict__)
    family = build_family(spec)
    try:
        reports, records = _run_sweep(family, schedule, config)
    except SweepError as exc:
        records = [_record(collect_diagnostics(family, rep))
                   for rep in exc.partial_reports]
        if records:
            emit_report(records, out, spec.label)
        print(f"error: {exc}", file=sys.stderr)
        return 3
    emit_report(records, out, spec.label)
    print(f"{len(records)} solves -> {out}/sweep.csv")
    return 0


def _cmd_limit(args) -> int:
    spec = load_scenario(args.scenario)
    out = Path(args.out or f"runs/limit-{spec.label}")
    out.mkdir(parents=True, exist_ok=True)
    config = solver_config(spec)
    schedule = _schedule(args)
    manifest = RunManifest.create("limit", Path(args.scenario), schedule, config, out)
    write_json(out / "manifest.json", manifest.__dict__)
    family = build_family(spec)
    try:
        reports, records = _run_sweep(family, schedule, config)
        pipeline = run_limit_pipeline(family, reports)
    except SweepError as exc:
        records = [_record(collect_diagnostics(family, rep))
                   for rep in exc.partial_reports]
        if records:
            emit_report(records, out, spec.label)
        print(f"error: {exc}", file=sys.stderr)
        return 3
    rows = {row.t: row for row in pipeline.comparison.rows}
    records = [_record(collect_diagnostics(family, rep),
                       rows[rep.t].c0_difference, rows[rep.t].c1_difference)
               for rep in reports]
    emit_report(records, out, spec.label)
    limit = pipeline.limit
    write_json(out / "limit.json", {
        "F_min": float(limit.F.values.min()),
        "F_max": float(limit.F.values.max()),
        "route_agreement": pipeline.route_agreement,
        "solvability_defect": limit.solvability_defect,
        "base_residual": limit.residual,
        "psi_lim_sup_norm": float(-limit.psi_lim.values.min()),
        "fiber_solve_residual": pipeline.fiber_data.max_residual,
        "ke_intermediate_linf": pipeline.ke.linf_intermediate,
        "ke_ric_minus_wp_linf": pipeline.ke.linf_ric_minus_wp,
        "comparison_c0_fit": _fit_or_none(records, "limit_diff_c0"),
    })
    print(f"limit pipeline done -> {out}/limit.json")
    return 0


def _cmd_wp(args) -> int:
    spec = load_scenario(args.scenario)
    out = Path(args.out or f"runs/wp-{spec.label}")
    out.mkdir(parents=True, exist_ok=True)
    config = solver_config(spec)
    manifest = RunManifest.create("wp", Path(args.scenario), [], config, out)
    write_json(out / "manifest.json", manifest.__dict__)
    family = build_family(spec)
    zero_form, cert = wp_product_case(family)
    payload = {
        "isotrivial_certificate": {
            "oscillation": cert.oscillation,
            "tolerance": cert.tolerance,
            "passed": cert.passed,
        },
        "chart": None,
    }
    if spec.chart is not None:
        import numpy as np
        chart = ModuliChart.from_spec(spec.chart)
        sample = PluricanonicalSample.on_chart(chart, k=spec.chart.k)
        form = wp_metric(wp_pseudonorm(sample))
        # closed form: -d_w d_wbar log Im tau = |tau'|^2 / (4 Im^2 tau)
        tau = chart.tau[2:-2, 2:-2]
        closed = abs(spec.chart.epsilon) ** 2 / (4.0 * tau.imag ** 2)
        payload["chart"] = {
            "resolution": spec.chart.resolution,
            "k": spec.chart.k,
            "value_at_center": form.at_center(),
            "closed_form_deviation": float(np.abs(form.values - closed).max()),
            "min_coefficient": float(form.values.min()),
        }
    write_json(out / "wp.json", payload)
    print(f"weil-petersson checks -> {out}/wp.json")
    return 0


def _cmd_report(args) -> int:
    src = Path(getattr(args, "from"))
    sweep_path = src / "sweep.json"
    if not sweep_path.exists():
        raise ScenarioError(f"no sweep.json under {src}")
    doc = json.loads(sweep_path.read_text(encoding="utf-8"))
    emit_report(doc["records"], src, doc.get("label", "sweep"))
    print(f"regenerated report under {src}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adlab",
        description="Adiabatic collapse laboratory for Ricci-flat Kahler "
                    "metrics on torus fibrations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_scenario(p):
        p.add_argument("--scenario", required=True, help="scenario TOML file")
        p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("check", help="validate a scenario file")
    p.add_argument("--scenario", required=True)
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("solve", help="solve at one t")
    add_scenario(p)
    p.add_argument("--t", type=float, required=True)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("sweep", help="continuation sweep with diagnostics")
    add_scenario(p)
    p.add_argument("--t-start", type=float, default=1.0)
    p.add_argument("--t-factor", type=float, default=0.5)
    p.add_argument("--steps", type=int, default=8)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("limit", help="sweep plus the full collapse-limit pipeline")
    add_scenario(p)
    p.add_argument("--t-start", type=float, default=1.0)
    p.add_argument("--t-factor", type=float, default=0.5)
    p.add_argument("--steps", type=int, default=8)
    p.set_defaults(func=_cmd_limit)

    p = sub.add_parser("wp", help="Weil-Petersson certificates and chart checks")
    add_scenario(p)
    p.set_defaults(func=_cmd_wp)

    p = sub.add_parser("report", help="re-emit tables and plots from stored records")
    p.add_argument("--from", required=True, help="directory holding sweep.json")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SchemaError, ScenarioError, PositivityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, SweepError, FiberSolveError, ConsistencyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except AdlabError as exc:  # pragma: no cover
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
