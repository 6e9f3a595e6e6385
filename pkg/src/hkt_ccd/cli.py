"""Command-line front end: ``hkt-ccd run | validate | cp-curve``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .bem import BemError, cp_curve
from .colloc import OcpConfig
from .dynamics import FlowProfile
from .pipelines import METHODS, ComparisonReport, DesignVector, compare, report_cp_curves, run_baseline, run_ccd, run_sequential
from .rotor_model import IngestionError, RotorSpec, build_scaled_baseline, load_geometry, load_polars

log = logging.getLogger("hkt_ccd")

SCHEMA_VERSION = 1
_TOP_KEYS = {"schema_version", "name", "profile", "u_max", "methods", "geometry", "initial_guess",
             "collocation", "solver", "fluid_density", "output_dir"}
_PROFILE_KEYS = {
    "sinusoidal": {"mean", "amplitude", "angular_rate"},
    "ramp": {"offset", "gain", "rate", "exponent"},
    "table": {"times", "speeds"},
}


@dataclass
class ScenarioConfig:
    name: str
    profile: FlowProfile
    u_max: float | None
    methods: list
    geometry: str  # "baseline" or a geometry CSV path
    lambda_design: float
    omega_lambda: float | None  # tip-speed ratio of the CCD initial ω guess
    ocp: OcpConfig
    feas_tol: float
    opt_tol: float
    fluid_density: float
    output_dir: Path


def _num(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def check_config(raw: dict, base: Path) -> list[str]:
    """Static diagnostics; an empty list means the config is valid."""
    diags = []
    if not isinstance(raw, dict):
        return ["top level: expected a JSON object"]
    for k in sorted(set(raw) - _TOP_KEYS):
        diags.append(f"{k}: unknown field")
    if raw.get("schema_version") != SCHEMA_VERSION:
        diags.append(f"schema_version: expected {SCHEMA_VERSION}, got {raw.get('schema_version')!r}")

    prof = raw.get("profile")
    duration = None
    if not isinstance(prof, dict):
        diags.append("profile: required object")
    else:
        kind = prof.get("kind")
        if kind not in _PROFILE_KEYS:
            diags.append(f"profile.kind: unknown kind {kind!r} (expected one of {sorted(_PROFILE_KEYS)})")
        else:
            for k in sorted(_PROFILE_KEYS[kind] - set(prof)):
                diags.append(f"profile.{k}: required for a {kind} profile")
            for k in sorted(set(prof) - _PROFILE_KEYS[kind] - {"kind", "duration"}):
                diags.append(f"profile.{k}: unknown field for a {kind} profile")
        duration = prof.get("duration")
        if not _num(duration) or duration <= 0:
            diags.append("profile.duration: must be a positive number")
            duration = None

    umax = raw.get("u_max", "unbounded")
    if umax != "unbounded" and (not _num(umax) or umax < 0):
        diags.append(f"u_max: must be a non-negative number or \"unbounded\", got {umax!r}")

    methods = raw.get("methods")
    if not isinstance(methods, list) or not methods:
        diags.append("methods: must be a non-empty list")
    else:
        for i, m in enumerate(methods):
            if m not in METHODS:
                diags.append(f"methods[{i}]: unknown method {m!r} (expected one of {list(METHODS)})")
        if len(set(map(str, methods))) != len(methods):
            diags.append("methods: duplicate entries")

    geom = raw.get("geometry", "baseline")
    if not isinstance(geom, str):
        diags.append("geometry: must be \"baseline\" or a geometry CSV path")
    elif geom != "baseline" and not (base / geom).exists():
        diags.append(f"geometry: file not found: {base / geom}")

    ig = raw.get("initial_guess", {})
    if not isinstance(ig, dict):
        diags.append("initial_guess: must be an object")
    else:
        lam = ig.get("lambda_design", 8.0)
        if not _num(lam) or lam <= 0:
            diags.append("initial_guess.lambda_design: must be a positive number")
        om = ig.get("omega_lambda")
        if om is not None and (not _num(om) or om <= 0):
            diags.append("initial_guess.omega_lambda: must be a positive number or null")

    col = raw.get("collocation", {})
    if not isinstance(col, dict):
        diags.append("collocation: must be an object")
    else:
        horizon = col.get("horizon", 150.0)
        if not _num(horizon) or horizon <= 0:
            diags.append("collocation.horizon: must be a positive number")
        elif duration is not None and duration < horizon:
            diags.append(f"profile.duration ({duration}) is shorter than collocation.horizon ({horizon})")
        nseg = col.get("num_segments", 30)
        if not isinstance(nseg, int) or isinstance(nseg, bool) or nseg < 1:
            diags.append("collocation.num_segments: must be an integer >= 1")
        om0 = col.get("omega0", "free")
        if om0 != "free" and (not _num(om0) or om0 < 0):
            diags.append("collocation.omega0: must be \"free\" or a non-negative number")

    sol = raw.get("solver", {})
    if not isinstance(sol, dict):
        diags.append("solver: must be an object")
    else:
        for k in ("feas_tol", "opt_tol"):
            v = sol.get(k, 1e-6)
            if not _num(v) or v <= 0:
                diags.append(f"solver.{k}: must be > 0")

    rho = raw.get("fluid_density", 1000.0)
    if not _num(rho) or rho <= 0:
        diags.append("fluid_density: must be a positive number")

    if not diags and isinstance(prof, dict):
        try:
            _profile(prof)
        except ValueError as exc:
            diags.append(f"profile: {exc}")
    return diags


def _profile(p: dict) -> FlowProfile:
    params = {k: v for k, v in p.items() if k not in ("kind", "duration")}
    return FlowProfile(p["kind"], params, float(p["duration"]))


def read_config(path) -> tuple[dict | None, list[str]]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        return None, [f"{path}: cannot read ({exc.strerror})"]
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        return None, [f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}"]
    return raw, check_config(raw, path.parent)


def parse_config(raw: dict, base: Path) -> ScenarioConfig:
    col = raw.get("collocation", {})
    ig = raw.get("initial_guess", {})
    sol = raw.get("solver", {})
    umax = raw.get("u_max", "unbounded")
    umax = None if umax == "unbounded" else float(umax)
    om0 = col.get("omega0", "free")
    ocp = OcpConfig(horizon=float(col.get("horizon", 150.0)), num_segments=int(col.get("num_segments", 30)),
                    u_max=umax, omega0=None if om0 == "free" else float(om0))
    geom = raw.get("geometry", "baseline")
    return ScenarioConfig(
        name=str(raw.get("name", "scenario")), profile=_profile(raw["profile"]), u_max=umax,
        methods=list(raw["methods"]), geometry=geom if geom == "baseline" else str(base / geom),
        lambda_design=float(ig.get("lambda_design", 8.0)), omega_lambda=ig.get("omega_lambda"),
        ocp=ocp, feas_tol=float(sol.get("feas_tol", 1e-6)), opt_tol=float(sol.get("opt_tol", 1e-6)),
        fluid_density=float(raw.get("fluid_density", 1000.0)),
        output_dir=Path(raw.get("output_dir", f"out/{raw.get('name', 'scenario')}")),
    )


def scenario_spec(sc: ScenarioConfig) -> RotorSpec:
    spec = build_scaled_baseline(fluid_density=sc.fluid_density)
    if sc.geometry != "baseline":
        geom = load_geometry(sc.geometry)
        spec = RotorSpec(geom, load_polars(sorted({s.polar_id for s in geom.sections})),
                         num_blades=spec.num_blades, inertia=spec.inertia,
                         fluid_density=sc.fluid_density, rated_speed=spec.rated_speed)
    return spec


def _run_method(sc: ScenarioConfig, method: str):
    spec = scenario_spec(sc)
    init = DesignVector.from_spec(spec, sc.lambda_design)
    kw = dict(feas_tol=sc.feas_tol, opt_tol=sc.opt_tol)
    if method == "baseline":
        return run_baseline(sc.profile, sc.ocp, spec, **kw)
    if method == "sequential":
        return run_sequential(sc.profile, sc.ocp, init, spec, **kw)
    return run_ccd(sc.profile, sc.ocp, init, sc.omega_lambda, spec, **kw)


def _result_json(report, sc, failures) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "name": sc.name,
        "methods": [
            {"method": e.method, "status": e.status, "energy_kJ": e.energy, "improvement_pct": e.improvement_pct,
             "cp_star": e.cp_star, "lambda_star": e.lambda_star, "saturation_fraction": e.saturation_fraction,
             "resim_energy_kJ": e.resim_energy, "chords_m": list(e.geometry.free_chords),
             "twists_deg": list(e.geometry.free_twists)}
            for e in report.entries
        ] if report else [],
        "failures": failures,
    }


def cmd_run(args) -> int:
    raw, diags = read_config(args.config)
    if diags:
        for d in diags:
            print(f"error: {d}", file=sys.stderr)
        return 2
    sc = parse_config(raw, Path(args.config).resolve().parent)
    out = Path(args.out) if args.out else sc.output_dir
    try:
        scenario_spec(sc)
    except (IngestionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    results, failures = {}, {}
    if args.jobs > 1 and len(sc.methods) > 1:
        with ProcessPoolExecutor(max_workers=min(args.jobs, len(sc.methods))) as pool:
            futs = {m: pool.submit(_run_method, sc, m) for m in sc.methods}
            for m, fut in futs.items():
                try:
                    results[m] = fut.result()
                except Exception as exc:  # one failed method must not abort the others
                    failures[m] = str(exc)
    else:
        for m in sc.methods:
            try:
                results[m] = _run_method(sc, m)
            except Exception as exc:
                failures[m] = str(exc)
    for m, msg in failures.items():
        print(f"{m}: failed: {msg}", file=sys.stderr)

    report = None
    out.mkdir(parents=True, exist_ok=True)
    if results:
        entries = [results[m] for m in sc.methods if m in results]
        if len(entries) == 1:
            e = entries[0]
            report = ComparisonReport([replace(e, improvement_pct=0.0)], e.profile, e.cfg)
        else:
            report = compare(entries)
        spec = scenario_spec(sc)
        try:
            curves = report_cp_curves(report, base_spec=spec)
        except BemError as exc:
            curves = {e.method: exc.partial for e in report.entries} if hasattr(exc, "partial") else {}
        from .report import write_artifacts

        write_artifacts(report, out, curves, title=f"Energy comparison: {sc.name}", failures=failures)
        for e in report.entries:
            print(f"{e.method:<11s} {e.status:<15s} E = {e.energy:10.1f} kJ  "
                  f"({e.improvement_pct:+.1f} %)  Cp* = {e.cp_star:.4f} at lambda {e.lambda_star:.2f}")
    (out / "result.json").write_text(json.dumps(_result_json(report, sc, failures), indent=2) + "\n",
                                     encoding="utf-8")
    ok = not failures and report is not None and all(e.status == "converged" for e in report.entries)
    return 0 if ok else 1


def cmd_validate(args) -> int:
    _, diags = read_config(args.config)
    if diags:
        for d in diags:
            print(d)
        return 1
    print("ok")
    return 0


def _parse_lambdas(text: str):
    try:
        lo, hi, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("expected start:stop:step") from None
    if step <= 0 or lo <= 0 or hi < lo:
        raise argparse.ArgumentTypeError("need 0 < start <= stop and step > 0")
    return np.round(np.arange(lo, hi + 0.5 * step, step), 10)


def cmd_cp_curve(args) -> int:
    try:
        geom = load_geometry(args.geometry)
        polars = load_polars(sorted({s.polar_id for s in geom.sections}))
        spec = RotorSpec(geom, polars, fluid_density=args.fluid_density)
    except (IngestionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    status = 0
    try:
        curve = cp_curve(spec, args.lambdas, args.v_ref)
    except BemError as exc:
        curve = exc.partial
        print(f"error: {exc}", file=sys.stderr)
        status = 1
    from .report import write_cp_curve

    if args.out:
        write_cp_curve(args.out, curve)
    else:
        print("lambda,cp")
        for lam, cp in curve:
            print(f"{lam:.10g},{cp:.10g}")
    return status


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hkt-ccd", description="Hydrokinetic turbine rotor control co-design")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario configuration")
    r.add_argument("config")
    r.add_argument("--jobs", type=int, default=1, help="parallel method runs")
    r.add_argument("--out", help="output directory (overrides output_dir)")
    r.set_defaults(func=cmd_run)
    v = sub.add_parser("validate", help="check a scenario configuration without solving")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)
    c = sub.add_parser("cp-curve", help="Cp(lambda) of a geometry CSV")
    c.add_argument("geometry")
    c.add_argument("--lambdas", type=_parse_lambdas, default=_parse_lambdas("2:12:0.25"))
    c.add_argument("--v-ref", type=float, default=1.4)
    c.add_argument("--fluid-density", type=float, default=1000.0)
    c.add_argument("--out")
    c.set_defaults(func=cmd_cp_curve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
