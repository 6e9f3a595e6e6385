"""End-to-end studies: baseline with optimal control, sequential design, and CCD."""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .bem import DEFAULT_V_REF, cp_curve, max_cp, rotor_batch
from .colloc import CHORD_MIN, OcpConfig, canonical_controls, extract_trajectory, transcribe
from .dynamics import FlowProfile, Trajectory, energy, piecewise_quadratic, simulate
from .nlp import NlpProblem, NlpSolution, solve
from .rotor_model import (CHORD_MAX, TWIST_MAX, TWIST_MIN, BladeGeometry, RotorSpec,
                          build_scaled_baseline, validate_bounds)

log = logging.getLogger(__name__)

LAMBDA_BOUNDS = (1.0, 15.0)
LAMBDA_SCALE = 10.0
RESIM_DT = 0.05  # s
METHODS = ("baseline", "sequential", "ccd")


class PipelineError(RuntimeError):
    def __init__(self, message, solution: NlpSolution | None = None):
        super().__init__(message)
        self.solution = solution


@dataclass(frozen=True)
class DesignVector:
    chords: tuple  # m, free sections root to tip
    twists: tuple  # deg
    lambda_design: float = 8.0

    def __post_init__(self):
        object.__setattr__(self, "chords", tuple(float(c) for c in self.chords))
        object.__setattr__(self, "twists", tuple(float(t) for t in self.twists))
        if len(self.chords) != len(self.twists):
            raise ValueError("chords and twists must have the same length")

    @classmethod
    def from_spec(cls, spec: RotorSpec, lambda_design: float = 8.0) -> "DesignVector":
        g = spec.geometry
        return cls(tuple(g.free_chords), tuple(g.free_twists), lambda_design)

    def violations(self) -> list[str]:
        out = []
        for i, (c, t) in enumerate(zip(self.chords, self.twists)):
            if not 0 < c <= CHORD_MAX:
                out.append(f"free section {i}: chord {c} outside (0, {CHORD_MAX}]")
            if not TWIST_MIN <= t <= TWIST_MAX:
                out.append(f"free section {i}: twist {t} outside [{TWIST_MIN}, {TWIST_MAX}]")
        return out

    def apply(self, spec: RotorSpec) -> RotorSpec:
        if len(self.chords) != len(spec.geometry.free_indices):
            raise ValueError(f"design has {len(self.chords)} sections, rotor has "
                             f"{len(spec.geometry.free_indices)} free sections")
        return spec.with_design(self.chords, self.twists)


@dataclass
class MethodResult:
    method: str
    geometry: BladeGeometry
    trajectory: Trajectory
    energy: float  # kJ, collocation objective
    wall_time: float  # s
    cp_star: float
    lambda_star: float
    profile: FlowProfile
    cfg: OcpConfig
    status: str = "converged"
    design: DesignVector | None = None
    resim_energy: float | None = None  # kJ
    saturation_fraction: float = 0.0
    improvement_pct: float | None = None
    solution: NlpSolution | None = field(default=None, repr=False)
    notes: list = field(default_factory=list)


@dataclass
class ComparisonReport:
    entries: list
    profile: FlowProfile
    cfg: OcpConfig

    def entry(self, method: str) -> MethodResult:
        for e in self.entries:
            if e.method == method:
                return e
        raise KeyError(method)

    def energy_table(self) -> list[tuple[str, float, float, float]]:
        """(method, energy kJ, improvement %, wall time s) rows."""
        return [(e.method, e.energy, e.improvement_pct, e.wall_time) for e in self.entries]


# -- steady design ---------------------------------------------------------------

def _base(base_spec):
    return build_scaled_baseline() if base_spec is None else base_spec


def steady_design_problem(base_spec: RotorSpec, v_ref: float = DEFAULT_V_REF) -> NlpProblem:
    """Maximize Cp over (free chords, free twists, λ); scaled variables."""
    nf = len(base_spec.geometry.free_indices)
    scale = np.r_[np.ones(nf), np.full(nf, TWIST_MAX), LAMBDA_SCALE]
    R = base_spec.tip_radius
    den = 0.5 * base_spec.fluid_density * base_spec.disk_area * v_ref**3
    free = base_spec.geometry.free_indices

    def evaluate(z):
        x = z * scale
        spec = base_spec.with_design(x[:nf], x[nf:2 * nf])
        lam = x[-1]
        w = lam * v_ref / R
        b = rotor_batch(spec, [v_ref], [w], derivatives=True)
        q = b.torque[0]
        grad = np.r_[b.dq_dchord[0, free] * w, b.dq_dtwist[0, free] * w,
                     (b.dq_domega[0] * w + q) * v_ref / R] / den
        return q * w / den, grad * scale

    cache = threading.local()

    def cached(z):
        key = np.asarray(z, dtype=float).tobytes()
        if getattr(cache, "key", None) != key:
            cache.value = evaluate(np.asarray(z, dtype=float))
            cache.key = key
        return cache.value

    lower = np.r_[np.full(nf, CHORD_MIN), np.full(nf, TWIST_MIN), LAMBDA_BOUNDS[0]] / scale
    upper = np.r_[np.full(nf, CHORD_MAX), np.full(nf, TWIST_MAX), LAMBDA_BOUNDS[1]] / scale
    return NlpProblem(dimension=2 * nf + 1, objective=lambda z: cached(z)[0],
                      gradient_fn=lambda z: cached(z)[1], lower=lower, upper=upper,
                      meta={"scale": scale, "num_free": nf})


def solve_steady_design(init: DesignVector, base_spec: RotorSpec | None = None,
                        v_ref: float = DEFAULT_V_REF, feas_tol=1e-6, opt_tol=1e-6):
    """(DesignVector, NlpSolution) maximizing steady Cp from ``init``."""
    base_spec = _base(base_spec)
    bad = init.violations()
    if bad:
        raise ValueError("initial design violates bounds: " + "; ".join(bad))
    prob = steady_design_problem(base_spec, v_ref)
    scale = prob.meta["scale"]
    z0 = np.r_[init.chords, init.twists, init.lambda_design] / scale
    sol = solve(prob, z0, feas_tol=feas_tol, opt_tol=opt_tol)
    x = sol.x * scale
    nf = prob.meta["num_free"]
    dv = DesignVector(tuple(x[:nf]), tuple(x[nf:2 * nf]), float(x[-1]))
    if sol.status == "failure":
        raise PipelineError(f"steady design failed: {sol.message}", sol)
    return dv, sol


def optimize_steady_design(init: DesignVector, base_spec: RotorSpec | None = None,
                           v_ref: float = DEFAULT_V_REF) -> DesignVector:
    return solve_steady_design(init, base_spec, v_ref)[0]


# -- optimal control -------------------------------------------------------------

def tracking_guess(nlp, spec: RotorSpec, lam: float, cfg: OcpConfig):
    """ω nodes at tip-speed ratio ``lam`` and u = Q along them, clipped to bounds."""
    omega = lam * nlp.v / spec.tip_radius
    if cfg.omega0 is not None:
        omega = omega.copy()
        omega[0] = cfg.omega0
    u = rotor_batch(spec, nlp.v, omega).torque
    u = np.clip(u, 0.0, np.inf if cfg.u_max is None else cfg.u_max)
    return omega, u


def _solve_ocp(nlp, x0, feas_tol, opt_tol):
    prob = nlp.as_problem()
    sol = solve(prob, x0 / nlp.scale, feas_tol=feas_tol, opt_tol=opt_tol)
    if sol.status == "failure":
        raise PipelineError(f"optimal control solve failed: {sol.message}", sol)
    x = sol.x * nlp.scale
    # snap to the box exactly (scaling round-off)
    x = canonical_controls(nlp, np.clip(x, nlp.lower, nlp.upper))
    return x, sol


def optimize_control(spec: RotorSpec, profile: FlowProfile, cfg: OcpConfig,
                     lambda_guess: float | None = None, feas_tol=1e-6, opt_tol=1e-6) -> Trajectory:
    """Optimal torque trajectory for a fixed rotor; solver record in ``meta``."""
    traj, _ = _optimize_control(spec, profile, cfg, lambda_guess, feas_tol, opt_tol)
    return traj


def _optimize_control(spec, profile, cfg, lambda_guess=None, feas_tol=1e-6, opt_tol=1e-6):
    nlp = transcribe(spec, profile, cfg)
    if lambda_guess is None:
        lambda_guess = max_cp(spec, 8.0)[1]
    x0 = nlp.pack(*tracking_guess(nlp, spec, lambda_guess, cfg))
    x, sol = _solve_ocp(nlp, x0, feas_tol, opt_tol)
    traj = extract_trajectory(nlp, x, profile, spec)
    traj.meta.update(status=sol.status, feasibility=sol.feasibility, optimality=sol.optimality,
                     iterations=sol.iterations)
    if cfg.u_max == 0:
        traj.meta["degenerate"] = "u_max = 0: no reaction torque, the objective counts rotor power only"
    return traj, sol


def resimulate(spec: RotorSpec, traj: Trajectory, profile: FlowProfile, dt: float = RESIM_DT) -> Trajectory:
    """RK4 replay of the node control (piecewise quadratic) from the node ω(0)."""
    control = piecewise_quadratic(traj.times, traj.u)
    return simulate(spec, profile, control, float(traj.omega[0]), dt, t_end=float(traj.times[-1]))


def _finish(method, spec, traj, sol, profile, cfg, t0, design=None, notes=()):
    cp_s, lam_s = max_cp(spec, 8.0)
    resim = resimulate(spec, traj, profile)
    res = MethodResult(
        method=method, geometry=spec.geometry, trajectory=traj, energy=traj.meta["objective_kj"],
        wall_time=time.perf_counter() - t0, cp_star=cp_s, lambda_star=lam_s, profile=profile, cfg=cfg,
        status=sol.status, design=design, resim_energy=energy(resim),
        saturation_fraction=traj.saturation_fraction(cfg.u_max), solution=sol, notes=list(notes),
    )
    for msg in validate_bounds(spec.geometry):
        res.notes.append("bound violation: " + msg)
    if traj.meta.get("bound_violations"):
        res.notes.extend(traj.meta["bound_violations"])
    if "degenerate" in traj.meta:
        res.notes.append(traj.meta["degenerate"])
    return res


def run_baseline(profile: FlowProfile, cfg: OcpConfig, base_spec: RotorSpec | None = None,
                 feas_tol=1e-6, opt_tol=1e-6) -> MethodResult:
    t0 = time.perf_counter()
    spec = _base(base_spec)
    traj, sol = _optimize_control(spec, profile, cfg, feas_tol=feas_tol, opt_tol=opt_tol)
    return _finish("baseline", spec, traj, sol, profile, cfg, t0,
                   design=DesignVector.from_spec(spec, max_cp(spec, 8.0)[1]))


def run_sequential(profile: FlowProfile, cfg: OcpConfig, init: DesignVector,
                   base_spec: RotorSpec | None = None, feas_tol=1e-6, opt_tol=1e-6) -> MethodResult:
    """Steady Cp design first, then optimal control of the frozen rotor."""
    t0 = time.perf_counter()
    base_spec = _base(base_spec)
    design, dsol = solve_steady_design(init, base_spec, feas_tol=feas_tol, opt_tol=opt_tol)
    spec = design.apply(base_spec)
    traj, sol = _optimize_control(spec, profile, cfg, design.lambda_design, feas_tol, opt_tol)
    notes = [f"steady design: Cp {dsol.objective:.6f} at lambda {design.lambda_design:.4f} ({dsol.status})"]
    return _finish("sequential", spec, traj, sol, profile, cfg, t0, design=design, notes=notes)


def run_ccd(profile: FlowProfile, cfg: OcpConfig, init: DesignVector, omega_init_guess=None,
            base_spec: RotorSpec | None = None, feas_tol=1e-6, opt_tol=1e-6,
            initial_trajectory: Trajectory | None = None) -> MethodResult:
    """Joint geometry and control NLP.

    ``omega_init_guess`` is a tip-speed ratio for the λ-tracking initial ω
    trajectory (default: init.lambda_design), or an array of node speeds.
    ``initial_trajectory`` (node grid) overrides both when given.
    """
    t0 = time.perf_counter()
    base_spec = _base(base_spec)
    bad = init.violations()
    if bad:
        raise ValueError("initial design violates bounds: " + "; ".join(bad))
    spec0 = init.apply(base_spec)
    nlp = transcribe(base_spec.with_design, profile, cfg, include_geometry=True,
                     design=(np.array(init.chords), np.array(init.twists)))
    if initial_trajectory is not None:
        omega, u = initial_trajectory.omega, initial_trajectory.u
    elif omega_init_guess is not None and np.ndim(omega_init_guess) > 0:
        omega = np.asarray(omega_init_guess, dtype=float)
        u = np.clip(rotor_batch(spec0, nlp.v, omega).torque, 0, np.inf if cfg.u_max is None else cfg.u_max)
    else:
        lam = init.lambda_design if omega_init_guess is None else float(omega_init_guess)
        omega, u = tracking_guess(nlp, spec0, lam, cfg)
    x0 = nlp.pack(omega, u, init.chords, init.twists)
    x, sol = _solve_ocp(nlp, x0, feas_tol, opt_tol)
    parts = nlp.unpack(x)
    spec = base_spec.with_design(parts["chords"], parts["twists"])
    traj = extract_trajectory(nlp, x, profile, spec)
    traj.meta.update(status=sol.status, feasibility=sol.feasibility, optimality=sol.optimality,
                     iterations=sol.iterations)
    design = DesignVector(tuple(parts["chords"]), tuple(parts["twists"]), max_cp(spec, 8.0)[1])
    return _finish("ccd", spec, traj, sol, profile, cfg, t0, design=design)


# -- comparison ------------------------------------------------------------------

def improvement_pct(energy_kj: float, baseline_kj: float) -> float:
    return 100.0 * (energy_kj - baseline_kj) / baseline_kj


def compare(entries) -> ComparisonReport:
    """Attach improvements vs the baseline entry (or the first entry)."""
    entries = list(entries)
    if len(entries) < 2:
        raise ValueError("compare needs at least two entries")
    ref = entries[0]
    for e in entries[1:]:
        if e.profile != ref.profile or e.cfg != ref.cfg:
            raise ValueError(f"entry {e.method!r} was run with a different profile or OCP configuration")
    order = {m: i for i, m in enumerate(METHODS)}
    entries = sorted(entries, key=lambda e: order.get(e.method, len(order)))
    base = next((e for e in entries if e.method == "baseline"), entries[0])
    out = []
    for e in entries:
        out.append(replace(e, improvement_pct=improvement_pct(e.energy, base.energy)))
    return ComparisonReport(entries=out, profile=ref.profile, cfg=ref.cfg)


def report_cp_curves(report: ComparisonReport, lambdas=None, base_spec: RotorSpec | None = None):
    """{method: [(λ, Cp), ...]} for every entry's geometry."""
    base_spec = _base(base_spec)
    lambdas = np.round(np.arange(2.0, 12.01, 0.25), 10) if lambdas is None else lambdas
    return {e.method: cp_curve(replace(base_spec, geometry=e.geometry), lambdas) for e in report.entries}
