"""Hermite-Simpson transcription of the rotor energy-capture optimal control problem.

Each segment [t_k, t_k+1] carries ω and u at its two endpoints and its
midpoint (shared endpoints between segments).  With f = (Q - u)/I the
constraints per segment are

    ω_m - ½(ω_k + ω_k+1) - (h/8)(f_k - f_k+1) = 0        (midpoint interpolant)
    ω_k+1 - ω_k - (h/6)(f_k + 4 f_m + f_k+1) = 0          (defect)

and the objective is the Simpson sum of P = Q ω.  Midpoint states are kept
as variables so the ω >= 0 path bound is a plain bound at every node.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import dual as D
from .bem import rotor_batch
from .dynamics import FlowProfile, Trajectory, cumulative_energy, flow_velocity
from .nlp import NlpProblem
from .rotor_model import CHORD_MAX, TWIST_MAX, TWIST_MIN, RotorSpec

CHORD_MIN = 1e-3  # m; strict positivity of the chord bound
OMEGA_REF_LAMBDA = 8.0
U_REF_UNBOUNDED = 5e4  # N m


class ConfigurationError(ValueError):
    pass


class LayoutError(ValueError):
    pass


@dataclass(frozen=True)
class OcpConfig:
    horizon: float = 150.0  # s
    num_segments: int = 30
    u_max: float | None = None  # N m; None = unbounded above
    omega_lb: float = 0.0  # rad/s
    omega0: float | None = None  # rad/s when fixed; None leaves ω(0) free

    def __post_init__(self):
        if not self.horizon > 0:
            raise ConfigurationError("horizon must be positive")
        if int(self.num_segments) != self.num_segments or self.num_segments < 1:
            raise ConfigurationError("num_segments must be an integer >= 1")
        if self.u_max is not None and not self.u_max >= 0:
            raise ConfigurationError("u_max must be non-negative (or None for unbounded)")
        if self.omega0 is not None and self.omega0 < self.omega_lb:
            raise ConfigurationError("fixed omega0 lies below omega_lb")

    @property
    def omega0_mode(self) -> str:
        return "free" if self.omega0 is None else "fixed"

    @property
    def bounded(self) -> bool:
        return self.u_max is not None


# -- generic Hermite-Simpson pieces (work on arrays and duals) ------------------

def node_times(horizon: float, num_segments: int) -> np.ndarray:
    """Endpoint and midpoint times, 2N + 1 of them."""
    return np.linspace(0.0, horizon, 2 * num_segments + 1)


def midpoint_residual(x_nodes, f_nodes, h):
    """x_m - [½(x_k + x_k+1) + (h/8)(f_k - f_k+1)] per segment."""
    xk, xm, xk1 = x_nodes[0:-1:2], x_nodes[1::2], x_nodes[2::2]
    fk, fk1 = f_nodes[0:-1:2], f_nodes[2::2]
    return xm - (0.5 * (xk + xk1) + (h / 8.0) * (fk - fk1))


def defects(x_nodes, f_nodes, h):
    """x_k+1 - x_k - (h/6)(f_k + 4 f_m + f_k+1) per segment."""
    xk, xk1 = x_nodes[0:-1:2], x_nodes[2::2]
    fk, fm, fk1 = f_nodes[0:-1:2], f_nodes[1::2], f_nodes[2::2]
    return xk1 - xk - (h / 6.0) * (fk + 4.0 * fm + fk1)


def simpson(g_nodes, h):
    """Composite Simpson sum over segments of length h."""
    return ((h / 6.0) * (g_nodes[0:-1:2] + 4.0 * g_nodes[1::2] + g_nodes[2::2])).sum()


def simpson_cumulative(g_nodes, h) -> np.ndarray:
    g = np.asarray(g_nodes, dtype=float)
    seg = (h / 6.0) * (g[0:-1:2] + 4.0 * g[1::2] + g[2::2])
    return np.concatenate([[0.0], np.cumsum(seg)])


# -- the transcribed rotor problem ------------------------------------------------

@dataclass
class TranscribedNlp:
    cfg: OcpConfig
    profile: FlowProfile
    spec_provider: Callable
    base_design: tuple  # (chords, twists) used when geometry is fixed
    include_geometry: bool
    times: np.ndarray
    v: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    scale: np.ndarray
    slices: dict
    omega_ref: float
    u_ref: float
    energy_ref: float  # J, Simpson sum of the available flow power
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self._cache = threading.local()

    @property
    def size(self) -> int:
        return self.lower.size

    @property
    def h(self) -> float:
        return self.cfg.horizon / self.cfg.num_segments

    @property
    def num_nodes(self) -> int:
        return self.times.size

    @property
    def num_defects(self) -> int:
        return self.cfg.num_segments

    @property
    def num_constraints(self) -> int:
        # defects, midpoint residuals and the control gauge row
        return 2 * self.cfg.num_segments + 1

    def _gauge(self, u, inertia):
        """Mean midpoint curvature of u, as a rate change over one segment (rad/s).

        Pins the one direction (endpoints +d, midpoints -d/2) along which
        neither the constraints nor the objective move; left free, the solver
        parks it anywhere, and a saw-tooth control is what the re-simulation
        then replays.
        """
        n = self.cfg.num_segments
        k = self.h / (inertia * n)
        val = k * np.sum(u[1::2] - 0.5 * (u[0:-1:2] + u[2::2]))
        row = np.zeros(self.size)
        du = np.zeros(self.num_nodes)
        du[1::2] = k
        du[0:-1:2] -= 0.5 * k
        du[2::2] -= 0.5 * k
        row[self.slices["u"]] = du
        return val, row

    @property
    def num_free(self) -> int:
        return len(self.base_design[0])

    def pack(self, omega, u, chords=None, twists=None) -> np.ndarray:
        x = np.empty(self.size)
        omega, u = np.asarray(omega, dtype=float), np.asarray(u, dtype=float)
        if omega.shape != (self.num_nodes,) or u.shape != (self.num_nodes,):
            raise LayoutError(f"omega and u need {self.num_nodes} node values")
        x[self.slices["omega"]] = omega
        x[self.slices["u"]] = u
        if self.include_geometry:
            chords = self.base_design[0] if chords is None else chords
            twists = self.base_design[1] if twists is None else twists
            x[self.slices["chord"]] = chords
            x[self.slices["twist"]] = twists
        return x

    def unpack(self, x) -> dict:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.size,):
            raise LayoutError(f"expected a vector of length {self.size}, got shape {x.shape}")
        out = {"omega": x[self.slices["omega"]].copy(), "u": x[self.slices["u"]].copy()}
        if self.include_geometry:
            out["chords"] = x[self.slices["chord"]].copy()
            out["twists"] = x[self.slices["twist"]].copy()
        else:
            out["chords"] = np.array(self.base_design[0], dtype=float)
            out["twists"] = np.array(self.base_design[1], dtype=float)
        return out

    def spec_at(self, x) -> RotorSpec:
        parts = self.unpack(x)
        return self.spec_provider(parts["chords"], parts["twists"])

    # evaluation ------------------------------------------------------------

    def _rhs(self, spec, omega, u, derivatives):
        """Fluid torque, spin-up rate and power at the nodes (duals if requested)."""
        if not derivatives:
            q = rotor_batch(spec, self.v, omega).torque
            return q, (q - u) / spec.inertia, q * omega
        n, nn = self.size, self.num_nodes
        rows = np.arange(nn)
        b = rotor_batch(spec, self.v, omega, derivatives=True)
        dq = np.zeros((nn, n))
        dq[rows, rows + self.slices["omega"].start] = b.dq_domega
        if self.include_geometry:
            free = spec.geometry.free_indices
            dq[:, self.slices["chord"]] = b.dq_dchord[:, free]
            dq[:, self.slices["twist"]] = b.dq_dtwist[:, free]
        Q = D.Dual(b.torque, dq)
        W = D.Dual(omega, np.zeros((nn, n)))
        W.der[rows, rows + self.slices["omega"].start] = 1.0
        U = D.Dual(u, np.zeros((nn, n)))
        U.der[rows, rows + self.slices["u"].start] = 1.0
        return Q, (Q - U) / spec.inertia, Q * W

    def evaluate(self, x, derivatives: bool = False) -> dict:
        """Objective (J), constraints (rad/s) and, optionally, their derivatives."""
        x = np.asarray(x, dtype=float)
        key = (x.tobytes(), derivatives)
        cache = getattr(self._cache, "entry", None)
        if cache is not None and (cache[0] == key or (not derivatives and cache[0] == (key[0], True))):
            return cache[1]
        parts = self.unpack(x)
        spec = self.spec_provider(parts["chords"], parts["twists"])
        omega, u = parts["omega"], parts["u"]
        q, f, p = self._rhs(spec, omega, u, derivatives)
        if derivatives:
            n, nn = self.size, self.num_nodes
            W = D.Dual(omega, np.zeros((nn, n)))
            W.der[np.arange(nn), np.arange(nn) + self.slices["omega"].start] = 1.0
        else:
            W = omega
        mid = midpoint_residual(W, f, self.h)
        dfc = defects(W, f, self.h)
        obj = simpson(p, self.h)
        gauge, grow = self._gauge(u, spec.inertia)
        if derivatives:
            out = dict(objective=float(obj.val), gradient=obj.der.copy(),
                       constraints=np.concatenate([dfc.val, mid.val, [gauge]]),
                       jacobian=np.concatenate([dfc.der, mid.der, grow[None, :]], axis=0), torque=q.val)
        else:
            out = dict(objective=float(obj), constraints=np.concatenate([dfc, mid, [gauge]]), torque=q)
        self._cache.entry = (key, out)
        return out

    def objective(self, x) -> float:
        return self.evaluate(x)["objective"]

    def constraints(self, x) -> np.ndarray:
        return self.evaluate(x)["constraints"]

    def gradient(self, x) -> np.ndarray:
        return self.evaluate(x, True)["gradient"]

    def jacobian(self, x) -> np.ndarray:
        return self.evaluate(x, True)["jacobian"]

    def as_problem(self) -> NlpProblem:
        """Scaled NLP: z = x / scale, objective / energy_ref, constraints / omega_ref."""
        s, fs, cs = self.scale, 1.0 / self.energy_ref, 1.0 / self.omega_ref
        return NlpProblem(
            dimension=self.size,
            objective=lambda z: self.objective(z * s) * fs,
            constraints=lambda z: self.constraints(z * s) * cs,
            gradient_fn=lambda z: self.gradient(z * s) * s * fs,
            jacobian_fn=lambda z: self.jacobian(z * s) * s[None, :] * cs,
            lower=self.lower / s,
            upper=self.upper / s,
            meta={"transcription": self},
        )

    def bound_violations(self, x, tol=1e-9) -> list[str]:
        x = np.asarray(x, dtype=float)
        out = []
        for name, sl in self.slices.items():
            lo, hi, xs = self.lower[sl], self.upper[sl], x[sl]
            for i in np.flatnonzero(xs < lo - tol * np.maximum(1.0, np.abs(lo))):
                out.append(f"{name}[{i}] = {xs[i]:.6g} below {lo[i]:.6g}")
            for i in np.flatnonzero(xs > hi + tol * np.maximum(1.0, np.abs(hi))):
                out.append(f"{name}[{i}] = {xs[i]:.6g} above {hi[i]:.6g}")
        return out


def transcribe(spec_provider, profile: FlowProfile, cfg: OcpConfig,
               include_geometry: bool = False, design=None) -> TranscribedNlp:
    """Build the Hermite-Simpson NLP.

    ``spec_provider`` maps (free chords, free twists) to a RotorSpec; a
    RotorSpec may be passed directly, in which case its own geometry is the
    fixed design (or the initial design when ``include_geometry``).
    """
    if isinstance(spec_provider, RotorSpec):
        base = spec_provider
        provider = base.with_design
        if design is None:
            design = (base.geometry.free_chords, base.geometry.free_twists)
    else:
        provider = spec_provider
        if design is None:
            raise ConfigurationError("design (chords, twists) is required with a spec callable")
    chords = np.asarray(design[0], dtype=float)
    twists = np.asarray(design[1], dtype=float)
    if chords.shape != twists.shape:
        raise ConfigurationError("chords and twists must have equal length")
    if profile.duration < cfg.horizon:
        raise ConfigurationError(
            f"flow profile duration ({profile.duration} s) is shorter than the horizon ({cfg.horizon} s)")

    spec0 = provider(chords, twists)
    times = node_times(cfg.horizon, cfg.num_segments)
    v = np.asarray(flow_velocity(profile, times), dtype=float)
    nn = times.size
    nf = chords.size if include_geometry else 0
    slices = {"omega": slice(0, nn), "u": slice(nn, 2 * nn)}
    if include_geometry:
        slices["chord"] = slice(2 * nn, 2 * nn + nf)
        slices["twist"] = slice(2 * nn + nf, 2 * nn + 2 * nf)
    size = 2 * nn + 2 * nf
    lower = np.empty(size)
    upper = np.empty(size)
    lower[slices["omega"]] = cfg.omega_lb
    upper[slices["omega"]] = np.inf
    if cfg.omega0 is not None:
        lower[0] = upper[0] = cfg.omega0
    lower[slices["u"]] = 0.0
    upper[slices["u"]] = np.inf if cfg.u_max is None else cfg.u_max
    omega_ref = OMEGA_REF_LAMBDA * spec0.rated_speed / spec0.tip_radius
    u_ref = U_REF_UNBOUNDED if not cfg.u_max else cfg.u_max
    scale = np.empty(size)
    scale[slices["omega"]] = omega_ref
    scale[slices["u"]] = u_ref
    if include_geometry:
        lower[slices["chord"]], upper[slices["chord"]] = CHORD_MIN, CHORD_MAX
        lower[slices["twist"]], upper[slices["twist"]] = TWIST_MIN, TWIST_MAX
        scale[slices["chord"]] = 1.0
        scale[slices["twist"]] = TWIST_MAX
    h = cfg.horizon / cfg.num_segments
    energy_ref = float(simpson(0.5 * spec0.fluid_density * spec0.disk_area * v**3, h))
    return TranscribedNlp(cfg=cfg, profile=profile, spec_provider=provider,
                          base_design=(chords, twists), include_geometry=include_geometry,
                          times=times, v=v, lower=lower, upper=upper, scale=scale, slices=slices,
                          omega_ref=omega_ref, u_ref=u_ref, energy_ref=energy_ref)


def canonical_controls(nlp: TranscribedNlp, x) -> np.ndarray:
    """Remove the free control pattern of the separated transcription.

    Shifting every endpoint control by +d and every midpoint control by -d/2
    leaves all defects, midpoint residuals and the objective unchanged.  This
    picks the d that makes the control closest to piecewise linear, within
    the control bounds, which also zeroes the gauge constraint.
    """
    x = np.array(x, dtype=float)
    sl = nlp.slices["u"]
    u, lo, hi = x[sl], nlp.lower[sl], nlp.upper[sl]
    curv = u[1::2] - 0.5 * (u[0:-1:2] + u[2::2])
    d = curv.mean() / 1.5
    ends, mids = slice(0, None, 2), slice(1, None, 2)
    d_lo = max(np.max(lo[ends] - u[ends]), np.max(-2.0 * (hi[mids] - u[mids])))
    d_hi = min(np.min(hi[ends] - u[ends]), np.min(2.0 * (u[mids] - lo[mids])))
    if d_lo > d_hi:  # already pinned by the bounds
        return x
    d = min(max(d, d_lo), d_hi)
    u = u.copy()
    u[ends] += d
    u[mids] -= 0.5 * d
    x[sl] = np.clip(u, lo, hi)
    return x


def extract_trajectory(nlp: TranscribedNlp, solution, profile: FlowProfile | None = None,
                       spec: RotorSpec | None = None) -> Trajectory:
    """Node-grid trajectory with Q and P recomputed from the BEM model."""
    parts = nlp.unpack(solution)
    profile = nlp.profile if profile is None else profile
    spec = nlp.spec_provider(parts["chords"], parts["twists"]) if spec is None else spec
    v = np.asarray(flow_velocity(profile, nlp.times), dtype=float)
    omega = parts["omega"]
    violations = nlp.bound_violations(solution)
    q = rotor_batch(spec, v, np.maximum(omega, 0.0)).torque
    power = q * omega
    meta = {
        "tip_radius": spec.tip_radius,
        "bound_violations": violations,
        "objective_kj": float(simpson(power, nlp.h)) / 1000.0,
        "num_segments": nlp.cfg.num_segments,
    }
    return Trajectory(nlp.times.copy(), v, omega, parts["u"], q, power,
                      cumulative_energy(nlp.times, power), meta=meta)


def pack_trajectory(nlp: TranscribedNlp, traj: Trajectory, chords=None, twists=None) -> np.ndarray:
    if traj.times.shape != nlp.times.shape or not np.allclose(traj.times, nlp.times, rtol=0, atol=1e-9):
        raise LayoutError("trajectory nodes do not match the transcription grid")
    return nlp.pack(traj.omega, traj.u, chords, twists)
