"""Rotor spin dynamics, flow profiles, energy bookkeeping and an RK4 re-simulator."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .bem import BemError, rotor_batch
from .rotor_model import RotorSpec

log = logging.getLogger(__name__)

TRAJECTORY_HEADER = ["t_s", "v_mps", "omega_radps", "u_Nm", "Q_Nm", "P_W", "E_kJ"]


class FlowDomainError(ValueError):
    """Flow velocity requested outside the profile's time horizon."""


class SimulationError(RuntimeError):
    def __init__(self, message, time):
        super().__init__(message)
        self.time = time


@dataclass(frozen=True)
class FlowProfile:
    """Inflow speed v(t) over ``[0, duration]``.

    kinds and their ``params``:
      sinusoidal: mean, amplitude, angular_rate  ->  mean + amplitude sin(rate t)
      ramp: offset, gain, rate, exponent         ->  offset - gain (rate t)^exponent
      table: times, speeds                        ->  linear interpolation
    """

    kind: str
    params: dict
    duration: float

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("flow profile duration must be positive")
        required = {
            "sinusoidal": ("mean", "amplitude", "angular_rate"),
            "ramp": ("offset", "gain", "rate", "exponent"),
            "table": ("times", "speeds"),
        }
        if self.kind not in required:
            raise ValueError(f"unknown flow profile kind {self.kind!r}")
        missing = [k for k in required[self.kind] if k not in self.params]
        if missing:
            raise ValueError(f"{self.kind} profile is missing {missing}")
        if self.kind == "table":
            t = np.asarray(self.params["times"], dtype=float)
            v = np.asarray(self.params["speeds"], dtype=float)
            if t.shape != v.shape or t.size < 2 or np.any(np.diff(t) <= 0):
                raise ValueError("table profile needs >= 2 samples with increasing times")
            if t[0] > 0 or t[-1] < self.duration:
                raise ValueError("table profile samples must cover [0, duration]")
        grid = np.linspace(0.0, self.duration, 2001)
        if np.any(self._eval(grid) <= 0):
            raise ValueError("flow speed must stay positive over the horizon")

    @classmethod
    def sinusoidal(cls, mean=1.4, amplitude=0.2, angular_rate=0.1, duration=150.0):
        return cls("sinusoidal", dict(mean=mean, amplitude=amplitude, angular_rate=angular_rate), duration)

    @classmethod
    def ramp(cls, offset=1.55, gain=0.2, rate=0.1, exponent=0.7, duration=150.0):
        return cls("ramp", dict(offset=offset, gain=gain, rate=rate, exponent=exponent), duration)

    @classmethod
    def table(cls, times, speeds, duration=None):
        times = [float(t) for t in times]
        return cls("table", dict(times=times, speeds=[float(v) for v in speeds]),
                   times[-1] if duration is None else duration)

    @classmethod
    def constant(cls, speed, duration):
        return cls.table([0.0, duration], [speed, speed])

    def _eval(self, t):
        p = self.params
        if self.kind == "sinusoidal":
            return p["mean"] + p["amplitude"] * np.sin(p["angular_rate"] * t)
        if self.kind == "ramp":
            return p["offset"] - p["gain"] * (p["rate"] * t) ** p["exponent"]
        return np.interp(t, p["times"], p["speeds"])

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params, "duration": self.duration}


def flow_velocity(profile: FlowProfile, t):
    """v(t) in m/s; scalar in, scalar out."""
    arr = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > profile.duration):
        raise FlowDomainError(f"t outside [0, {profile.duration}] s")
    out = profile._eval(arr)
    return float(out) if out.ndim == 0 else out


def rotor_accel(spec: RotorSpec, q, u):
    """Spin-up rate (Q - u)/I in rad/s^2."""
    return (q - u) / spec.inertia


@dataclass
class Trajectory:
    times: np.ndarray  # s
    v: np.ndarray  # m/s
    omega: np.ndarray  # rad/s
    u: np.ndarray  # N m
    q: np.ndarray  # N m
    power: np.ndarray  # W
    energy: np.ndarray  # cumulative J
    events: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        arrays = [np.asarray(getattr(self, k), dtype=float) for k in ("times", "v", "omega", "u", "q", "power", "energy")]
        if len({a.shape for a in arrays}) != 1 or arrays[0].ndim != 1:
            raise ValueError("trajectory arrays must be 1-D and of equal length")
        self.times, self.v, self.omega, self.u, self.q, self.power, self.energy = arrays

    @property
    def energy_kj(self) -> float:
        return float(self.energy[-1]) / 1000.0

    @property
    def tip_speed_ratio(self):
        if "tip_radius" not in self.meta:
            raise KeyError("trajectory has no tip_radius in meta")
        return self.omega * self.meta["tip_radius"] / self.v

    def saturation_fraction(self, u_max, rel_tol=1e-6) -> float:
        """Fraction of the horizon spent with u at its upper bound."""
        if u_max is None or not np.isfinite(u_max):
            return 0.0
        sat = (self.u >= u_max * (1 - rel_tol)).astype(float)
        dur = self.times[-1] - self.times[0]
        return float(np.trapezoid(sat, self.times) / dur) if dur > 0 else float(sat[0])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRAJECTORY_HEADER)
            for row in zip(self.times, self.v, self.omega, self.u, self.q, self.power, self.energy / 1000.0):
                w.writerow([f"{x:.10g}" for x in row])


def cumulative_energy(times, power) -> np.ndarray:
    """Trapezoidal running integral of power, J."""
    times = np.asarray(times, dtype=float)
    power = np.asarray(power, dtype=float)
    inc = 0.5 * (power[1:] + power[:-1]) * np.diff(times)
    return np.concatenate([[0.0], np.cumsum(inc)])


def energy(traj: Trajectory) -> float:
    """Trapezoidal integral of the stored power, kJ."""
    return float(cumulative_energy(traj.times, traj.power)[-1]) / 1000.0


def _torque(spec, v, omega, t):
    try:
        return rotor_batch(spec, [v], [max(omega, 0.0)]).torque[0]
    except BemError as exc:
        raise SimulationError(f"BEM failed at t = {t:.6g} s: {exc}", t) from exc


def simulate(spec: RotorSpec, profile: FlowProfile, control: Callable[[float], float],
             omega0: float, dt: float, t_end: float | None = None) -> Trajectory:
    """Fixed-step RK4 integration of I dω/dt = Q(ω, v(t)) - u(t).

    ω is floored at zero after every step; each clamp is recorded in
    ``events``.  Energy is the trapezoidal running integral of Q ω.

    The spin mode is stiff (I / |dQ/dω| is about 0.1 s near the design
    point for the scaled rotor), so RK4 needs dt below roughly 0.25 s.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if omega0 < 0:
        raise ValueError("omega0 must be non-negative")
    t_end = profile.duration if t_end is None else float(t_end)
    n = int(np.ceil(t_end / dt - 1e-9))
    times = np.linspace(0.0, t_end, n + 1)
    omega = np.empty(n + 1)
    omega[0] = omega0
    events = []

    def f(t, w):
        v = flow_velocity(profile, min(t, profile.duration))
        return rotor_accel(spec, _torque(spec, v, w, t), control(t))

    for i in range(n):
        t, h, w = times[i], times[i + 1] - times[i], omega[i]
        k1 = f(t, w)
        k2 = f(t + h / 2, max(w + h / 2 * k1, 0.0))
        k3 = f(t + h / 2, max(w + h / 2 * k2, 0.0))
        k4 = f(t + h, max(w + h * k3, 0.0))
        w_next = w + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if w_next < 0:
            events.append((float(times[i + 1]), "omega clamped at 0"))
            w_next = 0.0
        omega[i + 1] = w_next

    v = np.asarray(flow_velocity(profile, np.minimum(times, profile.duration)), dtype=float)
    try:
        q = rotor_batch(spec, v, omega).torque
    except BemError as exc:
        raise SimulationError(f"BEM failed on the output grid: {exc}", float("nan")) from exc
    u = np.array([control(t) for t in times], dtype=float)
    power = q * omega
    if events:
        log.info("simulate: omega clamped %d time(s)", len(events))
    return Trajectory(times, v, omega, u, q, power, cumulative_energy(times, power), events,
                      meta={"tip_radius": spec.tip_radius, "dt": dt})


def piecewise_quadratic(times: Sequence[float], values: Sequence[float]) -> Callable[[float], float]:
    """Continuous control from endpoint/midpoint node values (odd count).

    Each segment [t_2k, t_2k+2] carries the quadratic through its three nodes.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.size != y.size or t.size % 2 == 0 or t.size < 3:
        raise ValueError("need an odd number (>= 3) of node times and values")
    ends = t[::2]

    def u(s):
        k = int(np.clip(np.searchsorted(ends, s, side="right") - 1, 0, ends.size - 2))
        t0, tm, t1 = t[2 * k], t[2 * k + 1], t[2 * k + 2]
        y0, ym, y1 = y[2 * k], y[2 * k + 1], y[2 * k + 2]
        l0 = (s - tm) * (s - t1) / ((t0 - tm) * (t0 - t1))
        lm = (s - t0) * (s - t1) / ((tm - t0) * (tm - t1))
        l1 = (s - t0) * (s - tm) / ((t1 - t0) * (t1 - tm))
        return float(y0 * l0 + ym * lm + y1 * l1)

    return u
