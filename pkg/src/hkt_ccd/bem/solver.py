"""Rotor-level BEM: torque, thrust, power and Cp for a given geometry and operating point."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .. import dual as D
from ..rotor_model import BladeSection, RotorSpec
from . import _backend, _model

log = logging.getLogger(__name__)

BETZ_LIMIT = 16.0 / 27.0
DEFAULT_V_REF = 1.4  # m/s
LAMBDA_SEARCH = (1.0, 15.0)

_STACKS: dict = {}


class BemError(RuntimeError):
    """No converged inflow angle; carries the offending operating points."""

    def __init__(self, message, points=()):
        super().__init__(message)
        self.points = list(points)


@dataclass(frozen=True)
class SectionLoads:
    a: float
    a_t: float
    phi: float  # rad
    dT: float  # N, per blade
    dQ: float  # N m, per blade


@dataclass(frozen=True)
class RotorLoads:
    torque: float  # N m
    thrust: float  # N
    power: float  # W
    cp: float
    sections: tuple[SectionLoads, ...]


@dataclass
class BatchLoads:
    """Rotor torque at many operating points, with optional partials.

    Derivative arrays are ``None`` unless requested; ``dq_dchord`` and
    ``dq_dtwist`` have shape (points, sections), twist in degrees.
    """

    torque: np.ndarray
    thrust: np.ndarray
    phi: np.ndarray
    a: np.ndarray
    a_t: np.ndarray
    dT: np.ndarray
    dQ: np.ndarray
    dq_domega: np.ndarray | None = None
    dq_dv: np.ndarray | None = None
    dq_dchord: np.ndarray | None = None
    dq_dtwist: np.ndarray | None = None


def polar_stack(spec: RotorSpec) -> _model.PolarStack:
    names = sorted(spec.polars)
    key = tuple((n, id(spec.polars[n])) for n in names)
    stack = _STACKS.get(key)
    if stack is None:
        if len(_STACKS) > 64:
            _STACKS.clear()
        stack = _STACKS[key] = _model.PolarStack([spec.polars[n] for n in names])
    return stack


def _section_arrays(spec: RotorSpec, sections):
    g = spec.geometry
    B = spec.num_blades
    stack = polar_stack(spec)
    r = np.array([s.r_mid for s in sections])
    if sections is g.sections or tuple(sections) == g.sections:
        dr = spec.integration_weights()
    else:
        # loose sections (single-section solves) keep their own span
        weights = dict(zip(g.sections, spec.integration_weights()))
        dr = np.array([weights.get(s, s.dr) for s in sections])
    return dict(
        r=r,
        dr=dr,
        chord=np.array([s.chord for s in sections]),
        twist=np.array([s.twist for s in sections]),
        offset=np.array([stack.index(s.polar_id) * _model.POLAR_STRIDE for s in sections]),
        ftip=0.5 * B * (g.tip_radius - r) / r,
        fhub=0.5 * B * (r - g.hub_radius) / g.hub_radius,
        stack=stack,
    )


def _solve(spec: RotorSpec, sections, v, omega, derivatives=False):
    """Element loads on the (points x sections) grid."""
    sa = _section_arrays(spec, sections)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    v, omega = np.broadcast_arrays(v, omega)
    if np.any(v <= 0) or np.any(omega < 0) or not np.all(np.isfinite(v) & np.isfinite(omega)):
        raise ValueError("BEM needs v > 0 and omega >= 0")
    B = spec.num_blades
    r = sa["r"][None, :]
    x = omega[:, None] * r / v[:, None]
    sigma_p = B * sa["chord"][None, :] / (2.0 * np.pi * r)
    theta = np.radians(sa["twist"])[None, :]
    ftip, fhub, offset = sa["ftip"][None, :], sa["fhub"][None, :], sa["offset"][None, :]
    stack = sa["stack"]

    phi, status = _backend.solve_phi(x, sigma_p, theta, ftip, fhub, offset, stack)
    if np.any(status < 0):
        bad = np.argwhere(status < 0)
        points = [(int(j), float(v[i]), float(omega[i])) for i, j in bad]
        raise BemError(
            f"BEM root bracketing failed at {len(points)} element(s); first (section, v, omega) = {points[0]}",
            points,
        )
    parked = status == 3
    shape = phi.shape
    rho = spec.fluid_density
    chord = np.broadcast_to(sa["chord"][None, :], shape)
    dr = sa["dr"][None, :]

    if not derivatives:
        a, ap, dT, dQ = _model.loads(phi, v[:, None], omega[:, None] * r, chord, r, dr, rho,
                                     sigma_p, theta, ftip, fhub, offset, stack, parked)
        return dict(phi=phi, a=a, ap=ap, dT=dT, dQ=dQ, status=status)

    # seeds: 0 phi, 1 chord, 2 twist (deg), 3 omega, 4 v
    n = 5
    P = D.Dual.seed(phi, 0, n)
    C = D.Dual.seed(chord, 1, n)
    TW = D.Dual.seed(np.broadcast_to(sa["twist"][None, :], shape), 2, n)
    W = D.Dual.seed(np.broadcast_to(omega[:, None], shape), 3, n)
    V = D.Dual.seed(np.broadcast_to(v[:, None], shape), 4, n)
    sig = C * (B / (2.0 * np.pi * r))
    th = TW * (np.pi / 180.0)
    X = W * r / V

    ind = _model.induction(P, sig, th, ftip, fhub, offset, stack)
    R = _model.residual(P, X, sig, th, ftip, fhub, offset, stack, ind)
    a, ap, dT, dQ = _model.loads(P, V, W * r, C, r, dr, rho, sig, th, ftip, fhub, offset, stack, parked, ind)
    # implicit function theorem at R(phi; p) = 0
    with np.errstate(all="ignore"):
        dphi = -R.der[..., 1:] / R.der[..., :1]
    dphi = np.where(parked[..., None], 0.0, dphi)
    dQ_tot = dQ.der[..., 1:] + dQ.der[..., :1] * dphi
    return dict(phi=phi, a=a.val, ap=ap.val, dT=dT.val, dQ=dQ.val, status=status,
                ddQ=dQ_tot, dphi=dphi)


def rotor_batch(spec: RotorSpec, v, omega, derivatives=False) -> BatchLoads:
    """Rotor torque at each (v, omega) pair; vectorized over points."""
    sections = spec.geometry.sections
    res = _solve(spec, sections, v, omega, derivatives)
    B = spec.num_blades
    out = BatchLoads(
        torque=B * res["dQ"].sum(axis=1),
        thrust=B * res["dT"].sum(axis=1),
        phi=res["phi"], a=res["a"], a_t=res["ap"], dT=res["dT"], dQ=res["dQ"],
    )
    if derivatives:
        dd = res["ddQ"]
        out.dq_dchord = B * dd[..., 0]
        out.dq_dtwist = B * dd[..., 1]
        out.dq_domega = B * dd[..., 2].sum(axis=1)
        out.dq_dv = B * dd[..., 3].sum(axis=1)
    return out


def solve_section(section: BladeSection, spec: RotorSpec, v: float, omega: float) -> SectionLoads:
    res = _solve(spec, [section], v, omega)
    return SectionLoads(a=float(res["a"][0, 0]), a_t=float(res["ap"][0, 0]),
                        phi=float(res["phi"][0, 0]), dT=float(res["dT"][0, 0]),
                        dQ=float(res["dQ"][0, 0]))


def section_residual(section: BladeSection, spec: RotorSpec, v: float, omega: float, phi):
    """BEM residual of one section at inflow angle(s) ``phi``."""
    sa = _section_arrays(spec, [section])
    r = sa["r"][0]
    return _model.residual(
        np.asarray(phi, dtype=float), omega * r / v,
        spec.num_blades * section.chord / (2 * np.pi * r), np.radians(section.twist),
        sa["ftip"][0], sa["fhub"][0], sa["offset"][0], sa["stack"],
    )


def rotor_torque(spec: RotorSpec, v: float, omega: float) -> RotorLoads:
    res = _solve(spec, spec.geometry.sections, v, omega)
    B = spec.num_blades
    torque = float(B * res["dQ"][0].sum())
    thrust = float(B * res["dT"][0].sum())
    power = torque * float(omega)
    cp = power / (0.5 * spec.fluid_density * spec.disk_area * float(v) ** 3)
    sections = tuple(
        SectionLoads(a=float(res["a"][0, j]), a_t=float(res["ap"][0, j]), phi=float(res["phi"][0, j]),
                     dT=float(res["dT"][0, j]), dQ=float(res["dQ"][0, j]))
        for j in range(len(spec.geometry.sections))
    )
    return RotorLoads(torque=torque, thrust=thrust, power=power, cp=cp, sections=sections)


def cp_of_lambda(spec: RotorSpec, lambdas, v_ref: float = DEFAULT_V_REF) -> np.ndarray:
    lam = np.atleast_1d(np.asarray(lambdas, dtype=float))
    omega = lam * v_ref / spec.tip_radius
    q = rotor_batch(spec, np.full_like(lam, v_ref), omega).torque
    return q * omega / (0.5 * spec.fluid_density * spec.disk_area * v_ref**3)


def cp_curve(spec: RotorSpec, lambdas, v_ref: float = DEFAULT_V_REF) -> list[tuple[float, float]]:
    """(lambda, Cp) pairs; failed points are collected and raised together."""
    lam = [float(x) for x in lambdas]
    if any(x <= 0 for x in lam):
        raise ValueError("tip-speed ratios must be positive")
    out, failed = [], []
    for x in lam:
        try:
            out.append((x, float(cp_of_lambda(spec, [x], v_ref)[0])))
        except BemError:
            failed.append(x)
            out.append((x, float("nan")))
    if failed:
        err = BemError(f"Cp evaluation failed at lambda = {failed}", failed)
        err.partial = out
        raise err
    return out


def max_cp(spec: RotorSpec, lambda_init: float, v_ref: float = DEFAULT_V_REF,
           step: float = 0.25, xtol: float = 1e-4) -> tuple[float, float]:
    """Local maximum of Cp(lambda) reached uphill from ``lambda_init``."""
    if lambda_init <= 0:
        raise ValueError("lambda_init must be positive")
    lo, hi = LAMBDA_SEARCH
    f = lambda lam: float(cp_of_lambda(spec, [lam], v_ref)[0])
    b = min(max(lambda_init, lo + step), hi - step)
    fb = f(b)
    fl, fr = f(b - step), f(b + step)
    direction = 1.0 if fr > fb else (-1.0 if fl > fb else 0.0)
    if direction == 0.0:
        a, c = b - step, b + step
    else:
        a = b - direction * step
        fa = fl if direction > 0 else fr
        c, fc = b + direction * step, (fr if direction > 0 else fl)
        while fc > fb:
            a, fa, b, fb = b, fb, c, fc
            c = b + direction * step
            if not lo <= c <= hi:
                raise ValueError(f"no Cp maximum bracketed in lambda in [{lo}, {hi}]")
            fc = f(c)
        a, c = min(a, c), max(a, c)
    res = minimize_scalar(lambda lam: -f(lam), bracket=(a, b, c), method="golden",
                          tol=xtol / max(b, 1.0))
    return -float(res.fun), float(res.x)
