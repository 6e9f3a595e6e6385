"""Blade-element residual in the inflow angle and the resulting section loads.

Single-unknown formulation with Prandtl tip/hub losses and the Buhl
high-induction correction.  Every function accepts floats, arrays or
:class:`~hkt_ccd.dual.Dual` values.
"""

from __future__ import annotations

import numpy as np

from .. import dual as D

PHI_EPS = 1e-6
POLAR_STRIDE = 400.0  # deg between stacked polars on the shared lookup axis
_DEG = 180.0 / np.pi


class PolarStack:
    """All polars of a rotor laid end to end on one abscissa.

    Polar ``p`` occupies ``[-180, 180] + p * POLAR_STRIDE`` so a single
    Hermite lookup serves sections that use different airfoils.
    """

    def __init__(self, polars):
        self.names = [p.name for p in polars]
        self.alpha = np.concatenate([p.alpha + i * POLAR_STRIDE for i, p in enumerate(polars)])
        self.cl = np.concatenate([p.cl for p in polars])
        self.cd = np.concatenate([p.cd for p in polars])
        self.dcl = np.concatenate([p.dcl for p in polars])
        self.dcd = np.concatenate([p.dcd for p in polars])
        # keep the originals alive; cache keys use their ids
        self._polars = tuple(polars)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def lookup(self, alpha_deg, offset):
        a = alpha_deg
        av = D.value(a)
        if np.any((av < -180.0) | (av > 180.0)):
            a = a - 360.0 * np.floor((av + 180.0) / 360.0)
        x = a + offset
        return (D.hermite(x, self.alpha, self.cl, self.dcl),
                D.hermite(x, self.alpha, self.cd, self.dcd))


def induction(phi, sigma_p, theta, ftip, fhub, offset, stack):
    """Induction state at inflow angle ``phi`` (rad).

    ``theta`` is the section twist in radians, ``ftip``/``fhub`` the
    Prandtl exponents B/2 (R - r)/r and B/2 (r - Rh)/Rh.
    Returns (a, ap, k, kp, cn, ct).
    """
    sphi = D.sin(phi)
    cphi = D.cos(phi)
    cl, cd = stack.lookup((phi - theta) * _DEG, offset)
    cn = cl * cphi + cd * sphi
    ct = cl * sphi - cd * cphi

    with np.errstate(all="ignore"):
        abs_s = D.absolute(sphi)
        f_tip = (2.0 / np.pi) * D.arccos(D.exp(-(ftip / abs_s)))
        f_hub = (2.0 / np.pi) * D.arccos(D.exp(-(fhub / abs_s)))
        F = f_tip * f_hub

        k = sigma_p * cn / (4.0 * F * sphi * sphi)
        kp = sigma_p * ct / (4.0 * F * sphi * cphi)

        a_mom = k / (1.0 + k)
        g1 = 2.0 * F * k - (10.0 / 9.0 - F)
        g2 = 2.0 * F * k - F * (4.0 / 3.0 - F)
        g3 = 2.0 * F * k - (25.0 / 9.0 - 2.0 * F)
        g2 = D.where(D.value(g2) > 0, g2, 1e-30)
        a_buhl = D.where(np.abs(D.value(g3)) < 1e-6,
                         1.0 - 1.0 / (2.0 * D.sqrt(g2)),
                         (g1 - D.sqrt(g2)) / g3)
        a_pos = D.where(D.value(k) <= 2.0 / 3.0, a_mom, a_buhl)
        a_neg = D.where(D.value(k) > 1.0, k / (k - 1.0), 0.0 * k)
        a = D.where(D.value(phi) > 0, a_pos, a_neg)
        ap = kp / (1.0 - kp)
    return a, ap, k, kp, cn, ct


def residual(phi, x, sigma_p, theta, ftip, fhub, offset, stack, ind=None):
    """BEM residual; ``x`` is the local speed ratio omega*r/v (> 0).

    ``ind`` may carry a precomputed :func:`induction` result at ``phi``.
    """
    if ind is None:
        ind = induction(phi, sigma_p, theta, ftip, fhub, offset, stack)
    a, ap, k, kp, cn, ct = ind
    sphi = D.sin(phi)
    cphi = D.cos(phi)
    with np.errstate(all="ignore"):
        r_pos = sphi / (1.0 - a) - cphi / x * (1.0 - kp)
        r_neg = sphi * (1.0 - k) - cphi / x * (1.0 - kp)
    return D.where(D.value(phi) > 0, r_pos, r_neg)


def loads(phi, v, vy, chord, r, dr, rho, sigma_p, theta, ftip, fhub, offset, stack, parked=None, ind=None):
    """Per-blade section thrust and torque (N, N m) and induction factors.

    ``vy`` is the in-plane speed omega*r.  Elements flagged ``parked``
    (zero rotation) carry no induction.
    """
    if ind is None:
        ind = induction(phi, sigma_p, theta, ftip, fhub, offset, stack)
    a, ap, k, kp, cn, ct = ind
    if parked is not None and np.any(parked):
        a = D.where(parked, 0.0 * a, a)
        ap = D.where(parked, 0.0 * ap, ap)
    w2 = (v * (1.0 - a)) ** 2 + (vy * (1.0 + ap)) ** 2
    q = 0.5 * rho * w2 * chord
    dT = q * cn * dr
    dQ = q * ct * r * dr
    return a, ap, dT, dQ


def bracket_candidates():
    """Search intervals in the order they are tried."""
    return (
        (PHI_EPS, np.pi / 2),
        (-np.pi / 4, -PHI_EPS),
        (np.pi / 2, np.pi - PHI_EPS),
    )
