"""Pure numpy inflow-angle solver (vectorized bracketed Anderson-Bjorck)."""

from __future__ import annotations

import numpy as np

from ._model import bracket_candidates, residual

FTOL = 1e-12
MAXITER = 200


def solve_phi(x, sigma_p, theta, ftip, fhub, offset, stack):
    """Root of the BEM residual for every element.

    Returns ``(phi, status)``; status is the bracket index used (0, 1, 2),
    3 for zero rotation (phi = pi/2 by definition) and -1 when no bracket
    or no converged root was found.  Converged means |R| <= 1e-10, or a
    bracket narrowed to rounding width where the residual is too steep for
    that absolute tolerance (lambda -> 0).
    """
    x, sigma_p, theta, ftip, fhub, offset = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (x, sigma_p, theta, ftip, fhub, offset)))
    shape = x.shape
    x, sigma_p, theta, ftip, fhub, offset = (v.ravel() for v in (x, sigma_p, theta, ftip, fhub, offset))
    n = x.size
    phi = np.full(n, np.pi / 2)
    status = np.full(n, -1, dtype=np.int64)
    still = x > 0
    status[~still] = 3

    lo = np.zeros(n)
    hi = np.zeros(n)
    flo = np.zeros(n)
    fhi = np.zeros(n)

    def R(p, idx):
        return residual(p, x[idx], sigma_p[idx], theta[idx], ftip[idx], fhub[idx], offset[idx], stack)

    for b, (a0, b0) in enumerate(bracket_candidates()):
        idx = np.flatnonzero(still)
        if idx.size == 0:
            break
        fa = R(np.full(idx.size, a0), idx)
        fb = R(np.full(idx.size, b0), idx)
        ok = np.isfinite(fa) & np.isfinite(fb) & (fa * fb <= 0)
        sel = idx[ok]
        lo[sel], hi[sel] = a0, b0
        flo[sel], fhi[sel] = fa[ok], fb[ok]
        status[sel] = b
        still[sel] = False

    active = np.flatnonzero((status >= 0) & (status < 3))
    a, b, fa, fb = lo[active], hi[active], flo[active], fhi[active]
    # exact hits on an endpoint
    best = np.where(np.abs(fa) <= np.abs(fb), a, b)
    fbest = np.minimum(np.abs(fa), np.abs(fb))
    side = np.zeros(active.size, dtype=np.int64)  # last retained endpoint, for AB scaling
    def open_bracket():
        return np.abs(b - a) > 4e-16 * np.maximum(1.0, np.abs(b))

    for _ in range(MAXITER):
        todo = (fbest > FTOL) & open_bracket()
        if not todo.any():
            break
        t = np.flatnonzero(todo)
        denom = fb[t] - fa[t]
        with np.errstate(all="ignore"):
            c = b[t] - fb[t] * (b[t] - a[t]) / denom
        mid = 0.5 * (a[t] + b[t])
        bad = ~np.isfinite(c) | (c <= np.minimum(a[t], b[t])) | (c >= np.maximum(a[t], b[t]))
        c = np.where(bad, mid, c)
        fc = R(c, active[t])
        better = np.abs(fc) < fbest[t]
        best[t[better]] = c[better]
        fbest[t[better]] = np.abs(fc[better])

        same = np.sign(fc) == np.sign(fb[t])
        # root in [a, c]: replace b, scale fa (Anderson-Bjorck) if b retained twice
        ti = t[same]
        m = 1.0 - fc[same] / fb[ti]
        m = np.where(m > 0, m, 0.5)
        scale = np.where(side[ti] == -1, m, 1.0)
        fa[ti] *= scale
        b[ti], fb[ti] = c[same], fc[same]
        side[ti] = -1
        # root in [c, b]: replace a
        tj = t[~same]
        m = 1.0 - fc[~same] / fa[tj]
        m = np.where(m > 0, m, 0.5)
        scale = np.where(side[tj] == 1, m, 1.0)
        fb[tj] *= scale
        a[tj], fa[tj] = c[~same], fc[~same]
        side[tj] = 1

    phi[active] = best
    # a bracket collapsed to rounding width counts as converged
    failed = active[(fbest > 1e-10) & open_bracket()]
    status[failed] = -1
    return phi.reshape(shape), status.reshape(shape)
