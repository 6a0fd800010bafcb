"""Compiled kernels for the angular profile ODE.

A rotationally invariant operator is evaluated on a "block jet": in the local
orthonormal frame (e_r, e_theta, azimuthal directions) the Hessian of an
axisymmetric function is a 2x2 block plus one repeated azimuthal entry, the
gradient lies in the (e_r, e_theta) plane and the point is ``r e_r``.
Dual and inverted wrappers map block jets to block jets, so a whole wrapper
chain is encoded as an integer array of transform codes over a base kind.
"""

import math

import numpy as np
from numba import njit

KIND_LAPLACIAN = 0
KIND_PUCCI_PLUS = 1
KIND_PUCCI_MINUS = 2
KIND_EXTREMAL_PLUS = 3
KIND_EXTREMAL_MINUS = 4
KIND_ISAACS = 5

CODE_DUAL = 1
CODE_INVERT = 2

STATUS_OK = 0
STATUS_BRACKET = 1


@njit(cache=True)
def _pp(e, lam, Lam):
    return -lam * e if e > 0.0 else -Lam * e


@njit(cache=True)
def _pm(e, lam, Lam):
    return -Lam * e if e > 0.0 else -lam * e


@njit(cache=True)
def base_eval(kind, lam, Lam, mu, a, b, n, mrr, mrt, mtt, maz, drift):
    naz = n - 2
    if kind == KIND_LAPLACIAN:
        return -(mrr + mtt + naz * maz)
    if kind == KIND_ISAACS:
        tr = mrr + mtt + naz * maz
        best = np.inf
        for i in range(a.shape[0]):
            inner = -np.inf
            for j in range(a.shape[1]):
                v = -a[i, j] * tr + b[i, j] * drift
                if v > inner:
                    inner = v
            if inner < best:
                best = inner
        return best
    half = 0.5 * (mrr + mtt)
    rad = math.hypot(0.5 * (mrr - mtt), mrt)
    e1 = half - rad
    e2 = half + rad
    if kind == KIND_PUCCI_PLUS or kind == KIND_EXTREMAL_PLUS:
        val = _pp(e1, lam, Lam) + _pp(e2, lam, Lam) + naz * _pp(maz, lam, Lam)
        if kind == KIND_EXTREMAL_PLUS:
            val += mu * drift
        return val
    val = _pm(e1, lam, Lam) + _pm(e2, lam, Lam) + naz * _pm(maz, lam, Lam)
    if kind == KIND_EXTREMAL_MINUS:
        val -= mu * drift
    return val


@njit(cache=True)
def block_eval(codes, kind, lam, Lam, mu, a, b, n, mrr, mrt, mtt, maz, pr, pt, r):
    sign = 1.0
    for c in codes:
        if c == CODE_DUAL:
            mrr = -mrr
            mrt = -mrt
            mtt = -mtt
            maz = -maz
            pr = -pr
            pt = -pt
            sign = -sign
        else:
            # J = diag(-1, 1, ..., 1) in the local frame at y = r e_r
            q = 2.0 * pr / r
            mrr = mrr + q
            mtt = mtt - q
            maz = maz - q
            mrt = -mrt - 2.0 * pt / r
            pr = -pr
    drift = math.hypot(pr, pt) / r
    return sign * base_eval(kind, lam, Lam, mu, a, b, n, mrr, mrt, mtt, maz, drift)


@njit(cache=True)
def _residual_s(codes, kind, lam, Lam, mu, a, b, n, alpha, cot_dphi, phi, dphi, on_axis, s):
    mrr = alpha * (alpha + 1.0) * phi
    mrt = -(alpha + 1.0) * dphi
    mtt = s - alpha * phi
    if on_axis:
        maz = mtt
        mrt = 0.0
    else:
        maz = -alpha * phi + cot_dphi
    return block_eval(codes, kind, lam, Lam, mu, a, b, n, mrr, mrt, mtt, maz,
                      -alpha * phi, dphi, 1.0)


@njit(cache=True)
def solve_second_derivative(codes, kind, lam, Lam, mu, a, b, n, alpha, theta, phi,
                            dphi, lam_eff, Lam_eff, tol_root):
    """Unique ``s`` with F(M(s), p, x) = 0; returns (s, status).

    F is strictly decreasing in ``s`` with slope in [-k Lam, -k lam], where
    ``k = n - 1`` on the axis (all angular entries move together) and 1
    elsewhere, which yields an exact initial bracket around the root.
    """
    on_axis = theta == 0.0
    cot_dphi = 0.0 if on_axis else dphi * math.cos(theta) / math.sin(theta)
    k = (n - 1.0) if on_axis else 1.0
    g0 = _residual_s(codes, kind, lam, Lam, mu, a, b, n, alpha, cot_dphi, phi, dphi,
                     on_axis, 0.0)
    if g0 == 0.0:
        return 0.0, STATUS_OK
    if g0 > 0.0:
        lo = g0 / (k * Lam_eff)
        hi = g0 / (k * lam_eff)
    else:
        lo = g0 / (k * lam_eff)
        hi = g0 / (k * Lam_eff)
    scale = abs(alpha * (alpha + 1.0) * phi) + abs((alpha + 1.0) * dphi) + abs(cot_dphi) \
        + abs(alpha * phi) + abs(g0) + 1.0
    glo = _residual_s(codes, kind, lam, Lam, mu, a, b, n, alpha, cot_dphi, phi, dphi,
                      on_axis, lo)
    ghi = _residual_s(codes, kind, lam, Lam, mu, a, b, n, alpha, cot_dphi, phi, dphi,
                      on_axis, hi)
    # lam == Lam collapses the bracket to a point; allow rounding slack
    width = max(hi - lo, 1e-8 * (abs(lo) + abs(hi)), 1e-300)
    expand = 0
    while glo < 0.0 or ghi > 0.0:
        expand += 1
        if expand > 60:
            return math.nan, STATUS_BRACKET
        width *= 2.0
        if glo < 0.0:
            lo -= width
            glo = _residual_s(codes, kind, lam, Lam, mu, a, b, n, alpha, cot_dphi, phi,
                              dphi, on_axis, lo)
        if ghi > 0.0:
            hi += width
            ghi = _residual_s(codes, kind, lam, Lam, mu, a, b, n, alpha, cot_dphi, phi,
                              dphi, on_axis, hi)
    if glo == 0.0:
        return lo, STATUS_OK
    if ghi == 0.0:
        return hi, STATUS_OK
    # Illinois regula falsi on the bracket [lo, hi], glo > 0 > ghi
    side = 0
    s = 0.5 * (lo + hi)
    for _ in range(200):
        s = (lo * ghi - hi * glo) / (ghi - glo)
        if not (lo < s < hi):
            s = 0.5 * (lo + hi)
        g = _residual_s(codes, kind, lam, Lam, mu, a, b, n, alpha, cot_dphi, phi, dphi,
                        on_axis, s)
        if abs(g) <= tol_root * scale or hi - lo <= 4e-16 * (abs(s) + scale * 1e-3):
            return s, STATUS_OK
        if g > 0.0:
            lo, glo = s, g
            if side == 1:
                ghi *= 0.5
            side = 1
        else:
            hi, ghi = s, g
            if side == -1:
                glo *= 0.5
            side = -1
    return s, STATUS_OK


@njit(cache=True)
def _rhs(codes, kind, lam, Lam, mu, a, b, n, alpha, theta, phi, dphi, lam_eff, Lam_eff,
         tol_root):
    s, status = solve_second_derivative(codes, kind, lam, Lam, mu, a, b, n, alpha, theta,
                                        phi, dphi, lam_eff, Lam_eff, tol_root)
    return s, status


@njit(cache=True)
def _hermite(t, h, y0, d0, y1, d1):
    u = t / h
    h00 = (1 + 2 * u) * (1 - u) ** 2
    h10 = u * (1 - u) ** 2
    h01 = u * u * (3 - 2 * u)
    h11 = u * u * (u - 1)
    return h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1


@njit(cache=True)
def hermite_root(h, y0, d0, y1, d1):
    lo = 0.0
    hi = h
    flo = y0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = _hermite(mid, h, y0, d0, y1, d1)
        if fm == 0.0 or hi - lo <= 1e-17 * h:
            return mid
        if (fm > 0.0) == (flo > 0.0):
            lo = mid
            flo = fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


@njit(cache=True)
def integrate(codes, kind, lam, Lam, mu, a, b, n, alpha, phi0, h, theta_end, lam_eff,
              Lam_eff, tol_root, th, ph, dph):
    """RK4 for (phi, phi') from the axis; stops one step past the first zero.

    Returns (count, theta_star, status); theta_star is NaN without a zero.
    """
    sgn = 1.0 if phi0 > 0 else -1.0
    s0, status = _rhs(codes, kind, lam, Lam, mu, a, b, n, alpha, 0.0, phi0, 0.0,
                      lam_eff, Lam_eff, tol_root)
    if status != STATUS_OK:
        return 0, math.nan, status
    eps = h / 16.0
    th[0] = 0.0
    ph[0] = phi0
    dph[0] = 0.0
    th[1] = eps
    ph[1] = phi0 + 0.5 * s0 * eps * eps
    dph[1] = s0 * eps
    count = 2
    cap = th.shape[0]
    theta = eps
    y = ph[1]
    z = dph[1]
    while theta < theta_end and count < cap:
        step = h
        k1y = z
        k1z, st = _rhs(codes, kind, lam, Lam, mu, a, b, n, alpha, theta, y, z,
                       lam_eff, Lam_eff, tol_root)
        k2y = z + 0.5 * step * k1z
        k2z, st2 = _rhs(codes, kind, lam, Lam, mu, a, b, n, alpha, theta + 0.5 * step,
                        y + 0.5 * step * k1y, k2y, lam_eff, Lam_eff, tol_root)
        k3y = z + 0.5 * step * k2z
        k3z, st3 = _rhs(codes, kind, lam, Lam, mu, a, b, n, alpha, theta + 0.5 * step,
                        y + 0.5 * step * k2y, k3y, lam_eff, Lam_eff, tol_root)
        k4y = z + step * k3z
        k4z, st4 = _rhs(codes, kind, lam, Lam, mu, a, b, n, alpha, theta + step,
                        y + step * k3y, k4y, lam_eff, Lam_eff, tol_root)
        if st != STATUS_OK or st2 != STATUS_OK or st3 != STATUS_OK or st4 != STATUS_OK:
            return count, math.nan, STATUS_BRACKET
        ynew = y + step / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y)
        znew = z + step / 6.0 * (k1z + 2 * k2z + 2 * k3z + k4z)
        theta_new = theta + step
        th[count] = theta_new
        ph[count] = ynew
        dph[count] = znew
        count += 1
        if sgn * ynew <= 0.0:
            t = hermite_root(step, y, z, ynew, znew)
            return count, theta + t, STATUS_OK
        theta = theta_new
        y = ynew
        z = znew
    return count, math.nan, STATUS_OK
