"""Explicit barriers and closed-form bounds for the positive exponent.

Two functions certify a lower and an upper bound on ``alpha^+``:

* ``v(x) = |x|^-alpha (e^kappa - e^(kappa x_n/|x|))`` is a supersolution of
  the minimal extremal equation in ``{x_n < sigma |x|}``;
* ``phi = w^2/2`` with ``w(x) = |x|^(-alpha-2) x_n^2 - sigma^2 |x|^-alpha`` is a
  strict subsolution of the maximal extremal equation in ``{x_n > sigma |x|}``.

An axisymmetric cone of half-aperture ``theta0`` is contained in the first
region (reflected, ``sigma = -cos theta0``) and contains the second whenever
``sigma >= cos theta0``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .operators import EllipticityParams, eig_sym, pucci_minus_eigs, pucci_plus_eigs

_GOLDEN = 0.5 * (math.sqrt(5.0) - 1.0)


@dataclass
class BoundsReport:
    C1: float
    C2: float
    kappa: float
    alpha_lb: float
    alpha_ub: float = math.nan
    sigma_lb: float = math.nan
    sigma_ub: float = math.nan

    def to_json(self):
        return asdict(self)


@dataclass
class BarrierSample:
    """Value, gradient and Hessian of a barrier, batched over leading axes."""

    value: np.ndarray
    gradient: np.ndarray
    hessian: np.ndarray


def _theta0(cone):
    t0 = float(cone.theta0)
    if not 0.0 < t0 < math.pi:
        raise ValueError("half-aperture must lie in (0, pi)")
    return t0


def lower_bound_constants(params, n, sigma):
    """``(C1, C2, kappa, alpha_lb)`` for the region ``{x_n < sigma |x|}``.

    ``alpha_lb = e^(-2 kappa)/C1`` underflows to 0.0 for ``kappa`` above
    roughly 372; the bound then carries no information in double precision.
    """
    if not -1.0 < sigma < 1.0:
        raise ValueError("sigma must lie in (-1, 1)")
    lam, Lam, mu = params.lam, params.Lam, params.mu
    C1 = max(0.0, 2 * Lam + mu - lam * (n - 1))
    C2 = (2 * Lam + mu) ** 2 / (2 * lam)
    kappa = 1 + C2 + (2 * Lam * (n - 1) + 1) / (lam * (1 - sigma**2)) + 4 * (C2 + 1) / lam
    alpha = 1.0 if C1 == 0 else min(1.0, math.exp(-2 * kappa) / C1)
    return C1, C2, kappa, alpha


def lower_bound(params, cone):
    """Certified lower bound on ``alpha^+`` of any operator with these constants."""
    sigma = -math.cos(_theta0(cone))
    C1, C2, kappa, alpha = lower_bound_constants(params, cone.dim, sigma)
    return BoundsReport(C1=C1, C2=C2, kappa=kappa, alpha_lb=alpha, sigma_lb=sigma)


def _ub_drift_part(params, n):
    lam, Lam, mu = params.lam, params.Lam, params.mu
    return mu + (n - 1) * Lam + n**2 * Lam**2 / lam + 0.5 * (2 * Lam + mu) ** 2 / lam


def upper_bound_formula(params, n, sigma):
    """Upper bound on ``alpha^+`` certified by the cap ``{x_n > sigma |x|}``."""
    if not 0.0 < sigma < 1.0:
        raise ValueError("sigma must lie in (0, 1)")
    lam = params.lam
    return 2 + _ub_drift_part(params, n) / lam + (lam + sigma**4) / (sigma**2 * (1 - sigma**2))


def upper_bound(params, cone, tol=1e-10):
    """Minimise the cap bound over all inscribed caps.

    Returns a :class:`BoundsReport` that also carries the lower-bound data.
    """
    t0 = _theta0(cone)
    n = cone.dim
    a = max(math.cos(t0), 0.0)
    b = 1.0
    f = lambda s: upper_bound_formula(params, n, s)  # noqa: E731
    # open interval: pre-scan on interior points, then golden section
    grid = a + (b - a) * (np.arange(1, 65) / 65.0)
    vals = [f(float(s)) for s in grid]
    k = int(np.argmin(vals))
    lo = a if k == 0 else float(grid[k - 1])
    hi = b if k == 63 else float(grid[k + 1])
    c = hi - _GOLDEN * (hi - lo)
    d = lo + _GOLDEN * (hi - lo)
    fc, fd = _safe(f, c), _safe(f, d)
    while hi - lo > tol:
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - _GOLDEN * (hi - lo)
            fc = _safe(f, c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _GOLDEN * (hi - lo)
            fd = _safe(f, d)
    cands = [(fc, c), (fd, d), (vals[k], float(grid[k]))]
    if a > 0.0:
        cands.append((f(a), a))
    best, sigma = min(cands)
    rep = lower_bound(params, cone)
    rep.alpha_ub = float(best)
    rep.sigma_ub = float(sigma)
    return rep


def _safe(f, s):
    return f(s) if 0.0 < s < 1.0 else math.inf


# ---------------------------------------------------------------------------
# barriers


def _prep(x):
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1)
    if np.any(r2 == 0):
        raise ValueError("barriers are singular at the origin")
    n = x.shape[-1]
    r = np.sqrt(r2)
    xn = x[..., -1]
    en = np.zeros(n)
    en[-1] = 1.0
    q = r2[..., None] * en - xn[..., None] * x
    return x, r, r2, xn, en, q, n


def _outer(a, b):
    return a[..., :, None] * b[..., None, :]


def _sym(a, b):
    return 0.5 * (_outer(a, b) + _outer(b, a))


def supersolution_eval(x, alpha, kappa, normalized=False):
    """``v = |x|^-alpha (e^kappa - e^(kappa x_n/|x|))`` with derivatives.

    With ``normalized=True`` the barrier is multiplied by ``e^-kappa``. The
    operators are positively homogeneous, so this positive multiple is a
    supersolution exactly when ``v`` is, but its derivatives are of size
    ``kappa^2`` instead of ``kappa^2 e^kappa`` and survive rounding.
    """
    x, r, r2, xn, en, q, n = _prep(x)
    if normalized:
        E = np.exp(kappa * (xn / r - 1.0))
        ek = 1.0
    else:
        E = np.exp(kappa * xn / r)
        ek = math.exp(kappa)
    ra = r ** (-alpha)
    val = ra * (ek - E)
    c1 = (alpha * ra / r2 * (ek - E))[..., None]
    c2 = (kappa * ra / r**3 * E)[..., None]
    grad = -c1 * x - c2 * q
    I = np.eye(n)
    xx = _outer(x, x)
    s = lambda c: c[..., None, None]  # noqa: E731
    hess = (
        s(alpha * ra / r2**2 * (ek - E)) * ((alpha + 2) * xx - s(r2) * I)
        + s(2 * kappa * (alpha + 1) * ra / r**5 * E) * _sym(x, q)
        - s(kappa * ra / r**5 * xn * E) * (xx - s(r2) * I)
        - s(kappa**2 * ra / r**6 * E) * _outer(q, q)
    )
    return BarrierSample(val, grad, hess)


def subsolution_eval(x, alpha, sigma):
    """``phi = w^2/2``, ``w = |x|^(-alpha-2) x_n^2 - sigma^2 |x|^-alpha``."""
    x, r, r2, xn, en, q, n = _prep(x)
    ra = r ** (-alpha)
    w = ra / r2 * xn**2 - sigma**2 * ra
    s = lambda c: c[..., None, None]  # noqa: E731
    Dw = -(alpha * w / r2)[..., None] * x + (2 * ra / r2**2 * xn)[..., None] * q
    I = np.eye(n)
    D2w = (
        s(alpha * w / r2**2) * ((alpha + 2) * _outer(x, x) - s(r2) * I)
        - s(2 * ra / r2**2) * (s(xn**2) * I - s(r2) * np.outer(en, en))
        - s(4 * (alpha + 2) * ra / r**6 * xn) * _sym(x, q)
    )
    val = 0.5 * w**2
    grad = w[..., None] * Dw
    hess = s(w) * D2w + _outer(Dw, Dw)
    return BarrierSample(val, grad, hess)


def subsolution_alpha(params, n, sigma, margin=1e-6):
    """Smallest exponent meeting both sufficient conditions, plus a margin.

    The barrier ``phi`` itself is homogeneous of degree ``-2 alpha``.
    """
    lam = params.lam
    a1 = 1 + _ub_drift_part(params, n) / (2 * lam)
    a2 = (lam + sigma**4) / (2 * sigma**2 * (1 - sigma**2))
    return max(a1, a2 * (1 + margin))


# ---------------------------------------------------------------------------
# verification


def sphere_samples(n, c_lo, c_hi, num_samples, seed=0):
    """Stratified unit vectors with ``x_n`` in ``[c_lo, c_hi]``.

    The last coordinate is stratified over ``num_samples`` equal cells; the
    remaining directions are random (deterministic seed).
    """
    rng = np.random.default_rng(seed)
    u = (np.arange(num_samples) + rng.uniform(size=num_samples)) / num_samples
    c = c_lo + (c_hi - c_lo) * u
    d = rng.standard_normal((num_samples, n - 1))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    x = np.empty((num_samples, n))
    x[:, :-1] = d * np.sqrt(np.maximum(1 - c * c, 0.0))[:, None]
    x[:, -1] = c
    return x


def _report(vals, pts, pick):
    k = int(pick(vals))
    return float(vals[k]), pts[k].copy()


def supersolution_residual(params, alpha, kappa, x, normalized=False):
    """``P^-(D^2 v) - mu |x|^-1 |Dv|`` (nonnegative for a supersolution)."""
    b = supersolution_eval(x, alpha, kappa, normalized)
    r = np.linalg.norm(x, axis=-1)
    return pucci_minus_eigs(eig_sym(b.hessian), params) - params.mu / r * np.linalg.norm(
        b.gradient, axis=-1)


def subsolution_residual(params, alpha, sigma, x):
    """``P^+(D^2 phi) + mu |x|^-1 |D phi|`` (negative for a strict subsolution)."""
    b = subsolution_eval(x, alpha, sigma)
    r = np.linalg.norm(x, axis=-1)
    return pucci_plus_eigs(eig_sym(b.hessian), params) + params.mu / r * np.linalg.norm(
        b.gradient, axis=-1)


def verify_supersolution(params, alpha, kappa, cone, num_samples=10_000, seed=0,
                         radius=1.0, normalized=True):
    """Minimum supersolution residual over the region ``{x_n < sigma |x|}``.

    ``sigma = -cos theta0`` (the reflected cone). Returns (min, witness).
    By default the residual is that of ``e^-kappa v`` (see
    :func:`supersolution_eval`): for large ``kappa`` the raw Hessian has
    entries near ``kappa^2 e^kappa`` whose eigenvalues cancel far below
    their rounding error.
    """
    sigma = -math.cos(_theta0(cone))
    x = radius * sphere_samples(cone.dim, -1.0, sigma, num_samples, seed)
    vals = supersolution_residual(params, alpha, kappa, x, normalized)
    return _report(vals, x, np.argmin)


def verify_subsolution(params, alpha, sigma, cone, num_samples=10_000, seed=0, collar=1e-3,
                       radius=1.0):
    """Maximum subsolution residual over the cap ``{x_n > sigma |x|}``.

    Samples stay ``collar`` away (in ``x_n/|x|``) from the boundary, where
    the barrier degenerates. ``cone`` fixes the dimension only.
    """
    if not 0.0 < sigma < 1.0:
        raise ValueError("sigma must lie in (0, 1)")
    x = radius * sphere_samples(cone.dim, sigma + collar, 1.0, num_samples, seed)
    return _report(subsolution_residual(params, alpha, sigma, x), x, np.argmax)


__all__ = [
    "BarrierSample",
    "BoundsReport",
    "EllipticityParams",
    "lower_bound",
    "lower_bound_constants",
    "sphere_samples",
    "subsolution_alpha",
    "subsolution_eval",
    "subsolution_residual",
    "supersolution_eval",
    "supersolution_residual",
    "upper_bound",
    "upper_bound_formula",
    "verify_subsolution",
    "verify_supersolution",
]
