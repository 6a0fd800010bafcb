"""Homogeneous singular solutions in axisymmetric cones.

For a rotationally invariant operator the ansatz ``u(x) = |x|^-alpha phi(theta)``
with ``theta`` the angle to the cone axis turns ``F(D^2u, Du, x) = 0`` into
an implicit second-order ODE for ``phi``. The exponents are found by shooting
on ``alpha`` until the first zero of ``phi`` hits the cone aperture.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .bounds_barriers import lower_bound, upper_bound
from .operators import DualOperator, InvertedOperator, OperatorSpec, invert

_KIND = {
    "laplacian": K.KIND_LAPLACIAN,
    "pucci-plus": K.KIND_PUCCI_PLUS,
    "pucci-minus": K.KIND_PUCCI_MINUS,
    "extremal-plus": K.KIND_EXTREMAL_PLUS,
    "extremal-minus": K.KIND_EXTREMAL_MINUS,
    "isaacs": K.KIND_ISAACS,
}


class ShootingError(RuntimeError):
    """Shooting could not locate the exponent; ``table`` holds (alpha, theta*) pairs."""

    def __init__(self, message, table=()):
        super().__init__(message)
        self.table = list(table)


@dataclass(frozen=True)
class ConeSpec:
    """Cone ``{x : angle(x, e_n) < theta0}`` in R^dim (a sector when dim = 2)."""

    dim: int
    theta0: float

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 2:
            raise ValueError("cone dimension must be an integer >= 2")
        if not 0.0 < self.theta0 < math.pi:
            raise ValueError("half-aperture must lie in (0, pi)")


@dataclass(frozen=True)
class ShootingConfig:
    tol_alpha: float = 1e-9
    ode_step: float | None = None
    tol_root: float = 1e-13
    alpha_bracket: tuple[float, float] | None = None
    max_bisections: int = 200

    def __post_init__(self):
        if self.tol_alpha <= 0 or self.tol_root <= 0:
            raise ValueError("tolerances must be positive")
        if self.ode_step is not None and self.ode_step <= 0:
            raise ValueError("ode_step must be positive")

    def step_for(self, cone):
        return cone.theta0 / 4096 if self.ode_step is None else self.ode_step


@dataclass
class ProfileSolution:
    """Angular profile of ``Psi(x) = |x|^-alpha phi(theta)``.

    ``phi(0) = 1`` normalises the profile to its maximum on the unit sphere.
    """

    alpha: float
    theta: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    theta_star: float | None
    branch: str
    dim: int
    theta0: float
    info: dict = field(default_factory=dict)

    @property
    def theta_end(self):
        return float(self.theta[-1])

    def phi_at(self, theta):
        """Cubic Hermite interpolation of the profile (vectorised)."""
        theta = np.asarray(theta, dtype=float)
        if np.any(theta > self.theta_end + 1e-12) or np.any(theta < 0):
            raise ValueError("angle outside the integrated range")
        t = self.theta
        k = np.clip(np.searchsorted(t, theta, side="right") - 1, 0, t.size - 2)
        h = t[k + 1] - t[k]
        u = (theta - t[k]) / h
        h00 = (1 + 2 * u) * (1 - u) ** 2
        h10 = u * (1 - u) ** 2
        h01 = u * u * (3 - 2 * u)
        h11 = u * u * (u - 1)
        return (h00 * self.phi[k] + h10 * h * self.dphi[k] + h01 * self.phi[k + 1]
                + h11 * h * self.dphi[k + 1])

    def __call__(self, x):
        return reconstruct(self, x)

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("theta,phi,dphi\n")
            for a, b, c in zip(self.theta, self.phi, self.dphi):
                fh.write(f"{a:.17g},{b:.17g},{c:.17g}\n")


# ---------------------------------------------------------------------------
# ODE reduction


def _encode(spec):
    codes = []
    op = spec
    while isinstance(op, (DualOperator, InvertedOperator)):
        codes.append(K.CODE_DUAL if isinstance(op, DualOperator) else K.CODE_INVERT)
        op = op.base
    if not isinstance(op, OperatorSpec):
        raise TypeError(f"cannot reduce {spec!r} to an ODE")
    if not op.rotationally_invariant:
        raise ValueError("the ODE reduction needs a rotationally invariant operator")
    P = op.params
    if op.variant == "isaacs":
        a = np.ascontiguousarray(op.isotropic_coefficients(), dtype=float)
        b = np.ascontiguousarray(op.b, dtype=float)
    else:
        a = np.zeros((1, 1))
        b = np.zeros((1, 1))
    return (np.asarray(codes, dtype=np.int64), _KIND[op.variant], float(P.lam),
            float(P.Lam), float(P.mu), a, b)


def ansatz_hessian(n, alpha, theta, phi, dphi, s):
    """Scaled Hessian of ``r^-alpha phi(theta)`` at ``r = 1``.

    The matrix is expressed in the local frame (e_r, e_theta, azimuthal
    directions); ``D^2u = r^(-alpha-2)`` times this matrix.
    """
    if n < 2:
        raise ValueError("dimension must be >= 2")
    if theta == 0.0:
        az = s - alpha * phi
    elif 0.0 < theta < math.pi:
        az = -alpha * phi + dphi * math.cos(theta) / math.sin(theta)
    else:
        raise ValueError("theta must lie in [0, pi)")
    M = np.zeros((n, n))
    M[0, 0] = alpha * (alpha + 1.0) * phi
    M[0, 1] = M[1, 0] = -(alpha + 1.0) * dphi
    M[1, 1] = s - alpha * phi
    for k in range(2, n):
        M[k, k] = az
    return M


def ansatz_gradient(n, alpha, phi, dphi):
    p = np.zeros(n)
    p[0] = -alpha * phi
    p[1] = dphi
    return p


def local_point(n):
    x = np.zeros(n)
    x[0] = 1.0
    return x


def implicit_second_derivative(spec, n, alpha, theta, phi, dphi, tol_root=1e-13):
    """Solve ``F(M(s), p, x) = 0`` for ``s = phi''`` at one angle."""
    codes, kind, lam, Lam, mu, a, b = _encode(spec)
    E = spec.ellipticity(n)
    s, status = K.solve_second_derivative(codes, kind, lam, Lam, mu, a, b, n, float(alpha),
                                          float(theta), float(phi), float(dphi), E.lam,
                                          E.Lam, tol_root)
    if status != K.STATUS_OK:
        raise ValueError("bracket expansion exceeded 2^60; operator not uniformly elliptic")
    return s


def block_evaluate(spec, n, mrr, mrt, mtt, maz, pr, pt, r=1.0):
    """Compiled evaluation on a block jet (used to cross-check the kernels)."""
    codes, kind, lam, Lam, mu, a, b = _encode(spec)
    return K.block_eval(codes, kind, lam, Lam, mu, a, b, n, mrr, mrt, mtt, maz, pr, pt, r)


def _theta_end(cone):
    return min(cone.theta0 + 0.2, cone.theta0 + 0.5 * (math.pi - cone.theta0))


def integrate_profile(spec, cone, alpha, config=None, phi0=1.0):
    """Integrate the profile ODE from the axis for a fixed exponent.

    Parameters
    ----------
    spec : Operator
        Rotationally invariant operator.
    cone : ConeSpec
    alpha : float
        Nonzero exponent; its sign selects the branch.
    config : ShootingConfig, optional
    phi0 : float
        Value on the axis; ``-1`` tracks the negative solutions.

    Returns
    -------
    ProfileSolution
        ``theta_star`` is None when ``phi`` keeps its sign up to
        ``theta0 + 0.2`` (capped before the antipodal axis).
    """
    if alpha == 0:
        raise ValueError("alpha must be nonzero")
    config = config or ShootingConfig()
    h = config.step_for(cone)
    end = _theta_end(cone)
    codes, kind, lam, Lam, mu, a, b = _encode(spec)
    E = spec.ellipticity(cone.dim)
    cap = int(math.ceil(end / h)) + 4
    th = np.empty(cap)
    ph = np.empty(cap)
    dph = np.empty(cap)
    count, tstar, status = K.integrate(codes, kind, lam, Lam, mu, a, b, cone.dim,
                                       float(alpha), float(phi0), h, end, E.lam, E.Lam,
                                       config.tol_root, th, ph, dph)
    if status != K.STATUS_OK:
        raise ValueError("implicit solve for phi'' failed; operator not uniformly elliptic")
    return ProfileSolution(
        alpha=float(alpha),
        theta=th[:count].copy(),
        phi=ph[:count].copy(),
        dphi=dph[:count].copy(),
        theta_star=None if math.isnan(tstar) else float(tstar),
        branch="plus" if alpha > 0 else "minus",
        dim=cone.dim,
        theta0=cone.theta0,
        info={"ode_step": h},
    )


def _first_zero(spec, cone, alpha, config):
    prof = integrate_profile(spec, cone, alpha, config)
    return (prof.theta_end if prof.theta_star is None else prof.theta_star), prof


def _bracket(spec, cone, branch, config, evaluate, table):
    """Find (lo, hi) in |alpha| with theta*(lo) > theta0 > theta*(hi)."""
    t0 = cone.theta0
    if config.alpha_bracket is not None:
        lo, hi = sorted(abs(v) for v in config.alpha_bracket)
        return lo, hi
    if branch == "plus":
        try:
            lo = lower_bound(spec.ellipticity(cone.dim), cone).alpha_lb
            hi = upper_bound(spec.ellipticity(cone.dim), cone).alpha_ub
            if evaluate(lo) > t0 and evaluate(hi) < t0:
                return lo, hi
        except (ValueError, OverflowError):
            pass
    lo, hi = 1e-3, 1.0
    while evaluate(lo) <= t0:
        lo *= 0.5
        if lo < 1e-12:
            raise ShootingError("no exponent bracket: theta* < theta0 for tiny alpha", table)
    while evaluate(hi) >= t0:
        if evaluate(hi) > t0:
            lo = hi
        hi *= 2.0
        if hi > 2.0**20:
            raise ShootingError("no exponent bracket: theta* > theta0 for huge alpha", table)
    return lo, hi


def shoot(spec, cone, branch="plus", config=None):
    """Exponent and profile of the positive homogeneous solution.

    Bisects on ``|alpha|`` until the bracket width is at most
    ``config.tol_alpha``. The plus branch starts from the explicit barrier
    bounds; the minus branch from a doubling scan.

    Returns
    -------
    alpha : float
    profile : ProfileSolution
        ``profile.info`` records iterations, the bracket and
        ``theta_star_residual = theta*(alpha) - theta0``.
    """
    if branch not in ("plus", "minus"):
        raise ValueError("branch must be 'plus' or 'minus'")
    config = config or ShootingConfig()
    sgn = 1.0 if branch == "plus" else -1.0
    table = []
    cache = {}

    def evaluate(beta):
        if beta not in cache:
            tz, _ = _first_zero(spec, cone, sgn * beta, config)
            cache[beta] = tz
            table.append((sgn * beta, tz))
        return cache[beta]

    t0 = cone.theta0
    lo, hi = _bracket(spec, cone, branch, config, evaluate, table)
    tlo, thi = evaluate(lo), evaluate(hi)
    if not (tlo > t0 > thi):
        raise ShootingError(
            f"bracket [{lo}, {hi}] does not straddle theta0 (theta* = {tlo}, {thi})", table)
    lo, hi, iters, fallback = _bisect(evaluate, lo, hi, tlo, thi, t0, config)
    if fallback:
        lo, hi, iters2 = _scan_then_bisect(evaluate, lo, hi, t0, config, table)
        iters += iters2
    beta = 0.5 * (lo + hi)
    tz, prof = _first_zero(spec, cone, sgn * beta, config)
    prof.info.update(
        iterations=iters,
        bracket=(sgn * lo, sgn * hi),
        theta_star_residual=tz - t0,
        fallback_scan=fallback,
    )
    return sgn * beta, prof


def _bisect(evaluate, lo, hi, tlo, thi, t0, config):
    iters = 0
    while hi - lo > config.tol_alpha and iters < config.max_bisections:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        tm = evaluate(mid)
        iters += 1
        if not (thi <= tm <= tlo):
            return lo, hi, iters, True
        if tm > t0:
            lo, tlo = mid, tm
        else:
            hi, thi = mid, tm
    return lo, hi, iters, False


def _scan_then_bisect(evaluate, lo, hi, t0, config, table):
    grid = np.linspace(lo, hi, 256)
    vals = [evaluate(float(g)) for g in grid]
    for k in range(255):
        if vals[k] > t0 >= vals[k + 1]:
            a, b = float(grid[k]), float(grid[k + 1])
            a, b, iters, bad = _bisect(evaluate, a, b, vals[k], vals[k + 1], t0, config)
            if bad:
                raise ShootingError("theta*(alpha) is not monotone near the crossing", table)
            return a, b, iters + 256
    raise ShootingError("scan found no crossing of theta0", table)


def exponent_json(alpha, profile):
    """JSON-ready summary of a shooting result."""
    return {
        "alpha": float(alpha),
        "branch": profile.branch,
        "theta0": float(profile.theta0),
        "iterations": int(profile.info.get("iterations", 0)),
        "theta_star_residual": float(profile.info.get("theta_star_residual", math.nan)),
    }


def alpha_minus_via_inversion(spec, cone, config=None):
    """Negative exponent from the positive exponent of the inverted operator."""
    alpha, _ = shoot(invert(spec), cone, "plus", config)
    return -alpha


# ---------------------------------------------------------------------------
# reconstruction and residuals


def _angles(profile, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != profile.dim:
        raise ValueError("point dimension does not match the profile")
    r = np.linalg.norm(x, axis=-1)
    if np.any(r == 0):
        raise ValueError("Psi is singular at the vertex")
    c = np.clip(x[..., -1] / r, -1.0, 1.0)
    return r, np.arccos(c)


def reconstruct(profile, x):
    """``|x|^-alpha phi(theta(x))`` with ``theta`` the angle to ``e_n``."""
    r, th = _angles(profile, x)
    if np.any(th > profile.theta0 + 1e-9):
        raise ValueError("point lies outside the cone")
    th = np.minimum(th, profile.theta_end)
    return r ** (-profile.alpha) * profile.phi_at(th)


def residual(spec, profile, sample_points, h_fd=1e-4):
    """Max |F| of central-difference derivatives of the reconstructed Psi."""
    pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    n = profile.dim
    E = np.eye(n) * h_fd
    u = lambda z: reconstruct(profile, z)  # noqa: E731
    u0 = u(pts)
    g = np.empty(pts.shape)
    H = np.empty(pts.shape + (n,))
    for i in range(n):
        up, um = u(pts + E[i]), u(pts - E[i])
        g[:, i] = (up - um) / (2 * h_fd)
        H[:, i, i] = (up - 2 * u0 + um) / h_fd**2
        for j in range(i + 1, n):
            d = (u(pts + E[i] + E[j]) - u(pts + E[i] - E[j]) - u(pts - E[i] + E[j])
                 + u(pts - E[i] - E[j])) / (4 * h_fd**2)
            H[:, i, j] = H[:, j, i] = d
    vals = spec(H, g, pts)
    return float(np.max(np.abs(vals)))
