"""Wide-stencil monotone finite differences on planar annular sectors.

The domain is ``E = {r0 <= |x| <= r1, |theta| <= theta0}`` with ``theta`` the
angle to the axis ``e_2``, so ``x = (r sin theta, r cos theta)``. Nodes are
geometric in ``r`` and uniform in ``theta``; node ``(i, j)`` has flat index
``i * Ntheta + j``.

Second derivatives are replaced by directional second differences along
``K`` directions of the local polar frame. Off-grid endpoints are
interpolated bilinearly in ``(log r, theta)``; endpoints leaving the domain
are pulled back to the boundary and read the Dirichlet data there. All
weights are nonnegative, so the discrete operator is monotone.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import pyamg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cone_exponents import ProfileSolution, reconstruct
from .operators import DualOperator, InvertedOperator, OperatorSpec

INNER, OUTER, LEFT, RIGHT = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# grid


@dataclass(frozen=True)
class PolarGrid:
    r0: float
    r1: float
    Nr: int
    Ntheta: int
    theta0: float

    def __post_init__(self):
        if not 0 < self.r0 < self.r1:
            raise ValueError("need 0 < r0 < r1")
        if self.Nr < 8 or self.Ntheta < 8:
            raise ValueError("need at least 8 nodes in each direction")
        if not 0 < self.theta0 < math.pi:
            raise ValueError("half-aperture must lie in (0, pi)")

    @property
    def N(self):
        return self.Nr * self.Ntheta

    @property
    def drho(self):
        return math.log(self.r1 / self.r0) / (self.Nr - 1)

    @property
    def dtheta(self):
        return 2 * self.theta0 / (self.Ntheta - 1)

    @property
    def radii(self):
        r = self.r0 * (self.r1 / self.r0) ** (np.arange(self.Nr) / (self.Nr - 1))
        r[0], r[-1] = self.r0, self.r1
        return r

    @property
    def thetas(self):
        t = np.linspace(-self.theta0, self.theta0, self.Ntheta)
        # exact mirror symmetry about the axis
        return 0.5 * (t - t[::-1])

    def index(self, i, j):
        return np.asarray(i) * self.Ntheta + np.asarray(j)

    @property
    def r_nodes(self):
        return np.repeat(self.radii, self.Ntheta)

    @property
    def theta_nodes(self):
        return np.tile(self.thetas, self.Nr)

    @property
    def points(self):
        r, t = self.r_nodes, self.theta_nodes
        return np.stack([r * np.sin(t), r * np.cos(t)], axis=-1)

    def boundary_sets(self):
        """Flat indices of (inner arc, outer arc, left ray, right ray).

        Corners belong to the rays, so the four sets partition the boundary.
        """
        Nr, Nt = self.Nr, self.Ntheta
        inner = self.index(0, np.arange(1, Nt - 1))
        outer = self.index(Nr - 1, np.arange(1, Nt - 1))
        left = self.index(np.arange(Nr), 0)
        right = self.index(np.arange(Nr), Nt - 1)
        return inner, outer, left, right

    @property
    def boundary_mask(self):
        m = np.zeros((self.Nr, self.Ntheta), dtype=bool)
        m[0, :] = m[-1, :] = m[:, 0] = m[:, -1] = True
        return m.ravel()

    @property
    def interior(self):
        return np.flatnonzero(~self.boundary_mask)

    @property
    def boundary(self):
        return np.flatnonzero(self.boundary_mask)

    def to_json(self):
        return {"r0": self.r0, "r1": self.r1, "Nr": self.Nr, "Ntheta": self.Ntheta,
                "theta0": self.theta0}


def build_grid(r0, r1, Nr, Ntheta, theta0):
    return PolarGrid(float(r0), float(r1), int(Nr), int(Ntheta), float(theta0))


@dataclass
class PolarField:
    """Nodal values on a grid together with the Dirichlet data used."""

    grid: PolarGrid
    values: np.ndarray
    boundary_values: np.ndarray | None = None
    report: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(self.grid.N)
        if self.boundary_values is None:
            self.boundary_values = self.values[self.grid.boundary].copy()
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    def as_array(self):
        return self.values.reshape(self.grid.Nr, self.grid.Ntheta)

    def to_csv(self, path):
        g = self.grid
        with open(path, "w") as fh:
            fh.write("r,theta,value\n")
            for r, t, v in zip(g.r_nodes, g.theta_nodes, self.values):
                fh.write(f"{r:.17g},{t:.17g},{v:.17g}\n")

    def report_json(self):
        keys = ("iterations", "final_residual", "converged")
        return json.dumps({k: self.report[k] for k in keys})


def field_from_function(grid, f):
    """Sample ``f(points)`` (Cartesian, shape (N, 2)) on every node."""
    return PolarField(grid, f(grid.points))


# ---------------------------------------------------------------------------
# stencil


@dataclass(frozen=True)
class StencilSet:
    """``K`` directions of the local polar frame and the step rule.

    The step at a node of radius ``r`` is ``step_factor * r * sqrt(d)`` with
    ``d = max(drho, dtheta)``: bilinear interpolation errors of size ``d^2``
    are divided by ``h^2``, so a step shrinking like the spacing itself
    would not be consistent.
    """

    K: int = 16
    step_factor: float = 1.0

    def __post_init__(self):
        if self.K < 2 or self.K % 2:
            raise ValueError("K must be even so that orthogonal pairs exist")
        if self.step_factor <= 0:
            raise ValueError("step_factor must be positive")

    @property
    def angles(self):
        return np.pi * np.arange(self.K) / self.K

    def step(self, grid, r):
        return self.step_factor * np.asarray(r) * math.sqrt(max(grid.drho, grid.dtheta))


def _exit_distance(grid, x, v):
    """First ``t > 0`` with ``x + t v`` on the boundary, and which piece."""
    b = np.sum(x * v, axis=-1)
    x2 = np.sum(x * x, axis=-1)
    t_out = -b + np.sqrt(np.maximum(b * b - (x2 - grid.r1**2), 0.0))
    disc = b * b - (x2 - grid.r0**2)
    with np.errstate(invalid="ignore"):
        t_in = np.where(disc >= 0, -b - np.sqrt(np.maximum(disc, 0.0)), np.inf)
    t_in = np.where(t_in > 0, t_in, np.inf)
    ts = [t_in, t_out]
    for sgn in (-1.0, 1.0):
        tb = sgn * grid.theta0
        a = np.array([math.sin(tb), math.cos(tb)])
        nrm = np.array([math.cos(tb), -math.sin(tb)])
        vn = np.sum(v * nrm, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = -np.sum(x * nrm, axis=-1) / vn
        p = x + np.where(np.isfinite(t), t, 0.0)[..., None] * v
        ok = np.isfinite(t) & (t > 0) & (np.sum(p * a, axis=-1) > 0)
        ts.append(np.where(ok, t, np.inf))
    T = np.stack(ts, axis=-1)
    piece = np.argmin(T, axis=-1)
    return np.take_along_axis(T, piece[..., None], axis=-1)[..., 0], piece


def _polar(y):
    r = np.hypot(y[..., 0], y[..., 1])
    return np.log(r), np.arctan2(y[..., 0], y[..., 1])


def _linear(f, n):
    k = np.clip(np.floor(f), 0, n - 2).astype(np.int64)
    a = np.clip(f - k, 0.0, 1.0)
    return k, a


def _interp_weights(grid, y, exited, piece):
    """Node indices and nonnegative weights (4 slots) reproducing ``u(y)``."""
    rho, th = _polar(y)
    fi = (rho - math.log(grid.r0)) / grid.drho
    fj = (th + grid.theta0) / grid.dtheta
    i0, a = _linear(fi, grid.Nr)
    j0, c = _linear(fj, grid.Ntheta)
    Nt = grid.Ntheta
    idx = np.stack([i0 * Nt + j0, (i0 + 1) * Nt + j0, i0 * Nt + j0 + 1,
                    (i0 + 1) * Nt + j0 + 1], axis=-1)
    w = np.stack([(1 - a) * (1 - c), a * (1 - c), (1 - a) * c, a * c], axis=-1)
    # boundary exits: 1D linear interpolation along the piece that was hit
    arc_i = np.where(piece == INNER, 0, grid.Nr - 1)
    ray_j = np.where(piece == LEFT, 0, Nt - 1)
    arc = exited & (piece <= OUTER)
    ray = exited & (piece >= LEFT)
    zero = np.zeros_like(a)
    idx_arc = np.stack([arc_i * Nt + j0, arc_i * Nt + j0 + 1, arc_i * Nt + j0,
                        arc_i * Nt + j0], axis=-1)
    w_arc = np.stack([1 - c, c, zero, zero], axis=-1)
    idx_ray = np.stack([i0 * Nt + ray_j, (i0 + 1) * Nt + ray_j, i0 * Nt + ray_j,
                        i0 * Nt + ray_j], axis=-1)
    w_ray = np.stack([1 - a, a, zero, zero], axis=-1)
    idx = np.where(arc[..., None], idx_arc, np.where(ray[..., None], idx_ray, idx))
    w = np.where(arc[..., None], w_arc, np.where(ray[..., None], w_ray, w))
    return idx, w


def _frame(theta):
    er = np.stack([np.sin(theta), np.cos(theta)], axis=-1)
    et = np.stack([np.cos(theta), -np.sin(theta)], axis=-1)
    return er, et


def _endpoints(grid, x, d, h):
    """Steps ``(h+, h-)`` and interpolation data for ``x +- h d``."""
    out = []
    for s in (1.0, -1.0):
        v = s * d
        t, piece = _exit_distance(grid, x, v)
        exited = t < h
        hs = np.where(exited, t, h)
        y = x + hs[..., None] * v
        idx, w = _interp_weights(grid, y, exited, piece)
        out.append((hs, idx, w))
    return out


def _second_difference_rows(x0_index, ends):
    """COO triplets of the (possibly asymmetric) centred second difference."""
    (h1, i1, w1), (h2, i2, w2) = ends
    c0 = -2.0 / (h1 * h2)
    c1 = 2.0 / (h1 * (h1 + h2))
    c2 = 2.0 / (h2 * (h1 + h2))
    cols = np.concatenate([x0_index[:, None], i1, i2], axis=-1)
    vals = np.concatenate([c0[:, None], c1[:, None] * w1, c2[:, None] * w2], axis=-1)
    return cols, vals


@dataclass
class Discretization:
    """Precomputed sparse stencils on one grid (rows = interior nodes)."""

    grid: PolarGrid
    stencil: StencilSet
    D: list  # K sparse matrices, one per direction
    G_rho: sp.csr_matrix
    G_theta: sp.csr_matrix
    r_int: np.ndarray
    h_min: np.ndarray  # smallest h+ h- over directions, per node

    @property
    def trace(self):
        if not hasattr(self, "_trace"):
            K = self.stencil.K
            self._trace = sum(self.D) * (2.0 / K)
        return self._trace


def discretize(grid, stencil=None):
    stencil = stencil or StencilSet()
    interior = grid.interior
    m = interior.size
    x = grid.points[interior]
    r = grid.r_nodes[interior]
    er, et = _frame(grid.theta_nodes[interior])
    h = stencil.step(grid, r)
    rows = np.repeat(np.arange(m), 9)
    D = []
    h_min = np.full(m, np.inf)
    for ang in stencil.angles:
        d = math.cos(ang) * er + math.sin(ang) * et
        ends = _endpoints(grid, x, d, h)
        h_min = np.minimum(h_min, ends[0][0] * ends[1][0])
        cols, vals = _second_difference_rows(interior, ends)
        D.append(sp.csr_matrix((vals.ravel(), (rows, cols.ravel())), shape=(m, grid.N)))
    Nt = grid.Ntheta
    one = np.ones(m)
    gr = sp.csr_matrix(
        (np.concatenate([one, -one]) / (2 * grid.drho),
         (np.tile(np.arange(m), 2), np.concatenate([interior + Nt, interior - Nt]))),
        shape=(m, grid.N))
    gt = sp.csr_matrix(
        (np.concatenate([one, -one]) / (2 * grid.dtheta),
         (np.tile(np.arange(m), 2), np.concatenate([interior + 1, interior - 1]))),
        shape=(m, grid.N))
    return Discretization(grid, stencil, D, gr, gt, r, h_min)


def _frame_mode(spec):
    """How directional data are combined: 'trace', 'max' or 'min'.

    Convex spectral operators equal the maximum over orthonormal frames of
    their value on the frame diagonal, concave ones the minimum; operators
    that see only the trace use the frame average.
    """
    if isinstance(spec, DualOperator):
        m = _frame_mode(spec.base)
        return {"max": "min", "min": "max"}.get(m, m)
    if isinstance(spec, InvertedOperator):
        raise ValueError("the planar solver does not support inverted operators")
    if not isinstance(spec, OperatorSpec):
        raise TypeError(f"unsupported operator {spec!r}")
    if not spec.rotationally_invariant:
        raise ValueError("the planar solver needs a rotationally invariant operator")
    if spec.variant in ("laplacian", "isaacs"):
        return "trace"
    return "max" if spec.variant.endswith("plus") else "min"


def _drift(disc, u):
    g1 = disc.G_rho @ u
    g2 = disc.G_theta @ u
    norm = np.hypot(g1, g2)
    return norm / disc.r_int**2, g1, g2, norm


def _residual(spec, disc, u, mode, with_jacobian=False):
    drift, g1, g2, gn = _drift(disc, u)
    K = disc.stencil.K
    if mode == "trace":
        tr = disc.trace @ u
        eigs = np.stack([tr, np.zeros_like(tr)], axis=-1)
        val, de, dd = spec.spectral_linearization(eigs, drift)
        if not with_jacobian:
            return val, None
        J = sp.diags(de[:, 0]) @ disc.trace
        active = None
    else:
        Du = np.stack([Dk @ u for Dk in disc.D])  # (K, m)
        half = K // 2
        pairs = np.stack([Du[:half], Du[half:]], axis=-1)  # (K/2, m, 2)
        vals, de, dd = spec.spectral_linearization(pairs, drift[None, :])
        pick = np.argmax if mode == "max" else np.argmin
        active = pick(vals, axis=0)
        cols = np.arange(vals.shape[1])
        val = vals[active, cols]
        if not with_jacobian:
            return val, None
        de = de[active, cols]
        dd = np.broadcast_to(dd, vals.shape)[active, cols]
        J = None
        for k in range(half):
            sel = active == k
            if not sel.any():
                continue
            part = (sp.diags(np.where(sel, de[:, 0], 0.0)) @ disc.D[k]
                    + sp.diags(np.where(sel, de[:, 1], 0.0)) @ disc.D[k + half])
            J = part if J is None else J + part
    dd = np.broadcast_to(dd, val.shape)
    if np.any(dd != 0):
        safe = np.where(gn > 0, gn, 1.0)
        s = np.where(gn > 0, dd / (disc.r_int**2 * safe), 0.0)
        J = J + sp.diags(s * g1) @ disc.G_rho + sp.diags(s * g2) @ disc.G_theta
    return val, J.tocsr()


# ---------------------------------------------------------------------------
# public operations


def _node_index(grid, node):
    if isinstance(node, tuple):
        return int(grid.index(*node))
    return int(node)


def directional_second_difference(field, node, direction, h):
    """Second difference of ``field`` at ``node`` along a Cartesian direction.

    Endpoints outside the domain are pulled back to the boundary (one-sided
    centred formula); off-grid endpoints are interpolated bilinearly in
    ``(log r, theta)``.
    """
    g = field.grid
    k = _node_index(g, node)
    if g.boundary_mask[k]:
        raise ValueError("node must be interior")
    d = np.asarray(direction, dtype=float)
    d = (d / np.linalg.norm(d))[None, :]
    x = g.points[k][None, :]
    ends = _endpoints(g, x, d, np.array([float(h)]))
    cols, vals = _second_difference_rows(np.array([k]), ends)
    return float(np.sum(vals[0] * field.values[cols[0]]))


def apply_operator_fd(spec, field, node=None, stencil=None, disc=None):
    """Discrete residual ``F_h[u]`` at one interior node or at all of them."""
    g = field.grid
    disc = disc or discretize(g, stencil)
    val, _ = _residual(spec, disc, field.values, _frame_mode(spec))
    if node is None:
        return val
    k = _node_index(g, node)
    pos = np.searchsorted(g.interior, k)
    if pos >= g.interior.size or g.interior[pos] != k:
        raise ValueError("node must be interior")
    return float(val[pos])


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-8
    max_iter: int = 200_000
    method: str = "newton"
    max_newton: int = 100

    def __post_init__(self):
        if self.method not in ("newton", "explicit"):
            raise ValueError("method must be 'newton' or 'explicit'")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


def boundary_vector(grid, data):
    """Full nodal vector holding Dirichlet data on the boundary.

    ``data`` is a callable of Cartesian points, an array over all nodes
    (shape ``(N,)`` or ``(Nr, Ntheta)``), an array over ``grid.boundary``,
    or a scalar.
    """
    b = grid.boundary
    u = np.zeros(grid.N)
    if callable(data):
        u[b] = np.asarray(data(grid.points[b]), dtype=float)
        return u
    arr = np.asarray(data, dtype=float)
    if arr.ndim == 0:
        u[b] = float(arr)
    elif arr.size == grid.N:
        u[b] = arr.reshape(grid.N)[b]
    elif arr.shape == (b.size,):
        u[b] = arr
    else:
        raise ValueError(f"boundary data of shape {arr.shape} does not fit the grid")
    if not np.all(np.isfinite(u)):
        raise ValueError("boundary data must be finite")
    return u


def solve_dirichlet(spec, grid, boundary_data, config=None, stencil=None, initial=None):
    """Solve ``F_h[u] = 0`` at interior nodes with Dirichlet data.

    ``method='newton'`` runs a semismooth Newton (policy) iteration with
    backtracking; ``method='explicit'`` runs the damped monotone Jacobi
    update ``u <- u - tau h_loc^2 F_h[u]``.

    Convergence is measured by the scaled residual
    ``max |F_h| h_loc^2 / max |g|``, the relative size of one explicit
    update, so that the criterion does not depend on the scale of the data
    (singular data span many orders of magnitude). The returned field's
    ``report`` holds ``iterations``, ``final_residual`` (scaled),
    ``max_abs_residual`` and ``converged``.
    """
    config = config or SolverConfig()
    mode = _frame_mode(spec)
    disc = discretize(grid, stencil)
    u = boundary_vector(grid, boundary_data)
    I = grid.interior
    if initial is not None:
        u[I] = np.asarray(initial, dtype=float).reshape(grid.N)[I]
    scale = float(np.max(np.abs(u[grid.boundary])))
    weight = disc.h_min / (scale if scale > 0 else 1.0)
    if config.method == "newton":
        u, it, F = _newton(spec, disc, u, mode, config, weight)
    else:
        u, it, F = _explicit(spec, disc, u, mode, config, weight)
    res = float(np.max(np.abs(F) * weight))
    return PolarField(grid, u, u[grid.boundary].copy(), {
        "iterations": int(it), "final_residual": res,
        "max_abs_residual": float(np.max(np.abs(F))), "converged": bool(res <= config.tol),
        "method": config.method})


def _newton(spec, disc, u, mode, config, weight):
    I = disc.grid.interior
    F, J = _residual(spec, disc, u, mode, with_jacobian=True)
    res = float(np.max(np.abs(F) * weight))
    it = 0
    while res > config.tol and it < min(config.max_newton, config.max_iter):
        it += 1
        du = _linear_solve(J[:, I].tocsr(), -F)
        step = 1.0
        while True:
            v = u.copy()
            v[I] += step * du
            Fv, _ = _residual(spec, disc, v, mode)
            rv = float(np.max(np.abs(Fv) * weight))
            if rv < res or step < 1e-6:
                break
            step *= 0.5
        if not rv < res:
            break
        u, res = v, rv
        F, J = _residual(spec, disc, u, mode, with_jacobian=True)
    return u, it, F


def _linear_solve(A, b):
    """GMRES preconditioned by smoothed-aggregation multigrid.

    Wide stencils make sparse LU fill-in prohibitive on fine grids; the
    Newton matrices are (nearly) M-matrices, for which algebraic multigrid is
    an effective preconditioner. Falls back to a direct solve.
    """
    # pyamg estimates spectral radii from np.random start vectors; pin the
    # global stream so repeated runs are bit-identical, then give it back
    state = np.random.get_state()
    try:
        np.random.seed(0)
        ml = pyamg.smoothed_aggregation_solver(A)
    finally:
        np.random.set_state(state)
    x, info = spla.gmres(A, b, M=ml.aspreconditioner(cycle="V"), rtol=1e-13, atol=0.0,
                         restart=200, maxiter=10)
    if info != 0:
        x = spla.spsolve(A.tocsc(), b)
    return x


def _explicit(spec, disc, u, mode, config, weight):
    I = disc.grid.interior
    Lam = spec.ellipticity(2).Lam
    tau = 1.0 / (2.0 * Lam * (1 + disc.stencil.K))
    dt = tau * disc.h_min
    it = 0
    F, _ = _residual(spec, disc, u, mode)
    while it < config.max_iter and np.max(np.abs(F) * weight) > config.tol:
        u = u.copy()
        u[I] -= dt * F
        it += 1
        F, _ = _residual(spec, disc, u, mode)
    return u, it, F


# ---------------------------------------------------------------------------
# diagnostics


def _profile_values(profile, points):
    if isinstance(profile, ProfileSolution):
        return reconstruct(profile, points)
    return np.asarray(profile(points), dtype=float)


def _collar_mask(grid):
    j = np.arange(grid.Ntheta)
    ok = (j >= 2) & (j <= grid.Ntheta - 3)
    return np.tile(ok, grid.Nr)


@dataclass
class RatioTrace:
    r: np.ndarray
    q: np.ndarray
    Q: np.ndarray
    nodes: list

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("r,q,Q\n")
            for a, b, c in zip(self.r, self.q, self.Q):
                fh.write(f"{a:.17g},{b:.17g},{c:.17g}\n")


def ratio_diagnostics(field, profile, r_list):
    """``q(r) = min``, ``Q(r) = max`` of ``u/Psi`` over nodes of ``E(r, 2r)``.

    Nodes within one cell of the lateral rays are excluded (both fields
    vanish there).
    """
    g = field.grid
    rn = g.r_nodes
    keep = _collar_mask(g)
    q, Q, nodes = [], [], []
    for r in r_list:
        if r < g.r0 * (1 - 1e-12) or 2 * r > g.r1 * (1 + 1e-12):
            raise ValueError(f"annulus [{r}, {2 * r}] leaves the grid")
        sel = np.flatnonzero(keep & (rn >= r * (1 - 1e-12)) & (rn <= 2 * r * (1 + 1e-12)))
        if sel.size == 0:
            raise ValueError(f"no grid nodes in the annulus [{r}, {2 * r}]")
        psi = _profile_values(profile, g.points[sel])
        if np.any(psi <= 0):
            raise ValueError("profile must be positive on the sampled nodes")
        ratio = field.values[sel] / psi
        q.append(float(ratio.min()))
        Q.append(float(ratio.max()))
        nodes.append(sel)
    return RatioTrace(np.asarray(r_list, dtype=float), np.array(q), np.array(Q), nodes)


def axis_values(field, t_list):
    """Field along the axis ray, linear in ``log u`` versus ``log r``."""
    g = field.grid
    A = field.as_array()
    th = g.thetas
    j = int(np.searchsorted(th, 0.0))
    if abs(th[j]) < 1e-14:
        col = A[:, j]
    else:
        w = -th[j - 1] / (th[j] - th[j - 1])
        col = (1 - w) * A[:, j - 1] + w * A[:, j]
    t = np.asarray(t_list, dtype=float)
    if np.any(t < g.r0 * (1 - 1e-12)) or np.any(t > g.r1 * (1 + 1e-12)):
        raise ValueError("sample radii must lie in [r0, r1]")
    # only the nodes bracketing the samples need to be positive
    k = np.clip(np.searchsorted(g.radii, t), 1, g.Nr - 1)
    if np.any(col[k] <= 0) or np.any(col[k - 1] <= 0):
        raise ValueError("field must be positive along the axis near the sample radii")
    logc = np.log(np.where(col > 0, col, np.nan))
    lr = np.log(g.radii)
    lt = np.log(t)
    return np.exp(logc[k - 1] + (lt - lr[k - 1]) / (lr[k] - lr[k - 1]) * (logc[k] - logc[k - 1]))


def hopf_exponent(field, t_list):
    """Least-squares slope of ``log u(t e)`` against ``log t`` on the axis."""
    t = np.asarray(t_list, dtype=float)
    if t.size < 2:
        raise ValueError("need at least two radii")
    vals = axis_values(field, t)
    return float(np.polyfit(np.log(t), np.log(vals), 1)[0])


def harnack_ratio(u_field, v_field, subregion=None):
    """``sup(u/v) / inf(u/v)`` over a subregion's nodes.

    ``subregion`` is ``(r_lo, r_hi)`` or a boolean node mask; the lateral
    collar is always excluded.
    """
    g = u_field.grid
    keep = _collar_mask(g) & ~g.boundary_mask
    if subregion is not None:
        if isinstance(subregion, tuple):
            rn = g.r_nodes
            keep &= (rn >= subregion[0]) & (rn <= subregion[1])
        else:
            keep &= np.asarray(subregion, dtype=bool)
    u = u_field.values[keep]
    v = v_field.values[keep]
    if u.size == 0:
        raise ValueError("empty subregion")
    if np.any(u <= 0) or np.any(v <= 0):
        raise ValueError("fields must be positive on the subregion")
    ratio = u / v
    return float(ratio.max() / ratio.min())


@dataclass
class SingularityExperiment:
    mode: str
    alpha_plus: float
    alpha_minus: float
    r: np.ndarray
    q_plus: np.ndarray
    Q_plus: np.ndarray
    q_minus: np.ndarray
    Q_minus: np.ndarray
    field: PolarField

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("r,q_plus,Q_plus,q_minus,Q_minus\n")
            for row in zip(self.r, self.q_plus, self.Q_plus, self.q_minus, self.Q_minus):
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    def to_json(self):
        return {
            "mode": self.mode,
            "alpha_plus": self.alpha_plus,
            "alpha_minus": self.alpha_minus,
            "r": self.r.tolist(),
            "q_plus": self.q_plus.tolist(),
            "Q_plus": self.Q_plus.tolist(),
            "q_minus": self.q_minus.tolist(),
            "Q_minus": self.Q_minus.tolist(),
            "solver": dict(self.field.report),
        }


def _radial_nodes(r0, r1, per_decade):
    return int(round(per_decade * math.log10(r1 / r0))) + 1


def experiment_singularity(spec, cone, mode="singular", Nr=None, Ntheta=65, r0=5e-3,
                           r_list=None, outer=None, inner_value=1.0, config=None,
                           stencil=None, shooting=None):
    """Solve on ``E(cone, r0, 1)`` and trace ``u/Psi+`` and ``u/Psi-``.

    Lateral data vanish. In mode ``singular`` the inner arc carries the
    ``Psi+`` trace; in mode ``bounded`` it carries the constant
    ``inner_value``. The outer arc carries 0 (``outer='zero'``) or the
    trace of ``Psi+`` (singular) or ``Psi-`` (bounded) for ``outer='psi'``;
    the default is ``'zero'`` for singular and ``'psi'`` for bounded runs.
    ``Nr`` defaults to 64 nodes per radial decade and ``r_list`` to six
    geometric radii spanning ``[0.01, 0.1]``, so every ``E(r, 2r)`` stays
    clear of both artificial arcs.
    """
    from .cone_exponents import shoot

    if mode not in ("singular", "bounded"):
        raise ValueError("mode must be 'singular' or 'bounded'")
    if cone.dim != 2:
        raise ValueError("the planar solver needs a 2D cone")
    outer = outer or ("zero" if mode == "singular" else "psi")
    if outer not in ("zero", "psi"):
        raise ValueError("outer must be 'zero' or 'psi'")
    ap, prof_p = shoot(spec, cone, "plus", shooting)
    am, prof_m = shoot(spec, cone, "minus", shooting)
    Nr = Nr or _radial_nodes(r0, 1.0, 64)
    grid = build_grid(r0, 1.0, Nr, Ntheta, cone.theta0)
    inner, outer_idx, left, right = grid.boundary_sets()
    pts = grid.points
    data = np.zeros(grid.N)
    if mode == "singular":
        data[inner] = reconstruct(prof_p, pts[inner])
    else:
        data[inner] = inner_value
    if outer == "psi":
        prof = prof_p if mode == "singular" else prof_m
        data[outer_idx] = reconstruct(prof, pts[outer_idx])
    data[left] = 0.0
    data[right] = 0.0
    u = solve_dirichlet(spec, grid, data, config, stencil)
    if r_list is None:
        r_list = np.geomspace(0.01, 0.1, 6)
    tp = ratio_diagnostics(u, prof_p, r_list)
    tm = ratio_diagnostics(u, prof_m, r_list)
    return SingularityExperiment(mode, ap, am, tp.r, tp.q, tp.Q, tm.q, tm.Q, u)


@dataclass
class HopfExperiment:
    alpha_minus: float
    slope: float
    t: np.ndarray
    values: np.ndarray
    field: PolarField

    def to_json(self):
        return {"alpha_minus": self.alpha_minus, "slope": self.slope, "t": self.t.tolist(),
                "values": self.values.tolist(), "solver": dict(self.field.report)}


def experiment_hopf(spec, cone, Nr=None, Ntheta=65, r0=1e-3, outer_value=1.0, t_list=None,
                    config=None, stencil=None, shooting=None):
    """Growth of a positive solution away from the vertex along the axis.

    Solves on ``E(cone, r0, 1)`` with ``outer_value`` on the outer arc and
    zero elsewhere, then fits ``log u(t e)`` against ``log t``. The lower
    bound ``u(t e) >= c t^(-alpha^-)`` predicts a slope of at most
    ``-alpha^-``, attained when the solution behaves like ``Psi^-``.
    ``t_list`` defaults to radii in ``[10 r0, 0.1]``.
    """
    from .cone_exponents import shoot

    if cone.dim != 2:
        raise ValueError("the planar solver needs a 2D cone")
    am, _ = shoot(spec, cone, "minus", shooting)
    Nr = Nr or _radial_nodes(r0, 1.0, 64)
    grid = build_grid(r0, 1.0, Nr, Ntheta, cone.theta0)
    _, outer_idx, _, _ = grid.boundary_sets()
    data = np.zeros(grid.N)
    data[outer_idx] = outer_value
    u = solve_dirichlet(spec, grid, data, config, stencil)
    t = np.geomspace(10 * r0, 0.1, 9) if t_list is None else np.asarray(t_list, dtype=float)
    return HopfExperiment(am, hopf_exponent(u, t), t, axis_values(u, t), u)
