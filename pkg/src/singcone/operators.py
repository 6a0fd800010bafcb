"""Uniformly elliptic, positively homogeneous operators F(M, p, x).

Sign convention: F is nonincreasing in M, so the Laplacian is ``-tr M`` and
``F(D^2u, Du, x) >= 0`` means ``u`` is a supersolution.

Every operator evaluates batched inputs: ``M`` of shape ``(..., n, n)``,
``p`` and ``x`` of shape ``(..., n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

VARIANTS = (
    "pucci-plus",
    "pucci-minus",
    "extremal-plus",
    "extremal-minus",
    "laplacian",
    "isaacs",
)

_JACOBI_THRESHOLD = 1e-14
_JACOBI_MAX_SWEEPS = 30
_DEADBAND = 1e-14


# ---------------------------------------------------------------------------
# symmetric eigenvalues


def eig_sym(M, vectors=False):
    """Eigenvalues of symmetric matrices by cyclic Jacobi rotations.

    Parameters
    ----------
    M : array_like, shape (..., n, n)
        Symmetric matrices; only the upper triangle is read.
    vectors : bool
        Also return the orthogonal eigenvector matrices ``Q`` with
        ``M = Q diag(w) Q^T``.

    Returns
    -------
    w : ndarray, shape (..., n)
        Eigenvalues in nondecreasing order.
    Q : ndarray, shape (..., n, n)
        Only when ``vectors`` is true; columns are eigenvectors.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[-1]
    if M.shape[-2] != n:
        raise ValueError("expected square matrices")
    A = np.triu(M) + np.swapaxes(np.triu(M, 1), -1, -2)
    V = np.broadcast_to(np.eye(n), A.shape).copy()
    scale = np.sqrt(np.sum(A * A, axis=(-1, -2)))
    iu = np.triu_indices(n, 1)
    for _ in range(_JACOBI_MAX_SWEEPS):
        off = np.sqrt(np.sum(A[..., iu[0], iu[1]] ** 2, axis=-1))
        if np.all(off <= _JACOBI_THRESHOLD * scale):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[..., p, q]
                app = A[..., p, p]
                aqq = A[..., q, q]
                active = np.abs(apq) > 0.0
                safe = np.where(active, apq, 1.0)
                # a tiny apq overflows theta to inf, which correctly gives t = 0
                with np.errstate(over="ignore", divide="ignore"):
                    theta = (aqq - app) / (2.0 * safe)
                    t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
                t = np.where(theta == 0.0, 1.0, t)
                t = np.where(active, t, 0.0)
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                c1 = c[..., None]
                s1 = s[..., None]
                # A <- J^T A J with the (p, q) plane rotation J
                colp = A[..., :, p].copy()
                colq = A[..., :, q].copy()
                A[..., :, p] = c1 * colp - s1 * colq
                A[..., :, q] = s1 * colp + c1 * colq
                rowp = A[..., p, :].copy()
                rowq = A[..., q, :].copy()
                A[..., p, :] = c1 * rowp - s1 * rowq
                A[..., q, :] = s1 * rowp + c1 * rowq
                A[..., p, q] = 0.0
                A[..., q, p] = 0.0
                vp = V[..., :, p].copy()
                vq = V[..., :, q].copy()
                V[..., :, p] = c1 * vp - s1 * vq
                V[..., :, q] = s1 * vp + c1 * vq
    w = np.diagonal(A, axis1=-2, axis2=-1).copy()
    order = np.argsort(w, axis=-1)
    w = np.take_along_axis(w, order, axis=-1)
    if not vectors:
        return w
    Q = np.take_along_axis(V, order[..., None, :], axis=-1)
    return w, Q


# ---------------------------------------------------------------------------
# Pucci operators


@dataclass(frozen=True)
class EllipticityParams:
    """Ellipticity constants ``0 < lam <= Lam`` and drift bound ``mu >= 0``."""

    lam: float = 1.0
    Lam: float = 1.0
    mu: float = 0.0

    def __post_init__(self):
        if not (self.lam > 0 and self.Lam >= self.lam and self.mu >= 0):
            raise ValueError(
                f"need 0 < lambda <= Lambda and mu >= 0, got "
                f"({self.lam}, {self.Lam}, {self.mu})"
            )


def _positive_negative_sums(eigs, axis=-1):
    eigs = np.asarray(eigs, dtype=float)
    band = _DEADBAND * np.max(np.abs(eigs), axis=axis, keepdims=True)
    pos = np.where(eigs > band, eigs, 0.0).sum(axis=axis)
    neg = np.where(eigs < -band, eigs, 0.0).sum(axis=axis)
    return pos, neg


def pucci_plus_eigs(eigs, params):
    pos, neg = _positive_negative_sums(eigs)
    return -params.lam * pos - params.Lam * neg


def pucci_minus_eigs(eigs, params):
    pos, neg = _positive_negative_sums(eigs)
    return -params.Lam * pos - params.lam * neg


def pucci_plus(M, params):
    """Maximal Pucci operator ``sup_{lam I <= A <= Lam I} -tr(AM)``."""
    return pucci_plus_eigs(eig_sym(M), params)


def pucci_minus(M, params):
    """Minimal Pucci operator ``inf_{lam I <= A <= Lam I} -tr(AM)``."""
    return pucci_minus_eigs(eig_sym(M), params)


def random_orthogonal(rng, n, size=()):
    G = rng.standard_normal(tuple(size) + (n, n))
    Q, R = np.linalg.qr(G)
    d = np.sign(np.diagonal(R, axis1=-2, axis2=-1))
    d = np.where(d == 0, 1.0, d)
    return Q * d[..., None, :]


def pucci_oracle(M, params, num_samples, rng=None):
    """Sampled lower estimate of the maximal Pucci operator.

    Takes the max of ``-tr(AM)`` over ``num_samples`` random admissible
    ``A`` together with the eigenframe-aligned maximiser, so the result
    never exceeds :func:`pucci_plus` beyond rounding and equals it when
    ``num_samples == 0``.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[-1]
    rng = np.random.default_rng(0) if rng is None else rng
    w, Q = eig_sym(M, vectors=True)
    a = np.where(w > 0, params.lam, params.Lam)
    A_opt = (Q * a[None, :]) @ Q.T
    best = -np.trace(A_opt @ M)
    if num_samples > 0:
        U = random_orthogonal(rng, n, (num_samples,))
        d = rng.uniform(params.lam, params.Lam, size=(num_samples, n))
        A = (U * d[:, None, :]) @ np.swapaxes(U, -1, -2)
        vals = -np.einsum("kij,ji->k", A, M)
        best = max(best, float(vals.max()))
    return float(best)


# ---------------------------------------------------------------------------
# operator specs


@dataclass(frozen=True)
class Jet:
    """Argument triple ``(M, p, x)`` of an operator, ``|x| > 0``."""

    M: np.ndarray
    p: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        M = np.asarray(self.M, dtype=float)
        M = np.triu(M) + np.triu(M, 1).T
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        n = M.shape[0]
        if M.shape != (n, n) or self.p.shape != (n,) or self.x.shape != (n,):
            raise ValueError("jet components have inconsistent dimensions")
        if not 2 <= n <= 8:
            raise ValueError(f"dimension {n} outside the supported range 2..8")
        if np.linalg.norm(self.x) == 0:
            raise ValueError("jet point must be nonzero")

    @property
    def dim(self):
        return self.M.shape[0]


def _check_batch(M, p, x):
    M = np.asarray(M, dtype=float)
    p = np.asarray(p, dtype=float)
    x = np.asarray(x, dtype=float)
    n = M.shape[-1]
    if M.shape[-2] != n or p.shape[-1] != n or x.shape[-1] != n:
        raise ValueError(
            f"dimension mismatch: M {M.shape}, p {p.shape}, x {x.shape}"
        )
    return M, p, x


class Operator:
    """Common interface of all operators."""

    def __call__(self, M, p, x):
        M, p, x = _check_batch(M, p, x)
        return self._eval(M, p, x)

    def ellipticity(self, n):
        """Constants for which the structure condition holds in dimension n."""
        raise NotImplementedError

    @property
    def rotationally_invariant(self):
        return True

    def spectral(self, eigs, drift):
        """Value from Hessian eigenvalues and ``|p|/|x|``.

        Only defined for operators depending on ``(M, p, x)`` through the
        spectrum of ``M`` and ``|p|/|x|``.
        """
        raise NotImplementedError(f"{self!r} has no spectral form")

    def spectral_linearization(self, eigs, drift):
        """Return ``(value, dF/deigs, dF/ddrift)`` picking one active branch."""
        raise NotImplementedError(f"{self!r} has no spectral form")

    def to_json(self):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class OperatorSpec(Operator):
    """A named base operator.

    ``pucci-plus/minus`` ignore ``mu``; ``extremal-plus/minus`` add
    ``+/- mu |p|/|x|``; ``laplacian`` is ``-tr M``; ``isaacs`` is
    ``min_i max_j [-tr(A_ij M) + b_ij |p|/|x|]`` for an explicit family.
    """

    variant: str
    params: EllipticityParams = field(default_factory=EllipticityParams)
    A: np.ndarray | None = None
    b: np.ndarray | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown operator variant {self.variant!r}")
        if self.variant == "laplacian":
            object.__setattr__(self, "params", EllipticityParams(1.0, 1.0, 0.0))
        if self.variant != "isaacs":
            return
        if self.A is None:
            raise ValueError("isaacs operator needs a diffusion family A")
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 4 or A.shape[-1] != A.shape[-2]:
            raise ValueError("isaacs family A must have shape (I, J, n, n)")
        A = 0.5 * (A + np.swapaxes(A, -1, -2))
        b = np.zeros(A.shape[:2]) if self.b is None else np.asarray(self.b, dtype=float)
        if b.shape != A.shape[:2]:
            raise ValueError("isaacs drift b must have shape (I, J)")
        if np.any(b < 0):
            raise ValueError("isaacs drift coefficients must be nonnegative")
        w = eig_sym(A)
        lam, Lam, mu = self.params.lam, self.params.Lam, self.params.mu
        if np.any(w < lam - 1e-12) or np.any(w > Lam + 1e-12):
            raise ValueError("isaacs diffusion matrices leave [lambda I, Lambda I]")
        if np.any(b > mu + 1e-12):
            raise ValueError("isaacs drift coefficients exceed mu")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @classmethod
    def pucci_plus(cls, lam, Lam):
        return cls("pucci-plus", EllipticityParams(lam, Lam, 0.0))

    @classmethod
    def pucci_minus(cls, lam, Lam):
        return cls("pucci-minus", EllipticityParams(lam, Lam, 0.0))

    @classmethod
    def extremal_plus(cls, lam, Lam, mu):
        return cls("extremal-plus", EllipticityParams(lam, Lam, mu))

    @classmethod
    def extremal_minus(cls, lam, Lam, mu):
        return cls("extremal-minus", EllipticityParams(lam, Lam, mu))

    @classmethod
    def laplacian(cls):
        return cls("laplacian")

    @classmethod
    def isaacs(cls, A, b=None, params=None):
        """Isaacs family; constants default to the tightest admissible ones."""
        A = np.asarray(A, dtype=float)
        if params is None:
            w = eig_sym(0.5 * (A + np.swapaxes(A, -1, -2)))
            mu = 0.0 if b is None else float(np.max(b))
            params = EllipticityParams(float(w.min()), float(w.max()), mu)
        return cls("isaacs", params, A, None if b is None else np.asarray(b, float))

    @classmethod
    def isotropic_isaacs(cls, a, b=None, dim=2, params=None):
        """Isaacs family with scalar diffusions ``A_ij = a_ij I``."""
        a = np.asarray(a, dtype=float)
        A = a[..., None, None] * np.eye(dim)
        return cls.isaacs(A, b, params)

    @property
    def dim(self):
        return None if self.A is None else self.A.shape[-1]

    def ellipticity(self, n):
        return self.params

    @property
    def rotationally_invariant(self):
        if self.variant != "isaacs":
            return True
        n = self.A.shape[-1]
        diag = np.trace(self.A, axis1=-2, axis2=-1) / n
        return bool(np.allclose(self.A, diag[..., None, None] * np.eye(n), atol=1e-14))

    def isotropic_coefficients(self):
        """Scalars ``a_ij`` with ``A_ij = a_ij I`` (isotropic families only)."""
        if not self.rotationally_invariant:
            raise ValueError("isaacs family is not rotationally invariant")
        n = self.A.shape[-1]
        return np.trace(self.A, axis1=-2, axis2=-1) / n

    def _eval(self, M, p, x):
        v = self.variant
        if v == "laplacian":
            return -np.trace(M, axis1=-2, axis2=-1)
        drift = np.linalg.norm(p, axis=-1) / np.linalg.norm(x, axis=-1)
        if v == "isaacs":
            if self.A.shape[-1] != M.shape[-1]:
                raise ValueError("dimension mismatch between family and jet")
            lin = -np.einsum("ijkl,...lk->...ij", self.A, M)
            lin = lin + self.b * drift[..., None, None]
            return lin.max(axis=-1).min(axis=-1)
        return self.spectral(eig_sym(M), drift)

    def spectral(self, eigs, drift):
        eigs = np.asarray(eigs, dtype=float)
        v = self.variant
        P = self.params
        if v == "laplacian":
            return -eigs.sum(axis=-1)
        if v == "pucci-plus":
            return pucci_plus_eigs(eigs, P)
        if v == "pucci-minus":
            return pucci_minus_eigs(eigs, P)
        if v == "extremal-plus":
            return pucci_plus_eigs(eigs, P) + P.mu * drift
        if v == "extremal-minus":
            return pucci_minus_eigs(eigs, P) - P.mu * drift
        a = self.isotropic_coefficients()
        tr = eigs.sum(axis=-1)
        lin = -a * tr[..., None, None] + self.b * np.asarray(drift)[..., None, None]
        return lin.max(axis=-1).min(axis=-1)

    def spectral_linearization(self, eigs, drift):
        eigs = np.asarray(eigs, dtype=float)
        drift = np.asarray(drift, dtype=float)
        v = self.variant
        P = self.params
        value = self.spectral(eigs, drift)
        if v == "laplacian":
            return value, -np.ones_like(eigs), np.zeros_like(drift)
        if v in ("pucci-plus", "extremal-plus"):
            de = np.where(eigs > 0, -P.lam, -P.Lam)
            dd = np.full_like(drift, P.mu if v == "extremal-plus" else 0.0)
            return value, de, dd
        if v in ("pucci-minus", "extremal-minus"):
            de = np.where(eigs > 0, -P.Lam, -P.lam)
            dd = np.full_like(drift, -P.mu if v == "extremal-minus" else 0.0)
            return value, de, dd
        a = self.isotropic_coefficients()
        tr = eigs.sum(axis=-1)
        lin = -a * tr[..., None, None] + self.b * drift[..., None, None]
        j = lin.argmax(axis=-1)
        inner = np.take_along_axis(lin, j[..., None], axis=-1)[..., 0]
        i = inner.argmin(axis=-1)
        jj = np.take_along_axis(j, i[..., None], axis=-1)[..., 0]
        a_act = a[i, jj]
        b_act = self.b[i, jj]
        de = -a_act[..., None] * np.ones_like(eigs)
        return value, de, b_act

    def to_json(self):
        if self.variant == "isaacs":
            return {
                "variant": "isaacs",
                "A": self.A.tolist(),
                "b": self.b.tolist(),
                "lambda": self.params.lam,
                "Lambda": self.params.Lam,
                "mu": self.params.mu,
            }
        return {
            "variant": self.variant,
            "lambda": self.params.lam,
            "Lambda": self.params.Lam,
            "mu": self.params.mu,
        }

    def __repr__(self):
        P = self.params
        return f"OperatorSpec({self.variant}, lam={P.lam}, Lam={P.Lam}, mu={P.mu})"


@dataclass(frozen=True, eq=False)
class DualOperator(Operator):
    """``F~(M, p, x) = -F(-M, -p, x)``."""

    base: Operator

    def _eval(self, M, p, x):
        return -self.base._eval(-M, -p, x)

    def ellipticity(self, n):
        return self.base.ellipticity(n)

    @property
    def rotationally_invariant(self):
        return self.base.rotationally_invariant

    def spectral(self, eigs, drift):
        return -self.base.spectral(-np.asarray(eigs)[..., ::-1], drift)

    def spectral_linearization(self, eigs, drift):
        val, de, dd = self.base.spectral_linearization(-np.asarray(eigs)[..., ::-1], drift)
        return -val, de[..., ::-1], -dd

    def to_json(self):
        return {"variant": "dual", "of": self.base.to_json()}

    def __repr__(self):
        return f"DualOperator({self.base!r})"


def reflection(y):
    """``J(y) = I - 2 |y|^-2 y y^T``, batched over leading axes."""
    y = np.asarray(y, dtype=float)
    n = y.shape[-1]
    r2 = np.sum(y * y, axis=-1)
    if np.any(r2 == 0):
        raise ValueError("inversion is undefined at the origin")
    return np.eye(n) - 2.0 * y[..., :, None] * y[..., None, :] / r2[..., None, None]


def _symtens(a, b):
    return 0.5 * (a[..., :, None] * b[..., None, :] + b[..., :, None] * a[..., None, :])


def inverted_arguments(M, p, y):
    """Map ``(M, p, y)`` to the arguments at which ``F`` is called by ``F*``."""
    M, p, y = _check_batch(M, p, y)
    J = reflection(y)
    r2 = np.sum(y * y, axis=-1)[..., None, None]
    Jp = np.einsum("...ij,...j->...i", J, p)
    yp = np.sum(y * p, axis=-1)[..., None, None]
    N = J @ M @ J - 2.0 / r2 * (yp * J + _symtens(y, Jp) + _symtens(y, p))
    return N, Jp


@dataclass(frozen=True, eq=False)
class InvertedOperator(Operator):
    """Operator transported by the inversion ``x -> x/|x|^2``."""

    base: Operator

    def _eval(self, M, p, y):
        N, Jp = inverted_arguments(M, p, y)
        return self.base._eval(N, Jp, y)

    def ellipticity(self, n):
        P = self.base.ellipticity(n)
        return EllipticityParams(P.lam, P.Lam, 2.0 * ((n - 1) * P.Lam - P.lam) + P.mu)

    @property
    def rotationally_invariant(self):
        return self.base.rotationally_invariant

    def to_json(self):
        return {"variant": "inverted", "of": self.base.to_json()}

    def __repr__(self):
        return f"InvertedOperator({self.base!r})"


def dual(spec):
    """Dual operator ``-F(-M, -p, x)`` as a wrapper."""
    return DualOperator(spec)


def invert(spec):
    """Inverted operator ``F*`` as a wrapper; ``invert(invert(F))`` equals F."""
    return InvertedOperator(spec)


def evaluate(spec, jet):
    """Value of ``spec`` at a single :class:`Jet`."""
    if getattr(spec, "dim", None) not in (None, jet.dim):
        raise ValueError("dimension mismatch between operator and jet")
    return float(spec(jet.M, jet.p, jet.x))


# ---------------------------------------------------------------------------
# inverted functions


def _fd_derivatives(u, z, h):
    n = z.size
    E = np.eye(n) * h
    g = np.empty(n)
    H = np.empty((n, n))
    u0 = u(z)
    for i in range(n):
        up, um = u(z + E[i]), u(z - E[i])
        g[i] = (up - um) / (2 * h)
        H[i, i] = (up - 2 * u0 + um) / h**2
        for j in range(i + 1, n):
            d = (u(z + E[i] + E[j]) - u(z + E[i] - E[j]) - u(z - E[i] + E[j])
                 + u(z - E[i] - E[j])) / (4 * h * h)
            H[i, j] = H[j, i] = d
    return H, g


def invert_function_residual(spec, u: Callable, y, h=1e-4):
    """Compare ``F*`` on ``u*(y) = u(y/|y|^2)`` with ``|y|^-4 F`` on ``u``.

    Derivatives are taken by central finite differences with step ``h`` at
    ``y`` (for ``u*``) and at ``x = y/|y|^2`` (for ``u``).

    Returns
    -------
    (float, float)
        ``F*(D^2u*, Du*, y)`` and ``|y|^-4 F(D^2u, Du, x)``.
    """
    y = np.asarray(y, dtype=float)
    ry = np.linalg.norm(y)
    x = y / ry**2
    if h >= 0.5 * min(ry, np.linalg.norm(x)):
        raise ValueError("finite-difference step reaches the singularity at 0")
    ustar = lambda z: u(z / np.dot(z, z))  # noqa: E731
    Hs, gs = _fd_derivatives(ustar, y, h)
    H, g = _fd_derivatives(u, x, h)
    lhs = float(invert(spec)(Hs, gs, y))
    rhs = float(spec(H, g, x)) / ry**4
    return lhs, rhs


# ---------------------------------------------------------------------------
# serialization


def spec_from_json(obj):
    """Inverse of ``to_json``; accepts ``lambda``/``Lambda``/``mu`` keys."""
    variant = obj["variant"]
    if variant == "dual":
        return dual(spec_from_json(obj["of"]))
    if variant == "inverted":
        return invert(spec_from_json(obj["of"]))
    if variant == "laplacian":
        return OperatorSpec.laplacian()
    if variant == "isaacs":
        b = obj.get("b")
        if "lambda" in obj:
            params = EllipticityParams(
                float(obj["lambda"]), float(obj["Lambda"]), float(obj.get("mu", 0.0))
            )
        else:
            params = None
        return OperatorSpec.isaacs(np.asarray(obj["A"], float),
                                   None if b is None else np.asarray(b, float), params)
    params = EllipticityParams(
        float(obj.get("lambda", 1.0)), float(obj.get("Lambda", 1.0)), float(obj.get("mu", 0.0))
    )
    return OperatorSpec(variant, params)
