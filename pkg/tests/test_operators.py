import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import all_specs, random_sym
from oracles import pucci_minus_dense, pucci_plus_dense
from singcone.operators import (
    EllipticityParams,
    Jet,
    OperatorSpec,
    dual,
    eig_sym,
    evaluate,
    invert,
    invert_function_residual,
    pucci_minus,
    pucci_oracle,
    pucci_plus,
    random_orthogonal,
    reflection,
    spec_from_json,
)

P12 = EllipticityParams(1.0, 2.0)


def _faddeev_leverrier_roots(M):
    """Eigenvalues as roots of the characteristic polynomial.

    Coefficients from the Faddeev-LeVerrier recursion, roots by numpy.
    """
    n = M.shape[0]
    c = [1.0]
    Mk = np.zeros_like(M)
    for k in range(1, n + 1):
        Mk = M @ Mk + c[-1] * np.eye(n)
        c.append(-np.trace(M @ Mk) / k)
    return np.sort(np.roots(c).real)


# ---------------------------------------------------------------------------
# eigenvalues


def test_eig_sym_diagonal_and_identity():
    assert np.array_equal(eig_sym(np.diag([1.0, -1.0])), [-1.0, 1.0])
    assert np.array_equal(eig_sym(np.eye(3)), [1.0, 1.0, 1.0])


@pytest.mark.parametrize("n", [2, 3, 4])
def test_eig_sym_matches_characteristic_polynomial(rng, n):
    for _ in range(20):
        M = random_sym(rng, n)
        assert np.allclose(eig_sym(M), _faddeev_leverrier_roots(M), atol=1e-8)


def test_eig_sym_vectors_reconstruct(rng):
    M = random_sym(rng, 5, (50,))
    w, Q = eig_sym(M, vectors=True)
    R = np.einsum("kij,kj,klj->kil", Q, w, Q)
    assert np.allclose(R, M, atol=1e-12)
    assert np.allclose(np.swapaxes(Q, -1, -2) @ Q, np.eye(5), atol=1e-12)
    assert np.allclose(w, np.linalg.eigvalsh(M), atol=1e-12)


def test_eig_sym_rejects_non_square():
    with pytest.raises(ValueError):
        eig_sym(np.zeros((2, 3)))


# ---------------------------------------------------------------------------
# Pucci operators


def test_pucci_worked_example():
    M = np.diag([1.0, -1.0])
    assert pucci_plus(M, P12) == 1.0
    assert pucci_minus(M, P12) == -1.0
    assert pucci_plus(np.zeros((3, 3)), P12) == 0.0


def test_pucci_against_dense_eigensolver(rng):
    M = random_sym(rng, 4, (200,))
    for k in range(200):
        assert pucci_plus(M[k], P12) == pytest.approx(pucci_plus_dense(M[k], 1, 2), abs=1e-12)
        assert pucci_minus(M[k], P12) == pytest.approx(pucci_minus_dense(M[k], 1, 2), abs=1e-12)


def test_params_validation():
    for bad in [(0, 1, 0), (2, 1, 0), (1, 2, -1)]:
        with pytest.raises(ValueError):
            EllipticityParams(*bad)


def test_oracle_aligned_and_bounded(rng):
    assert pucci_oracle(np.diag([1.0, -1.0]), P12, 0) == pytest.approx(1.0, abs=1e-15)
    for _ in range(20):
        M = random_sym(rng, 3)
        top = pucci_plus(M, P12)
        assert pucci_oracle(M, P12, 0) == pytest.approx(top, abs=1e-12)
        assert pucci_oracle(M, P12, 10_000, rng) <= top + 1e-12


def test_oracle_samples_alone_stay_below(rng):
    # purely random admissible A never beat the closed form
    M = random_sym(rng, 3, (1000,))
    U = random_orthogonal(rng, 3, (1000,))
    d = rng.uniform(1, 2, (1000, 3))
    A = (U * d[:, None, :]) @ np.swapaxes(U, -1, -2)
    vals = -np.einsum("kij,kji->k", A, M)
    assert np.all(vals <= pucci_plus(M, P12) + 1e-12)
    assert np.all(vals >= pucci_minus(M, P12) - 1e-12)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, (3, 3), elements=st.floats(-1e3, 1e3)),
       st.floats(0.1, 5), st.floats(1, 4))
def test_pucci_order_and_homogeneity(M, lam, ratio):
    M = 0.5 * (M + M.T)
    P = EllipticityParams(lam, lam * ratio)
    scale = 1e-9 * (1 + np.abs(M).max())
    assert pucci_minus(M, P) <= pucci_plus(M, P) + scale
    assert pucci_plus(2.5 * M, P) == pytest.approx(2.5 * pucci_plus(M, P), abs=scale)


# ---------------------------------------------------------------------------
# evaluation examples


def test_eval_examples():
    e = OperatorSpec.extremal_minus(1, 2, 3)
    assert evaluate(e, Jet(np.zeros((2, 2)), [0, 1], [2, 0])) == pytest.approx(-1.5)
    assert evaluate(OperatorSpec.laplacian(), Jet(np.diag([2.0, 5.0]), [0, 0], [1, 0])) == -7
    for spec in all_specs(2):
        assert evaluate(spec, Jet(np.zeros((2, 2)), [0, 0], [1, 1])) == 0.0


def test_jet_validation():
    with pytest.raises(ValueError):
        Jet(np.eye(2), [0, 0], [0, 0])
    with pytest.raises(ValueError):
        Jet(np.eye(2), [0, 0, 0], [1, 0])
    with pytest.raises(ValueError):
        evaluate(all_specs(3)[5], Jet(np.eye(2), [0, 0], [1, 0]))


def test_isaacs_is_min_max():
    A = np.array([[np.eye(2), 2 * np.eye(2)], [1.5 * np.eye(2), 1.2 * np.eye(2)]])
    b = np.array([[0.0, 0.5], [0.3, 0.0]])
    spec = OperatorSpec.isaacs(A, b, EllipticityParams(1, 2, 0.5))
    M = np.diag([1.0, -3.0])
    p = np.array([3.0, 4.0])
    x = np.array([0.0, 2.0])
    tr = np.trace(M)
    lin = -np.array([[1, 2], [1.5, 1.2]]) * tr + b * 2.5
    assert evaluate(spec, Jet(M, p, x)) == pytest.approx(lin.max(axis=1).min())


def test_isaacs_validation(rng):
    with pytest.raises(ValueError):
        OperatorSpec.isaacs(np.ones((1, 1, 2, 2)) * 5, None, EllipticityParams(1, 2))
    with pytest.raises(ValueError):
        OperatorSpec("isaacs")
    with pytest.raises(ValueError):
        OperatorSpec("frobnicate")


# ---------------------------------------------------------------------------
# structural properties over random jets


def _jets(rng, n, k):
    M = random_sym(rng, n, (k,))
    p = rng.standard_normal((k, n))
    x = rng.standard_normal((k, n))
    return M, p, x


def test_inequality_chain(rng):
    k = 100_000
    M = random_sym(rng, 3, (k,))
    N = random_sym(rng, 3, (k,))
    P = EllipticityParams(0.5, 3.0)
    pm = lambda X: pucci_minus(X, P)  # noqa: E731
    pp = lambda X: pucci_plus(X, P)  # noqa: E731
    chain = [pm(M) + pm(N), pm(M + N), pm(M) + pp(N), pp(M + N), pp(M) + pp(N)]
    for a, b in zip(chain, chain[1:]):
        assert np.min(b - a) >= -1e-12


@pytest.mark.parametrize("n", [2, 3])
def test_rotational_invariance(rng, n):
    M = random_sym(rng, n, (100_000,))
    U = random_orthogonal(rng, n, (100_000,))
    R = np.swapaxes(U, -1, -2) @ M @ U
    for f in (pucci_plus, pucci_minus):
        assert np.max(np.abs(f(R, P12) - f(M, P12))) <= 1e-10


@pytest.mark.parametrize("n", [2, 3])
def test_degenerate_ellipticity(rng, n):
    for spec in all_specs(n):
        k = 100_000 if not hasattr(spec, "base") else 100
        M, p, x = _jets(rng, n, k)
        G = rng.standard_normal((k, n, n))
        N = M + G @ np.swapaxes(G, -1, -2)  # N >= M
        assert np.min(spec(M, p, x) - spec(N, p, x)) >= -1e-12


@pytest.mark.parametrize("n", [2, 3])
def test_positive_homogeneity_and_dilation(rng, n):
    for spec in all_specs(n):
        M, p, x = _jets(rng, n, 100)
        base = spec(M, p, x)
        for t in (0.0, 0.5, 2.0, 10.0):
            assert np.max(np.abs(spec(t * M, t * p, x) - t * base)) <= 1e-10 * (1 + abs(t))
        r = 3.0
        if not hasattr(spec, "base") or not isinstance(spec, type(invert(spec))):
            lhs = spec(r * r * M, r * p, x)
            rhs = r * r * spec(M, p, r * x)
            assert np.max(np.abs(lhs - rhs)) <= 1e-9 * (1 + np.abs(rhs).max())


@pytest.mark.parametrize("n", [2, 3])
def test_ellipticity_sandwich(rng, n):
    for spec in all_specs(n):
        k = 100_000 if not hasattr(spec, "base") else 100
        P = spec.ellipticity(n)
        M, p, x = _jets(rng, n, k)
        N, q, _ = _jets(rng, n, k)
        d = spec(M, p, x) - spec(N, q, x)
        drift = P.mu * np.linalg.norm(p - q, axis=-1) / np.linalg.norm(x, axis=-1)
        assert np.min(d - (pucci_minus(M - N, P) - drift)) >= -1e-12 * (1 + np.abs(d).max())
        assert np.min(pucci_plus(M - N, P) + drift - d) >= -1e-12 * (1 + np.abs(d).max())


# ---------------------------------------------------------------------------
# dual and inversion


def test_dual_examples(rng):
    M = np.diag([1.0, -1.0])
    z = np.zeros(2)
    x = np.array([1.0, 0.0])
    assert dual(OperatorSpec.pucci_minus(1, 2))(M, z, x) == 1.0
    M, p, x = _jets(rng, 3, 100)
    lap = OperatorSpec.laplacian()
    assert np.allclose(dual(lap)(M, p, x), lap(M, p, x), atol=1e-12)
    em, ep = OperatorSpec.extremal_minus(1, 2, 0.7), OperatorSpec.extremal_plus(1, 2, 0.7)
    assert np.allclose(dual(em)(M, p, x), ep(M, p, x), atol=1e-12)


@pytest.mark.parametrize("n", [2, 3])
def test_dual_involution(rng, n):
    for spec in all_specs(n):
        k = 100_000 if not hasattr(spec, "base") else 100
        M, p, x = _jets(rng, n, k)
        assert np.max(np.abs(dual(dual(spec))(M, p, x) - spec(M, p, x))) <= 1e-10
        assert np.max(np.abs(dual(spec)(M, p, x) + spec(-M, -p, x))) == 0.0


@pytest.mark.parametrize("n", [2, 3, 4])
def test_double_inversion(rng, n):
    for spec in all_specs(n):
        M, p, x = _jets(rng, n, 100)
        a = invert(invert(spec))(M, p, x)
        b = spec(M, p, x)
        assert np.max(np.abs(a - b)) <= 1e-10 * (1 + np.abs(b).max())


def test_reflection():
    e1, e2 = np.array([1.0, 0, 0]), np.array([0, 1.0, 0])
    J = reflection(e1)
    assert np.allclose(J @ e1, -e1) and np.allclose(J @ e2, e2)
    y = np.array([0.3, -1.2, 2.0])
    J = reflection(y)
    assert np.allclose(J, J.T) and np.allclose(J @ J, np.eye(3))
    with pytest.raises(ValueError):
        reflection(np.zeros(3))


@pytest.mark.parametrize("n", [2, 3, 4])
def test_inverted_laplacian_formula(rng, n):
    M, p, y = _jets(rng, n, 50)
    got = invert(OperatorSpec.laplacian())(M, p, y)
    # (-Lap)* u = -Lap u + 2(n-2)|y|^-2 y.Du (with the -tr convention)
    want = -np.trace(M, axis1=-2, axis2=-1) + 2 * (n - 2) * np.sum(y * p, -1) / np.sum(y * y, -1)
    assert np.allclose(got, want, atol=1e-10)


def test_inverted_ellipticity_constants():
    P = invert(OperatorSpec.extremal_minus(1, 2, 0.5)).ellipticity(3)
    assert (P.lam, P.Lam, P.mu) == (1.0, 2.0, 2 * (2 * 2 - 1) + 0.5)


def test_invert_function_residual():
    lap = OperatorSpec.laplacian()
    lhs, rhs = invert_function_residual(lap, lambda z: z[-1], np.array([0.4, 0.9, -0.3]))
    assert abs(lhs) < 1e-6 and abs(rhs) < 1e-6
    y = np.array([0.7, -0.5, 1.1])
    quad = lambda z: z[0] ** 2 + 2 * z[1] * z[2] - 3 * z[2] ** 2  # noqa: E731
    lhs, rhs = invert_function_residual(lap, quad, y)
    assert rhs == pytest.approx(-(2 - 6) / np.dot(y, y) ** 2, rel=1e-6)
    assert lhs == pytest.approx(rhs, rel=1e-6)
    pm = OperatorSpec.pucci_minus(1, 2)
    lhs, rhs = invert_function_residual(pm, lambda z: np.dot(z, z), y)
    assert lhs == pytest.approx(rhs, abs=1e-6)
    with pytest.raises(ValueError):
        invert_function_residual(lap, quad, np.array([1e-4, 0, 0]))


def test_json_round_trip(rng):
    for spec in all_specs(3):
        again = spec_from_json(spec.to_json())
        M, p, x = _jets(rng, 3, 20)
        assert np.array_equal(again(M, p, x), spec(M, p, x))
    obj = {"variant": "pucci-minus", "lambda": 1.0, "Lambda": 2.0, "mu": 0.0}
    assert spec_from_json(obj).to_json() == obj


def test_dilation_invariance_explicit():
    spec = OperatorSpec.extremal_plus(1, 2, 3)
    M = np.diag([1.0, -2.0])
    p = np.array([1.0, 1.0])
    x = np.array([0.5, 0.5])
    r = 4.0
    assert spec(r * r * M, r * p, x) == pytest.approx(r * r * spec(M, p, r * x))
    assert math.isfinite(float(spec(M, p, x)))
