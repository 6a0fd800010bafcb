import math

import numpy as np
import pytest

from singcone.operators import EllipticityParams, OperatorSpec, dual, invert


def random_sym(rng, n, size=(), scale=1.0):
    G = rng.standard_normal(tuple(size) + (n, n)) * scale
    return 0.5 * (G + np.swapaxes(G, -1, -2))


def isaacs_family(rng, n, I=3, J=2, lam=1.0, Lam=2.0, mu=1.0):
    A = np.empty((I, J, n, n))
    for i in range(I):
        for j in range(J):
            Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
            A[i, j] = (Q * rng.uniform(lam, Lam, n)) @ Q.T
    b = rng.uniform(0, mu, (I, J))
    return OperatorSpec.isaacs(A, b, EllipticityParams(lam, Lam, mu))


def all_specs(n, rng=None):
    """One instance of every operator kind, wrappers included."""
    rng = np.random.default_rng(7) if rng is None else rng
    base = [
        OperatorSpec.laplacian(),
        OperatorSpec.pucci_plus(1.0, 2.0),
        OperatorSpec.pucci_minus(1.0, 2.0),
        OperatorSpec.extremal_plus(0.5, 3.0, 1.5),
        OperatorSpec.extremal_minus(0.5, 3.0, 1.5),
        isaacs_family(rng, n),
        OperatorSpec.isotropic_isaacs([[1.0, 2.0], [1.5, 0.7]], [[0.0, 1.0], [0.5, 0.2]], dim=n,
                                      params=EllipticityParams(0.7, 2.0, 1.0)),
    ]
    return base + [dual(base[4]), invert(base[2])]


# rotationally invariant operators that the shooting method supports
SHOOTABLE = [
    ("laplacian", OperatorSpec.laplacian()),
    ("pucci-plus", OperatorSpec.pucci_plus(1.0, 2.0)),
    ("pucci-minus", OperatorSpec.pucci_minus(1.0, 2.0)),
    ("extremal-plus", OperatorSpec.extremal_plus(1.0, 2.0, 1.0)),
    ("extremal-minus", OperatorSpec.extremal_minus(1.0, 2.0, 1.0)),
    ("isotropic-isaacs", OperatorSpec.isotropic_isaacs(
        [[1.0, 2.0], [1.5, 1.2]], [[0.0, 0.5], [0.3, 0.0]], dim=2,
        params=EllipticityParams(1.0, 2.0, 0.5))),
    ("dual-extremal-minus", dual(OperatorSpec.extremal_minus(1.0, 2.0, 1.0))),
]

# every variant with mu = 0, wrappers included
DRIFT_FREE = [
    ("laplacian", OperatorSpec.laplacian()),
    ("pucci-plus", OperatorSpec.pucci_plus(1.0, 2.0)),
    ("pucci-minus", OperatorSpec.pucci_minus(1.0, 2.0)),
    ("extremal-plus", OperatorSpec.extremal_plus(1.0, 2.0, 0.0)),
    ("extremal-minus", OperatorSpec.extremal_minus(0.5, 3.0, 0.0)),
    ("isotropic-isaacs", OperatorSpec.isotropic_isaacs(
        [[1.0, 2.0], [1.5, 1.2]], None, dim=2, params=EllipticityParams(1.0, 2.0, 0.0))),
    ("dual-pucci-minus", dual(OperatorSpec.pucci_minus(1.0, 2.0))),
]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


HALF_PI = math.pi / 2


# acceptance outcomes, criterion number -> (passed, detail)
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
