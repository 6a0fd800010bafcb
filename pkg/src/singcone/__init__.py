"""Singular homogeneous solutions of fully nonlinear elliptic equations in cones.

Submodules
----------
operators
    Pucci, extremal and Isaacs operators, duals and inversions.
cone_exponents
    The exponents ``alpha+/-`` and profiles by ODE shooting.
bounds_barriers
    Closed-form bounds on ``alpha+`` and the barriers behind them.
fd_viscosity
    A monotone wide-stencil solver on planar sectors and its experiments.
cli
    Command-line front end (``singcone``).
"""

from .bounds_barriers import lower_bound, upper_bound
from .cone_exponents import ConeSpec, ProfileSolution, ShootingConfig, ShootingError, shoot
from .operators import EllipticityParams, OperatorSpec, dual, invert

__version__ = "0.1.0"

__all__ = [
    "ConeSpec",
    "EllipticityParams",
    "OperatorSpec",
    "ProfileSolution",
    "ShootingConfig",
    "ShootingError",
    "dual",
    "invert",
    "lower_bound",
    "shoot",
    "upper_bound",
]
