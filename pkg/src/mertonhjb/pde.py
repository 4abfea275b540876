"""Pointwise residual of the reduced HJB equation and related closed forms."""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DivisionHazardError, DomainError
from .model import CoefficientSet
from .validation import as_float_array, check_wealth

# Below this magnitude the 1/u division in the residual is not trusted.
U_THRESHOLD = 1e-8

# Tolerated asymmetry when validating a Hessian supplied by the caller.
HESS_SYMMETRY_TOL = 1e-12


@dataclass
class PointJet:
    """Value and derivatives of a candidate solution at one point (t, y).

    u: value, du_dt: time derivative, grad: (d,) state gradient,
    hess: (d, d) symmetric state Hessian.
    """

    t: float
    y: np.ndarray
    u: float
    du_dt: float
    grad: np.ndarray
    hess: np.ndarray

    def __post_init__(self):
        self.y = as_float_array(self.y, "y")
        d = self.y.shape[0]
        self.grad = as_float_array(self.grad, "grad", shape=(d,))
        self.hess = as_float_array(self.hess, "hess", shape=(d, d))
        asym = np.max(np.abs(self.hess - self.hess.T))
        if asym > HESS_SYMMETRY_TOL:
            raise ValueError(f"hess must be symmetric within {HESS_SYMMETRY_TOL}, "
                             f"max asymmetry {asym}")


def residual(jet: PointJet, coeffs: CoefficientSet) -> float:
    """Residual of the reduced equation at one point.

    Zero residual at the true solution.  Raises DivisionHazardError when
    |u| < 1e-8 since the quadratic gradient term divides by u.
    """
    u = jet.u
    if abs(u) < U_THRESHOLD:
        raise DivisionHazardError(f"|u| = {abs(u)} below {U_THRESHOLD}; 1/u term untrusted")
    lin = (jet.du_dt
           + float(coeffs.first_order @ jet.grad)
           + float(np.sum(coeffs.second_order * jet.hess))
           + coeffs.zeroth_order * u)
    quad = float(jet.grad @ coeffs.grad_quad @ jet.grad)
    return lin - quad / u


def terminal_value(y) -> float:
    """Reduced terminal condition u(T, y); identically one for U(x) = x^p / p."""
    return 1.0


def value_from_reduced(x: float, u: float, p: float) -> float:
    """Recover the value function V(t, x, y) = (1/p) x^p u(t, y); requires x > 0."""
    x = check_wealth(x)
    if not 0.0 < p < 1.0:
        raise DomainError(f"exponent p must lie in (0, 1), got {p}")
    return (x ** p) * u / p


def constant_oracle(t, c: float, T: float):
    """Closed-form solution u(t) = exp(c (T - t)) of u_t + c u = 0, u(T) = 1."""
    t = np.asarray(t, dtype=float)
    out = np.exp(c * (T - t))
    return float(out) if out.ndim == 0 else out
