"""Optimal portfolio weights from a solved value surface.

Any object exposing ``value(t, y)`` and ``gradient(t, y)`` for the reduced
solution u works as a surface: a trained network supplies both in closed
form, a finite-difference cube supplies them by bilinear interpolation and
central differences (one-sided at lattice edges).

The optimal weight under power utility is

    pi = 1/(1 - p) (Sigma^-1 mu + Sigma^-1 Upsilon grad_y(u) / u),

equivalently, in terms of the unreduced value function V,

    pi = -1/(x V_xx) Sigma^-1 (mu V_x + Upsilon grad_y(V_x)).
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import DivisionHazardError, DomainError
from .fdm import SolutionCube
from .model import MarketModel
from .net import Network
from .pde import U_THRESHOLD
from .validation import check_state, check_wealth


class NetworkSurface:
    """Closed-form surface from a trained network."""

    def __init__(self, net: Network):
        self.net = net

    def value(self, t, y):
        return self.net.forward(t, y)

    def gradient(self, t, y):
        _, dy = self.net.input_gradient(t, y)
        return dy


class CubeSurface:
    """Interpolating surface over a finite-difference solution cube.

    Values are bilinear in (y1, y2); nodal gradients are central differences
    with one-sided differences on the lattice edge, interpolated bilinearly.
    Queries between time levels interpolate linearly in t.
    """

    def __init__(self, cube: SolutionCube):
        self.cube = cube
        g = cube.grid
        self._grad1 = np.empty_like(cube.values)
        self._grad2 = np.empty_like(cube.values)
        for n in range(g.nt + 1):
            d1, d2 = np.gradient(cube.values[n], g.dy1, g.dy2, edge_order=1)
            self._grad1[n] = d1
            self._grad2[n] = d2

    def _time_weights(self, t):
        g = self.cube.grid
        pos = (t - g.domain.t_lo) / g.dt
        n0 = int(np.clip(np.floor(pos), 0, g.nt - 1))
        w = pos - n0
        if abs(w) < 1e-12:
            return [(n0, 1.0)]
        if abs(w - 1.0) < 1e-12:
            return [(n0 + 1, 1.0)]
        return [(n0, 1.0 - w), (n0 + 1, w)]

    def _bilinear(self, plane, y):
        g = self.cube.grid
        p1 = np.clip((y[0] - g.domain.y1_lo) / g.dy1, 0, g.n1)
        p2 = np.clip((y[1] - g.domain.y2_lo) / g.dy2, 0, g.n2)
        i = int(min(np.floor(p1), g.n1 - 1))
        j = int(min(np.floor(p2), g.n2 - 1))
        a, b = p1 - i, p2 - j
        return ((1 - a) * (1 - b) * plane[i, j] + a * (1 - b) * plane[i + 1, j]
                + (1 - a) * b * plane[i, j + 1] + a * b * plane[i + 1, j + 1])

    def value(self, t, y):
        y = check_state(y)
        return float(sum(w * self._bilinear(self.cube.values[n], y)
                         for n, w in self._time_weights(float(t))))

    def gradient(self, t, y):
        y = check_state(y)
        tw = self._time_weights(float(t))
        d1 = sum(w * self._bilinear(self._grad1[n], y) for n, w in tw)
        d2 = sum(w * self._bilinear(self._grad2[n], y) for n, w in tw)
        return np.array([d1, d2], dtype=float)


def optimal_weight(t, y, surface, model: MarketModel) -> np.ndarray:
    """Optimal risky-asset weights at (t, y); shape (n,)."""
    y = check_state(y, model.d)
    u = float(surface.value(t, y))
    if abs(u) < U_THRESHOLD:
        raise DivisionHazardError(f"degenerate surface: |u| = {abs(u)} below {U_THRESHOLD}")
    grad = np.asarray(surface.gradient(t, y), dtype=float)
    mu, Sigma, Upsilon = model.return_moments(y)
    Sinv = np.linalg.inv(Sigma)
    return (Sinv @ mu + Sinv @ Upsilon @ grad / u) / (1.0 - model.p)


@dataclass(frozen=True)
class ValueDerivatives:
    """Partial derivatives of the unreduced value function V at (t, x, y).

    V_x: dV/dx, V_xx: d2V/dx2, grad_V_x: (d,) state gradient of V_x.
    """

    V_x: float
    V_xx: float
    grad_V_x: np.ndarray


def derivatives_from_reduced(x: float, u: float, grad_u, p: float) -> ValueDerivatives:
    """Derivatives of V = (1/p) x^p u for a known reduced solution."""
    x = check_wealth(x)
    grad_u = np.asarray(grad_u, dtype=float)
    return ValueDerivatives(V_x=x ** (p - 1.0) * u,
                            V_xx=(p - 1.0) * x ** (p - 2.0) * u,
                            grad_V_x=x ** (p - 1.0) * grad_u)


def unreduced_weight(t, x, y, derivs: ValueDerivatives, model: MarketModel) -> np.ndarray:
    """Optimal weights straight from V-derivatives; requires x > 0, V_xx < 0."""
    x = check_wealth(x)
    y = check_state(y, model.d)
    if not derivs.V_xx < 0.0:
        raise DomainError(f"value function must be strictly concave in wealth, "
                          f"got V_xx = {derivs.V_xx}")
    mu, Sigma, Upsilon = model.return_moments(y)
    Sinv = np.linalg.inv(Sigma)
    return -(Sinv @ (mu * derivs.V_x + Upsilon @ derivs.grad_V_x)) / (x * derivs.V_xx)
