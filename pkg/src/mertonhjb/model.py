"""Market model and pointwise coefficient assembly for the reduced HJB equation.

The investor maximizes expected power utility U(x) = x^p / p over terminal
wealth.  The state Y = (Y1, Y2) follows an OU factor and a CIR factor,

    dY1 = theta1 (k1 - Y1) dt + (a11, a12) dW
    dY2 = theta2 (k2 - Y2) dt + sqrt(Y2) (a21, a22) dW,

and the risky excess return is Heston-type,

    dR = Y1 dt + sigma sqrt(Y2) dZ,  d<W_i, Z> = rho_i dt.

Writing the value function as V(t, x, y) = (1/p) x^p u(t, y) reduces the
HJB equation to a scalar PDE for u whose coefficients are pointwise
functions of the state.  ``coefficients`` assembles them:

    u_t + first_order . grad_y(u) + sum_ij second_order_ij d2u/dyi dyj
        + zeroth_order u - (1/u) grad_y(u)' grad_quad grad_y(u) = 0,

with grad_quad absorbing the factor q/2, q = p / (p - 1) < 0.

A constant-coefficient variant (frozen return moments, no state/return
correlation) admits the closed-form solution u(t) = exp(c (T - t)) and is
used to validate both numerical solvers.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, DomainError, SingularModelError
from .validation import check_state

# Calibration used throughout examples and bundled as data/table1.cfg.
DEFAULT_CONFIG_NAME = "table1.cfg"

# Keys accepted by the flat key-value model configuration format.
MODEL_KEYS = (
    "theta1", "theta2", "k1", "k2",
    "a11", "a12", "a21", "a22",
    "sigma", "rho1", "rho2",
    "r", "p", "T",
    "y1_lo", "y1_hi", "y2_lo", "y2_hi", "y2_floor",
)


@dataclass(frozen=True)
class ModelParams:
    """Calibrated constants of the OU+CIR state and Heston-type return.

    ``q`` is always recomputed from p so the pair cannot drift apart.
    """

    theta1: float
    theta2: float
    k1: float
    k2: float
    a11: float
    a12: float
    a21: float
    a22: float
    sigma: float
    rho1: float
    rho2: float
    r: float
    p: float
    T: float

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"risk-aversion exponent p must lie in (0, 1), got {self.p}")
        if not self.sigma > 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.T > 0.0:
            raise ValueError(f"horizon T must be positive, got {self.T}")
        for name in ("rho1", "rho2"):
            v = getattr(self, name)
            if abs(v) > 1.0:
                raise ValueError(f"correlation {name} must lie in [-1, 1], got {v}")

    @property
    def q(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def A(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a21, self.a22]])

    @property
    def rho(self) -> np.ndarray:
        return np.array([self.rho1, self.rho2])


@dataclass(frozen=True)
class StateDomain:
    """Computational box [t_lo, t_hi] x [y1_lo, y1_hi] x [y2_lo, y2_hi].

    y2_floor is the clamp applied before any coefficient evaluation; the
    return covariance sigma^2 y2 is singular at y2 = 0.
    """

    t_lo: float
    t_hi: float
    y1_lo: float
    y1_hi: float
    y2_lo: float
    y2_hi: float
    y2_floor: float = 1e-2

    def __post_init__(self):
        if not self.t_lo < self.t_hi:
            raise ValueError("require t_lo < t_hi")
        if not self.y1_lo < self.y1_hi:
            raise ValueError("require y1_lo < y1_hi")
        if not self.y2_lo < self.y2_hi:
            raise ValueError("require y2_lo < y2_hi")
        if not self.y2_floor > 0.0:
            raise ValueError("y2_floor must be positive")

    @property
    def lo(self) -> np.ndarray:
        """Lower corner of the (t, y1, y2) box."""
        return np.array([self.t_lo, self.y1_lo, self.y2_lo])

    @property
    def hi(self) -> np.ndarray:
        return np.array([self.t_hi, self.y1_hi, self.y2_hi])

    def contains(self, t, y1, y2, rtol=1e-12) -> bool:
        pad = rtol * max(abs(self.t_hi), abs(self.y1_hi), abs(self.y2_hi), 1.0)
        return (self.t_lo - pad <= t <= self.t_hi + pad
                and self.y1_lo - pad <= y1 <= self.y1_hi + pad
                and self.y2_lo - pad <= y2 <= self.y2_hi + pad)


def default_domain(T: float, y2_floor: float = 1e-2) -> StateDomain:
    """The computational box used in all bundled runs."""
    return StateDomain(0.0, T, -10.0, 10.0, 0.0, 10.0, y2_floor)


@dataclass(frozen=True)
class CoefficientSet:
    """Pointwise PDE coefficients at one state y.

    first_order: (d,) advection vector b - q (mu' Sigma^-1 Upsilon)'.
    second_order: (d, d) symmetric PSD diffusion matrix (1/2) a a'.
    zeroth_order: scalar reaction p r - (q/2) mu' Sigma^-1 mu.
    grad_quad: (d, d) symmetric matrix (q/2) Upsilon' Sigma^-1 Upsilon;
        negative semidefinite because q < 0.  The residual subtracts
        (1/u) grad' grad_quad grad, so the q/2 factor lives here.
    """

    first_order: np.ndarray
    second_order: np.ndarray
    zeroth_order: float
    grad_quad: np.ndarray


class MarketModel:
    """Base class assembling PDE coefficients from model primitives.

    Subclasses provide drift, diffusion and return_moments; the assembly
    below is valid for any state dimension d and any number n of risky
    assets.
    """

    d = 2
    n = 1

    def __init__(self, p: float, r: float, T: float, domain: StateDomain):
        if not 0.0 < p < 1.0:
            raise ValueError(f"risk-aversion exponent p must lie in (0, 1), got {p}")
        self.p = float(p)
        self.r = float(r)
        self.T = float(T)
        self.domain = domain

    @property
    def q(self) -> float:
        return self.p / (self.p - 1.0)

    def drift(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def diffusion(self, y: np.ndarray, clamp: bool = True) -> np.ndarray:
        raise NotImplementedError

    def return_moments(self, y: np.ndarray):
        """Return (mu, Sigma, Upsilon) with shapes (n,), (n, n), (n, d)."""
        raise NotImplementedError

    def coefficients(self, y) -> CoefficientSet:
        y = check_state(y, self.d)
        b = self.drift(y)
        a = self.diffusion(y)
        mu, Sigma, Upsilon = self.return_moments(y)
        Sinv = np.linalg.inv(Sigma)
        first = b - self.q * (mu @ Sinv @ Upsilon)
        second = 0.5 * (a @ a.T)
        zeroth = self.p * self.r - 0.5 * self.q * float(mu @ Sinv @ mu)
        grad_quad = 0.5 * self.q * (Upsilon.T @ Sinv @ Upsilon)
        return CoefficientSet(first, second, zeroth, grad_quad)

    def clamp_y2(self, y2):
        return np.maximum(y2, self.domain.y2_floor)


class OUCIRHestonModel(MarketModel):
    """The concrete d = 2, n = 1 model: OU + CIR factors, Heston-type return."""

    def __init__(self, params: ModelParams, domain: StateDomain | None = None,
                 sigma2_eps: float = 1e-12):
        if domain is None:
            domain = default_domain(params.T)
        super().__init__(params.p, params.r, params.T, domain)
        self.params = params
        self.sigma2_eps = float(sigma2_eps)
        self._A = params.A
        self._M = self._A @ self._A.T  # a a' = diag(1, sqrt(y2)) M diag(1, sqrt(y2))

    def drift(self, y):
        y = check_state(y, 2)
        prm = self.params
        return np.array([prm.theta1 * (prm.k1 - y[0]),
                         prm.theta2 * (prm.k2 - y[1])])

    def diffusion(self, y, clamp=True):
        y = check_state(y, 2)
        y2 = y[1]
        if clamp:
            y2 = self.clamp_y2(y2)
        elif y2 < 0.0:
            raise DomainError(f"y2 must be nonnegative when clamping is disabled, got {y2}")
        a = self._A.copy()
        a[1, :] *= np.sqrt(y2)
        return a

    def return_moments(self, y):
        y = check_state(y, 2)
        prm = self.params
        y2 = self.clamp_y2(y[1])
        var = prm.sigma ** 2 * y2
        if var < self.sigma2_eps:
            raise SingularModelError(
                f"return variance sigma^2 y2 = {var} below eps = {self.sigma2_eps}")
        mu = np.array([y[0]])
        Sigma = np.array([[var]])
        # Upsilon = sigma(y) rho a(y)', the (1, d) state/return cross-covariance.
        a = self.diffusion(np.array([y[0], y2]))
        Upsilon = prm.sigma * np.sqrt(y2) * (prm.rho @ a.T).reshape(1, 2)
        return mu, Sigma, Upsilon


class ConstantCoefficientModel(MarketModel):
    """Frozen return moments, zero state dynamics, no correlation.

    With Upsilon = 0 and constant (mu, Sigma) the reduced equation becomes
    u_t + c u = 0, c = p r - (q/2) mu' Sigma^-1 mu, so u(t) = exp(c (T - t))
    independent of the state.  Zero drift and diffusion keep the discrete
    finite-difference solution exactly uniform in space as well.
    """

    def __init__(self, p: float, r: float, T: float, mu: float = 0.0,
                 Sigma: float = 1.0, domain: StateDomain | None = None):
        if domain is None:
            domain = default_domain(T)
        super().__init__(p, r, T, domain)
        if not Sigma > 0.0:
            raise ValueError(f"Sigma must be positive, got {Sigma}")
        self.mu = float(mu)
        self.Sigma = float(Sigma)

    def drift(self, y):
        check_state(y, 2)
        return np.zeros(2)

    def diffusion(self, y, clamp=True):
        check_state(y, 2)
        return np.zeros((2, 2))

    def return_moments(self, y):
        check_state(y, 2)
        return np.array([self.mu]), np.array([[self.Sigma]]), np.zeros((1, 2))

    @property
    def c(self) -> float:
        """The reaction constant; u(t) = exp(c (T - t))."""
        return self.p * self.r - 0.5 * self.q * self.mu ** 2 / self.Sigma


def params_from_mapping(mapping: dict) -> tuple[ModelParams, StateDomain]:
    """Build (ModelParams, StateDomain) from a flat key-value mapping.

    Unknown model keys are ignored so run configurations can carry solver
    settings alongside the model block.
    """
    missing = [k for k in MODEL_KEYS if k not in mapping
               and k not in ("y1_lo", "y1_hi", "y2_lo", "y2_hi", "y2_floor")]
    if missing:
        raise ConfigError(f"model configuration is missing keys: {', '.join(missing)}")
    try:
        params = ModelParams(
            theta1=float(mapping["theta1"]), theta2=float(mapping["theta2"]),
            k1=float(mapping["k1"]), k2=float(mapping["k2"]),
            a11=float(mapping["a11"]), a12=float(mapping["a12"]),
            a21=float(mapping["a21"]), a22=float(mapping["a22"]),
            sigma=float(mapping["sigma"]),
            rho1=float(mapping["rho1"]), rho2=float(mapping["rho2"]),
            r=float(mapping["r"]), p=float(mapping["p"]), T=float(mapping["T"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    domain = StateDomain(
        t_lo=0.0, t_hi=params.T,
        y1_lo=float(mapping.get("y1_lo", -10.0)),
        y1_hi=float(mapping.get("y1_hi", 10.0)),
        y2_lo=float(mapping.get("y2_lo", 0.0)),
        y2_hi=float(mapping.get("y2_hi", 10.0)),
        y2_floor=float(mapping.get("y2_floor", 1e-2)),
    )
    return params, domain


def load_model_params(path) -> tuple[ModelParams, StateDomain]:
    """Load model parameters from a flat key-value configuration file."""
    from .artifacts import parse_flat_config
    with open(path, "r", encoding="utf-8") as fh:
        mapping = parse_flat_config(fh.read())
    return params_from_mapping(mapping)


def bundled_params(p: float | None = None) -> tuple[ModelParams, StateDomain]:
    """The calibrated parameter set shipped with the package.

    ``p`` overrides the risk-aversion exponent in the bundled file.
    """
    from importlib.resources import files

    from .artifacts import parse_flat_config
    text = files("mertonhjb.data").joinpath(DEFAULT_CONFIG_NAME).read_text(encoding="utf-8")
    mapping = parse_flat_config(text)
    if p is not None:
        mapping["p"] = p
    return params_from_mapping(mapping)
