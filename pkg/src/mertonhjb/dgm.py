"""Deep-Galerkin training of the reduced HJB equation.

The loss J = J1 + J2 combines the mean squared PDE residual over uniform
interior samples of [0, T] x [y1_lo, y1_hi] x [y2_lo, y2_hi] with the mean
squared terminal misfit against u(T, .) = 1.  Parameters are updated with
Adam (plain SGD available) under a staircase learning-rate schedule

    lr(outer step n) = lr_init * lr_decay ** floor(n / lr_decay_every).

Summation order inside the loss and gradient is fixed, so two runs with
the same seed and configuration are bit-identical.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DivisionHazardError, TrainingAbortError
from .model import MarketModel, StateDomain
from .net import JetAdjoint, Network
from .pde import U_THRESHOLD

# Abort training when this share of a batch has |f| below U_THRESHOLD.
COLLAPSE_FRACTION = 0.5


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of the training loop.

    One outer step performs ``inner_steps`` gradient updates; fresh batches
    are drawn on outer steps divisible by ``resample_every`` and the
    learning rate decays on outer steps divisible by ``lr_decay_every``.
    """

    n_interior: int = 1000
    n_terminal: int = 100
    resample_every: int = 100
    inner_steps: int = 10
    max_outer_steps: int = 5000
    lr_init: float = 1e-3
    lr_decay: float = 0.96
    lr_decay_every: int = 100
    optimizer: str = "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    theta_tol: float | None = None  # optional early stop on parameter delta
    log_every: int = 0              # print a progress line every k outer steps

    def __post_init__(self):
        for name in ("n_interior", "n_terminal", "resample_every", "inner_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.max_outer_steps < 0:
            raise ValueError("max_outer_steps must be nonnegative")
        if self.lr_init < 0.0:
            raise ValueError("lr_init must be nonnegative")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValueError("lr_decay must lie in (0, 1]")
        if self.lr_decay_every < 1:
            raise ValueError("lr_decay_every must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")

    def lr_at(self, outer_step: int) -> float:
        return self.lr_init * self.lr_decay ** (outer_step // self.lr_decay_every)


@dataclass
class SampleBatch:
    """Interior collocation points and terminal anchor points."""

    t_int: np.ndarray    # (n_interior,)
    y_int: np.ndarray    # (n_interior, 2)
    y_ter: np.ndarray    # (n_terminal, 2)
    t_terminal: float

    # Pointwise PDE coefficients at the interior states, filled lazily and
    # reused across the inner updates of one batch.
    coeff: dict = field(default_factory=dict, repr=False)


def sample_batch(domain: StateDomain, cfg: TrainConfig, rng: np.random.Generator) -> SampleBatch:
    """Uniform interior samples over the full box; terminal samples at t = T."""
    lo, hi = domain.lo, domain.hi
    t_int = rng.uniform(lo[0], hi[0], size=cfg.n_interior)
    y_int = rng.uniform(lo[1:], hi[1:], size=(cfg.n_interior, 2))
    y_ter = rng.uniform(lo[1:], hi[1:], size=(cfg.n_terminal, 2))
    return SampleBatch(t_int=t_int, y_int=y_int, y_ter=y_ter, t_terminal=domain.t_hi)


def _batch_coefficients(batch: SampleBatch, model: MarketModel) -> dict:
    """Stack pointwise coefficients over the interior states."""
    if batch.coeff:
        return batch.coeff
    n = batch.y_int.shape[0]
    first = np.empty((n, 2))
    second = np.empty((n, 2, 2))
    zeroth = np.empty(n)
    gquad = np.empty((n, 2, 2))
    for i in range(n):
        cs = model.coefficients(batch.y_int[i])
        first[i] = cs.first_order
        second[i] = cs.second_order
        zeroth[i] = cs.zeroth_order
        gquad[i] = cs.grad_quad
    batch.coeff = {"first": first, "second": second, "zeroth": zeroth, "gquad": gquad}
    return batch.coeff


def _interior_terms(net: Network, batch: SampleBatch, model: MarketModel):
    """Jets and residuals at the interior points.

    Returns (jets, residuals, gq_grad, quad, coeff) where gq_grad is
    grad_quad @ grad per point and quad the scalar quadratic form; both are
    reused by the adjoint assembly.
    """
    co = _batch_coefficients(batch, model)
    jets = net.jets(batch.t_int, batch.y_int)
    gq_grad = np.einsum("pkl,pl->pk", co["gquad"], jets.grad)
    quad = np.einsum("pk,pk->p", jets.grad, gq_grad)
    lin = (jets.du_dt
           + np.einsum("pk,pk->p", co["first"], jets.grad)
           + np.einsum("pkl,pkl->p", co["second"], jets.hess)
           + co["zeroth"] * jets.value)
    res = lin - quad / jets.value
    return jets, res, gq_grad, quad, co


def loss(net: Network, batch: SampleBatch, model: MarketModel):
    """(J, J1, J2) for one batch.

    Raises DivisionHazardError if any interior |f| is below the residual
    threshold; the training loop applies its own collapse policy instead.
    """
    J, J1, J2, _, _ = _loss_and_gradient(net, batch, model, want_gradient=False,
                                         hazard="raise")
    return J, J1, J2


def loss_and_gradient(net: Network, batch: SampleBatch, model: MarketModel):
    """(J, J1, J2, flat parameter gradient) for one batch."""
    J, J1, J2, grad, _ = _loss_and_gradient(net, batch, model, want_gradient=True,
                                            hazard="raise")
    return J, J1, J2, grad


def _loss_and_gradient(net, batch, model, want_gradient, hazard):
    """Core loss path; also reports the fraction of the batch with |f| below
    the division threshold so the training loop can apply its collapse rule."""
    jets, res, gq_grad, quad, co = _interior_terms(net, batch, model)
    n_int = res.shape[0]
    ter_value = net.forward(np.full(batch.y_ter.shape[0], batch.t_terminal), batch.y_ter)
    mis = ter_value - 1.0
    n_ter = mis.shape[0]

    below = np.abs(np.concatenate([jets.value, ter_value])) < U_THRESHOLD
    frac_below = float(below.mean())
    if hazard == "raise" and np.any(np.abs(jets.value) < U_THRESHOLD):
        raise DivisionHazardError(
            f"|f| below {U_THRESHOLD} at interior points of the batch",
            fraction=frac_below)

    J1 = float(res @ res) / n_int
    J2 = float(mis @ mis) / n_ter
    J = J1 + J2
    if not want_gradient:
        return J, J1, J2, None, frac_below

    # Adjoints of J1 through the interior jets.
    w = (2.0 / n_int) * res
    adj_int = JetAdjoint(
        value=w * (co["zeroth"] + quad / jets.value ** 2),
        du_dt=w.copy(),
        grad=w[:, None] * (co["first"] - 2.0 * gq_grad / jets.value[:, None]),
        hess=w[:, None, None] * co["second"],
    )
    grad = net.backprop(batch.t_int, batch.y_int, adj_int)

    # Adjoints of J2 through the terminal values.
    adj_ter = JetAdjoint.zeros(n_ter, net.d)
    adj_ter.value = (2.0 / n_ter) * mis
    grad += net.backprop(np.full(n_ter, batch.t_terminal), batch.y_ter, adj_ter)
    return J, J1, J2, grad, frac_below


class Adam:
    """Adam with bias correction; a zero gradient leaves parameters unchanged."""

    def __init__(self, n_params: int, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def update(self, theta: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return theta - lr * m_hat / (np.sqrt(v_hat) + self.eps)


class Sgd:
    """Plain gradient descent with the same update interface."""

    def update(self, theta, grad, lr):
        return theta - lr * grad


@dataclass
class TrainResult:
    net: Network
    history: list  # rows (step, J, J1, J2, lr), one per gradient update
    outer_steps: int
    stopped_early: bool = False


def train(net: Network, cfg: TrainConfig, model: MarketModel,
          domain: StateDomain | None = None) -> TrainResult:
    """Train in place and return the network with its loss history.

    Aborts with a diagnostic if J turns non-finite or |f| collapses below
    the residual threshold on more than half of a batch.
    """
    if domain is None:
        domain = model.domain
    rng = np.random.default_rng([cfg.seed, 1])
    opt = (Adam(net.n_params, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
           if cfg.optimizer == "adam" else Sgd())
    history = []
    batch = None
    step = 0
    stopped = False
    outer = -1
    for outer in range(cfg.max_outer_steps):
        if outer % cfg.resample_every == 0:
            batch = sample_batch(domain, cfg, rng)
        lr = cfg.lr_at(outer)
        theta_start = net.param_vector()
        for _ in range(cfg.inner_steps):
            J, J1, J2, grad, frac = _loss_and_gradient(net, batch, model,
                                                       want_gradient=True, hazard="allow")
            step += 1
            if not math.isfinite(J):
                raise TrainingAbortError(f"loss became non-finite at update {step}: "
                                         f"J = {J}, J1 = {J1}, J2 = {J2}", step=step)
            if frac > COLLAPSE_FRACTION:
                raise TrainingAbortError(
                    f"|f| below {U_THRESHOLD} on {frac:.0%} of the batch at update {step}",
                    step=step)
            theta = opt.update(net.param_vector(), grad, lr)
            net.set_param_vector(theta)
            history.append((step, J, J1, J2, lr))
        if cfg.log_every and (outer % cfg.log_every == 0 or outer == cfg.max_outer_steps - 1):
            print(f"outer {outer:5d}  J {J:.6e}  J1 {J1:.6e}  J2 {J2:.6e}  lr {lr:.3e}")
        if cfg.theta_tol is not None:
            delta = float(np.linalg.norm(net.param_vector() - theta_start))
            if delta <= cfg.theta_tol:
                stopped = True
                break
    return TrainResult(net=net, history=history, outer_steps=outer + 1,
                       stopped_early=stopped)
