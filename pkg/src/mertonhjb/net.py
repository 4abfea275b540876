"""Single-hidden-layer tanh network with closed-form derivatives.

The trial solution is

    f(t, y) = c + sum_i beta_i tanh(W_i . z + b_i),

where z is the input (t, y) affinely rescaled to [-1, 1] per coordinate.
The rescaling is part of the network: every derivative below includes its
Jacobian.  First and second input derivatives are closed-form, and exact
parameter gradients of any scalar functional of (value, du_dt, grad, hess)
are obtained by reverse accumulation through those expressions; the
third-order mixed tanh derivative appears and is implemented analytically.

No general-purpose autodiff is involved, which keeps evaluation and
gradient cost deterministic and bit-reproducible under a fixed seed.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, NonFiniteError
from .model import StateDomain

FORMAT_TAG = "mertonhjb-net"
FORMAT_VERSION = 1


@dataclass
class JetBatch:
    """Network value and input derivatives over a batch of points."""

    value: np.ndarray   # (N,)
    du_dt: np.ndarray   # (N,)
    grad: np.ndarray    # (N, d) state gradient
    hess: np.ndarray    # (N, d, d) state Hessian


@dataclass
class JetAdjoint:
    """Weights dL/d(jet entry) of a scalar functional L over a batch."""

    value: np.ndarray
    du_dt: np.ndarray
    grad: np.ndarray
    hess: np.ndarray

    @classmethod
    def zeros(cls, n: int, d: int) -> "JetAdjoint":
        return cls(np.zeros(n), np.zeros(n), np.zeros((n, d)), np.zeros((n, d, d)))


class Network:
    """Parameters and evaluation of the trial solution.

    W: (n_hidden, 1 + d) hidden weights, rows act on normalized (t, y).
    b: (n_hidden,) hidden biases.  beta: (n_hidden,) output weights.
    c: output bias.  lo, hi: (1 + d,) input box mapped onto [-1, 1].
    """

    def __init__(self, W, b, beta, c, lo, hi):
        self.W = np.asarray(W, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.beta = np.asarray(beta, dtype=float)
        self.c = float(c)
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        n, D = self.W.shape
        if self.b.shape != (n,) or self.beta.shape != (n,):
            raise ValueError("b and beta must have one entry per hidden unit")
        if self.lo.shape != (D,) or self.hi.shape != (D,):
            raise ValueError("lo and hi must have one entry per input coordinate")
        if np.any(self.hi <= self.lo):
            raise ValueError("require lo < hi in every input coordinate")

    @property
    def n_hidden(self) -> int:
        return self.W.shape[0]

    @property
    def d(self) -> int:
        return self.W.shape[1] - 1

    @property
    def n_params(self) -> int:
        n, D = self.W.shape
        return n * D + 2 * n + 1

    @property
    def scale(self) -> np.ndarray:
        """d(normalized)/d(raw) per input coordinate."""
        return 2.0 / (self.hi - self.lo)

    # -- evaluation --------------------------------------------------------

    def _inputs(self, t, y):
        t = np.asarray(t, dtype=float)
        y = np.asarray(y, dtype=float)
        scalar = t.ndim == 0 and y.ndim == 1
        if y.ndim == 1:
            y = y[None, :]
        t = np.broadcast_to(t, (y.shape[0],))  # scalar t pairs with a state batch
        z = np.column_stack([t, y])
        zhat = (z - self.lo) * self.scale - 1.0
        return zhat, scalar

    def _activations(self, zhat):
        g = zhat @ self.W.T + self.b
        h = np.tanh(g)
        t1 = 1.0 - h * h          # tanh'
        return h, t1

    def forward(self, t, y):
        zhat, scalar = self._inputs(t, y)
        h, _ = self._activations(zhat)
        val = self.c + h @ self.beta
        return float(val[0]) if scalar else val

    def input_gradient(self, t, y):
        """(df_dt, df_dy); df_dy is a d-vector (or (N, d) for a batch)."""
        zhat, scalar = self._inputs(t, y)
        _, t1 = self._activations(zhat)
        ws = self.W * self.scale
        full = (t1 * self.beta) @ ws          # (N, 1 + d)
        if scalar:
            return float(full[0, 0]), full[0, 1:]
        return full[:, 0], full[:, 1:]

    def input_hessian(self, t, y):
        """Second derivatives in the state block only, (d, d) per point."""
        zhat, scalar = self._inputs(t, y)
        h, t1 = self._activations(zhat)
        t2 = -2.0 * h * t1                     # tanh''
        wy = (self.W * self.scale)[:, 1:]
        hess = np.einsum("pi,ik,il->pkl", t2 * self.beta, wy, wy)
        return hess[0] if scalar else hess

    def jets(self, t, y) -> JetBatch:
        """Value, time derivative, state gradient and Hessian in one pass."""
        zhat, _ = self._inputs(t, y)
        h, t1 = self._activations(zhat)
        t2 = -2.0 * h * t1
        ws = self.W * self.scale
        wy = ws[:, 1:]
        value = self.c + h @ self.beta
        full = (t1 * self.beta) @ ws
        hess = np.einsum("pi,ik,il->pkl", t2 * self.beta, wy, wy)
        return JetBatch(value=value, du_dt=full[:, 0], grad=full[:, 1:], hess=hess)

    # -- reverse accumulation ---------------------------------------------

    def backprop(self, t, y, adj: JetAdjoint) -> np.ndarray:
        """Exact parameter gradient of L = sum over the batch of the adjoint
        pairing with (value, du_dt, grad, hess).

        Follows from differentiating the closed-form jet expressions in the
        parameters; tanh''' = 2 tanh' (3 tanh^2 - 1).
        """
        zhat, _ = self._inputs(t, y)
        h, t1 = self._activations(zhat)
        t2 = -2.0 * h * t1
        t3 = 2.0 * t1 * (3.0 * h * h - 1.0)
        s = self.scale
        ws = self.W * s
        wy = ws[:, 1:]

        A = np.asarray(adj.value, dtype=float)            # (N,)
        B = np.column_stack([adj.du_dt, adj.grad])        # (N, 1 + d)
        C = np.asarray(adj.hess, dtype=float)             # (N, d, d)

        sb = B @ ws.T                                     # (N, n)
        sc = np.einsum("pkl,ik,il->pi", C, wy, wy)        # (N, n)

        e = A[:, None] * t1 + sb * t2 + sc * t3
        grad_c = float(A.sum())
        grad_beta = (A[:, None] * h + sb * t1 + sc * t2).sum(axis=0)
        grad_b = self.beta * e.sum(axis=0)

        term = e.T @ zhat                                 # (n, 1 + d)
        term += (t1.T @ B) * s
        # Hessian adjoints touch only state columns of W.
        dm = np.einsum("pml,il->pim", C, wy)              # (N, n, d)
        term[:, 1:] += 2.0 * np.einsum("pi,pim->im", t2, dm) * s[1:]
        grad_w = self.beta[:, None] * term

        flat = np.concatenate([grad_w.ravel(), grad_b, grad_beta, [grad_c]])
        if not np.all(np.isfinite(flat)):
            raise NonFiniteError("parameter gradient contains non-finite entries")
        return flat

    # -- parameter vector --------------------------------------------------

    def param_vector(self) -> np.ndarray:
        """Flat parameters: W row-major, b, beta, c."""
        return np.concatenate([self.W.ravel(), self.b, self.beta, [self.c]])

    def set_param_vector(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got shape {v.shape}")
        n, D = self.W.shape
        self.W = v[:n * D].reshape(n, D).copy()
        self.b = v[n * D:n * D + n].copy()
        self.beta = v[n * D + n:n * D + 2 * n].copy()
        self.c = float(v[-1])

    def copy(self) -> "Network":
        return Network(self.W.copy(), self.b.copy(), self.beta.copy(), self.c,
                       self.lo.copy(), self.hi.copy())


def init_network(n_hidden: int, domain: StateDomain, seed: int = 0) -> Network:
    """Fresh network: uniform [-s, s] weights with s = sqrt(6 / (fan_in + fan_out))
    per layer, zero biases.  Deterministic in the seed."""
    if n_hidden < 1:
        raise ValueError(f"n_hidden must be at least 1, got {n_hidden}")
    rng = np.random.default_rng(seed)
    D = 3  # (t, y1, y2)
    s_hidden = np.sqrt(6.0 / (D + n_hidden))
    W = rng.uniform(-s_hidden, s_hidden, size=(n_hidden, D))
    s_out = np.sqrt(6.0 / (n_hidden + 1))
    beta = rng.uniform(-s_out, s_out, size=n_hidden)
    return Network(W=W, b=np.zeros(n_hidden), beta=beta, c=0.0,
                   lo=domain.lo, hi=domain.hi)


def loss_param_gradient(net: Network, t, y, loss_fn) -> np.ndarray:
    """Parameter gradient of a scalar batch functional.

    ``loss_fn`` maps a JetBatch to (loss_value, JetAdjoint).  The returned
    gradient is flat in the order W row-major, b, beta, c.
    """
    jets = net.jets(t, y)
    _, adj = loss_fn(jets)
    return net.backprop(t, y, adj)


def save_network(net: Network, path) -> None:
    """Plain-text serialization: header, input box, then the flat parameter
    vector (W row-major, b, beta, c) one value per line."""
    lines = [f"{FORMAT_TAG} {FORMAT_VERSION}",
             f"n_hidden {net.n_hidden}",
             f"d {net.d}",
             "lo " + " ".join(f"{v:.17g}" for v in net.lo),
             "hi " + " ".join(f"{v:.17g}" for v in net.hi)]
    lines.extend(f"{v:.17g}" for v in net.param_vector())
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_network(path) -> Network:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    try:
        tag, version = lines[0].split()
        if tag != FORMAT_TAG or int(version) != FORMAT_VERSION:
            raise ConfigError(f"unrecognized network file header: {lines[0]!r}")
        n_hidden = int(lines[1].split()[1])
        d = int(lines[2].split()[1])
        lo = np.array([float(v) for v in lines[3].split()[1:]])
        hi = np.array([float(v) for v in lines[4].split()[1:]])
        values = np.array([float(v) for v in lines[5:]])
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"malformed network file: {exc}") from exc
    D = 1 + d
    expected = n_hidden * D + 2 * n_hidden + 1
    if values.shape != (expected,):
        raise ConfigError(f"network file carries {values.shape[0]} parameters, "
                          f"expected {expected}")
    net = Network(W=np.zeros((n_hidden, D)), b=np.zeros(n_hidden),
                  beta=np.zeros(n_hidden), c=0.0, lo=lo, hi=hi)
    net.set_param_vector(values)
    return net
