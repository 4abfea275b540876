"""Estimator-style wrappers around the two solvers.

Both follow the familiar fit/predict pattern: ``fit`` runs the solve
(training for the mesh-free solver, the backward Newton march for the
finite-difference solver) and ``predict`` evaluates the reduced solution u
at an (m, 3) array of (t, y1, y2) points.  Hyperparameters live in the
constructor so ``get_params`` / ``set_params`` and cloning work as usual.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .dgm import TrainConfig, train
from .fdm import Grid3D, constant_one_boundary, network_boundary, solve_backward
from .net import Network, init_network
from .portfolio import CubeSurface, NetworkSurface
from .validation import check_points


class DeepGalerkinSolver(BaseEstimator):
    """Mesh-free solver: trains the trial network against the PDE loss.

    ``fit`` ignores X and y; the solver draws its own collocation samples
    from the model's state domain.
    """

    def __init__(self, model=None, n_hidden=50, n_interior=1000, n_terminal=100,
                 resample_every=100, inner_steps=10, max_outer_steps=5000,
                 lr_init=1e-3, lr_decay=0.96, lr_decay_every=100,
                 optimizer="adam", seed=0, theta_tol=None, log_every=0):
        self.model = model
        self.n_hidden = n_hidden
        self.n_interior = n_interior
        self.n_terminal = n_terminal
        self.resample_every = resample_every
        self.inner_steps = inner_steps
        self.max_outer_steps = max_outer_steps
        self.lr_init = lr_init
        self.lr_decay = lr_decay
        self.lr_decay_every = lr_decay_every
        self.optimizer = optimizer
        self.seed = seed
        self.theta_tol = theta_tol
        self.log_every = log_every

    def _config(self) -> TrainConfig:
        return TrainConfig(
            n_interior=self.n_interior, n_terminal=self.n_terminal,
            resample_every=self.resample_every, inner_steps=self.inner_steps,
            max_outer_steps=self.max_outer_steps, lr_init=self.lr_init,
            lr_decay=self.lr_decay, lr_decay_every=self.lr_decay_every,
            optimizer=self.optimizer, seed=self.seed, theta_tol=self.theta_tol,
            log_every=self.log_every)

    def fit(self, X=None, y=None):
        if self.model is None:
            raise ValueError("a market model is required; pass model= to the constructor")
        net = init_network(self.n_hidden, self.model.domain, seed=self.seed)
        result = train(net, self._config(), self.model)
        self.net_ = result.net
        self.history_ = result.history
        self.result_ = result
        return self

    def _check_fitted(self):
        if not hasattr(self, "net_"):
            raise NotFittedError("this DeepGalerkinSolver instance is not fitted yet; "
                                 "call fit() first")

    def predict(self, X) -> np.ndarray:
        """u at each (t, y1, y2) row of X."""
        self._check_fitted()
        X = check_points(X)
        return self.net_.forward(X[:, 0], X[:, 1:])

    def gradient(self, X) -> np.ndarray:
        """State gradient of u at each (t, y1, y2) row of X."""
        self._check_fitted()
        X = check_points(X)
        _, dy = self.net_.input_gradient(X[:, 0], X[:, 1:])
        return dy

    def surface(self) -> NetworkSurface:
        self._check_fitted()
        return NetworkSurface(self.net_)


class FiniteDifferenceSolver(BaseEstimator):
    """Grid solver: backward Newton march with Dirichlet shell data.

    ``boundary`` may be None (terminal value held on the shell), a provider
    callable (t, states) -> values, a trained Network, or a fitted
    DeepGalerkinSolver.
    """

    def __init__(self, model=None, boundary=None, nt=40, n1=40, n2=40,
                 tol=1e-10, max_iter=20, verbose=False):
        self.model = model
        self.boundary = boundary
        self.nt = nt
        self.n1 = n1
        self.n2 = n2
        self.tol = tol
        self.max_iter = max_iter
        self.verbose = verbose

    def _provider(self):
        b = self.boundary
        if b is None:
            return constant_one_boundary()
        if isinstance(b, Network):
            return network_boundary(b)
        if isinstance(b, DeepGalerkinSolver):
            b._check_fitted()
            return network_boundary(b.net_)
        if callable(b):
            return b
        raise ValueError(f"unsupported boundary source: {type(b).__name__}")

    def fit(self, X=None, y=None):
        if self.model is None:
            raise ValueError("a market model is required; pass model= to the constructor")
        grid = Grid3D(self.model.domain, nt=self.nt, n1=self.n1, n2=self.n2)
        self.cube_ = solve_backward(grid, self.model, self._provider(),
                                    tol=self.tol, max_iter=self.max_iter,
                                    verbose=self.verbose)
        self.grid_ = grid
        return self

    def _check_fitted(self):
        if not hasattr(self, "cube_"):
            raise NotFittedError("this FiniteDifferenceSolver instance is not fitted yet; "
                                 "call fit() first")

    def predict(self, X) -> np.ndarray:
        """u at each (t, y1, y2) row of X, interpolated from the cube."""
        self._check_fitted()
        X = check_points(X)
        surf = CubeSurface(self.cube_)
        return np.array([surf.value(row[0], row[1:]) for row in X])

    def surface(self) -> CubeSurface:
        self._check_fitted()
        return CubeSurface(self.cube_)
