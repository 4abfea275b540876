"""Solvers for the reduced Merton HJB equation under an OU+CIR state process
with Heston-type returns: a mesh-free deep-Galerkin solver, a Newton-based
finite-difference solver, an optimal-portfolio evaluator and a comparison
harness."""

from .dgm import Adam, SampleBatch, TrainConfig, TrainResult, loss, loss_and_gradient, sample_batch, train
from .estimators import DeepGalerkinSolver, FiniteDifferenceSolver
from .exceptions import (ConfigError, DivisionHazardError, DomainError,
                         DomainMismatchError, MertonHJBError, NewtonError,
                         NonFiniteError, SingularModelError, TrainingAbortError)
from .fdm import (Grid3D, SolutionCube, constant_one_boundary, network_boundary,
                  newton_solve_level, solve_backward, stencil_residual)
from .model import (CoefficientSet, ConstantCoefficientModel, MarketModel,
                    ModelParams, OUCIRHestonModel, StateDomain, bundled_params,
                    default_domain, load_model_params, params_from_mapping)
from .net import (JetAdjoint, JetBatch, Network, init_network, load_network,
                  loss_param_gradient, save_network)
from .pde import PointJet, constant_oracle, residual, terminal_value, value_from_reduced
from .portfolio import (CubeSurface, NetworkSurface, ValueDerivatives,
                        derivatives_from_reduced, optimal_weight, unreduced_weight)

__version__ = "0.1.0"

__all__ = [
    "Adam", "CoefficientSet", "ConfigError", "ConstantCoefficientModel",
    "CubeSurface", "DeepGalerkinSolver", "DivisionHazardError", "DomainError",
    "DomainMismatchError", "FiniteDifferenceSolver", "Grid3D", "JetAdjoint",
    "JetBatch", "MarketModel", "MertonHJBError", "ModelParams", "Network",
    "NetworkSurface", "NewtonError", "NonFiniteError", "OUCIRHestonModel",
    "PointJet", "SampleBatch", "SingularModelError", "SolutionCube",
    "StateDomain", "TrainConfig", "TrainResult", "TrainingAbortError",
    "ValueDerivatives", "bundled_params", "constant_one_boundary",
    "constant_oracle", "default_domain", "derivatives_from_reduced",
    "init_network", "load_model_params", "load_network", "loss",
    "loss_and_gradient", "loss_param_gradient", "network_boundary",
    "newton_solve_level", "optimal_weight", "params_from_mapping", "residual",
    "sample_batch", "save_network", "solve_backward", "stencil_residual",
    "terminal_value", "train", "unreduced_weight", "value_from_reduced",
]
