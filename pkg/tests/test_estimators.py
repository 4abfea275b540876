"""fit/predict wrappers around the two solvers."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from mertonhjb.estimators import DeepGalerkinSolver, FiniteDifferenceSolver
from mertonhjb.pde import constant_oracle


@pytest.fixture()
def tiny_dgm(const_model):
    return DeepGalerkinSolver(model=const_model, n_hidden=4, n_interior=50,
                              n_terminal=10, resample_every=5, inner_steps=2,
                              max_outer_steps=10, seed=0)


class TestDeepGalerkinSolver:
    def test_get_params_and_clone(self, tiny_dgm):
        params = tiny_dgm.get_params()
        assert params["n_hidden"] == 4
        assert params["max_outer_steps"] == 10
        fresh = clone(tiny_dgm)
        fresh_params = fresh.get_params()
        # clone deep-copies the model object; compare it by content
        assert type(fresh_params.pop("model")) is type(params.pop("model"))
        assert fresh_params == params
        assert not hasattr(fresh, "net_")

    def test_unfitted_predict_raises(self, tiny_dgm):
        with pytest.raises(NotFittedError):
            tiny_dgm.predict([[0.0, 0.0, 1.0]])
        with pytest.raises(NotFittedError):
            tiny_dgm.surface()

    def test_model_required(self):
        with pytest.raises(ValueError, match="market model"):
            DeepGalerkinSolver().fit()

    def test_fit_predict_shapes(self, tiny_dgm):
        tiny_dgm.fit()
        assert len(tiny_dgm.history_) == 10 * 2
        X = [[0.0, 0.0, 1.0], [0.5, 2.0, 3.0], [1.0, -1.0, 0.5]]
        u = tiny_dgm.predict(X)
        assert u.shape == (3,)
        g = tiny_dgm.gradient(X)
        assert g.shape == (3, 2)
        # surface adapter agrees with predict
        surf = tiny_dgm.surface()
        assert surf.value(0.5, np.array([2.0, 3.0])) == pytest.approx(u[1])

    def test_refit_same_seed_is_identical(self, tiny_dgm):
        a = tiny_dgm.fit().net_.param_vector()
        b = clone(tiny_dgm).fit().net_.param_vector()
        np.testing.assert_array_equal(a, b)

    def test_bad_points_shape(self, tiny_dgm):
        tiny_dgm.fit()
        with pytest.raises(ValueError):
            tiny_dgm.predict(np.ones((3, 2)))


class TestFiniteDifferenceSolver:
    def test_default_boundary_holds_terminal_value(self, const_model):
        est = FiniteDifferenceSolver(model=const_model, nt=10, n1=4, n2=4)
        est.fit()
        assert est.cube_.boundary_name == "one"
        ii, jj, _ = est.grid_.shell_states()
        assert np.all(np.asarray(est.cube_.values, dtype=float)[0][ii, jj] == 1.0)

    def test_callable_boundary(self, const_model):
        c, T = const_model.c, const_model.T

        def provider(t, y):
            return np.full(np.asarray(y).shape[0], constant_oracle(t, c, T))

        est = FiniteDifferenceSolver(model=const_model, boundary=provider,
                                     nt=40, n1=4, n2=4)
        est.fit()
        u = est.predict([[0.0, 0.0, 5.0]])
        assert u[0] == pytest.approx(constant_oracle(0.0, c, T), abs=1e-6)

    def test_network_and_fitted_solver_boundaries(self, const_model, small_net):
        direct = FiniteDifferenceSolver(model=const_model, boundary=small_net,
                                        nt=4, n1=4, n2=4).fit()
        assert direct.cube_.boundary_name == "network"

        dgm = DeepGalerkinSolver(model=const_model, n_hidden=3, n_interior=20,
                                 n_terminal=5, max_outer_steps=1, inner_steps=1,
                                 seed=0).fit()
        chained = FiniteDifferenceSolver(model=const_model, boundary=dgm,
                                         nt=4, n1=4, n2=4).fit()
        assert chained.cube_.boundary_name == "network"
        # the chained run pins the shell to the trained network
        ii, jj, states = chained.grid_.shell_states()
        t0 = chained.grid_.t_nodes[0]
        np.testing.assert_allclose(
            np.asarray(chained.cube_.values, dtype=float)[0][ii, jj],
            dgm.net_.forward(t0, states), rtol=1e-15)

    def test_unfitted_boundary_solver_rejected(self, const_model):
        dgm = DeepGalerkinSolver(model=const_model)
        est = FiniteDifferenceSolver(model=const_model, boundary=dgm,
                                     nt=4, n1=4, n2=4)
        with pytest.raises(NotFittedError):
            est.fit()

    def test_unsupported_boundary_rejected(self, const_model):
        est = FiniteDifferenceSolver(model=const_model, boundary=3.14,
                                     nt=4, n1=4, n2=4)
        with pytest.raises(ValueError, match="unsupported boundary"):
            est.fit()

    def test_unfitted_predict_raises(self, const_model):
        est = FiniteDifferenceSolver(model=const_model)
        with pytest.raises(NotFittedError):
            est.predict([[0.0, 0.0, 1.0]])
