"""Acceptance gate: one numbered, tolerance-pinned check per criterion.

Each test prints a single ``[criterion NN] PASS/FAIL`` line before
asserting, so ``pytest tests/test_acceptance.py -s`` reads as a report.
The heavy shared fixtures (the fully trained network and the
network-bounded finite-difference cube) live in conftest.py and are built
once per session.

Three clauses are expected to fail on the bundled problem and are
asserted at their stated bounds anyway: the trained network's terminal
plane over the plot window, the monotone decay of its window error in
time, and the comparison growth direction.  The root cause is shared: the
true solution reaches ~1e6 near the high-premium low-variance corner, so
the sampled residual drags the 50-neuron surface far from 1 across the
whole low-variance strip, window included.  See README.
"""

import time
from dataclasses import replace

import numpy as np
import pytest

from mertonhjb.artifacts import read_manifest
from mertonhjb.cli import main
from mertonhjb.fdm import Grid3D, solve_backward
from mertonhjb.model import OUCIRHestonModel
from mertonhjb.net import JetAdjoint, init_network, loss_param_gradient
from mertonhjb.pde import constant_oracle
from mertonhjb.portfolio import (NetworkSurface, derivatives_from_reduced,
                                 optimal_weight, unreduced_weight)

from test_cli import MODEL_LINES, TINY_TRAIN
from test_fdm import mms_error

WINDOW = np.linspace(0.0, 1.0, 21)
FRACS = (0.0, 0.25, 0.5, 0.75)


def report(num: int, ok: bool, detail: str):
    print(f"\n[criterion {num:02d}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"criterion {num}: {detail}"


def window_points():
    W1, W2 = np.meshgrid(WINDOW, WINDOW, indexing="ij")
    return np.column_stack([W1.ravel(), W2.ravel()])


# -- 1: parameter gradient against central finite differences ---------------

def _probe_functional(rng, n_points, d):
    """Random linear functional touching every jet channel; returns
    (loss_fn, forward_value) where forward_value recomputes the scalar from
    a JetBatch without the adjoint."""
    wv = rng.normal(size=n_points)
    wt = rng.normal(size=n_points)
    wg = rng.normal(size=(n_points, d))
    wh = rng.normal(size=(n_points, d, d))
    wh = 0.5 * (wh + wh.transpose(0, 2, 1))  # pair with a symmetric hessian

    def value(jets):
        return (float(wv @ jets.value) + float(wt @ jets.du_dt)
                + float(np.sum(wg * jets.grad)) + float(np.sum(wh * jets.hess)))

    def loss_fn(jets):
        return value(jets), JetAdjoint(value=wv, du_dt=wt, grad=wg, hess=wh)

    return loss_fn, value


def test_criterion_01_parameter_gradient(box):
    rng = np.random.default_rng(11)
    start = time.perf_counter()
    worst = 0.0
    for k in range(20):
        n_hidden = (1, 5, 50)[k % 3]
        net = init_network(n_hidden, box, seed=100 + k)
        net.set_param_vector(net.param_vector() + 0.1 * rng.normal(size=net.n_params))
        m = 8
        t = rng.uniform(0.0, 1.0, size=m)
        y = np.column_stack([rng.uniform(-10, 10, size=m), rng.uniform(0, 10, size=m)])
        loss_fn, value = _probe_functional(rng, m, 2)
        grad = loss_param_gradient(net, t, y, loss_fn)

        theta = net.param_vector()
        eps = 1e-6
        for i in range(net.n_params):
            stepped = theta.copy()
            stepped[i] += eps
            net.set_param_vector(stepped)
            up = value(net.jets(t, y))
            stepped[i] -= 2 * eps
            net.set_param_vector(stepped)
            dn = value(net.jets(t, y))
            net.set_param_vector(theta)
            fd = (up - dn) / (2 * eps)
            err = abs(grad[i] - fd)
            if err > max(1e-5 * abs(fd), 1e-9):
                report(1, False,
                       f"net {k} (n_hidden {n_hidden}) param {i}: "
                       f"analytic {grad[i]:.6e} vs fd {fd:.6e}")
            worst = max(worst, err / max(abs(fd), 1e-4))
    elapsed = time.perf_counter() - start
    report(1, elapsed < 60.0,
           f"20 nets, worst scaled error {worst:.2e}, {elapsed:.1f} s (< 60 s)")


# -- 2: input derivatives against lower-order finite differences ------------

def test_criterion_02_input_derivatives(box):
    net = init_network(50, box, seed=123)
    rng = np.random.default_rng(17)
    eps = 1e-6
    worst_g = worst_h = 0.0
    for _ in range(100):
        t = rng.uniform(0.0, 1.0)
        y = np.array([rng.uniform(-10, 10), rng.uniform(0, 10)])

        dt, dy = net.input_gradient(t, y)
        fd = np.empty(3)
        fd[0] = (net.forward(t + eps, y) - net.forward(t - eps, y)) / (2 * eps)
        for k in range(2):
            step = np.zeros(2)
            step[k] = eps
            fd[1 + k] = (net.forward(t, y + step) - net.forward(t, y - step)) / (2 * eps)
        analytic = np.array([dt, dy[0], dy[1]])
        worst_g = max(worst_g,
                      np.max(np.abs(analytic - fd)) / max(np.max(np.abs(fd)), 1e-12))

        hess = net.input_hessian(t, y)
        fdh = np.empty((2, 2))
        for k in range(2):
            step = np.zeros(2)
            step[k] = eps
            _, gp = net.input_gradient(t, y + step)
            _, gm = net.input_gradient(t, y - step)
            fdh[:, k] = (gp - gm) / (2 * eps)
        worst_h = max(worst_h,
                      np.max(np.abs(hess - fdh)) / max(np.max(np.abs(fdh)), 1e-12))

    report(2, worst_g <= 1e-6 and worst_h <= 1e-4,
           f"100 points: gradient rel {worst_g:.2e} (<= 1e-6), "
           f"hessian rel {worst_h:.2e} (<= 1e-4)")


# -- 3: constant-coefficient analytic oracle ---------------------------------

def test_criterion_03_constant_oracle_dgm(const_model, box, trained_constant):
    c, T = const_model.c, const_model.T
    pts = window_points() * np.array([20.0, 10.0]) + np.array([-10.0, 0.0])
    worst = 0.0
    for frac in np.linspace(0.0, 1.0, 11):
        t = frac * T
        vals = trained_constant.net.forward(np.full(pts.shape[0], t), pts)
        worst = max(worst, float(np.max(np.abs(vals - constant_oracle(t, c, T)))))
    ok = worst <= 1e-2 and trained_constant.elapsed < 600.0
    report(3, ok, f"mesh-free max |u - exp(c(T-t))| = {worst:.3e} (<= 1e-2) "
                  f"after 2000 outer steps in {trained_constant.elapsed:.1f} s")


def test_criterion_03_constant_oracle_fdm(const_model):
    c, T = const_model.c, const_model.T

    def oracle_boundary(t, y):
        return np.full(np.asarray(y).shape[0], constant_oracle(t, c, T))
    oracle_boundary.name = "oracle"

    start = time.perf_counter()
    cube = solve_backward(Grid3D(const_model.domain), const_model, oracle_boundary)
    elapsed = time.perf_counter() - start
    vals = np.asarray(cube.values, dtype=float)
    worst = max(float(np.max(np.abs(vals[n] - constant_oracle(cube.level_time(n), c, T))))
                for n in range(cube.grid.nt + 1))
    report(3, worst <= 1e-3 and elapsed < 5.0,
           f"grid solver max level error {worst:.3e} (<= 1e-3) over 41 levels "
           f"in {elapsed:.2f} s (< 5 s)")


# -- 4: manufactured-solution spatial order ----------------------------------

def test_criterion_04_stencil_order(model):
    e40, e80, e160 = (mms_error(model, n) for n in (40, 80, 160))
    o1 = np.log2(e40 / e80)
    o2 = np.log2(e80 / e160)
    report(4, o1 >= 1.8 and o2 >= 1.8,
           f"observed orders {o1:.3f} (40->80), {o2:.3f} (80->160); both >= 1.8")


# -- 5: Newton robustness on the bundled p = 0.0005 run ----------------------

def test_criterion_05_newton_robustness(full_cube):
    cube = full_cube.cube
    worst = float(np.max(cube.residual_norms))
    iters = int(np.max(cube.iterations))
    ok = (cube.status == "complete" and worst <= 1e-10 and iters <= 20
          and full_cube.elapsed <= 120.0)
    report(5, ok, f"40 levels: worst ||F||_inf {worst:.2e} (<= 1e-10), "
                  f"max {iters} Newton iterations (<= 20), "
                  f"{full_cube.elapsed:.1f} s (<= 120 s)")


# -- 6: terminal-condition reproduction --------------------------------------

def _window_level_means(cube):
    grid = cube.grid
    sel1 = np.where((grid.y1_nodes >= 0.0) & (grid.y1_nodes <= 1.0))[0]
    sel2 = np.where((grid.y2_nodes >= 0.0) & (grid.y2_nodes <= 1.0))[0]
    vals = np.asarray(cube.values, dtype=float)
    return [float(np.mean(np.abs(vals[int(round(f * grid.nt))][np.ix_(sel1, sel2)] - 1.0)))
            for f in FRACS]


def test_criterion_06_fdm_window_monotone(full_cube):
    means = _window_level_means(full_cube.cube)
    mono = all(a >= b - 1e-15 for a, b in zip(means, means[1:]))
    report(6, mono, "grid solver window mean |u - 1| nonincreasing in t: "
                    + ", ".join(f"{m:.4f}" for m in means))


def test_criterion_06_dgm_window_monotone(model, trained_full):
    pts = window_points()
    means = [float(np.mean(np.abs(
        trained_full.net.forward(np.full(pts.shape[0], f * model.T), pts) - 1.0)))
        for f in FRACS]
    mono = all(a >= b - 1e-15 for a, b in zip(means, means[1:]))
    report(6, mono, "mesh-free window mean |f - 1| nonincreasing in t: "
                    + ", ".join(f"{m:.4f}" for m in means))


def test_criterion_06_dgm_terminal_plane(model, trained_full):
    pts = window_points()
    vals = trained_full.net.forward(np.full(pts.shape[0], model.T), pts)
    worst = float(np.max(np.abs(vals - 1.0)))
    report(6, worst <= 0.05,
           f"trained network max |f(T, .) - 1| = {worst:.3f} on the 21x21 "
           f"window lattice (bound 0.05)")


# -- 7: comparison error growth ----------------------------------------------

def test_criterion_07_error_growth(model, trained_full, full_cube):
    grid = full_cube.grid
    sel1 = np.where((grid.y1_nodes >= 0.0) & (grid.y1_nodes <= 1.0))[0]
    sel2 = np.where((grid.y2_nodes >= 0.0) & (grid.y2_nodes <= 1.0))[0]
    W1, W2 = np.meshgrid(grid.y1_nodes[sel1], grid.y2_nodes[sel2], indexing="ij")
    pts = np.column_stack([W1.ravel(), W2.ravel()])
    vals = np.asarray(full_cube.cube.values, dtype=float)

    def mean_diff(frac):
        level = vals[int(round(frac * grid.nt))][np.ix_(sel1, sel2)].ravel()
        net_vals = trained_full.net.forward(np.full(pts.shape[0], frac * model.T), pts)
        return float(np.mean(np.abs(net_vals - level)))

    at0, at75 = mean_diff(0.0), mean_diff(0.75)
    report(7, at0 >= at75,
           f"window mean |dgm - fdm|: {at0:.4f} at t = 0 vs {at75:.4f} at "
           f"t = 0.75T (growth toward t = 0 expected)")


# -- 8: Merton-ratio identity -------------------------------------------------

def test_criterion_08_merton_identity(table1, model):
    params, domain = table1
    zero_rho = replace(params, rho1=0.0, rho2=0.0)
    m0 = OUCIRHestonModel(zero_rho, domain)

    class Flat:
        def value(self, t, y):
            return 1.0

        def gradient(self, t, y):
            return np.array([0.21, -0.55])

    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        y = np.array([rng.uniform(-10, 10), rng.uniform(0, 10)])
        pi = optimal_weight(0.3, y, Flat(), m0)[0]
        y2c = max(y[1], domain.y2_floor)
        merton = y[0] / ((1.0 - zero_rho.p) * zero_rho.sigma ** 2 * y2c)
        worst = max(worst, abs(pi - merton))
    ok_ratio = worst <= 1e-10

    net = init_network(6, domain, seed=3)
    net.c = 2.0  # keep the surface positive so V stays concave in wealth
    surf = NetworkSurface(net)
    worst_vv = 0.0
    for _ in range(100):
        t = rng.uniform(0.0, 1.0)
        x = rng.uniform(0.1, 10.0)
        y = np.array([rng.uniform(-10, 10), rng.uniform(0, 10)])
        u = surf.value(t, y)
        d = derivatives_from_reduced(x, u, surf.gradient(t, y), model.p)
        pi_v = unreduced_weight(t, x, y, d, model)
        pi_u = optimal_weight(t, y, surf, model)
        worst_vv = max(worst_vv,
                       float(np.max(np.abs(pi_v - pi_u)
                                    / np.maximum(np.abs(pi_u), 1.0))))
    report(8, ok_ratio and worst_vv <= 1e-12,
           f"rho = 0 Merton gap {worst:.2e} (<= 1e-10) at 100 states; "
           f"unreduced vs reduced weight gap {worst_vv:.2e} (<= 1e-12)")


# -- 9: run determinism --------------------------------------------------------

def test_criterion_09_determinism(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(MODEL_LINES + "p = 0.0005\n" + TINY_TRAIN)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["solve-dgm", "--config", str(cfg), "--out-dir", str(out_a)]) == 0
    assert main(["solve-dgm", "--config", str(cfg), "--out-dir", str(out_b)]) == 0
    names = ["history.csv", "model.net"] + [f"u_t{s}.csv"
                                            for s in ("0.00", "0.25", "0.50", "0.75")]
    identical = all((out_a / n).read_bytes() == (out_b / n).read_bytes()
                    for n in names)
    same_id = read_manifest(out_a)["run_id"] == read_manifest(out_b)["run_id"]
    report(9, identical and same_id,
           f"two seeded runs byte-identical across {len(names)} files, equal run ids")


# -- 10: the p = 0.5 singular outcome -----------------------------------------

def test_criterion_10_singular_exponent(tmp_path, capsys):
    cfg = tmp_path / "run05.cfg"
    cfg.write_text(MODEL_LINES + "p = 0.5\n")
    out = tmp_path / "fdm05"
    code = main(["solve-fdm", "--config", str(cfg), "--out-dir", str(out),
                 "--boundary-one"])
    capsys.readouterr()
    manifest = read_manifest(out)
    per_level = manifest["max_abs_per_level"]
    recorded = len(per_level) == 41 and any(v is not None for v in per_level)
    ok = code in (0, 4) and recorded and (code == 0 or manifest["status"] == "singular")
    solved = sum(v is not None for v in per_level)
    report(10, ok, f"exit {code} with status {manifest['status']!r}; "
                   f"max |u| recorded for {solved}/41 levels")
