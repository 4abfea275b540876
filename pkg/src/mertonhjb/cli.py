"""Command-line entry points.

Subcommands::

    solve-dgm   train the mesh-free solver; writes the model file, the loss
                history and u-surfaces at fixed times over the plot window
    solve-fdm   backward finite-difference march; writes the full solution
                cube, fixed-time surfaces and Newton statistics
    compare     absolute-difference surfaces and per-time summary between a
                solve-dgm run and a solve-fdm run
    portfolio   optimal-weight surface from a finished run

Exit status: 0 success, 2 usage or configuration error, 3 numerical
failure, 4 expected singular outcome of the finite-difference march (the
cube written so far is kept).
"""

import argparse
import os
import sys
import time

import numpy as np

from . import artifacts
from .dgm import TrainConfig, train
from .exceptions import (ConfigError, DivisionHazardError, DomainMismatchError,
                         MertonHJBError, NewtonError, NonFiniteError,
                         TrainingAbortError)
from .fdm import Grid3D, SolutionCube, constant_one_boundary, network_boundary, solve_backward
from .model import MODEL_KEYS, OUCIRHestonModel, params_from_mapping
from .net import init_network, load_network, save_network
from .portfolio import CubeSurface, NetworkSurface, optimal_weight

MODEL_FILE = "model.net"
HISTORY_FILE = "history.csv"
DEFAULT_TIMES = (0.0, 0.25, 0.5, 0.75)

# A completed march whose values exceed this magnitude is still classified
# as the singular outcome.
SINGULAR_MAX_ABS = 1e10

TRAIN_KEYS = ("n_hidden", "n_interior", "n_terminal", "resample_every", "inner_steps",
              "max_outer_steps", "lr_init", "lr_decay", "lr_decay_every", "optimizer",
              "adam_beta1", "adam_beta2", "adam_eps", "seed", "theta_tol", "log_every")
GRID_KEYS = ("nt", "n1", "n2", "newton_tol", "newton_max_iter")
WINDOW_KEYS = ("window_y1_lo", "window_y1_hi", "window_y2_lo", "window_y2_hi")
KNOWN_KEYS = set(MODEL_KEYS) | set(TRAIN_KEYS) | set(GRID_KEYS) | set(WINDOW_KEYS)


# -- configuration plumbing ------------------------------------------------

def _load_run_config(path):
    mapping = artifacts.load_config(path)
    unknown = sorted(set(mapping) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    params, domain = params_from_mapping(mapping)
    model = OUCIRHestonModel(params, domain)
    return mapping, model


def _train_config(mapping, seed_override=None) -> TrainConfig:
    kw = {}
    for key in TRAIN_KEYS:
        if key in mapping:
            kw[key] = mapping[key]
    for key in ("n_hidden",):
        kw.pop(key, None)  # network size is not a TrainConfig field
    for key in ("n_interior", "n_terminal", "resample_every", "inner_steps",
                "max_outer_steps", "lr_decay_every", "seed", "log_every"):
        if key in kw:
            kw[key] = int(kw[key])
    if seed_override is not None:
        kw["seed"] = int(seed_override)
    try:
        return TrainConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad training configuration: {exc}") from exc


def _grid(mapping, model) -> Grid3D:
    try:
        return Grid3D(model.domain,
                      nt=int(mapping.get("nt", 40)),
                      n1=int(mapping.get("n1", 40)),
                      n2=int(mapping.get("n2", 40)))
    except ValueError as exc:
        raise ConfigError(f"bad grid configuration: {exc}") from exc


def _window(args, mapping, model):
    """Plot window ((y1_lo, y1_hi), (y2_lo, y2_hi)); flag > config > default."""
    if getattr(args, "window", None):
        parts = [float(v) for v in args.window.split(",")]
        if len(parts) == 2:
            return (parts[0], parts[1]), (parts[0], parts[1])
        if len(parts) == 4:
            return (parts[0], parts[1]), (parts[2], parts[3])
        raise ConfigError("--window expects 'lo,hi' or 'y1_lo,y1_hi,y2_lo,y2_hi'")
    if all(k in mapping for k in WINDOW_KEYS):
        return ((mapping["window_y1_lo"], mapping["window_y1_hi"]),
                (mapping["window_y2_lo"], mapping["window_y2_hi"]))
    hi = 1.0 if model.p <= 0.1 else 5.0
    return (0.0, hi), (0.0, hi)


def _times(args, model):
    """Fixed output times as fractions of the horizon."""
    if getattr(args, "times", None):
        fracs = tuple(float(v) for v in args.times.split(","))
    else:
        fracs = DEFAULT_TIMES
    for f in fracs:
        if not 0.0 <= f <= 1.0:
            raise ConfigError(f"--times entries are fractions of T in [0, 1], got {f}")
    return fracs


def _time_label(frac: float) -> str:
    return f"{frac:.2f}".replace("-", "m")


def _ensure_out_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


# -- solve-dgm -------------------------------------------------------------

def cmd_solve_dgm(args) -> int:
    mapping, model = _load_run_config(args.config)
    cfg = _train_config(mapping, args.seed)
    window, fracs = _window(args, mapping, model), _times(args, model)
    out = _ensure_out_dir(args.out_dir)

    n_hidden = int(mapping.get("n_hidden", 50))
    net = init_network(n_hidden, model.domain, seed=cfg.seed)
    t0 = time.perf_counter()
    result = train(net, cfg, model)
    train_s = time.perf_counter() - t0

    files = []
    model_path = os.path.join(out, MODEL_FILE)
    save_network(result.net, model_path)
    files.append(model_path)
    history_path = os.path.join(out, HISTORY_FILE)
    artifacts.write_history_csv(history_path, result.history)
    files.append(history_path)

    (w1, w2) = window
    y1_nodes = np.linspace(w1[0], w1[1], 41)
    y2_nodes = np.linspace(w2[0], w2[1], 41)
    mesh1, mesh2 = np.meshgrid(y1_nodes, y2_nodes, indexing="ij")
    states = np.column_stack([mesh1.ravel(), mesh2.ravel()])
    for frac in fracs:
        t = frac * model.T
        vals = result.net.forward(np.full(states.shape[0], t), states)
        path = os.path.join(out, f"u_t{_time_label(frac)}.csv")
        artifacts.write_surface_csv(path, y1_nodes, y2_nodes,
                                    vals.reshape(41, 41), "u")
        files.append(path)

    snapshot = dict(mapping)
    snapshot.update(seed=cfg.seed, window=list(window), times=list(fracs))
    final = result.history[-1] if result.history else None
    artifacts.write_manifest(out, "solve-dgm", snapshot, cfg.seed,
                             {"train": round(train_s, 3)}, files,
                             extra={"n_params": result.net.n_params,
                                    "updates": len(result.history),
                                    "final_J": final[1] if final else None})
    print(f"solve-dgm: {len(result.history)} updates in {train_s:.1f} s -> {out}")
    return 0


# -- solve-fdm -------------------------------------------------------------

def _boundary_from_args(args, model):
    if args.boundary_one and args.boundary_net:
        raise ConfigError("--boundary-one and --boundary-net are mutually exclusive")
    if args.boundary_one:
        return constant_one_boundary()
    if args.boundary_net:
        net = load_network(args.boundary_net)
        if not (np.allclose(net.lo, model.domain.lo) and np.allclose(net.hi, model.domain.hi)):
            raise ConfigError("boundary network was trained on a different state domain")
        return network_boundary(net)
    raise ConfigError("solve-fdm needs a boundary source: either --boundary-net FILE "
                      "from a solve-dgm run or --boundary-one")


def cmd_solve_fdm(args) -> int:
    mapping, model = _load_run_config(args.config)
    grid = _grid(mapping, model)
    window, fracs = _window(args, mapping, model), _times(args, model)
    tol = float(mapping.get("newton_tol", 1e-10))
    max_iter = int(mapping.get("newton_max_iter", 20))
    boundary = _boundary_from_args(args, model)
    out = _ensure_out_dir(args.out_dir)

    status = "complete"
    failure = None
    t0 = time.perf_counter()
    try:
        cube = solve_backward(grid, model, boundary, tol=tol, max_iter=max_iter,
                              verbose=args.verbose)
    except NewtonError as exc:
        if exc.partial is None:
            raise
        cube = exc.partial
        status = "singular"
        failure = str(exc)
    solve_s = time.perf_counter() - t0

    max_abs = cube.max_abs_per_level()
    if status == "complete" and np.nanmax(max_abs) > SINGULAR_MAX_ABS:
        status = "singular"
        failure = f"solution magnitude {np.nanmax(max_abs):.3e} exceeds {SINGULAR_MAX_ABS:.0e}"
    cube.status = status

    files = artifacts.write_cube_csv(out, cube)
    for frac in fracs:
        n = frac * grid.nt
        if abs(n - round(n)) > 1e-9:
            raise ConfigError(f"time fraction {frac} does not sit on a grid level")
        n = int(round(n))
        if np.any(np.isnan(cube.values[n])):
            continue  # level beyond the failure point of a singular run
        sel1 = _window_mask(grid.y1_nodes, window[0])
        sel2 = _window_mask(grid.y2_nodes, window[1])
        path = os.path.join(out, f"u_t{_time_label(frac)}.csv")
        artifacts.write_surface_csv(path, grid.y1_nodes[sel1], grid.y2_nodes[sel2],
                                    cube.values[n][np.ix_(sel1, sel2)], "u")
        files.append(path)

    snapshot = dict(mapping)
    snapshot.update(window=list(window), times=list(fracs),
                    boundary=getattr(boundary, "name", "custom"))
    extra = {
        "status": status,
        "dt": grid.dt, "dy1": grid.dy1, "dy2": grid.dy2,
        "newton_tol": tol, "newton_max_iter": max_iter,
        "newton_iterations": cube.iterations.tolist(),
        "residual_norms": [None if np.isnan(v) else float(v) for v in cube.residual_norms],
        "max_abs_per_level": [None if np.isnan(v) else v for v in max_abs],
    }
    if failure:
        extra["failure"] = failure
    artifacts.write_manifest(out, "solve-fdm", snapshot, None,
                             {"solve": round(solve_s, 3)}, files, extra=extra)
    if status == "singular":
        print(f"solve-fdm: singular outcome ({failure}); partial cube -> {out}",
              file=sys.stderr)
        return 4
    print(f"solve-fdm: {grid.nt} levels in {solve_s:.1f} s, "
          f"max newton iters {int(cube.iterations.max())} -> {out}")
    return 0


def _window_mask(nodes, bounds):
    lo, hi = bounds
    eps = 1e-9 * max(1.0, abs(hi), abs(lo))
    return np.where((nodes >= lo - eps) & (nodes <= hi + eps))[0]


# -- compare ---------------------------------------------------------------

def _model_snapshot(manifest):
    cfg = manifest.get("config", {})
    return {k: cfg.get(k) for k in MODEL_KEYS if k in cfg}


def cmd_compare(args) -> int:
    man_dgm = artifacts.read_manifest(args.dgm_run)
    man_fdm = artifacts.read_manifest(args.fdm_run)
    if man_dgm.get("kind") != "solve-dgm":
        raise ConfigError(f"{args.dgm_run} is not a solve-dgm run")
    if man_fdm.get("kind") != "solve-fdm":
        raise ConfigError(f"{args.fdm_run} is not a solve-fdm run")
    snap_dgm, snap_fdm = _model_snapshot(man_dgm), _model_snapshot(man_fdm)
    if snap_dgm != snap_fdm:
        diff = [k for k in set(snap_dgm) | set(snap_fdm)
                if snap_dgm.get(k) != snap_fdm.get(k)]
        raise DomainMismatchError(
            f"runs disagree on model/domain keys: {', '.join(sorted(diff))}")

    params, _ = params_from_mapping(snap_fdm)
    model = OUCIRHestonModel(params)
    grid = _grid(man_fdm.get("config", {}), model)
    cube_values = artifacts.read_cube_levels(args.fdm_run, grid)
    net = load_network(os.path.join(args.dgm_run, MODEL_FILE))
    window = _window(args, man_fdm.get("config", {}), model)
    fracs = _times(args, model)
    out = _ensure_out_dir(args.out_dir)

    sel1 = _window_mask(grid.y1_nodes, window[0])
    sel2 = _window_mask(grid.y2_nodes, window[1])
    y1 = grid.y1_nodes[sel1]
    y2 = grid.y2_nodes[sel2]
    mesh1, mesh2 = np.meshgrid(y1, y2, indexing="ij")
    states = np.column_stack([mesh1.ravel(), mesh2.ravel()])

    files = []
    summary = []
    for frac in fracs:
        n = frac * grid.nt
        if abs(n - round(n)) > 1e-9:
            raise ConfigError(f"time fraction {frac} does not sit on a grid level")
        n = int(round(n))
        t = frac * model.T
        fdm_vals = cube_values[n][np.ix_(sel1, sel2)]
        if np.any(np.isnan(fdm_vals)):
            print(f"compare: skipping t = {t} (level {n} missing from the cube)",
                  file=sys.stderr)
            continue
        # The network is evaluated exactly at the grid nodes: no interpolation.
        dgm_vals = net.forward(np.full(states.shape[0], t), states).reshape(fdm_vals.shape)
        err = np.abs(dgm_vals - fdm_vals)
        path = os.path.join(out, f"abs_err_t{_time_label(frac)}.csv")
        artifacts.write_surface_csv(path, y1, y2, err, "abs_err")
        files.append(path)
        summary.append((t, float(err.mean()), float(err.max())))

    summary_path = os.path.join(out, "summary.csv")
    with open(summary_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("t,mean_abs_err,max_abs_err\n")
        for t, mean_err, max_err in summary:
            fh.write(f"{artifacts.FLOAT_FMT % t},{artifacts.FLOAT_FMT % mean_err},"
                     f"{artifacts.FLOAT_FMT % max_err}\n")
    files.append(summary_path)

    snapshot = {"dgm_run": man_dgm.get("run_id"), "fdm_run": man_fdm.get("run_id"),
                "model": snap_fdm, "window": list(window), "times": list(fracs)}
    artifacts.write_manifest(out, "compare", snapshot, None, {}, files)
    print("t      mean|dgm-fdm|   max|dgm-fdm|")
    for t, mean_err, max_err in summary:
        print(f"{t:5.2f}  {mean_err:13.6e}  {max_err:13.6e}")
    return 0


# -- portfolio -------------------------------------------------------------

def cmd_portfolio(args) -> int:
    manifest = artifacts.read_manifest(args.run)
    kind = manifest.get("kind")
    cfg = manifest.get("config", {})
    params, _ = params_from_mapping(cfg)
    model = OUCIRHestonModel(params)
    if kind == "solve-dgm":
        surface = NetworkSurface(load_network(os.path.join(args.run, MODEL_FILE)))
    elif kind == "solve-fdm":
        grid = _grid(cfg, model)
        values = artifacts.read_cube_levels(args.run, grid)
        if np.any(np.isnan(values)):
            raise ConfigError(f"{args.run}: cube is incomplete; cannot evaluate weights")
        cube = SolutionCube(grid=grid, values=values,
                            iterations=np.zeros(grid.nt, dtype=int))
        surface = CubeSurface(cube)
    else:
        raise ConfigError(f"{args.run} is not a solve-dgm or solve-fdm run")

    frac = float(args.t)
    if not 0.0 <= frac <= 1.0:
        raise ConfigError(f"--t is a fraction of T in [0, 1], got {frac}")
    t = frac * model.T
    try:
        g1, g2 = (int(v) for v in args.grid.lower().split("x"))
    except ValueError as exc:
        raise ConfigError(f"--grid expects 'N1xN2', got {args.grid!r}") from exc
    window = _window(args, cfg, model)
    y1_nodes = np.linspace(window[0][0], window[0][1], g1)
    y2_nodes = np.linspace(window[1][0], window[1][1], g2)

    out = _ensure_out_dir(args.out_dir)
    pi = np.empty((g1, g2))
    degenerate = 0
    for i, a in enumerate(y1_nodes):
        for j, b in enumerate(y2_nodes):
            try:
                pi[i, j] = optimal_weight(t, np.array([a, b]), surface, model)[0]
            except DivisionHazardError:
                pi[i, j] = np.nan
                degenerate += 1
    path = os.path.join(out, f"pi_t{_time_label(frac)}.csv")
    artifacts.write_surface_csv(path, y1_nodes, y2_nodes, pi, "pi")

    snapshot = {"run": manifest.get("run_id"), "model": _model_snapshot(manifest),
                "t": frac, "grid": args.grid, "window": list(window)}
    artifacts.write_manifest(out, "portfolio", snapshot, None, {}, [path],
                             extra={"degenerate_points": degenerate})
    print(f"portfolio: wrote {path} ({degenerate} degenerate lattice points)")
    return 0


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mertonhjb",
        description="Solvers for the reduced Merton HJB equation under an "
                    "OU+CIR state with Heston-type returns.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="flat key = value configuration file")
        p.add_argument("--out-dir", required=True, help="run output directory")
        p.add_argument("--window", help="plot window 'lo,hi' or 'y1_lo,y1_hi,y2_lo,y2_hi'")
        p.add_argument("--times", help="comma-separated output times as fractions of T")

    p = sub.add_parser("solve-dgm", help="train the mesh-free solver")
    add_common(p)
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.set_defaults(func=cmd_solve_dgm)

    p = sub.add_parser("solve-fdm", help="backward finite-difference march")
    add_common(p)
    p.add_argument("--boundary-net", help="model file from a solve-dgm run")
    p.add_argument("--boundary-one", action="store_true",
                   help="hold the terminal value 1 on the boundary shell")
    p.add_argument("--verbose", action="store_true", help="print per-level progress")
    p.set_defaults(func=cmd_solve_fdm)

    p = sub.add_parser("compare", help="difference surfaces between two runs")
    p.add_argument("--dgm-run", required=True)
    p.add_argument("--fdm-run", required=True)
    add_common(p, config=False)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("portfolio", help="optimal-weight surface from a run")
    p.add_argument("--run", required=True, help="a solve-dgm or solve-fdm run directory")
    p.add_argument("--t", required=True, help="time as a fraction of T")
    p.add_argument("--grid", default="41x41", help="lattice size N1xN2 (default 41x41)")
    add_common(p, config=False)
    p.set_defaults(func=cmd_portfolio)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DomainMismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (TrainingAbortError, NewtonError, DivisionHazardError, NonFiniteError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except MertonHJBError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
