"""Backward finite-difference march for the reduced HJB equation.

Time levels n = nt..0 on a uniform (t, y1, y2) lattice; forward difference
in time, central differences in space, 4-point cross stencil for the mixed
derivative.  Level nt is the terminal condition u = 1; every earlier level
solves the nonlinear interior system with Newton iteration, warm-started
from the level above, using the analytic sparse Jacobian and a direct
sparse factorization.  Boundary shell values come from a caller-supplied
provider evaluated at the exact level time.

The solver does not regularize: when the march hits division hazards or
Newton fails, it raises with the failing level and the partial cube so the
caller can record the outcome.

Level values and residuals are carried in extended precision (longdouble)
while the Jacobian is factorized in float64, iterative-refinement style.
The solution reaches ~1e5 near the high-|y1|, low-y2 corners, where the
residual of the best float64-representable level is quantized in steps of
roughly |dF/du| * ulp(u) ~ 3e-10; tight residual tolerances are reachable
only with the wider accumulator.  On platforms whose longdouble is float64
the achievable floor degrades accordingly.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import splu

from .exceptions import DivisionHazardError, NewtonError, NonFiniteError
from .model import MarketModel, StateDomain
from .net import Network
from .pde import U_THRESHOLD


@dataclass(frozen=True)
class Grid3D:
    """Uniform lattice with nt, n1, n2 intervals per axis (one more node each)."""

    domain: StateDomain
    nt: int = 40
    n1: int = 40
    n2: int = 40

    def __post_init__(self):
        for name in ("nt", "n1", "n2"):
            if getattr(self, name) < 2:
                raise ValueError(f"{name} must be at least 2, got {getattr(self, name)}")

    @property
    def dt(self) -> float:
        return (self.domain.t_hi - self.domain.t_lo) / self.nt

    @property
    def dy1(self) -> float:
        return (self.domain.y1_hi - self.domain.y1_lo) / self.n1

    @property
    def dy2(self) -> float:
        return (self.domain.y2_hi - self.domain.y2_lo) / self.n2

    @property
    def t_nodes(self) -> np.ndarray:
        return self.domain.t_lo + self.dt * np.arange(self.nt + 1)

    @property
    def y1_nodes(self) -> np.ndarray:
        return self.domain.y1_lo + self.dy1 * np.arange(self.n1 + 1)

    @property
    def y2_nodes(self) -> np.ndarray:
        return self.domain.y2_lo + self.dy2 * np.arange(self.n2 + 1)

    @property
    def n_interior(self) -> int:
        return (self.n1 - 1) * (self.n2 - 1)

    def shell_states(self):
        """Index pairs and (y1, y2) coordinates of the boundary shell."""
        idx = [(i, j) for i in range(self.n1 + 1) for j in range(self.n2 + 1)
               if i in (0, self.n1) or j in (0, self.n2)]
        ii = np.array([p[0] for p in idx])
        jj = np.array([p[1] for p in idx])
        states = np.column_stack([self.y1_nodes[ii], self.y2_nodes[jj]])
        return ii, jj, states


@dataclass
class SolutionCube:
    """u[n][i][j] over the full lattice, time level major.

    ``values`` keeps the solver's extended-precision dtype; cast for export.
    ``iterations[n]`` and ``residual_norms[n]`` record the Newton iteration
    count and achieved max-norm residual at level n < nt; ``status`` is
    'complete' or 'singular'.
    """

    grid: Grid3D
    values: np.ndarray                    # (nt + 1, n1 + 1, n2 + 1)
    iterations: np.ndarray                # (nt,)
    residual_norms: np.ndarray = None     # (nt,)
    status: str = "complete"
    boundary_name: str = ""

    def __post_init__(self):
        if self.residual_norms is None:
            self.residual_norms = np.full(self.grid.nt, np.nan)

    def max_abs_per_level(self) -> np.ndarray:
        # Unsolved levels of a partial cube are all-NaN; report them as NaN.
        out = np.full(self.values.shape[0], np.nan)
        for n in range(self.values.shape[0]):
            level = self.values[n]
            finite = np.isfinite(level)
            if np.any(finite):
                out[n] = float(np.max(np.abs(level[finite])))
        return out

    def level_time(self, n: int) -> float:
        return float(self.grid.t_nodes[n])


# -- boundary providers ----------------------------------------------------

def network_boundary(net: Network):
    """Boundary data from a trained network, evaluated at each level's time."""
    def provider(t, y):
        return net.forward(t, y)
    provider.name = "network"
    return provider


def constant_one_boundary():
    """Boundary data frozen at the terminal value 1."""
    def provider(t, y):
        return np.ones(np.asarray(y).shape[0])
    provider.name = "one"
    return provider


# -- pointwise coefficients over the interior lattice ----------------------

class CoefficientField:
    """PDE coefficients stacked over the interior nodes of a grid.

    The coefficients depend only on the state, so one field serves every
    time level and every Newton iteration.
    """

    def __init__(self, grid: Grid3D, model: MarketModel):
        self.grid = grid
        y1 = grid.y1_nodes[1:-1]
        y2 = grid.y2_nodes[1:-1]
        k, l = y1.size, y2.size
        self.first1 = np.empty((k, l))
        self.first2 = np.empty((k, l))
        self.second11 = np.empty((k, l))
        self.second12 = np.empty((k, l))
        self.second22 = np.empty((k, l))
        self.zeroth = np.empty((k, l))
        self.gq11 = np.empty((k, l))
        self.gq12 = np.empty((k, l))
        self.gq22 = np.empty((k, l))
        for a in range(k):
            for b in range(l):
                cs = model.coefficients(np.array([y1[a], y2[b]]))
                self.first1[a, b] = cs.first_order[0]
                self.first2[a, b] = cs.first_order[1]
                self.second11[a, b] = cs.second_order[0, 0]
                self.second12[a, b] = cs.second_order[0, 1]
                self.second22[a, b] = cs.second_order[1, 1]
                self.zeroth[a, b] = cs.zeroth_order
                self.gq11[a, b] = cs.grad_quad[0, 0]
                self.gq12[a, b] = cs.grad_quad[0, 1]
                self.gq22[a, b] = cs.grad_quad[1, 1]


def _interior_stencil(field: CoefficientField, grid: Grid3D, level_n, level_np1):
    """Residual terms shared by the residual and the Jacobian."""
    u = level_n
    center = u[1:-1, 1:-1]
    if np.any(np.abs(center) < U_THRESHOLD):
        k = int(np.sum(np.abs(center) < U_THRESHOLD))
        raise DivisionHazardError(
            f"|u| below {U_THRESHOLD} at {k} interior nodes; 1/u stencil term untrusted")
    dy1, dy2, dt = grid.dy1, grid.dy2, grid.dt
    g1 = (u[2:, 1:-1] - u[:-2, 1:-1]) / (2.0 * dy1)
    g2 = (u[1:-1, 2:] - u[1:-1, :-2]) / (2.0 * dy2)
    d11 = (u[2:, 1:-1] - 2.0 * center + u[:-2, 1:-1]) / dy1 ** 2
    d22 = (u[1:-1, 2:] - 2.0 * center + u[1:-1, :-2]) / dy2 ** 2
    d12 = (u[2:, 2:] - u[2:, :-2] - u[:-2, 2:] + u[:-2, :-2]) / (4.0 * dy1 * dy2)
    quad = field.gq11 * g1 * g1 + 2.0 * field.gq12 * g1 * g2 + field.gq22 * g2 * g2
    res = ((level_np1[1:-1, 1:-1] - center) / dt
           + field.first1 * g1 + field.first2 * g2
           + field.second11 * d11 + 2.0 * field.second12 * d12 + field.second22 * d22
           + field.zeroth * center
           - quad / center)
    return res, center, g1, g2, quad


def stencil_residual(grid: Grid3D, model: MarketModel, level_n, level_np1) -> np.ndarray:
    """Flat residual over the interior nodes given two complete levels.

    Evaluated in extended precision and returned as float64.
    """
    level_n = np.asarray(level_n, dtype=np.longdouble)
    level_np1 = np.asarray(level_np1, dtype=np.longdouble)
    shape = (grid.n1 + 1, grid.n2 + 1)
    if level_n.shape != shape or level_np1.shape != shape:
        raise ValueError(f"levels must have shape {shape}")
    field = CoefficientField(grid, model)
    res, *_ = _interior_stencil(field, grid, level_n, level_np1)
    return res.ravel().astype(float)


def _jacobian(field: CoefficientField, grid: Grid3D, center, g1, g2, quad):
    """Sparse Jacobian of the interior residual in the interior unknowns."""
    dy1, dy2, dt = grid.dy1, grid.dy2, grid.dt
    k, l = center.shape
    m = k * l
    r = np.arange(m).reshape(k, l)

    qg1 = 2.0 * (field.gq11 * g1 + field.gq12 * g2)
    qg2 = 2.0 * (field.gq12 * g1 + field.gq22 * g2)

    diag = (-1.0 / dt
            - 2.0 * field.second11 / dy1 ** 2
            - 2.0 * field.second22 / dy2 ** 2
            + field.zeroth
            + quad / center ** 2)
    east = field.first1 / (2.0 * dy1) + field.second11 / dy1 ** 2 - qg1 / (2.0 * dy1 * center)
    west = -field.first1 / (2.0 * dy1) + field.second11 / dy1 ** 2 + qg1 / (2.0 * dy1 * center)
    north = field.first2 / (2.0 * dy2) + field.second22 / dy2 ** 2 - qg2 / (2.0 * dy2 * center)
    south = -field.first2 / (2.0 * dy2) + field.second22 / dy2 ** 2 + qg2 / (2.0 * dy2 * center)
    cross = field.second12 / (2.0 * dy1 * dy2)

    rows, cols, data = [], [], []

    def couple(coeff, di, dj):
        # Keep only couplings whose neighbor is itself an interior unknown.
        si = slice(max(0, -di), k - max(0, di))
        sj = slice(max(0, -dj), l - max(0, dj))
        rr = r[si, sj]
        cc = r[slice(si.start + di, si.stop + di), slice(sj.start + dj, sj.stop + dj)]
        rows.append(rr.ravel())
        cols.append(cc.ravel())
        data.append(coeff[si, sj].ravel())

    couple(diag, 0, 0)
    couple(east, 1, 0)
    couple(west, -1, 0)
    couple(north, 0, 1)
    couple(south, 0, -1)
    couple(cross, 1, 1)
    couple(-cross, 1, -1)
    couple(-cross, -1, 1)
    couple(cross, -1, -1)

    # float64 is plenty for the factorization; only the residual needs width.
    return csr_matrix((np.concatenate(data).astype(float),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(m, m))


def newton_solve_level(grid: Grid3D, model: MarketModel, level_np1, shell_values,
                       tol: float = 1e-10, max_iter: int = 20,
                       warm_start=None, level=None, trace=None):
    """Solve one time level; returns (complete level array, iteration count).

    ``shell_values`` is a full-level array whose boundary shell entries hold
    the Dirichlet data for the unknown level; its interior is ignored.  Pass
    a list as ``trace`` to collect the residual max-norm of every iterate.
    """
    field = CoefficientField(grid, model)
    u, iters, _ = _newton_level(field, grid,
                                np.asarray(level_np1, dtype=np.longdouble),
                                np.asarray(shell_values, dtype=np.longdouble),
                                tol, max_iter, warm_start, level, trace)
    return u, iters


def _newton_level(field, grid, level_np1, shell_values, tol, max_iter, warm_start,
                  level, trace=None):
    tag = "" if level is None else f" at level {level}"
    u = shell_values.astype(np.longdouble)
    u[1:-1, 1:-1] = (level_np1[1:-1, 1:-1] if warm_start is None
                     else np.asarray(warm_start, dtype=np.longdouble))
    for it in range(max_iter + 1):
        res, center, g1, g2, quad = _interior_stencil(field, grid, u, level_np1)
        norm = float(np.max(np.abs(res)))
        if trace is not None:
            trace.append(norm)
        if not np.isfinite(norm):
            raise NonFiniteError(f"Newton residual non-finite{tag}")
        if norm <= tol:
            return u, it, norm
        if it == max_iter:
            raise NewtonError(f"Newton did not reach {tol} in {max_iter} iterations{tag}; "
                              f"final residual norm {norm:.3e}", level=level)
        jac = _jacobian(field, grid, center, g1, g2, quad)
        try:
            step = splu(jac.tocsc()).solve(res.ravel().astype(float))
        except RuntimeError as exc:  # singular factorization
            raise NewtonError(f"singular Newton Jacobian{tag}: {exc}", level=level) from exc
        u[1:-1, 1:-1] = center - step.reshape(center.shape)
    raise AssertionError("unreachable")


def solve_backward(grid: Grid3D, model: MarketModel, boundary,
                   tol: float = 1e-10, max_iter: int = 20,
                   verbose: bool = False) -> SolutionCube:
    """March from the terminal level down to t = 0.

    Level nt is filled with ones (terminal condition); each earlier level is
    solved by Newton with the shell supplied by ``boundary`` at that level's
    exact time.  Failures raise NewtonError carrying the failing level and
    the partial cube (failed levels left as NaN).
    """
    field = CoefficientField(grid, model)
    nt = grid.nt
    values = np.full((nt + 1, grid.n1 + 1, grid.n2 + 1), np.nan, dtype=np.longdouble)
    values[nt] = 1.0
    iterations = np.zeros(nt, dtype=int)
    residual_norms = np.full(nt, np.nan)
    ii, jj, shell_y = grid.shell_states()
    cube = SolutionCube(grid=grid, values=values, iterations=iterations,
                        residual_norms=residual_norms,
                        boundary_name=getattr(boundary, "name", ""))
    for n in range(nt - 1, -1, -1):
        t_n = float(grid.t_nodes[n])
        shell = np.zeros_like(values[nt])
        shell[ii, jj] = np.asarray(boundary(t_n, shell_y), dtype=float)
        try:
            values[n], iterations[n], residual_norms[n] = _newton_level(
                field, grid, values[n + 1], shell, tol, max_iter, None, n)
        except (NewtonError, DivisionHazardError, NonFiniteError) as exc:
            cube.status = "singular"
            raise NewtonError(f"backward march failed at level {n}: {exc}",
                              level=n, partial=cube) from exc
        if verbose:
            print(f"level {n:3d}  t {t_n:.4f}  newton iters {iterations[n]:2d}  "
                  f"max|u| {np.max(np.abs(values[n])):.4e}")
    return cube
