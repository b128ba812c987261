"""Finite-difference solver on the truncated half-cylinder S^1 x [0, Z].

Solves the boundary-layer limit problems: the Dirichlet-data solution u
(attracting/neutral boundaries), the hitting probability h (repelling),
and the conditioned problem obtained by conjugating the discrete operator
with the diagonal of h.  Everything is a second-order central-difference
discretization on a tensor grid, periodic in y, with per-cell first-order
upwinding of the height drift whenever the cell Peclet number exceeds 2
(which keeps the matrix an M-matrix, so the discrete maximum principle
holds).  The far field is cut at a finite height Z: homogeneous Neumann
for u (the solution flattens to a constant), Dirichlet zero for h (it
decays).  A geometrically stretched grid reaches the very large heights
needed for the top-row oscillation to die out; truncation error is
controlled by re-solving at a different height.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.integrate
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import sde
from .classifier import Verdict, classify
from .errors import (
    HTransformSingular,
    LevelSetUnresolved,
    ModelError,
    NoConvergence,
    NotIntegrable,
    WrongRegime,
)
from .fields import ChartModel, Flavor, GeneratorCoefficients, assemble
from .geometry import RescaledPoint, TWO_PI

_RESIDUAL_TARGET = 1e-10
_H_FLOOR = 1e-250  # conjugation guard: far-field h underflow, not a grid artifact

# The conditioned far-field constant carries a larger log-spacing error
# constant than the plain solve (the top value is a ratio of two decaying
# grid functions), so its default grid is finer.
def conditioned_default_grid() -> "HalfCylinderGrid":
    return HalfCylinderGrid(n_y=128, n_z=2560, height=1.0e13, dz0=0.02)


@dataclass(frozen=True)
class HalfCylinderGrid:
    """Tensor grid: n_y periodic columns, n_z height cells up to Z."""

    n_y: int = 64
    n_z: int = 640
    height: float = 1.0e13
    stretching: str = "geometric"  # "uniform" | "geometric"
    dz0: float = 0.02

    def __post_init__(self):
        if self.n_y < 32 or (self.n_y & (self.n_y - 1)) != 0:
            raise ModelError(f"n_y must be a power of two >= 32, got {self.n_y}")
        if self.n_z < 100:
            raise ModelError(f"n_z must be >= 100, got {self.n_z}")
        if self.height < 5.0:
            raise ModelError(f"height must be >= 5, got {self.height}")
        if self.stretching not in ("uniform", "geometric"):
            raise ModelError(f"unknown stretching {self.stretching!r}")
        if self.stretching == "geometric" and not 0 < self.dz0 < self.height:
            raise ModelError("geometric stretching needs 0 < dz0 < height")

    def z_nodes(self) -> np.ndarray:
        if self.stretching == "uniform":
            return np.linspace(0.0, self.height, self.n_z + 1)
        q = _geometric_ratio(self.dz0, self.n_z, self.height)
        steps = self.dz0 * q ** np.arange(self.n_z)
        nodes = np.concatenate([[0.0], np.cumsum(steps)])
        nodes[-1] = self.height
        return nodes

    def y_nodes(self) -> np.ndarray:
        return np.linspace(0.0, TWO_PI, self.n_y, endpoint=False)

    def with_height(self, new_height: float) -> "HalfCylinderGrid":
        """Same resolution policy, different truncation height."""
        if self.stretching == "uniform":
            return replace(self, height=new_height)
        # keep dz0, adjust cell count to land near the requested height
        q = _geometric_ratio(self.dz0, self.n_z, self.height)
        n_new = max(100, int(math.ceil(math.log1p(new_height * (q - 1.0) / self.dz0) /
                                       math.log(q))))
        return replace(self, height=new_height, n_z=n_new)

    def extended(self, factor: float = 16.0) -> "HalfCylinderGrid":
        """Taller grid whose first nodes coincide with this grid's nodes."""
        if self.stretching == "uniform":
            dz = self.height / self.n_z
            extra = int(math.ceil((factor - 1.0) * self.n_z))
            return replace(self, n_z=self.n_z + extra, height=self.height + extra * dz,
                           stretching="uniform")
        q = _geometric_ratio(self.dz0, self.n_z, self.height)
        nodes = self.z_nodes()
        steps = np.diff(nodes)
        extra = max(8, int(math.ceil(math.log(factor) / math.log(q))))
        new_steps = steps[-1] * q ** np.arange(1, extra + 1)
        new_height = float(nodes[-1] + np.sum(new_steps))
        return _ExplicitGrid(n_y=self.n_y, n_z=self.n_z + extra, height=new_height,
                             nodes=np.concatenate([nodes, nodes[-1] + np.cumsum(new_steps)]))


@dataclass(frozen=True)
class _ExplicitGrid(HalfCylinderGrid):
    """Grid with explicitly supplied nodes (used for padded h-solves)."""

    nodes: np.ndarray = None

    def __post_init__(self):
        pass

    def z_nodes(self) -> np.ndarray:
        return self.nodes


def _geometric_ratio(dz0: float, n: int, height: float) -> float:
    total_uniform = dz0 * n
    if total_uniform >= height:
        raise ModelError("geometric grid: dz0 * n_z must be below the height")

    def total(q):
        if n * math.log(q) > 300.0:  # overflow-safe: far beyond any real grid
            return math.inf
        return dz0 * (q ** n - 1.0) / (q - 1.0)

    lo, hi = 1.0 + 1e-12, 2.0
    while total(hi) < height:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if total(mid) < height:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class HalfCylinderSolution:
    """Grid solution; row j of u_grid is height z_nodes[j] (row 0 = boundary data)."""

    u_grid: np.ndarray
    z_nodes: np.ndarray
    y_nodes: np.ndarray
    ubar: float
    top_oscillation: float
    variation: np.ndarray
    truncation_estimate: float
    max_principle_ok: bool
    h_grid: np.ndarray | None = None

    def interp(self, y: float, zz: float) -> float:
        """Bilinear (periodic in y, log-height in z) interpolation of u."""
        return _interp_grid(self.u_grid, self.z_nodes, self.y_nodes, y, zz)


@dataclass(frozen=True)
class ExitMeasure:
    """Exit-angle density on the y-grid; integrates to one."""

    y_nodes: np.ndarray
    density: np.ndarray
    weights: np.ndarray
    source: str

    def integrate(self, f) -> float:
        return float(np.sum(self.weights * f(self.y_nodes)))

    def total_variation(self, other: "ExitMeasure") -> float:
        return 0.5 * float(np.sum(np.abs(self.weights - other.weights)))


@dataclass(frozen=True)
class LevelDecay:
    levels: np.ndarray
    oscillation: np.ndarray
    rate: float
    r_squared: float


# ---------------------------------------------------------------------------
# Discretization
# ---------------------------------------------------------------------------

@dataclass
class _Discretization:
    mat: sp.csr_matrix          # unknowns: (i, j) for j = 1..n_z, idx = i + n_y*(j-1)
    bottom: sp.csr_matrix       # coupling of interior rows to the j=0 boundary values
    grid: HalfCylinderGrid
    z: np.ndarray
    y: np.ndarray
    top_bc: str


def _discretize(gc: GeneratorCoefficients, grid: HalfCylinderGrid, top_bc: str) -> _Discretization:
    z = grid.z_nodes()
    y = grid.y_nodes()
    n_y, n_z = grid.n_y, grid.n_z
    dy = TWO_PI / n_y
    n_unk = n_y * n_z

    jj = np.arange(1, n_z)          # interior height indices
    Y, J = np.meshgrid(y, jj, indexing="ij")    # (n_y, n_z-1)
    Zm = z[J]
    hm = z[J] - z[J - 1]
    hp = z[J + 1] - z[J]

    cyy, cyz, czz = gc.second_order(Y, Zm)
    by, bz = gc.first_order(Y, Zm)
    cyy = np.broadcast_to(cyy, Y.shape).copy()
    cyz = np.broadcast_to(cyz, Y.shape).copy()
    czz = np.broadcast_to(czz, Y.shape).copy()
    by = np.broadcast_to(by, Y.shape).copy()
    bz = np.broadcast_to(bz, Y.shape).copy()

    idx = lambda i, j: (i % n_y) + n_y * (j - 1)
    I = np.arange(n_y)[:, None] + np.zeros_like(J)
    row = idx(I, J)

    rows, cols, vals = [], [], []
    brows, bcols, bvals = [], [], []

    def add(col_i, col_j, coeff):
        interior = col_j >= 1
        rows.append(row[interior])
        cols.append(idx(col_i[interior], col_j[interior]))
        vals.append(coeff[interior])
        bottom_mask = col_j == 0
        if np.any(bottom_mask):
            brows.append(row[bottom_mask])
            bcols.append(col_i[bottom_mask] % n_y)
            bvals.append(coeff[bottom_mask])

    # y-diffusion + y-advection (central; upwind per cell if needed)
    pe_y = np.abs(by) * dy / np.maximum(cyy, 1e-300)
    up_y = pe_y > 2.0
    c_ym = cyy / dy ** 2 + np.where(up_y, np.where(by < 0, -by / dy, 0.0), -by / (2 * dy))
    c_yp = cyy / dy ** 2 + np.where(up_y, np.where(by > 0, by / dy, 0.0), by / (2 * dy))
    c_y0 = -2.0 * cyy / dy ** 2 + np.where(up_y, -np.abs(by) / dy, 0.0)
    add(I - 1, J, c_ym)
    add(I + 1, J, c_yp)

    # z-diffusion + z-advection
    denom = hm + hp
    d_m = 2.0 * czz / (hm * denom)
    d_p = 2.0 * czz / (hp * denom)
    d_0 = -2.0 * czz / (hm * hp)
    pe_z = np.abs(bz) * np.maximum(hm, hp) / np.maximum(czz, 1e-300)
    up_z = pe_z > 2.0
    a_m = np.where(up_z, np.where(bz < 0, -bz / hm, 0.0), -bz * hp / (hm * denom))
    a_p = np.where(up_z, np.where(bz > 0, bz / hp, 0.0), bz * hm / (hp * denom))
    a_0 = np.where(up_z, -np.abs(bz) / np.where(bz > 0, hp, hm),
                   bz * (hp - hm) / (hm * hp))
    add(I, J - 1, d_m + a_m)
    add(I, J + 1, d_p + a_p)
    add(I, J, c_y0 + d_0 + a_0)

    # mixed term 2*Cyz*u_yz, 4-point cross (zero for the default models)
    if np.max(np.abs(cyz)) > 0.0:
        w = 2.0 * cyz / (2.0 * dy * denom)
        add(I + 1, J + 1, w)
        add(I - 1, J + 1, -w)
        add(I + 1, J - 1, -w)
        add(I - 1, J - 1, w)

    # top boundary row
    i_top = np.arange(n_y)
    top_row = idx(i_top, np.full(n_y, n_z))
    if top_bc == "neumann":
        rows.append(top_row)
        cols.append(top_row)
        vals.append(np.ones(n_y))
        rows.append(top_row)
        cols.append(idx(i_top, np.full(n_y, n_z - 1)))
        vals.append(-np.ones(n_y))
    elif top_bc == "dirichlet0":
        rows.append(top_row)
        cols.append(top_row)
        vals.append(np.ones(n_y))
    else:
        raise ModelError(f"unknown top boundary condition {top_bc!r}")

    mat = sp.csr_matrix(
        (np.concatenate([v.ravel() for v in vals]),
         (np.concatenate([r.ravel() for r in rows]),
          np.concatenate([c.ravel() for c in cols]))),
        shape=(n_unk, n_unk),
    )
    if brows:
        bottom = sp.csr_matrix(
            (np.concatenate([v.ravel() for v in bvals]),
             (np.concatenate([r.ravel() for r in brows]),
              np.concatenate([c.ravel() for c in bcols]))),
            shape=(n_unk, n_y),
        )
    else:  # pragma: no cover
        bottom = sp.csr_matrix((n_unk, n_y))
    return _Discretization(mat=mat, bottom=bottom, grid=grid, z=z, y=y, top_bc=top_bc)


def _solve_system(mat: sp.csr_matrix, rhs: np.ndarray) -> np.ndarray:
    """Row-equilibrated sparse direct solve with a residual check."""
    scale = np.asarray(np.abs(mat).max(axis=1).todense()).ravel()
    scale[scale == 0] = 1.0
    d = sp.diags(1.0 / scale)
    mat_eq = (d @ mat).tocsc()
    rhs_eq = rhs / scale
    lu = spla.splu(mat_eq)
    u = lu.solve(rhs_eq)
    res = np.max(np.abs(mat_eq @ u - rhs_eq)) / max(np.max(np.abs(rhs_eq)), 1e-30)
    if not np.isfinite(res) or res > _RESIDUAL_TARGET:
        raise NoConvergence(f"linear solve residual {res:.2e} above {_RESIDUAL_TARGET}")
    return u


def _boundary_values(f, y: np.ndarray) -> np.ndarray:
    vals = np.asarray(f(y), dtype=float) if callable(f) else np.asarray(f, dtype=float)
    if vals.shape != y.shape:
        vals = vals + np.zeros_like(y)
    return vals


def _grid_from_unknowns(u: np.ndarray, f_vals: np.ndarray, n_y: int, n_z: int) -> np.ndarray:
    full = np.empty((n_z + 1, n_y))
    full[0] = f_vals
    full[1:] = u.reshape(n_z, n_y)
    return full


def _finish_solution(full: np.ndarray, disc: _Discretization, f_vals: np.ndarray,
                     truncation: float, h_grid=None, bounds=None) -> HalfCylinderSolution:
    top = full[-1]
    ubar = float(np.mean(top))
    osc = float(np.max(top) - np.min(top))
    variation = full.max(axis=1) - full.min(axis=1)
    if bounds is None:
        bounds = (float(np.min(f_vals)), float(np.max(f_vals)))
    lo, hi = bounds
    tol = 1e-9 * max(hi - lo, 1.0)
    ok = bool(np.all(full >= lo - tol) and np.all(full <= hi + tol))
    return HalfCylinderSolution(u_grid=full, z_nodes=disc.z, y_nodes=disc.y,
                                ubar=ubar, top_oscillation=osc, variation=variation,
                                truncation_estimate=truncation, max_principle_ok=ok,
                                h_grid=h_grid)


def _verdict(m: ChartModel) -> Verdict:
    return classify(m, grid_size=512).verdict


# ---------------------------------------------------------------------------
# Public solves
# ---------------------------------------------------------------------------

def solve_u(m: ChartModel, f, grid: HalfCylinderGrid | None = None,
            eps: float | None = None, check_truncation: bool = True,
            _regime: Verdict | None = None) -> HalfCylinderSolution:
    """Dirichlet-data solution of the limit operator; attracting/neutral only.

    f is the boundary data on the y-grid (callable or array).  With eps
    given, the coefficients of the rescaled operator at that eps are used
    instead of the limit (a robustness check for the limit value ubar).
    The reported truncation_estimate is |ubar(Z) - ubar(Z/2)|.
    """
    grid = grid or HalfCylinderGrid()
    verdict = _regime or _verdict(m)
    if verdict is Verdict.REPELLING:
        raise WrongRegime("u-solve needs an attracting or neutral boundary; "
                          "use solve_conditioned")
    flavor = Flavor.LIMIT if eps is None else Flavor.RESCALED
    gc = assemble(m, eps, flavor)
    disc = _discretize(gc, grid, "neumann")
    f_vals = _boundary_values(f, disc.y)
    rhs = -(disc.bottom @ f_vals)
    u = _solve_system(disc.mat, rhs)
    full = _grid_from_unknowns(u, f_vals, grid.n_y, grid.n_z)
    truncation = math.nan
    if check_truncation:
        half = solve_u(m, f, grid.with_height(grid.height / 2.0), eps=eps,
                       check_truncation=False, _regime=verdict)
        truncation = abs(full[-1].mean() - half.ubar)
    return _finish_solution(full, disc, f_vals, truncation)


def solve_h(m: ChartModel, grid: HalfCylinderGrid | None = None,
            pad_factor: float = 16.0, _regime: Verdict | None = None) -> HalfCylinderSolution:
    """Hitting probability of the boundary for a repelling model.

    h = 1 at the boundary and decays; the far field is cut with h(Z) = 0
    and the truncation error is bounded by comparing with a solve on a
    grid pad_factor times taller (matching nodes).
    """
    grid = grid or HalfCylinderGrid()
    verdict = _regime or _verdict(m)
    if verdict is not Verdict.REPELLING:
        raise WrongRegime("hitting probability is identically 1 unless repelling")
    gc = assemble(m, None, Flavor.LIMIT)

    def run(g):
        disc = _discretize(gc, g, "dirichlet0")
        ones = np.ones(g.n_y)
        rhs = -(disc.bottom @ ones)
        hvec = _solve_system(disc.mat, rhs)
        return _grid_from_unknowns(hvec, ones, g.n_y, g.n_z), disc

    full, disc = run(grid)
    tall_grid = grid.extended(pad_factor)
    tall, _ = run(tall_grid)
    common = grid.n_z + 1
    truncation = float(np.max(np.abs(tall[:common] - full)))
    # data are 1 at the bottom and 0 at the cut: bounds [0, 1]
    return _finish_solution(full, disc, np.ones(grid.n_y), truncation, bounds=(0.0, 1.0))


def solve_conditioned(m: ChartModel, f, grid: HalfCylinderGrid | None = None,
                      pad_factor: float = 16.0,
                      check_truncation: bool = True) -> HalfCylinderSolution:
    """Conditioned-exit solution for a repelling model.

    Forms the discrete limit operator, conjugates it by the diagonal of the
    hitting probability h (solved on a taller matching grid so h > 0 on
    every node used), and solves with the boundary data at height zero and
    a Neumann far field for the conditioned solution itself.
    """
    grid = grid or conditioned_default_grid()
    verdict = _verdict(m)
    if verdict is not Verdict.REPELLING:
        raise WrongRegime("conditioning applies to repelling boundaries only")
    gc = assemble(m, None, Flavor.LIMIT)

    tall_grid = grid.extended(pad_factor)
    disc_tall = _discretize(gc, tall_grid, "dirichlet0")
    ones = np.ones(tall_grid.n_y)
    h_unk = _solve_system(disc_tall.mat, -(disc_tall.bottom @ ones))
    h_full_tall = _grid_from_unknowns(h_unk, ones, tall_grid.n_y, tall_grid.n_z)
    h_full = h_full_tall[:grid.n_z + 1]
    if np.min(h_full) < _H_FLOOR:
        raise HTransformSingular(
            f"hitting probability as small as {np.min(h_full):.3e} on the grid"
        )

    disc = _discretize(gc, grid, "neumann")
    n_y, n_z = grid.n_y, grid.n_z
    h_unknown = h_full[1:].ravel()

    mat = disc.mat.tocoo()
    # conjugate PDE rows only; the Neumann far-field row acts on u directly
    top_rows = np.arange(n_y * (n_z - 1), n_y * n_z)
    is_top = np.isin(mat.row, top_rows)
    vals = mat.data * np.where(is_top, 1.0, h_unknown[mat.col] / h_unknown[mat.row])
    mat_c = sp.csr_matrix((vals, (mat.row, mat.col)), shape=mat.shape)

    bot = disc.bottom.tocoo()
    bvals = bot.data / h_unknown[bot.row]  # h = 1 on the boundary row
    bottom_c = sp.csr_matrix((bvals, (bot.row, bot.col)), shape=bot.shape)

    f_vals = _boundary_values(f, disc.y)
    u = _solve_system(mat_c, -(bottom_c @ f_vals))
    full = _grid_from_unknowns(u, f_vals, n_y, n_z)

    if not check_truncation:
        return _finish_solution(full, disc, f_vals, math.nan, h_grid=h_full)

    # truncation check on the node-aligned sub-grid nearest half height
    k_half = int(np.searchsorted(disc.z, grid.height / 2.0))
    k_half = min(max(k_half, 101), n_z - 1)
    half = _ExplicitGrid(n_y=n_y, n_z=k_half, height=float(disc.z[k_half]),
                         nodes=disc.z[:k_half + 1])
    disc_h = _discretize(gc, half, "neumann")
    h_half = h_full[:k_half + 1]
    mat_h = disc_h.mat.tocoo()
    top_rows_h = np.arange(n_y * (k_half - 1), n_y * k_half)
    h_unknown_h = h_half[1:].ravel()
    vals_h = mat_h.data * np.where(np.isin(mat_h.row, top_rows_h), 1.0,
                                   h_unknown_h[mat_h.col] / h_unknown_h[mat_h.row])
    bot_h = disc_h.bottom.tocoo()
    bottom_h = sp.csr_matrix((bot_h.data / h_unknown_h[bot_h.row],
                              (bot_h.row, bot_h.col)), shape=bot_h.shape)
    u_half = _solve_system(sp.csr_matrix((vals_h, (mat_h.row, mat_h.col)),
                                         shape=mat_h.shape), -(bottom_h @ f_vals))
    ubar_half = float(u_half[-n_y:].mean())
    truncation = abs(float(u[-n_y:].mean()) - ubar_half)

    return _finish_solution(full, disc, f_vals, truncation, h_grid=h_full)


def radial_oracle(alpha_c: float, beta_c: float, rho_c: float):
    """Closed-form hitting probability for angle-independent coefficients.

    The height marginal solves (alpha zz^2 + rho) h'' + beta zz h' = 0, so
    h(zz) is the normalized tail integral of (1 + alpha u^2 / rho)^(-beta/2alpha);
    integrable exactly when beta/alpha > 1.  Returns (h, exit_probability)
    where exit_probability(zz, wall) is the chance of reaching height 0
    before the wall.
    """
    if alpha_c <= 0 or rho_c <= 0:
        raise NotIntegrable("alpha and rho must be positive")
    if beta_c / alpha_c <= 1.0:
        raise NotIntegrable(
            f"tail integral diverges: beta/alpha = {beta_c / alpha_c:.3f} <= 1"
        )
    p = beta_c / (2.0 * alpha_c)

    def density(u):
        return (1.0 + alpha_c * u * u / rho_c) ** (-p)

    total, _ = scipy.integrate.quad(density, 0.0, np.inf)

    def h(zz):
        zz = float(zz)
        if zz <= 0.0:
            return 1.0
        tail, _ = scipy.integrate.quad(density, zz, np.inf)
        return tail / total

    def exit_probability(zz: float, wall: float) -> float:
        return (h(zz) - h(wall)) / (1.0 - h(wall))

    return h, exit_probability


def variation_decay(sol: HalfCylinderSolution, psi, levels) -> LevelDecay:
    """Oscillation of u over the level sets {psi(y) + ln zz = n}.

    Each level is interpolated along every y-column (linear in ln z);
    a level crossed by fewer than 8 columns raises LevelSetUnresolved.
    Returns the per-level oscillation and a log-linear fit of its decay.
    """
    z = sol.z_nodes
    y = sol.y_nodes
    lo, hi = z[1], z[-1]
    lnz = np.log(z[1:])
    levels = np.asarray(levels, dtype=float)
    osc = np.empty(levels.size)
    psi_vals = np.asarray(psi(y), dtype=float) + np.zeros_like(y)
    for k, n in enumerate(levels):
        target = n - psi_vals  # ln zz per column
        inside = (target >= np.log(lo)) & (target <= np.log(hi))
        if np.count_nonzero(inside) < 8:
            raise LevelSetUnresolved(
                f"level {n}: only {np.count_nonzero(inside)} columns cross the grid"
            )
        vals = np.empty(np.count_nonzero(inside))
        for c, i in enumerate(np.nonzero(inside)[0]):
            vals[c] = np.interp(target[i], lnz, sol.u_grid[1:, i])
        osc[k] = vals.max() - vals.min()
    positive = osc > 0
    if np.count_nonzero(positive) >= 2:
        coeffs, res = np.polyfit(levels[positive], np.log(osc[positive]), 1, full=True)[:2]
        rate = -float(coeffs[0])
        ln_osc = np.log(osc[positive])
        ss_tot = float(np.sum((ln_osc - ln_osc.mean()) ** 2))
        ss_res = float(res[0]) if res.size else 0.0
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    else:
        rate, r2 = math.nan, math.nan
    return LevelDecay(levels=levels, oscillation=osc, rate=rate, r_squared=r2)


def exit_measure(m: ChartModel, start: RescaledPoint | None,
                 grid: HalfCylinderGrid | None = None, mode: str = "adjoint",
                 params: sde.SimulationParams | None = None,
                 bins: int | None = None) -> ExitMeasure:
    """Exit-angle law of the layer process, by duality or Monte Carlo.

    Adjoint mode solves the forward problem once per y-grid basis function
    (one factorization, n_y back-substitutions); the weight of bin k at the
    start point is then the k-th solution there, and start=None gives the
    deep-layer limit law read off the top row.  Monte Carlo mode histograms
    simulated exit angles (conditioned on exit for repelling models).
    """
    verdict = _verdict(m)
    if grid is None:
        grid = conditioned_default_grid() if verdict is Verdict.REPELLING \
            else HalfCylinderGrid()
    if mode == "adjoint":
        gc = assemble(m, None, Flavor.LIMIT)
        if verdict is Verdict.REPELLING:
            weights = _adjoint_weights_conditioned(m, gc, grid, start)
        else:
            weights = _adjoint_weights(gc, grid, start)
        total = weights.sum()
        if abs(total - 1.0) > 1e-8:
            raise NoConvergence(f"exit weights sum to {total:.10f}, not 1")
        weights = weights / total
        y = grid.y_nodes()
        density = weights / (TWO_PI / grid.n_y)
        return ExitMeasure(y_nodes=y, density=density, weights=weights, source="adjoint")
    if mode == "mc":
        if params is None:
            raise ModelError("Monte Carlo exit measure needs simulation params")
        gc = assemble(m, None, Flavor.LIMIT)
        if start is None:
            raise ModelError("Monte Carlo exit measure needs a start point")
        batch = sde.simulate(gc, start, params)
        n_bins = bins or grid.n_y
        edges = np.linspace(0.0, TWO_PI, n_bins + 1)
        counts, _ = np.histogram(batch.exit_y[batch.exited_mask], bins=edges)
        weights = counts / counts.sum()
        centers = 0.5 * (edges[:-1] + edges[1:])
        return ExitMeasure(y_nodes=centers, density=weights / (TWO_PI / n_bins),
                           weights=weights, source="mc")
    raise ModelError(f"unknown exit-measure mode {mode!r}")


def _adjoint_weights(gc, grid, start) -> np.ndarray:
    disc = _discretize(gc, grid, "neumann")
    lu, scale = _factorize(disc.mat)
    n_y, n_z = grid.n_y, grid.n_z
    weights = np.empty(n_y)
    for k in range(n_y):
        e = np.zeros(n_y)
        e[k] = 1.0
        rhs = -(disc.bottom @ e)
        u = lu.solve(rhs / scale)
        if start is None:
            weights[k] = u[-n_y:].mean()
        else:
            full = _grid_from_unknowns(u, e, n_y, n_z)
            weights[k] = _interp_grid(full, disc.z, disc.y, start.y, start.zz)
    return weights


def _adjoint_weights_conditioned(m, gc, grid, start) -> np.ndarray:
    n_y = grid.n_y
    weights = np.empty(n_y)
    tall_grid = grid.extended()
    disc_tall = _discretize(gc, tall_grid, "dirichlet0")
    ones = np.ones(tall_grid.n_y)
    h_unk = _solve_system(disc_tall.mat, -(disc_tall.bottom @ ones))
    h_full = _grid_from_unknowns(h_unk, ones, tall_grid.n_y, tall_grid.n_z)[:grid.n_z + 1]
    disc = _discretize(gc, grid, "neumann")
    h_unknown = h_full[1:].ravel()
    mat = disc.mat.tocoo()
    top_rows = np.arange(n_y * (grid.n_z - 1), n_y * grid.n_z)
    vals = mat.data * np.where(np.isin(mat.row, top_rows), 1.0,
                               h_unknown[mat.col] / h_unknown[mat.row])
    mat_c = sp.csr_matrix((vals, (mat.row, mat.col)), shape=mat.shape)
    bot = disc.bottom.tocoo()
    bottom_c = sp.csr_matrix((bot.data / h_unknown[bot.row], (bot.row, bot.col)),
                             shape=bot.shape)
    lu, scale = _factorize(mat_c)
    for k in range(n_y):
        e = np.zeros(n_y)
        e[k] = 1.0
        u = lu.solve(-(bottom_c @ e) / scale)
        if start is None:
            weights[k] = u[-n_y:].mean()
        else:
            full = _grid_from_unknowns(u, e, n_y, grid.n_z)
            weights[k] = _interp_grid(full, disc.z, disc.y, start.y, start.zz)
    return weights


def _factorize(mat: sp.csr_matrix):
    scale = np.asarray(np.abs(mat).max(axis=1).todense()).ravel()
    scale[scale == 0] = 1.0
    lu = spla.splu((sp.diags(1.0 / scale) @ mat).tocsc())
    return lu, scale


def _interp_grid(full: np.ndarray, z: np.ndarray, y: np.ndarray, yq: float, zq: float) -> float:
    """Periodic-in-y, piecewise-linear-in-ln(z) interpolation of a grid function."""
    n_y = y.size
    dy = TWO_PI / n_y
    s = (yq % TWO_PI) / dy
    i0 = int(s) % n_y
    fy = s - int(s)
    col = full[:, i0] * (1.0 - fy) + full[:, (i0 + 1) % n_y] * fy
    if zq <= z[1]:
        # linear between the boundary row and the first interior row
        t = zq / z[1]
        return float(col[0] * (1.0 - t) + col[1] * t)
    lnz = np.log(z[1:])
    return float(np.interp(math.log(zq), lnz, col[1:]))
