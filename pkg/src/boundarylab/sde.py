"""Path sampling for the boundary-layer operators.

All samplers share one discipline: path p of a run draws its noise from
its own counter-based stream keyed by (seed, p) (Philox), consumed in
fixed-size blocks, so results are bit-identical however paths are chunked
or scheduled; aggregation always runs in path order.  Time stepping is
Euler-Maruyama on the Ito form.  Absorption at height zero is detected by
endpoint crossing (with the crossing time and location linearly
interpolated inside the step) plus a Brownian-bridge test for excursions
the endpoints miss; the bridge test removes the order-sqrt(dt) exit bias
of pure endpoint monitoring and can be disabled per run.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .classifier import ClassificationReport
from .errors import ModelError
from .fields import ChartModel, Flavor, GeneratorCoefficients, assemble
from .geometry import ChartPoint, RescaledPoint, TWO_PI, wrap_angle

NOISE_BLOCK = 256  # steps of noise drawn per path per block; part of the sampler definition


class WallPolicy(enum.Enum):
    ABSORB_AT_ZERO = "absorb"
    STOP_AT_OUTER_WALL = "wall"
    BOTH = "both"


@dataclass(frozen=True)
class SimulationParams:
    dt: float
    seed: int
    n_paths: int
    max_time: float
    wall_policy: WallPolicy = WallPolicy.ABSORB_AT_ZERO
    wall: float | None = None
    bridge_absorption: bool = True
    antithetic: bool = False
    chunk_size: int = 8192

    def __post_init__(self):
        if self.dt <= 0:
            raise ModelError(f"dt must be > 0, got {self.dt}")
        if self.n_paths < 1:
            raise ModelError("n_paths must be >= 1")
        if self.max_time <= 0:
            raise ModelError("max_time must be > 0")
        wall_active = self.wall_policy in (WallPolicy.STOP_AT_OUTER_WALL, WallPolicy.BOTH)
        if wall_active:
            if self.wall is None or self.wall <= 0:
                raise ModelError("wall policy requires a positive wall height")
            cap = 1e-2 * min(1.0, self.wall * self.wall)
            if self.dt > cap:
                raise ModelError(
                    f"dt={self.dt} too coarse for wall at {self.wall}; need dt <= {cap:.3g}"
                )
        if self.antithetic and self.n_paths % 2:
            raise ModelError("antithetic sampling needs an even n_paths")

    @property
    def absorbing(self) -> bool:
        return self.wall_policy in (WallPolicy.ABSORB_AT_ZERO, WallPolicy.BOTH)

    @property
    def walled(self) -> bool:
        return self.wall_policy in (WallPolicy.STOP_AT_OUTER_WALL, WallPolicy.BOTH)


@dataclass
class ExitSampleBatch:
    """Exit angles/times of a path batch; censored rows carry no exit angle."""

    exit_y: np.ndarray
    exit_time: np.ndarray
    exited_mask: np.ndarray
    unstable_mask: np.ndarray
    n_paths: int
    seed: int

    def exit_fraction(self) -> tuple[float, float]:
        """Exited-path fraction and its binomial standard error."""
        p = float(np.mean(self.exited_mask))
        se = math.sqrt(max(p * (1.0 - p), 1e-300) / self.n_paths)
        return p, se

    def exit_mean(self, f) -> tuple[float, float]:
        """Mean and stderr of f(exit_y) over exited paths."""
        vals = f(self.exit_y[self.exited_mask])
        n = vals.size
        if n == 0:
            raise ModelError("no exited paths to average over")
        return float(np.mean(vals)), float(np.std(vals, ddof=1) / math.sqrt(n)) if n > 1 else 0.0

    def write_csv(self, path):
        from .runner import write_csv  # local import to keep module layering flat

        rows = []
        for i in range(self.n_paths):
            censored = not bool(self.exited_mask[i])
            rows.append([
                i,
                "" if censored else repr(float(self.exit_y[i])),
                repr(float(self.exit_time[i])),
                int(censored),
            ])
        write_csv(path, ["path_id", "exit_y", "exit_time", "censored"], rows)


@dataclass(frozen=True)
class MartingaleTrace:
    times: np.ndarray
    values: np.ndarray
    stderrs: np.ndarray
    start_value: float


@dataclass(frozen=True)
class AttractionRow:
    start_y: float
    start_z: float
    fraction_near: float
    stderr: float
    min_distance: float
    max_distance: float
    near_threshold: float


@dataclass(frozen=True)
class BoundaryRun:
    bin_edges: np.ndarray
    histogram: np.ndarray
    averages: dict
    n_paths: int
    total_time: float


def _path_generators(seed: int, path_ids, antithetic: bool):
    """One Philox stream per (seed, path); antithetic odd paths mirror the even ones."""
    gens = []
    for pid in path_ids:
        pid = int(pid)
        base = pid - (pid % 2) if antithetic else pid
        key = np.array([int(seed) & 0xFFFFFFFFFFFFFFFF, base & 0xFFFFFFFFFFFFFFFF],
                       dtype=np.uint64)
        gens.append(np.random.Generator(np.random.Philox(key=key)))
    return gens


def _draw_block(gens, path_ids, antithetic: bool):
    """Noise for one block: normals (n, B, 2) and uniforms (n, B)."""
    n = len(gens)
    normals = np.empty((n, NOISE_BLOCK, 2))
    uniforms = np.empty((n, NOISE_BLOCK))
    for i, g in enumerate(gens):
        normals[i] = g.standard_normal((NOISE_BLOCK, 2))
        uniforms[i] = g.random(NOISE_BLOCK)
    if antithetic:
        odd = np.asarray([pid % 2 == 1 for pid in path_ids])
        normals[odd] *= -1.0
    return normals, uniforms


def _chunks(n_paths: int, chunk_size: int):
    for lo in range(0, n_paths, chunk_size):
        yield np.arange(lo, min(lo + chunk_size, n_paths))


def _resolve_start(start):
    if isinstance(start, RescaledPoint):
        return start.y, start.zz
    if isinstance(start, ChartPoint):
        return start.y, start.z
    y, v = start
    return float(y), float(v)


def simulate(gc: GeneratorCoefficients, start, params: SimulationParams) -> ExitSampleBatch:
    """Sample exit angle/time of the (y, height) process of the given flavor.

    Height-zero absorption applies under the absorbing wall policies; paths
    are censored at the outer wall or at max_time.  The flavor's height
    coordinate is interpreted verbatim (z for CHART, zz for RESCALED/LIMIT).
    """
    if gc.flavor is Flavor.LOG:
        raise ModelError("log-flavor paths never reach the boundary; simulate LIMIT instead")
    y0, v0 = _resolve_start(start)
    n = params.n_paths
    exit_y = np.full(n, np.nan)
    exit_time = np.full(n, float(params.max_time))
    exited = np.zeros(n, dtype=bool)
    unstable = np.zeros(n, dtype=bool)
    n_steps = int(round(params.max_time / params.dt))
    dt = params.dt
    sqdt = math.sqrt(dt)

    for chunk in _chunks(n, params.chunk_size):
        gens = _path_generators(params.seed, chunk, params.antithetic)
        ids = np.arange(chunk.size)
        y = np.full(chunk.size, y0)
        v = np.full(chunk.size, v0)
        if params.absorbing and v0 <= 0.0:
            exited[chunk] = True
            exit_y[chunk] = wrap_angle(y0)
            exit_time[chunk] = 0.0
            continue
        step = 0
        while step < n_steps and ids.size:
            gsel = [gens[i] for i in ids]
            pids = chunk[ids]
            normals, uniforms = _draw_block(gsel, pids, params.antithetic)
            block = min(NOISE_BLOCK, n_steps - step)
            live = np.ones(ids.size, dtype=bool)
            for s in range(block):
                by, bv, ayy, ayv, avv = gc.ito(y, v)
                s1 = np.sqrt(ayy)
                s2 = ayv / s1
                s3 = np.sqrt(np.maximum(avv - s2 * s2, 0.0))
                n1 = normals[:, s, 0]
                n2 = normals[:, s, 1]
                dy = by * dt + sqdt * s1 * n1
                dv = bv * dt + sqdt * (s2 * n1 + s3 * n2)
                guard = 10.0 * np.sqrt(dt * np.maximum(ayy, avv)) + \
                    10.0 * dt * np.maximum(np.abs(by), np.abs(bv))
                disp = np.maximum(np.abs(dy), np.abs(dv))
                bad = live & ((disp > guard) | ~np.isfinite(disp))
                if np.any(bad):
                    unstable[chunk[ids[bad]]] = True
                y_new = y + dy
                v_new = v + dv
                t_now = (step + s) * dt
                if params.absorbing:
                    crossed = live & (v_new <= 0.0)
                    if np.any(crossed):
                        frac = v[crossed] / (v[crossed] - v_new[crossed])
                        g = chunk[ids[crossed]]
                        exited[g] = True
                        exit_time[g] = t_now + frac * dt
                        exit_y[g] = wrap_angle(y[crossed] + frac * dy[crossed])
                        live = live & ~crossed
                    if params.bridge_absorption:
                        # endpoint-averaged diffusion keeps the crossing test O(dt)
                        avv_end = gc.diffusion_vv(y_new, np.maximum(v_new, 0.0))
                        with np.errstate(over="ignore", divide="ignore"):
                            p_hit = np.exp(-4.0 * np.maximum(v, 0.0) *
                                           np.maximum(v_new, 0.0) / ((avv + avv_end) * dt))
                        hit = live & (v_new > 0.0) & (uniforms[:, s] < p_hit)
                        if np.any(hit):
                            g = chunk[ids[hit]]
                            exited[g] = True
                            exit_time[g] = t_now + 0.5 * dt
                            exit_y[g] = wrap_angle(0.5 * (y[hit] + y_new[hit]))
                            live = live & ~hit
                if params.walled:
                    over = live & (v_new >= params.wall)
                    if np.any(over):
                        g = chunk[ids[over]]
                        exit_time[g] = t_now + dt
                        live = live & ~over
                y = np.where(live, y_new, y)
                v = np.where(live, v_new, v)
            step += block
            if not np.all(live):
                keep = live
                ids = ids[keep]
                y = y[keep]
                v = v[keep]
    return ExitSampleBatch(exit_y=exit_y, exit_time=exit_time, exited_mask=exited,
                           unstable_mask=unstable, n_paths=n, seed=params.seed)


def simulate_boundary(m: ChartModel, start_y: float, params: SimulationParams,
                      burn_in: float = 0.0, bins: int = 64,
                      observables: dict | None = None) -> BoundaryRun:
    """Boundary-restricted diffusion: occupation histogram and ergodic averages.

    Runs n_paths independent circles for max_time each; the histogram and
    the time averages of the requested observables use only times past
    burn_in.  Stderrs come from the spread of per-path means.
    """
    n_steps = int(round(params.max_time / params.dt))
    burn_steps = int(round(burn_in / params.dt))
    if burn_steps >= n_steps:
        raise ModelError("burn_in must be shorter than max_time")
    dt = params.dt
    sqdt = math.sqrt(dt)
    edges = np.linspace(0.0, TWO_PI, bins + 1)
    counts = np.zeros(bins)
    observables = observables or {}
    sums = {k: np.zeros(params.n_paths) for k in observables}
    kept = n_steps - burn_steps

    for chunk in _chunks(params.n_paths, params.chunk_size):
        gens = _path_generators(params.seed, chunk, params.antithetic)
        y = np.full(chunk.size, float(start_y))
        step = 0
        while step < n_steps:
            normals, _ = _draw_block(gens, chunk, params.antithetic)
            block = min(NOISE_BLOCK, n_steps - step)
            for s in range(block):
                a = np.asarray(m.a(y)) + np.zeros_like(y)
                b = np.asarray(m.b(y)) + np.zeros_like(y)
                y = y + b * dt + sqdt * np.sqrt(a) * normals[:, s, 0]
                if step + s >= burn_steps:
                    wrapped = wrap_angle(y)
                    counts += np.bincount(
                        np.minimum((wrapped / TWO_PI * bins).astype(int), bins - 1),
                        minlength=bins,
                    )
                    for k, fn in observables.items():
                        sums[k][chunk] += fn(wrapped)
            step += block
    hist = counts / counts.sum() / (TWO_PI / bins)
    averages = {}
    for k in observables:
        per_path = sums[k] / kept
        mean = float(np.mean(per_path))
        se = float(np.std(per_path, ddof=1) / math.sqrt(params.n_paths)) \
            if params.n_paths > 1 else 0.0
        averages[k] = (mean, se)
    return BoundaryRun(bin_edges=edges, histogram=hist, averages=averages,
                       n_paths=params.n_paths, total_time=params.max_time)


def attraction_stats(m: ChartModel, starts, horizon: float, params: SimulationParams,
                     near_threshold: float = 0.01, far_wall: float = 50.0,
                     eps: float = 0.0) -> list:
    """Long-run distance-to-boundary statistics of the unperturbed chart flow.

    Paths run the CHART flavor (eps = 0 unless overridden) for the horizon;
    a path wandering beyond far_wall is frozen there and counted as not
    near.  Returns one row per start with the near fraction and the
    recorded min/max distances.
    """
    gc = assemble(m, eps, Flavor.CHART)
    n_steps = int(round(horizon / params.dt))
    dt = params.dt
    sqdt = math.sqrt(dt)
    rows = []
    for start in starts:
        y0, z0 = _resolve_start(start)
        n = params.n_paths
        final = np.empty(n)
        mins = np.empty(n)
        maxs = np.empty(n)
        for chunk in _chunks(n, params.chunk_size):
            gens = _path_generators(params.seed, chunk, params.antithetic)
            y = np.full(chunk.size, y0)
            z = np.full(chunk.size, z0)
            zmin = np.full(chunk.size, z0)
            zmax = np.full(chunk.size, z0)
            frozen = np.zeros(chunk.size, dtype=bool)
            step = 0
            while step < n_steps:
                normals, _ = _draw_block(gens, chunk, params.antithetic)
                block = min(NOISE_BLOCK, n_steps - step)
                for s in range(block):
                    by, bz, ayy, ayz, azz = gc.ito(y, z)
                    s1 = np.sqrt(ayy)
                    s2 = ayz / s1
                    s3 = np.sqrt(np.maximum(azz - s2 * s2, 0.0))
                    y = y + by * dt + sqdt * s1 * normals[:, s, 0]
                    z_new = z + bz * dt + sqdt * (s2 * normals[:, s, 0] + s3 * normals[:, s, 1])
                    z_new = np.maximum(z_new, 0.0)
                    hit_wall = z_new >= far_wall
                    frozen = frozen | hit_wall
                    z = np.where(frozen, np.where(hit_wall, far_wall, z), z_new)
                    zmin = np.minimum(zmin, z)
                    zmax = np.maximum(zmax, z)
                step += block
            final[chunk] = z
            mins[chunk] = zmin
            maxs[chunk] = zmax
        near = final < near_threshold
        p = float(np.mean(near))
        se = math.sqrt(max(p * (1 - p), 1e-300) / n)
        rows.append(AttractionRow(start_y=y0, start_z=z0, fraction_near=p, stderr=se,
                                  min_distance=float(mins.min()),
                                  max_distance=float(maxs.max()),
                                  near_threshold=near_threshold))
    return rows


def martingale_trace(m: ChartModel, report: ClassificationReport, start,
                     params: SimulationParams, band: tuple,
                     checkpoint_times, rho_weight: float = 1.0) -> MartingaleTrace:
    """Estimate the stopped drift-compensated height functional at checkpoints.

    The functional is psi(Y) + ln Z + int rho(Y) Z^-2 ds + gap * t with
    gap = alpha_bar - beta_bar, evaluated along the limit-flavor process
    and frozen when the height leaves the band [band[0], band[1]].  Its
    expectation is constant in t; the trace reports the per-checkpoint
    Monte Carlo mean and standard error.  rho_weight scales the integrand
    (0 reduces the functional to psi + ln Z + gap*t, a bookkeeping check).
    """
    lo, hi = band
    if not 0.0 < lo < hi:
        raise ModelError("band must satisfy 0 < lo < hi")
    y0, zz0 = _resolve_start(start)
    if not lo < zz0 < hi:
        raise ModelError("start height must lie inside the band")
    gc = assemble(m, None, Flavor.LOG)
    w_lo, w_hi = math.log(lo), math.log(hi)
    psi = report.corrector_fn()
    gap = report.alpha_bar - report.beta_bar
    dt = params.dt
    sqdt = math.sqrt(dt)
    checkpoints = np.asarray(sorted(checkpoint_times), dtype=float)
    steps_at = np.round(checkpoints / dt).astype(int)
    if np.any(np.abs(steps_at * dt - checkpoints) > 1e-9):
        raise ModelError("checkpoint times must be multiples of dt")
    n_steps = int(steps_at.max())
    n = params.n_paths
    values = np.zeros((checkpoints.size, n))
    h0 = float(psi(y0)) + math.log(zz0)

    for chunk in _chunks(n, params.chunk_size):
        gens = _path_generators(params.seed, chunk, params.antithetic)
        y = np.full(chunk.size, y0)
        w = np.full(chunk.size, math.log(zz0))
        integral = np.zeros(chunk.size)
        live = np.ones(chunk.size, dtype=bool)
        frozen_h = np.zeros(chunk.size)
        step = 0
        cp_idx = 0
        while step < n_steps:
            normals, _ = _draw_block(gens, chunk, params.antithetic)
            block = min(NOISE_BLOCK, n_steps - step)
            for s in range(block):
                by, bw, ayy, ayw, aww = gc.ito(y, w)
                integrand = rho_weight * np.asarray(m.rho(wrap_angle(y))) * np.exp(-2.0 * w)
                s1 = np.sqrt(ayy)
                s2 = ayw / s1
                s3 = np.sqrt(np.maximum(aww - s2 * s2, 0.0))
                y_new = y + by * dt + sqdt * s1 * normals[:, s, 0]
                w_new = w + bw * dt + sqdt * (s2 * normals[:, s, 0] + s3 * normals[:, s, 1])
                integral_new = integral + integrand * dt
                t_new = (step + s + 1) * dt
                out = live & ((w_new <= w_lo) | (w_new >= w_hi))
                if np.any(out):
                    frozen_h[out] = (np.asarray(psi(wrap_angle(y_new[out]))) + w_new[out]
                                     + integral_new[out] + gap * t_new)
                    live = live & ~out
                y = np.where(live, y_new, y)
                w = np.where(live, w_new, w)
                integral = np.where(live, integral_new, integral)
                while cp_idx < steps_at.size and steps_at[cp_idx] == step + s + 1:
                    h_live = np.asarray(psi(wrap_angle(y))) + w + integral + gap * t_new
                    values[cp_idx, chunk] = np.where(live, h_live, frozen_h)
                    cp_idx += 1
            step += block
    means = values.mean(axis=1)
    stderrs = values.std(axis=1, ddof=1) / math.sqrt(n)
    return MartingaleTrace(times=checkpoints, values=means, stderrs=stderrs,
                           start_value=h0)
