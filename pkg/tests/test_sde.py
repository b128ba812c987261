import math

import numpy as np
import pytest

from boundarylab import sde
from boundarylab.coefficients import Const, Cosine, Fourier
from boundarylab.errors import ModelError
from boundarylab.fields import ChartModel, Flavor, PerturbationSpec, assemble
from boundarylab.halfcyl import radial_oracle
from boundarylab.sde import SimulationParams, WallPolicy

from conftest import stationary_density_oracle

SIN = Fourier(constant=0.0, terms=((1, 0.0, 1.0),))


def test_params_validation():
    with pytest.raises(ModelError):
        SimulationParams(dt=0.0, seed=1, n_paths=10, max_time=1.0)
    with pytest.raises(ModelError):
        SimulationParams(dt=1e-3, seed=1, n_paths=0, max_time=1.0)
    with pytest.raises(ModelError):
        SimulationParams(dt=0.05, seed=1, n_paths=10, max_time=1.0,
                         wall_policy=WallPolicy.BOTH, wall=4.0)
    with pytest.raises(ModelError):
        SimulationParams(dt=1e-3, seed=1, n_paths=10, max_time=1.0,
                         wall_policy=WallPolicy.STOP_AT_OUTER_WALL)


def test_determinism_across_chunking(zoo):
    gc = assemble(zoo["B"], None, Flavor.LIMIT)
    batches = []
    for chunk in (64, 257, 5000):
        p = SimulationParams(dt=2e-3, seed=123, n_paths=600, max_time=5.0,
                             wall_policy=WallPolicy.BOTH, wall=16.0,
                             chunk_size=chunk)
        batches.append(sde.simulate(gc, (0.0, 2.0), p))
    for b in batches[1:]:
        assert np.array_equal(b.exit_time, batches[0].exit_time)
        assert np.array_equal(b.exited_mask, batches[0].exited_mask)
        assert np.allclose(b.exit_y, batches[0].exit_y, equal_nan=True, atol=0)


def test_attracting_model_exits(zoo):
    gc = assemble(zoo["A"], None, Flavor.LIMIT)
    p = SimulationParams(dt=2.5e-3, seed=7, n_paths=4000, max_time=100.0)
    batch = sde.simulate(gc, (0.0, 1.0), p)
    assert batch.exit_fraction()[0] >= 0.99
    assert np.all(batch.exit_time[batch.exited_mask] <= 100.0)
    assert np.all(np.isnan(batch.exit_y[~batch.exited_mask]))


def test_repelling_exit_fractions_match_oracle(zoo):
    _, exit_p = radial_oracle(1.0, 3.0, 1.0)
    gc = assemble(zoo["B"], None, Flavor.LIMIT)
    wall = 64.0
    for start, seed in ((0.5, 21), (1.0, 22), (2.0, 23), (4.0, 24)):
        p = SimulationParams(dt=1.25e-3, seed=seed, n_paths=12000, max_time=100.0,
                             wall_policy=WallPolicy.BOTH, wall=wall)
        batch = sde.simulate(gc, (0.0, start), p)
        frac, se = batch.exit_fraction()
        target = exit_p(start, wall)
        assert abs(frac - target) <= 3.0 * max(se, 1e-6), (start, frac, target)


def test_dt_halving_consistency(zoo):
    gc = assemble(zoo["B"], None, Flavor.LIMIT)
    ests = []
    for dt in (2.5e-3, 1.25e-3):
        p = SimulationParams(dt=dt, seed=99, n_paths=20000, max_time=60.0,
                             wall_policy=WallPolicy.BOTH, wall=32.0)
        ests.append(sde.simulate(gc, (0.0, 2.0), p).exit_fraction())
    (f1, s1), (f2, s2) = ests
    assert abs(f1 - f2) <= 3.0 * math.hypot(s1, s2)


def test_start_on_boundary_exits_immediately(zoo):
    gc = assemble(zoo["A"], None, Flavor.LIMIT)
    p = SimulationParams(dt=1e-3, seed=5, n_paths=8, max_time=1.0)
    batch = sde.simulate(gc, (1.3, 0.0), p)
    assert np.all(batch.exited_mask)
    assert np.all(batch.exit_time == 0.0)
    assert batch.exit_y == pytest.approx(1.3)


def test_log_flavor_rejected_for_exit_sampling(zoo):
    gc = assemble(zoo["A"], None, Flavor.LOG)
    p = SimulationParams(dt=1e-3, seed=5, n_paths=8, max_time=1.0)
    with pytest.raises(ModelError):
        sde.simulate(gc, (0.0, 1.0), p)


def test_instability_flag_on_injected_outlier(zoo, monkeypatch):
    gc = assemble(zoo["A"], None, Flavor.LIMIT)
    orig = sde._draw_block

    def spiked(gens, path_ids, antithetic):
        normals, uniforms = orig(gens, path_ids, antithetic)
        normals[0, 0, 1] = 40.0  # far beyond the 10-sigma displacement guard
        uniforms[0, 0] = 1.0
        return normals, uniforms

    monkeypatch.setattr(sde, "_draw_block", spiked)
    p = SimulationParams(dt=1e-3, seed=6, n_paths=4, max_time=0.1,
                         bridge_absorption=False)
    batch = sde.simulate(gc, (0.0, 5.0), p)
    assert batch.unstable_mask[0]
    assert not np.all(batch.unstable_mask)


def test_boundary_histogram_uniform(zoo):
    p = SimulationParams(dt=2e-3, seed=31, n_paths=32, max_time=320.0)
    run = sde.simulate_boundary(zoo["A"], 0.0, p, burn_in=20.0, bins=32)
    width = 2 * np.pi / 32
    mass = np.sum(run.histogram) * width
    assert mass == pytest.approx(1.0, abs=1e-12)
    # per-bin occupation fluctuates with an effective sample size set by the
    # mixing time (~1); allow 3 sigma with that correlation accounted for
    n_eff = run.n_paths * (run.total_time - 20.0) / 2.0
    target = 1.0 / (2 * np.pi)
    sigma = math.sqrt(target / (n_eff * width))
    assert np.max(np.abs(run.histogram - target)) <= 3.5 * sigma


def test_boundary_histogram_matches_stationary_density(zoo):
    m = zoo["tilted"]
    p = SimulationParams(dt=2e-3, seed=32, n_paths=32, max_time=320.0)
    run = sde.simulate_boundary(m, 0.0, p, burn_in=20.0, bins=32)
    centers = 0.5 * (run.bin_edges[:-1] + run.bin_edges[1:])
    exact = stationary_density_oracle(m.b, m.a, centers)
    n_eff = run.n_paths * (run.total_time - 20.0) / 2.0
    width = 2 * np.pi / 32
    sigma = np.sqrt(exact / (n_eff * width))
    assert np.max(np.abs(run.histogram - exact) / sigma) <= 3.5


def test_ergodic_averages_match_quadrature(zoo, reports):
    m = zoo["tilted"]
    rep = reports["tilted"]
    p = SimulationParams(dt=2e-3, seed=35, n_paths=64, max_time=170.0)
    run = sde.simulate_boundary(
        m, 0.0, p, burn_in=20.0,
        observables={"alpha": m.alpha, "beta": m.beta})
    a_mc, a_se = run.averages["alpha"]
    b_mc, b_se = run.averages["beta"]
    assert abs(a_mc - rep.alpha_bar) <= 3 * a_se
    assert abs(b_mc - rep.beta_bar) <= 3 * b_se


def test_attraction_dichotomy(zoo):
    p = SimulationParams(dt=5e-3, seed=41, n_paths=512, max_time=200.0)
    rows_a = sde.attraction_stats(zoo["A"], [(0.0, 0.3)], 200.0, p)
    assert rows_a[0].fraction_near >= 0.95
    rows_b = sde.attraction_stats(zoo["B"], [(0.0, 0.3)], 200.0, p)
    assert rows_b[0].fraction_near <= 0.05
    assert rows_b[0].max_distance <= 50.0  # frozen at the far wall


def test_boundary_is_invariant(zoo):
    p = SimulationParams(dt=5e-3, seed=42, n_paths=16, max_time=5.0)
    rows = sde.attraction_stats(zoo["A"], [(0.7, 0.0)], 5.0, p,
                                near_threshold=1e-12)
    assert rows[0].fraction_near == 1.0
    assert rows[0].max_distance == 0.0


def test_martingale_trace_constant(zoo, reports):
    for name, start, seed in (("A", 5.0, 51), ("B", 5.0, 52)):
        p = SimulationParams(dt=1e-3, seed=seed, n_paths=12000, max_time=2.0)
        times = [0.15 * k for k in range(1, 11)]
        trace = sde.martingale_trace(zoo[name], reports[name], (0.0, start), p,
                                     band=(1.0, 25.0), checkpoint_times=times)
        dev = np.abs(trace.values - trace.start_value)
        assert np.max(dev / trace.stderrs) <= 3.0, name


def test_martingale_drift_rate_far_from_wall(zoo, reports):
    # repelling log-height drift: psi + ln Z grows at rate beta_bar - alpha_bar
    m = zoo["B"]
    rep = reports["B"]
    p = SimulationParams(dt=5e-4, seed=53, n_paths=12000, max_time=0.4)
    gc = assemble(m, None, Flavor.LOG)
    # measure E[ln Z_t] - ln Z_0 directly over a short horizon from deep start
    times = [0.1, 0.2, 0.3, 0.4]
    trace = sde.martingale_trace(m, rep, (0.0, 50.0), p, band=(20.0, 125.0),
                                 checkpoint_times=times, rho_weight=0.0)
    # with rho off, h = ln Z + (abar-bbar) t is a martingale only up to the
    # e^{-2w} correction, negligible at these heights; so
    # E[ln Z_t] = ln 50 + (bbar-abar) t
    slope = (trace.values[-1] - trace.values[0]) / (times[-1] - times[0])
    assert slope == pytest.approx(0.0, abs=0.15)  # compensated trace stays flat
    gap = rep.beta_bar - rep.alpha_bar
    assert gap == pytest.approx(2.0)


def test_martingale_reduction_without_rho(zoo, reports):
    # rho_weight = 0 and flat corrector: the functional is ln Z + gap * t
    m = zoo["B"]
    rep = reports["B"]
    p = SimulationParams(dt=1e-3, seed=54, n_paths=64, max_time=0.2)
    trace = sde.martingale_trace(m, rep, (0.0, 5.0), p, band=(1.0, 25.0),
                                 checkpoint_times=[0.1, 0.2], rho_weight=0.0)
    assert np.max(np.abs(rep.corrector)) < 1e-10
    assert trace.start_value == pytest.approx(math.log(5.0))


def test_rescaled_exit_histograms_converge_to_limit(zoo):
    # total-variation gap between the rescaled flavor and the limit flavor
    # decreases with eps (z-dependent perturbation makes the gap visible)
    m = ChartModel(a=Const(1.0), b=Const(0.0), alpha=Cosine(1.0, 0.5),
                   beta=Const(0.0), tilde=PerturbationSpec(Const(1.0), z_slope=3.0))
    bins = np.linspace(0, 2 * np.pi, 17)

    def hist(flavor_gc, seed):
        p = SimulationParams(dt=2e-3, seed=seed, n_paths=30000, max_time=60.0)
        b = sde.simulate(flavor_gc, (0.0, 4.0), p)
        counts, _ = np.histogram(b.exit_y[b.exited_mask], bins=bins)
        return counts / counts.sum()

    ref = hist(assemble(m, None, Flavor.LIMIT), 61)
    tvs = []
    for eps, seed in ((0.4, 62), (0.1, 63)):
        h = hist(assemble(m, eps, Flavor.RESCALED), seed)
        tvs.append(0.5 * np.sum(np.abs(h - ref)))
    assert tvs[1] < tvs[0]


def test_antithetic_pairs_mirror_noise(zoo):
    gc = assemble(zoo["A"], None, Flavor.LIMIT)
    p = SimulationParams(dt=1e-3, seed=71, n_paths=64, max_time=50.0,
                         antithetic=True)
    batch = sde.simulate(gc, (0.0, 1.0), p)
    assert batch.exit_fraction()[0] >= 0.95
    p2 = SimulationParams(dt=1e-3, seed=71, n_paths=64, max_time=50.0)
    batch2 = sde.simulate(gc, (0.0, 1.0), p2)
    # even paths share streams with the plain run
    assert np.allclose(batch.exit_time[::2], batch2.exit_time[::2])


def test_exit_batch_csv(tmp_path, zoo):
    gc = assemble(zoo["A"], None, Flavor.LIMIT)
    p = SimulationParams(dt=1e-3, seed=81, n_paths=16, max_time=0.05)
    batch = sde.simulate(gc, (0.0, 1.0), p)
    path = tmp_path / "batch.csv"
    batch.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "path_id,exit_y,exit_time,censored"
    assert len(lines) == 17
