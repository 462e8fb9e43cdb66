import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from simulacra import kernels
from simulacra.ecology import (BoidParams, Boids, Ecology, EcologyConfig, ModulationMap,
                               PhysarumAgents, PhysarumSpecies, TermiteAgents, TermiteParams,
                               TrailField, field_diffuse_decay, modulate, step_boids,
                               step_physarum, step_termites)
from simulacra.ecology.boids import cohort_kicks, steering
from simulacra.ecology.field import composite_rgb, read_pnm, to_u8, write_pgm, write_ppm
from simulacra.ecology.modulation import physarum_map
from simulacra.ecology.physarum import deposit_and_diffuse, sort_spatially
from simulacra.ecology.termites import SPIKE, DepositLog


# ------------------------------------------------------------------ field
def test_trail_field_validation():
    with pytest.raises(ValueError):
        TrailField(np.zeros((2, 5)))
    with pytest.raises(ValueError):
        field_diffuse_decay(TrailField.zeros(4, 4), 0.0)
    with pytest.raises(ValueError):
        field_diffuse_decay(TrailField.zeros(4, 4), 1.5)


def test_field_impulse_and_mass():
    f = TrailField.zeros(10, 8)
    f.values[4, 4] = 2.0
    out = field_diffuse_decay(f, 0.5)
    assert np.count_nonzero(out.values) == 9
    np.testing.assert_allclose(out.values[3:6, 3:6], 0.5 * 2.0 / 9)
    assert math.isclose(out.mass(), 0.5 * f.mass(), rel_tol=1e-12)


def test_pnm_round_trip(tmp_path):
    gray = np.arange(12, dtype=np.uint8).reshape(3, 4)
    np.testing.assert_array_equal(read_pnm(write_pgm(tmp_path / "g.pgm", gray)), gray)
    rgb = np.random.default_rng(0).integers(0, 256, (5, 6, 3)).astype(np.uint8)
    np.testing.assert_array_equal(read_pnm(write_ppm(tmp_path / "c.ppm", rgb)), rgb)
    assert (tmp_path / "c.ppm").read_bytes().startswith(b"P6\n6 5\n255\n")


def test_to_u8_scaling():
    assert to_u8(np.zeros((3, 3))).max() == 0
    np.testing.assert_array_equal(to_u8(np.array([[0.0, 0.5, 1.0]])), [[0, 128, 255]])
    rgb = composite_rgb(np.random.default_rng(1).random((4, 6, 6)))
    assert rgb.shape == (6, 6, 3) and rgb.dtype == np.uint8


# --------------------------------------------------------------- physarum
def _one_agent(x, y, heading):
    return PhysarumAgents(np.array([x]), np.array([y]), np.array([heading]),
                          np.array([0, 1]), np.array([0], dtype=np.uint64))


def test_left_probe_turns_left():
    sp = PhysarumSpecies(count=1)
    a = _one_agent(20.5, 20.5, 0.0)
    fields = np.zeros((1, 40, 40), np.float32)
    lx = 20.5 + sp.sensor_offset * math.cos(-sp.sensor_angle)
    ly = 20.5 + sp.sensor_offset * math.sin(-sp.sensor_angle)
    fields[0, int(ly), int(lx)] = 10.0
    step_physarum(a, fields, [sp], np.ones((1, 1)), seed=0, step=0)
    assert math.isclose(a.heading[0], -sp.rotation_angle, abs_tol=1e-12)
    assert math.isclose(a.x[0], 20.5 + math.cos(-sp.rotation_angle), abs_tol=1e-12)


@pytest.mark.parametrize("heading", [0.0, 1.0, math.pi, 4.0])
def test_uniform_field_goes_straight(heading):
    sp = PhysarumSpecies(count=1)
    a = _one_agent(5.25, 7.75, heading)
    fields = np.full((1, 30, 30), 3.0, np.float32)
    for step in range(50):
        step_physarum(a, fields, [sp], np.ones((1, 1)), seed=1, step=step)
    assert a.heading[0] == heading
    assert math.isclose(a.x[0], (5.25 + 50 * math.cos(heading)) % 30, abs_tol=1e-9)
    assert math.isclose(a.y[0], (7.75 + 50 * math.sin(heading)) % 30, abs_tol=1e-9)


def test_front_weakest_turns_randomly_both_ways():
    sp = PhysarumSpecies(count=2000)
    n = 2000
    a = PhysarumAgents(np.full(n, 20.5), np.full(n, 20.5), np.zeros(n), np.array([0, n]),
                       np.arange(n, dtype=np.uint64))
    fields = np.full((1, 40, 40), 1.0, np.float32)
    fields[0, 20, 29] = 0.0  # front probe only
    step_physarum(a, fields, [sp], np.ones((1, 1)), seed=3, step=0)
    left = np.sum(np.isclose(a.heading, -sp.rotation_angle))
    right = np.sum(np.isclose(a.heading, sp.rotation_angle))
    assert left + right == n
    assert abs(left - n / 2) < 4 * math.sqrt(n / 4)


def _half_plane_masses(coupling, steps=100, size=50, n=1000):
    species = [PhysarumSpecies(count=n), PhysarumSpecies(count=n)]
    rng = np.random.default_rng(0)
    x = np.concatenate([rng.uniform(0, size / 2, n), rng.uniform(size / 2, size, n)])
    y = rng.uniform(0, size, 2 * n)
    agents = PhysarumAgents(x, y, rng.uniform(0, 2 * math.pi, 2 * n), np.array([0, n, 2 * n]),
                            np.concatenate([np.arange(n), (1 << 40) + np.arange(n)])
                            .astype(np.uint64))
    fields = np.zeros((2, size, size))
    fields[0, :, : size // 2] = 1.0
    fields[1, :, size // 2:] = 1.0
    for step in range(steps):
        counts = step_physarum(agents, fields, species, coupling, seed=4, step=step)
        fields = deposit_and_diffuse(fields, counts, species)
    half = size // 2
    own = fields[0, :, :half].sum() / fields[0].sum(), fields[1, :, half:].sum() / fields[1].sum()
    return own


def test_negative_coupling_keeps_species_apart():
    repel = _half_plane_masses(np.array([[1.0, -1.0], [-1.0, 1.0]]))
    attract = _half_plane_masses(np.array([[1.0, 1.0], [1.0, 1.0]]))
    # each species' trail stays mostly where the other's is low
    assert repel[0] > 0.5 and repel[1] > 0.5
    assert repel[0] > attract[0] and repel[1] > attract[1]


def test_species_validation():
    with pytest.raises(ValueError):
        PhysarumSpecies(sensor_offset=0.5).validate()
    with pytest.raises(ValueError):
        PhysarumSpecies(sensor_angle=math.pi).validate()
    with pytest.raises(ValueError):
        PhysarumSpecies(count=-1).validate()
    with pytest.raises(ValueError):
        Ecology(EcologyConfig(field_size=16, species=[PhysarumSpecies(count=1)] * 5,
                              n_boids=0), 4, 0)


def test_spatial_sort_does_not_change_results():
    size = 32
    sp = [PhysarumSpecies(count=300)]
    fields = np.random.default_rng(2).random((1, size, size))
    base = PhysarumAgents.spawn([300], size, size, np.random.default_rng(5))
    moved = PhysarumAgents(base.x.copy(), base.y.copy(), base.heading.copy(),
                           base.offsets.copy(), base.ids.copy())
    sort_spatially(moved, size)
    assert not np.array_equal(moved.ids, base.ids)
    for step in range(10):
        c1 = step_physarum(base, fields, sp, np.ones((1, 1)), 9, step)
        c2 = step_physarum(moved, fields, sp, np.ones((1, 1)), 9, step)
        np.testing.assert_array_equal(c1, c2)
    a, b = base.by_id(), moved.by_id()
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.heading, b.heading)


@pytest.mark.parametrize("workers", [2, 3, 8])
def test_physarum_split_across_workers_is_identical(workers):
    from simulacra.ecology.parallel import make_pool
    size = 24
    sp = [PhysarumSpecies(count=500), PhysarumSpecies(count=300)]
    fields = np.random.default_rng(0).random((2, size, size)).astype(np.float32)
    runs = []
    for w in (1, workers):
        agents = PhysarumAgents.spawn([500, 300], size, size, np.random.default_rng(1))
        pool = make_pool(w)
        for step in range(5):
            counts = step_physarum(agents, fields, sp, np.eye(2), 2, step, w, pool)
        if pool:
            pool.shutdown()
        runs.append((agents, counts))
    np.testing.assert_array_equal(runs[0][1], runs[1][1])
    np.testing.assert_array_equal(runs[0][0].x, runs[1][0].x)


# ---------------------------------------------------------------- termites
def test_spike_forces_deposit_where_agent_lands():
    n = 10
    rng = np.random.default_rng(0)
    agents = TermiteAgents.spawn(n, 32, 32, rng)
    params = TermiteParams(p0=0.0, theta_dep=math.inf)
    field = rng.random((32, 32)) * 0.1
    spikes = np.zeros(n, np.uint8)
    spikes[5] = 1
    flags, counts = step_termites(agents, field, spikes, params, seed=1, step=0)
    assert flags.tolist() == [0] * 5 + [SPIKE] + [0] * 4
    cell = int(agents.y[5]), int(agents.x[5])
    assert counts[cell] == 1 and counts.sum() == 1
    after = field + params.d_base * counts
    assert after[cell] - field[cell] >= params.d_base


def test_termite_without_noise_walks_straight_on_uniform_field():
    agents = TermiteAgents(np.array([1.5]), np.array([2.5]), np.array([0.3]))
    params = TermiteParams(sigma=0.0, p0=0.0)
    field = np.full((16, 16), 0.5)
    for step in range(100):
        step_termites(agents, field, np.zeros(1, np.uint8), params, seed=0, step=step)
    assert agents.heading[0] == 0.3
    assert math.isclose(agents.x[0], (1.5 + 100 * math.cos(0.3)) % 16, abs_tol=1e-9)
    assert math.isclose(agents.y[0], (2.5 + 100 * math.sin(0.3)) % 16, abs_tol=1e-9)


def test_disabled_deposition_keeps_field_zero():
    n = 131
    agents = TermiteAgents.spawn(n, 64, 64, np.random.default_rng(0))
    params = TermiteParams(p0=0.0, theta_dep=math.inf)
    field = np.zeros((64, 64))
    zero = np.zeros(n, np.uint8)
    for step in range(10_000):
        _, counts = step_termites(agents, field, zero, params, seed=2, step=step)
        field = kernels.deposit_diffuse_decay(field, counts, params.d_base, params.decay)
    assert not field.any()


def test_termite_turns_toward_strongest_probe():
    p = TermiteParams(sigma=0.0, p0=0.0)
    agents = TermiteAgents(np.array([10.5]), np.array([10.5]), np.array([0.0]))
    field = np.zeros((24, 24))
    rx = 10.5 + p.probe_dist * math.cos(p.probe_angle)
    ry = 10.5 + p.probe_dist * math.sin(p.probe_angle)
    field[int(ry), int(rx)] = 5.0
    flags, _ = step_termites(agents, field, np.zeros(1, np.uint8), p, seed=0, step=0)
    assert math.isclose(agents.heading[0], p.turn)
    assert flags[0] == 2  # sensed max above theta_dep


def test_deposit_log_keeps_selected_reasons():
    log = DepositLog(keep=(SPIKE,))
    log.extend(3, np.array([0, 1, 2, 3, 1], np.int8))
    log.extend(4, np.zeros(5, np.int8))
    rows, agents, reasons = log.arrays()
    assert rows.tolist() == [3, 3] and agents.tolist() == [1, 4]
    assert reasons.tolist() == [1, 1]
    assert log.totals == {1: 2, 2: 1, 3: 1}


def test_spike_audit_over_ecology_ticks():
    raster = (np.random.default_rng(3).random((400, 20)) < 0.05).astype(np.uint8)
    cfg = EcologyConfig(field_size=16, species=[PhysarumSpecies(count=50)], n_boids=10,
                        boids_world=64.0, termite_field=32)
    eco = Ecology(cfg, 20, seed=1)
    for r, row in enumerate(raster):
        eco.tick(row, 0.5, r)
    rows, agents, reasons = eco.deposit_log.arrays()
    spiked = set(zip(*np.nonzero(raster)))
    logged = {(int(r), int(a)) for r, a, why in zip(rows, agents, reasons) if why == SPIKE}
    assert logged == {(int(r), int(c)) for r, c in spiked}


# ------------------------------------------------------------------- boids
def test_lonely_boid_keeps_velocity():
    b = Boids(np.array([10.0]), np.array([10.0]), np.array([0.7]), np.array([-0.4]), 100, 100)
    out = step_boids(b, BoidParams())
    assert (out.vx[0], out.vy[0]) == (0.7, -0.4)
    assert math.isclose(out.px[0], 10.7) and math.isclose(out.py[0], 9.6)


def test_cohesion_pulls_pair_together():
    p = BoidParams(w_sep=0.0, w_ali=0.0, w_coh=0.05, r_sep=8.0, r_neighbor=25.0)
    b = Boids(np.array([10.0, 30.0]), np.array([50.0, 50.0]), np.zeros(2), np.zeros(2),
              200.0, 200.0)
    d = 20.0
    steps = 0
    while d >= p.r_sep:
        b = step_boids(b, p)
        nd = abs(b.px[1] - b.px[0])
        assert nd < d
        d = nd
        steps += 1
        assert steps < 500


@settings(max_examples=40)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 60), speed=st.floats(0.1, 5.0))
def test_speed_never_exceeds_max(seed, n, speed):
    rng = np.random.default_rng(seed)
    b = Boids(rng.uniform(0, 50, n), rng.uniform(0, 50, n), rng.normal(0, 10, n),
              rng.normal(0, 10, n), 50.0, 50.0)
    p = BoidParams(max_speed=speed, max_force=rng.uniform(0.01, 3.0))
    for _ in range(3):
        b = step_boids(b, p, spiking_channels=rng.integers(0, 131, 5))
        assert np.all(np.hypot(b.vx, b.vy) <= speed)
        assert np.all((b.px >= 0) & (b.px < 50) & (b.py >= 0) & (b.py < 50))


def _naive_reference(px, py, vx, vy, w, h, rn, rs, wc, wsep, wa):
    """Plain double loop over all pairs; separation pushes away with weight 1/d^2."""
    n = len(px)
    sx, sy = np.zeros(n), np.zeros(n)
    for i in range(n):
        cnt = 0
        cx = cy = avx = avy = sepx = sepy = 0.0
        for j in range(n):
            if i == j:
                continue
            dx = px[j] - px[i]
            dy = py[j] - py[i]
            dx -= w * math.floor(dx / w + 0.5)
            dy -= h * math.floor(dy / h + 0.5)
            d2 = dx * dx + dy * dy
            if d2 < rn * rn:
                cnt += 1
                cx += dx
                cy += dy
                avx += vx[j]
                avy += vy[j]
                if 0 < d2 < rs * rs:
                    sepx -= dx / d2
                    sepy -= dy / d2
        sx[i] = wsep * sepx
        sy[i] = wsep * sepy
        if cnt:
            sx[i] += wc * cx / cnt + wa * (avx / cnt - vx[i])
            sy[i] += wc * cy / cnt + wa * (avy / cnt - vy[i])
    return sx, sy


@pytest.mark.parametrize("seed", range(5))
def test_naive_kernel_matches_loop_reference(seed):
    rng = np.random.default_rng(seed)
    n, w = 40, 60.0
    b = Boids.spawn(n, w, w, 2.0, rng)
    p = BoidParams()
    got = steering(b, p, "naive")
    ref = _naive_reference(b.px, b.py, b.vx, b.vy, w, w, p.r_neighbor, p.r_sep, p.w_coh,
                           p.w_sep, p.w_ali)
    np.testing.assert_allclose(got[0], ref[0], rtol=0, atol=1e-12)
    np.testing.assert_allclose(got[1], ref[1], rtol=0, atol=1e-12)


@settings(max_examples=200)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 120),
       world=st.floats(10.0, 300.0), rn=st.floats(0.5, 60.0))
def test_grid_matches_naive(seed, n, world, rn):
    rng = np.random.default_rng(seed)
    b = Boids.spawn(n, world, world * rng.uniform(0.5, 2.0), 2.0, rng)
    p = BoidParams(r_neighbor=rn, r_sep=rn * rng.uniform(0.1, 1.0))
    a = steering(b, p, "naive")
    g = steering(b, p, "grid")
    np.testing.assert_allclose(a[0], g[0], rtol=0, atol=1e-9)
    np.testing.assert_allclose(a[1], g[1], rtol=0, atol=1e-9)


def test_cohort_kicks_round_robin():
    k = cohort_kicks(6, [0, 4, 4], n_channels=4, gain=0.3)
    np.testing.assert_allclose(k, [0.9, 0, 0, 0, 0.9, 0])


def test_spike_rotates_mapped_cohort_only():
    n = 8
    b = Boids(np.arange(n) * 100.0, np.zeros(n), np.ones(n), np.zeros(n), 1000.0, 1000.0)
    out = step_boids(b, BoidParams(max_speed=5.0), spiking_channels=[1], n_channels=4)
    ang = np.arctan2(out.vy, out.vx)
    np.testing.assert_allclose(ang[[1, 5]], 0.3, atol=1e-12)
    np.testing.assert_allclose(ang[[0, 2, 3, 4, 6, 7]], 0.0, atol=1e-12)


# -------------------------------------------------------------- modulation
def test_modulate_endpoints_and_midpoint():
    m = physarum_map()
    lo = modulate(0.0, m)
    hi = modulate(1.0, m)
    assert lo == {k: v[0] for k, v in m.ranges.items()}
    assert hi == {k: v[1] for k, v in m.ranges.items()}
    assert modulate(0.5, ModulationMap({"sensor_offset": (3.0, 15.0)})) == {"sensor_offset": 9.0}


def test_modulate_clamps_and_warns_once(caplog):
    m = ModulationMap({"a": (10.0, 0.0)})
    with caplog.at_level("WARNING"):
        assert modulate(1.7, m) == {"a": 0.0}
        assert modulate(-3.0, m) == {"a": 10.0}
    assert sum("outside" in r.message for r in caplog.records) == 1


@given(r=st.floats(-2, 3), lo=st.floats(-100, 100), hi=st.floats(-100, 100))
def test_modulate_stays_in_bounds(r, lo, hi):
    v = modulate(r, ModulationMap({"p": (lo, hi)}))["p"]
    assert min(lo, hi) <= v <= max(lo, hi)


# ------------------------------------------------------------ whole world
def _small_world(workers=1, seed=0):
    cfg = EcologyConfig(field_size=48, species=[PhysarumSpecies(count=400) for _ in range(3)],
                        n_boids=120, boids_world=96.0, termite_field=32, step_every=2)
    return Ecology(cfg, 16, seed, workers)


def _drive(eco, rows=60):
    rng = np.random.default_rng(42)
    for r in range(rows):
        eco.tick((rng.random(16) < 0.1).astype(np.uint8), r / rows, r)


@pytest.mark.parametrize("workers", [2, 8])
def test_world_is_worker_invariant(workers):
    a, b = _small_world(1), _small_world(workers)
    _drive(a)
    _drive(b)
    b.close()
    assert a.digest() == b.digest()


def test_world_seed_changes_state():
    a, b = _small_world(seed=0), _small_world(seed=1)
    _drive(a, 10)
    _drive(b, 10)
    assert a.digest() != b.digest()


def test_checkpoint_round_trip(tmp_path):
    a = _small_world()
    _drive(a, 30)
    path = a.save_checkpoint(tmp_path / "eco.bin")
    assert path.read_bytes()[:6] == b"SNECO1"
    b = _small_world(seed=0)
    b.load_checkpoint(path)
    assert b.digest() == a.digest()
    _drive(a, 20)
    _drive(b, 20)
    assert a.digest() == b.digest()


def test_checkpoint_rejects_bad_magic(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"NOTECO" + bytes(40))
    with pytest.raises(ValueError):
        _small_world().load_checkpoint(p)


def test_fields_stay_finite_and_nonnegative():
    eco = _small_world()
    _drive(eco, 80)
    assert np.all(np.isfinite(eco.fields)) and eco.fields.min() >= 0
    assert np.all(np.isfinite(eco.termite_field)) and eco.termite_field.min() >= 0
    ci = eco.cluster_intensity(8)
    assert ci.shape == (8, 8) and ci.max() == 1.0 and ci.min() >= 0


def test_frame_dumps(tmp_path):
    eco = _small_world()
    _drive(eco, 10)
    paths = eco.dump_frames(tmp_path, "000010")
    names = sorted(p.name for p in paths)
    assert "composite_000010.ppm" in names and len(paths) == 5
    assert read_pnm(tmp_path / "composite_000010.ppm").shape == (48, 48, 3)
