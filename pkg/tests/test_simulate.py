import numpy as np
import pytest

from halobell.errors import ConfigError, DataError
from halobell.optics import pair_port_probabilities
from halobell.simulate import (
    BACKGROUND,
    EventStore,
    Geometry,
    PhaseEvents,
    SimulationRates,
    generate_shot,
    run_campaign,
)
from halobell.units import dark_density, velocity_to_wavenumber


def _ideal(config):
    return config.replace(include_gravity=False)


def test_rates_reach_configured_height(config):
    rates = SimulationRates.from_config(config)
    assert 0 < rates.pair_fraction < 1
    assert rates.pairs_per_halo > 0 and rates.background_per_region > 0
    assert rates.dark_per_region == pytest.approx(dark_density(config) * Geometry.from_config(config).volume)


def test_unreachable_height_rejected(config):
    with pytest.raises(ConfigError, match="unreachable"):
        SimulationRates.from_config(config.replace(h=10.0))


def test_dark_counts_per_bin(config):
    bin_volume = np.prod(2 * config.sigma_k * 0.5)
    per_bin = dark_density(config) * bin_volume
    assert 5e-5 < per_bin < 6.5e-5


def test_geometry_contains_band(config, rng):
    geom = Geometry.from_config(config)
    pts = geom.sample(rng, 20000)
    rho = np.hypot(pts[:, 0], pts[:, 1])
    assert rho.min() >= geom.rho_lo and rho.max() <= geom.rho_hi
    assert np.abs(pts[:, 2]).max() <= geom.z_half
    r_hi = config.k0 + config.shell_width / 2
    assert geom.rho_hi > r_hi and geom.z_half > r_hi * np.sin(np.radians(config.theta_tol))
    assert geom.volume == pytest.approx(np.pi * (geom.rho_hi**2 - geom.rho_lo**2) * 2 * geom.z_half)


def test_pair_residuals_have_correlation_width(config):
    resid = []
    for s in range(60):
        _, pairs = generate_shot(config, 1.0, seed=4, shot_id=s, return_pairs=True)
        for p in pairs:
            target = np.array([0, 0, 2 * config.k0 * (1 if p.halo == "upper" else -1)])
            resid.append(p.k + p.k_prime - target)
    resid = np.array(resid)
    assert len(resid) > 2000
    np.testing.assert_allclose(resid.std(axis=0), config.sigma_k, rtol=0.06)
    np.testing.assert_allclose(resid.mean(axis=0), 0, atol=0.05)


@pytest.mark.parametrize("phi", [0.3, np.pi / 2, 2.5])
def test_outcome_frequencies(config, phi):
    cfg = _ideal(config)
    outcomes = []
    for s in range(80):
        _, pairs = generate_shot(cfg, phi, seed=5, shot_id=s, return_pairs=True)
        outcomes += [p.outcome for p in pairs]
    freq = np.bincount(outcomes, minlength=4) / len(outcomes)
    expected = pair_port_probabilities(phi)
    np.testing.assert_allclose(freq, expected, atol=4 * np.sqrt(0.25 / len(outcomes)))


def test_pair_ports_match_outcome(config):
    shot, pairs = generate_shot(config, 0.7, seed=1, shot_id=0, return_pairs=True)
    assert set(np.unique(shot.port)) <= set(range(5))
    events = shot.events()
    assert len(events) == len(shot)
    assert all(e.port in ("p", "p'", "q", "q'", "background") for e in events)


def test_detection_efficiency_thinning(config):
    cfg = config.replace(dark_rate=0.0)
    rates = SimulationRates.from_config(cfg)
    counts = [len(generate_shot(cfg, 1.0, seed=2, shot_id=s, rates=rates)) for s in range(300)]
    expected = cfg.detection_efficiency * 2 * (2 * rates.pairs_per_halo + rates.background_per_region)
    assert np.mean(counts) == pytest.approx(expected, rel=0.05)


def test_detected_momenta_near_halos(config):
    shot = generate_shot(config, 1.0, seed=3, shot_id=1)
    k = velocity_to_wavenumber(shot.velocity)
    geom = Geometry.from_config(config)
    # lost atoms fall outside; every detection stays within the padded regions
    for sign in (1, -1):
        near = np.abs(k[:, 2] - sign * config.k0) <= geom.z_half + 2 * config.k0
        assert near.any()
    assert np.all(np.hypot(k[:, 0], k[:, 1]) <= geom.rho_hi + 1e-9)


def test_shot_determinism_and_independence(config):
    a = generate_shot(config, 1.0, seed=11, shot_id=3, phase_index=2)
    b = generate_shot(config, 1.0, seed=11, shot_id=3, phase_index=2)
    c = generate_shot(config, 1.0, seed=11, shot_id=4, phase_index=2)
    np.testing.assert_array_equal(a.velocity, b.velocity)
    assert a.velocity.shape != c.velocity.shape or not np.allclose(a.velocity, c.velocity)


def test_campaign_matches_single_shots(config):
    store = run_campaign(config, phases=[0.5, 2.0], shots_per_phase=5, seed=8)
    shot = generate_shot(config, 2.0, seed=8, shot_id=3, phase_index=1)
    ph = store.phases[1]
    np.testing.assert_array_equal(ph.velocity[ph.shot_id == 3], shot.velocity)


def test_campaign_parallel_equals_serial(config):
    serial = run_campaign(config, phases=[0.5, 2.0], shots_per_phase=20, seed=1)
    parallel = run_campaign(config, phases=[0.5, 2.0], shots_per_phase=20, seed=1, workers=2)
    for a, b in zip(serial.phases, parallel.phases):
        np.testing.assert_array_equal(a.velocity, b.velocity)
        np.testing.assert_array_equal(a.shot_id, b.shot_id)


def test_campaign_rejects_zero_shots(config):
    with pytest.raises(ConfigError):
        run_campaign(config, shots_per_phase=0)


def test_store_round_trip(tmp_path, config):
    store = run_campaign(config, phases=[0.5, 2.0, 4.0], shots_per_phase=10, seed=2)
    store.manifest_hash = "abc123"
    paths = store.save(tmp_path)
    assert [p.name for p in paths] == ["events_phase00.txt", "events_phase01.txt", "events_phase02.txt"]
    loaded = EventStore.load(tmp_path)
    assert loaded.config_hash == config.hash()
    assert loaded.manifest_hash == "abc123"
    assert loaded.seed == 2
    for a, b in zip(store.phases, loaded.phases):
        assert a.phase == b.phase and a.n_shots == b.n_shots
        np.testing.assert_array_equal(a.shot_id, b.shot_id)
        np.testing.assert_allclose(a.velocity, b.velocity, atol=5e-7)


def test_store_saves_byte_identical(tmp_path, config):
    run_campaign(config, phases=[1.0], shots_per_phase=5, seed=3).save(tmp_path / "a")
    run_campaign(config, phases=[1.0], shots_per_phase=5, seed=3).save(tmp_path / "b")
    a = (tmp_path / "a" / "events_phase00.txt").read_bytes()
    assert a == (tmp_path / "b" / "events_phase00.txt").read_bytes()


def test_store_load_errors(tmp_path, config):
    with pytest.raises(DataError):
        EventStore.load(tmp_path / "missing")
    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "events_phase00.txt").write_text("# nonsense\n1 2 3\n")
    with pytest.raises(DataError):
        EventStore.load(bad)
    store = run_campaign(config, phases=[1.0], shots_per_phase=3, seed=1)
    store.save(tmp_path / "ok")
    path = tmp_path / "ok" / "events_phase00.txt"
    path.write_text(path.read_text() + "99 0.1 0.1 0.1 0\n")
    with pytest.raises(DataError):
        EventStore.load(tmp_path / "ok")


def test_background_label(config):
    shot = generate_shot(config.replace(h=0.0), 1.0, seed=6)
    assert np.all(shot.port == BACKGROUND)


def test_phase_events_wavenumbers(config):
    v = np.array([[10.0, 0.0, 65.0]])
    ev = PhaseEvents(0.0, 1, np.array([0]), v)
    np.testing.assert_allclose(ev.wavenumbers(config), velocity_to_wavenumber(v))
