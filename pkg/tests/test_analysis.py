import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from halobell.analysis import (
    BinGrid,
    CorrelationSet,
    bootstrap,
    count_matrix,
    estimate_correlations,
    extract_E_and_S,
    fit_h_vs_lambda,
    fit_sinusoid,
    resample_weights,
    shuffle_shots,
    visibility,
)
from halobell.errors import DataError, FitError
from halobell.model import BinSpec, PortPair, integrated_correlation, quantum_correlator
from halobell.simulate import run_campaign


def model_sets(h=1.48, lam=0.6, phases=None, err=1e-3):
    phases = np.linspace(0.5, 0.5 + 2 * np.pi, 9, endpoint=False) if phases is None else phases
    bins = BinSpec(lam)
    return [
        CorrelationSet(
            phase=p,
            n_shots=100,
            c_same=float(integrated_correlation(PortPair.PP, p, h, bins)),
            c_same_err=err,
            c_between=float(integrated_correlation(PortPair.PQ, p, h, bins)),
            c_between_err=err,
            e=float(quantum_correlator(p, h, bins)),
            e_err=err,
        )
        for p in phases
    ]


# binning


def test_grid_is_reflection_symmetric(config):
    grid = BinGrid.from_config(config)
    assert grid.n > 100
    mirror = grid.partners()
    assert np.all(mirror >= 0)
    np.testing.assert_array_equal(mirror[mirror], np.arange(grid.n))
    np.testing.assert_array_equal(grid.index[mirror], -grid.index - 1)


def test_grid_band_mask(config):
    grid = BinGrid.from_config(config)
    centre = (grid.index + 0.5) * grid.size
    r = np.linalg.norm(centre, axis=1)
    assert np.all(np.abs(r - config.k0) <= config.shell_width / 2 + 1e-12)
    assert np.all(np.abs(centre[:, 2]) / r <= np.sin(np.radians(config.theta_tol)) + 1e-12)


def test_assign_box_centres(config):
    grid = BinGrid.from_config(config)
    centre = (grid.index + 0.5) * grid.size
    up = centre + [0, 0, config.k0]
    down = centre - [0, 0, config.k0]
    np.testing.assert_array_equal(grid.assign(up), np.arange(grid.n))
    np.testing.assert_array_equal(grid.assign(down), np.arange(grid.n) + grid.n)
    assert grid.assign(np.array([[0.0, 0.0, config.k0]]))[0] == -1


def test_pair_sets_cover_every_box_once(config):
    grid = BinGrid.from_config(config)
    sets = grid.pair_sets()
    left, right = sets["same_upper"]
    assert len(np.unique(np.concatenate([left, right]))) == grid.n
    assert len(sets["between"][0]) == grid.n


def test_count_matrix_shape(config):
    store = run_campaign(config, phases=[1.0], shots_per_phase=20, seed=1)
    grid = BinGrid.from_config(config)
    x = count_matrix(store.phases[0], grid, config)
    assert x.shape == (20, 2 * grid.n)
    assert x.sum() <= len(store.phases[0].shot_id)


# bootstrap


def test_bootstrap_constant_statistic():
    assert bootstrap(lambda s: 1.0, np.arange(50), 100, seed=0) == 0.0


def test_bootstrap_mean_scaling(rng):
    shots = rng.normal(size=400)
    assert bootstrap(np.mean, shots, 400, seed=1) == pytest.approx(0.05, rel=0.2)


def test_bootstrap_resample_convergence(rng):
    shots = rng.normal(size=400)
    a = bootstrap(np.mean, shots, 200, seed=2)
    b = bootstrap(np.mean, shots, 400, seed=3)
    # Monte Carlo error of a standard deviation estimate from 200 draws
    assert abs(a - b) < 3 * a / math.sqrt(2 * 200)


def test_bootstrap_errors():
    with pytest.raises(DataError):
        bootstrap(np.mean, [1.0], 100)
    with pytest.raises(ValueError):
        bootstrap(np.mean, np.ones(10), 50)


def test_bootstrap_accepts_lists():
    shots = [np.ones(3) * i for i in range(20)]
    assert bootstrap(lambda s: float(np.mean([x.sum() for x in s])), shots, 100) > 0


def test_resample_weights_sum():
    w = resample_weights(30, 100, seed=4)
    np.testing.assert_array_equal(w.sum(axis=1), 30)
    np.testing.assert_array_equal(w, resample_weights(30, 100, seed=4))


# estimators on simulated data


@pytest.fixture(scope="module")
def boosted_store():
    from halobell.units import ExperimentConfig

    cfg = ExperimentConfig(detection_efficiency=1.0, n_bar=0.3, dark_rate=0.0, include_gravity=False)
    phases = np.linspace(0.0, 2 * np.pi, 9, endpoint=False)
    return cfg, run_campaign(cfg, phases=phases, shots_per_phase=1000, seed=21)


@pytest.mark.parametrize("lam", [0.4, 0.6, 1.0])
def test_shuffled_shots_uncorrelated(boosted_store, lam):
    cfg, store = boosted_store
    corr = estimate_correlations(shuffle_shots(store, seed=1), cfg, lam, n_resamples=100)
    for name in ("c_same", "c_between"):
        values = np.array([getattr(c, name) for c in corr])
        w = 1 / np.array([getattr(c, name + "_err") for c in corr]) ** 2
        mean = np.sum(w * values) / np.sum(w)
        assert abs(mean - 1) < 3 / math.sqrt(np.sum(w))


def test_same_exceeds_between_at_pi(boosted_store):
    cfg, store = boosted_store
    c = estimate_correlations(store, cfg, n_resamples=100)
    at_pi = min(c, key=lambda x: abs(x.phase - np.pi))
    assert at_pi.c_same > at_pi.c_between
    assert all(x.c_same_err >= 0 and x.c_same >= 0 for x in c)


def test_pipeline_reproduces_model_curve(boosted_store):
    cfg, store = boosted_store
    corr = estimate_correlations(store, cfg, n_resamples=100)
    ext = extract_E_and_S(corr)
    assert ext.same_fit.r_squared > 0.95 and ext.between_fit.r_squared > 0.95
    expected = quantum_correlator(0.0, cfg.h, BinSpec(0.6))
    assert abs(ext.e0 - expected) < 3 * ext.e0_err
    assert ext.pi_offset_sigma() < 3


def test_estimate_requires_phases(config):
    from halobell.simulate import EventStore

    with pytest.raises(DataError):
        estimate_correlations(EventStore("x", 0, []), config)


def test_excluded_bins_reported(config):
    store = run_campaign(config, phases=[1.0], shots_per_phase=5, seed=2)
    c = estimate_correlations(store, config, n_resamples=100)[0]
    assert c.excluded_bins > 0


# fits


def test_fit_exact_cosine():
    x = np.linspace(0, 2 * np.pi, 9, endpoint=False)
    y = 1.3 + 0.4 * np.cos(x - 0.7)
    fit = fit_sinusoid(x, y, np.full(9, 0.01))
    assert fit.amplitude == pytest.approx(0.4, abs=1e-10)
    assert fit.phase_offset == pytest.approx(-0.7, abs=1e-10)
    assert fit.baseline == pytest.approx(1.3, abs=1e-10)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(fit(x), y, atol=1e-10)


@given(st.floats(0.05, 3), st.floats(-3, 3), st.floats(-2, 2))
@settings(max_examples=50)
def test_fit_recovers_parameters(amp, offset, base):
    x = np.linspace(1.0, 1.0 + 1.5 * np.pi, 7)
    fit = fit_sinusoid(x, base + amp * np.cos(x + offset))
    assert fit.amplitude == pytest.approx(amp, abs=1e-9)
    assert math.cos(fit.phase_offset - offset) == pytest.approx(1.0, abs=1e-9)
    assert 0 <= fit.r_squared <= 1


def test_fit_preconditions():
    with pytest.raises(FitError):
        fit_sinusoid([0, 1, 2], [1, 2, 3])
    with pytest.raises(FitError):
        fit_sinusoid([0, 0.5, 1, 1.5], [1, 2, 3, 4])
    with pytest.raises(FitError):
        fit_sinusoid([0, 1, 2, 3, 4], [1, np.nan, 3, 4, 5])
    with pytest.raises(FitError):
        fit_sinusoid([0, 0, 0, 0, 4], [1, 2, 3, 4, 5])


def test_fit_noisy_uncertainty_coverage():
    rng = np.random.default_rng(5)
    x = np.linspace(0, 2 * np.pi, 9, endpoint=False)
    pulls = []
    for _ in range(300):
        y = 1 + 0.3 * np.cos(x + 0.4) + rng.normal(0, 0.05, 9)
        fit = fit_sinusoid(x, y, np.full(9, 0.05))
        pulls.append((fit.amplitude - 0.3) / fit.amplitude_err)
    assert np.std(pulls) == pytest.approx(1.0, abs=0.15)


def test_model_identity_visibility_equals_e0():
    ext = extract_E_and_S(model_sets())
    assert ext.e0 == pytest.approx(0.3468, abs=5e-4)
    assert ext.visibility == pytest.approx(ext.e0, abs=1e-10)
    assert visibility(ext.same_fit) == pytest.approx(visibility(ext.between_fit), abs=1e-10)
    assert ext.offset_difference == pytest.approx(np.pi, abs=1e-9) or ext.offset_difference == pytest.approx(-np.pi, abs=1e-9)
    assert ext.s_max == pytest.approx(2 * math.sqrt(2) * ext.e0)
    assert not ext.violates_chsh


def test_classical_bound_flag():
    # h chosen so the small-bin amplitude is 1/sqrt(2)
    e0 = 1 / math.sqrt(2)
    h = 2 * e0 / (1 - e0)
    ext = extract_E_and_S(model_sets(h=h, lam=1e-3))
    assert ext.e0 == pytest.approx(e0, rel=1e-5)
    assert ext.s_max == pytest.approx(2.0, rel=1e-5)
    assert ext.at_classical_bound or ext.s_max == pytest.approx(2.0, abs=1e-4)
    d = ext.to_dict()
    assert "violates_chsh" in d and "at_classical_bound" in d


def test_fit_h_self_consistent():
    lams = [0.3, 0.5, 0.7, 1.0, 1.5]
    e = [quantum_correlator(1.052, 1.5, BinSpec(l)) for l in lams]
    fit = fit_h_vs_lambda(lams, e, np.full(5, 1e-3), 1.052)
    assert fit.h == pytest.approx(1.5, rel=1e-6)
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.envelope == pytest.approx(1.5 / 3.5)


def test_fit_h_needs_four_points():
    with pytest.raises(FitError):
        fit_h_vs_lambda([0.3, 0.5, 0.7], [0.1, 0.1, 0.1], None, 0.0)
