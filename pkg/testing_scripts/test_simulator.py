"""
Tests for the cohort simulator.
"""
import sys
from pathlib import Path

import numpy as np
import pytest

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from jointmodel.simulator import empirical_noise_std, simulate_cohort
from models.simulator_models import SimConfig


def test_records_respect_invariants():
    records, truth = simulate_cohort(SimConfig(n_patients=100, seed=1))
    assert len(records) == 100
    assert [r.id for r in records] == [f"P{i:04d}" for i in range(100)]
    assert set(truth) == {r.id for r in records}

    for record in records:
        times, values = record.times, record.values
        assert np.all(np.diff(times) > 0)
        assert np.all((values > 0) & (values < 1))
        if record.event_observed:
            assert np.all(times <= record.event_time)
        else:
            assert record.event_time == record.last_visit_time


def test_same_seed_same_cohort():
    a, truth_a = simulate_cohort(SimConfig(n_patients=30, seed=4))
    b, truth_b = simulate_cohort(SimConfig(n_patients=30, seed=4))
    c, _ = simulate_cohort(SimConfig(n_patients=30, seed=5))
    assert a == b and truth_a == truth_b
    assert a != c


def test_patients_do_not_depend_on_cohort_size():
    small, _ = simulate_cohort(SimConfig(n_patients=5, seed=2))
    large, _ = simulate_cohort(SimConfig(n_patients=20, seed=2))
    assert small == large[:5]


def test_deterministic_periodic_grid():
    config = SimConfig(
        n_patients=5, seed=0, noise="gaussian", noise_std=0.0,
        delta_f_std=0.0, followup_std=0.0, visit_gap_std_months=0.0,
        followup_mean=1.1, visit_gap_mean_months=3.0,
        nu=1e6,  # events far past the follow-up
    )
    records, truth = simulate_cohort(config)
    for record in records:
        assert not record.event_observed
        tau = truth[record.id].tau
        np.testing.assert_allclose(record.times - tau, [0.0, 0.25, 0.5, 0.75, 1.0, 1.25], atol=1e-12)
    assert empirical_noise_std(records, truth, config) == pytest.approx(0.0, abs=1e-9)


def test_followup_closes_on_first_visit_past_horizon():
    config = SimConfig(
        n_patients=3, seed=2, noise="gaussian", noise_std=0.0,
        delta_f_std=0.0, followup_std=0.0, visit_gap_std_months=0.0,
        followup_mean=0.9, visit_gap_mean_months=6.0, nu=1e6,
    )
    records, truth = simulate_cohort(config)
    for record in records:
        tau = truth[record.id].tau
        np.testing.assert_allclose(record.times - tau, [0.0, 0.5, 1.0], atol=1e-12)
        assert record.event_time == record.last_visit_time


def test_event_between_horizon_and_closing_visit_is_observed():
    # horizon at tau + 0.9, closing visit at tau + 1.0, event at tau + 0.95
    config = SimConfig(
        n_patients=1, seed=0, noise="gaussian", noise_std=0.0, sigma_xi=0.0,
        delta_f_std=0.0, followup_std=0.0, visit_gap_std_months=0.0,
        followup_mean=0.9, visit_gap_mean_months=6.0, rho=1e6, nu=0.95,
    )
    records, truth = simulate_cohort(config)
    record = records[0]
    assert record.event_observed
    assert record.event_time - truth[record.id].tau == pytest.approx(0.95, abs=1e-6)
    np.testing.assert_allclose(record.times - truth[record.id].tau, [0.0, 0.5], atol=1e-12)

def test_simulation_scenario_fidelity():
    censoring, visits, noise = [], [], []
    for seed in range(10):
        config = SimConfig(seed=seed)
        records, truth = simulate_cohort(config)
        censoring.append(1.0 - np.mean([r.event_observed for r in records]))
        visits.append(sum(len(r.visits) for r in records))
        noise.append(empirical_noise_std(records, truth, config))

    assert 0.72 <= np.mean(censoring) <= 0.90
    assert all(0.65 <= c <= 0.95 for c in censoring)
    assert 1950 <= np.mean(visits) <= 2260
    assert all(0.03 <= s <= 0.05 for s in noise)


def test_real_like_preset():
    config = SimConfig.real_like(n_patients=50, seed=3)
    assert config.noise == "gaussian"
    assert config.t0 == pytest.approx(1.17)
    records, truth = simulate_cohort(config)
    assert len(records) == 50
    assert config.true_params().sigma == pytest.approx(0.04)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
