"""
Tests for recovery and prediction metrics against brute-force oracles.
"""
import math
import sys
from pathlib import Path

import numpy as np
import pytest

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from evaluation.metrics import (
    CensoringDistribution,
    brier_score,
    build_recovery_report,
    c_index,
    clopper_pearson,
    coverage_rate,
    cumulative_dynamic_auc,
    empirical_se,
    ibs_grid,
    icc,
    integrated_brier,
    mae_mse,
    relative_bias,
    ree,
    rrmse,
)
from jointmodel.errors import ContractError, DomainError, InputError, UndefinedMetricError
from models.simulator_models import SimConfig


def censoring_km(times, flags, t, left=False):
    """Hand-written Kaplan-Meier of the censoring times."""
    value = 1.0
    for c in np.unique(times[~flags]):
        if c < t or (c == t and not left):
            at_risk = np.count_nonzero(times >= c)
            censored = np.count_nonzero((times == c) & ~flags)
            value *= 1.0 - censored / at_risk
    return value


def random_survival_data(rng, n):
    times = rng.exponential(1.0, n)
    flags = rng.random(n) < 0.6
    return times, flags


# Recovery

def test_relative_errors():
    np.testing.assert_allclose(ree([1.1, 0.9], 1.0), [10.0, -10.0])
    assert relative_bias([1.1, 0.9], 1.0) == pytest.approx(0.0, abs=1e-12)
    assert rrmse([1.1, 0.9], 1.0) == pytest.approx(10.0)
    se, rse = empirical_se([1.0, 3.0])
    assert se == pytest.approx(math.sqrt(2.0))
    assert rse == pytest.approx(math.sqrt(2.0) / 2.0 * 100.0)


def test_relative_errors_reject_bad_input():
    with pytest.raises(DomainError):
        ree([1.0], 0.0)
    with pytest.raises(InputError):
        relative_bias([], 1.0)
    with pytest.raises(InputError):
        empirical_se([1.0])


def test_clopper_pearson_reference_values():
    low, high = clopper_pearson(95, 100)
    assert low == pytest.approx(0.887, abs=1e-3)
    assert high == pytest.approx(0.984, abs=1e-3)
    assert clopper_pearson(0, 1) == (0.0, pytest.approx(0.975))
    assert clopper_pearson(1, 1) == (pytest.approx(0.025), 1.0)


def test_coverage_rate():
    result = coverage_rate([(0, 2), (0.5, 1.5), (2, 3), (-1, 0.5)], 1.0)
    assert result.n == 4 and result.n_covered == 2
    assert result.rate == 0.5
    assert result.ci_low <= 0.5 <= result.ci_high


def test_icc():
    x = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    assert icc(x, x) == pytest.approx(1.0)
    # a constant offset is penalized by absolute agreement
    shifted = icc(x + 1.0, x)
    assert 0.0 < shifted < 1.0
    # ICC(2,1) by hand: MSR = 5, MSC = 2.5, MSE = 0
    assert shifted == pytest.approx(5.0 / (5.0 + 2.0 * 2.5 / 5.0))
    with pytest.raises(DomainError):
        icc([1.0, 1.0], [2.0, 2.0])


def test_recovery_report_on_exact_fits():
    truth = SimConfig().true_params()
    report = build_recovery_report([truth, truth, truth], truth, icc_tau=0.9, icc_xi=0.8)
    assert report.n_datasets == 3
    for p in report.parameters:
        assert p.rb == pytest.approx(0.0, abs=1e-12)
        assert p.rrmse == pytest.approx(0.0, abs=1e-12)
    frame = report.to_frame()
    assert list(frame["parameter"]) == ["sigma_tau", "sigma_xi", "t0", "g", "v0", "nu", "rho", "sigma"]
    with pytest.raises(ContractError):
        build_recovery_report([truth, truth], [truth])


# Survival

def test_c_index_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(5, 30))
        times, flags = random_survival_data(rng, n)
        risk = np.round(rng.normal(size=n), 1)
        horizon = float(np.quantile(times, 0.7))

        concordant, pairs = 0.0, 0
        for i in range(n):
            if not (flags[i] and times[i] <= horizon):
                continue
            for j in range(n):
                if times[i] < times[j]:
                    pairs += 1
                    concordant += 1.0 if risk[i] > risk[j] else 0.5 if risk[i] == risk[j] else 0.0
        if pairs == 0:
            with pytest.raises(UndefinedMetricError):
                c_index(risk, times, flags, horizon)
            continue
        assert c_index(risk, times, flags, horizon) == pytest.approx(concordant / pairs, abs=1e-12)


def test_c_index_invariant_under_monotone_transforms():
    rng = np.random.default_rng(8)
    transforms = (np.exp, np.arctan, lambda x: x ** 3, lambda x: 3.0 * x + 1.0)
    checked = 0
    while checked < 50:
        n = int(rng.integers(5, 30))
        times, flags = random_survival_data(rng, n)
        risk = np.round(rng.normal(size=n), 1)
        horizon = float(np.quantile(times, 0.7))
        try:
            base = c_index(risk, times, flags, horizon)
        except UndefinedMetricError:
            continue
        for transform in transforms:
            assert c_index(transform(risk), times, flags, horizon) == base
        checked += 1


def test_censoring_distribution_matches_hand_km():
    rng = np.random.default_rng(1)
    times, flags = random_survival_data(rng, 40)
    censoring = CensoringDistribution(times, flags)
    for t in np.concatenate([times, [0.0, 10.0]]):
        assert float(censoring.at(t)) == pytest.approx(censoring_km(times, flags, t), abs=1e-12)
        assert float(censoring.left_limit(t)) == pytest.approx(censoring_km(times, flags, t, left=True), abs=1e-12)


def test_cumulative_dynamic_auc_matches_oracle():
    rng = np.random.default_rng(2)
    n = 60
    times, flags = random_survival_data(rng, n)
    eval_times = [0.5, 1.0]
    surv = rng.uniform(0.0, 1.0, (n, 2))
    mean_auc, aucs = cumulative_dynamic_auc(surv, times, flags, eval_times)

    for j, t in enumerate(eval_times):
        risk = 1.0 - surv[:, j]
        numerator = denominator = 0.0
        for i in range(n):
            if not (flags[i] and times[i] <= t):
                continue
            w = 1.0 / censoring_km(times, flags, times[i], left=True)
            for k in range(n):
                if times[k] > t:
                    denominator += w
                    numerator += w * (1.0 if risk[i] > risk[k] else 0.5 if risk[i] == risk[k] else 0.0)
        assert aucs[j] == pytest.approx(numerator / denominator, abs=1e-12)
    assert mean_auc == pytest.approx(np.mean(aucs))


def test_auc_without_controls_is_undefined():
    times = np.array([0.1, 0.2, 0.3])
    flags = np.array([True, True, True])
    with pytest.raises(UndefinedMetricError):
        cumulative_dynamic_auc(np.full((3, 1), 0.5), times, flags, [1.0])


def test_brier_and_ibs_match_oracle():
    rng = np.random.default_rng(3)
    n = 50
    times, flags = random_survival_data(rng, n)
    grid = ibs_grid(1.0, 10)
    surv = np.sort(rng.uniform(0.0, 1.0, (n, grid.size)), axis=1)[:, ::-1]

    expected = []
    for j, t in enumerate(grid):
        total = 0.0
        for i in range(n):
            if flags[i] and times[i] <= t:
                total += surv[i, j] ** 2 / censoring_km(times, flags, times[i], left=True)
            elif times[i] > t:
                total += (1.0 - surv[i, j]) ** 2 / censoring_km(times, flags, t)
        expected.append(total / n)
    np.testing.assert_allclose(brier_score(surv, times, flags, grid), expected, rtol=1e-12)

    area = sum((grid[j + 1] - grid[j]) * (expected[j] + expected[j + 1]) / 2.0 for j in range(grid.size - 1))
    assert integrated_brier(surv, times, flags, grid) == pytest.approx(area / (grid[-1] - grid[0]), rel=1e-12)


def test_ibs_of_constant_half_without_censoring():
    times = np.array([0.3, 0.6, 0.9, 1.2, 1.5, 1.8])
    flags = np.ones(6, dtype=bool)
    grid = ibs_grid(1.5, 30)
    assert integrated_brier(np.full((6, 30), 0.5), times, flags, grid) == pytest.approx(0.25)


def test_ibs_grid():
    grid = ibs_grid(1.5, 30)
    assert grid.size == 30
    assert grid[0] == pytest.approx(0.05)
    assert grid[-1] == 1.5


def test_misaligned_inputs_rejected():
    with pytest.raises(ContractError):
        c_index([0.1, 0.2], [1.0, 2.0, 3.0], [True, False, True], 2.0)
    with pytest.raises(ContractError):
        integrated_brier(np.full((2, 1), 0.5), [1.0, 2.0], [True, True], [1.0])


# Longitudinal

def test_mae_mse_on_raw_scale():
    mae, mse = mae_mse([0.5, 0.5], [0.25, 0.75], scale=48.0)
    assert mae == pytest.approx(12.0)
    assert mse == pytest.approx(144.0)
    with pytest.raises(InputError):
        mae_mse([], [])


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
