"""
Tests for the complete log-likelihood, the sufficient statistics and the
closed-form maximization.
"""
import math
import sys
from pathlib import Path

import numpy as np
import pytest

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from jointmodel.errors import ContractError, ParameterError
from jointmodel.likelihood import (
    compute_stats,
    fixed_effects_prior,
    longitudinal_attachment,
    maximization_step,
    maximize_raw,
    random_effects_prior,
    recenter_log_rates,
    stats_to_loglik,
    survival_attachment,
    total_loglik,
)
from jointmodel.model_core import elapsed_latent, logistic_from_elapsed
from models.likelihood_models import DataCounts
from models.model_core_models import (
    PARAM_NAMES,
    Hyperparams,
    LatentState,
    PatientRecord,
    PopulationParams,
    Visit,
)


def random_instance(rng):
    """Small random cohort, latent state, parameters and hyperparameters with a finite likelihood."""
    n = int(rng.integers(1, 6))
    xi = rng.normal(0.0, 0.5, n)
    tau = rng.normal(4.0, 1.0, n)
    records = []
    for i in range(n):
        n_visits = int(rng.integers(1, 5))
        times = np.cumsum(rng.uniform(0.1, 0.5, n_visits)) + rng.uniform(2.0, 5.0)
        observed = bool(rng.random() < 0.5)
        event_time = times[-1] + rng.uniform(0.0, 1.0)
        if observed:
            # event strictly after psi = t0
            tau[i] = min(tau[i], event_time - 0.1)
        records.append(PatientRecord(
            id=f"P{i}",
            visits=[Visit(time=float(t), value=float(v)) for t, v in zip(times, rng.uniform(0.0, 1.0, n_visits))],
            event_time=float(event_time),
            event_observed=observed,
        ))
    z = LatentState(
        xi=xi, tau=tau,
        g_tilde=rng.normal(1.8, 0.3), v0_tilde=rng.normal(0.1, 0.3),
        nu_tilde=rng.normal(-1.2, 0.3), rho_tilde=rng.normal(0.8, 0.3),
    )
    params = PopulationParams(
        sigma_tau=rng.uniform(0.5, 1.5), sigma_xi=rng.uniform(0.3, 1.0), t0=rng.normal(4.0, 1.0),
        mean_g_tilde=rng.normal(1.8, 0.1), mean_v0_tilde=rng.normal(0.1, 0.1),
        mean_nu_tilde=rng.normal(-1.2, 0.1), mean_rho_tilde=rng.normal(0.8, 0.1),
        sigma=rng.uniform(0.05, 0.5),
    )
    hyper = Hyperparams(
        sigma_g_tilde=rng.uniform(0.05, 1.0), sigma_v0_tilde=rng.uniform(0.05, 1.0),
        sigma_nu_tilde=rng.uniform(0.05, 1.0), sigma_rho_tilde=rng.uniform(0.05, 1.0),
    )
    return records, z, params, hyper


def counts_of(records):
    return DataCounts(n_patients=len(records), n_visits=sum(len(r.visits) for r in records))


def test_stats_reproduce_total_loglik():
    rng = np.random.default_rng(0)
    for _ in range(200):
        records, z, params, hyper = random_instance(rng)
        direct = total_loglik(records, z, params, hyper).total
        via_stats = stats_to_loglik(compute_stats(records, z), params, hyper, counts_of(records))
        assert math.isfinite(direct)
        assert math.isclose(direct, via_stats, rel_tol=1e-10, abs_tol=1e-9)


def test_observed_event_before_t0_is_infeasible():
    records = [PatientRecord(id="A", visits=[Visit(time=1.0, value=0.2)], event_time=2.0, event_observed=True)]
    z = LatentState(xi=np.zeros(1), tau=np.array([3.0]), g_tilde=1.0, v0_tilde=0.0, nu_tilde=0.0, rho_tilde=0.5)
    assert survival_attachment(records, z) == -math.inf
    censored = [records[0].model_copy(update={"event_observed": False})]
    assert survival_attachment(censored, z) == 0.0


def test_invalid_sigma_raises():
    rng = np.random.default_rng(1)
    records, z, params, _ = random_instance(rng)
    bad = PopulationParams.model_construct(**{**params.model_dump(), "sigma": 0.0})
    with pytest.raises(ParameterError):
        longitudinal_attachment(records, z, bad)


def test_mismatched_counts_raise():
    rng = np.random.default_rng(2)
    records, z, params, hyper = random_instance(rng)
    stats = compute_stats(records, z)
    counts = counts_of(records)
    wrong = DataCounts(n_patients=counts.n_patients + 1, n_visits=counts.n_visits)
    with pytest.raises(ContractError):
        stats_to_loglik(stats, params, hyper, wrong)
    with pytest.raises(ContractError):
        maximize_raw(stats, wrong)


def test_blend_is_exact_at_zero_and_one():
    rng = np.random.default_rng(3)
    records, z, _, _ = random_instance(rng)
    old = compute_stats(records, z)
    z2 = z.copy()
    z2.xi = z.xi + 0.1
    new = compute_stats(records, z2)
    np.testing.assert_array_equal(old.blend(new, 1.0).s15, new.s15)
    np.testing.assert_array_equal(old.blend(new, 0.0).s15, old.s15)
    half = old.blend(new, 0.5)
    np.testing.assert_allclose(half.s16, 0.5 * (old.s16 + new.s16), rtol=1e-14)


def _snapshot(rng):
    """Averaged statistics of two latent states, as the stochastic approximation produces."""
    records, z, _, hyper = random_instance(rng)
    z2 = z.copy()
    z2.xi = z.xi + rng.normal(0.0, 0.2, z.xi.shape)
    z2.tau = z.tau + rng.normal(0.0, 0.2, z.tau.shape)
    z2.g_tilde += 0.1
    stats = compute_stats(records, z).blend(compute_stats(records, z2), 0.3)
    return records, stats, hyper


def test_maximization_is_stationary():
    rng = np.random.default_rng(4)
    checked = 0
    while checked < 50:
        records, stats, hyper = _snapshot(rng)
        counts = counts_of(records)
        raw = maximize_raw(stats, counts)
        if min(raw.sigma2, raw.sigma2_tau, raw.sigma2_xi) <= 1e-6:
            continue
        point = {
            "sigma_tau": math.sqrt(raw.sigma2_tau), "sigma_xi": math.sqrt(raw.sigma2_xi), "t0": raw.tau_mean,
            "mean_g_tilde": raw.mean_g_tilde, "mean_v0_tilde": raw.mean_v0_tilde,
            "mean_nu_tilde": raw.mean_nu_tilde, "mean_rho_tilde": raw.mean_rho_tilde,
            "sigma": math.sqrt(raw.sigma2), "xi_mean": raw.xi_mean,
        }

        def loglik(values):
            theta = PopulationParams(**{name: values[name] for name in PARAM_NAMES})
            return stats_to_loglik(stats, theta, hyper, counts, xi_mean=values["xi_mean"])

        for name in point:
            h = 1e-5 * max(abs(point[name]), 0.1)
            up, down = dict(point), dict(point)
            up[name] += h
            down[name] -= h
            gradient = (loglik(up) - loglik(down)) / (2.0 * h)
            assert abs(gradient) <= 1e-6, (name, gradient)
        checked += 1


def test_maximization_step_sets_t0_and_floors():
    rng = np.random.default_rng(5)
    records, z, _, _ = random_instance(rng)
    z.tau = np.full_like(z.tau, 3.25)
    z.xi = np.zeros_like(z.xi)
    stats = compute_stats(records, z)
    params = maximization_step(stats, counts_of(records), variance_floor=1e-9)
    assert params.t0 == pytest.approx(3.25)
    assert params.sigma_tau == pytest.approx(math.sqrt(1e-9))
    assert params.sigma_xi == pytest.approx(math.sqrt(1e-9))


def test_recentering_keeps_attachments_and_rewrites_stats():
    rng = np.random.default_rng(6)
    for _ in range(20):
        records, z, params, _ = random_instance(rng)
        stats = compute_stats(records, z)
        shift = float(np.mean(z.xi))
        moved_z, moved_stats = recenter_log_rates(z, stats, shift)

        assert abs(np.mean(moved_z.xi)) < 1e-12
        assert longitudinal_attachment(records, moved_z, params) == pytest.approx(
            longitudinal_attachment(records, z, params), rel=1e-10, abs=1e-10)
        assert survival_attachment(records, moved_z) == pytest.approx(
            survival_attachment(records, z), rel=1e-10, abs=1e-10)

        fresh = compute_stats(records, moved_z)
        for name in ("s7", "s8", "s9", "s10"):
            assert getattr(moved_stats, name) == pytest.approx(getattr(fresh, name), rel=1e-12, abs=1e-12)
        np.testing.assert_allclose(moved_stats.s15, fresh.s15, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(moved_stats.s16, fresh.s16, rtol=1e-12, atol=1e-12)


def _two_patients(values=(0.3, 0.6)):
    return [
        PatientRecord(id=f"P{i}", visits=[Visit(time=float(i) + 1.0, value=v)], event_time=float(i) + 1.0,
                      event_observed=False)
        for i, v in enumerate(values)
    ]


def _state(xi, tau, g_tilde=0.0, v0_tilde=0.0, nu_tilde=0.0, rho_tilde=0.0):
    return LatentState(xi=np.asarray(xi, dtype=float), tau=np.asarray(tau, dtype=float),
                       g_tilde=g_tilde, v0_tilde=v0_tilde, nu_tilde=nu_tilde, rho_tilde=rho_tilde)


def _unit_params(**overrides):
    values = {
        "sigma_tau": 1.0, "sigma_xi": 1.0, "t0": 5.0, "mean_g_tilde": 0.0, "mean_v0_tilde": 0.0,
        "mean_nu_tilde": 0.0, "mean_rho_tilde": 0.0, "sigma": 1.0,
    }
    return PopulationParams(**{**values, **overrides})


def test_longitudinal_attachment_of_exact_fit():
    g = 6.4
    records = [PatientRecord(id="A", visits=[Visit(time=5.0, value=1.0 / (1.0 + g))], event_time=5.0,
                             event_observed=False)]
    z = _state([0.0], [5.0], g_tilde=math.log(g))
    assert longitudinal_attachment(records, z, _unit_params()) == pytest.approx(-0.9189385332046727, rel=1e-12)
    assert longitudinal_attachment([], _state([], []), _unit_params()) == 0.0


def test_random_effects_prior_examples():
    params = _unit_params()
    assert random_effects_prior(_state([0.0], [5.0]), params) == pytest.approx(-1.8378770664093453, rel=1e-12)
    assert random_effects_prior(_state([], []), params) == 0.0


def test_fixed_effects_prior_examples():
    params = _unit_params(mean_g_tilde=1.8, mean_v0_tilde=0.1, mean_nu_tilde=-1.3, mean_rho_tilde=0.8)
    hyper = Hyperparams(sigma_g_tilde=1.0, sigma_v0_tilde=1.0, sigma_nu_tilde=1.0, sigma_rho_tilde=1.0)
    at_means = _state([0.0], [5.0], g_tilde=1.8, v0_tilde=0.1, nu_tilde=-1.3, rho_tilde=0.8)
    base = fixed_effects_prior(at_means, params, hyper)
    assert base == pytest.approx(-4.0 * math.log(math.sqrt(2.0 * math.pi)), rel=1e-12)
    for name in ("g_tilde", "v0_tilde", "nu_tilde", "rho_tilde"):
        shifted = at_means.with_fixed(name, getattr(at_means, name) + 1.0)
        assert fixed_effects_prior(shifted, params, hyper) == pytest.approx(base - 0.5, rel=1e-12)


def test_exponential_event_attachment():
    # xi = 0, nu = 1, rho = 1, psi - t0 = 0.5: log h = 0, log S = -0.5
    records = [PatientRecord(id="A", visits=[Visit(time=4.0, value=0.2)], event_time=4.5, event_observed=True)]
    z = _state([0.0], [4.0], nu_tilde=0.0, rho_tilde=0.0)
    assert survival_attachment(records, z) == pytest.approx(-0.5, rel=1e-14)


def test_all_censored_before_t0_attaches_nothing():
    records = _two_patients()
    z = _state([0.4, -0.2], [3.0, 4.0])
    assert survival_attachment(records, z) == 0.0


def test_sigma_update_grows_with_residuals():
    rng = np.random.default_rng(7)
    n = 6
    tau = rng.normal(5.0, 1.0, n)
    offsets = rng.uniform(-0.05, 0.05, (n, 3)) + np.array([0.0, 0.1, 0.2])
    z = _state(np.zeros(n), tau)
    residuals = rng.uniform(-0.03, 0.03, (n, 3))
    residuals[residuals == 0.0] = 0.01

    def sigma2_at(scale):
        records = []
        for i in range(n):
            times = tau[i] + offsets[i]
            fitted = logistic_from_elapsed(1.0, 1.0, elapsed_latent(0.0, tau[i], times))
            values = fitted + scale * residuals[i]
            records.append(PatientRecord(id=f"P{i}", visits=[Visit(time=float(t), value=float(v))
                                                             for t, v in zip(times, values)],
                                         event_time=float(times[-1]), event_observed=False))
        return maximize_raw(compute_stats(records, z), counts_of(records)).sigma2

    updates = [sigma2_at(s) for s in (0.5, 1.0, 1.5, 2.0, 3.0)]
    assert all(b > a for a, b in zip(updates, updates[1:]))
    assert updates[1] == pytest.approx(float(np.mean(residuals ** 2)), rel=1e-9)


def test_tau_update_example():
    records = _two_patients()
    z = _state([0.0, 0.0], [1.0, 3.0])
    stats = compute_stats(records, z)
    np.testing.assert_array_equal(stats.s14, [1.0, 3.0])
    np.testing.assert_array_equal(stats.s13, [1.0, 9.0])
    raw = maximize_raw(stats, counts_of(records))
    assert raw.tau_mean == pytest.approx(2.0)
    assert raw.sigma2_tau == pytest.approx(1.0)
    assert maximization_step(stats, counts_of(records)).t0 == pytest.approx(2.0)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
