"""
MCMC-SAEM estimation of the joint model.

Each iteration samples the latent variables with the Metropolis-within-Gibbs
sampler, folds the new sufficient statistics into their stochastic
approximation, recenters the log-rates and maximizes theta in closed form.
The last `n_rm_iterations` draws are averaged into the final estimates.
"""
import itertools
import logging
import math
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from lifelines import WeibullFitter
from scipy import sparse
from scipy.optimize import least_squares

from jointmodel.errors import ContractError, InputError
from jointmodel.likelihood import (
    compute_stats,
    maximization_step,
    maximize_raw,
    recenter_log_rates,
    total_loglik,
)
from jointmodel.model_core import elapsed_latent, logistic_from_elapsed
from jointmodel.sampler import FIXED_BLOCKS, PATIENT_BLOCK, GibbsSampler
from models.likelihood_models import SufficientStats
from models.model_core_models import (
    PARAM_NAMES,
    CohortArrays,
    IndividualEffects,
    LatentFixedEffects,
    LatentState,
    PopulationParams,
    as_cohort,
)
from models.saem_models import FitResult, PosteriorWindow, SaemConfig
from utils.rng import make_rng

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 2
TRACE_COLUMNS = (
    ["iteration", *PARAM_NAMES, "loglik"]
    + [f"acc_{name}" for name in FIXED_BLOCKS]
    + [f"acc_{PATIENT_BLOCK}"]
)


# Initialization

# (g, v0) starting points of the pooled curve fit
_G_STARTS = (0.5, 2.0, 8.0, 32.0)
_V0_STARTS = (0.1, 0.5, 2.0)
_LOG_BOUNDS = (np.log([1e-3, 1e-3]), np.log([1e4, 1e2]))
# per-patient alignment grid: tau offsets (years) around the current tau, and xi values
_TAU_OFFSETS = np.linspace(-1.5, 1.5, 121)
_XI_GRID = np.linspace(-1.5, 1.5, 13)
_ALIGN_ROUNDS = 3


def _cohort_or_raise(records) -> CohortArrays:
    cohort = as_cohort(records)
    if cohort.n_patients == 0 or cohort.total_visits == 0:
        raise InputError("dataset must contain at least one patient with at least one visit")
    return cohort


def _first_visit_times(cohort: CohortArrays) -> np.ndarray:
    first = np.full(cohort.n_patients, np.inf)
    np.minimum.at(first, cohort.patient_index, cohort.times)
    return first


def _fit_pooled_logistic(elapsed: np.ndarray, values: np.ndarray,
                         start: tuple[float, float]) -> tuple[float, float]:
    """Least-squares (g, v0) of one logistic curve through every visit."""
    x0 = np.clip(np.log(start), _LOG_BOUNDS[0], _LOG_BOUNDS[1])

    def residuals(x):
        return values - logistic_from_elapsed(math.exp(x[0]), math.exp(x[1]), elapsed)

    fit = least_squares(residuals, x0, bounds=_LOG_BOUNDS, method="trf")
    if not fit.success:
        logger.warning(f"Pooled logistic fit did not converge: {fit.message}")
    return math.exp(fit.x[0]), math.exp(fit.x[1])


def _align_patients(cohort: CohortArrays, g: float, v0: float, tau: np.ndarray, t0: float,
                    sigma: float, sigma_tau: float, sigma_xi: float) -> tuple[np.ndarray, np.ndarray]:
    """
    Per-patient (xi, tau) minimizing the Gaussian residual and prior penalties
    over a grid around the current tau. Observed events stay past t0.
    """
    idx = cohort.patient_index
    n_visits = cohort.total_visits
    indicator = sparse.csr_matrix((np.ones(n_visits), (idx, np.arange(n_visits))),
                                  shape=(cohort.n_patients, n_visits))

    candidates = tau[:, None] + _TAU_OFFSETS[None, :]
    penalty = (candidates - t0) ** 2 / (2.0 * sigma_tau ** 2)
    infeasible = cohort.event_observed[:, None] & (candidates >= cohort.event_times[:, None])
    penalty = np.where(infeasible, np.inf, penalty)
    offsets = cohort.times[:, None] - candidates[idx]

    best_score = np.full(cohort.n_patients, np.inf)
    best_xi = np.zeros(cohort.n_patients)
    best_tau = tau.copy()
    rows = np.arange(cohort.n_patients)
    for xi in _XI_GRID:
        fitted = logistic_from_elapsed(g, v0, math.exp(xi) * offsets)
        sse = indicator @ (cohort.values[:, None] - fitted) ** 2
        score = sse / (2.0 * sigma ** 2) + penalty + xi ** 2 / (2.0 * sigma_xi ** 2)
        col = np.argmin(score, axis=1)
        better = score[rows, col] < best_score
        best_score[better] = score[rows, col][better]
        best_xi[better] = xi
        best_tau[better] = candidates[rows, col][better]
    return best_xi, best_tau


def _residual_std(cohort: CohortArrays, g: float, v0: float, xi: np.ndarray, tau: np.ndarray) -> float:
    idx = cohort.patient_index
    fitted = logistic_from_elapsed(g, v0, elapsed_latent(xi[idx], tau[idx], cohort.times))
    return max(float(np.std(cohort.values - fitted)), 1e-3)


def _moment_start(cohort: CohortArrays, config: SaemConfig, start: tuple[float, float]):
    """Curve and per-patient alignment from one (g, v0) start, tau anchored on the first visit."""
    idx = cohort.patient_index
    tau = _first_visit_times(cohort)
    xi = np.zeros(cohort.n_patients)
    sigma_xi = config.initial_sigma_xi
    g, v0 = _fit_pooled_logistic(cohort.times - tau[idx], cohort.values, start)

    for _ in range(_ALIGN_ROUNDS):
        sigma = _residual_std(cohort, g, v0, xi, tau)
        t0 = float(np.mean(tau))
        sigma_tau = max(float(np.std(tau)), 0.1)
        xi, tau = _align_patients(cohort, g, v0, tau, t0, sigma, sigma_tau, sigma_xi)
        g, v0 = _fit_pooled_logistic(elapsed_latent(xi[idx], tau[idx], cohort.times), cohort.values, (g, v0))

    # mean log-rate goes into v0, as in the SAEM recentering
    shift = float(np.mean(xi))
    xi = xi - shift
    v0 = v0 * math.exp(shift)
    return xi, tau, g, v0, _residual_std(cohort, g, v0, xi, tau), sigma_xi


def _assemble_start(cohort: CohortArrays, config: SaemConfig, xi: np.ndarray, tau: np.ndarray,
                    g_tilde: float, v0_tilde: float, sigma: float,
                    sigma_xi: float) -> tuple[LatentState, PopulationParams]:
    """Weibull start on the aligned event times, feasibility repair, then t0 := mean tau."""
    nu, rho = _fit_weibull(elapsed_latent(xi, tau, cohort.event_times), cohort.event_observed)
    z = LatentState(
        xi=xi, tau=tau,
        g_tilde=g_tilde, v0_tilde=v0_tilde,
        nu_tilde=-math.log(nu), rho_tilde=math.log(rho),
    )
    z, _ = repair_feasibility(cohort, z, config.feasibility_margin)
    params = PopulationParams(
        sigma_tau=max(float(np.std(z.tau)), 0.1),
        sigma_xi=sigma_xi,
        t0=float(np.mean(z.tau)),
        mean_g_tilde=z.g_tilde,
        mean_v0_tilde=z.v0_tilde,
        mean_nu_tilde=z.nu_tilde,
        mean_rho_tilde=z.rho_tilde,
        sigma=sigma,
    )
    return z, params


def _fit_weibull(durations: np.ndarray, observed: np.ndarray) -> tuple[float, float]:
    """Marginal Weibull (scale, shape) of latent event durations."""
    durations = np.maximum(durations, 1e-3)
    if not np.any(observed):
        logger.warning("No observed events; using a flat Weibull start (rho=1)")
        return float(2.0 * np.max(durations)), 1.0
    try:
        fitter = WeibullFitter().fit(durations, event_observed=observed)
        nu, rho = float(fitter.lambda_), float(fitter.rho_)
        if not (math.isfinite(nu) and math.isfinite(rho) and nu > 0 and rho > 0):
            raise ValueError(f"non-positive Weibull estimate nu={nu}, rho={rho}")
        return nu, rho
    except Exception as e:
        logger.error(f"Weibull initialization failed: {e}")
        return float(np.mean(durations)), 1.0


def repair_feasibility(cohort: CohortArrays, z: LatentState, margin: float) -> tuple[LatentState, int]:
    """Shift tau down so every observed event sits `margin` latent years past t0."""
    elapsed = elapsed_latent(z.xi, z.tau, cohort.event_times)
    infeasible = cohort.event_observed & (elapsed <= 0.0)
    n_repaired = int(np.count_nonzero(infeasible))
    if n_repaired:
        z = z.copy()
        z.tau = np.where(infeasible, cohort.event_times - margin * np.exp(-z.xi), z.tau)
        logger.info(f"Feasibility repair moved tau for {n_repaired} patient(s)")
    return z, n_repaired


def initialize(records, config: Optional[SaemConfig] = None, init: Optional[FitResult] = None,
               include_survival: bool = True) -> tuple[LatentState, PopulationParams]:
    """
    Starting latent state and theta.

    Without `init` every patient's tau starts on their first visit. A pooled
    logistic curve is fitted from several (g, v0) starts; each one is refined
    by aligning (xi, tau) per patient and refitting the curve, and a marginal
    Weibull fit on the aligned event times gives (nu, rho). The start with the
    highest complete log-likelihood is kept. With `init` (a longitudinal-only
    fit) its effects and longitudinal parameters are reused. In both cases
    observed events are made feasible and t0 is the mean of the starting tau.
    """
    config = config or SaemConfig()
    cohort = _cohort_or_raise(records)

    if init is not None:
        missing = [pid for pid in cohort.patient_ids if pid not in init.individual_effects]
        if missing:
            raise InputError(f"initial fit has no effects for {len(missing)} patient(s), e.g. {missing[0]}")
        xi = np.array([init.individual_effects[pid].xi for pid in cohort.patient_ids])
        tau = np.array([init.individual_effects[pid].tau for pid in cohort.patient_ids])
        z, params = _assemble_start(cohort, config, xi, tau, init.latent_fixed.g_tilde,
                                    init.latent_fixed.v0_tilde, init.params.sigma, init.params.sigma_xi)
        source = "longitudinal fit"
    else:
        best, seen = None, set()
        for start in itertools.product(_G_STARTS, _V0_STARTS):
            xi, tau, g, v0, sigma, sigma_xi = _moment_start(cohort, config, start)
            key = (round(math.log(g), 2), round(math.log(v0), 2))
            if key in seen:
                continue
            seen.add(key)
            z, params = _assemble_start(cohort, config, xi, tau, math.log(g), math.log(v0), sigma, sigma_xi)
            score = total_loglik(cohort, z, params, config.hyperparams, include_survival).total
            logger.debug(f"Start g={start[0]}, v0={start[1]} -> g={g:.3f}, v0={v0:.3f}, loglik={score:.3f}")
            if best is None or score > best[0]:
                best = (score, z, params)
        _, z, params = best
        source = f"data moments ({len(seen)} distinct start(s))"

    logger.info(
        f"Initialized from {source}: t0={params.t0:.3f}, g={z.g:.3f}, v0={z.v0:.3f}, "
        f"nu={z.nu:.3f}, rho={z.rho:.3f}, sigma={params.sigma:.4f}"
    )
    return z, params


# Averaging

def _window_means(window: PosteriorWindow):
    if window.size == 0:
        raise ContractError("posterior window is empty")
    theta, xi, tau, fixed = window.means()

    # move the averaged mean log-rate into v0~ and nu~ once more
    shift = float(np.mean(xi)) if xi.size else 0.0
    xi = xi - shift
    theta = theta.copy()
    theta[PARAM_NAMES.index("mean_v0_tilde")] += shift
    theta[PARAM_NAMES.index("mean_nu_tilde")] += shift
    fixed = fixed.copy()
    fixed[FIXED_BLOCKS.index("v0_tilde")] += shift
    fixed[FIXED_BLOCKS.index("nu_tilde")] += shift
    return theta, xi, tau, fixed


def posterior_means(window: PosteriorWindow,
                    patient_ids: Sequence[str]) -> tuple[PopulationParams, dict[str, IndividualEffects]]:
    """Arithmetic means over the window, recentered once so the mean log-rate is 0."""
    theta, xi, tau, _ = _window_means(window)
    if len(patient_ids) != xi.shape[0]:
        raise ContractError(f"{len(patient_ids)} patient ids for a window over {xi.shape[0]} patients")
    params = PopulationParams.from_array(theta)
    effects = {
        pid: IndividualEffects(xi=float(x), tau=float(t))
        for pid, x, t in zip(patient_ids, xi, tau)
    }
    return params, effects


def posterior_latent_fixed(window: PosteriorWindow) -> LatentFixedEffects:
    _, _, _, fixed = _window_means(window)
    return LatentFixedEffects(**dict(zip(FIXED_BLOCKS, (float(v) for v in fixed))))


# Estimator

class SaemEstimator:
    """Single-chain MCMC-SAEM run; resumable through state_dict()/load_state_dict()."""

    def __init__(self, records, config: SaemConfig, include_survival: bool = True,
                 init: Optional[FitResult] = None):
        self.cohort = _cohort_or_raise(records)
        self.config = config
        self.include_survival = include_survival
        self.counts = None
        self.rng = make_rng(config.seed)

        self.z, self.params = initialize(self.cohort, config, init, include_survival=include_survival)
        self.sampler = GibbsSampler(
            self.cohort,
            config.proposal_stds,
            config.hyperparams,
            self.rng,
            include_survival=include_survival,
            target_acceptance=config.target_acceptance,
            stall_threshold=config.stall_threshold,
        )
        self.stats: Optional[SufficientStats] = None
        self.iteration = 0
        self.window = PosteriorWindow.empty(self.cohort.n_patients)
        self.trace_rows: list[list[float]] = []

        logger.info(
            f"SAEM ready: N={self.cohort.n_patients}, visits={self.cohort.total_visits}, "
            f"iterations={config.n_iterations} (burn-in {config.n_burn_in}, averaging {config.n_rm_iterations}), "
            f"survival={'on' if include_survival else 'off'}"
        )

    @property
    def done(self) -> bool:
        return self.iteration >= self.config.n_iterations

    def step_size(self, k: int) -> float:
        """1 during burn-in, then (k - burn_in + 1)^-step_exponent."""
        burn = self.config.n_burn_in
        if k < burn:
            return 1.0
        return float((k - burn + 1) ** (-self.config.step_exponent))

    def _log_every(self) -> int:
        return self.config.log_every or max(1, self.config.n_iterations // 10)

    def step(self):
        """One SAEM iteration."""
        cfg = self.config
        k = self.iteration

        if k == cfg.n_burn_in and k > 0:
            logger.info(f"Burn-in finished after {k} iterations; decreasing steps from here")
        if k == cfg.n_pre_rm:
            logger.info(f"Averaging window started at iteration {k + 1}")

        z, accepted = self.sampler.sweep(self.z, self.params)

        new_stats = compute_stats(self.cohort, z, include_survival=self.include_survival)
        if self.stats is None:
            stats = new_stats
            self.counts = new_stats.counts()
        else:
            stats = self.stats.blend(new_stats, self.step_size(k))

        raw = maximize_raw(stats, self.counts)
        z, stats = recenter_log_rates(z, stats, raw.xi_mean)
        params = maximization_step(stats, self.counts, cfg.variance_floor)

        self.z, self.stats, self.params = z, stats, params

        loglik = total_loglik(self.cohort, z, params, cfg.hyperparams, self.include_survival).total
        self.trace_rows.append(
            [float(k + 1), *params.as_array().tolist(), loglik]
            + [accepted.get(name, math.nan) for name in FIXED_BLOCKS]
            + [accepted[PATIENT_BLOCK]]
        )

        if k >= cfg.n_pre_rm:
            self.window.add(params.as_array(), z.xi, z.tau, z.fixed_array())

        if (k + 1) % cfg.adaptation_window == 0:
            self.sampler.end_window(adapt=k < cfg.n_burn_in)

        if (k + 1) % self._log_every() == 0:
            logger.info(
                f"Iteration {k + 1}/{cfg.n_iterations}: loglik={loglik:.3f}, t0={params.t0:.3f}, "
                f"sigma={params.sigma:.4f}, sigma_tau={params.sigma_tau:.3f}, sigma_xi={params.sigma_xi:.3f}"
            )
        self.iteration = k + 1

    def run(self, until: Optional[int] = None) -> "SaemEstimator":
        """Iterate up to `until` (default: the end of the schedule)."""
        stop = self.config.n_iterations if until is None else min(until, self.config.n_iterations)
        while self.iteration < stop:
            self.step()
        return self

    def trace(self) -> pd.DataFrame:
        trace = pd.DataFrame(self.trace_rows, columns=TRACE_COLUMNS)
        trace["iteration"] = trace["iteration"].astype(int)
        return trace

    def result(self) -> FitResult:
        if not self.done:
            raise ContractError(f"run stopped at iteration {self.iteration} of {self.config.n_iterations}")
        params, effects = posterior_means(self.window, self.cohort.patient_ids)
        diagnostics = {f"acceptance_{name}": rate for name, rate in self.sampler.acceptance_rates().items()}
        diagnostics["stalled_blocks"] = float(len(self.sampler.stalled_blocks))
        return FitResult(
            params=params,
            individual_effects=effects,
            latent_fixed=posterior_latent_fixed(self.window),
            trace=self.trace(),
            diagnostics=diagnostics,
            hyperparams=self.config.hyperparams,
            final_state=self.z.copy(),
            include_survival=self.include_survival,
        )

    # Checkpointing

    def state_dict(self) -> dict:
        """Everything needed to continue the run bitwise; JSON-serializable."""
        return {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "config": self.config.model_dump(mode="json"),
            "include_survival": self.include_survival,
            "patient_ids": list(self.cohort.patient_ids),
            "iteration": self.iteration,
            "rng": self.rng.bit_generator.state,
            "latent_state": {
                "xi": self.z.xi.tolist(),
                "tau": self.z.tau.tolist(),
                **{name: getattr(self.z, name) for name in FIXED_BLOCKS},
            },
            "params": self.params.model_dump(),
            "stats": self.stats.to_dict() if self.stats is not None else None,
            "sampler": self.sampler.state_dict(),
            "window": self.window.to_dict(),
            "trace": self.trace_rows,
        }

    def load_state_dict(self, state: dict):
        if state.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise ContractError(f"unsupported checkpoint format {state.get('format_version')!r}")
        if list(state["patient_ids"]) != list(self.cohort.patient_ids):
            raise ContractError("checkpoint was written for a different cohort")
        if bool(state["include_survival"]) != self.include_survival:
            raise ContractError("checkpoint survival setting does not match this estimator")

        self.iteration = int(state["iteration"])
        self.rng.bit_generator.state = state["rng"]
        latent = state["latent_state"]
        self.z = LatentState(
            xi=np.array(latent["xi"], dtype=float),
            tau=np.array(latent["tau"], dtype=float),
            **{name: float(latent[name]) for name in FIXED_BLOCKS},
        )
        self.params = PopulationParams(**state["params"])
        if state["stats"] is not None:
            self.stats = SufficientStats.from_dict(state["stats"])
            self.counts = self.stats.counts()
        self.sampler.load_state_dict(state["sampler"])

        self.window = PosteriorWindow.from_dict(state["window"])
        self.trace_rows = [list(map(float, row)) for row in state["trace"]]


def fit_longitudinal(records, config: SaemConfig) -> FitResult:
    """Longitudinal-only SAEM (survival attachment off), used to seed the joint fit."""
    n_iterations = config.prefit_iterations
    prefit_config = SaemConfig(**{
        **config.model_dump(),
        "n_iterations": n_iterations,
        "n_rm_iterations": max(1, n_iterations // 5),
        "init": "moment",
    })
    logger.info(f"Longitudinal pre-fit for {n_iterations} iterations")
    return SaemEstimator(records, prefit_config, include_survival=False).run().result()


def run_saem(records, config: SaemConfig, init: Optional[FitResult] = None) -> FitResult:
    """Joint fit; with config.init == 'longitudinal' a pre-fit seeds it unless `init` is given."""
    if init is None and config.init == "longitudinal":
        init = fit_longitudinal(records, config)
    return SaemEstimator(records, config, include_survival=True, init=init).run().result()
