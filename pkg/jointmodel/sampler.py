"""
Metropolis-within-Gibbs sampler for the latent variables.

Blocks: one Gaussian random walk per latent fixed effect (g~, v0~, nu~, rho~)
and one 2-vector (xi_i, tau_i) block per patient. Patients are conditionally
independent given the fixed effects, so all patient blocks are proposed and
accepted together, each with its own accept/reject draw.
"""
import logging
import math

import numpy as np

from jointmodel.likelihood import (
    patient_longitudinal_terms,
    patient_random_effects_terms,
    patient_survival_terms,
)
from models.model_core_models import CohortArrays, Hyperparams, LatentState, PopulationParams
from models.saem_models import ProposalStds
from utils.numerics import gaussian_logpdf

logger = logging.getLogger(__name__)

FIXED_BLOCKS = ("g_tilde", "v0_tilde", "nu_tilde", "rho_tilde")
SURVIVAL_BLOCKS = ("nu_tilde", "rho_tilde")
PATIENT_BLOCK = "patients"


def _accept(log_ratio, log_u):
    """MH test; NaN (e.g. -inf minus -inf) rejects."""
    with np.errstate(invalid="ignore"):
        return np.asarray(log_u < log_ratio)


class GibbsSampler:
    """One sweep updates every block once."""

    def __init__(
        self,
        cohort: CohortArrays,
        proposal_stds: ProposalStds,
        hyperparams: Hyperparams,
        rng: np.random.Generator,
        include_survival: bool = True,
        target_acceptance: float = 0.3,
        stall_threshold: float = 0.01,
    ):
        self.cohort = cohort
        self.hyper = hyperparams
        self.rng = rng
        self.include_survival = include_survival
        self.target_acceptance = target_acceptance
        self.stall_threshold = stall_threshold

        self.fixed_scales = {name: getattr(proposal_stds, name) for name in FIXED_BLOCKS}
        self.xi_scale = proposal_stds.xi
        self.tau_scale = proposal_stds.tau
        self.patient_scales = np.ones(cohort.n_patients)

        self.window_accepted = {name: 0 for name in FIXED_BLOCKS}
        self.window_proposed = {name: 0 for name in FIXED_BLOCKS}
        self.window_patient_accepted = np.zeros(cohort.n_patients)
        self.window_patient_proposed = 0
        self.total_accepted = {name: 0 for name in FIXED_BLOCKS + (PATIENT_BLOCK,)}
        self.total_proposed = {name: 0 for name in FIXED_BLOCKS + (PATIENT_BLOCK,)}
        self.n_adaptations = 0
        self.stalled_blocks: list[str] = []

    @property
    def active_blocks(self) -> tuple[str, ...]:
        if self.include_survival:
            return FIXED_BLOCKS
        return tuple(b for b in FIXED_BLOCKS if b not in SURVIVAL_BLOCKS)

    def _survival_terms(self, z: LatentState) -> np.ndarray:
        if not self.include_survival:
            return np.zeros(self.cohort.n_patients)
        return patient_survival_terms(self.cohort, z)

    def sweep(self, z: LatentState, params: PopulationParams) -> tuple[LatentState, dict[str, float]]:
        """Run every block once; returns the new state and this sweep's acceptance per block."""
        long_terms = patient_longitudinal_terms(self.cohort, z, params.sigma)
        surv_terms = self._survival_terms(z)
        means = dict(zip(FIXED_BLOCKS, params.latent_means().as_array()))
        hyper = dict(zip(FIXED_BLOCKS, self.hyper.as_array()))
        accepted = {}

        for name in self.active_blocks:
            current = getattr(z, name)
            proposed_value = current + self.fixed_scales[name] * self.rng.standard_normal()
            log_u = math.log(self.rng.uniform())
            proposal = z.with_fixed(name, proposed_value)

            if name in SURVIVAL_BLOCKS:
                new_terms = self._survival_terms(proposal)
                log_ratio = float(np.sum(new_terms)) - float(np.sum(surv_terms))
            else:
                new_terms = patient_longitudinal_terms(self.cohort, proposal, params.sigma)
                log_ratio = float(np.sum(new_terms)) - float(np.sum(long_terms))
            log_ratio += (gaussian_logpdf(proposed_value, means[name], hyper[name])
                          - gaussian_logpdf(current, means[name], hyper[name]))

            ok = bool(_accept(log_ratio, log_u))
            if ok:
                z = proposal
                if name in SURVIVAL_BLOCKS:
                    surv_terms = new_terms
                else:
                    long_terms = new_terms
            accepted[name] = float(ok)
            self.window_accepted[name] += int(ok)
            self.window_proposed[name] += 1
            self.total_accepted[name] += int(ok)
            self.total_proposed[name] += 1

        n = self.cohort.n_patients
        step_xi = self.patient_scales * self.xi_scale * self.rng.standard_normal(n)
        step_tau = self.patient_scales * self.tau_scale * self.rng.standard_normal(n)
        log_u = np.log(self.rng.uniform(size=n))

        proposal = z.copy()
        proposal.xi = z.xi + step_xi
        proposal.tau = z.tau + step_tau
        old_target = long_terms + surv_terms + patient_random_effects_terms(z, params)
        new_target = (patient_longitudinal_terms(self.cohort, proposal, params.sigma)
                      + self._survival_terms(proposal)
                      + patient_random_effects_terms(proposal, params))
        mask = _accept(new_target - old_target, log_u)

        z = z.copy()
        z.xi = np.where(mask, proposal.xi, z.xi)
        z.tau = np.where(mask, proposal.tau, z.tau)

        n_accepted = int(np.count_nonzero(mask))
        accepted[PATIENT_BLOCK] = n_accepted / n if n else 0.0
        self.window_patient_accepted += mask
        self.window_patient_proposed += 1
        self.total_accepted[PATIENT_BLOCK] += n_accepted
        self.total_proposed[PATIENT_BLOCK] += n
        return z, accepted

    def end_window(self, adapt: bool):
        """Close an adaptation window: flag stalls and, when allowed, adapt the proposal scales."""
        gain = 1.0 / math.sqrt(1.0 + self.n_adaptations)
        for name in self.active_blocks:
            if self.window_proposed[name] == 0:
                continue
            rate = self.window_accepted[name] / self.window_proposed[name]
            self._check_stall(name, rate)
            if adapt:
                self.fixed_scales[name] *= math.exp(gain * (rate - self.target_acceptance))

        if self.window_patient_proposed:
            rates = self.window_patient_accepted / self.window_patient_proposed
            self._check_stall(PATIENT_BLOCK, float(np.mean(rates)) if rates.size else 1.0)
            if adapt:
                self.patient_scales = self.patient_scales * np.exp(gain * (rates - self.target_acceptance))

        if adapt:
            self.n_adaptations += 1
        self.window_accepted = {name: 0 for name in FIXED_BLOCKS}
        self.window_proposed = {name: 0 for name in FIXED_BLOCKS}
        self.window_patient_accepted = np.zeros(self.cohort.n_patients)
        self.window_patient_proposed = 0

    def _check_stall(self, name: str, rate: float):
        if rate < self.stall_threshold:
            if name not in self.stalled_blocks:
                self.stalled_blocks.append(name)
            logger.warning(f"Sampler block '{name}' accepted {rate:.2%} of proposals over the last window")

    def acceptance_rates(self) -> dict[str, float]:
        rates = {}
        for name in self.active_blocks + (PATIENT_BLOCK,):
            proposed = self.total_proposed[name]
            rates[name] = self.total_accepted[name] / proposed if proposed else 0.0
        return rates

    def state_dict(self) -> dict:
        return {
            "fixed_scales": dict(self.fixed_scales),
            "patient_scales": self.patient_scales.tolist(),
            "window_accepted": dict(self.window_accepted),
            "window_proposed": dict(self.window_proposed),
            "window_patient_accepted": self.window_patient_accepted.tolist(),
            "window_patient_proposed": self.window_patient_proposed,
            "total_accepted": dict(self.total_accepted),
            "total_proposed": dict(self.total_proposed),
            "n_adaptations": self.n_adaptations,
            "stalled_blocks": list(self.stalled_blocks),
        }

    def load_state_dict(self, state: dict):
        self.fixed_scales = {k: float(v) for k, v in state["fixed_scales"].items()}
        self.patient_scales = np.array(state["patient_scales"], dtype=float)
        self.window_accepted = {k: int(v) for k, v in state["window_accepted"].items()}
        self.window_proposed = {k: int(v) for k, v in state["window_proposed"].items()}
        self.window_patient_accepted = np.array(state["window_patient_accepted"], dtype=float)
        self.window_patient_proposed = int(state["window_patient_proposed"])
        self.total_accepted = {k: int(v) for k, v in state["total_accepted"].items()}
        self.total_proposed = {k: int(v) for k, v in state["total_proposed"].items()}
        self.n_adaptations = int(state["n_adaptations"])
        self.stalled_blocks = list(state["stalled_blocks"])
