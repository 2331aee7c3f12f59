"""Synthetic participants for end-to-end verification.

Two response models share one seeded RNG stream per observer:

* a 4AFC stereo responder whose correctness is Bernoulli with probability
  given by the Weibull psychometric function at the observer's true
  (alpha, beta, lambda);
* a luminance matcher for the gamma calibration that computes the ideal
  bisection match under its true display gamma, optionally perturbs it with
  bounded uniform noise, and lands on the nearest value reachable through
  coarse/fine keypresses (a key planner emits the actual key sequence so the
  full service path can be exercised).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import gamma_cal, psi
from .gamma_cal import COARSE_STEP, FINE_STEP, GammaSession
from .geometry import DisplayProfile

# Keys per coarse step; coarse/fine = (3/255)/(0.3/255), so every reachable
# intensity is i_init + k * FINE_STEP for integer k.
_FINE_PER_COARSE = 10


class ObserverConfigError(ValueError):
    """Observer parameters outside the model grids' support."""


@dataclass(frozen=True)
class ObserverModel:
    true_alpha_px: float = 2.0
    true_beta: float = 3.5
    true_lambda: float = 0.02
    seed: int = 0
    agc_gamma_true: float = 2.2
    agc_noise_amplitude: float = 0.0

    def __post_init__(self):
        if not psi.O1_MIN_PX <= self.true_alpha_px <= psi.O1_MAX_PX:
            raise ObserverConfigError(f"true_alpha_px {self.true_alpha_px} outside [0.1, 10] px")
        if not 2.0 <= self.true_beta <= 14.0:
            raise ObserverConfigError(f"true_beta {self.true_beta} outside the slope grid [2, 14]")
        if not 0.0 <= self.true_lambda <= psi.LAPSE_MAX:
            raise ObserverConfigError(f"true_lambda {self.true_lambda} outside [0, {psi.LAPSE_MAX}]")
        search = gamma_cal.GammaSearchConfig()
        if not search.gamma_min <= self.agc_gamma_true <= search.gamma_max:
            raise ObserverConfigError(
                f"agc_gamma_true {self.agc_gamma_true} outside the fit bracket "
                f"[{search.gamma_min}, {search.gamma_max}]"
            )
        if self.agc_noise_amplitude < 0:
            raise ObserverConfigError("agc_noise_amplitude must be >= 0")


class Observer:
    """Stateful responder; draws are deterministic given (model.seed, order)."""

    def __init__(self, model: ObserverModel):
        self.model = model
        self.rng = np.random.default_rng(model.seed)

    # -- stereo task ----------------------------------------------------------

    def probability_correct(self, x_px: float) -> float:
        return psi.psychometric(
            x_px, self.model.true_alpha_px, self.model.true_beta, self.model.true_lambda
        )

    def respond_st(self, x_px: float) -> int:
        """1 (correct) / 0 (incorrect) at disparity x."""
        if not psi.O1_MIN_PX <= x_px <= psi.O1_MAX_PX:
            raise ObserverConfigError(f"stimulus {x_px} outside [0.1, 10] px")
        return int(self.rng.random() < self.probability_correct(x_px))

    def choose_shape(self, true_shape: str, shapes, x_px: float) -> str:
        """4AFC pick: the true shape when the trial is 'correct', otherwise a
        uniform draw among the other three (keeps service-path simulations on
        the same Bernoulli model as respond_st)."""
        if self.respond_st(x_px):
            return true_shape
        others = [s for s in shapes if s != true_shape]
        return others[int(self.rng.integers(len(others)))]

    # -- gamma calibration ----------------------------------------------------

    def ideal_agc_match(self, i_high: float, i_low: float) -> float:
        g = self.model.agc_gamma_true
        return ((i_high**g + i_low**g) / 2.0) ** (1.0 / g)

    def respond_agc(self, i_high: float, i_low: float) -> float:
        """Matched gray: ideal bisection point plus noise, quantized to the
        coarse/fine lattice reachable from i_init and clamped to [0, 1]."""
        # The match point is symmetric in the pair, so only range matters
        # (one default calibration trial presents the pair swapped).
        if not (0.0 <= i_low <= 1.0 and 0.0 <= i_high <= 1.0):
            raise ObserverConfigError(f"invalid trial intensities ({i_high}, {i_low})")
        i_init = (i_high + i_low) / 2.0
        target = self.ideal_agc_match(i_high, i_low)
        if self.model.agc_noise_amplitude:
            target += self.rng.uniform(
                -self.model.agc_noise_amplitude, self.model.agc_noise_amplitude
            )
        k = round((target - i_init) / FINE_STEP)
        return float(np.clip(i_init + k * FINE_STEP, 0.0, 1.0))

    def plan_agc_keys(self, i_high: float, i_low: float) -> list:
        """Key events reproducing respond_agc's match from i_init: coarse
        steps first, then fine, so intermediate values never overshoot."""
        i_init = (i_high + i_low) / 2.0
        i_new = self.respond_agc(i_high, i_low)
        k = round((i_new - i_init) / FINE_STEP)
        coarse = int(k / _FINE_PER_COARSE)
        fine = k - coarse * _FINE_PER_COARSE
        keys = [("coarse_up" if coarse > 0 else "coarse_down")] * abs(coarse)
        keys += [("fine_up" if fine > 0 else "fine_down")] * abs(fine)
        return keys


def run_agc_session(observer: Observer) -> tuple:
    """Drive a full 15-trial calibration through the key/commit transitions.

    Returns (fit-ready GammaSession, event log) where the log holds one
    {trial, event, value, timestamp} record per keypress and per commit.
    """
    session = gamma_cal.new_gamma_session()
    events = []
    for trial in range(1, session.n_trials + 1):
        i_high, i_low, _ = gamma_cal.trial_intensities(session, trial)
        for key in observer.plan_agc_keys(i_high, i_low):
            session = gamma_cal.apply_adjustment(session, key)
            events.append(
                {"trial": trial, "event": key, "value": session.i_current, "timestamp": len(events)}
            )
        committed = session.i_current
        session = gamma_cal.commit_trial(session)
        events.append(
            {"trial": trial, "event": "commit", "value": committed, "timestamp": len(events)}
        )
    return session, events


def run_st_session(
    observer: Observer,
    config: psi.PsiConfig | None = None,
) -> psi.PsiState:
    """Drive a full staircase (selection -> response -> update) to completion."""
    state = psi.new_state(config)
    while not state.finished:
        x = psi.select_next_intensity(state)
        state = psi.posterior_update(state, x, observer.respond_st(x))
    return state


@dataclass(frozen=True)
class SimulatedSession:
    """One row of the batch-simulation output."""

    seed: int
    alpha_true: float
    beta_true: float
    lambda_true: float
    threshold_px: float
    threshold_arcsec: float
    posterior_mean_alpha: float
    gamma_true: float
    gamma_fitted: float
    ceiling_flag: bool


def simulate_session(
    model: ObserverModel,
    profile: DisplayProfile,
    psi_config: psi.PsiConfig | None = None,
    two_step: bool = True,
) -> SimulatedSession:
    """One simulated participant: optional AGC pass, then the staircase."""
    observer = Observer(model)
    gamma_fitted = float("nan")
    if two_step:
        agc_session, _ = run_agc_session(observer)
        gamma_fitted = gamma_cal.fit_gamma(agc_session)
    state = run_st_session(observer, psi_config)
    result = psi.finalize_threshold(state, profile)
    return SimulatedSession(
        seed=model.seed,
        alpha_true=model.true_alpha_px,
        beta_true=model.true_beta,
        lambda_true=model.true_lambda,
        threshold_px=result.last_correct_o1_px,
        threshold_arcsec=result.last_correct_arcsec,
        posterior_mean_alpha=result.posterior_mean_alpha_px,
        gamma_true=model.agc_gamma_true,
        gamma_fitted=gamma_fitted,
        ceiling_flag=result.ceiling_flag,
    )


def reduced_psi_config(n_trials: int = 30) -> psi.PsiConfig:
    """Coarser grids for large simulation batteries: same parameter ranges,
    ~30x fewer cells, so thousands of sessions stay tractable."""
    return psi.PsiConfig(
        alpha_grid=np.round(np.linspace(0.1, 10.0, 199), 10),
        beta_grid=np.linspace(2.0, 14.0, 13),
        lambda_grid=np.array([0.0, 0.02, 0.04]),
        candidate_x=np.linspace(0.1, 10.0, 50),
        n_trials=n_trials,
    )
