"""Bayesian adaptive threshold engine.

Maintains a posterior over Weibull psychometric-function parameters
(threshold alpha in px, slope beta, lapse rate lambda) on a dense grid,
updates it after every 4AFC response, and places the next stimulus at the
disparity that minimizes the expected posterior entropy.

Model: P(correct | x) = gamma + (1 - gamma - lambda) * F(x; alpha, beta) with
F the Weibull CDF and gamma = 0.25 the 4AFC chance level, so performance runs
from chance at x = 0 to 1 - lambda for large disparities.

The per-trial stimulus scan uses the identity

    E[H](x) = H(posterior) - H(r|x) + H(r|x, cell)

(expected posterior entropy = current entropy minus the mutual information
between the response and the parameters), which turns the scan over all
candidates into two matrix-vector products against tables that depend only on
the grids — built once per configuration and reused across sessions.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import xlogy

from .geometry import DisplayProfile, arcsec_to_pixels, pixels_to_arcsec

GUESS_RATE_4AFC = 0.25
LAPSE_MAX = 0.04
O1_MIN_PX = 0.1
O1_MAX_PX = 10.0

NORMALIZATION_TOL = 1e-9


class PsiDomainError(ValueError):
    """Parameter outside the psychometric model's domain."""


class PsiStateError(RuntimeError):
    """Operation inconsistent with the staircase's progress."""


class PsiNumericalError(ArithmeticError):
    """Posterior mass lost to underflow or non-finite values."""


def _default_alpha_grid():
    return np.linspace(0.1, 10.0, 991)


def _default_beta_grid():
    return np.linspace(2.0, 14.0, 49)


def _default_lambda_grid():
    return np.linspace(0.0, 0.04, 5)


def _default_candidates():
    return np.linspace(0.1, 10.0, 100)


@dataclass(frozen=True, eq=False)
class PsiConfig:
    """Estimation grids and stimulus placement set.

    The estimation grid is always full resolution; ``candidate_x`` is the
    coarser set scanned for stimulus placement (it bounds per-trial latency).
    """

    alpha_grid: np.ndarray = field(default_factory=_default_alpha_grid)
    beta_grid: np.ndarray = field(default_factory=_default_beta_grid)
    lambda_grid: np.ndarray = field(default_factory=_default_lambda_grid)
    guess_rate: float = GUESS_RATE_4AFC
    candidate_x: np.ndarray = field(default_factory=_default_candidates)
    n_trials: int = 30

    def __post_init__(self):
        for name in ("alpha_grid", "beta_grid", "lambda_grid", "candidate_x"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            object.__setattr__(self, name, arr)
            if arr.size == 0:
                raise PsiDomainError(f"{name} must be non-empty")
            if arr.size > 1 and not np.all(np.diff(arr) > 0):
                raise PsiDomainError(f"{name} must be strictly increasing")
        if np.any(self.alpha_grid <= 0) or np.any(self.beta_grid <= 0):
            raise PsiDomainError("alpha and beta grids must be positive")
        if np.any(self.lambda_grid < 0) or np.any(self.lambda_grid > LAPSE_MAX):
            raise PsiDomainError(f"lambda grid must lie in [0, {LAPSE_MAX}]")
        if not 0 < self.guess_rate < 1:
            raise PsiDomainError("guess_rate must lie in (0, 1)")
        if self.candidate_x[0] < O1_MIN_PX or self.candidate_x[-1] > O1_MAX_PX:
            raise PsiDomainError(
                f"candidates must lie within [{O1_MIN_PX}, {O1_MAX_PX}] px"
            )
        if self.n_trials < 1:
            raise PsiDomainError("n_trials must be at least 1")

    @property
    def n_cells(self) -> int:
        return len(self.alpha_grid) * len(self.beta_grid) * len(self.lambda_grid)

    @property
    def grid_shape(self) -> tuple:
        # canonical cell order: lambda-major, then alpha, then beta
        return (len(self.lambda_grid), len(self.alpha_grid), len(self.beta_grid))

    def cache_key(self) -> tuple:
        return (
            self.alpha_grid.tobytes(),
            self.beta_grid.tobytes(),
            self.lambda_grid.tobytes(),
            float(self.guess_rate),
            self.candidate_x.tobytes(),
            int(self.n_trials),
        )


def weibull_cdf(x, alpha, beta):
    """Weibull CDF 1 - exp(-(x/alpha)^beta); scalars or broadcastable arrays."""
    x = np.asarray(x, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x < 0):
        raise PsiDomainError("stimulus intensity must be finite and >= 0")
    if np.any(alpha <= 0) or np.any(beta <= 0):
        raise PsiDomainError("alpha and beta must be positive")
    out = -np.expm1(-((x / alpha) ** beta))
    return float(out) if out.ndim == 0 else out


def psychometric(x, alpha, beta, lam, guess: float = GUESS_RATE_4AFC):
    """P(correct): guess + (1 - guess - lam) * F(x; alpha, beta).

    Chance performance ``guess`` at x = 0, rising to 1 - lam.
    """
    lam_arr = np.asarray(lam, dtype=float)
    if np.any(lam_arr < 0) or np.any(lam_arr > LAPSE_MAX):
        raise PsiDomainError(f"lapse rate must lie in [0, {LAPSE_MAX}]")
    if not 0 < guess < 1:
        raise PsiDomainError("guess rate must lie in (0, 1)")
    out = guess + (1.0 - guess - lam_arr) * weibull_cdf(x, alpha, beta)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class PsiState:
    """Immutable staircase state: posterior over the (lambda, alpha, beta)
    grid (flat, canonical order) plus the response history."""

    config: PsiConfig
    posterior: np.ndarray
    history: tuple = ()

    @property
    def trial_count(self) -> int:
        return len(self.history)

    @property
    def finished(self) -> bool:
        return self.trial_count >= self.config.n_trials


def new_state(config: PsiConfig | None = None) -> PsiState:
    """Fresh state with a uniform prior.

    Also warms the per-config entropy-scan tables so the one-time build cost
    lands here (session setup) instead of on the first trial's selection.
    """
    if config is None:
        config = PsiConfig()
    _scanner_for(config)
    posterior = np.full(config.n_cells, 1.0 / config.n_cells)
    return PsiState(config=config, posterior=posterior)


def _grid_psychometric(x: float, config: PsiConfig) -> np.ndarray:
    """P(correct | x) for every grid cell, flat in canonical order."""
    f = weibull_cdf(x, config.alpha_grid[:, None], config.beta_grid[None, :]).ravel()
    scale = 1.0 - config.guess_rate - config.lambda_grid
    return (config.guess_rate + scale[:, None] * f[None, :]).ravel()


def posterior_update(state: PsiState, x: float, r: int) -> PsiState:
    """Bayes update after observing response r (1 correct / 0 incorrect) at x.

    Evaluated in log space (log prior + log likelihood, max-shifted) so that
    extreme posteriors cannot underflow the normalization constant.
    """
    if r not in (0, 1):
        raise PsiDomainError(f"response must be 0 or 1, got {r!r}")
    x = float(x)
    if not state.config.candidate_x[0] <= x <= state.config.candidate_x[-1]:
        raise PsiDomainError(f"stimulus {x} outside the candidate range")
    psi_x = _grid_psychometric(x, state.config)
    like = psi_x if r else 1.0 - psi_x
    with np.errstate(divide="ignore"):
        log_post = np.log(state.posterior) + np.log(like)
    shift = np.max(log_post)
    if not np.isfinite(shift):
        raise PsiNumericalError("posterior vanished: no cell has positive mass")
    post = np.exp(log_post - shift)
    total = post.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise PsiNumericalError("posterior normalization failed")
    return replace(
        state,
        posterior=post / total,
        history=state.history + ((x, int(r)),),
    )


def posterior_entropy(state: PsiState) -> float:
    """Shannon entropy of the posterior in nats, with 0 ln 0 := 0."""
    return float(-xlogy(state.posterior, state.posterior).sum())


def expected_entropy(state: PsiState, x: float) -> float:
    """Expected posterior entropy after a trial at x: each outcome's updated
    posterior entropy weighted by that outcome's predictive probability."""
    psi_x = _grid_psychometric(float(x), state.config)
    u = state.posterior * psi_x
    v = state.posterior - u
    pc = u.sum()
    qc = 1.0 - pc
    return float(
        xlogy(pc, pc) - xlogy(u, u).sum() + xlogy(qc, qc) - xlogy(v, v).sum()
    )


class EntropyScanner:
    """Precomputed tables for scanning all candidates in one pass.

    For each candidate x and lapse value, the per-cell response entropy
    term psi ln psi + (1-psi) ln(1-psi) and the Weibull CDF are tabulated
    once; a scan is then one matrix-vector product for the conditional
    response entropy plus one for the predictive probability of a correct
    response.
    """

    def __init__(self, config: PsiConfig):
        self.config = config
        n_lam, n_a, n_b = config.grid_shape
        f = weibull_cdf(
            config.candidate_x[:, None, None],
            config.alpha_grid[None, :, None],
            config.beta_grid[None, None, :],
        ).reshape(len(config.candidate_x), n_a * n_b)
        self.f_tab = f
        blocks = []
        for lam in config.lambda_grid:
            psi = config.guess_rate + (1.0 - config.guess_rate - lam) * f
            blocks.append(xlogy(psi, psi) + xlogy(1.0 - psi, 1.0 - psi))
        self.response_entropy_tab = np.concatenate(blocks, axis=1)
        self.lapse_scale = 1.0 - config.guess_rate - config.lambda_grid

    def scan(self, state: PsiState) -> np.ndarray:
        """Expected entropy for every candidate."""
        cfg = self.config
        n_lam, n_a, n_b = cfg.grid_shape
        p = state.posterior
        # response_entropy_tab @ p = sum_cells p (psi ln psi + (1-psi) ln(1-psi)),
        # i.e. minus the response entropy conditioned on the parameters
        neg_cond_response_h = self.response_entropy_tab @ p
        weights = (self.lapse_scale[:, None] * p.reshape(n_lam, n_a * n_b)).sum(axis=0)
        pc = cfg.guess_rate + self.f_tab @ weights
        qc = 1.0 - pc
        h = posterior_entropy(state)
        return h - neg_cond_response_h + xlogy(pc, pc) + xlogy(qc, qc)


_SCANNER_CACHE: dict = {}


def _scanner_for(config: PsiConfig) -> EntropyScanner:
    key = config.cache_key()
    scanner = _SCANNER_CACHE.get(key)
    if scanner is None:
        scanner = _SCANNER_CACHE[key] = EntropyScanner(config)
    return scanner


def select_next_intensity(state: PsiState, config: PsiConfig | None = None) -> float:
    """Candidate disparity minimizing expected entropy (ties: smallest x)."""
    config = config or state.config
    if state.trial_count >= config.n_trials:
        raise PsiStateError("staircase already ran its full trial budget")
    expected = _scanner_for(config).scan(state)
    return float(config.candidate_x[int(np.argmin(expected))])


@dataclass(frozen=True)
class ThresholdResult:
    """Final stereoacuity numbers: the last-correct-disparity rule is the
    primary threshold; the posterior mean of alpha is reported alongside."""

    last_correct_o1_px: float
    last_correct_arcsec: float
    posterior_mean_alpha_px: float
    posterior_mean_alpha_arcsec: float
    ceiling_flag: bool

    def to_json(self) -> dict:
        return {
            "last_correct_o1_px": self.last_correct_o1_px,
            "last_correct_arcsec": self.last_correct_arcsec,
            "posterior_mean_alpha_px": self.posterior_mean_alpha_px,
            "posterior_mean_alpha_arcsec": self.posterior_mean_alpha_arcsec,
            "ceiling_flag": self.ceiling_flag,
        }


def ceiling_arcsec(profile: DisplayProfile) -> float:
    """Reported threshold when no trial is answered correctly: the largest
    presentable disparity, quoted at the conventional whole-arcsec value."""
    return float(round(pixels_to_arcsec(O1_MAX_PX, profile)))


def finalize_threshold(state: PsiState, profile: DisplayProfile) -> ThresholdResult:
    """Threshold after the full trial budget: disparity of the latest correct
    trial, or the ceiling value if every response was wrong."""
    if state.trial_count < state.config.n_trials:
        raise PsiStateError(
            f"staircase incomplete: {state.trial_count}/{state.config.n_trials} trials"
        )
    cfg = state.config
    n_lam, n_a, n_b = cfg.grid_shape
    alpha_marginal = state.posterior.reshape(n_lam, n_a, n_b).sum(axis=(0, 2))
    mean_alpha = float(np.dot(alpha_marginal, cfg.alpha_grid))

    correct_x = [x for x, r in state.history if r]
    if correct_x:
        px = float(correct_x[-1])
        arcsec = pixels_to_arcsec(px, profile)
        ceiling = False
    else:
        arcsec = ceiling_arcsec(profile)
        px = arcsec_to_pixels(arcsec, profile)
        ceiling = True
    return ThresholdResult(
        last_correct_o1_px=px,
        last_correct_arcsec=arcsec,
        posterior_mean_alpha_px=mean_alpha,
        posterior_mean_alpha_arcsec=pixels_to_arcsec(mean_alpha, profile),
        ceiling_flag=ceiling,
    )


# --- persistence -------------------------------------------------------------


def state_to_json(state: PsiState) -> dict:
    """Snapshot for persistence/replay; floats round-trip bit-exactly."""
    cfg = state.config
    return {
        "posterior": state.posterior.tolist(),
        "history": [[x, r] for x, r in state.history],
        "trial_count": state.trial_count,
        "config": {
            "alpha_grid": cfg.alpha_grid.tolist(),
            "beta_grid": cfg.beta_grid.tolist(),
            "lambda_grid": cfg.lambda_grid.tolist(),
            "guess_rate": cfg.guess_rate,
            "candidate_x": cfg.candidate_x.tolist(),
            "n_trials": cfg.n_trials,
        },
    }


def state_from_json(data: dict) -> PsiState:
    cfg_data = data["config"]
    config = PsiConfig(
        alpha_grid=np.array(cfg_data["alpha_grid"]),
        beta_grid=np.array(cfg_data["beta_grid"]),
        lambda_grid=np.array(cfg_data["lambda_grid"]),
        guess_rate=cfg_data["guess_rate"],
        candidate_x=np.array(cfg_data["candidate_x"]),
        n_trials=cfg_data["n_trials"],
    )
    posterior = np.asarray(data["posterior"], dtype=float)
    if posterior.shape != (config.n_cells,):
        raise PsiDomainError("posterior length does not match the grids")
    total = posterior.sum()
    if abs(total - 1.0) > NORMALIZATION_TOL or np.any(posterior < 0):
        raise PsiDomainError("snapshot posterior is not a normalized distribution")
    history = tuple((float(x), int(r)) for x, r in data["history"])
    if len(history) != int(data.get("trial_count", len(history))):
        raise PsiStateError("snapshot history length disagrees with trial_count")
    return PsiState(config=config, posterior=posterior, history=history)
