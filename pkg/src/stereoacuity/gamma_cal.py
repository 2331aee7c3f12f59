"""Adaptive gamma calibration (AGC).

A 15-trial bisection-matching procedure: on each trial the participant adjusts
a uniform gray patch until it is perceived as bright as an adjacent texture of
alternating high/low intensity lines. The committed matches determine the
display's effective gamma under the current ambient lighting.

The calibration stimulus values come from a preset luminance lookup table:
``lum[k] = k/(n-1)`` with gray levels ``gray[k] = lum[k]**(1/gamma0)``. The
fitted gamma is the least-squares solution of the bisection match condition

    i_new**g = (i_high**g + i_low**g) / 2    for each trial,

i.e. the displayed luminance of the matched gray equals the spatial mean
luminance of the alternating lines.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, replace

import numpy as np

COARSE_STEP = 3.0 / 255.0
FINE_STEP = 0.3 / 255.0
N_TRIALS = 15

# Per-trial indices (1-based) into the 17-entry gray table.
DEFAULT_HIGH_INDEX = (17, 17, 9, 17, 13, 9, 5, 17, 15, 13, 11, 9, 7, 5, 3)
DEFAULT_LOW_INDEX = (1, 9, 1, 13, 9, 5, 17, 15, 13, 11, 9, 7, 5, 3, 1)

ADJUSTMENT_STEPS = {
    "coarse_up": COARSE_STEP,
    "coarse_down": -COARSE_STEP,
    "fine_up": FINE_STEP,
    "fine_down": -FINE_STEP,
}

# Rendering parameters for the calibration scene, forwarded to clients; they
# do not enter the fit.
MIXED_TEXTURE_LINES = 128
MIXED_TEXTURE_LINE_WIDTH_PX = 1
MIDDLE_TEXTURE_EXTENT_DEG = 5.72


class GammaConfigError(ValueError):
    """Invalid calibration configuration."""


class GammaStateError(RuntimeError):
    """Operation not permitted in the session's current state."""


class GammaFitWarning(UserWarning):
    """Degenerate match data; the fitted gamma is boundary-constrained."""


@dataclass(frozen=True)
class LuminanceLut:
    """Preset luminances and their gray levels under the initial gamma."""

    lum: np.ndarray
    gray: np.ndarray
    gamma0: float

    @property
    def size(self) -> int:
        return len(self.lum)


def build_luminance_lut(n: int = 17, gamma0: float = 2.2) -> LuminanceLut:
    """Build the n-entry luminance table: lum evenly spaced on [0, 1],
    gray = lum**(1/gamma0)."""
    if n < 3:
        raise GammaConfigError(f"LUT needs at least 3 entries, got {n}")
    if not gamma0 > 0:
        raise GammaConfigError(f"gamma0 must be positive, got {gamma0}")
    lum = np.linspace(0.0, 1.0, n)
    gray = lum ** (1.0 / gamma0)
    return LuminanceLut(lum=lum, gray=gray, gamma0=gamma0)


@dataclass(frozen=True)
class GammaSession:
    """State of the 15-trial calibration, updated by pure transition functions.

    ``trial_index`` is 1-based; once it passes the last trial the session is
    fit-ready. ``adjustments`` logs every keypress as (trial, key, value).
    """

    lut: LuminanceLut
    high_index: tuple
    low_index: tuple
    trial_index: int
    i_current: float
    adjustments: tuple = ()
    i_new: tuple = ()
    errors: tuple = ()
    fitted_gamma: float | None = None

    @property
    def n_trials(self) -> int:
        return len(self.high_index)

    @property
    def fit_ready(self) -> bool:
        return self.trial_index > self.n_trials


def new_gamma_session(
    lut: LuminanceLut | None = None,
    high_index: tuple = DEFAULT_HIGH_INDEX,
    low_index: tuple = DEFAULT_LOW_INDEX,
) -> GammaSession:
    """Start a calibration session on trial 1 with the middle patch at i_init."""
    if lut is None:
        lut = build_luminance_lut()
    if len(high_index) != len(low_index):
        raise GammaConfigError("high and low index vectors must have equal length")
    for vec in (high_index, low_index):
        for idx in vec:
            if not 1 <= idx <= lut.size:
                raise GammaConfigError(f"index {idx} outside LUT range 1..{lut.size}")
    for h, l in zip(high_index, low_index):
        # One default trial pairs (5, 17) with the labels swapped; the match
        # arithmetic is symmetric in the pair, so only distinctness matters.
        if h == l:
            raise GammaConfigError("each trial needs two distinct intensities")
    session = GammaSession(
        lut=lut,
        high_index=tuple(high_index),
        low_index=tuple(low_index),
        trial_index=1,
        i_current=0.0,
    )
    _, _, i_init = trial_intensities(session, 1)
    return replace(session, i_current=i_init)


def trial_intensities(session: GammaSession, i: int) -> tuple[float, float, float]:
    """(i_high, i_low, i_init) for 1-based trial i."""
    if not 1 <= i <= session.n_trials:
        raise GammaStateError(f"trial index {i} outside 1..{session.n_trials}")
    i_high = float(session.lut.gray[session.high_index[i - 1] - 1])
    i_low = float(session.lut.gray[session.low_index[i - 1] - 1])
    return i_high, i_low, (i_high + i_low) / 2.0


def apply_adjustment(session: GammaSession, key: str) -> GammaSession:
    """Apply one coarse/fine keypress to the middle patch, clamped to [0, 1]."""
    if session.fit_ready:
        raise GammaStateError("session has no active trial")
    try:
        step = ADJUSTMENT_STEPS[key]
    except KeyError:
        raise GammaConfigError(f"unknown adjustment key {key!r}") from None
    value = min(1.0, max(0.0, session.i_current + step))
    log = session.adjustments + ((session.trial_index, key, value),)
    return replace(session, i_current=value, adjustments=log)


def commit_trial(session: GammaSession) -> GammaSession:
    """Record the current match, advance to the next trial (or fit-ready)."""
    if session.fit_ready:
        raise GammaStateError("all trials already committed")
    i = session.trial_index
    _, _, i_init = trial_intensities(session, i)
    updated = replace(
        session,
        i_new=session.i_new + (session.i_current,),
        errors=session.errors + (i_init - session.i_current,),
        trial_index=i + 1,
    )
    if not updated.fit_ready:
        _, _, next_init = trial_intensities(updated, updated.trial_index)
        updated = replace(updated, i_current=next_init)
    return updated


@dataclass(frozen=True)
class GammaSearchConfig:
    """Dense grid scan bracket for the gamma fit, with parabolic refinement."""

    gamma_min: float = 0.5
    gamma_max: float = 5.0
    step: float = 0.001

    def __post_init__(self):
        if not (0 < self.gamma_min < self.gamma_max and self.step > 0):
            raise GammaConfigError(f"invalid gamma search bracket {self}")


def _match_objective(gammas, i_new, i_high, i_low):
    # sum over trials of [i_new**g - (i_high**g + i_low**g)/2]**2 per gamma
    g = gammas[:, None]
    residuals = i_new[None, :] ** g - (i_high[None, :] ** g + i_low[None, :] ** g) / 2.0
    return np.sum(residuals**2, axis=1)


def fit_gamma_from_matches(
    i_new,
    i_high,
    i_low,
    search: GammaSearchConfig = GammaSearchConfig(),
) -> float:
    """Least-squares gamma from per-trial matches (arrays of equal length).

    Deterministic: dense scan of the match objective over the search bracket,
    then one parabolic refinement around the best grid cell.
    """
    i_new = np.asarray(i_new, dtype=float)
    i_high = np.asarray(i_high, dtype=float)
    i_low = np.asarray(i_low, dtype=float)
    if not (len(i_new) == len(i_high) == len(i_low)) or len(i_new) == 0:
        raise GammaConfigError("match arrays must be non-empty and equal-length")
    if np.all((i_new <= 0.0) | (i_new >= 1.0)):
        warnings.warn(
            "all matches sit at a clamp boundary; gamma estimate is boundary-constrained",
            GammaFitWarning,
            stacklevel=2,
        )
    n_steps = int(round((search.gamma_max - search.gamma_min) / search.step))
    gammas = search.gamma_min + search.step * np.arange(n_steps + 1)
    sse = _match_objective(gammas, i_new, i_high, i_low)
    best = int(np.argmin(sse))
    if 0 < best < len(gammas) - 1:
        y0, y1, y2 = sse[best - 1], sse[best], sse[best + 1]
        denom = y0 - 2.0 * y1 + y2
        if denom > 0:
            offset = 0.5 * (y0 - y2) / denom
            return float(gammas[best] + offset * search.step)
    return float(gammas[best])


def fit_gamma(session: GammaSession, search: GammaSearchConfig = GammaSearchConfig()) -> float:
    """Fit gamma from a completed session's committed matches."""
    if not session.fit_ready:
        raise GammaStateError(
            f"cannot fit before trial {session.n_trials} is committed "
            f"(currently on trial {session.trial_index})"
        )
    i_high = []
    i_low = []
    for i in range(1, session.n_trials + 1):
        h, l, _ = trial_intensities(session, i)
        i_high.append(h)
        i_low.append(l)
    return fit_gamma_from_matches(np.array(session.i_new), i_high, i_low, search)


@dataclass(frozen=True)
class NormalizedGammaTable:
    """256-entry luminance table: entries[g] = (g/255)**gamma."""

    entries: np.ndarray
    gamma: float

    def to_json(self) -> list[float]:
        return [float(v) for v in self.entries]

    def to_text(self) -> str:
        """One value per line, 9 significant digits, for client-side LUT files."""
        return "\n".join(f"{v:.9g}" for v in self.entries) + "\n"


def build_normalized_gamma_table(gamma: float) -> NormalizedGammaTable:
    if not gamma > 0:
        raise GammaConfigError(f"gamma must be positive, got {gamma}")
    entries = (np.arange(256) / 255.0) ** gamma
    return NormalizedGammaTable(entries=entries, gamma=gamma)


def identity_gamma_table() -> NormalizedGammaTable:
    return build_normalized_gamma_table(1.0)


def replay_agc_events(events) -> GammaSession:
    """Rebuild a session from logged events.

    Each event is a mapping {trial, event, value, timestamp} where event is a
    keypress name or "commit". Events must be in recorded order; values are
    cross-checked against the replayed state.
    """
    session = new_gamma_session()
    for record in events:
        kind = record["event"]
        if kind == "commit":
            session = commit_trial(session)
        else:
            session = apply_adjustment(session, kind)
            logged = record.get("value")
            if logged is not None and abs(session.i_current - float(logged)) > 1e-9:
                raise GammaStateError(
                    f"replayed intensity {session.i_current!r} disagrees with "
                    f"logged value {logged!r} on trial {record.get('trial')}"
                )
    return session


def parse_agc_log(text: str):
    """Parse a JSON-lines AGC log into event records, accepting both bare
    {trial, event, value, timestamp} records and session-log envelopes whose
    payload carries the same fields."""
    events = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        record = json.loads(line)
        if "kind" in record:
            if record["kind"] not in ("agc_key", "agc_commit"):
                continue
            record = record["payload"]
        if "event" in record:
            events.append(record)
    return events
