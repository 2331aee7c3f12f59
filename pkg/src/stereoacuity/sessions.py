"""Session orchestration: the AGC -> ST -> done phase machine, per-trial
engine driving, append-only JSONL persistence, and crash-safe replay.

Each session writes one JSONL file of events {ts, kind, payload}. Everything
random in a session derives from its master seed (per-trial shape and dot
seeds come from a seed sequence spawned on the trial number), so replaying
the log's responses reconstructs the engine state and final result exactly.
"""

from __future__ import annotations

import json
import secrets
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import gamma_cal, psi, rds
from .geometry import DEFAULT_PROFILE, DisplayProfile, GeometryError, pixels_to_arcsec

PHASE_AGC = "agc"
PHASE_ST = "st"
PHASE_DONE = "done"
PARADIGMS = ("one_step", "two_step")

# Display gamma assumed when a session skips calibration.
DEFAULT_GAMMA = 2.2


class SessionError(Exception):
    """Base for request-level session failures; ``status`` maps to HTTP."""

    status = 500


class InvalidRequestError(SessionError):
    status = 400


class UnknownSessionError(SessionError):
    status = 404


class PhaseConflictError(SessionError):
    status = 409


class SessionCompleteError(SessionError):
    status = 410


class ReplayMismatchError(SessionError):
    """A persisted log disagrees with the deterministic replay."""


@dataclass
class PendingTrial:
    trial_no: int
    o1_px: float
    o2_px: int
    arcsec: float
    shape_true: str
    stim_seed: int
    select_latency_ms: float
    payload: dict


def _utcnow_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


class Session:
    """One participant run. All mutations go through the public methods,
    which the manager serializes per session via ``lock``."""

    def __init__(
        self,
        session_id: str,
        paradigm: str,
        profile: DisplayProfile,
        master_seed: int,
        psi_config: psi.PsiConfig,
        rds_config: rds.RdsConfig,
        created_at: str,
        log_path: Path | None,
    ):
        if paradigm not in PARADIGMS:
            raise InvalidRequestError(f"paradigm must be one of {PARADIGMS}")
        self.lock = threading.RLock()
        self.session_id = session_id
        self.paradigm = paradigm
        self.profile = profile
        self.master_seed = int(master_seed)
        self.psi_config = psi_config
        self.rds_config = rds_config
        self.created_at = created_at
        self.log_path = log_path
        self._log_file = None

        two_step = paradigm == "two_step"
        self.phase = PHASE_AGC if two_step else PHASE_ST
        self.gamma_session = gamma_cal.new_gamma_session() if two_step else None
        self.agc_events: list = []
        self.fitted_gamma: float = DEFAULT_GAMMA if not two_step else None
        self.gamma_table = gamma_cal.build_normalized_gamma_table(DEFAULT_GAMMA) if not two_step else None

        self.psi_state = psi.new_state(psi_config)
        self.pending: PendingTrial | None = None
        self.st_trials: list = []
        self.result: psi.ThresholdResult | None = None

    # -- persistence -----------------------------------------------------------

    def _append_event(self, kind: str, payload: dict):
        if self.log_path is None:
            return
        if self._log_file is None:
            self._log_file = open(self.log_path, "a", encoding="utf-8")
        self._log_file.write(json.dumps({"ts": time.time(), "kind": kind, "payload": payload}) + "\n")
        self._log_file.flush()

    def log_created(self):
        self._append_event(
            "created",
            {
                "session_id": self.session_id,
                "paradigm": self.paradigm,
                "profile": self.profile.to_json(),
                "master_seed": self.master_seed,
                "created_at": self.created_at,
                "psi_config": psi.state_to_json(psi.new_state(self.psi_config))["config"],
                "rds_config": {
                    "texture_size_mm": self.rds_config.texture_size_mm,
                    "dots_per_layer": self.rds_config.dots_per_layer,
                    "hidden_dots": self.rds_config.hidden_dots,
                    "dot_radius_px": self.rds_config.dot_radius_px,
                    "colors": list(self.rds_config.colors),
                },
            },
        )

    # -- AGC phase ---------------------------------------------------------------

    def _require_phase(self, phase: str):
        if self.phase == PHASE_DONE and phase != PHASE_DONE:
            raise SessionCompleteError("session already completed")
        if self.phase != phase:
            raise PhaseConflictError(f"operation requires {phase} phase, session is in {self.phase}")

    def agc_view(self) -> dict:
        self._require_phase(PHASE_AGC)
        trial = self.gamma_session.trial_index
        i_high, i_low, _ = gamma_cal.trial_intensities(self.gamma_session, trial)
        return {
            "trial": trial,
            "n_trials": self.gamma_session.n_trials,
            "i_high": i_high,
            "i_low": i_low,
            "i_current": self.gamma_session.i_current,
        }

    def agc_key(self, event: str) -> dict:
        with self.lock:
            self._require_phase(PHASE_AGC)
            try:
                self.gamma_session = gamma_cal.apply_adjustment(self.gamma_session, event)
            except gamma_cal.GammaConfigError as exc:
                raise InvalidRequestError(str(exc)) from exc
            record = {
                "trial": self.gamma_session.trial_index,
                "event": event,
                "value": self.gamma_session.i_current,
                "timestamp": time.time(),
            }
            self.agc_events.append(record)
            self._append_event("agc_key", record)
            return self.agc_view()

    def agc_commit(self) -> dict:
        with self.lock:
            self._require_phase(PHASE_AGC)
            trial = self.gamma_session.trial_index
            committed = self.gamma_session.i_current
            self.gamma_session = gamma_cal.commit_trial(self.gamma_session)
            record = {"trial": trial, "event": "commit", "value": committed, "timestamp": time.time()}
            self.agc_events.append(record)
            self._append_event("agc_commit", record)
            if not self.gamma_session.fit_ready:
                return self.agc_view()
            self.fitted_gamma = gamma_cal.fit_gamma(self.gamma_session)
            self.gamma_table = gamma_cal.build_normalized_gamma_table(self.fitted_gamma)
            self.phase = PHASE_ST
            self._append_event("agc_result", {"fitted_gamma": self.fitted_gamma})
            return {
                "trial": trial,
                "fitted_gamma": self.fitted_gamma,
                "lut": self.gamma_table.to_json(),
                "phase": self.phase,
            }

    # -- ST phase ---------------------------------------------------------------

    def _trial_rng(self, trial_no: int) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence(entropy=self.master_seed, spawn_key=(trial_no,))
        )

    def _make_pending(self, trial_no: int) -> PendingTrial:
        t0 = time.perf_counter()
        o1 = psi.select_next_intensity(self.psi_state)
        latency_ms = (time.perf_counter() - t0) * 1000.0
        rng = self._trial_rng(trial_no)
        shape = rds.SHAPES[int(rng.integers(len(rds.SHAPES)))]
        stim_seed = int(rng.integers(2**63))
        stimulus = rds.generate_rds(self.rds_config, o1, shape, stim_seed)
        payload = {
            "trial_no": trial_no,
            "n_trials": self.psi_config.n_trials,
            "dot_radius_px": self.rds_config.dot_radius_px,
            "stimulus": stimulus.to_wire(),
        }
        return PendingTrial(
            trial_no=trial_no,
            o1_px=o1,
            o2_px=stimulus.o2_px,
            arcsec=pixels_to_arcsec(o1, self.profile),
            shape_true=shape,
            stim_seed=stim_seed,
            select_latency_ms=latency_ms,
            payload=payload,
        )

    def st_current(self, _log: bool = True) -> dict:
        with self.lock:
            if self.phase == PHASE_DONE:
                raise SessionCompleteError("session already completed")
            self._require_phase(PHASE_ST)
            if self.pending is None:
                self.pending = self._make_pending(len(self.st_trials) + 1)
                if _log:
                    self._append_event(
                        "st_stimulus",
                        {
                            "trial_no": self.pending.trial_no,
                            "o1_px": self.pending.o1_px,
                            "o2_px": self.pending.o2_px,
                            "arcsec": self.pending.arcsec,
                            "shape_true": self.pending.shape_true,
                            "stim_seed": self.pending.stim_seed,
                            "latency_ms": self.pending.select_latency_ms,
                        },
                    )
            return self.pending.payload

    def st_respond(self, trial_no: int, shape_choice: str) -> dict:
        with self.lock:
            if self.phase == PHASE_DONE:
                raise SessionCompleteError("session already completed")
            self._require_phase(PHASE_ST)
            if shape_choice not in rds.SHAPES:
                raise InvalidRequestError(f"shape must be one of {rds.SHAPES}, got {shape_choice!r}")
            if self.pending is None:
                raise PhaseConflictError("no pending trial (already answered?); fetch the current trial first")
            if int(trial_no) != self.pending.trial_no:
                raise PhaseConflictError(
                    f"response targets trial {trial_no}, pending trial is {self.pending.trial_no}"
                )
            pending = self.pending
            correct = int(shape_choice == pending.shape_true)
            self.psi_state = psi.posterior_update(self.psi_state, pending.o1_px, correct)
            self.st_trials.append(
                {
                    "trial_no": pending.trial_no,
                    "o1_px": pending.o1_px,
                    "o2_px": pending.o2_px,
                    "arcsec": pending.arcsec,
                    "shape_true": pending.shape_true,
                    "shape_response": shape_choice,
                    "correct": correct,
                    "latency_ms": pending.select_latency_ms,
                }
            )
            self._append_event(
                "st_response",
                {"trial_no": pending.trial_no, "shape_response": shape_choice, "correct": correct},
            )
            self.pending = None
            reply = {"trial_no": pending.trial_no, "accepted": True}
            if self.psi_state.finished:
                self.result = psi.finalize_threshold(self.psi_state, self.profile)
                self.phase = PHASE_DONE
                self._append_event("result", self.result.to_json())
                reply["result"] = self.result.to_json()
            return reply

    # -- views -------------------------------------------------------------------

    def result_view(self) -> dict:
        with self.lock:
            if self.result is None:
                raise PhaseConflictError(f"session still in {self.phase} phase; no result yet")
            return self.result.to_json()

    def record(self) -> dict:
        with self.lock:
            rec = {
                "session_id": self.session_id,
                "paradigm": self.paradigm,
                "phase": self.phase,
                "profile": self.profile.to_json(),
                "created_at": self.created_at,
                "master_seed": self.master_seed,
                "fitted_gamma": self.fitted_gamma,
                "st_trials": list(self.st_trials),
                "result": self.result.to_json() if self.result else None,
            }
            if self.paradigm == "two_step":
                rec["agc_log"] = list(self.agc_events)
                if self.phase == PHASE_AGC:
                    rec["agc_view"] = self.agc_view()
            if self.phase == PHASE_ST:
                rec["st_trial_no"] = len(self.st_trials) + 1
            return rec


def _new_session_id() -> str:
    return secrets.token_hex(8)


class SessionManager:
    """Creates, stores, and lazily restores sessions from their logs."""

    def __init__(
        self,
        data_dir,
        default_profile: DisplayProfile = DEFAULT_PROFILE,
        psi_config: psi.PsiConfig | None = None,
    ):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.default_profile = default_profile
        self.psi_config = psi_config or psi.PsiConfig()
        self._sessions: dict = {}
        self._lock = threading.Lock()

    def create(self, paradigm: str, profile_json: dict | None = None, seed=None) -> Session:
        if profile_json is None:
            profile = self.default_profile
        else:
            try:
                profile = DisplayProfile.from_json(profile_json)
            except (GeometryError, KeyError, TypeError, ValueError) as exc:
                raise InvalidRequestError(f"invalid display profile: {exc}") from exc
        if seed is None:
            seed = secrets.randbits(63)
        try:
            rds_config = rds.RdsConfig(profile=profile)
        except rds.RdsConfigError as exc:
            raise InvalidRequestError(f"profile cannot host the stimulus: {exc}") from exc
        session_id = _new_session_id()
        session = Session(
            session_id=session_id,
            paradigm=paradigm,
            profile=profile,
            master_seed=int(seed),
            psi_config=self.psi_config,
            rds_config=rds_config,
            created_at=_utcnow_iso(),
            log_path=self.data_dir / f"{session_id}.jsonl",
        )
        session.log_created()
        with self._lock:
            self._sessions[session_id] = session
        return session

    def get(self, session_id: str) -> Session:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is not None:
            return session
        log_path = self.data_dir / f"{session_id}.jsonl"
        if not log_path.exists():
            raise UnknownSessionError(f"no session {session_id!r}")
        session = replay_session_log(log_path, resume_logging=True)
        with self._lock:
            return self._sessions.setdefault(session_id, session)


def replay_session_log(log_path, resume_logging: bool = False) -> Session:
    """Rebuild a session from its JSONL event log.

    Re-derives every stimulus from the master seed and the logged responses,
    cross-checking the log's recorded selections; raises ReplayMismatchError
    on any disagreement. With ``resume_logging`` the returned session appends
    future events to the same file.
    """
    log_path = Path(log_path)
    events = []
    with open(log_path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                events.append(json.loads(line))
    if not events or events[0]["kind"] != "created":
        raise ReplayMismatchError(f"{log_path} does not start with a created event")

    meta = events[0]["payload"]
    cfg = meta["psi_config"]
    psi_config = psi.PsiConfig(
        alpha_grid=np.array(cfg["alpha_grid"]),
        beta_grid=np.array(cfg["beta_grid"]),
        lambda_grid=np.array(cfg["lambda_grid"]),
        guess_rate=cfg["guess_rate"],
        candidate_x=np.array(cfg["candidate_x"]),
        n_trials=cfg["n_trials"],
    )
    profile = DisplayProfile.from_json(meta["profile"])
    rcfg = meta["rds_config"]
    rds_config = rds.RdsConfig(
        texture_size_mm=rcfg["texture_size_mm"],
        dots_per_layer=rcfg["dots_per_layer"],
        hidden_dots=rcfg["hidden_dots"],
        dot_radius_px=rcfg["dot_radius_px"],
        colors=tuple(rcfg["colors"]),
        profile=profile,
    )
    session = Session(
        session_id=meta["session_id"],
        paradigm=meta["paradigm"],
        profile=profile,
        master_seed=meta["master_seed"],
        psi_config=psi_config,
        rds_config=rds_config,
        created_at=meta["created_at"],
        log_path=None,  # never re-append history while replaying it
    )

    for event in events[1:]:
        kind, payload = event["kind"], event["payload"]
        if kind == "agc_key":
            view = session.agc_key(payload["event"])
            if abs(view["i_current"] - payload["value"]) > 1e-9:
                raise ReplayMismatchError(
                    f"AGC trial {payload['trial']}: replayed intensity {view['i_current']} "
                    f"!= logged {payload['value']}"
                )
        elif kind == "agc_commit":
            session.agc_commit()
        elif kind == "agc_result":
            if abs(session.fitted_gamma - payload["fitted_gamma"]) > 1e-12:
                raise ReplayMismatchError("replayed gamma fit disagrees with the log")
        elif kind == "st_stimulus":
            session.st_current(_log=False)
            pending = session.pending
            if (
                pending.trial_no != payload["trial_no"]
                or pending.o1_px != payload["o1_px"]
                or pending.shape_true != payload["shape_true"]
                or pending.stim_seed != payload["stim_seed"]
            ):
                raise ReplayMismatchError(
                    f"trial {payload['trial_no']}: replayed stimulus "
                    f"(o1={pending.o1_px}, shape={pending.shape_true}) disagrees with the log "
                    f"(o1={payload['o1_px']}, shape={payload['shape_true']})"
                )
            pending.select_latency_ms = payload["latency_ms"]
        elif kind == "st_response":
            session.st_respond(payload["trial_no"], payload["shape_response"])
        elif kind == "result":
            if session.result is None or session.result.to_json() != payload:
                raise ReplayMismatchError("replayed result disagrees with the logged result")
    if resume_logging:
        session.log_path = log_path
    return session
