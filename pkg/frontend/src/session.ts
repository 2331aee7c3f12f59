/**
 * Client-side session orchestration.
 *
 * Holds only presentation state (current views, LUT, lockout flags); all
 * session logic — trial sequencing, correctness, thresholds — stays on the
 * server. Reloading the page and resuming from the session id therefore
 * lands on the identical trial.
 */

import {
  ApiError,
  isCommitDone,
  type AgcView,
  type DisplayProfile,
  type Paradigm,
  type Phase,
  type SessionApi,
  type Shape,
  type ThresholdResult,
  type TrialPayload,
} from "./api.js";
import { ActionQueue, actionForKey, shapeForKey, type AgcAction } from "./keyboard.js";
import { GammaLut } from "./lut.js";
import { defaultAgcLayout, renderAgcView, type AgcLayout } from "./agc_view.js";
import { renderStimulus } from "./st_view.js";
import type { PixelSurface } from "./surface.js";

/** Structural subset of SessionApi the controller needs (fakeable in tests). */
export type SessionApiLike = Pick<
  SessionApi,
  "createSession" | "getSession" | "sendAgcKey" | "commitAgc" | "currentTrial" | "submitShape" | "result"
>;

export interface ControllerHooks {
  /** Called after every state change that should repaint the UI. */
  onChange?: (controller: SessionController) => void;
  /** Called when an API action fails and the queue pauses for a retry. */
  onError?: (err: unknown) => void;
}

export class SessionController {
  sessionId = "";
  paradigm: Paradigm = "two_step";
  phase: Phase = "agc";
  profile: DisplayProfile | null = null;
  agcView: AgcView | null = null;
  trial: TrialPayload | null = null;
  result: ThresholdResult | null = null;
  fittedGamma: number | null = null;
  lut: GammaLut = GammaLut.identity();
  /** Debug flag: false renders raw grays (identity mapping). */
  lutEnabled = true;
  /** Shape buttons are locked from submit until the next payload arrives. */
  locked = false;
  lastError: unknown = null;

  private readonly queue: ActionQueue;

  constructor(
    private readonly api: SessionApiLike,
    private readonly hooks: ControllerHooks = {},
  ) {
    this.queue = new ActionQueue((err) => {
      this.lastError = err;
      this.hooks.onError?.(err);
      this.changed();
    });
  }

  private changed(): void {
    this.hooks.onChange?.(this);
  }

  get waitingForRetry(): boolean {
    return this.queue.paused;
  }

  /** Resolves when all queued actions finish (or the queue pauses on error). */
  settled(): Promise<void> {
    return this.queue.settled();
  }

  async start(paradigm: Paradigm, profile?: DisplayProfile, seed?: number): Promise<void> {
    const reply = await this.api.createSession(paradigm, profile, seed);
    this.sessionId = reply.session_id;
    this.paradigm = reply.paradigm;
    this.phase = reply.phase;
    this.profile = reply.profile;
    this.agcView = reply.agc ?? null;
    if (this.phase === "st") {
      const record = await this.api.getSession(this.sessionId);
      this.applyGamma(record.fitted_gamma);
      await this.loadCurrentTrial();
    }
    this.changed();
  }

  async resume(sessionId: string): Promise<void> {
    const record = await this.api.getSession(sessionId);
    this.sessionId = record.session_id;
    this.paradigm = record.paradigm;
    this.phase = record.phase;
    this.profile = record.profile;
    this.applyGamma(record.fitted_gamma);
    this.agcView = record.agc_view ?? null;
    this.trial = null;
    this.result = record.result;
    if (this.phase === "st") {
      await this.loadCurrentTrial();
    }
    this.changed();
  }

  private applyGamma(gamma: number | null): void {
    this.fittedGamma = gamma;
    this.lut = gamma === null ? GammaLut.identity() : GammaLut.fromGamma(gamma);
  }

  private async loadCurrentTrial(): Promise<void> {
    this.trial = await this.api.currentTrial(this.sessionId);
    this.locked = false;
  }

  /** Route a KeyboardEvent.key by phase; returns true when consumed. */
  handleKey(key: string): boolean {
    if (this.phase === "agc") {
      const action = actionForKey(key);
      if (action === null) return false;
      this.pressAgc(action);
      return true;
    }
    if (this.phase === "st") {
      const shape = shapeForKey(key);
      if (shape === null) return false;
      return this.submitShape(shape);
    }
    return false;
  }

  /** Queue one calibration action (adjustment keypress or commit). */
  pressAgc(action: AgcAction): void {
    if (this.phase !== "agc") return;
    if (action === "commit") {
      this.queue.push(async () => {
        let reply;
        try {
          reply = await this.api.commitAgc(this.sessionId);
        } catch (err) {
          await this.resyncOnConflict(err);
          return;
        }
        if (isCommitDone(reply)) {
          this.fittedGamma = reply.fitted_gamma;
          this.lut = GammaLut.fromEntries(reply.lut);
          this.phase = "st";
          this.agcView = null;
          await this.loadCurrentTrial();
        } else {
          this.agcView = reply;
        }
        this.changed();
      });
    } else {
      this.queue.push(async () => {
        try {
          this.agcView = await this.api.sendAgcKey(this.sessionId, action);
        } catch (err) {
          await this.resyncOnConflict(err);
          return;
        }
        this.changed();
      });
    }
  }

  /**
   * A 409 means the server has already advanced past this action (e.g. a
   * retried request whose first attempt landed); resync instead of failing.
   * Any other error propagates and pauses the queue for a retry.
   */
  private async resyncOnConflict(err: unknown): Promise<void> {
    if (err instanceof ApiError && err.status === 409) {
      await this.refresh();
      this.changed();
      return;
    }
    throw err;
  }

  /** Queue a shape answer; ignored while locked. Returns true if queued. */
  submitShape(shape: Shape): boolean {
    if (this.phase !== "st" || this.locked || this.trial === null) return false;
    const trialNo = this.trial.trial_no;
    this.locked = true;
    this.changed();
    this.queue.push(async () => {
      let reply;
      try {
        reply = await this.api.submitShape(this.sessionId, trialNo, shape);
      } catch (err) {
        await this.resyncOnConflict(err);
        return;
      }
      if (reply.result) {
        this.result = reply.result;
        this.phase = "done";
        this.trial = null;
        this.locked = false;
      } else {
        await this.loadCurrentTrial();
      }
      this.changed();
    });
    return true;
  }

  /** Re-fetch authoritative state after a conflict. */
  private async refresh(): Promise<void> {
    const record = await this.api.getSession(this.sessionId);
    this.phase = record.phase;
    this.applyGamma(record.fitted_gamma);
    this.agcView = record.agc_view ?? null;
    this.result = record.result;
    if (this.phase === "st") {
      await this.loadCurrentTrial();
    } else {
      this.trial = null;
      this.locked = false;
    }
  }

  /** Resume the action queue after a failure (UI retry button). */
  retry(): void {
    this.lastError = null;
    this.queue.retry();
    this.changed();
  }

  effectiveLut(): GammaLut {
    return this.lutEnabled ? this.lut : GammaLut.identity();
  }

  agcLayout(): AgcLayout {
    if (this.profile === null) throw new Error("no display profile yet");
    return defaultAgcLayout(this.profile);
  }

  /** Paint the current phase onto a surface. */
  renderTo(surface: PixelSurface): void {
    if (this.phase === "agc" && this.agcView !== null) {
      renderAgcView(surface, this.agcView, this.effectiveLut(), this.agcLayout());
    } else if (this.phase === "st" && this.trial !== null && this.profile !== null) {
      renderStimulus(surface, this.trial, this.effectiveLut(), this.profile);
    } else {
      surface.clear(0, 0, 0);
    }
  }
}
