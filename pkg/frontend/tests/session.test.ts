import { describe, expect, it } from "vitest";

import {
  ApiError,
  type AgcCommitReply,
  type AgcView,
  type AdjustmentEvent,
  type CreateSessionReply,
  type DisplayProfile,
  type Paradigm,
  type SessionRecord,
  type Shape,
  type StResponseReply,
  type ThresholdResult,
  type TrialPayload,
} from "../src/api.js";
import { GammaLut } from "../src/lut.js";
import { SessionController, type SessionApiLike } from "../src/session.js";
import { PixelSurface } from "../src/surface.js";

const PROFILE: DisplayProfile = { h_px: 800, v_px: 600, width_mm: 258.0, distance_mm: 400.0 };
const COARSE_STEP = 3 / 255;
const FINE_STEP = 0.3 / 255;
const RESULT: ThresholdResult = {
  last_correct_o1_px: 2.0,
  last_correct_arcsec: 332.6,
  posterior_mean_alpha_px: 2.1,
  posterior_mean_alpha_arcsec: 349.3,
  ceiling_flag: false,
};

/**
 * In-memory stand-in for the session service, mirroring its phase machine
 * and adjustment arithmetic so controller behavior can be tested offline.
 */
class FakeApi implements SessionApiLike {
  paradigm: Paradigm = "two_step";
  phase: "agc" | "st" | "done" = "agc";
  agcTrial = 1;
  agcTrials = 3;
  iCurrent = 0.5;
  stTrialNo = 1;
  stTrials = 4;
  fittedGamma: number | null = null;
  submits: Array<{ trial_no: number; shape: Shape }> = [];
  failNext: string | null = null;
  calls: string[] = [];

  private guard(name: string): void {
    this.calls.push(name);
    if (this.failNext === name) {
      this.failNext = null;
      throw new TypeError("network down");
    }
  }

  private agcView(): AgcView {
    return {
      trial: this.agcTrial,
      n_trials: this.agcTrials,
      i_high: 1.0,
      i_low: 0.0,
      i_current: this.iCurrent,
    };
  }

  private payload(): TrialPayload {
    return {
      trial_no: this.stTrialNo,
      n_trials: this.stTrials,
      dot_radius_px: 1.0,
      stimulus: {
        o2: 3,
        shape_hidden: false,
        layers: [
          { channel: "red", dots: [[10, 10, 1.0]] },
          { channel: "cyan", dots: [[12, 10, 1.0]] },
        ],
      },
    };
  }

  async createSession(paradigm: Paradigm): Promise<CreateSessionReply> {
    this.guard("createSession");
    this.paradigm = paradigm;
    if (paradigm === "one_step") {
      this.phase = "st";
      this.fittedGamma = 2.2;
      return { session_id: "fake", paradigm, phase: "st", profile: PROFILE };
    }
    this.phase = "agc";
    return { session_id: "fake", paradigm, phase: "agc", profile: PROFILE, agc: this.agcView() };
  }

  async getSession(): Promise<SessionRecord> {
    this.guard("getSession");
    const record: SessionRecord = {
      session_id: "fake",
      paradigm: this.paradigm,
      phase: this.phase,
      profile: PROFILE,
      created_at: 0,
      master_seed: 1,
      fitted_gamma: this.fittedGamma,
      st_trials: [],
      result: this.phase === "done" ? RESULT : null,
    };
    if (this.phase === "agc") record.agc_view = this.agcView();
    if (this.phase === "st") record.st_trial_no = this.stTrialNo;
    return record;
  }

  async sendAgcKey(_id: string, event: AdjustmentEvent): Promise<AgcView> {
    this.guard("sendAgcKey");
    if (this.phase !== "agc") throw new ApiError(409, "not in calibration phase");
    const step = { coarse_up: COARSE_STEP, coarse_down: -COARSE_STEP, fine_up: FINE_STEP, fine_down: -FINE_STEP }[
      event
    ];
    this.iCurrent = Math.min(1, Math.max(0, this.iCurrent + step));
    return this.agcView();
  }

  async commitAgc(): Promise<AgcCommitReply> {
    this.guard("commitAgc");
    if (this.phase !== "agc") throw new ApiError(409, "not in calibration phase");
    if (this.agcTrial < this.agcTrials) {
      this.agcTrial++;
      this.iCurrent = 0.5;
      return this.agcView();
    }
    this.phase = "st";
    this.fittedGamma = 2.3;
    const lut = Array.from({ length: 256 }, (_, g) => Math.pow(g / 255, 2.3));
    return { trial: this.agcTrials, fitted_gamma: 2.3, lut, phase: "st" };
  }

  async currentTrial(): Promise<TrialPayload> {
    this.guard("currentTrial");
    if (this.phase !== "st") throw new ApiError(409, "no active trial");
    return this.payload();
  }

  async submitShape(_id: string, trialNo: number, shape: Shape): Promise<StResponseReply> {
    this.guard("submitShape");
    if (this.phase !== "st") throw new ApiError(409, "not in trial phase");
    if (trialNo !== this.stTrialNo) throw new ApiError(409, `pending trial is ${this.stTrialNo}`);
    this.submits.push({ trial_no: trialNo, shape });
    if (this.stTrialNo === this.stTrials) {
      this.phase = "done";
      return { trial_no: trialNo, accepted: true, result: RESULT };
    }
    this.stTrialNo++;
    return { trial_no: trialNo, accepted: true };
  }

  async result(): Promise<ThresholdResult> {
    this.guard("result");
    return RESULT;
  }
}

async function startedController(fake = new FakeApi()) {
  const controller = new SessionController(fake);
  await controller.start("two_step");
  return { fake, controller };
}

async function controllerInSt(fake = new FakeApi()) {
  const { controller } = await startedController(fake);
  for (let t = 0; t < fake.agcTrials; t++) controller.pressAgc("commit");
  await controller.settled();
  return { fake, controller };
}

describe("SessionController calibration phase", () => {
  it("starts a two-step session in the calibration phase", async () => {
    const { controller } = await startedController();
    expect(controller.phase).toBe("agc");
    expect(controller.agcView?.trial).toBe(1);
    expect(controller.agcView?.i_current).toBe(0.5);
    expect(controller.profile).toEqual(PROFILE);
  });

  it("routes arrow keys to adjustment calls and space to commit", async () => {
    const { fake, controller } = await startedController();
    expect(controller.handleKey("ArrowRight")).toBe(true);
    expect(controller.handleKey("ArrowUp")).toBe(true);
    expect(controller.handleKey("x")).toBe(false);
    await controller.settled();
    expect(controller.agcView?.i_current).toBeCloseTo(0.5 + COARSE_STEP + FINE_STEP, 15);
    expect(controller.handleKey(" ")).toBe(true);
    await controller.settled();
    expect(controller.agcView?.trial).toBe(2);
    expect(fake.calls.filter((c) => c === "sendAgcKey")).toHaveLength(2);
  });

  it("transitions to trials with the fitted LUT after the last commit", async () => {
    const { controller } = await controllerInSt();
    expect(controller.phase).toBe("st");
    expect(controller.fittedGamma).toBe(2.3);
    expect(controller.trial?.trial_no).toBe(1);
    expect(controller.locked).toBe(false);
    const expected = GammaLut.fromGamma(2.3);
    expect(controller.lut.byteFor(0.5)).toBe(expected.byteFor(0.5));
  });

  it("keeps queued keypresses ordered under a slow network", async () => {
    const { fake, controller } = await startedController();
    for (let i = 0; i < 5; i++) controller.handleKey("ArrowUp");
    await controller.settled();
    let expected = 0.5;
    for (let i = 0; i < 5; i++) expected = Math.min(1, Math.max(0, expected + FINE_STEP));
    expect(controller.agcView?.i_current).toBeCloseTo(expected, 15);
    expect(fake.calls.filter((c) => c === "sendAgcKey")).toHaveLength(5);
  });
});

describe("SessionController trial phase", () => {
  it("locks the shape buttons from submit until the next payload", async () => {
    const { fake, controller } = await controllerInSt();
    expect(controller.submitShape("open_up")).toBe(true);
    expect(controller.locked).toBe(true); // locked immediately, before the reply
    expect(controller.submitShape("open_down")).toBe(false); // double submit ignored
    await controller.settled();
    expect(controller.locked).toBe(false);
    expect(controller.trial?.trial_no).toBe(2);
    expect(fake.submits).toEqual([{ trial_no: 1, shape: "open_up" }]);
  });

  it("sends only the trial number and shape", async () => {
    const { fake, controller } = await controllerInSt();
    controller.submitShape("open_left");
    await controller.settled();
    expect(Object.keys(fake.submits[0]).sort()).toEqual(["shape", "trial_no"]);
  });

  it("maps arrow keys to shape answers during trials", async () => {
    const { fake, controller } = await controllerInSt();
    expect(controller.handleKey("ArrowDown")).toBe(true);
    await controller.settled();
    expect(fake.submits[0].shape).toBe("open_down");
    expect(controller.handleKey(" ")).toBe(false); // commit has no meaning here
  });

  it("finishes with the result after the last trial", async () => {
    const { fake, controller } = await controllerInSt();
    while (controller.phase === "st") {
      controller.submitShape("open_up");
      await controller.settled();
    }
    expect(controller.phase).toBe("done");
    expect(controller.result).toEqual(RESULT);
    expect(controller.trial).toBeNull();
    expect(fake.submits).toHaveLength(fake.stTrials);
  });
});

describe("SessionController failure handling", () => {
  it("pauses for retry on network failure without dropping the action", async () => {
    const errors: unknown[] = [];
    const fake = new FakeApi();
    const controller = new SessionController(fake, { onError: (err) => errors.push(err) });
    await controller.start("two_step");
    for (let t = 0; t < fake.agcTrials; t++) controller.pressAgc("commit");
    await controller.settled();

    fake.failNext = "submitShape";
    controller.submitShape("open_right");
    await controller.settled();
    expect(errors).toHaveLength(1);
    expect(controller.waitingForRetry).toBe(true);
    expect(controller.locked).toBe(true);
    expect(fake.submits).toHaveLength(0);

    controller.retry();
    await controller.settled();
    expect(controller.waitingForRetry).toBe(false);
    expect(controller.locked).toBe(false);
    expect(fake.submits).toEqual([{ trial_no: 1, shape: "open_right" }]);
    expect(controller.trial?.trial_no).toBe(2);
  });

  it("resyncs from the server on a trial-number conflict", async () => {
    const { fake, controller } = await controllerInSt();
    // Simulate a submit whose reply was lost: the server advanced without us.
    fake.stTrialNo = 2;
    controller.submitShape("open_up");
    await controller.settled();
    expect(controller.waitingForRetry).toBe(false);
    expect(fake.submits).toHaveLength(0); // conflict answered, nothing recorded
    expect(controller.trial?.trial_no).toBe(2); // back in lockstep
    expect(controller.locked).toBe(false);
  });
});

describe("SessionController resume", () => {
  it("resumes mid-calibration at the identical trial and intensity", async () => {
    const { fake, controller } = await startedController();
    controller.handleKey("ArrowRight");
    controller.handleKey(" ");
    controller.handleKey("ArrowUp");
    await controller.settled();

    const reloaded = new SessionController(fake);
    await reloaded.resume("fake");
    expect(reloaded.phase).toBe("agc");
    expect(reloaded.agcView).toEqual(controller.agcView);
  });

  it("resumes mid-trials at the pending trial with the fitted LUT", async () => {
    const { fake, controller } = await controllerInSt();
    controller.submitShape("open_up");
    await controller.settled();

    const reloaded = new SessionController(fake);
    await reloaded.resume("fake");
    expect(reloaded.phase).toBe("st");
    expect(reloaded.trial?.trial_no).toBe(2);
    expect(reloaded.trial).toEqual(controller.trial);
    expect(reloaded.fittedGamma).toBe(2.3);
    expect(reloaded.lut.byteFor(0.5)).toBe(GammaLut.fromGamma(2.3).byteFor(0.5));
  });

  it("resumes a finished session with its result", async () => {
    const { controller, fake } = await controllerInSt();
    while (controller.phase === "st") {
      controller.submitShape("open_up");
      await controller.settled();
    }
    const reloaded = new SessionController(fake);
    await reloaded.resume("fake");
    expect(reloaded.phase).toBe("done");
    expect(reloaded.result).toEqual(RESULT);
  });
});

describe("SessionController rendering", () => {
  it("starts one-step sessions directly in trials with the default LUT", async () => {
    const fake = new FakeApi();
    const controller = new SessionController(fake);
    await controller.start("one_step");
    expect(controller.phase).toBe("st");
    expect(controller.fittedGamma).toBe(2.2);
    expect(controller.trial?.trial_no).toBe(1);
  });

  it("renders each phase onto the surface", async () => {
    const { controller } = await startedController();
    const surface = new PixelSurface(800, 600);
    controller.renderTo(surface);
    expect(surface.pixel(0, 0)).toEqual([255, 255, 255, 255]); // calibration background

    for (let t = 0; t < 3; t++) controller.pressAgc("commit");
    await controller.settled();
    controller.renderTo(surface);
    expect(surface.pixel(0, 0)).toEqual([0, 0, 0, 255]); // stimulus background
  });

  it("debug flag disables the LUT, yielding raw grays", async () => {
    const { controller } = await controllerInSt();
    expect(controller.effectiveLut().byteFor(0.5)).toBe(GammaLut.fromGamma(2.3).byteFor(0.5));
    controller.lutEnabled = false;
    expect(controller.effectiveLut().byteFor(0.5)).toBe(128);
  });
});
