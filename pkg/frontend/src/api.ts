/**
 * Typed client for the stereoacuity session HTTP API.
 *
 * The browser UI holds no session logic: every user action becomes one request
 * here, and every view is rebuilt from the replies. All types mirror the wire
 * JSON exactly.
 */

export const SHAPES = ["open_up", "open_down", "open_left", "open_right"] as const;
export type Shape = (typeof SHAPES)[number];

export type Phase = "agc" | "st" | "done";
export type Paradigm = "one_step" | "two_step";

export type AdjustmentEvent = "coarse_up" | "coarse_down" | "fine_up" | "fine_down";

export interface DisplayProfile {
  h_px: number;
  v_px: number;
  width_mm: number;
  distance_mm: number;
}

/** Live calibration trial: the two reference intensities and the adjustable one. */
export interface AgcView {
  trial: number;
  n_trials: number;
  i_high: number;
  i_low: number;
  i_current: number;
}

/** Reply to the final commit: the fitted gamma and the 256-entry output table. */
export interface AgcCommitDone {
  trial: number;
  fitted_gamma: number;
  lut: number[];
  phase: Phase;
}

export type AgcCommitReply = AgcView | AgcCommitDone;

export function isCommitDone(reply: AgcCommitReply): reply is AgcCommitDone {
  return "fitted_gamma" in reply;
}

/** One dot layer: channel name plus (x, y, intensity) triples in texture px. */
export interface WireLayer {
  channel: string;
  dots: number[][];
}

export interface WireStimulus {
  o2: number;
  shape_hidden: boolean;
  layers: WireLayer[];
}

export interface TrialPayload {
  trial_no: number;
  n_trials: number;
  dot_radius_px: number;
  stimulus: WireStimulus;
}

export interface StResponseReply {
  trial_no: number;
  accepted: boolean;
  result?: ThresholdResult;
}

export interface ThresholdResult {
  last_correct_o1_px: number | null;
  last_correct_arcsec: number | null;
  posterior_mean_alpha_px: number;
  posterior_mean_alpha_arcsec: number;
  ceiling_flag: boolean;
}

export interface CreateSessionReply {
  session_id: string;
  paradigm: Paradigm;
  phase: Phase;
  profile: DisplayProfile;
  agc?: AgcView;
}

export interface SessionRecord {
  session_id: string;
  paradigm: Paradigm;
  phase: Phase;
  profile: DisplayProfile;
  created_at: number;
  master_seed: number;
  fitted_gamma: number | null;
  st_trials: unknown[];
  result: ThresholdResult | null;
  agc_log?: unknown[];
  agc_view?: AgcView;
  st_trial_no?: number;
}

/** HTTP-level failure carrying the server's status code and detail message. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(detail);
    this.name = "ApiError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class SessionApi {
  private readonly fetchFn: FetchLike;

  constructor(
    readonly baseUrl: string = "",
    fetchFn?: FetchLike,
  ) {
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: {} };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchFn(this.baseUrl + path, init);
    if (!response.ok) {
      let detail = `${response.status} ${response.statusText}`;
      try {
        const payload = (await response.json()) as { detail?: string };
        if (payload && typeof payload.detail === "string") detail = payload.detail;
      } catch {
        // non-JSON error body; keep the status line
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  createSession(paradigm: Paradigm, profile?: DisplayProfile, seed?: number): Promise<CreateSessionReply> {
    const body: Record<string, unknown> = { paradigm };
    if (profile !== undefined) body.profile = profile;
    if (seed !== undefined) body.seed = seed;
    return this.request("POST", "/sessions", body);
  }

  getSession(sessionId: string): Promise<SessionRecord> {
    return this.request("GET", `/sessions/${sessionId}`);
  }

  sendAgcKey(sessionId: string, event: AdjustmentEvent): Promise<AgcView> {
    return this.request("POST", `/sessions/${sessionId}/agc/keys`, { event });
  }

  commitAgc(sessionId: string): Promise<AgcCommitReply> {
    return this.request("POST", `/sessions/${sessionId}/agc/commit`);
  }

  currentTrial(sessionId: string): Promise<TrialPayload> {
    return this.request("GET", `/sessions/${sessionId}/st/current`);
  }

  submitShape(sessionId: string, trialNo: number, shape: Shape): Promise<StResponseReply> {
    return this.request("POST", `/sessions/${sessionId}/st/response`, {
      trial_no: trialNo,
      shape,
    });
  }

  result(sessionId: string): Promise<ThresholdResult> {
    return this.request("GET", `/sessions/${sessionId}/result`);
  }

  /** Server-side raster of the pending stimulus (debug aid, not used to render). */
  stimulusPngUrl(sessionId: string): string {
    return `${this.baseUrl}/sessions/${sessionId}/st/current.png`;
  }
}
