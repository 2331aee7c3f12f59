/**
 * Browser entry point: wires the canvas, keyboard, shape buttons, and retry
 * banner to a SessionController. The only thing persisted locally is the
 * session id, so a reload resumes the same session from the server.
 */

import { ApiError, SessionApi, SHAPES, type Paradigm, type Shape } from "./api.js";
import { SessionController } from "./session.js";
import { PixelSurface } from "./surface.js";

const SESSION_ID_KEY = "stereoacuity.session_id";

const SHAPE_LABELS: Record<Shape, string> = {
  open_up: "↑ open up",
  open_down: "↓ open down",
  open_left: "← open left",
  open_right: "→ open right",
};

function must<T extends Element>(el: T | null, what: string): T {
  if (el === null) throw new Error(`missing UI element: ${what}`);
  return el;
}

function statusText(controller: SessionController): string {
  switch (controller.phase) {
    case "agc": {
      const v = controller.agcView;
      if (!v) return "Calibrating…";
      return (
        `Calibration trial ${v.trial}/${v.n_trials} — ` +
        "←/→ coarse, ↓/↑ fine, space to commit"
      );
    }
    case "st": {
      const t = controller.trial;
      if (!t) return "Loading trial…";
      return `Trial ${t.trial_no}/${t.n_trials} — which side is the ring open on?`;
    }
    case "done": {
      const r = controller.result;
      if (!r) return "Session complete.";
      const threshold = r.posterior_mean_alpha_arcsec.toFixed(1);
      const last = r.last_correct_arcsec === null ? "n/a" : r.last_correct_arcsec.toFixed(1);
      const ceiling = r.ceiling_flag ? " (at ceiling)" : "";
      return `Done — threshold ${threshold}″ (last correct ${last}″)${ceiling}`;
    }
  }
}

/** Scale the canvas by an integer factor only, preserving pixel geometry. */
function applyIntegerScale(canvas: HTMLCanvasElement): void {
  const sx = Math.floor(window.innerWidth / canvas.width);
  const sy = Math.floor((window.innerHeight - 120) / canvas.height);
  const scale = Math.max(1, Math.min(sx, sy));
  canvas.style.width = `${canvas.width * scale}px`;
  canvas.style.height = `${canvas.height * scale}px`;
}

async function boot(): Promise<void> {
  const canvas = must(document.querySelector<HTMLCanvasElement>("#stage"), "#stage canvas");
  const ctx = canvas.getContext("2d");
  if (ctx === null) {
    must(document.querySelector<HTMLElement>("#status"), "#status").textContent =
      "Fatal: canvas 2D context unavailable in this browser.";
    throw new Error("canvas 2D context unavailable");
  }
  const status = must(document.querySelector<HTMLElement>("#status"), "#status");
  const buttonBar = must(document.querySelector<HTMLElement>("#shapes"), "#shapes");
  const banner = must(document.querySelector<HTMLElement>("#banner"), "#banner");
  const bannerText = must(document.querySelector<HTMLElement>("#banner-text"), "#banner-text");
  const retryButton = must(document.querySelector<HTMLButtonElement>("#retry"), "#retry button");

  const params = new URLSearchParams(window.location.search);
  const api = new SessionApi(params.get("api") ?? "");
  const surface = new PixelSurface(canvas.width, canvas.height);

  const shapeButtons = new Map<Shape, HTMLButtonElement>();
  for (const shape of SHAPES) {
    const button = document.createElement("button");
    button.textContent = SHAPE_LABELS[shape];
    button.addEventListener("click", () => controller.submitShape(shape));
    buttonBar.appendChild(button);
    shapeButtons.set(shape, button);
  }

  const repaint = (c: SessionController): void => {
    c.renderTo(surface);
    surface.blitTo(ctx);
    status.textContent = statusText(c);
    const buttonsActive = c.phase === "st" && !c.locked && c.trial !== null;
    for (const button of shapeButtons.values()) button.disabled = !buttonsActive;
    if (c.waitingForRetry) {
      const err = c.lastError;
      bannerText.textContent =
        err instanceof ApiError
          ? `Request failed (${err.status}): ${err.message}`
          : `Network error: ${err instanceof Error ? err.message : String(err)}`;
      banner.hidden = false;
    } else {
      banner.hidden = true;
    }
  };

  const controller = new SessionController(api, {
    onChange: repaint,
    onError: () => repaint(controller),
  });
  if (params.get("rawlut") === "1") controller.lutEnabled = false;

  retryButton.addEventListener("click", () => controller.retry());
  window.addEventListener("keydown", (event) => {
    if (controller.handleKey(event.key)) event.preventDefault();
  });
  window.addEventListener("resize", () => applyIntegerScale(canvas));
  applyIntegerScale(canvas);

  const paradigm = (params.get("paradigm") ?? "two_step") as Paradigm;
  const savedId = window.localStorage.getItem(SESSION_ID_KEY);
  if (savedId !== null) {
    try {
      await controller.resume(savedId);
      repaint(controller);
      return;
    } catch {
      window.localStorage.removeItem(SESSION_ID_KEY);
    }
  }
  await controller.start(paradigm);
  window.localStorage.setItem(SESSION_ID_KEY, controller.sessionId);
  repaint(controller);
}

void boot().catch((err) => {
  const status = document.querySelector<HTMLElement>("#status");
  if (status) status.textContent = `Failed to start: ${err instanceof Error ? err.message : String(err)}`;
});
