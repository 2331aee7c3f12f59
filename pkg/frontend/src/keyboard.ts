/**
 * Key mapping and the serialized action queue.
 *
 * During calibration the arrow keys step the middle patch (left/right coarse,
 * down/up fine) and space commits the trial. During threshold trials the
 * arrows double as the four shape answers. Every action becomes exactly one
 * API call; calls run one at a time in arrival order, and a failed call
 * pauses the queue (holding the failed action at the head) until retried.
 */

import type { AdjustmentEvent, Shape } from "./api.js";

export type AgcAction = AdjustmentEvent | "commit";

const AGC_KEYS: Record<string, AgcAction> = {
  ArrowLeft: "coarse_down",
  ArrowRight: "coarse_up",
  ArrowDown: "fine_down",
  ArrowUp: "fine_up",
  " ": "commit",
  Spacebar: "commit",
};

const SHAPE_KEYS: Record<string, Shape> = {
  ArrowUp: "open_up",
  ArrowDown: "open_down",
  ArrowLeft: "open_left",
  ArrowRight: "open_right",
};

/** Calibration action for a KeyboardEvent.key, or null if unmapped. */
export function actionForKey(key: string): AgcAction | null {
  return AGC_KEYS[key] ?? null;
}

/** Shape answer for a KeyboardEvent.key, or null if unmapped. */
export function shapeForKey(key: string): Shape | null {
  return SHAPE_KEYS[key] ?? null;
}

export type AsyncTask = () => Promise<void>;

/**
 * FIFO queue running at most one task at a time. A rejected task pauses the
 * queue with that task still at the head; retry() resumes from it, so no
 * action is ever dropped or reordered.
 */
export class ActionQueue {
  private readonly tasks: AsyncTask[] = [];
  private running = false;
  private pausedFlag = false;
  private waiters: Array<() => void> = [];

  constructor(private readonly onError: (err: unknown) => void = () => {}) {}

  get pending(): number {
    return this.tasks.length;
  }

  get paused(): boolean {
    return this.pausedFlag;
  }

  get busy(): boolean {
    return this.running;
  }

  push(task: AsyncTask): void {
    this.tasks.push(task);
    void this.pump();
  }

  /** Resume after a failure, re-running the failed task first. */
  retry(): void {
    if (!this.pausedFlag) return;
    this.pausedFlag = false;
    void this.pump();
  }

  /** Resolves once the queue goes quiescent (drained or paused). */
  settled(): Promise<void> {
    if (!this.running) return Promise.resolve();
    return new Promise((resolve) => this.waiters.push(resolve));
  }

  private async pump(): Promise<void> {
    if (this.running || this.pausedFlag) return;
    this.running = true;
    while (this.tasks.length > 0) {
      try {
        await this.tasks[0]();
      } catch (err) {
        this.pausedFlag = true;
        this.onError(err);
        break;
      }
      this.tasks.shift();
    }
    this.running = false;
    const waiters = this.waiters;
    this.waiters = [];
    for (const resolve of waiters) resolve();
  }
}
