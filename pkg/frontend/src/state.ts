// Rating-session state machine, kept DOM-free so it is testable headless.
//
// Invariants enforced here rather than in the render layer:
//   - a submission goes out only when all five dimensions are selected
//     and every value is an integer 1..5;
//   - one in-flight submission at a time;
//   - a 409 (double submit) advances to the next task without re-posting;
//   - a network failure keeps the selections and raises the retry banner.

import { NetworkError, StudyApi } from "./client.js";
import type { Task } from "./types.js";

export type Phase = "loading" | "rating" | "done" | "error";

export class RatingSession {
  readonly rater: string;
  private api: StudyApi;

  phase: Phase = "loading";
  task: Task | null = null;
  selections: (number | null)[] = [null, null, null, null, null];
  retryBanner = false;
  errorMessage = "";
  completed = 0;
  private inFlight = false;

  constructor(api: StudyApi, rater: string) {
    this.api = api;
    this.rater = rater;
  }

  async start(): Promise<void> {
    await this.loadNext();
  }

  async loadNext(): Promise<void> {
    this.phase = "loading";
    this.retryBanner = false;
    try {
      this.task = await this.api.fetchTask(this.rater);
    } catch (err) {
      if (err instanceof NetworkError) {
        this.retryBanner = true;
        this.phase = "error";
        this.errorMessage = err.message;
        return;
      }
      throw err;
    }
    this.selections = [null, null, null, null, null];
    this.phase = this.task === null ? "done" : "rating";
  }

  select(dimensionIndex: number, score: number): void {
    if (this.phase !== "rating") {
      return;
    }
    if (!Number.isInteger(score) || score < 1 || score > 5) {
      return; // out-of-range input never reaches the selections
    }
    if (dimensionIndex < 0 || dimensionIndex >= this.selections.length) {
      return;
    }
    this.selections[dimensionIndex] = score;
  }

  missingDimensions(): number[] {
    return this.selections
      .map((value, index) => (value === null ? index : -1))
      .filter((index) => index >= 0);
  }

  canSubmit(): boolean {
    return (
      this.phase === "rating" &&
      !this.inFlight &&
      this.task !== null &&
      this.missingDimensions().length === 0
    );
  }

  /** Returns true when the session advanced to a new task (or finished). */
  async submit(): Promise<boolean> {
    if (!this.canSubmit() || this.task === null) {
      return false;
    }
    this.inFlight = true;
    const scores = this.selections.map((value) => value as number);
    try {
      const outcome = await this.api.submitRating(
        this.task.assignment_id,
        this.rater,
        scores,
      );
      if (outcome === "ok") {
        this.completed += 1;
      }
      if (outcome === "rejected") {
        this.phase = "error";
        this.errorMessage = "the server rejected the rating";
        return false;
      }
      // ok, conflict (already rated), gone (expired): move on either way,
      // never re-posting the same assignment.
      await this.loadNext();
      return true;
    } catch (err) {
      if (err instanceof NetworkError) {
        // Keep selections so the rater loses nothing; show the banner.
        this.retryBanner = true;
        return false;
      }
      throw err;
    } finally {
      this.inFlight = false;
    }
  }
}
