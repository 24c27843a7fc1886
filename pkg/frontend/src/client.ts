// Thin typed wrapper over the study-service HTTP API.
// Transport failures surface as NetworkError so the UI can show a retry
// banner without losing state; HTTP status codes map to typed outcomes.

import type { Progress, SubmitOutcome, Task } from "./types.js";

export class NetworkError extends Error {}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class StudyApi {
  private fetchFn: FetchLike;
  private baseUrl: string;

  constructor(fetchFn?: FetchLike, baseUrl = "") {
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
    this.baseUrl = baseUrl;
  }

  private async request(path: string, init?: RequestInit): Promise<Response> {
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, init);
    } catch (err) {
      throw new NetworkError(String(err));
    }
    if (response.status >= 500) {
      throw new NetworkError(`server error ${response.status}`);
    }
    return response;
  }

  /** Next assignment for the rater, or null when the pool is exhausted. */
  async fetchTask(rater: string): Promise<Task | null> {
    const response = await this.request(
      `/api/task?rater=${encodeURIComponent(rater)}`,
    );
    if (response.status === 204) {
      return null;
    }
    if (!response.ok) {
      throw new NetworkError(`unexpected status ${response.status}`);
    }
    return (await response.json()) as Task;
  }

  async submitRating(
    assignmentId: string,
    rater: string,
    scores: number[],
  ): Promise<SubmitOutcome> {
    const response = await this.request("/api/rating", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({
        assignment_id: assignmentId,
        rater_id: rater,
        scores,
      }),
    });
    if (response.ok) {
      return "ok";
    }
    if (response.status === 409) {
      return "conflict";
    }
    if (response.status === 410) {
      return "gone";
    }
    return "rejected";
  }

  async progress(): Promise<Progress> {
    const response = await this.request("/api/progress");
    return (await response.json()) as Progress;
  }
}
