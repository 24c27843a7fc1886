import { describe, expect, it } from "vitest";

import { NetworkError, StudyApi } from "../src/client.js";
import type { Task } from "../src/types.js";

const TASK: Task = {
  assignment_id: "a-000001",
  triplet_id: "t0",
  method_id: "m0",
  images: { garment: "/images/g.png", ground_truth: "/images/gt.png", generated: "/images/gen.png" },
  dimensions: [
    { key: "s_bg", title: "Background", question: "?" },
    { key: "s_id", title: "Identity", question: "?" },
    { key: "s_tex", title: "Texture", question: "?" },
    { key: "s_shape", title: "Shape", question: "?" },
    { key: "s_real", title: "Realism", question: "?" },
  ],
  progress: {
    items_total: 2,
    ratings_total: 0,
    items_fully_covered: 0,
    min_ratings_per_item: 0,
    pending_assignments: 1,
  },
};

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

describe("StudyApi.fetchTask", () => {
  it("returns the task payload", async () => {
    const api = new StudyApi(async (url) => {
      expect(url).toBe("/api/task?rater=r1");
      return jsonResponse(TASK);
    });
    const task = await api.fetchTask("r1");
    expect(task?.assignment_id).toBe("a-000001");
    expect(task?.dimensions).toHaveLength(5);
  });

  it("maps 204 to null (pool exhausted)", async () => {
    const api = new StudyApi(async () => new Response(null, { status: 204 }));
    expect(await api.fetchTask("r1")).toBeNull();
  });

  it("wraps transport failure in NetworkError", async () => {
    const api = new StudyApi(async () => {
      throw new Error("ECONNREFUSED");
    });
    await expect(api.fetchTask("r1")).rejects.toBeInstanceOf(NetworkError);
  });

  it("treats 5xx as a network-level failure", async () => {
    const api = new StudyApi(async () => new Response("boom", { status: 502 }));
    await expect(api.fetchTask("r1")).rejects.toBeInstanceOf(NetworkError);
  });
});

describe("StudyApi.submitRating", () => {
  it("posts the exact wire format", async () => {
    let captured: unknown = null;
    const api = new StudyApi(async (url, init) => {
      expect(url).toBe("/api/rating");
      captured = JSON.parse(String(init?.body));
      return jsonResponse({ status: "ok" });
    });
    const outcome = await api.submitRating("a-1", "r1", [3, 4, 5, 4, 3]);
    expect(outcome).toBe("ok");
    expect(captured).toEqual({
      assignment_id: "a-1",
      rater_id: "r1",
      scores: [3, 4, 5, 4, 3],
    });
  });

  it("maps 409 to conflict and 410 to gone", async () => {
    const conflicted = new StudyApi(async () => jsonResponse({ error: "dup" }, 409));
    expect(await conflicted.submitRating("a", "r", [1, 1, 1, 1, 1])).toBe("conflict");
    const expired = new StudyApi(async () => jsonResponse({ error: "old" }, 410));
    expect(await expired.submitRating("a", "r", [1, 1, 1, 1, 1])).toBe("gone");
  });

  it("maps validation failures to rejected", async () => {
    const api = new StudyApi(async () => jsonResponse({ error: "bad" }, 422));
    expect(await api.submitRating("a", "r", [1, 1, 1, 1, 1])).toBe("rejected");
  });
});
