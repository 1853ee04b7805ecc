import { describe, expect, it } from "vitest";

import {
  ApiClient,
  DuplicateChoiceError,
  NetworkError,
  UnknownVolunteerError,
} from "../src/api.js";
import { MockEvalServer } from "./mockServer.js";

function client(server: MockEvalServer, volunteerId = "vol-1"): ApiClient {
  return new ApiClient({ volunteerId, fetchFn: server.fetchFn });
}

describe("ApiClient", () => {
  it("sends the volunteer id as a static header", async () => {
    const server = new MockEvalServer(3);
    const view = await client(server, "vol-42").loadAssignment("H");
    expect(view.volunteer_id).toBe("vol-42");
    expect(view.items).toHaveLength(3);
    expect(view.progress).toEqual({ done: 0, total: 3 });
  });

  it("stores only the blinded fields even if the server leaks extras", async () => {
    const server = new MockEvalServer(2);
    const leakyFetch: typeof fetch = async (input, init) => {
      const response = await server.fetchFn(input, init);
      const payload = await response.json();
      if (payload.items) {
        for (const item of payload.items) item.left_is = "candidate"; // simulated leak
      }
      return new Response(JSON.stringify(payload), { status: response.status });
    };
    const view = await new ApiClient({ volunteerId: "v", fetchFn: leakyFetch }).loadAssignment(
      "H",
    );
    for (const item of view.items) {
      expect(Object.keys(item).sort()).toEqual(
        ["A", "Q", "item_id", "left", "right", "status", "verdict"].sort(),
      );
    }
  });

  it("maps roster misses to UnknownVolunteerError", async () => {
    const server = new MockEvalServer(2);
    server.roster = new Set(["someone-else"]);
    await expect(client(server).loadAssignment("H")).rejects.toBeInstanceOf(
      UnknownVolunteerError,
    );
  });

  it("maps duplicate submissions to DuplicateChoiceError", async () => {
    const server = new MockEvalServer(2);
    const api = client(server);
    await api.submitChoice("item-000000", "equal");
    await expect(api.submitChoice("item-000000", "left-better")).rejects.toBeInstanceOf(
      DuplicateChoiceError,
    );
  });

  it("retries a submission exactly once after a transport failure", async () => {
    const server = new MockEvalServer(2);
    server.failNext(1);
    const api = client(server);
    const before = server.requestCount;
    const ack = await api.submitChoice("item-000001", "equal");
    expect(ack.accepted).toBe(true);
    expect(server.requestCount - before).toBe(2); // failed + retried
    expect(server.choices.size).toBe(1);
  });

  it("surfaces a NetworkError when the retry also fails", async () => {
    const server = new MockEvalServer(2);
    server.failNext(2);
    const api = client(server);
    const before = server.requestCount;
    await expect(api.submitChoice("item-000001", "equal")).rejects.toBeInstanceOf(
      NetworkError,
    );
    expect(server.requestCount - before).toBe(2); // exactly one queued retry
    expect(server.choices.size).toBe(0);
  });

  it("does not auto-retry assignment loads", async () => {
    const server = new MockEvalServer(2);
    server.failNext(1);
    const before = server.requestCount;
    await expect(client(server).loadAssignment("H")).rejects.toBeInstanceOf(NetworkError);
    expect(server.requestCount - before).toBe(1);
  });

  it("filters the rubric by dimension", async () => {
    const server = new MockEvalServer(2);
    const rubric = await client(server).loadRubric("H");
    expect(rubric.length).toBeGreaterThan(0);
    expect(rubric.every((c) => c.dimension === "H")).toBe(true);
  });
});
