// @vitest-environment jsdom
import { describe, expect, it } from "vitest";

import { createApp } from "../src/app.js";
import { MockEvalServer, resolveForCandidate } from "./mockServer.js";
import type { Verdict } from "../src/types.js";

async function flush(times = 6): Promise<void> {
  for (let i = 0; i < times; i++) {
    await new Promise((resolve) => setTimeout(resolve, 0));
  }
}

async function waitFor(predicate: () => boolean, what: string): Promise<void> {
  for (let i = 0; i < 200; i++) {
    if (predicate()) return;
    await flush(1);
  }
  throw new Error(`timed out waiting for ${what}`);
}

function mount(server: MockEvalServer): HTMLElement {
  const root = document.createElement("div");
  document.body.appendChild(root);
  createApp(root, { fetchFn: server.fetchFn });
  return root;
}

async function login(root: HTMLElement, volunteerId: string): Promise<void> {
  const input = root.querySelector<HTMLInputElement>("#volunteer-id")!;
  input.value = volunteerId;
  root.querySelector<HTMLButtonElement>("button.start")!.click();
  await waitFor(() => root.querySelector(".item-panel, .complete-screen, .error-screen") !== null, "session screen");
}

function progressText(root: HTMLElement): string {
  return root.querySelector("#progress")?.textContent ?? "";
}

function clickVerdict(root: HTMLElement, itemId: string, verdict: Verdict): void {
  const panel = root.querySelector<HTMLElement>(`.item-panel[data-item-id="${itemId}"]`);
  if (!panel) throw new Error(`item panel ${itemId} not visible`);
  const button = panel.querySelector<HTMLButtonElement>(
    `button.verdict[data-verdict="${verdict}"]`,
  )!;
  button.click();
}

function currentItemId(root: HTMLElement): string {
  return root.querySelector<HTMLElement>(".item-panel")!.dataset.itemId!;
}

/** Verdict that resolves to the wanted candidate-relative category for the
 * item's hidden side (known to the test through the server, never the UI). */
function verdictFor(
  server: MockEvalServer,
  itemId: string,
  want: "better" | "equal" | "worse",
): Verdict {
  if (want === "equal") return "equal";
  const item = server.items.find((i) => i.item_id === itemId)!;
  for (const verdict of ["left-better", "right-better"] as Verdict[]) {
    if (resolveForCandidate(verdict, item.left_is) === want) return verdict;
  }
  throw new Error("unreachable");
}

describe("annotator app", () => {
  it("renders the blinded assignment with the dimension rubric", async () => {
    const server = new MockEvalServer(5);
    const root = mount(server);
    await login(root, "vol-1");

    expect(root.querySelectorAll(".item-list .item")).toHaveLength(5);
    expect(progressText(root)).toContain("0/5");
    const rubricEntries = [...root.querySelectorAll(".criterion")];
    expect(rubricEntries.length).toBeGreaterThan(0);
    expect(rubricEntries.every((li) => li.textContent!.startsWith("1."))).toBe(true);

    const html = root.innerHTML;
    expect(html).not.toContain("left_is");
    expect(html).not.toContain("hidden_map");
    expect(html).not.toContain("candidate");
    expect(html).not.toContain("baseline");
  });

  it("disables verdict controls once an item is chosen and records one verdict", async () => {
    const server = new MockEvalServer(3);
    const root = mount(server);
    await login(root, "vol-1");

    const first = currentItemId(root);
    clickVerdict(root, first, "equal");
    await waitFor(() => progressText(root).includes("1/3"), "progress 1/3");

    // navigate back to the chosen item
    root.querySelector<HTMLButtonElement>(`.item-list button[data-item-id="${first}"]`)!.click();
    await waitFor(() => currentItemId(root) === first, "chosen item visible");
    const panel = root.querySelector<HTMLElement>(`.item-panel[data-item-id="${first}"]`)!;
    const buttons = [...panel.querySelectorAll<HTMLButtonElement>("button.verdict")];
    expect(buttons.every((b) => b.disabled)).toBe(true);
    expect(panel.querySelectorAll(".recorded-verdict")).toHaveLength(1);
    expect(panel.querySelector(".recorded-verdict")!.textContent).toContain("No preference");
  });

  it("shows a blocking screen for unknown volunteers", async () => {
    const server = new MockEvalServer(3);
    server.roster = new Set(["someone-else"]);
    const root = mount(server);
    await login(root, "stranger");
    expect(root.querySelector(".error-screen")).not.toBeNull();
    expect(root.querySelector(".verdict-controls")).toBeNull();
  });

  it("offers a retry prompt after a network failure on load", async () => {
    const server = new MockEvalServer(3);
    server.failNext(2);
    const root = mount(server);
    const input = root.querySelector<HTMLInputElement>("#volunteer-id")!;
    input.value = "vol-1";
    root.querySelector<HTMLButtonElement>("button.start")!.click();
    await waitFor(() => root.querySelector(".retry-screen") !== null, "retry screen");

    root.querySelector<HTMLButtonElement>("button.retry")!.click();
    await waitFor(() => root.querySelector(".item-panel") !== null, "recovered assignment");
  });

  it("runs the full 25-item session: progress 25/25, exact score, duplicate reconciled", async () => {
    const server = new MockEvalServer(25);
    // verdict plan: 15 candidate-better, 5 equal, 5 candidate-worse -> 70.0
    const plan = new Map<string, "better" | "equal" | "worse">();
    server.items.forEach((item, index) => {
      plan.set(item.item_id, index < 15 ? "better" : index < 20 ? "equal" : "worse");
    });

    const tabA = mount(server);
    await login(tabA, "vol-1");
    expect(progressText(tabA)).toContain("0/25");

    // submit the first 24 verdicts in tab A (the panel auto-advances)
    for (let done = 0; done < 24; done++) {
      const itemId = currentItemId(tabA);
      clickVerdict(tabA, itemId, verdictFor(server, itemId, plan.get(itemId)!));
      await waitFor(
        () => progressText(tabA).includes(`${done + 1}/25`),
        `progress ${done + 1}/25`,
      );
    }

    // a second tab resumes from server truth: 24 done, one pending
    const tabB = mount(server);
    await login(tabB, "vol-1");
    expect(progressText(tabB)).toContain("24/25");
    expect(tabB.querySelectorAll(".item-list .item.chosen")).toHaveLength(24);

    const lastId = currentItemId(tabB);
    clickVerdict(tabB, lastId, verdictFor(server, lastId, plan.get(lastId)!));
    await waitFor(() => tabB.querySelector(".complete-screen") !== null, "tab B completion");
    expect(progressText(tabB)).toContain("25/25");
    expect(tabB.querySelectorAll("button.verdict")).toHaveLength(0); // no further edits

    // tab A is stale and tries a conflicting verdict for the same item
    const tabBVerdict = verdictFor(server, lastId, plan.get(lastId)!);
    const conflicting: Verdict = tabBVerdict === "equal" ? "left-better" : "equal";
    clickVerdict(tabA, lastId, conflicting);
    await waitFor(() => tabA.querySelector(".complete-screen") !== null, "tab A reconciled");
    expect(progressText(tabA)).toContain("25/25");
    expect(server.choices.size).toBe(25);
    // the verdict that stuck is tab B's planned one, not tab A's
    const stored = server.choices.get(`vol-1|${lastId}`)!;
    expect(resolveForCandidate(stored.verdict, server.items.find((i) => i.item_id === lastId)!.left_is)).toBe(
      plan.get(lastId),
    );

    // the report over those choices carries the hand-computed score
    const response = await server.fetchFn("/eval/reports/H", {
      headers: { "X-Volunteer-Id": "vol-1" },
    });
    const report = await response.json();
    expect(report.n_choices).toBe(25);
    expect(report.score).toBe(70.0);
  });

  it("reload reproduces server truth exactly", async () => {
    const server = new MockEvalServer(4);
    const first = mount(server);
    await login(first, "vol-1");
    const target = currentItemId(first);
    clickVerdict(first, target, "left-better");
    await waitFor(() => progressText(first).includes("1/4"), "first tab progress");

    const reloaded = mount(server);
    await login(reloaded, "vol-1");
    expect(progressText(reloaded)).toContain("1/4");
    reloaded
      .querySelector<HTMLButtonElement>(`.item-list button[data-item-id="${target}"]`)!
      .click();
    await waitFor(() => currentItemId(reloaded) === target, "reloaded item visible");
    const panel = reloaded.querySelector<HTMLElement>(`.item-panel[data-item-id="${target}"]`)!;
    expect(panel.querySelector(".recorded-verdict")!.textContent).toContain("Left is better");
  });
});
