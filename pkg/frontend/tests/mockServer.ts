/** In-memory stand-in for the evaluation service, mirroring its wire format:
 * blinded assignment views, one-choice-per-(volunteer,item) enforcement, and
 * 4/2/0 scoring resolved against the hidden side map. */

import type { Dimension, Verdict } from "../src/types.js";

export interface HiddenItem {
  item_id: string;
  Q: string;
  A: string;
  left: string;
  right: string;
  left_is: "candidate" | "baseline";
}

interface StoredChoice {
  volunteer_id: string;
  item_id: string;
  verdict: Verdict;
  dimension: Dimension;
}

const POINTS: Record<string, number> = { better: 4, equal: 2, worse: 0 };

export function makeItems(count: number): HiddenItem[] {
  const items: HiddenItem[] = [];
  for (let i = 0; i < count; i++) {
    const id = `item-${String(i).padStart(6, "0")}`;
    const leftIsCandidate = i % 2 === 0;
    const cand = `refined reply ${i}`;
    const base = `plain reply ${i}`;
    items.push({
      item_id: id,
      Q: `topic ${i}`,
      A: `student answer ${i}`,
      left: leftIsCandidate ? cand : base,
      right: leftIsCandidate ? base : cand,
      left_is: leftIsCandidate ? "candidate" : "baseline",
    });
  }
  return items;
}

export function resolveForCandidate(
  verdict: Verdict,
  leftIs: "candidate" | "baseline",
): "better" | "equal" | "worse" {
  if (verdict === "equal") return "equal";
  const candidateLeft = leftIs === "candidate";
  if (verdict === "left-better") return candidateLeft ? "better" : "worse";
  return candidateLeft ? "worse" : "better";
}

export class MockEvalServer {
  readonly items: HiddenItem[];
  readonly choices = new Map<string, StoredChoice>();
  readonly rubric = [
    { id: "1.1", dimension: "H", text: "Reply speaks as a teacher, warmly." },
    { id: "1.2", dimension: "H", text: "Vocabulary suits the student." },
    { id: "2.1", dimension: "T", text: "Reply sparks further discussion." },
    { id: "3.1", dimension: "S", text: "Reply stays civil and age-appropriate." },
  ];
  roster: Set<string> | null = null;
  requestCount = 0;
  private failNextCount = 0;
  private delayGate: Promise<void> | null = null;

  constructor(itemCount = 25) {
    this.items = makeItems(itemCount);
  }

  failNext(n: number): void {
    this.failNextCount = n;
  }

  /** All requests await this promise when set (for in-flight testing). */
  holdRequests(): () => void {
    let release!: () => void;
    this.delayGate = new Promise((resolve) => {
      release = resolve;
    });
    return () => {
      this.delayGate = null;
      release();
    };
  }

  score(dimension: Dimension): { n: number; score: number } {
    const relevant = [...this.choices.values()].filter((c) => c.dimension === dimension);
    let points = 0;
    for (const choice of relevant) {
      const item = this.items.find((i) => i.item_id === choice.item_id)!;
      points += POINTS[resolveForCandidate(choice.verdict, item.left_is)]!;
    }
    return { n: relevant.length, score: (100 * points) / (4 * relevant.length) };
  }

  readonly fetchFn: typeof fetch = async (input, init) => {
    this.requestCount += 1;
    if (this.failNextCount > 0) {
      this.failNextCount -= 1;
      throw new TypeError("fetch failed");
    }
    if (this.delayGate) await this.delayGate;

    const url = new URL(String(input), "http://mock.test");
    const headers = new Headers(init?.headers);
    const volunteer = headers.get("X-Volunteer-Id") ?? "";
    const method = init?.method ?? "GET";

    if (this.roster && !this.roster.has(volunteer)) {
      return json(403, { detail: { error: "unknown-volunteer", detail: volunteer } });
    }

    if (method === "GET" && url.pathname === "/eval/assignments") {
      const dimension = url.searchParams.get("dimension") as Dimension;
      return json(200, this.assignmentView(volunteer, dimension));
    }
    if (method === "GET" && url.pathname === "/eval/rubric") {
      const dimension = url.searchParams.get("dimension");
      return json(
        200,
        this.rubric.filter((c) => !dimension || c.dimension === dimension),
      );
    }
    if (method === "POST" && url.pathname === "/eval/choices") {
      const body = JSON.parse(String(init?.body)) as { item_id: string; verdict: Verdict };
      const item = this.items.find((i) => i.item_id === body.item_id);
      if (!item) return json(404, { detail: { error: "unknown-item", detail: body.item_id } });
      const key = `${volunteer}|${body.item_id}`;
      if (this.choices.has(key)) {
        return json(409, { detail: { error: "duplicate-choice", detail: key } });
      }
      this.choices.set(key, {
        volunteer_id: volunteer,
        item_id: body.item_id,
        verdict: body.verdict,
        dimension: "H",
      });
      const view = this.assignmentView(volunteer, "H");
      return json(200, {
        accepted: true,
        item_id: body.item_id,
        verdict: body.verdict,
        progress: view.progress,
      });
    }
    const reportMatch = url.pathname.match(/^\/eval\/reports\/(\w)$/);
    if (method === "GET" && reportMatch) {
      const dimension = reportMatch[1] as Dimension;
      const { n, score } = this.score(dimension);
      return json(200, { dimension, n_choices: n, score, kappa: null });
    }
    return json(404, { detail: { error: "not-found", detail: url.pathname } });
  };

  private assignmentView(volunteer: string, dimension: Dimension) {
    return {
      volunteer_id: volunteer,
      dimension,
      items: this.items.map((item) => {
        const choice = this.choices.get(`${volunteer}|${item.item_id}`);
        return {
          item_id: item.item_id,
          Q: item.Q,
          A: item.A,
          left: item.left,
          right: item.right,
          status: choice ? "chosen" : "pending",
          verdict: choice ? choice.verdict : null,
        };
      }),
      progress: {
        done: this.items.filter((i) => this.choices.has(`${volunteer}|${i.item_id}`)).length,
        total: this.items.length,
      },
    };
  }
}

function json(status: number, payload: unknown): Response {
  return new Response(JSON.stringify(payload), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}
