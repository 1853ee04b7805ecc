import type {
  AssignmentItem,
  AssignmentView,
  Dimension,
  Progress,
  RubricCriterion,
  Verdict,
} from "./types.js";

export class ApiError extends Error {
  constructor(message: string, readonly code: string, readonly status: number) {
    super(message);
  }
}

export class UnknownVolunteerError extends ApiError {}

export class DuplicateChoiceError extends ApiError {}

export class NetworkError extends Error {}

export interface ChoiceAck {
  accepted: boolean;
  item_id: string;
  verdict: Verdict;
  progress: Progress | null;
}

export interface ApiOptions {
  volunteerId: string;
  baseUrl?: string;
  fetchFn?: typeof fetch;
}

function errorCode(payload: unknown): string {
  if (payload && typeof payload === "object") {
    const detail = (payload as { detail?: unknown }).detail;
    if (detail && typeof detail === "object") {
      const code = (detail as { error?: unknown }).error;
      if (typeof code === "string") return code;
    }
  }
  return "unknown-error";
}

/** Picks only the known fields out of a server item row, so nothing beyond
 * the blinded view is ever stored client-side. */
function sanitizeItem(row: Record<string, unknown>): AssignmentItem {
  return {
    item_id: String(row.item_id),
    Q: String(row.Q),
    A: String(row.A),
    left: String(row.left),
    right: String(row.right),
    status: row.status === "chosen" ? "chosen" : "pending",
    verdict: (row.verdict ?? null) as Verdict | null,
  };
}

export class ApiClient {
  private readonly volunteerId: string;
  private readonly baseUrl: string;
  private readonly fetchFn: typeof fetch;

  constructor(options: ApiOptions) {
    this.volunteerId = options.volunteerId;
    this.baseUrl = (options.baseUrl ?? "").replace(/\/$/, "");
    this.fetchFn = options.fetchFn ?? fetch.bind(globalThis);
  }

  private headers(): Record<string, string> {
    return {
      "Content-Type": "application/json",
      "X-Volunteer-Id": this.volunteerId,
    };
  }

  private async request(path: string, init?: RequestInit): Promise<Response> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, {
        ...init,
        headers: { ...this.headers(), ...(init?.headers ?? {}) },
      });
    } catch {
      throw new NetworkError(`request to ${path} failed`);
    }
    if (response.ok) return response;
    const payload = await response.json().catch(() => null);
    const code = errorCode(payload);
    if (code === "unknown-volunteer") {
      throw new UnknownVolunteerError("volunteer not on the roster", code, response.status);
    }
    if (code === "duplicate-choice") {
      throw new DuplicateChoiceError("item already judged", code, response.status);
    }
    throw new ApiError(`server rejected ${path}`, code, response.status);
  }

  async loadAssignment(dimension: Dimension): Promise<AssignmentView> {
    const response = await this.request(`/eval/assignments?dimension=${dimension}`);
    const raw = (await response.json()) as Record<string, unknown>;
    const items = (raw.items as Record<string, unknown>[]).map(sanitizeItem);
    return {
      volunteer_id: String(raw.volunteer_id),
      dimension: raw.dimension as Dimension,
      items,
      progress: raw.progress as Progress,
    };
  }

  async loadRubric(dimension: Dimension): Promise<RubricCriterion[]> {
    const response = await this.request(`/eval/rubric?dimension=${dimension}`);
    return (await response.json()) as RubricCriterion[];
  }

  /** Submits one verdict; a transport failure is retried exactly once before
   * surfacing. Server-side rejections (duplicate etc.) are never retried. */
  async submitChoice(itemId: string, verdict: Verdict): Promise<ChoiceAck> {
    const init: RequestInit = {
      method: "POST",
      body: JSON.stringify({ item_id: itemId, verdict }),
    };
    try {
      const response = await this.request("/eval/choices", init);
      return (await response.json()) as ChoiceAck;
    } catch (error) {
      if (!(error instanceof NetworkError)) throw error;
      const response = await this.request("/eval/choices", init);
      return (await response.json()) as ChoiceAck;
    }
  }
}
