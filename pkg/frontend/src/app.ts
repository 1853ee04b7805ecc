import { ApiClient } from "./api.js";
import { AnnotationSession } from "./state.js";
import {
  DIMENSION_LABELS,
  VERDICTS,
  VERDICT_LABELS,
  type Dimension,
  type AssignmentItem,
  type Verdict,
} from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export interface AppOptions {
  baseUrl?: string;
  fetchFn?: typeof fetch;
}

/** Mounts the annotator client. The login screen configures the volunteer id
 * (sent as a static header on every request) and quality dimension. */
export function createApp(root: HTMLElement, options: AppOptions = {}): void {
  root.innerHTML = "";
  root.appendChild(renderLogin(root, options));
}

function renderLogin(root: HTMLElement, options: AppOptions): HTMLElement {
  const panel = el("div", "login");
  panel.appendChild(el("h1", undefined, "Dialogue comparison"));
  const volunteerInput = el("input");
  volunteerInput.id = "volunteer-id";
  volunteerInput.placeholder = "volunteer id";
  const dimensionSelect = el("select");
  dimensionSelect.id = "dimension";
  for (const [code, label] of Object.entries(DIMENSION_LABELS)) {
    const option = el("option", undefined, label);
    option.value = code;
    dimensionSelect.appendChild(option);
  }
  const start = el("button", "start", "Start");
  start.addEventListener("click", () => {
    const volunteerId = volunteerInput.value.trim();
    if (!volunteerId) return;
    const api = new ApiClient({
      volunteerId,
      baseUrl: options.baseUrl,
      fetchFn: options.fetchFn,
    });
    const session = new AnnotationSession(api);
    mountSession(root, session);
    void session.load(dimensionSelect.value as Dimension);
  });
  panel.append(volunteerInput, dimensionSelect, start);
  return panel;
}

export function mountSession(root: HTMLElement, session: AnnotationSession): void {
  const render = () => {
    root.innerHTML = "";
    root.appendChild(renderSession(session));
  };
  session.subscribe(render);
  render();
}

function renderSession(session: AnnotationSession): HTMLElement {
  const snap = session.snapshot();
  const container = el("div", "annotator");

  if (snap.phase === "idle" || snap.phase === "loading") {
    container.appendChild(el("p", "status", "Loading assignment…"));
    return container;
  }
  if (snap.phase === "blocked") {
    const blocker = el("div", "error-screen");
    blocker.appendChild(el("h2", undefined, "Access denied"));
    blocker.appendChild(el("p", undefined, snap.notice ?? "Unknown volunteer."));
    container.appendChild(blocker);
    return container;
  }
  if (snap.phase === "load-failed") {
    const prompt = el("div", "retry-screen");
    prompt.appendChild(el("p", undefined, snap.notice ?? "Network failure."));
    const retry = el("button", "retry", "Retry");
    retry.addEventListener("click", () => void session.retry());
    prompt.appendChild(retry);
    container.appendChild(prompt);
    return container;
  }

  const view = snap.view;
  if (!view) return container;

  const header = el("header");
  header.appendChild(
    el("h1", undefined, `${DIMENSION_LABELS[view.dimension]} — ${view.volunteer_id}`),
  );
  const progress = el(
    "p",
    "progress",
    `Progress: ${view.progress.done}/${view.progress.total}`,
  );
  progress.id = "progress";
  header.appendChild(progress);
  container.appendChild(header);

  if (snap.notice) container.appendChild(el("p", "notice", snap.notice));

  container.appendChild(renderRubric(session));

  if (snap.phase === "complete") {
    const doneScreen = el("div", "complete-screen");
    doneScreen.appendChild(el("h2", undefined, "All items judged — thank you!"));
    doneScreen.appendChild(
      el("p", undefined, "Your choices are recorded and can no longer be edited."),
    );
    container.appendChild(doneScreen);
    return container;
  }

  const layout = el("div", "layout");
  layout.appendChild(renderItemList(session));
  const current = snap.currentItemId ? session.item(snap.currentItemId) : undefined;
  if (current) layout.appendChild(renderItem(session, current));
  container.appendChild(layout);
  return container;
}

function renderRubric(session: AnnotationSession): HTMLElement {
  const snap = session.snapshot();
  const details = el("details", "rubric");
  details.open = true;
  const summary = el("summary", undefined, "Evaluation criteria");
  details.appendChild(summary);
  const list = el("ul");
  for (const criterion of snap.rubric) {
    list.appendChild(el("li", "criterion", `${criterion.id} ${criterion.text}`));
  }
  details.appendChild(list);
  return details;
}

function renderItemList(session: AnnotationSession): HTMLElement {
  const snap = session.snapshot();
  const nav = el("nav", "item-list");
  for (const item of snap.view?.items ?? []) {
    const button = el(
      "button",
      item.status === "chosen" ? "item chosen" : "item pending",
      `${item.item_id} ${item.status === "chosen" ? "✓" : "•"}`,
    );
    button.dataset.itemId = item.item_id;
    button.addEventListener("click", () => session.select(item.item_id));
    nav.appendChild(button);
  }
  return nav;
}

function renderItem(session: AnnotationSession, item: AssignmentItem): HTMLElement {
  const snap = session.snapshot();
  const panel = el("section", "item-panel");
  panel.dataset.itemId = item.item_id;
  panel.appendChild(el("h2", undefined, "Discussion topic"));
  panel.appendChild(el("p", "question", item.Q));
  panel.appendChild(el("h3", undefined, "Student answer"));
  panel.appendChild(el("p", "answer", item.A));

  const pair = el("div", "pair");
  const leftBox = el("article", "response left");
  leftBox.appendChild(el("h4", undefined, "Response A (left)"));
  leftBox.appendChild(el("p", undefined, item.left));
  const rightBox = el("article", "response right");
  rightBox.appendChild(el("h4", undefined, "Response B (right)"));
  rightBox.appendChild(el("p", undefined, item.right));
  pair.append(leftBox, rightBox);
  panel.appendChild(pair);

  const controls = el("div", "verdict-controls");
  const chosen = item.status === "chosen";
  const busy = snap.inFlightItemId !== null;
  for (const verdict of VERDICTS) {
    const button = el("button", "verdict", VERDICT_LABELS[verdict]);
    button.dataset.verdict = verdict;
    button.disabled = chosen || busy;
    button.addEventListener("click", () => void session.choose(item.item_id, verdict));
    controls.appendChild(button);
  }
  panel.appendChild(controls);

  if (chosen && item.verdict) {
    panel.appendChild(
      el("p", "recorded-verdict", `Recorded: ${VERDICT_LABELS[item.verdict]}`),
    );
  }
  return panel;
}
