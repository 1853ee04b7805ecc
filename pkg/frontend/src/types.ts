export type Dimension = "H" | "T" | "S";

export const DIMENSION_LABELS: Record<Dimension, string> = {
  H: "Humanized communication",
  T: "Teaching expertise",
  S: "Safety & ethics",
};

export type Verdict = "left-better" | "equal" | "right-better";

export const VERDICTS: Verdict[] = ["left-better", "equal", "right-better"];

export const VERDICT_LABELS: Record<Verdict, string> = {
  "left-better": "Left is better",
  equal: "No preference",
  "right-better": "Right is better",
};

export interface AssignmentItem {
  item_id: string;
  Q: string;
  A: string;
  left: string;
  right: string;
  status: "pending" | "chosen";
  verdict: Verdict | null;
}

export interface Progress {
  done: number;
  total: number;
}

/** Blinded view: carries no field identifying which side is the candidate. */
export interface AssignmentView {
  volunteer_id: string;
  dimension: Dimension;
  items: AssignmentItem[];
  progress: Progress;
}

export interface RubricCriterion {
  id: string;
  dimension: Dimension;
  text: string;
}
