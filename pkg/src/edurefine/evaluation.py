"""Blinded pairwise evaluation protocol.

Candidate and baseline replies are shown side by side with the side chosen by
a seeded coin flip; volunteers judge better/equal/worse on one quality
dimension at a time. Judgments score 4/2/0 for the candidate, normalized to
0-100 so that all-equal lands exactly on the 50.0 parity point, and
inter-annotator agreement is reported as Fleiss' kappa over the three verdict
categories.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path

ASSIGNMENT_SIZE = 25

LEFT_BETTER = "left-better"
EQUAL = "equal"
RIGHT_BETTER = "right-better"
VERDICTS = (LEFT_BETTER, EQUAL, RIGHT_BETTER)

CANDIDATE = "candidate"
BASELINE = "baseline"

# candidate-relative categories, fixed order for kappa matrices
BETTER = "better"
WORSE = "worse"
CATEGORIES = (BETTER, EQUAL, WORSE)

_POINTS = {BETTER: 4, EQUAL: 2, WORSE: 0}


class EvalError(Exception):
    pass


class InvalidRecordError(EvalError):
    pass


class UnknownItemError(EvalError):
    pass


class DuplicateChoiceError(EvalError):
    pass


class RowSumMismatchError(EvalError):
    pass


class Dimension(str, Enum):
    HUMANIZED = "H"
    TEACHING = "T"
    SAFETY = "S"


_PREFIX_TO_DIMENSION = {"1": Dimension.HUMANIZED, "2": Dimension.TEACHING, "3": Dimension.SAFETY}


@dataclass(frozen=True)
class RubricCriterion:
    id: str
    dimension: Dimension
    text: str

    def __post_init__(self) -> None:
        prefix = self.id.split(".", 1)[0]
        if _PREFIX_TO_DIMENSION.get(prefix) is not self.dimension:
            raise ValueError(f"criterion {self.id} inconsistent with dimension {self.dimension}")


def load_rubric(path: str | Path | None = None) -> list[RubricCriterion]:
    rubric_path = Path(path) if path else Path(__file__).parent / "assets" / "rubric.json"
    rows = json.loads(rubric_path.read_text(encoding="utf-8"))
    criteria = [
        RubricCriterion(id=row["id"], dimension=Dimension(row["dimension"]), text=row["text"])
        for row in rows
    ]
    ids = [c.id for c in criteria]
    if len(set(ids)) != len(ids):
        raise EvalError("rubric criterion ids must be unique")
    return criteria


@dataclass(frozen=True)
class EvalItem:
    """A blinded response pair. `left_is` never reaches annotator payloads."""

    item_id: str
    Q: str
    A: str
    left: str
    right: str
    left_is: str  # CANDIDATE or BASELINE; server-side only

    def __post_init__(self) -> None:
        if self.left == self.right:
            raise InvalidRecordError("left and right must differ")
        if self.left_is not in (CANDIDATE, BASELINE):
            raise ValueError(f"left_is must be candidate/baseline, got {self.left_is!r}")

    def to_annotator_payload(self) -> dict:
        return {"item_id": self.item_id, "Q": self.Q, "A": self.A,
                "left": self.left, "right": self.right}


@dataclass(frozen=True)
class Assignment:
    volunteer_id: str
    dimension: Dimension
    item_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(set(self.item_ids)) != len(self.item_ids):
            raise ValueError("assignment items must be distinct")


@dataclass(frozen=True)
class Choice:
    volunteer_id: str
    item_id: str
    verdict: str
    submitted_at: str
    dimension: Dimension

    def __post_init__(self) -> None:
        if self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")


@dataclass(frozen=True)
class ScoreReport:
    dimension: Dimension
    n_choices: int
    score: float
    kappa: float | None


def build_eval_set(records: list[dict], seed: int) -> list[EvalItem]:
    """Blind each (Q, A, candidate, baseline) record with a seeded coin flip.

    Records use the preference-record field names: `chosen` is the candidate
    reply under test, `rejected` the baseline.
    """
    if not records:
        raise ValueError("records must be non-empty")
    rng = random.Random(seed)
    items = []
    for i, row in enumerate(records):
        candidate, baseline = row["chosen"], row["rejected"]
        if candidate == baseline:
            raise InvalidRecordError(f"record {i}: identical candidate and baseline")
        candidate_left = rng.random() < 0.5
        items.append(
            EvalItem(
                item_id=f"item-{i:06d}",
                Q=row["Q"],
                A=row["A"],
                left=candidate if candidate_left else baseline,
                right=baseline if candidate_left else candidate,
                left_is=CANDIDATE if candidate_left else BASELINE,
            )
        )
    return items


def sample_assignment(
    items: list[EvalItem],
    volunteer_id: str,
    dimension: Dimension,
    seed: int,
) -> Assignment:
    """Uniform sample without replacement of min(25, pool size) items."""
    if not items:
        raise ValueError("items must be non-empty")
    rng = random.Random(seed)
    take = min(ASSIGNMENT_SIZE, len(items))
    picked = rng.sample(items, take)
    return Assignment(
        volunteer_id=volunteer_id,
        dimension=dimension,
        item_ids=tuple(item.item_id for item in picked),
    )


def resolve_for_candidate(verdict: str, left_is: str) -> str:
    """Map a left/right verdict to better/equal/worse for the candidate."""
    if verdict == EQUAL:
        return EQUAL
    candidate_on_left = left_is == CANDIDATE
    if verdict == LEFT_BETTER:
        return BETTER if candidate_on_left else WORSE
    return WORSE if candidate_on_left else BETTER


def score(choices: list[Choice], hidden_maps: dict[str, str]) -> float:
    """4/2/0 points per choice for the candidate, normalized to 0-100."""
    if not choices:
        raise ValueError("choices must be non-empty")
    seen: set[tuple[str, str]] = set()
    points = 0
    for choice in choices:
        key = (choice.volunteer_id, choice.item_id)
        if key in seen:
            raise DuplicateChoiceError(f"duplicate choice for {key}")
        seen.add(key)
        if choice.item_id not in hidden_maps:
            raise UnknownItemError(f"no hidden map for item {choice.item_id!r}")
        points += _POINTS[resolve_for_candidate(choice.verdict, hidden_maps[choice.item_id])]
    return 100.0 * points / (4 * len(choices))


def fleiss_kappa(ratings: list[list[int]], n: int) -> float:
    """Chance-corrected agreement for N items rated by n raters over the three
    verdict categories; rows are per-item category counts summing to n."""
    if n < 2:
        raise EvalError("fleiss kappa needs at least 2 raters")
    if not ratings:
        raise EvalError("ratings must contain at least one item")
    for row in ratings:
        if len(row) != len(CATEGORIES):
            raise EvalError(f"expected {len(CATEGORIES)} categories per row, got {len(row)}")
        if any(c < 0 for c in row):
            raise RowSumMismatchError("negative category count")
        if sum(row) != n:
            raise RowSumMismatchError(f"row sums to {sum(row)}, expected {n}")
    return _kappa_general([(row, n) for row in ratings])


def _kappa_general(rows: list[tuple[list[int], int]]) -> float:
    """Kappa over per-item (counts, rater count) rows; handles unequal panel
    sizes and reduces to the standard statistic when sizes are uniform."""
    big_n = len(rows)
    total_ratings = sum(n_i for _, n_i in rows)
    agreement = [
        (sum(c * c for c in counts) - n_i) / (n_i * (n_i - 1)) for counts, n_i in rows
    ]
    p_bar = sum(agreement) / big_n
    marginals = [
        sum(counts[j] for counts, _ in rows) / total_ratings for j in range(len(CATEGORIES))
    ]
    p_expected = sum(p * p for p in marginals)
    if abs(1.0 - p_expected) < 1e-12:
        # all raters picked one category everywhere: define as full agreement
        return 1.0
    return (p_bar - p_expected) / (1.0 - p_expected)


class EvalHarness:
    """Holds the blinded items, per-volunteer assignments, and the choice log."""

    def __init__(self, rubric: list[RubricCriterion] | None = None) -> None:
        self.rubric = rubric if rubric is not None else load_rubric()
        self.items: dict[str, EvalItem] = {}
        self.assignments: dict[tuple[str, Dimension], Assignment] = {}
        self.choices: dict[tuple[str, str], Choice] = {}

    # ----------------------------------------------------------------- setup

    def build_set(self, records: list[dict], seed: int) -> list[EvalItem]:
        built = build_eval_set(records, seed)
        self.items = {item.item_id: item for item in built}
        self.assignments.clear()
        self.choices.clear()
        return built

    def add_items(self, items: list[EvalItem]) -> None:
        self.items = {item.item_id: item for item in items}

    def hidden_maps(self) -> dict[str, str]:
        return {item_id: item.left_is for item_id, item in self.items.items()}

    # ----------------------------------------------------------- assignments

    def assignment_for(
        self, volunteer_id: str, dimension: Dimension, seed: int
    ) -> Assignment:
        key = (volunteer_id, dimension)
        if key not in self.assignments:
            if not self.items:
                raise EvalError("no evaluation items built")
            pool = [self.items[item_id] for item_id in sorted(self.items)]
            self.assignments[key] = sample_assignment(pool, volunteer_id, dimension, seed)
        return self.assignments[key]

    def restore_assignment(self, assignment: Assignment) -> None:
        self.assignments[(assignment.volunteer_id, assignment.dimension)] = assignment

    def assignment_view(self, assignment: Assignment) -> dict:
        """Annotator-facing payload; carries no side mapping."""
        items = []
        done = 0
        for item_id in assignment.item_ids:
            choice = self.choices.get((assignment.volunteer_id, item_id))
            payload = self.items[item_id].to_annotator_payload()
            payload["status"] = "chosen" if choice else "pending"
            payload["verdict"] = choice.verdict if choice else None
            if choice:
                done += 1
            items.append(payload)
        return {
            "volunteer_id": assignment.volunteer_id,
            "dimension": assignment.dimension.value,
            "items": items,
            "progress": {"done": done, "total": len(assignment.item_ids)},
        }

    # --------------------------------------------------------------- choices

    def submit(
        self,
        volunteer_id: str,
        item_id: str,
        verdict: str,
        dimension: Dimension | None = None,
        submitted_at: str | None = None,
    ) -> Choice:
        """Record one verdict; a second submission for the same (volunteer,
        item) is rejected and leaves the stored choice untouched."""
        if item_id not in self.items:
            raise UnknownItemError(f"unknown item {item_id!r}")
        key = (volunteer_id, item_id)
        if key in self.choices:
            raise DuplicateChoiceError(f"choice already recorded for {key}")
        if dimension is None:
            owners = [
                a.dimension
                for a in self.assignments.values()
                if a.volunteer_id == volunteer_id and item_id in a.item_ids
            ]
            if len(owners) != 1:
                raise EvalError(
                    f"cannot infer dimension for {key}; supply it explicitly"
                )
            dimension = owners[0]
        choice = Choice(
            volunteer_id=volunteer_id,
            item_id=item_id,
            verdict=verdict,
            submitted_at=submitted_at or datetime.now(timezone.utc).isoformat(),
            dimension=dimension,
        )
        self.choices[key] = choice
        return choice

    # ---------------------------------------------------------------- report

    def report(self, dimension: Dimension, per_volunteer: bool = False) -> ScoreReport:
        """Pooled score over all the dimension's choices plus kappa over items
        rated by at least two volunteers."""
        chosen = [c for c in self.choices.values() if c.dimension is dimension]
        if not chosen:
            raise EvalError(f"no choices recorded for dimension {dimension.value}")
        maps = self.hidden_maps()
        if per_volunteer:
            volunteers = sorted({c.volunteer_id for c in chosen})
            scores = [
                score([c for c in chosen if c.volunteer_id == v], maps) for v in volunteers
            ]
            pooled = sum(scores) / len(scores)
        else:
            pooled = score(chosen, maps)

        by_item: dict[str, list[Choice]] = {}
        for choice in chosen:
            by_item.setdefault(choice.item_id, []).append(choice)
        rows = []
        for item_id in sorted(by_item):
            raters = by_item[item_id]
            if len(raters) < 2:
                continue
            counts = [0, 0, 0]
            for choice in raters:
                category = resolve_for_candidate(choice.verdict, maps[item_id])
                counts[CATEGORIES.index(category)] += 1
            rows.append((counts, len(raters)))
        kappa = _kappa_general(rows) if rows else None
        return ScoreReport(
            dimension=dimension, n_choices=len(chosen), score=pooled, kappa=kappa
        )
