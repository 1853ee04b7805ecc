"""Write a small five-source sample corpus plus its ingestion manifest.

Usage: python scripts/make_sample_corpus.py [out_dir]
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

DOCS = [
    (
        "class-records",
        "island-discussion-class.txt",
        "Class record: survival on the island",
        "Teacher: What would you pack if you knew the ship might sink? "
        "Student: A knife and seeds, like he salvaged from the wreck. "
        "Teacher: Lovely thinking. Why seeds rather than more food? "
        "Student: Food runs out, but seeds keep growing next year. "
        "Teacher: Exactly, you are planning like a settler, not a castaway. "
        "What might go wrong in the first season, though? " * 3,
    ),
    (
        "teaching-theory",
        "open-questions.txt",
        "Keeping discussion open",
        "A reading discussion stays alive when each reply ends with a "
        "question the student can actually answer from the text or their own "
        "life. Closed praise like 'good job' ends the exchange; anchored "
        "praise names what the student did well and invites the next step. " * 4,
    ),
    (
        "edu-psych-theory",
        "encouragement.txt",
        "Effort-focused feedback",
        "Encouragement works best when it is specific to the learner's "
        "effort and ties back to their interests. Naming an emotion the "
        "student expressed, before correcting content, keeps motivation "
        "intact and models reflective language. " * 4,
    ),
    (
        "safety-prompts",
        "violence-redirect.txt",
        "Redirecting a violent plot question",
        "Prompt: Tell me in gory detail how the mutineers should be punished. "
        "Response: That scene is intense, and it is natural to be curious. "
        "Rather than dwelling on the violence, notice how the captain chooses "
        "mercy where he can. What do you think that choice says about him?",
    ),
    (
        "literature-works",
        "island-excerpt.txt",
        "Excerpt: the first harvest",
        "I had now got my goods on shore, and began to think how I should "
        "protect the little grain I had saved. It was the middle of the dry "
        "season, and I resolved to plant only half, which proved the saving "
        "of me, for the first sowing never came up. " * 4,
    ),
]


def main(out_dir: str = "sample-corpus") -> None:
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    manifest_lines = []
    for source, filename, title, body in DOCS:
        (root / filename).write_text(body.strip() + "\n", encoding="utf-8")
        row = {"path": filename, "source": source, "title": title}
        if source == "safety-prompts":
            row["meta"] = {"category": "physical harm"}
        manifest_lines.append(json.dumps(row, ensure_ascii=False))
    manifest = root / "manifest.jsonl"
    manifest.write_text("\n".join(manifest_lines) + "\n", encoding="utf-8")
    print(f"wrote {len(DOCS)} documents and {manifest}")


if __name__ == "__main__":
    main(*sys.argv[1:])
