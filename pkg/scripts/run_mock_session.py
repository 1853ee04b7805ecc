"""End-to-end demo on the scripted mock backends: open a tutoring session,
answer two topics, and print the refinement trace summaries.

Usage: python scripts/run_mock_session.py [data_dir]
"""

from __future__ import annotations

import sys
import tempfile

from edurefine.config import default_mock_config
from edurefine.service import ServiceState


def main(data_dir: str | None = None) -> None:
    data_dir = data_dir or tempfile.mkdtemp(prefix="edurefine-demo-")
    state = ServiceState(default_mock_config(data_dir))
    session = state.start_session(
        state.config.scenario, "Hao, 12, builds model ships with his grandfather."
    )
    print(f"session {session.session_id}")
    print(f"opening topic: {session.current_topic}\n")

    for answer in (
        "I think he kept a calendar post so he would not lose himself.",
        "The goats mattered more than the gold because gold cannot be eaten.",
    ):
        final, trace_id, next_topic = state.post_answer(session.session_id, answer)
        trace = state.trace_store.load(trace_id)
        print(f"student: {answer}")
        print(f"refined reply: {final}")
        print(f"trace {trace_id}: stages {[s['role'] for s in trace['stages']]}, "
              f"refs per stage {[len(s['accepted_refs']) for s in trace['stages']]}")
        print(f"next topic: {next_topic}\n")
    print(f"data dir: {data_dir}")


if __name__ == "__main__":
    main(*sys.argv[1:])
