"""Independent correctness oracle for feedback exploitation.

A feedback-enabled run is correct when its sink output S relates to the
reference output S_R (same plan, feedback disabled) by multiset
containment:

    S_R - subset(S_R, f)  <=  S  <=  S_R

for f the union of all feedback patterns sent during the run: nothing may
appear that the reference run would not produce, and nothing outside the
feedback-described subset may go missing.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from punctstream.core import Pattern
from punctstream.runtime import DeterministicEngine, Plan, RunReport


@dataclass
class OracleResult:
    ok: bool
    witness: Optional[str]
    reference: RunReport
    observed: RunReport
    patterns: list

    def __bool__(self):
        return self.ok


def def1_check(
    reference_rows: Sequence,
    observed_rows: Sequence,
    feedback_patterns: Sequence[Pattern],
) -> tuple:
    """Return (ok, witness) for the containment above, multiset semantics."""
    ref = Counter(reference_rows)
    obs = Counter(observed_rows)
    extra = obs - ref
    if extra:
        row = next(iter(extra))
        return False, f"row not in reference output: {row!r}"
    matchers = [p.matcher() for p in feedback_patterns]
    missing = ref - obs
    for row, n in missing.items():
        if not any(m(row) for m in matchers):
            return False, (
                f"row missing but outside every feedback pattern: {row!r} (x{n})"
            )
    return True, None


def oracle_check(
    make_plan: Callable[[], Plan],
    registry: dict,
    sink_id: str = "out",
    patterns: Optional[Sequence[Pattern]] = None,
    **engine_kw,
) -> OracleResult:
    """Run the plan twice — feedback disabled then enabled — and check the
    containment.  ``patterns`` defaults to every assumed pattern observed
    on the enabled run's control channels."""
    ref = DeterministicEngine(
        make_plan(), registry, feedback_enabled=False, **engine_kw
    ).run()
    obs_engine = DeterministicEngine(
        make_plan(), registry, feedback_enabled=True, **engine_kw
    )
    obs = obs_engine.run()
    if patterns is None:
        patterns = _logged_patterns(obs_engine)
    ok, witness = def1_check(
        ref.outputs[sink_id], obs.outputs[sink_id], patterns
    )
    return OracleResult(ok, witness, ref, obs, list(patterns))


def _logged_patterns(engine: DeterministicEngine) -> list:
    """Patterns injected at sinks during the run (the feedback semantics
    are defined against what the consumer asked for, not against every
    rewritten message upstream)."""
    pats = []
    for op in engine.ops.values():
        pats.extend(getattr(op, "sent_patterns", ()))
    return pats
