"""Operator library with embedded-punctuation handling and assumed-feedback
behavior.

Every stateful operator follows the same discipline: an assumed feedback
pattern may trigger some combination of (1) an output guard — suppress
matching results, (2) an input guard — drop matching arrivals, (3) a state
purge, and (4) propagation of a rewritten pattern to antecedents, but only
when each action provably keeps the produced stream sandwiched between the
full output and the full output minus the feedback subset.
"""

from __future__ import annotations

import operator as pyop
import re
import time
from typing import Callable, Iterable, List, Optional, Tuple

from punctstream.core import (
    AttrType,
    Constraint,
    EmbeddedPunctuation,
    FeedbackPunctuation,
    Intent,
    Op,
    Pattern,
    Schema,
    assumed,
    is_punct,
    parse_value,
    _bounds,
)
from punctstream.propagation import (
    AttributeMapping,
    Origin,
    derive_input_patterns,
    identity_mapping,
)
from punctstream.runtime import Operator, RunError, SourceOperator


# ---------------------------------------------------------------------------
# Guards
# ---------------------------------------------------------------------------


class GuardSet:
    """Retained feedback patterns with punctuation-driven expiration.

    A guard expires once an embedded punctuation subsuming it has been
    processed: the stream then can no longer produce matching items, so
    keeping the pattern would only accumulate state.
    """

    __slots__ = ("_guards",)

    def __init__(self):
        self._guards = []  # list of (pattern, matcher)

    def __len__(self):
        return len(self._guards)

    def __bool__(self):
        return bool(self._guards)

    def add(self, pattern: Pattern) -> bool:
        for p, _ in self._guards:
            if p == pattern:
                return False
        self._guards.append((pattern, pattern.matcher()))
        return True

    def drop(self, row) -> bool:
        for _, m in self._guards:
            if m(row):
                return True
        return False

    def expire(self, punct_pattern: Pattern) -> int:
        from punctstream.core import subsumes

        before = len(self._guards)
        self._guards = [
            (p, m) for p, m in self._guards if not subsumes(punct_pattern, p)
        ]
        return before - len(self._guards)

    def patterns(self) -> list:
        return [p for p, _ in self._guards]


def _punct_ts_bound(pattern: Pattern, ts_idx: int) -> Optional[int]:
    """Inclusive upper bound a punctuation places on the timestamp
    attribute, or None when it is not a pure progress punctuation."""
    for i, c in enumerate(pattern.constraints):
        if i != ts_idx and not c.is_wildcard:
            return None
    c = pattern.constraints[ts_idx]
    if c.is_wildcard:
        return None
    lo, _, hi, _ = _bounds(c, True)
    if lo is not None or hi is None:
        return None
    return hi


# ---------------------------------------------------------------------------
# Predicates
# ---------------------------------------------------------------------------

_CLAUSE_RE = re.compile(r"^\s*(\w+)\s*(<=|>=|==|!=|<|>|=)\s*(.+?)\s*$")

_OPS = {
    "<": pyop.lt,
    "<=": pyop.le,
    ">": pyop.gt,
    ">=": pyop.ge,
    "=": pyop.eq,
    "==": pyop.eq,
    "!=": pyop.ne,
}


def compile_predicate(expr, schema: Schema) -> Callable:
    """Compile 'attr OP literal [and ...]' into a row predicate.

    Null fails every comparison except explicit '== null' / '!= null'.
    """
    if callable(expr):
        return expr
    text = expr.strip()
    if text in ("", "true"):
        return lambda row: True
    checks = []
    for clause in text.split(" and "):
        m = _CLAUSE_RE.match(clause)
        if not m:
            raise ValueError(f"cannot parse predicate clause {clause!r}")
        attr, op, lit = m.groups()
        idx = schema.index_of(attr)
        if lit == "null":
            if op in ("=", "=="):
                checks.append((idx, lambda v: v is None))
            elif op == "!=":
                checks.append((idx, lambda v: v is not None))
            else:
                raise ValueError(f"null only supports ==/!=: {clause!r}")
            continue
        val = parse_value(lit, schema.attr_types[idx])
        fn = _OPS[op]
        checks.append((idx, lambda v, fn=fn, val=val: v is not None and fn(v, val)))

    def pred(row):
        for idx, check in checks:
            if not check(row[idx]):
                return False
        return True

    return pred


# ---------------------------------------------------------------------------
# Source
# ---------------------------------------------------------------------------


class Source(SourceOperator):
    """Replays rows in order, interleaving progress punctuation every
    ``punct_interval`` seconds of stream time; a final punctuation covers
    the whole stream so downstream guards can expire."""

    def __init__(
        self,
        node_id: str,
        schema: Schema,
        rows: Iterable,
        punct_interval: Optional[int] = None,
        final_punct: bool = True,
    ):
        super().__init__(node_id, schema)
        self.schema = schema
        self._iter = iter(rows)
        self.punct_interval = punct_interval
        self.final_punct = final_punct
        self._ts_idx = schema.timestamp_attr
        self._next_boundary = punct_interval
        self._max_ts = None

    def _punct(self, bound: int) -> EmbeddedPunctuation:
        return EmbeddedPunctuation(
            Pattern.of(self.schema, **{self.schema.attr_names[self._ts_idx]: Constraint.le(bound)})
        )

    def generate(self, budget: float) -> None:
        emitted = 0
        while emitted < budget:
            try:
                item = next(self._iter)
            except StopIteration:
                if self.final_punct and self._max_ts is not None:
                    self.emit(self._punct(self._max_ts))
                self.exhausted = True
                return
            if is_punct(item):
                self.emit(item)
                continue
            ts = item[self._ts_idx]
            if ts is not None:
                if self.punct_interval is not None:
                    while self._next_boundary is not None and ts >= self._next_boundary:
                        self.emit(self._punct(self._next_boundary - 1))
                        self._next_boundary += self.punct_interval
                self._max_ts = ts if self._max_ts is None else max(self._max_ts, ts)
            self.charge(1.0)
            self.emit(item)
            emitted += 1


def read_stream_file(path: str):
    """Line-based stream file: a header declaring the schema, then one
    comma-separated row per line; '#punct' lines carry pattern syntax."""
    from punctstream.core import parse_pattern

    with open(path) as fh:
        header = fh.readline().strip()
        schema = parse_schema_decl(header)
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line or line.startswith("#comment"):
                continue
            if line.startswith("#punct"):
                body = line[len("#punct"):].strip()
                try:
                    rows.append(EmbeddedPunctuation(parse_pattern(body, schema)))
                except ValueError as exc:
                    raise RunError(f"{path}:{lineno}: bad punctuation: {exc}") from exc
                continue
            parts = line.split(",")
            if len(parts) != len(schema):
                raise RunError(
                    f"{path}:{lineno}: expected {len(schema)} values, got {len(parts)}"
                )
            try:
                row = tuple(
                    parse_value(p, t) for p, t in zip(parts, schema.attr_types)
                )
                schema.check_row(row)
            except ValueError as exc:
                raise RunError(f"{path}:{lineno}: {exc}") from exc
            rows.append(row)
    return schema, rows


_SCHEMA_DECL_RE = re.compile(r"^\s*schema\s+(\w+)\s*\((.*)\)\s*$")


def parse_schema_decl(text: str) -> Schema:
    """'schema name(attr:type, ..., tsattr:timestamp*)' — '*' marks the
    progress attribute (defaults to the first timestamp attribute)."""
    m = _SCHEMA_DECL_RE.match(text)
    if not m:
        raise ValueError(f"bad schema declaration {text!r}")
    name, body = m.groups()
    attrs, ts_idx = [], None
    for i, part in enumerate(body.split(",")):
        part = part.strip()
        aname, _, atype = part.partition(":")
        atype = atype.strip()
        starred = atype.endswith("*")
        if starred:
            atype = atype[:-1]
        t = AttrType(atype)
        attrs.append((aname.strip(), t))
        if starred:
            ts_idx = i
        elif ts_idx is None and t is AttrType.TIMESTAMP:
            ts_idx = i
    if ts_idx is None:
        raise ValueError(f"schema {name!r} has no timestamp attribute")
    return Schema(name, tuple(attrs), ts_idx)


def format_schema_decl(schema: Schema) -> str:
    parts = []
    for i, (n, t) in enumerate(schema.attributes):
        star = "*" if i == schema.timestamp_attr else ""
        parts.append(f"{n}:{t.value}{star}")
    return f"schema {schema.name}({', '.join(parts)})"


# ---------------------------------------------------------------------------
# Select
# ---------------------------------------------------------------------------


class Select(Operator):
    """Stateless filter; assumed feedback is simply added to the condition
    (drop matching rows) and relayed upstream through the identity mapping."""

    def __init__(
        self,
        node_id,
        input_schema: Schema,
        predicate="true",
        eval_cost: float = 1.0,
        guard_check_cost: float = 0.0,
        feedback_aware: bool = True,
        propagate: bool = True,
    ):
        super().__init__(node_id, (input_schema,), (input_schema,))
        self.schema = input_schema
        self.pred = compile_predicate(predicate, input_schema)
        self.eval_cost = eval_cost
        self.guard_check_cost = guard_check_cost
        self.feedback_aware = feedback_aware
        self.propagate = propagate
        self.guards = GuardSet()
        self.mapping = identity_mapping(input_schema)

    @property
    def active_guard_count(self) -> int:
        return len(self.guards)

    def process_item(self, input_index, item):
        if is_punct(item):
            self.guards.expire(item.pattern)
            self.emit(item)
            return
        if self.guards:
            self.counters.work_units += self.guard_check_cost
            if self.guards.drop(item):
                self.counters.guard_drops += 1
                return
        self.counters.work_units += self.eval_cost
        if self.pred(item):
            self.emit(item)

    def on_feedback(self, output_port, fb):
        if not self.feedback_aware or fb.intent is not Intent.ASSUMED:
            return
        self.counters.feedback_received += 1
        self.guards.add(fb.pattern)
        if self.propagate:
            (back,) = derive_input_patterns(fb.pattern, self.mapping)
            if back is not None:
                self.send_feedback(0, assumed(back))


# ---------------------------------------------------------------------------
# Split
# ---------------------------------------------------------------------------


def _any_null(row) -> bool:
    return any(v is None for v in row)


class Split(Operator):
    """Routes each row to the clean (port 0) or dirty (port 1) output;
    punctuation is forwarded to both.  Feedback from one branch installs an
    output guard on that branch only — the branches are disjoint, so
    relaying upstream would starve the other branch."""

    n_outputs = 2

    def __init__(self, node_id, input_schema: Schema, route="any_null"):
        super().__init__(node_id, (input_schema,), (input_schema, input_schema))
        self.schema = input_schema
        self.dirty = _any_null if route == "any_null" else compile_predicate(route, input_schema)
        self.port_guards = (GuardSet(), GuardSet())

    @property
    def active_guard_count(self) -> int:
        return sum(len(g) for g in self.port_guards)

    def process_item(self, input_index, item):
        if is_punct(item):
            for g in self.port_guards:
                g.expire(item.pattern)
            self.emit(item, port=0)
            self.emit(item, port=1)
            return
        self.counters.work_units += 1.0
        port = 1 if self.dirty(item) else 0
        guards = self.port_guards[port]
        if guards and guards.drop(item):
            self.counters.guard_drops += 1
            return
        self.emit(item, port=port)

    def on_feedback(self, output_port, fb):
        if fb.intent is not Intent.ASSUMED:
            return
        self.counters.feedback_received += 1
        self.port_guards[output_port].add(fb.pattern)


# ---------------------------------------------------------------------------
# Impute
# ---------------------------------------------------------------------------


class Impute(Operator):
    """Replaces null readings with an estimate at a configurable per-row
    cost: the last non-null value seen for the same key, else a default.

    Guarded rows are dropped before the expensive step; rows queued behind
    the operator are caught by the same guard when they are dequeued, which
    purges the already-late backlog."""

    def __init__(
        self,
        node_id,
        input_schema: Schema,
        cost: float = 10.0,
        cost_mode: str = "virtual",
        key: Optional[str] = None,
        default=0,
        propagate: bool = True,
    ):
        super().__init__(node_id, (input_schema,), (input_schema,))
        self.schema = input_schema
        self.cost = cost
        if cost_mode not in ("virtual", "wallclock"):
            raise ValueError(f"unknown cost mode {cost_mode!r}")
        self.cost_mode = cost_mode
        self.key_idx = input_schema.index_of(key) if key else None
        self.default = default
        self.propagate = propagate
        self.guards = GuardSet()
        self.mapping = identity_mapping(input_schema)
        self._last = {}  # (key, attr index) -> last non-null value

    @property
    def active_guard_count(self) -> int:
        return len(self.guards)

    def process_item(self, input_index, item):
        if is_punct(item):
            self.guards.expire(item.pattern)
            self.emit(item)
            return
        if self.guards and self.guards.drop(item):
            self.counters.guard_drops += 1
            return
        self.counters.work_units += self.cost
        if self.cost_mode == "wallclock":
            time.sleep(self.cost / 1000.0)
        key = item[self.key_idx] if self.key_idx is not None else None
        values = list(item)
        for i, v in enumerate(values):
            if v is None:
                values[i] = self._last.get((key, i), self.default)
            elif self.key_idx is not None:
                self._last[(key, i)] = v
        self.emit(tuple(values))

    def on_feedback(self, output_port, fb):
        if fb.intent is not Intent.ASSUMED:
            return
        self.counters.feedback_received += 1
        self.guards.add(fb.pattern)
        if self.propagate:
            (back,) = derive_input_patterns(fb.pattern, self.mapping)
            if back is not None:
                self.send_feedback(0, assumed(back))


# ---------------------------------------------------------------------------
# Pace (and plain Union)
# ---------------------------------------------------------------------------


class Pace(Operator):
    """Union of same-schema inputs that bounds inter-branch timestamp
    divergence: rows lagging more than ``tolerance`` behind the high
    watermark are dropped, and assumed feedback covering the stale region
    is thrown upstream at lagging inputs.

    ``feedback_margin`` moves the declared bound above the bare lateness
    threshold.  Declaring more than strictly hopeless is allowed — an
    assumed pattern is a promise to ignore, not an obligation to drop —
    and without the margin everything that survives the upstream guard
    arrives right at the lateness boundary and is lost anyway."""

    def __init__(
        self,
        node_id,
        input_schemas: tuple,
        tolerance: Optional[int] = None,
        enforce: bool = True,
        feedback: bool = True,
        throttle: Optional[int] = None,
        feedback_margin: int = 0,
        divergence_input: Optional[int] = None,
    ):
        if not input_schemas:
            raise ValueError("pace needs at least one input")
        first = input_schemas[0]
        for s in input_schemas[1:]:
            if s.attributes != first.attributes:
                raise ValueError("pace inputs must share one schema")
        super().__init__(node_id, input_schemas, (first,))
        self.schema = first
        self.tolerance = tolerance
        self.enforce = enforce
        self.feedback = feedback
        self.throttle = throttle if throttle is not None else (
            max(1, tolerance // 2) if tolerance else None
        )
        if tolerance is not None and not (0 <= feedback_margin < tolerance):
            raise ValueError("feedback margin must be within [0, tolerance)")
        self.feedback_margin = feedback_margin
        self.divergence_input = divergence_input
        self._ts = first.timestamp_attr
        self.high_watermark: Optional[int] = None
        self.last_feedback_watermark: Optional[int] = None
        self._input_ts = [None] * len(input_schemas)
        self._punct_bound = [None] * len(input_schemas)
        self._emitted_bound = None
        self.late_counts = [0] * len(input_schemas)
        self.in_totals = [0] * len(input_schemas)
        self.sent_patterns: list = []  # what was actually sent, for the oracle
        self.divergence_series: list = []
        self._arrivals = 0

    def _ts_pattern(self, ctor, bound) -> Pattern:
        return Pattern.of(
            self.schema, **{self.schema.attr_names[self._ts]: ctor(bound)}
        )

    def process_item(self, input_index, item):
        if is_punct(item):
            b = _punct_ts_bound(item.pattern, self._ts)
            if b is not None:
                prev = self._punct_bound[input_index]
                self._punct_bound[input_index] = b if prev is None else max(prev, b)
                if all(x is not None for x in self._punct_bound):
                    merged = min(self._punct_bound)
                    if self._emitted_bound is None or merged > self._emitted_bound:
                        self._emitted_bound = merged
                        self.emit(EmbeddedPunctuation(self._ts_pattern(Constraint.le, merged)))
            return
        self.counters.work_units += 1.0
        ts = item[self._ts]
        self._arrivals += 1
        self.in_totals[input_index] += 1
        if ts is None:
            self.emit(item)
            return
        prev = self._input_ts[input_index]
        self._input_ts[input_index] = ts if prev is None else max(prev, ts)
        if self.high_watermark is None or ts > self.high_watermark:
            self.high_watermark = ts
        if self.tolerance is None:
            self.emit(item)
            return
        threshold = self.high_watermark - self.tolerance
        if input_index == self.divergence_input:
            self.divergence_series.append((self._arrivals, self.high_watermark - ts))
        late = ts < threshold
        if late:
            self.late_counts[input_index] += 1
        if late and self.enforce:
            pass  # too late: ignored
        else:
            self.emit(item)
        fb_bound = threshold + self.feedback_margin
        if self.feedback and (
            self.last_feedback_watermark is None
            or fb_bound >= self.last_feedback_watermark + self.throttle
        ):
            sent = False
            for i, seen in enumerate(self._input_ts):
                if seen is not None and seen < fb_bound:
                    pat = self._ts_pattern(Constraint.le, fb_bound)
                    self.sent_patterns.append(pat)
                    self.send_feedback(i, assumed(pat))
                    sent = True
            if sent:
                self.last_feedback_watermark = fb_bound

    def timely_fraction(self, input_index: int) -> float:
        seen = self.in_totals[input_index]
        if seen == 0:
            return 1.0
        return 1.0 - self.late_counts[input_index] / seen


class Union(Pace):
    def __init__(self, node_id, input_schemas):
        super().__init__(node_id, input_schemas, tolerance=None, enforce=False, feedback=False)


# ---------------------------------------------------------------------------
# Window aggregates
# ---------------------------------------------------------------------------

_AGG_KINDS = ("count", "sum", "average", "max")


class WindowAggregate(Operator):
    """Tumbling-window grouped aggregate over (window start, group keys).

    Output schema is (win, g..., a) with ``win`` the window-start
    timestamp, ``g`` copied group attributes and ``a`` the computed
    aggregate.  Embedded progress punctuation closes covered windows,
    produces their results (subject to output guards and suppression) and
    re-punctuates the output on the window attribute.
    """

    def __init__(
        self,
        node_id,
        input_schema: Schema,
        kind: str,
        range_seconds: int,
        group_by: tuple = (),
        value: Optional[str] = None,
        feedback_mode: str = "exploit_propagate",
        update_cost: float = 1.0,
        emit_cost: float = 1.0,
        guard_check_cost: float = 0.0,
        sum_nonneg: bool = False,
    ):
        if kind not in _AGG_KINDS:
            raise ValueError(f"unknown aggregate kind {kind!r}")
        if range_seconds <= 0:
            raise ValueError("window range must be positive")
        if feedback_mode not in ("none", "output_guard", "exploit", "exploit_propagate"):
            raise ValueError(f"unknown feedback mode {feedback_mode!r}")
        if kind != "count" and value is None:
            raise ValueError(f"{kind} aggregate needs a value attribute")
        self.kind = kind
        self.range = range_seconds
        self._ts = input_schema.timestamp_attr
        self.group_idx = tuple(input_schema.index_of(g) for g in group_by)
        self.value_idx = input_schema.index_of(value) if value is not None else None
        agg_name = {"count": "count", "sum": f"sum_{value}", "average": f"avg_{value}", "max": f"max_{value}"}[kind]
        agg_type = AttrType.INT if kind == "count" else AttrType.FLOAT
        out_attrs = [("win", AttrType.TIMESTAMP)]
        out_attrs += [(input_schema.attr_names[i], input_schema.attr_types[i]) for i in self.group_idx]
        out_attrs.append((agg_name, agg_type))
        out_schema = Schema(f"{input_schema.name}_{kind}", tuple(out_attrs), 0)
        super().__init__(node_id, (input_schema,), (out_schema,))
        self.out_schema = out_schema
        self.feedback_mode = feedback_mode
        self.update_cost = update_cost
        self.emit_cost = emit_cost
        self.guard_check_cost = guard_check_cost
        self.sum_nonneg = sum_nonneg
        self.mapping = AttributeMapping(
            output_schema=out_schema,
            input_schemas=(input_schema,),
            origins=(Origin.window(0, self._ts, range_seconds),)
            + tuple(Origin.from_input((0, i)) for i in self.group_idx)
            + (Origin.computed(),),
        )
        self.state = {}  # (win, group tuple) -> partial
        self.suppressed = set()  # keys guarded after purge
        self.input_guards = GuardSet()
        self.output_guards = GuardSet()
        self._value_feedback: list = []  # live constraints (max only)
        self._agg_out_idx = len(out_attrs) - 1
        self._out_punct_bound: Optional[int] = None

    # -- aggregation --------------------------------------------------
    @property
    def active_guard_count(self) -> int:
        return len(self.input_guards) + len(self.output_guards) + len(self.suppressed)

    @property
    def delimited_guard_count(self) -> int:
        """Guards that expire through punctuation: input guards plus
        suppressed-window records (output guards on the aggregate value
        are not delimited and persist)."""
        return len(self.input_guards) + len(self.suppressed)

    def _update(self, partial, v):
        k = self.kind
        if k == "count":
            return (partial or 0) + 1
        if v is None:
            return partial
        if k == "sum":
            return (partial or 0.0) + v
        if k == "max":
            return v if partial is None else max(partial, v)
        s, n = partial or (0.0, 0)
        return (s + v, n + 1)

    def _result(self, partial):
        if partial is None:  # only null values arrived: nothing to report
            return None
        if self.kind == "average":
            s, n = partial
            return s / n if n else None
        return partial

    def _partial_value(self, partial):
        """Current aggregate value as it would be output."""
        return self._result(partial)

    def process_item(self, input_index, item):
        if is_punct(item):
            self.input_guards.expire(item.pattern)
            bound = _punct_ts_bound(item.pattern, self._ts)
            if bound is not None:
                self._close_windows(bound)
            return
        if self.input_guards:
            self.counters.work_units += self.guard_check_cost
            if self.input_guards.drop(item):
                self.counters.guard_drops += 1
                return
        if item[self._ts] is None:
            return  # unassignable to a window
        key = ((item[self._ts] // self.range) * self.range,
               tuple(item[i] for i in self.group_idx))
        if key in self.suppressed:
            self.counters.guard_drops += 1
            return
        self.counters.work_units += self.update_cost
        v = item[self.value_idx] if self.value_idx is not None else None
        partial = self._update(self.state.get(key), v)
        self.state[key] = partial
        if self.kind == "max" and self._value_feedback:
            cur = self._partial_value(partial)
            if cur is not None and any(c.matches_value(cur) for c in self._value_feedback):
                self._suppress_key(key, propagate=self.feedback_mode == "exploit_propagate")

    def _out_row(self, key, partial):
        win, groups = key
        return (win,) + groups + (self._result(partial),)

    def _emit_result(self, key, partial):
        row = self._out_row(key, partial)
        if row[self._agg_out_idx] is None:
            return
        if self.output_guards:
            self.counters.work_units += self.guard_check_cost
            if self.output_guards.drop(row):
                self.counters.guard_drops += 1
                return
        self.counters.work_units += self.emit_cost
        self.emit(row)

    def _close_windows(self, ts_bound: int) -> None:
        """Close every window fully covered by the progress bound."""
        closing = sorted(k for k in self.state if k[0] + self.range - 1 <= ts_bound)
        for key in closing:
            self._emit_result(key, self.state.pop(key))
        stale = {k for k in self.suppressed if k[0] + self.range - 1 <= ts_bound}
        self.suppressed -= stale
        # every window starting at or before last_win is now complete
        last_win = (ts_bound + 1) // self.range * self.range - self.range
        if self._out_punct_bound is None or last_win > self._out_punct_bound:
            self._out_punct_bound = last_win
            p = Pattern.of(self.out_schema, win=Constraint.le(last_win))
            self.output_guards.expire(p)
            self.emit(EmbeddedPunctuation(p))

    def finish(self):
        for key in sorted(self.state):
            self._emit_result(key, self.state[key])
        if self.state:
            last_win = max(k[0] for k in self.state)
            p = Pattern.of(self.out_schema, win=Constraint.le(last_win))
            self.output_guards.expire(p)
            self.emit(EmbeddedPunctuation(p))
        self.state.clear()
        self.suppressed.clear()

    # -- feedback -----------------------------------------------------
    def _suppress_key(self, key, propagate: bool) -> None:
        if key in self.state:
            del self.state[key]
            self.counters.state_purged += 1
        self.suppressed.add(key)
        if propagate:
            win, groups = key
            names = self.out_schema.attr_names
            by = {"win": Constraint.eq(win)}
            for name, g in zip(names[1:-1], groups):
                by[name] = Constraint.eq(g)
            out_pat = Pattern.of(self.out_schema, **by)
            (back,) = derive_input_patterns(out_pat, self.mapping)
            if back is not None:
                self.send_feedback(0, assumed(back))

    def on_feedback(self, output_port, fb):
        if self.feedback_mode == "none" or fb.intent is not Intent.ASSUMED:
            return
        self.counters.feedback_received += 1
        pat = fb.pattern
        constrained = pat.constrained_indices()
        agg_only = constrained == (self._agg_out_idx,)
        group_only = self._agg_out_idx not in constrained
        if self.feedback_mode == "output_guard" or (not agg_only and not group_only):
            self.output_guards.add(pat)
            return
        if group_only:
            self._exploit_group_pattern(pat)
            return
        self._exploit_agg_constraint(pat.constraints[self._agg_out_idx], pat)

    def _exploit_group_pattern(self, pat: Pattern) -> None:
        matcher = pat.matcher()
        doomed = [k for k in sorted(self.state) if matcher(self._probe_row(k))]
        for k in doomed:
            del self.state[k]
            self.counters.state_purged += 1
        (back,) = derive_input_patterns(pat, self.mapping)
        if back is not None:
            self.input_guards.add(back)
            if self.feedback_mode == "exploit_propagate":
                self.send_feedback(0, assumed(back))
        else:
            # no inverse mapping: fall back to guarding the output
            self.output_guards.add(pat)
            for k in doomed:
                self.suppressed.add(k)

    def _probe_row(self, key):
        win, groups = key
        return (win,) + groups + (None,)

    def _exploit_agg_constraint(self, c: Constraint, pat: Pattern) -> None:
        grows_into = c.op in (Op.GE, Op.GT)
        monotone = self.kind == "count" or self.kind == "max" or (
            self.kind == "sum" and self.sum_nonneg
        )
        if not (grows_into and monotone):
            # the partial could still move out of (or into) the described
            # region; only the final value may be checked
            self.output_guards.add(pat)
            return
        propagate = self.feedback_mode == "exploit_propagate"
        doomed = [
            k
            for k in sorted(self.state)
            if (v := self._partial_value(self.state[k])) is not None and c.matches_value(v)
        ]
        for k in doomed:
            self._suppress_key(k, propagate)
        if self.kind == "max":
            self._value_feedback.append(c)


# ---------------------------------------------------------------------------
# Join
# ---------------------------------------------------------------------------


class Join(Operator):
    """Symmetric-hash windowed equi-join.  Output carries every left
    attribute followed by the right attributes that are not join keys;
    join attributes therefore originate in both inputs, which is what lets
    feedback on them propagate to both sides."""

    def __init__(
        self,
        node_id,
        input_schemas: tuple,
        on: tuple,  # (left attr name, right attr name) pairs
        window: Optional[int] = None,
        name: Optional[str] = None,
    ):
        if len(input_schemas) != 2:
            raise ValueError("join takes exactly two inputs")
        left, right = input_schemas
        if not on:
            raise ValueError("join needs at least one key pair")
        self.left_keys = tuple(left.index_of(l) for l, _ in on)
        self.right_keys = tuple(right.index_of(r) for _, r in on)
        for li, ri in zip(self.left_keys, self.right_keys):
            if left.attr_types[li] != right.attr_types[ri]:
                raise ValueError("join attribute types differ")
        self.window = window
        right_extra = tuple(
            i for i in range(len(right)) if i not in self.right_keys
        )
        self._right_extra = right_extra
        out_attrs = tuple(left.attributes) + tuple(right.attributes[i] for i in right_extra)
        out_schema = Schema(
            name or f"{left.name}_{right.name}", out_attrs, left.timestamp_attr
        )
        super().__init__(node_id, (left, right), (out_schema,))
        self.out_schema = out_schema
        key_partner = dict(zip(self.left_keys, self.right_keys))
        origins = []
        for i in range(len(left)):
            if i in key_partner:
                origins.append(Origin.from_input((0, i), (1, key_partner[i])))
            else:
                origins.append(Origin.from_input((0, i)))
        for i in right_extra:
            origins.append(Origin.from_input((1, i)))
        self.mapping = AttributeMapping(out_schema, (left, right), tuple(origins))
        self.tables = ({}, {})  # key -> list of rows, per input
        self.input_guards = (GuardSet(), GuardSet())
        self.output_guards = GuardSet()
        self._ts = (left.timestamp_attr, right.timestamp_attr)
        # purging on a timestamp bound is sound only when matches must
        # share a window or the timestamp itself is a join attribute
        self._ts_joined = left.timestamp_attr in self.left_keys and (
            self.right_keys[self.left_keys.index(left.timestamp_attr)]
            == right.timestamp_attr
        )
        self._punct_bound = [None, None]
        self._emitted_bound = None

    @property
    def active_guard_count(self) -> int:
        return sum(len(g) for g in self.input_guards) + len(self.output_guards)

    def _key(self, input_index, row):
        keys = self.left_keys if input_index == 0 else self.right_keys
        k = tuple(row[i] for i in keys)
        if self.window is not None:
            ts = row[self._ts[input_index]]
            if ts is None:
                return None  # unassignable to a window: never joins
            return ((ts // self.window) * self.window,) + k
        return k

    def _out_row(self, left_row, right_row):
        return tuple(left_row) + tuple(right_row[i] for i in self._right_extra)

    def process_item(self, input_index, item):
        if is_punct(item):
            self.input_guards[input_index].expire(item.pattern)
            b = _punct_ts_bound(item.pattern, self._ts[input_index])
            if b is not None:
                self._advance_bound(input_index, b)
            return
        self.counters.work_units += 1.0
        guards = self.input_guards[input_index]
        if guards and guards.drop(item):
            self.counters.guard_drops += 1
            return
        key = self._key(input_index, item)
        if key is None:
            return
        other = self.tables[1 - input_index]
        for match in other.get(key, ()):
            out = (
                self._out_row(item, match)
                if input_index == 0
                else self._out_row(match, item)
            )
            if self.output_guards and self.output_guards.drop(out):
                self.counters.guard_drops += 1
                continue
            self.counters.work_units += 1.0
            self.emit(out)
        self.tables[input_index].setdefault(key, []).append(item)

    def _advance_bound(self, input_index, bound):
        prev = self._punct_bound[input_index]
        self._punct_bound[input_index] = bound if prev is None else max(prev, bound)
        if not (self.window is not None or self._ts_joined):
            return
        if any(b is None for b in self._punct_bound):
            return
        merged = min(self._punct_bound)
        if self._emitted_bound is not None and merged <= self._emitted_bound:
            return
        self._emitted_bound = merged
        # routine expiry of closed regions; not counted as a feedback purge
        for side in (0, 1):
            ts = self._ts[side]
            table = self.tables[side]
            for key in list(table):
                kept = [r for r in table[key] if r[ts] > merged]
                if kept:
                    table[key] = kept
                else:
                    del table[key]
        out_ts_name = self.out_schema.attr_names[self.out_schema.timestamp_attr]
        p = Pattern.of(self.out_schema, **{out_ts_name: Constraint.le(merged)})
        self.output_guards.expire(p)
        self.emit(EmbeddedPunctuation(p))

    def on_feedback(self, output_port, fb):
        if fb.intent is not Intent.ASSUMED:
            return
        self.counters.feedback_received += 1
        derived = derive_input_patterns(fb.pattern, self.mapping)
        if all(p is None for p in derived):
            self.output_guards.add(fb.pattern)
            return
        for side, pat in enumerate(derived):
            if pat is None:
                continue
            matcher = pat.matcher()
            table = self.tables[side]
            for key in list(table):
                kept = [r for r in table[key] if not matcher(r)]
                purged = len(table[key]) - len(kept)
                if purged:
                    self.counters.state_purged += purged
                if kept:
                    table[key] = kept
                else:
                    del table[key]
            self.input_guards[side].add(pat)
            self.send_feedback(side, assumed(pat))


# ---------------------------------------------------------------------------
# Sink
# ---------------------------------------------------------------------------


class Sink(Operator):
    """Collects output items in arrival order; optionally injects feedback
    upstream after fixed arrival counts or from a time-driven schedule."""

    n_outputs = 0

    def __init__(
        self,
        node_id,
        input_schema: Schema,
        injections: tuple = (),
        time_injector: Optional[Callable] = None,
        record_divergence: bool = False,
    ):
        super().__init__(node_id, (input_schema,), ())
        self.schema = input_schema
        self.collected: list = []
        self.injections = sorted(injections, key=lambda x: x[0])
        self._injected = 0
        self.sent_patterns: list = []  # what was actually sent, for the oracle
        self.time_injector = time_injector
        self.record_divergence = record_divergence
        self.divergence_series: list = []
        self._ts = input_schema.timestamp_attr
        self._max_ts = None
        self._observed = None

    def process_item(self, input_index, item):
        self.collected.append(item)
        if is_punct(item):
            b = _punct_ts_bound(item.pattern, self._ts)
            if b is not None:
                self._observe(b)
            return
        ts = item[self._ts]
        if ts is not None:
            self._max_ts = ts if self._max_ts is None else max(self._max_ts, ts)
            if self.record_divergence:
                self.divergence_series.append(
                    (self.counters.tuples_in, self._max_ts - ts)
                )
            self._observe(ts)
        while (
            self._injected < len(self.injections)
            and self.counters.tuples_in >= self.injections[self._injected][0]
        ):
            _, fb = self.injections[self._injected]
            self._injected += 1
            self.sent_patterns.append(fb.pattern)
            self.send_feedback(0, fb)

    def _observe(self, t: int) -> None:
        if self._observed is not None and t <= self._observed:
            return
        self._observed = t
        if self.time_injector is not None:
            for fb in self.time_injector(t):
                self.sent_patterns.append(fb.pattern)
                self.send_feedback(0, fb)

    def rows(self) -> list:
        return [i for i in self.collected if not is_punct(i)]


# ---------------------------------------------------------------------------
# Registry: plan kind -> builder
# ---------------------------------------------------------------------------


def _one_input(schemas, kind):
    if len(schemas) != 1:
        raise ValueError(f"{kind} takes exactly one input, got {len(schemas)}")
    return schemas[0]


def _build_source(node_id, input_schemas, params):
    if input_schemas:
        raise ValueError("source takes no inputs")
    if "file" in params:
        schema, rows = read_stream_file(params.pop("file"))
        params.setdefault("schema", schema)
        params.setdefault("rows", rows)
    return Source(node_id, **params)


def _build_select(node_id, input_schemas, params):
    return Select(node_id, _one_input(input_schemas, "select"), **params)


def _build_split(node_id, input_schemas, params):
    return Split(node_id, _one_input(input_schemas, "split"), **params)


def _build_impute(node_id, input_schemas, params):
    return Impute(node_id, _one_input(input_schemas, "impute"), **params)


def _build_pace(node_id, input_schemas, params):
    return Pace(node_id, tuple(input_schemas), **params)


def _build_union(node_id, input_schemas, params):
    return Union(node_id, tuple(input_schemas), **params)


def _build_agg(kind):
    def build(node_id, input_schemas, params):
        params = dict(params)
        params.setdefault("kind", kind)
        return WindowAggregate(node_id, _one_input(input_schemas, kind), **params)

    return build


def _build_join(node_id, input_schemas, params):
    return Join(node_id, tuple(input_schemas), **params)


def _build_sink(node_id, input_schemas, params):
    return Sink(node_id, _one_input(input_schemas, "sink"), **params)


REGISTRY = {
    "source": _build_source,
    "select": _build_select,
    "split": _build_split,
    "impute": _build_impute,
    "pace": _build_pace,
    "union": _build_union,
    "count": _build_agg("count"),
    "sum": _build_agg("sum"),
    "average": _build_agg("average"),
    "max": _build_agg("max"),
    "join": _build_join,
    "sink": _build_sink,
}
