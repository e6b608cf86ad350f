"""Execution substrate: operator contract, paged bounded queues, the
upstream control channel, and two schedulers.

The deterministic scheduler runs everything on one thread, visiting
operators in topological order round-robin.  Each turn drains pending
control messages first (high priority), then consumes data items until a
work-unit quantum is spent.  Equal seeds and configs replay bit-identically.
The concurrent scheduler runs one thread per operator with blocking
bounded queues; correctness must not depend on delivery timing.
"""

from __future__ import annotations

import csv
import io
import threading
from collections import deque
from dataclasses import dataclass, field, fields
from typing import Callable, Dict, List, Optional, Tuple

from punctstream.core import (
    ControlKind,
    ControlMessage,
    EmbeddedPunctuation,
    FeedbackPunctuation,
    Page,
    Schema,
    is_punct,
)

DEFAULT_PAGE_SIZE = 100
DEFAULT_QUEUE_PAGES = 8

# budget floor per consumed item, so zero-cost drops still terminate a turn
_MIN_ITEM_COST = 0.01


class PlanError(ValueError):
    """Plan fails validation (bad edge, schema mismatch, cycle)."""


class RunError(RuntimeError):
    """Execution failed (deadlock, malformed input)."""


@dataclass
class Counters:
    tuples_in: int = 0
    tuples_out: int = 0
    puncts_in: int = 0
    puncts_out: int = 0
    feedback_received: int = 0
    feedback_sent: int = 0
    guard_drops: int = 0
    state_purged: int = 0
    work_units: float = 0.0

    @staticmethod
    def csv_header() -> list:
        return [f.name for f in fields(Counters)]

    def as_row(self) -> list:
        return [getattr(self, f.name) for f in fields(Counters)]


# ---------------------------------------------------------------------------
# Operator contract
# ---------------------------------------------------------------------------


class Operator:
    """Base class; state is private to the instance, interaction goes
    through the runtime context only."""

    n_outputs = 1
    is_source = False

    def __init__(self, node_id: str, input_schemas: tuple, output_schemas: tuple):
        self.id = node_id
        self.input_schemas = tuple(input_schemas)
        self.output_schemas = tuple(output_schemas)
        self.counters = Counters()
        self.mapping = None  # AttributeMapping, set by subclasses that relay feedback
        self._ctx = None

    # -- engine-facing ------------------------------------------------
    def process_item(self, input_index: int, item) -> None:
        raise NotImplementedError

    def on_feedback(self, output_port: int, fb: FeedbackPunctuation) -> None:
        """Default: feedback-unaware, message discarded, counters unchanged."""

    def on_input_end(self, input_index: int) -> None:
        pass

    def finish(self) -> None:
        """All inputs ended: flush remaining state."""

    # -- helpers for subclasses ---------------------------------------
    def emit(self, item, port: int = 0) -> None:
        self._ctx.emit(self, port, item)

    def send_feedback(self, input_index: int, fb: FeedbackPunctuation) -> None:
        self._ctx.send_feedback(self, input_index, fb)

    def charge(self, units: float) -> None:
        self.counters.work_units += units


class SourceOperator(Operator):
    """Sources produce items on demand instead of consuming inputs."""

    is_source = True

    def __init__(self, node_id, output_schema):
        super().__init__(node_id, (), (output_schema,))
        self.exhausted = False

    def generate(self, budget: float) -> None:
        """Emit items worth at most ``budget`` work units; set
        ``self.exhausted`` when done."""
        raise NotImplementedError

    def process_item(self, input_index, item):  # pragma: no cover
        raise RunError("sources have no inputs")


# ---------------------------------------------------------------------------
# Plan graph
# ---------------------------------------------------------------------------


@dataclass
class OperatorNode:
    id: str
    kind: str
    params: dict = field(default_factory=dict)
    inputs: list = field(default_factory=list)  # "node_id" or "node_id.port"


class Plan:
    def __init__(self):
        self.nodes: Dict[str, OperatorNode] = {}

    def add(self, node_id: str, kind: str, inputs=(), **params) -> "Plan":
        if node_id in self.nodes:
            raise PlanError(f"duplicate node id {node_id!r}")
        self.nodes[node_id] = OperatorNode(node_id, kind, dict(params), list(inputs))
        return self

    def topo_order(self) -> list:
        indeg = {n: 0 for n in self.nodes}
        succs = {n: [] for n in self.nodes}
        for node in self.nodes.values():
            for ref in node.inputs:
                src = ref.split(".", 1)[0]
                if src not in self.nodes:
                    raise PlanError(f"node {node.id!r} references unknown input {src!r}")
                indeg[node.id] += 1
                succs[src].append(node.id)
        order, ready = [], sorted(n for n, d in indeg.items() if d == 0)
        while ready:
            n = ready.pop(0)
            order.append(n)
            for s in succs[n]:
                indeg[s] -= 1
                if indeg[s] == 0:
                    ready.append(s)
            ready.sort()
        if len(order) != len(self.nodes):
            raise PlanError("plan graph has a cycle")
        return order


def _parse_ref(ref: str) -> Tuple[str, int]:
    if "." in ref:
        name, port = ref.rsplit(".", 1)
        return name, int(port)
    return ref, 0


class Edge:
    """One producer port to one consumer input: paged FIFO of data plus an
    upstream FIFO of control messages."""

    __slots__ = (
        "producer", "port", "consumer", "input_index", "schema",
        "pages", "capacity_pages", "eos", "control_up", "key",
    )

    def __init__(self, producer, port, consumer, input_index, schema, capacity_pages):
        self.producer = producer
        self.port = port
        self.consumer = consumer
        self.input_index = input_index
        self.schema = schema
        self.pages = deque()
        self.capacity_pages = capacity_pages
        self.eos = False
        self.control_up = deque()
        self.key = f"{producer}.{port}->{consumer}.{input_index}"


# ---------------------------------------------------------------------------
# Run report
# ---------------------------------------------------------------------------


@dataclass
class RunReport:
    outputs: dict          # sink id -> list of output rows
    counters: dict         # op id -> Counters
    feedback_log: list     # (edge key, intent, pattern text)
    divergence: dict       # op id -> list of (arrival index, lag seconds)
    page_log: Optional[list] = None  # (edge key, size, has_punct, capacity)

    def counters_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["operator"] + Counters.csv_header())
        for op_id in sorted(self.counters):
            w.writerow([op_id] + self.counters[op_id].as_row())
        return buf.getvalue()

    def outputs_csv(self, sink_id: Optional[str] = None) -> str:
        if sink_id is None:
            if len(self.outputs) != 1:
                raise ValueError("plan has several sinks; name one")
            sink_id = next(iter(self.outputs))
        buf = io.StringIO()
        w = csv.writer(buf)
        rows = self.outputs[sink_id]
        for row in rows:
            w.writerow(list(row))
        return buf.getvalue()

    def to_bytes(self) -> bytes:
        parts = [self.counters_csv()]
        for sink_id in sorted(self.outputs):
            parts.append(self.outputs_csv(sink_id))
        parts.append(repr(self.feedback_log))
        parts.append(repr(self.divergence))
        return "\n".join(parts).encode()

    def total_work(self) -> float:
        return sum(c.work_units for c in self.counters.values())


# ---------------------------------------------------------------------------
# Shared wiring
# ---------------------------------------------------------------------------


def build_operators(plan: Plan, registry: dict, seed: int = 0):
    """Instantiate operators and edges in topological order, validating
    schemas along every edge."""
    order = plan.topo_order()
    ops: Dict[str, Operator] = {}
    in_edges: Dict[str, list] = {}
    out_edges: Dict[str, dict] = {}
    edges: List[Edge] = []
    for node_id in order:
        node = plan.nodes[node_id]
        input_schemas = []
        refs = []
        for ref in node.inputs:
            src, port = _parse_ref(ref)
            producer = ops[src]
            if not (0 <= port < producer.n_outputs):
                raise PlanError(f"edge {src}.{port}->{node_id}: no such output port")
            input_schemas.append(producer.output_schemas[port])
            refs.append((src, port))
        builder = registry.get(node.kind)
        if builder is None:
            raise PlanError(f"unknown operator kind {node.kind!r} at node {node_id!r}")
        try:
            op = builder(node_id, tuple(input_schemas), dict(node.params))
        except (ValueError, KeyError) as exc:
            raise PlanError(f"node {node_id!r} ({node.kind}): {exc}") from exc
        ops[node_id] = op
        in_edges[node_id] = []
        out_edges[node_id] = {}
    return order, ops, in_edges, out_edges, edges


def wire_edges(plan, order, ops, in_edges, out_edges, edges, queue_pages):
    for node_id in order:
        node = plan.nodes[node_id]
        for idx, ref in enumerate(node.inputs):
            src, port = _parse_ref(ref)
            if port in out_edges[src]:
                raise PlanError(
                    f"output {src}.{port} already connected; queues are one-to-one"
                )
            edge = Edge(src, port, node_id, idx, ops[src].output_schemas[port], queue_pages)
            edges.append(edge)
            in_edges[node_id].append(edge)
            out_edges[src][port] = edge
    for node_id, op in ops.items():
        missing = [p for p in range(op.n_outputs) if p not in out_edges[node_id]]
        if missing and not _is_sink(op):
            raise PlanError(f"node {node_id!r}: unconnected output ports {missing}")


def _is_sink(op: Operator) -> bool:
    return op.n_outputs == 0


# ---------------------------------------------------------------------------
# Deterministic single-threaded engine
# ---------------------------------------------------------------------------


class DeterministicEngine:
    def __init__(
        self,
        plan: Plan,
        registry: dict,
        page_size: int = DEFAULT_PAGE_SIZE,
        queue_pages: int = DEFAULT_QUEUE_PAGES,
        quantum: Optional[float] = None,
        feedback_enabled: bool = True,
        transfer_cost: float = 0.0,
        trace_pages: bool = False,
        seed: int = 0,
    ):
        self.page_size = page_size
        self.queue_pages = queue_pages
        self.quantum = float(quantum if quantum is not None else page_size)
        self.feedback_enabled = feedback_enabled
        self.transfer_cost = transfer_cost
        self.trace_pages = trace_pages
        self.seed = seed
        self.feedback_log: list = []
        self.page_log: Optional[list] = [] if trace_pages else None

        (self.order, self.ops, self.in_edges, self.out_edges, self.edges) = build_operators(
            plan, registry, seed
        )
        wire_edges(plan, self.order, self.ops, self.in_edges, self.out_edges, self.edges, queue_pages)
        self._buffers = {
            (op_id, port): []
            for op_id, ports in self.out_edges.items()
            for port in ports
        }
        for op in self.ops.values():
            op._ctx = self

    # -- context API ---------------------------------------------------
    def emit(self, op: Operator, port: int, item) -> None:
        if is_punct(item):
            op.counters.puncts_out += 1
        else:
            op.counters.tuples_out += 1
        buf = self._buffers[(op.id, port)]
        buf.append(item)
        if len(buf) >= self.page_size or is_punct(item):
            self._flush(op, port)

    def _flush(self, op: Operator, port: int) -> None:
        buf = self._buffers[(op.id, port)]
        if not buf:
            return
        edge = self.out_edges[op.id][port]
        page = Page(self.page_size, buf[:])
        buf.clear()
        edge.pages.append(page)
        if self.transfer_cost:
            op.counters.work_units += self.transfer_cost * len(page.items)
        if self.page_log is not None:
            self.page_log.append((edge.key, len(page.items), page.has_punct, page.capacity))

    def send_feedback(self, op: Operator, input_index: int, fb: FeedbackPunctuation) -> None:
        if not self.feedback_enabled:
            return
        edge = self.in_edges[op.id][input_index]
        if edge.eos and not edge.pages:
            return  # closed edge: message dropped
        edge.control_up.append(ControlMessage(ControlKind.FEEDBACK, fb))
        op.counters.feedback_sent += 1
        self.feedback_log.append((edge.key, fb.intent.value, fb.pattern.format()))

    # -- execution -----------------------------------------------------
    def run(self) -> RunReport:
        cursors = {op_id: None for op_id in self.order}  # (edge, page, index)
        rr_input = {op_id: 0 for op_id in self.order}
        ended_inputs = {op_id: set() for op_id in self.order}
        finished = set()

        def drain_control(op: Operator) -> bool:
            did = False
            for port, edge in self.out_edges[op.id].items():
                while edge.control_up:
                    msg = edge.control_up.popleft()
                    op.on_feedback(port, msg.payload)
                    did = True
            return did

        def next_item(op_id: str):
            """Return (input_index, item) or None; round-robin across inputs
            at page granularity."""
            cur = cursors[op_id]
            if cur is not None:
                edge, page, idx = cur
                item = page.items[idx]
                if idx + 1 < len(page.items):
                    cursors[op_id] = (edge, page, idx + 1)
                else:
                    cursors[op_id] = None
                return edge.input_index, item
            edges = self.in_edges[op_id]
            n = len(edges)
            start = rr_input[op_id]
            for k in range(n):
                edge = edges[(start + k) % n]
                if edge.pages:
                    rr_input[op_id] = ((start + k) % n + 1) % n
                    page = edge.pages.popleft()
                    cursors[op_id] = (edge, page, 0)
                    return next_item(op_id)
            return None

        def finish_op(op: Operator) -> None:
            op.finish()
            for port in self.out_edges[op.id]:
                self._flush(op, port)
                self.out_edges[op.id][port].eos = True
            finished.add(op.id)

        while len(finished) < len(self.order):
            progress = False
            for op_id in self.order:
                if op_id in finished:
                    continue
                op = self.ops[op_id]
                if drain_control(op):
                    progress = True
                # backpressure: yield while any output queue is full
                if any(
                    len(e.pages) >= e.capacity_pages
                    for e in self.out_edges[op_id].values()
                ):
                    continue
                if op.is_source:
                    if not op.exhausted:
                        before = op.counters.tuples_out + op.counters.puncts_out
                        op.generate(self.quantum)
                        if (op.counters.tuples_out + op.counters.puncts_out) != before or op.exhausted:
                            progress = True
                    if op.exhausted:
                        finish_op(op)
                        progress = True
                    continue
                spent = 0.0
                before_work = op.counters.work_units
                items_done = 0
                while spent < self.quantum:
                    nxt = next_item(op_id)
                    if nxt is None:
                        for edge in self.in_edges[op_id]:
                            if (
                                edge.eos
                                and not edge.pages
                                and edge.input_index not in ended_inputs[op_id]
                            ):
                                ended_inputs[op_id].add(edge.input_index)
                                op.on_input_end(edge.input_index)
                                progress = True
                        if len(ended_inputs[op_id]) == len(self.in_edges[op_id]):
                            finish_op(op)
                            progress = True
                        break
                    input_index, item = nxt
                    if is_punct(item):
                        op.counters.puncts_in += 1
                    else:
                        op.counters.tuples_in += 1
                    op.process_item(input_index, item)
                    items_done += 1
                    progress = True
                    spent = max(
                        op.counters.work_units - before_work,
                        items_done * _MIN_ITEM_COST,
                    )
            if not progress:
                blocked = [o for o in self.order if o not in finished]
                raise RunError(f"deadlock: no runnable operator among {blocked}")

        return self._report()

    def _report(self) -> RunReport:
        outputs = {}
        divergence = {}
        for op_id, op in self.ops.items():
            if hasattr(op, "collected"):
                outputs[op_id] = [i for i in op.collected if not is_punct(i)]
            if getattr(op, "divergence_series", None):
                divergence[op_id] = list(op.divergence_series)
        return RunReport(
            outputs=outputs,
            counters={op_id: op.counters for op_id, op in self.ops.items()},
            feedback_log=self.feedback_log,
            divergence=divergence,
            page_log=self.page_log,
        )


# ---------------------------------------------------------------------------
# Concurrent engine: one thread per operator
# ---------------------------------------------------------------------------


class _ConcurrentEdge:
    def __init__(self, edge: Edge):
        self.edge = edge
        self.lock = threading.Lock()
        self.not_full = threading.Condition(self.lock)
        self.closed = False


class ConcurrentEngine:
    """Operators run as threads connected by bounded paged queues; control
    messages wake the receiver and are processed before pending data."""

    def __init__(
        self,
        plan: Plan,
        registry: dict,
        page_size: int = DEFAULT_PAGE_SIZE,
        queue_pages: int = DEFAULT_QUEUE_PAGES,
        feedback_enabled: bool = True,
        transfer_cost: float = 0.0,
        seed: int = 0,
    ):
        self.page_size = page_size
        self.feedback_enabled = feedback_enabled
        self.transfer_cost = transfer_cost
        self.feedback_log: list = []
        self._log_lock = threading.Lock()
        self.page_log = None

        (self.order, self.ops, self.in_edges, self.out_edges, self.edges) = build_operators(
            plan, registry, seed
        )
        wire_edges(plan, self.order, self.ops, self.in_edges, self.out_edges, self.edges, queue_pages)
        self._cedges = {e.key: _ConcurrentEdge(e) for e in self.edges}
        self._wakeups = {op_id: threading.Condition() for op_id in self.order}
        self._buffers = {
            (op_id, port): []
            for op_id, ports in self.out_edges.items()
            for port in ports
        }
        self._errors: list = []
        for op in self.ops.values():
            op._ctx = self

    def _wake(self, op_id: str) -> None:
        cond = self._wakeups[op_id]
        with cond:
            cond.notify_all()

    # -- context API ---------------------------------------------------
    def emit(self, op: Operator, port: int, item) -> None:
        if is_punct(item):
            op.counters.puncts_out += 1
        else:
            op.counters.tuples_out += 1
        buf = self._buffers[(op.id, port)]
        buf.append(item)
        if len(buf) >= self.page_size or is_punct(item):
            self._flush(op, port)

    def _flush(self, op: Operator, port: int) -> None:
        buf = self._buffers[(op.id, port)]
        if not buf:
            return
        edge = self.out_edges[op.id][port]
        ce = self._cedges[edge.key]
        page = Page(self.page_size, buf[:])
        buf.clear()
        with ce.not_full:
            while len(edge.pages) >= edge.capacity_pages and not ce.closed:
                ce.not_full.wait(0.05)
            edge.pages.append(page)
        if self.transfer_cost:
            op.counters.work_units += self.transfer_cost * len(page.items)
        self._wake(edge.consumer)

    def send_feedback(self, op: Operator, input_index: int, fb: FeedbackPunctuation) -> None:
        if not self.feedback_enabled:
            return
        edge = self.in_edges[op.id][input_index]
        if edge.eos and not edge.pages:
            return
        edge.control_up.append(ControlMessage(ControlKind.FEEDBACK, fb))
        op.counters.feedback_sent += 1
        with self._log_lock:
            self.feedback_log.append((edge.key, fb.intent.value, fb.pattern.format()))
        self._wake(edge.producer)

    # -- execution -----------------------------------------------------
    def _run_op(self, op_id: str) -> None:
        op = self.ops[op_id]
        try:
            if op.is_source:
                while not op.exhausted:
                    self._drain_control(op)
                    op.generate(self.page_size)
                self._drain_control(op)
                self._close_outputs(op)
                return
            ended = set()
            rr = 0
            edges = self.in_edges[op_id]
            while True:
                self._drain_control(op)
                page_edge = None
                for k in range(len(edges)):
                    e = edges[(rr + k) % len(edges)]
                    ce = self._cedges[e.key]
                    with ce.lock:
                        if e.pages:
                            page = e.pages.popleft()
                            ce.not_full.notify_all()
                            page_edge = (e, page)
                            rr = ((rr + k) % len(edges) + 1) % len(edges)
                            break
                if page_edge is None:
                    for e in edges:
                        if e.eos and not e.pages and e.input_index not in ended:
                            ended.add(e.input_index)
                            op.on_input_end(e.input_index)
                    if len(ended) == len(edges):
                        break
                    cond = self._wakeups[op_id]
                    with cond:
                        cond.wait(0.01)
                    continue
                e, page = page_edge
                for item in page.items:
                    if is_punct(item):
                        op.counters.puncts_in += 1
                    else:
                        op.counters.tuples_in += 1
                    op.process_item(e.input_index, item)
            op.finish()
            self._close_outputs(op)
        except Exception as exc:  # surfaced after join
            self._errors.append((op_id, exc))
            self._close_outputs(op)

    def _drain_control(self, op: Operator) -> None:
        for port, edge in self.out_edges[op.id].items():
            while edge.control_up:
                msg = edge.control_up.popleft()
                op.on_feedback(port, msg.payload)

    def _close_outputs(self, op: Operator) -> None:
        for port, edge in self.out_edges[op.id].items():
            self._flush(op, port)
            edge.eos = True
            ce = self._cedges[edge.key]
            with ce.not_full:
                ce.closed = True
                ce.not_full.notify_all()
            self._wake(edge.consumer)

    def run(self) -> RunReport:
        threads = [
            threading.Thread(target=self._run_op, args=(op_id,), name=op_id)
            for op_id in self.order
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if self._errors:
            op_id, exc = self._errors[0]
            raise RunError(f"operator {op_id!r} failed: {exc}") from exc
        outputs = {}
        divergence = {}
        for op_id, op in self.ops.items():
            if hasattr(op, "collected"):
                outputs[op_id] = [i for i in op.collected if not is_punct(i)]
            if getattr(op, "divergence_series", None):
                divergence[op_id] = list(op.divergence_series)
        return RunReport(
            outputs=outputs,
            counters={op_id: op.counters for op_id, op in self.ops.items()},
            feedback_log=self.feedback_log,
            divergence=divergence,
            page_log=None,
        )
