"""Core data model: schemas, rows, punctuation patterns, pages, and
control messages, plus the pattern algebra (matching, subsumption,
conjunction).

Rows are plain Python tuples positionally aligned with their schema;
``None`` is the null value.  All types here are immutable after
construction and safe to share across concurrent operators.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence, Union

Row = tuple  # value vector, positionally aligned with a Schema


class SchemaMismatchError(ValueError):
    """Raised when two pattern-algebra arguments disagree on schema."""


class PatternSyntaxError(ValueError):
    """Raised for malformed pattern text."""


class AttrType(enum.Enum):
    INT = "int"
    FLOAT = "float"
    TEXT = "text"
    TIMESTAMP = "timestamp"  # 64-bit integer seconds

    @property
    def orderable(self) -> bool:
        return self is not AttrType.TEXT

    @property
    def discrete(self) -> bool:
        return self in (AttrType.INT, AttrType.TIMESTAMP)


_PYTYPES = {
    AttrType.INT: (int,),
    AttrType.TIMESTAMP: (int,),
    AttrType.FLOAT: (int, float),
    AttrType.TEXT: (str,),
}


@dataclass(frozen=True)
class Schema:
    """Named, ordered attribute list with a designated timestamp attribute."""

    name: str
    attributes: tuple  # of (attr_name, AttrType)
    timestamp_attr: int

    def __post_init__(self):
        object.__setattr__(self, "attributes", tuple(self.attributes))
        names = [n for n, _ in self.attributes]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate attribute names in schema {self.name!r}")
        if not (0 <= self.timestamp_attr < len(self.attributes)):
            raise ValueError("timestamp_attr out of range")
        if self.attributes[self.timestamp_attr][1] is not AttrType.TIMESTAMP:
            raise ValueError("timestamp_attr must index a timestamp attribute")

    def __len__(self) -> int:
        return len(self.attributes)

    @property
    def attr_names(self) -> tuple:
        return tuple(n for n, _ in self.attributes)

    @property
    def attr_types(self) -> tuple:
        return tuple(t for _, t in self.attributes)

    def index_of(self, attr_name: str) -> int:
        for i, (n, _) in enumerate(self.attributes):
            if n == attr_name:
                return i
        raise KeyError(f"no attribute {attr_name!r} in schema {self.name!r}")

    def check_row(self, row: Row) -> None:
        if len(row) != len(self.attributes):
            raise ValueError(
                f"row arity {len(row)} != schema {self.name!r} arity {len(self.attributes)}"
            )
        for v, (n, t) in zip(row, self.attributes):
            if v is None:
                continue
            if not isinstance(v, _PYTYPES[t]) or isinstance(v, bool):
                raise ValueError(f"attribute {n!r}: {v!r} is not {t.value}")


class Op(enum.Enum):
    ANY = "*"
    EQ = "="
    LT = "<"
    LE = "<="
    GT = ">"
    GE = ">="
    RANGE = "range"


@dataclass(frozen=True)
class Constraint:
    """Single-attribute constraint of a punctuation pattern.

    ``RANGE`` carries explicit bounds; the canonical half-open interval
    [lo, hi) has ``lo_incl=True, hi_incl=False``.  Other inclusivities
    only arise as conjunction results over float attributes.
    """

    op: Op
    value: object = None
    lo: object = None
    hi: object = None
    lo_incl: bool = True
    hi_incl: bool = False

    # -- constructors -------------------------------------------------
    @staticmethod
    def wildcard() -> "Constraint":
        return _WILDCARD

    @staticmethod
    def eq(v) -> "Constraint":
        return Constraint(Op.EQ, value=v)

    @staticmethod
    def lt(v) -> "Constraint":
        return Constraint(Op.LT, value=v)

    @staticmethod
    def le(v) -> "Constraint":
        return Constraint(Op.LE, value=v)

    @staticmethod
    def gt(v) -> "Constraint":
        return Constraint(Op.GT, value=v)

    @staticmethod
    def ge(v) -> "Constraint":
        return Constraint(Op.GE, value=v)

    @staticmethod
    def interval(lo, hi) -> "Constraint":
        if not lo < hi:
            raise ValueError(f"interval requires lo < hi, got [{lo}, {hi})")
        return Constraint(Op.RANGE, lo=lo, hi=hi)

    # -- evaluation ---------------------------------------------------
    def matches_value(self, v) -> bool:
        op = self.op
        if op is Op.ANY:
            return True
        if v is None:  # null satisfies only the wildcard
            return False
        if op is Op.EQ:
            return v == self.value
        if op is Op.LT:
            return v < self.value
        if op is Op.LE:
            return v <= self.value
        if op is Op.GT:
            return v > self.value
        if op is Op.GE:
            return v >= self.value
        lo_ok = v > self.lo or (self.lo_incl and v == self.lo)
        hi_ok = v < self.hi or (self.hi_incl and v == self.hi)
        return lo_ok and hi_ok

    @property
    def is_wildcard(self) -> bool:
        return self.op is Op.ANY

    # -- text form ----------------------------------------------------
    def format(self) -> str:
        op = self.op
        if op is Op.ANY:
            return "*"
        if op is Op.RANGE:
            lb = "[" if self.lo_incl else "("
            rb = "]" if self.hi_incl else ")"
            return f"{lb}{_fmt_value(self.lo)},{_fmt_value(self.hi)}{rb}"
        sym = {Op.EQ: "=", Op.LT: "<", Op.LE: "<=", Op.GT: ">", Op.GE: ">="}[op]
        return f"{sym}{_fmt_value(self.value)}"

    def __str__(self) -> str:
        return self.format()


_WILDCARD = Constraint(Op.ANY)


def _fmt_value(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


# ---------------------------------------------------------------------------
# Bounds form: (lo, lo_strict, hi, hi_strict) with None = unbounded.
# For discrete (int/timestamp) attributes strict bounds are closed up so
# that e.g. <5 and <=4 compare equal.
# ---------------------------------------------------------------------------


def _bounds(c: Constraint, discrete: bool):
    op = c.op
    if op is Op.ANY:
        return (None, False, None, False)
    if op is Op.EQ:
        return (c.value, False, c.value, False)
    if op is Op.LT:
        lo, los, hi, his = None, False, c.value, True
    elif op is Op.LE:
        lo, los, hi, his = None, False, c.value, False
    elif op is Op.GT:
        lo, los, hi, his = c.value, True, None, False
    elif op is Op.GE:
        lo, los, hi, his = c.value, False, None, False
    else:
        lo, los, hi, his = c.lo, not c.lo_incl, c.hi, not c.hi_incl
    if discrete:
        if lo is not None and los:
            lo, los = lo + 1, False
        if hi is not None and his:
            hi, his = hi - 1, False
    return (lo, los, hi, his)


def _bounds_empty(b, discrete: bool) -> bool:
    lo, los, hi, his = b
    if lo is None or hi is None:
        return False
    if lo > hi:
        return True
    return lo == hi and (los or his)


def _bounds_subsume(p, q) -> bool:
    """True iff the interval p contains the interval q (same type domain)."""
    plo, plos, phi, phis = p
    qlo, qlos, qhi, qhis = q
    if plo is not None:
        if qlo is None:
            return False
        if plo > qlo or (plo == qlo and plos and not qlos):
            return False
    if phi is not None:
        if qhi is None:
            return False
        if phi < qhi or (phi == qhi and phis and not qhis):
            return False
    return True


def _bounds_intersect(p, q):
    plo, plos, phi, phis = p
    qlo, qlos, qhi, qhis = q
    if plo is None or (qlo is not None and (qlo > plo or (qlo == plo and qlos))):
        lo, los = qlo, qlos
    else:
        lo, los = plo, plos
    if phi is None or (qhi is not None and (qhi < phi or (qhi == phi and qhis))):
        hi, his = qhi, qhis
    else:
        hi, his = phi, phis
    return (lo, los, hi, his)


def _constraint_from_bounds(b, discrete: bool) -> Constraint:
    lo, los, hi, his = b
    if lo is None and hi is None:
        return _WILDCARD
    if lo is not None and hi is not None and lo == hi and not los and not his:
        return Constraint.eq(lo)
    if lo is None:
        return Constraint.lt(hi) if his else Constraint.le(hi)
    if hi is None:
        return Constraint.gt(lo) if los else Constraint.ge(lo)
    if discrete:
        # canonical half-open integer interval
        return Constraint.interval(lo, hi + 1)
    return Constraint(Op.RANGE, lo=lo, hi=hi, lo_incl=not los, hi_incl=his)


# ---------------------------------------------------------------------------
# Patterns
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Pattern:
    """Per-attribute constraint vector describing a subset of a stream."""

    schema: Schema
    constraints: tuple

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if len(self.constraints) != len(self.schema):
            raise ValueError(
                f"pattern arity {len(self.constraints)} != schema arity {len(self.schema)}"
            )
        for c, (name, t) in zip(self.constraints, self.schema.attributes):
            if c.op in (Op.LT, Op.LE, Op.GT, Op.GE, Op.RANGE) and not t.orderable:
                raise ValueError(f"comparison constraint on non-orderable attribute {name!r}")

    @staticmethod
    def all_wildcard(schema: Schema) -> "Pattern":
        return Pattern(schema, (_WILDCARD,) * len(schema))

    @staticmethod
    def of(schema: Schema, **by_name) -> "Pattern":
        """Build a pattern from attribute-name keyword arguments."""
        cs = [_WILDCARD] * len(schema)
        for name, c in by_name.items():
            cs[schema.index_of(name)] = c
        return Pattern(schema, tuple(cs))

    @property
    def is_all_wildcard(self) -> bool:
        return all(c.is_wildcard for c in self.constraints)

    def constrained_indices(self) -> tuple:
        return tuple(i for i, c in enumerate(self.constraints) if not c.is_wildcard)

    def matches(self, row: Row) -> bool:
        for c, v in zip(self.constraints, row):
            if c.op is Op.ANY:
                continue
            if not c.matches_value(v):
                return False
        return True

    def matcher(self) -> Callable[[Row], bool]:
        """Compiled matcher closure over the non-wildcard constraints."""
        checks = [
            (i, c.matches_value)
            for i, c in enumerate(self.constraints)
            if not c.is_wildcard
        ]
        if not checks:
            return lambda row: True
        if len(checks) == 1:
            i, f = checks[0]
            return lambda row: f(row[i])
        return lambda row: all(f(row[i]) for i, f in checks)

    def format(self) -> str:
        return f"{self.schema.name}: [{', '.join(c.format() for c in self.constraints)}]"

    def __str__(self) -> str:
        return self.format()


def _require_same_schema(a: Pattern, b) -> None:
    if a.schema is not b.schema and a.schema != b.schema:
        raise SchemaMismatchError(
            f"schema mismatch: {a.schema.name!r} vs {b.schema.name!r}"
        )


def matches(row: Row, pattern: Pattern, schema: Optional[Schema] = None) -> bool:
    """True iff every constraint is satisfied by the corresponding value.

    ``schema``, when given, is checked against the pattern's schema; rows
    themselves carry no schema reference.
    """
    if schema is not None and schema != pattern.schema:
        raise SchemaMismatchError(
            f"schema mismatch: {schema.name!r} vs {pattern.schema.name!r}"
        )
    return pattern.matches(row)


def subsumes(p: Pattern, q: Pattern) -> bool:
    """True iff every row matching q also matches p, decided attribute-wise."""
    _require_same_schema(p, q)
    types = p.schema.attr_types
    # an unsatisfiable q is subsumed by anything
    for qc, t in zip(q.constraints, types):
        if t.orderable and _bounds_empty(_bounds(qc, t.discrete), t.discrete):
            return True
    for pc, qc, t in zip(p.constraints, q.constraints, types):
        if pc.is_wildcard:
            continue
        if qc.is_wildcard:
            return False  # q admits nulls (and unbounded values), p does not
        if not t.orderable:
            if not (pc.op is Op.EQ and qc.op is Op.EQ and pc.value == qc.value):
                return False
            continue
        if not _bounds_subsume(_bounds(pc, t.discrete), _bounds(qc, t.discrete)):
            return False
    return True


def conjoin(p: Pattern, q: Pattern) -> Optional[Pattern]:
    """Attribute-wise intersection; None when some attribute is unsatisfiable."""
    _require_same_schema(p, q)
    out = []
    for pc, qc, t in zip(p.constraints, q.constraints, p.schema.attr_types):
        if qc.is_wildcard:
            out.append(pc)
            continue
        if pc.is_wildcard:
            out.append(qc)
            continue
        if not t.orderable:
            if pc.op is Op.EQ and qc.op is Op.EQ and pc.value == qc.value:
                out.append(pc)
                continue
            return None
        b = _bounds_intersect(_bounds(pc, t.discrete), _bounds(qc, t.discrete))
        if _bounds_empty(b, t.discrete):
            return None
        out.append(_constraint_from_bounds(b, t.discrete))
    return Pattern(p.schema, tuple(out))


# ---------------------------------------------------------------------------
# Punctuation, stream items, pages, control messages
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EmbeddedPunctuation:
    """Flows with the data: no future row in this stream matches pattern."""

    pattern: Pattern


class Intent(enum.Enum):
    ASSUMED = "assumed"    # notation: ¬ — matching rows will be ignored downstream
    DESIRED = "desired"    # notation: ? — carried but never exploited here
    DEMANDED = "demanded"  # notation: ! — carried but never exploited here


@dataclass(frozen=True)
class FeedbackPunctuation:
    """Flows upstream on the control channel against the data flow."""

    intent: Intent
    pattern: Pattern


def assumed(pattern: Pattern) -> FeedbackPunctuation:
    return FeedbackPunctuation(Intent.ASSUMED, pattern)


StreamItem = Union[Row, EmbeddedPunctuation]


def is_punct(item: StreamItem) -> bool:
    return type(item) is EmbeddedPunctuation


@dataclass
class Page:
    """Fixed-capacity batch of stream items; the unit of data transfer."""

    capacity: int
    items: list = field(default_factory=list)

    def __post_init__(self):
        if self.capacity <= 0:
            raise ValueError("page capacity must be positive")

    @property
    def full(self) -> bool:
        return len(self.items) >= self.capacity

    @property
    def has_punct(self) -> bool:
        return any(is_punct(i) for i in self.items)


class ControlKind(enum.Enum):
    FEEDBACK = "feedback"          # upstream
    END_OF_STREAM = "end_of_stream"  # downstream
    SHUTDOWN = "shutdown"          # downstream


class Direction(enum.Enum):
    UPSTREAM = "upstream"
    DOWNSTREAM = "downstream"


_CONTROL_DIRECTION = {
    ControlKind.FEEDBACK: Direction.UPSTREAM,
    ControlKind.END_OF_STREAM: Direction.DOWNSTREAM,
    ControlKind.SHUTDOWN: Direction.DOWNSTREAM,
}


@dataclass(frozen=True)
class ControlMessage:
    kind: ControlKind
    payload: Optional[FeedbackPunctuation] = None

    def __post_init__(self):
        if self.kind is ControlKind.FEEDBACK and self.payload is None:
            raise ValueError("feedback control message needs a payload")
        if self.kind is not ControlKind.FEEDBACK and self.payload is not None:
            raise ValueError(f"{self.kind.value} carries no payload")

    @property
    def direction(self) -> Direction:
        return _CONTROL_DIRECTION[self.kind]


# ---------------------------------------------------------------------------
# Pattern text syntax:  schema_name: [c1, c2, ...]
# with c in  *  =v  <v  <=v  >v  >=v  [lo,hi)
# ---------------------------------------------------------------------------


def parse_value(text: str, attr_type: AttrType):
    text = text.strip()
    if text == "null":
        return None
    try:
        if attr_type in (AttrType.INT, AttrType.TIMESTAMP):
            return int(text)
        if attr_type is AttrType.FLOAT:
            return float(text)
    except ValueError as exc:
        raise PatternSyntaxError(f"bad {attr_type.value} literal {text!r}") from exc
    return text  # text attribute: bare string


def parse_constraint(text: str, attr_type: AttrType) -> Constraint:
    text = text.strip()
    if text == "*":
        return _WILDCARD
    if text[0] in "[(":
        lo_incl = text[0] == "["
        if text[-1] not in ")]":
            raise PatternSyntaxError(f"unterminated interval {text!r}")
        hi_incl = text[-1] == "]"
        body = text[1:-1]
        parts = body.split(",")
        if len(parts) != 2:
            raise PatternSyntaxError(f"interval needs two bounds: {text!r}")
        lo = parse_value(parts[0], attr_type)
        hi = parse_value(parts[1], attr_type)
        return Constraint(Op.RANGE, lo=lo, hi=hi, lo_incl=lo_incl, hi_incl=hi_incl)
    for sym, ctor in (
        ("<=", Constraint.le),
        (">=", Constraint.ge),
        ("<", Constraint.lt),
        (">", Constraint.gt),
        ("=", Constraint.eq),
    ):
        if text.startswith(sym):
            return ctor(parse_value(text[len(sym):], attr_type))
    raise PatternSyntaxError(f"cannot parse constraint {text!r}")


def _split_top_level(body: str) -> list:
    """Split on commas not nested inside interval brackets."""
    parts, depth, cur = [], 0, []
    for ch in body:
        if ch in "[(":
            depth += 1
        elif ch in ")]":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return parts


def parse_pattern(text: str, schema: Schema) -> Pattern:
    text = text.strip()
    if ":" in text.split("[", 1)[0]:
        name, _, rest = text.partition(":")
        if name.strip() != schema.name:
            raise PatternSyntaxError(
                f"pattern names schema {name.strip()!r}, expected {schema.name!r}"
            )
        text = rest.strip()
    if not (text.startswith("[") and text.endswith("]")):
        raise PatternSyntaxError(f"pattern body must be bracketed: {text!r}")
    parts = _split_top_level(text[1:-1])
    if len(parts) != len(schema):
        raise PatternSyntaxError(
            f"pattern has {len(parts)} constraints, schema {schema.name!r} has {len(schema)}"
        )
    cs = tuple(
        parse_constraint(part, t) for part, t in zip(parts, schema.attr_types)
    )
    return Pattern(schema, cs)
