"""Text form for plans.

A plan file declares schemas and nodes, one per line::

    schema sensor(det:int, seg:int, ts:timestamp*, speed:float)
    node src source schema=sensor file=stream.txt punct_interval=60
    node flt select input=src predicate="speed >= 0"
    node avg average input=flt range_seconds=60 group_by=seg value=speed
    node out sink input=avg

``input=`` may repeat (or take a comma list) for multi-input operators and
accepts ``node.port`` references for split outputs.  Values parse as int,
float, bool, or quoted/bare strings.  Blank lines and ``#`` comments are
ignored.
"""

from __future__ import annotations

import shlex
from typing import Dict, Tuple

from punctstream.core import Schema
from punctstream.operators import parse_schema_decl
from punctstream.runtime import Plan, PlanError


def _parse_scalar(text: str):
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def parse_plan(text: str) -> Tuple[Plan, Dict[str, Schema]]:
    plan = Plan()
    schemas: Dict[str, Schema] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            if line.startswith("schema "):
                schema = parse_schema_decl(line)
                schemas[schema.name] = schema
                continue
            if not line.startswith("node "):
                raise PlanError(f"expected 'schema' or 'node', got {line.split()[0]!r}")
            parts = shlex.split(line)
            if len(parts) < 3:
                raise PlanError("node needs a name and an operator kind")
            _, node_id, kind = parts[:3]
            inputs = []
            params = {}
            for item in parts[3:]:
                key, sep, value = item.partition("=")
                if not sep:
                    raise PlanError(f"expected key=value, got {item!r}")
                if key == "input":
                    inputs.extend(v for v in value.split(",") if v)
                elif key == "schema":
                    if value not in schemas:
                        raise PlanError(f"unknown schema {value!r}")
                    params["schema"] = schemas[value]
                elif key in ("group_by", "on"):
                    params[key] = tuple(v for v in value.split(",") if v)
                else:
                    params[key] = _parse_scalar(value)
            if kind == "join" and "on" in params:
                # join keys pair up as left:right, plain name when shared
                pairs = []
                for spec in params["on"]:
                    l, _, r = spec.partition(":")
                    pairs.append((l, r or l))
                params["on"] = tuple(pairs)
            plan.add(node_id, kind, inputs=inputs, **params)
        except PlanError as exc:
            raise PlanError(f"line {lineno}: {exc}") from None
    return plan, schemas


def load_plan(path: str) -> Tuple[Plan, Dict[str, Schema]]:
    with open(path) as fh:
        return parse_plan(fh.read())
