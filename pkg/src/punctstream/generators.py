"""Seeded synthetic sensor streams and the zoom-ahead feedback schedule.

The traffic-style stream models a highway split into segments, each
carrying a fixed set of speed detectors that report once per resolution
interval.  Rows are ordered by timestamp, detectors interleaved within
each tick, so the stream is in timestamp order and can be punctuated by
the source.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterator, List, Optional

from punctstream.core import AttrType, Constraint, Pattern, Schema, assumed

SENSOR_SCHEMA = Schema(
    "sensor",
    (
        ("det", AttrType.INT),
        ("seg", AttrType.INT),
        ("ts", AttrType.TIMESTAMP),
        ("speed", AttrType.FLOAT),
    ),
    2,
)

# two-attribute reading stream for the imputation pipeline
READING_SCHEMA = Schema(
    "reading",
    (
        ("det", AttrType.INT),
        ("ts", AttrType.TIMESTAMP),
        ("speed", AttrType.FLOAT),
    ),
    1,
)


@dataclass(frozen=True)
class SensorStreamConfig:
    duration_seconds: int
    resolution_seconds: int = 20
    segments: int = 9
    detectors_per_segment: int = 40
    null_fraction: float = 0.0
    seed: int = 0

    @property
    def total_rows(self) -> int:
        ticks = self.duration_seconds // self.resolution_seconds
        return ticks * self.segments * self.detectors_per_segment


def sensor_rows(config: SensorStreamConfig) -> Iterator[tuple]:
    """Rows (det, seg, ts, speed) in timestamp order; speed is a smooth
    per-segment baseline plus noise, or null at ``null_fraction``."""
    rng = random.Random(config.seed)
    n_det = config.segments * config.detectors_per_segment
    base = [45.0 + 20.0 * rng.random() for _ in range(config.segments)]
    for tick in range(config.duration_seconds // config.resolution_seconds):
        ts = tick * config.resolution_seconds
        for det in range(n_det):
            seg = det // config.detectors_per_segment
            if config.null_fraction and rng.random() < config.null_fraction:
                speed = None
            else:
                speed = round(base[seg] + rng.uniform(-5.0, 5.0), 2)
            yield (det, seg, ts, speed)
        # bounded per-segment drift keeps the baselines non-constant
        for seg in range(config.segments):
            base[seg] = min(75.0, max(20.0, base[seg] + rng.uniform(-0.5, 0.5)))


@dataclass(frozen=True)
class ReadingStreamConfig:
    n_rows: int
    detectors: int = 4
    null_fraction: float = 0.5
    seed: int = 0


def reading_rows(config: ReadingStreamConfig) -> List[tuple]:
    """Rows (det, ts, speed), one per second, with ``null_fraction`` of the
    readings missing — the imputation pipeline's input."""
    rng = random.Random(config.seed)
    rows = []
    for ts in range(config.n_rows):
        det = ts % config.detectors
        if rng.random() < config.null_fraction:
            speed = None
        else:
            speed = round(40.0 + 30.0 * rng.random(), 2)
        rows.append((det, ts, speed))
    return rows


# ---------------------------------------------------------------------------
# Zoom schedule
# ---------------------------------------------------------------------------


@dataclass
class ZoomSchedule:
    """A display cycling through segments, one visible at a time.

    Every ``interval_seconds`` the visible segment advances; the consumer
    then knows it will ignore the other segments' results for that
    interval and says so: for each hidden segment k it sends
    ``assumed [seg=k, win in [t, t+interval)]`` against the aggregate
    output schema.  Patterns are produced ``lead_seconds`` early so the
    round trip completes before the data arrives; the scope is entirely in
    the future, so early installation loses nothing.
    """

    output_schema: Schema
    segments: int
    interval_seconds: int
    duration_seconds: int
    lead_seconds: int = 90
    seg_attr: str = "seg"
    win_attr: str = "win"
    _next_switch: int = field(default=0, init=False)

    def visible_segment(self, t: int) -> int:
        return (t // self.interval_seconds) % self.segments

    def __call__(self, observed_ts: int):
        """Time-injector hook for a sink: returns the feedback due now."""
        out = []
        while (
            self._next_switch < self.duration_seconds
            and observed_ts >= self._next_switch - self.lead_seconds
        ):
            t = self._next_switch
            visible = self.visible_segment(t)
            win_c = Constraint.interval(
                t, min(t + self.interval_seconds, self.duration_seconds)
            )
            for seg in range(self.segments):
                if seg == visible:
                    continue
                out.append(
                    assumed(
                        Pattern.of(
                            self.output_schema,
                            **{self.seg_attr: Constraint.eq(seg), self.win_attr: win_c},
                        )
                    )
                )
            self._next_switch += self.interval_seconds
        return out
