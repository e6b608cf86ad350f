import pytest

from punctstream.core import AttrType, Schema


@pytest.fixture
def ts_value_schema():
    """(timestamp, datavalue) — the two-attribute feedback examples."""
    return Schema(
        "reading",
        (("ts", AttrType.TIMESTAMP), ("datavalue", AttrType.INT)),
        timestamp_attr=0,
    )


@pytest.fixture
def left_schema():
    return Schema(
        "A",
        (("a", AttrType.INT), ("t", AttrType.TIMESTAMP), ("id", AttrType.INT)),
        timestamp_attr=1,
    )


@pytest.fixture
def right_schema():
    return Schema(
        "B",
        (("t", AttrType.TIMESTAMP), ("id", AttrType.INT), ("b", AttrType.INT)),
        timestamp_attr=0,
    )


@pytest.fixture
def joined_schema():
    return Schema(
        "C",
        (
            ("a", AttrType.INT),
            ("t", AttrType.TIMESTAMP),
            ("id", AttrType.INT),
            ("b", AttrType.INT),
        ),
        timestamp_attr=1,
    )
