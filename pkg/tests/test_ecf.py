"""Codec tests: round-trip identity, footer stats oracle, corruption detection."""

import json
import random
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edsp import ecf
from edsp.errors import (
    BadMagicError,
    CodecError,
    TypeMismatchError,
    UnknownColumnError,
)
from edsp.predicates import and_, eq, ge, is_null, lt, or_

POI_SCHEMA = ecf.Schema(
    (
        ecf.Field("id", "INT64"),
        ecf.Field("prefecture", "STRING"),
        ecf.Field("rating", "FLOAT64", nullable=True),
        ecf.Field("active", "BOOL"),
    )
)


def naive_stats(rows, schema):
    """Independent oracle: a plain pass over the source rows."""
    out = {}
    for idx, f in enumerate(schema.fields):
        values = [r[idx] for r in rows if r[idx] is not None]
        out[f.name] = ecf.ColumnStats(
            min=min(values) if values else None,
            max=max(values) if values else None,
            null_count=sum(1 for r in rows if r[idx] is None),
        )
    return out


def gen_poi_rows(n, seed=7):
    rng = random.Random(seed)
    rows = []
    for i in range(1, n + 1):
        rows.append(
            (
                i,
                f"P{rng.randrange(1, 48):02d}",
                None if rng.random() < 0.1 else rng.uniform(0, 5),
                rng.random() < 0.5,
            )
        )
    return rows


def test_zero_rows_round_trip():
    data, stats, count = ecf.write_file(POI_SCHEMA, [])
    assert count == 0
    schema, rows, read_stats, row_count = ecf.read_file(data)
    assert schema == POI_SCHEMA
    assert rows == [] and row_count == 0
    for s in read_stats.values():
        assert s.min is None and s.max is None and s.null_count == 0


def test_simple_int_stats():
    schema = ecf.Schema((ecf.Field("v", "INT64"),))
    data, stats, _ = ecf.write_file(schema, [(1,), (3,), (2,)])
    assert stats["v"].min == 1 and stats["v"].max == 3 and stats["v"].null_count == 0
    _, rows, _, _ = ecf.read_file(data)
    assert rows == [(1,), (3,), (2,)]


def test_generated_rows_stats_match_oracle():
    rows = gen_poi_rows(10_000)
    data, stats, count = ecf.write_file(POI_SCHEMA, rows)
    assert count == 10_000
    oracle = naive_stats(rows, POI_SCHEMA)
    for name, expect in oracle.items():
        assert stats[name].min == expect.min
        assert stats[name].max == expect.max
        assert stats[name].null_count == expect.null_count
    # And the footer agrees without a full decode.
    row_count, footer_stats = ecf.read_footer(data)
    assert row_count == 10_000
    for name, expect in oracle.items():
        assert footer_stats[name].min == expect.min
        assert footer_stats[name].max == expect.max


def test_round_trip_is_exact():
    rows = gen_poi_rows(999)  # not a multiple of 8: exercises bitmap tails
    data, _, _ = ecf.write_file(POI_SCHEMA, rows)
    _, decoded, _, _ = ecf.read_file(data)
    assert decoded == rows  # FLOAT64 bit-exact via ==


def test_string_round_trip_nul_and_multibyte():
    schema = ecf.Schema((ecf.Field("s", "STRING", nullable=True),))
    values = ["", "a\x00b", "東京タワー", "café ☕", None, "'quoted'', x", "🙂" * 3]
    data, _, _ = ecf.write_file(schema, [(v,) for v in values])
    _, rows, _, _ = ecf.read_file(data)
    decoded = [r[0] for r in rows]
    assert decoded == values
    for a, b in zip(decoded, values):
        if a is not None:
            assert a.encode("utf-8") == b.encode("utf-8")


def test_all_null_column_has_absent_minmax():
    schema = ecf.Schema((ecf.Field("x", "FLOAT64", nullable=True),))
    data, stats, _ = ecf.write_file(schema, [(None,)] * 17)
    assert stats["x"].min is None and stats["x"].max is None
    assert stats["x"].null_count == 17
    _, rows, _, _ = ecf.read_file(data)
    assert all(r == (None,) for r in rows)


def test_nan_rejected_at_write():
    schema = ecf.Schema((ecf.Field("x", "FLOAT64"),))
    with pytest.raises(TypeMismatchError):
        ecf.write_file(schema, [(float("nan"),)])
    with pytest.raises(TypeMismatchError):
        ecf.write_file(schema, [(float("inf"),)])


def test_type_mismatch_rejected():
    schema = ecf.Schema((ecf.Field("x", "INT64"),))
    with pytest.raises(TypeMismatchError):
        ecf.write_file(schema, [("nope",)])
    with pytest.raises(TypeMismatchError):
        ecf.write_file(schema, [(True,)])  # bool is not INT64
    with pytest.raises(TypeMismatchError):
        ecf.write_file(schema, [(None,)])  # non-nullable
    with pytest.raises(TypeMismatchError):
        ecf.write_file(schema, [(1 << 70,)])


def test_surrogate_string_rejected():
    schema = ecf.Schema((ecf.Field("s", "STRING"),))
    with pytest.raises(TypeMismatchError):
        ecf.write_file(schema, [("\ud800",)])


def test_bad_magic():
    data, _, _ = ecf.write_file(POI_SCHEMA, gen_poi_rows(3))
    with pytest.raises(BadMagicError):
        ecf.read_file(b"XXXX" + data[4:])
    with pytest.raises(BadMagicError):
        ecf.read_file(data[:-4] + b"XXXX")


def test_truncated_file():
    data, _, _ = ecf.write_file(POI_SCHEMA, gen_poi_rows(100))
    with pytest.raises(CodecError):
        ecf.read_file(data[: len(data) // 2])


def test_footer_length_flip_detected():
    data, _, _ = ecf.write_file(POI_SCHEMA, gen_poi_rows(50))
    blob = bytearray(data)
    blob[-8] ^= 0xFF  # low byte of footer_length
    with pytest.raises(CodecError):
        ecf.read_file(bytes(blob))


def test_mutation_oracle_100_random_single_byte_flips():
    """Oracle: every single-byte corruption raises, or the decode is
    byte-identical to the original (never a silent wrong answer)."""
    data, _, _ = ecf.write_file(POI_SCHEMA, gen_poi_rows(200, seed=3))
    _, original_rows, _, _ = ecf.read_file(data)
    rng = random.Random(42)
    for _ in range(100):
        pos = rng.randrange(len(data))
        flip = rng.randrange(1, 256)
        blob = bytearray(data)
        blob[pos] ^= flip
        with pytest.raises(CodecError):
            ecf.read_file(bytes(blob))


def test_project_read_reads_fewer_bytes():
    schema = ecf.Schema((ecf.Field("a", "INT64"), ecf.Field("b", "STRING")))
    rows = [(i, f"value-{i}" * 3) for i in range(500)]
    data, _, _ = ecf.write_file(schema, rows)
    only_a, counters = ecf.project_read(data, ["a"])
    assert only_a == [(i,) for i in range(500)]
    assert counters.bytes_read < len(data)
    full, full_counters = ecf.project_read(data, None)
    assert counters.bytes_read < full_counters.bytes_read


def test_project_read_false_predicate():
    data, _, _ = ecf.write_file(POI_SCHEMA, gen_poi_rows(100))
    rows, _ = ecf.project_read(data, ["id"], lt("id", 0))
    assert rows == []


def test_project_read_filter_matches_naive_oracle():
    rows = gen_poi_rows(5000)
    data, _, _ = ecf.write_file(POI_SCHEMA, rows)
    got, _ = ecf.project_read(data, ["id", "prefecture"], eq("prefecture", "P13"))
    # Oracle: full decode, then filter.
    _, all_rows, _, _ = ecf.read_file(data)
    expect = [(r[0], r[1]) for r in all_rows if r[1] == "P13"]
    assert got == expect


def test_project_read_three_valued_logic():
    rows = gen_poi_rows(2000)
    data, _, _ = ecf.write_file(POI_SCHEMA, rows)
    matched, _ = ecf.project_read(data, ["id"], ge("rating", 2.5))
    _, all_rows, _, _ = ecf.read_file(data)
    # Null ratings are not-true under a comparison: excluded.
    expect = [(r[0],) for r in all_rows if r[2] is not None and r[2] >= 2.5]
    assert matched == expect
    nulls, _ = ecf.project_read(data, ["id"], is_null("rating"))
    assert nulls == [(r[0],) for r in all_rows if r[2] is None]


def test_project_read_and_or():
    rows = gen_poi_rows(2000)
    data, _, _ = ecf.write_file(POI_SCHEMA, rows)
    pred = or_(eq("prefecture", "P01"), and_(ge("rating", 4.5), eq("active", True)))
    got, _ = ecf.project_read(data, ["id"], pred)
    _, all_rows, _, _ = ecf.read_file(data)
    expect = [
        (r[0],)
        for r in all_rows
        if r[1] == "P01" or (r[2] is not None and r[2] >= 4.5 and r[3] is True)
    ]
    assert got == expect


def test_project_unknown_column():
    data, _, _ = ecf.write_file(POI_SCHEMA, gen_poi_rows(5))
    with pytest.raises(UnknownColumnError):
        ecf.project_read(data, ["nope"])


def test_project_with_reader_schema_serves_missing_as_null():
    data, _, _ = ecf.write_file(POI_SCHEMA, gen_poi_rows(10))
    evolved = ecf.Schema(
        POI_SCHEMA.fields + (ecf.Field("note", "STRING", nullable=True),),
        schema_id=1,
    )
    rows, _ = ecf.project_read(data, ["id", "note"], reader_schema=evolved)
    assert rows == [(i, None) for i in range(1, 11)]


def test_project_read_equals_full_read_then_filter_then_project():
    rows = gen_poi_rows(3000, seed=11)
    data, _, _ = ecf.write_file(POI_SCHEMA, rows)
    pred = and_(ge("id", 100), lt("id", 2500), eq("active", False))
    got, _ = ecf.project_read(data, ["prefecture", "rating"], pred)
    _, full, _, _ = ecf.read_file(data)
    expect = [
        (r[1], r[2]) for r in full if 100 <= r[0] < 2500 and r[3] is False
    ]
    assert got == expect


# --- property tests ---------------------------------------------------------

_types = st.sampled_from(ecf.TYPES)


@st.composite
def schema_and_rows(draw):
    n_fields = draw(st.integers(1, 5))
    fields = []
    for i in range(n_fields):
        ftype = draw(_types)
        nullable = draw(st.booleans())
        fields.append(ecf.Field(f"c{i}", ftype, nullable))
    schema = ecf.Schema(tuple(fields), schema_id=draw(st.integers(0, 3)))
    n_rows = draw(st.integers(0, 60))
    rows = []
    for _ in range(n_rows):
        row = []
        for f in fields:
            if f.nullable and draw(st.booleans()):
                row.append(None)
            elif f.type == "INT64":
                row.append(draw(st.integers(-(2**63), 2**63 - 1)))
            elif f.type == "FLOAT64":
                row.append(
                    draw(st.floats(allow_nan=False, allow_infinity=False, width=64))
                )
            elif f.type == "BOOL":
                row.append(draw(st.booleans()))
            else:
                row.append(draw(st.text(max_size=20)))
        rows.append(tuple(row))
    return schema, rows


@settings(max_examples=120, deadline=None)
@given(schema_and_rows())
def test_property_round_trip(case):
    schema, rows = case
    data, stats, count = ecf.write_file(schema, rows)
    rschema, rrows, rstats, rcount = ecf.read_file(data)
    assert rschema == schema
    assert rcount == count == len(rows)
    for expect, got in zip(rows, rrows):
        for a, b in zip(expect, got):
            if isinstance(a, float):
                assert struct.pack("<d", a) == struct.pack("<d", b)  # bit-exact
            else:
                assert a == b and type(a) is type(b)
    oracle = naive_stats(rows, schema)
    for name in oracle:
        assert rstats[name].null_count == oracle[name].null_count
        assert rstats[name].min == oracle[name].min
        assert rstats[name].max == oracle[name].max


def test_schema_json_round_trip():
    obj = POI_SCHEMA.to_json_dict()
    assert ecf.Schema.from_json_dict(json.loads(json.dumps(obj))) == POI_SCHEMA


def test_schema_validation():
    with pytest.raises(ValueError):
        ecf.Schema((ecf.Field("9bad", "INT64"),))
    with pytest.raises(ValueError):
        ecf.Schema((ecf.Field("a", "INT32"),))
    with pytest.raises(ValueError):
        ecf.Schema((ecf.Field("a", "INT64"), ecf.Field("a", "STRING")))
