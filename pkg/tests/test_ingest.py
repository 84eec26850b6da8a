import math

import pytest
from hypothesis import given, strategies as st

from flowcast.ingest import (Block, FlowRecord, ParseError, ValidationError, chronological_split,
                             concat, ip_to_int, iter_records, parse_record, partition_blocks,
                             read_records, serialize_record, test_count as split_test_count,
                             write_records)

SAMPLE = "1550221200000,1550221201000,81.169.238.182,10.0.1.5,443,52000,6,620,5,0x1b,1,100"


def test_parse_sample_row():
    r = parse_record(SAMPLE)
    assert r.protocol == 6 and r.bytes == 620 and r.packets == 5
    assert r.src_ip == ip_to_int("81.169.238.182")
    assert r.tcp_flags == 0x1B and r.exporter_id == 1 and r.vlan == 100
    assert r.src_port == 443 and r.dst_port == 52000


def test_flags_decimal_or_hex():
    assert parse_record(SAMPLE.replace("0x1b", "27")).tcp_flags == 27


@pytest.mark.parametrize("line", [
    SAMPLE.replace(",443,", ",70000,"),
    "1550221201000,1550221200000" + SAMPLE[27:],
    SAMPLE.replace(",6,620", ",300,620"),
])
def test_validation_errors(line):
    with pytest.raises(ValidationError):
        parse_record(line, 7)


def test_parse_error_carries_line_number():
    with pytest.raises(ParseError) as exc:
        list(iter_records([SAMPLE, "1,2,3"]))
    assert exc.value.line_no == 2
    with pytest.raises(ParseError):
        parse_record(SAMPLE.replace("81.169", "81.999"))


records_st = st.builds(
    FlowRecord,
    start_ms=st.integers(0, 2**41), end_ms=st.just(0),
    src_ip=st.integers(0, 2**32 - 1), dst_ip=st.integers(0, 2**32 - 1),
    src_port=st.integers(0, 65535), dst_port=st.integers(0, 65535), protocol=st.integers(0, 255),
    bytes=st.integers(0, 2**40), packets=st.integers(0, 2**30), tcp_flags=st.integers(0, 255),
    exporter_id=st.integers(0, 10), vlan=st.integers(0, 4095),
).map(lambda r: FlowRecord(r.start_ms, r.start_ms + r.packets % 100000, *[
    getattr(r, f) for f in ("src_ip", "dst_ip", "src_port", "dst_port", "protocol", "bytes",
                            "packets", "tcp_flags", "exporter_id", "vlan")]))


@given(records_st)
def test_serialize_roundtrip(rec):
    assert parse_record(serialize_record(rec)) == rec


def test_file_roundtrip(tmp_path):
    recs = [parse_record(SAMPLE), parse_record(SAMPLE.replace("620", "999"))]
    write_records(tmp_path / "r.csv", recs)
    assert read_records(tmp_path / "r.csv") == recs
    write_records(tmp_path / "n.csv", recs, header=False)
    assert read_records(tmp_path / "n.csv") == recs


def test_partition_sizes():
    assert [len(b) for b in partition_blocks(range(250_000), 100_000)] == [100_000, 100_000, 50_000]
    assert partition_blocks([], 10) == []
    one = partition_blocks(range(100_000), 100_000)
    assert len(one) == 1 and one[0].index == 0
    with pytest.raises(ValueError):
        partition_blocks([1], 0)


@given(st.lists(st.integers(), max_size=200), st.integers(1, 50))
def test_partition_concat_identity(items, size):
    blocks = partition_blocks(items, size)
    assert concat(blocks) == items
    assert [b.index for b in blocks] == list(range(len(blocks)))
    assert all(len(b) == size for b in blocks[:-1])


def _block(starts):
    return Block(0, tuple(FlowRecord(s, s, 1, 2, 3, 4, 6, 0, 1, 0, 1, 0) for s in starts))


@pytest.mark.parametrize("n,frac,expect", [(100, 0.1, (90, 10)), (10, 0.5, (5, 5)), (101, 0.1, (90, 11))])
def test_split_counts(n, frac, expect):
    train, test = chronological_split(_block(range(n)), frac)
    assert (len(train), len(test)) == expect


def test_split_takes_latest_and_sorts():
    starts = [5, 3, 9, 1, 7, 2, 8, 0, 6, 4]
    train, test = chronological_split(_block(starts), 0.3)
    assert [r.start_ms for r in test.records] == [7, 8, 9]
    assert [r.start_ms for r in train.records] == list(range(7))


def test_split_errors():
    with pytest.raises(ValueError):
        chronological_split(_block([1]), 0.1)
    with pytest.raises(ValueError):
        chronological_split(_block([1, 2]), 1.0)


@given(st.integers(2, 10_000), st.floats(0.01, 0.99))
def test_test_count_is_clamped_ceiling(n, f):
    k = split_test_count(n, f)
    assert 1 <= k <= n - 1
    if 1 <= math.ceil(n * f - 1e-9) <= n - 1:
        assert k == math.ceil(round(n * f, 9))


@given(st.lists(st.integers(0, 1000), min_size=2, max_size=100), st.floats(0.05, 0.95))
def test_split_is_time_partition(starts, f):
    block = _block(starts)
    train, test = chronological_split(block, f)
    assert max(r.start_ms for r in train.records) <= min(r.start_ms for r in test.records)
    assert sorted(train.records + test.records, key=lambda r: r.start_ms) == \
        sorted(block.records, key=lambda r: r.start_ms)
