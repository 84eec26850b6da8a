import pytest
from hypothesis import given, strategies as st

from flowcast.aggregate import (AggregateConfig, aggregate_block, bit_rate, dedup, finalize, fuse,
                                mask_port, read_entries, write_entries)
from flowcast.enrich import LookupTables, enrich_record

from conftest import T0, make_record

TABLES = LookupTables.build()


def _er(**kw):
    return enrich_record(make_record(**kw), TABLES)


def test_exporter_duplicate_removed():
    a, b = _er(exporter=1), _er(exporter=2, start=T0 + 200, end=T0 + 1200)
    assert dedup([b, a]) == [a]


def test_different_bytes_are_kept():
    a, b = _er(exporter=1), _er(exporter=2, nbytes=621)
    assert dedup([a, b]) == [a, b]


def test_dedup_window():
    a, b = _er(exporter=1), _er(exporter=2, start=T0 + 1500, end=T0 + 2500)
    assert len(dedup([a, b], window_ms=1000)) == 2
    assert len(dedup([a, b], window_ms=2000)) == 1


def test_no_duplicates_is_noop():
    recs = [_er(start=T0 + i * 10, sport=40000 + i) for i in range(20)]
    assert dedup(recs) == recs


def test_fuse_gap_without_fin():
    a = _er(start=T0, end=T0 + 1000, nbytes=100)
    b = _er(start=T0 + 6000, end=T0 + 7000, nbytes=50)
    (e,) = fuse([a, b])
    assert e.total_bytes == 150 and e.packets == 10 and e.record_count == 2
    assert e.duration_ms == 7000


@pytest.mark.parametrize("flag", [0x01, 0x04])
def test_fin_or_rst_closes(flag):
    a = _er(start=T0, end=T0 + 1000, flags=0x10 | flag)
    b = _er(start=T0 + 2000, end=T0 + 3000)
    assert len(fuse([a, b])) == 2


def test_inactive_timeout_splits():
    a = _er(start=T0, end=T0 + 1000)
    b = _er(start=T0 + 1000 + 15_001, end=T0 + 20_000)
    assert len(fuse([a, b])) == 2
    assert len(fuse([a, b], inactive_timeout_ms=20_000)) == 1


@pytest.mark.parametrize("port,expect", [(32768, 0), (32767, 32767), (80, 80), (65535, 0)])
def test_mask_port(port, expect):
    assert mask_port(port) == expect


@pytest.mark.parametrize("nbytes,dur,expect", [(620, 10_000, 496.0), (620, 0, 4960.0), (0, 5000, 0.0)])
def test_bit_rate(nbytes, dur, expect):
    assert bit_rate(nbytes, dur) == expect


def test_finalize_masks_and_rates():
    (e,) = fuse([_er(sport=52000, dport=443, nbytes=620, start=T0, end=T0 + 10_000)])
    f = finalize(e)
    assert (f.src_port, f.dst_port, f.bit_rate_bps) == (0, 443, 496.0)


flows_st = st.lists(st.tuples(st.integers(0, 3), st.integers(0, 60_000), st.integers(0, 5000),
                              st.integers(0, 2000), st.sampled_from([0x10, 0x11, 0x14, 0x02]),
                              st.integers(1, 2)), max_size=60)


def _records(spec):
    return [_er(sport=40000 + k, start=T0 + s, end=T0 + s + d, nbytes=b, flags=f, exporter=x)
            for k, s, d, b, f, x in spec]


@given(flows_st)
def test_aggregation_invariants(spec):
    recs = _records(spec)
    kept = dedup(recs)
    entries, stats = aggregate_block(recs)
    assert sum(e.total_bytes for e in entries) == sum(r.record.bytes for r in kept)
    assert sum(e.record_count for e in entries) == len(kept)
    assert stats.n_records == len(recs) and stats.n_entries == len(entries)
    for e in entries:
        assert 0 <= e.src_port <= 32767 and 0 <= e.dst_port <= 32767
        assert e.duration_ms >= 0 and e.record_count >= 1
    assert aggregate_block(recs) == (entries, stats)


def test_stats_ratios():
    recs = [_er(exporter=1), _er(exporter=2), _er(start=T0 + 5000, end=T0 + 6000, nbytes=1)]
    _, st_ = aggregate_block(recs, AggregateConfig())
    assert (st_.n_records, st_.n_after_dedup, st_.n_entries) == (3, 2, 1)
    assert st_.dedup_ratio == pytest.approx(2 / 3) and st_.total_ratio == pytest.approx(1 / 3)


def test_entry_csv_roundtrip(tmp_path, tables):
    recs = [enrich_record(make_record(start=T0 + i * 7, sport=1000 + i, nbytes=i * 13), tables)
            for i in range(5)]
    entries, _ = aggregate_block(recs)
    write_entries(tmp_path / "e.csv", entries)
    assert read_entries(tmp_path / "e.csv") == entries
