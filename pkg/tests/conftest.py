import os
from pathlib import Path

import hypothesis
import numpy as np
import pytest

from flowcast.enrich import GeoInfo, LookupTables, enrich_record
from flowcast.ingest import FlowRecord, ip_to_int

hypothesis.settings.register_profile("default", max_examples=100, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

DATA = Path(__file__).parent / "data"
T0 = 1_550_221_200_000


def make_record(start=T0, end=None, src="10.0.1.5", dst="81.169.238.182", sport=52000, dport=443,
                proto=6, nbytes=620, packets=5, flags=0x10, exporter=1, vlan=100) -> FlowRecord:
    return FlowRecord(start, start + 1000 if end is None else end,
                      ip_to_int(src) if isinstance(src, str) else src,
                      ip_to_int(dst) if isinstance(dst, str) else dst,
                      sport, dport, proto, nbytes, packets, flags, exporter, vlan)


@pytest.fixture(scope="session")
def tables() -> LookupTables:
    return LookupTables.build(
        subnets=[("10.0.0.0/16", 10), ("10.0.1.0/24", 11), ("81.169.0.0/16", 20)],
        geo=[("81.0.0.0/8", GeoInfo(8560, 49.0, 8.4, 80)), ("10.0.0.0/8", GeoInfo(680, 50.1, 8.7, 80))],
    )


@pytest.fixture
def enrich(tables):
    return lambda rec: enrich_record(rec, tables)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_columns():
    """Three chronologically ordered blocks of synthetic entries (1,500 records each)."""
    from flowcast.anonymize import derive_key
    from flowcast.pipeline import chronological_columns, prepare_records
    from flowcast.synth import SynthConfig, address_plan, generate

    cfg = SynthConfig(n_records=4500, seed=5, block_size=1500)
    plan = address_plan(cfg)
    blocks = prepare_records(generate(cfg, plan), plan.tables(), derive_key("flowcast"), 1500)
    return [chronological_columns(b.entries) for b in blocks]


# --- acceptance summary ------------------------------------------------------

_CRITERIA: dict[int, tuple[str, list[str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    number, title = mark.args
    entry = _CRITERIA.setdefault(number, (title, []))
    entry[1].append("pass" if rep.passed else "skip" if rep.skipped else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, results = _CRITERIA[number]
        status = "PASS" if results and all(r == "pass" for r in results) else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number:>2}: {title}")
