import numpy as np
import pytest
from sklearn.tree import DecisionTreeClassifier

from flowcast.anonymize import derive_key
from flowcast.encode import DEFAULT_BOUNDARIES, assign_labels
from flowcast.ingest import serialize_record, parse_record
from flowcast.pipeline import chronological_columns, prepare_records
from flowcast.synth import (BANDS, RULE, TCP, UDP, DriftSpec, SynthConfig, address_plan, generate,
                            port_band)

KEY = derive_key("flowcast")


def _prepared(cfg, block_size=None):
    plan = address_plan(cfg)
    recs = generate(cfg, plan)
    return prepare_records(recs, plan.tables(), KEY, block_size or cfg.block_size)


def _band_features(cols, with_locality=False):
    band = np.array([port_band(int(p)) for p in cols["dst_port"]])
    feats = [cols["protocol"], band]
    if with_locality:
        feats.append(cols["src_private"])
    return np.column_stack(feats)


def test_determinism_and_count():
    cfg = SynthConfig(n_records=1000, seed=3)
    a, b = generate(cfg), generate(cfg)
    assert a == b and len(a) == 1000
    assert generate(SynthConfig(n_records=1000, seed=4)) != a
    assert all(parse_record(serialize_record(r)) == r for r in a[:50])
    assert [r.start_ms for r in a] == sorted(r.start_ms for r in a)


@pytest.mark.parametrize("kw", [dict(class_mix=(0.5, 0.5, 0.5)), dict(duplicate_rate=1.5),
                                dict(split_factor=0.5), dict(rule="nope"), dict(n_records=-1),
                                dict(rule_strength=-0.1)])
def test_invalid_config(kw):
    with pytest.raises(ValueError):
        SynthConfig(**kw)


def test_port_bands():
    assert [port_band(p) for p in (0, 1, 1023, 1024, 8191, 8192, 32767, 40000)] == \
        [-1, 0, 0, 1, 1, 2, 2, -1]
    assert len(BANDS) == 3
    # every class owns exactly one cell per protocol
    for proto in (TCP, UDP):
        assert sorted(RULE[(proto, b)] for b in range(3)) == [0, 1, 2]


@pytest.mark.parametrize("rule", ["port", "locality"])
def test_stump_oracle_learnability(rule):
    cfg = SynthConfig(n_records=6000, seed=11, rule=rule, block_size=6000)
    cols = chronological_columns(_prepared(cfg)[0].entries)
    y = assign_labels(cols["bit_rate_bps"], DEFAULT_BOUNDARIES)
    X = _band_features(cols, with_locality=rule == "locality")
    tree = DecisionTreeClassifier(max_depth=3 if rule == "port" else 5, random_state=0).fit(X, y)
    assert tree.score(X, y) >= 0.95


def test_locality_rule_hides_from_port_features():
    cfg = SynthConfig(n_records=6000, seed=11, rule="locality", block_size=6000)
    cols = chronological_columns(_prepared(cfg)[0].entries)
    y = assign_labels(cols["bit_rate_bps"], DEFAULT_BOUNDARIES)
    tree = DecisionTreeClassifier(max_depth=3, random_state=0).fit(_band_features(cols), y)
    assert tree.score(_band_features(cols), y) < 0.6


def test_class_mix_is_respected():
    cfg = SynthConfig(n_records=9000, seed=1, class_mix=(0.6, 0.3, 0.1), block_size=9000)
    cols = chronological_columns(_prepared(cfg)[0].entries)
    frac = np.bincount(assign_labels(cols["bit_rate_bps"], DEFAULT_BOUNDARIES), minlength=3) / 9000
    np.testing.assert_allclose(frac, (0.6, 0.3, 0.1), atol=0.02)


def test_label_noise_lowers_oracle():
    cfg = SynthConfig(n_records=6000, seed=12, rule_strength=0.7, block_size=6000)
    cols = chronological_columns(_prepared(cfg)[0].entries)
    y = assign_labels(cols["bit_rate_bps"], DEFAULT_BOUNDARIES)
    X = _band_features(cols)
    acc = DecisionTreeClassifier(max_depth=3, random_state=0).fit(X, y).score(X, y)
    assert acc == pytest.approx(0.7, abs=0.03)


def test_bijection_without_split_or_duplicates():
    cfg = SynthConfig(n_records=3000, seed=2, block_size=3000)
    (block,) = _prepared(cfg)
    assert block.stats.n_records == block.stats.n_entries == 3000


def test_split_factor_reduction():
    cfg = SynthConfig(n_records=26_000, seed=2, split_factor=13, block_size=26_000)
    (block,) = _prepared(cfg)
    assert block.stats.total_ratio == pytest.approx(0.075, abs=0.01)


def test_duplicates_go_to_second_exporter():
    cfg = SynthConfig(n_records=4000, seed=2, duplicate_rate=0.25, block_size=4000)
    recs = generate(cfg)
    dups = [r for r in recs if r.exporter_id == 2]
    assert len(recs) == 4000 + len(dups)
    assert len(dups) / 4000 == pytest.approx(0.25, abs=0.03)
    (block,) = _prepared(cfg, block_size=len(recs))
    assert block.stats.n_after_dedup == 4000


def test_tcp_flags_mark_flow_edges():
    recs = generate(SynthConfig(n_records=2000, seed=5, split_factor=4))
    tcp = [r for r in recs if r.protocol == TCP]
    assert any(r.tcp_flags & 0x02 for r in tcp) and any(r.tcp_flags & 0x01 for r in tcp)
    assert all(r.tcp_flags == 0 for r in recs if r.protocol == UDP)


def test_private_pool_is_scattered():
    cfg = SynthConfig(n_records=10, seed=0)
    plan = address_plan(cfg)
    assert len(plan.private_ranges) == cfg.private_pool
    first_octets = {int(n) >> 24 for n in plan.private_nets}
    assert len(first_octets) > 200
    t = plan.tables()
    recs = generate(SynthConfig(n_records=2000, seed=0), plan)
    frac = np.mean([t.is_private(r.src_ip) for r in recs])
    assert frac == pytest.approx(cfg.private_fraction, abs=0.05)


def test_drift_share():
    d = DriftSpec(5, 0.8, ramp_blocks=4)
    assert [d.share(b) for b in (0, 4, 5, 8, 20)] == [0.0, 0.0, 0.2, 0.8, 0.8]
    assert DriftSpec(2).share(2) == 1.0


def test_drift_rotates_rule():
    cfg = SynthConfig(n_records=8000, seed=7, block_size=4000, drift=DriftSpec(1))
    before, after = [chronological_columns(b.entries) for b in _prepared(cfg)]
    tree = DecisionTreeClassifier(max_depth=3, random_state=0)
    yb = assign_labels(before["bit_rate_bps"], DEFAULT_BOUNDARIES)
    ya = assign_labels(after["bit_rate_bps"], DEFAULT_BOUNDARIES)
    tree.fit(_band_features(before), yb)
    assert tree.score(_band_features(before), yb) >= 0.95
    assert tree.score(_band_features(after), ya) <= 0.1


def test_byte_medians_stable_across_seeds():
    medians = [np.median([r.bytes for r in generate(SynthConfig(n_records=100_000, seed=s))])
               for s in (0, 1)]
    assert abs(medians[0] - medians[1]) / medians[0] < 0.10
