import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.distance import jensenshannon

from flowssm import frames, toydata
from flowssm.errors import EmptyInput
from flowssm.pcap import CaptureFile, Packet
from flowssm.similarity import (FieldDistributionTable, hellinger, jsd, memorization, random_baseline,
                                similarity, tvd)

HALF, POINT = [0.5, 0.5], [1.0, 0.0]


def test_derived_values_against_scipy():
    assert jsd(HALF, POINT) == pytest.approx(jensenshannon(HALF, POINT, base=2) ** 2, abs=1e-12)
    assert jsd(HALF, POINT) == pytest.approx(0.311278, abs=1e-6)
    assert tvd(HALF, POINT) == pytest.approx(0.5, abs=1e-12)
    # Bhattacharyya form, independent of the implementation's expression
    alt = np.sqrt(1 - np.sum(np.sqrt(np.multiply(HALF, POINT))))
    assert hellinger(HALF, POINT) == pytest.approx(alt, abs=1e-12)
    assert hellinger(HALF, POINT) == pytest.approx(0.541196, abs=1e-6)


@pytest.mark.parametrize("metric", [jsd, tvd, hellinger])
def test_identity_and_disjoint(metric):
    assert metric([0.2, 0.3, 0.5], [0.2, 0.3, 0.5]) == pytest.approx(0.0, abs=1e-12)
    assert metric([1, 0], [0, 1]) == pytest.approx(1.0)


dist = st.lists(st.floats(0, 1), min_size=2, max_size=2).filter(lambda v: sum(v) > 1e-6).map(
    lambda v: np.array(v) / sum(v))


@settings(max_examples=300)
@given(dist, dist)
def test_metric_axioms(p, q):
    for m in (jsd, tvd, hellinger):
        assert m(p, q) == pytest.approx(m(q, p), abs=1e-12)
        assert 0.0 <= m(p, q) <= 1.0
    assert hellinger(p, q) ** 2 <= tvd(p, q) + 1e-12
    assert jsd(p, q) == pytest.approx(jensenshannon(p, q, base=2) ** 2, abs=1e-9)


def _caps(flows):
    return [CaptureFile(list(f.packets)) for f in flows]


def test_similarity_identity(tcp_flows):
    rep = similarity(_caps(tcp_flows), _caps(tcp_flows))
    assert all(v == 0.0 for v in rep.means.values())
    assert len(rep.scored_bits) + len(rep.skipped_bits) == 1136
    # udp region is absent from TCP-only traffic
    assert set(range(1072, 1136)) <= set(rep.skipped_bits)


def test_disjoint_bit_scores_one():
    a = frames.udp_frame("10.0.0.1", "10.0.0.2", 1, 2, b"x" * 10, ttl=0)
    b = frames.udp_frame("10.0.0.1", "10.0.0.2", 1, 2, b"x" * 10, ttl=128)
    rep = similarity([[a]], [[b]])
    i = rep.scored_bits.index(112 + 64)   # first ttl bit
    assert rep.per_bit["jsd"][i] == rep.per_bit["tvd"][i] == rep.per_bit["hd"][i] == 1.0


def test_permutation_invariance(tcp_flows):
    pk = [p for f in tcp_flows for p in f.packets]
    synth = _caps(toydata.toy_flows(3, ["x"], seed=99))
    a = similarity([CaptureFile(pk)], synth)
    b = similarity([CaptureFile(pk[::-1])], synth)
    assert a.means == pytest.approx(b.means)


def test_table_merge_matches_joint(tcp_flows):
    pk = [p.data for f in tcp_flows for p in f.packets]
    whole = FieldDistributionTable.from_packets(pk)
    parts = FieldDistributionTable.from_packets(pk[:5]).merge(FieldDistributionTable.from_packets(pk[5:]))
    assert np.array_equal(whole.ones, parts.ones) and np.array_equal(whole.zeros, parts.zeros)
    s = whole.support
    np.testing.assert_allclose((whole.p_one + whole.zeros / np.maximum(s, 1))[s > 0], 1.0)


def test_empty_input():
    with pytest.raises(EmptyInput):
        similarity([], [[b"x" * 40]])


def test_random_baseline(tcp_flows):
    caps = _caps(tcp_flows)
    r1 = random_baseline(caps, 5)
    r2 = random_baseline(caps, 5)
    assert [[len(p.data) for p in c.packets] for c in r1] == [[len(p.data) for p in c.packets] for c in caps]
    assert [p.data for c in r1 for p in c.packets] == [p.data for c in r2 for p in c.packets]
    rep = similarity(caps, r1)
    assert all(v > 0 for v in rep.means.values())


def test_report_json(tcp_flows):
    rep = similarity(_caps(tcp_flows), _caps(tcp_flows))
    d = json.loads(rep.to_json(per_bit=True))
    assert d["means"]["jsd"] == 0.0 and len(d["per_bit"]["tvd"]) == d["n_scored"]


# -- memorization ----------------------------------------------------------------

def test_memorization_identity(tcp_flows):
    rep = memorization(tcp_flows, _caps(tcp_flows))
    for pair, f in zip(rep.pairs, tcp_flows):
        assert pair.identical == pair.compared == min(100, len(f))
        assert pair.differing_byte_pct == 0.0
    assert rep.mean_differing_byte_pct == 0.0
    assert rep.field_change and all(v == 0.0 for v in rep.field_change.values())


def _ttl_minus_two(data: bytes) -> bytes:
    b = bytearray(data)
    b[22] -= 2
    return bytes(b)


def test_memorization_ttl_perturbation(tcp_flows):
    synth = [CaptureFile([Packet(_ttl_minus_two(p.data)) for p in f.packets]) for f in tcp_flows]
    rep = memorization(tcp_flows, synth)
    assert rep.field_change["IP_ttl"] == 2.0
    assert all(v == 0.0 for k, v in rep.field_change.items() if k != "IP_ttl")
    assert all(p.identical == 0 for p in rep.pairs)
    # one differing byte per packet
    expected = np.mean([np.mean([100 / len(p.data) for p in f.packets]) for f in tcp_flows])
    assert rep.mean_differing_byte_pct == pytest.approx(expected)


def test_memorization_k_and_lengths():
    a = [frames.udp_frame("10.0.0.1", "10.0.0.2", 1, 2, b"x" * n) for n in (10, 20, 30)]
    b = [a[0], a[1] + b"extra"]
    rep = memorization([a], [b], k=100)
    p = rep.pairs[0]
    assert (p.compared, p.identical) == (2, 1)
    assert p.differing_byte_pct == pytest.approx(100 * 5 / (len(a[1]) + 5))
    assert memorization([a], [a], k=2).pairs[0].compared == 2


def test_field_csv(tcp_flows, tmp_path):
    rep = memorization(tcp_flows, _caps(tcp_flows))
    rep.write_field_csv(tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "Field,Average Change" and "IP_version,0.00" in lines
