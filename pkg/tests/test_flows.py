import ipaddress
import json

import dns.message
import pytest
from hypothesis import given, settings, strategies as st

from flowssm import frames, toydata
from flowssm.errors import DataError, HeaderTruncated, NotIPv4
from flowssm.flows import FlowKey, dns_filter, extract_key, load_manifest, split_flows
from flowssm.pcap import CaptureFile, Packet


def ip(s):
    return ipaddress.IPv4Address(s).packed


def test_tcp_key_is_canonical():
    p = Packet(frames.tcp_frame("10.0.0.2", "10.0.0.1", 51000, 443))
    assert extract_key(p) == FlowKey(ip("10.0.0.1"), 443, ip("10.0.0.2"), 51000, 6)


def test_reverse_direction_same_key():
    a = Packet(frames.tcp_frame("10.0.0.2", "10.0.0.1", 51000, 443))
    b = Packet(frames.tcp_frame("10.0.0.1", "10.0.0.2", 443, 51000))
    assert extract_key(a) == extract_key(b)


def test_icmp_has_zero_ports():
    k = extract_key(Packet(frames.icmp_frame("10.0.0.5", "10.0.0.9")))
    assert (k.port_a, k.port_b, k.proto) == (0, 0, 1)


def test_unidirectional_keys_differ():
    a = Packet(frames.tcp_frame("10.0.0.2", "10.0.0.1", 51000, 443))
    b = Packet(frames.tcp_frame("10.0.0.1", "10.0.0.2", 443, 51000))
    assert extract_key(a, bidirectional=False) != extract_key(b, bidirectional=False)


def test_non_ipv4_rejected():
    arp = Packet(frames.ethernet("ff:ff:ff:ff:ff:ff", "02:00:00:00:00:01", b"\x00" * 28, 0x0806))
    with pytest.raises(NotIPv4):
        extract_key(arp)
    with pytest.raises(HeaderTruncated):
        extract_key(Packet(frames.tcp_frame("10.0.0.2", "10.0.0.1", 1, 2)[:30]))


@pytest.fixture
def two_conn_capture():
    k1 = [frames.tcp_frame("10.0.0.2", "10.0.0.1", 51000, 443, seq=i) for i in range(3)]
    k2 = [frames.udp_frame("10.0.0.3", "8.8.8.8", 40000, 53, bytes([i]) * 12) for i in range(3)]
    k1[1] = frames.tcp_frame("10.0.0.1", "10.0.0.2", 443, 51000, seq=99)
    pkts = [Packet(x) for pair in zip(k1, k2) for x in pair]
    return CaptureFile(pkts), k1, k2


def test_split_removes_interleaving(two_conn_capture):
    cap, k1, k2 = two_conn_capture
    res = split_flows(cap, "zoom")
    assert [[p.data for p in f.packets] for f in res.flows] == [k1, k2]
    assert all(f.label == "zoom" for f in res.flows)
    assert res.diverted == 0


def test_split_counts_diverted(two_conn_capture):
    cap, _, _ = two_conn_capture
    noise = Packet(frames.ethernet("ff:ff:ff:ff:ff:ff", "02:00:00:00:00:01", b"\x00" * 28, 0x0806))
    cap.packets.insert(2, noise)
    res = split_flows(cap, "zoom")
    assert sum(len(f) for f in res.flows) + res.diverted == len(cap.packets)
    assert res.diverted == 1


def test_single_four_packet_connection():
    flow = toydata.make_flow([frames.tcp_frame("10.0.0.2", "10.0.0.1", 5000, 80, seq=i) for i in range(4)], "x")
    res = split_flows(CaptureFile(flow.packets), "x")
    assert len(res.flows) == 1 and len(res.flows[0]) == 4


def test_split_empty_capture():
    assert split_flows(CaptureFile(), "x").flows == []


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=1, max_size=40), st.integers(0, 1000))
def test_partition_property(assignment, seed):
    import numpy as np
    rng = np.random.default_rng(seed)
    conns = [toydata.tcp_flow_packets(rng, n_data=2) for _ in range(4)]
    cursor = [0] * 4
    pkts = []
    for c in assignment:
        pkts.append(Packet(conns[c][cursor[c] % len(conns[c])], 0, len(pkts)))
        cursor[c] += 1
    res = split_flows(CaptureFile(pkts), "x")
    seen = [p.ts_frac for f in res.flows for p in f.packets]
    assert sorted(seen) == list(range(len(pkts)))           # disjoint and covering
    for f in res.flows:
        idx = [p.ts_frac for p in f.packets]
        assert idx == sorted(idx)                           # order preserved
        assert len({extract_key(p) for p in f.packets}) == 1
    firsts = [f.packets[0].ts_frac for f in res.flows]
    assert firsts == sorted(firsts)


# -- DNS ---------------------------------------------------------------------

def _dns_capture():
    resp = frames.dns_a_response("video.example.com", ["93.184.216.34"])
    other = frames.dns_a_response("cdn.other.net", ["203.0.113.7"], txid=7)
    return resp, CaptureFile([
        Packet(frames.udp_frame("10.0.0.2", "8.8.8.8", 5353, 53, frames.dns_query("video.example.com"))),
        Packet(frames.udp_frame("8.8.8.8", "10.0.0.2", 53, 5353, resp)),
        Packet(frames.udp_frame("8.8.8.8", "10.0.0.2", 53, 5353, other)),
        Packet(frames.tcp_frame("10.0.0.2", "93.184.216.34", 50000, 443)),
        Packet(frames.tcp_frame("10.0.0.2", "203.0.113.7", 50001, 443)),
        Packet(frames.tcp_frame("93.184.216.34", "10.0.0.2", 443, 50000)),
    ])


def test_dns_fixture_agrees_with_reference_parser():
    resp, _ = _dns_capture()
    msg = dns.message.from_wire(resp)
    assert str(msg.question[0].name) == "video.example.com."
    assert [r.address for rr in msg.answer for r in rr] == ["93.184.216.34"]


def test_dns_filter_keeps_resolved_traffic():
    _, cap = _dns_capture()
    res = dns_filter(cap, ["EXAMPLE.com"])
    assert res.addresses == {ip("93.184.216.34")}
    assert [p.data for p in res.capture.packets] == [cap.packets[i].data for i in (0, 1, 2, 3, 5)]


def test_dns_filter_without_dns_is_empty():
    cap = CaptureFile([Packet(frames.tcp_frame("10.0.0.2", "93.184.216.34", 50000, 443))])
    res = dns_filter(cap, ["example.com"])
    assert res.addresses == set() and res.capture.packets == []


def test_dns_filter_empty_patterns_is_identity():
    _, cap = _dns_capture()
    assert dns_filter(cap, []).capture == cap


def test_suffix_match_is_on_label_boundary():
    _, cap = _dns_capture()
    assert dns_filter(cap, ["ample.com"]).addresses == set()


def test_malformed_dns_is_counted():
    _, cap = _dns_capture()
    bad = frames.dns_a_response("video.example.com", ["93.184.216.34"])[:20]
    cap.packets.append(Packet(frames.udp_frame("8.8.8.8", "10.0.0.2", 53, 5353, bad)))
    res = dns_filter(cap, ["example.com"])
    assert res.malformed_dns == 1
    assert res.addresses == {ip("93.184.216.34")}


def test_manifest_labels_checked(tmp_path):
    m = tmp_path / "m.json"
    m.write_text(json.dumps([{"pcap": "a.pcap", "label": "zoom"}]))
    assert load_manifest(m, ["zoom"])[0]["pcap"] == str(tmp_path / "a.pcap")
    with pytest.raises(DataError):
        load_manifest(m, ["twitch"])
