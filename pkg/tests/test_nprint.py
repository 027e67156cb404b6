import csv

import dpkt
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowssm import frames
from flowssm.errors import HeaderTruncated, NotEthernet
from flowssm.nprint import N_BITS, encode_bits, extract_fields, layout, write_csv

TCP_FRAME = frames.tcp_frame("10.0.0.2", "10.0.0.1", 51000, 443, seq=1000, ack=77,
                             options=b"\x02\x04\x05\xb4", payload=b"hello")
UDP_FRAME = frames.udp_frame("10.0.0.2", "8.8.8.8", 5353, 53, b"q" * 20)


def test_layout_size_and_regions():
    lay = layout()
    assert lay.n_bits == N_BITS == 112 + 160 + 320 + 160 + 320 + 64 == 1136
    assert lay.region("eth") == (0, 112)
    assert lay.region("ipv4") == (112, 592)
    assert lay.region("tcp") == (592, 1072)
    assert lay.region("udp") == (1072, 1136)
    v = lay.field("ipv4.version")
    assert (v.offset, v.width) == (112, 4)


def test_layout_non_overlapping_and_contiguous():
    off = 0
    for f in layout().fields:
        assert f.offset == off
        off += f.width
    assert off == 1136
    assert len(layout().column_names()) == 1136


def test_ipv4_version_bits():
    bits = encode_bits(TCP_FRAME)
    assert bits[112:116].tolist() == [0, 1, 0, 0]


def test_udp_packet_has_no_tcp_bits():
    bits = encode_bits(UDP_FRAME)
    assert np.all(bits[592:1072] == -1)
    assert np.all(bits[1072:1136] >= 0)


def test_minimal_ipv4_options_are_zero():
    bits = encode_bits(UDP_FRAME)
    assert np.all(bits[272:592] == 0)


def test_tcp_options_copied_then_padded():
    bits = encode_bits(TCP_FRAME)
    opt = np.packbits(bits[752:752 + 32].astype(np.uint8)).tobytes()
    assert opt == b"\x02\x04\x05\xb4"
    assert np.all(bits[752 + 32:1072] == 0)


def test_non_ip_frame_only_ethernet():
    arp = frames.ethernet("ff:ff:ff:ff:ff:ff", "02:00:00:00:00:01", b"\x00" * 28, 0x0806)
    bits = encode_bits(arp)
    assert np.all(bits[:112] >= 0) and np.all(bits[112:] == -1)


def test_truncated_bytes_are_absent():
    bits = encode_bits(TCP_FRAME[:40])
    assert np.all(bits[112:272] >= 0)          # IPv4 fixed header fully captured
    assert np.all(bits[592:592 + 48] >= 0)     # 6 TCP bytes captured
    assert np.all(bits[592 + 48:752] == -1)


def test_not_ethernet():
    with pytest.raises(NotEthernet):
        encode_bits(b"\x00" * 10)


def test_values_in_range_and_pure():
    a = encode_bits(TCP_FRAME)
    assert set(np.unique(a)) <= {-1, 0, 1}
    assert np.array_equal(a, encode_bits(bytes(TCP_FRAME)))


def test_tcp_seq_cross_read_by_reference_parser():
    f = extract_fields(TCP_FRAME)
    eth = dpkt.ethernet.Ethernet(TCP_FRAME)
    assert f["TCP_seq"] == eth.data.data.seq == 1000
    assert f["TCP_ack"] == eth.data.data.ack
    assert f["TCP_window"] == eth.data.data.win
    assert f["IP_ttl"] == eth.data.ttl
    assert f["IP_chksum"] == eth.data.sum
    assert f["TCP_chksum"] == eth.data.data.sum
    assert f["TCP_flags"] == eth.data.data.flags
    assert f["IP_version"] == 4
    assert f["TCP_options"] == 1 and f["Raw_load"] == 1 and f["IP_options"] == 0


def test_udp_has_no_tcp_keys():
    f = extract_fields(UDP_FRAME)
    assert not any(k.startswith("TCP_") for k in f)
    assert f["UDP_dport"] == 53 and f["UDP_len"] == 28


def test_extract_truncated():
    with pytest.raises(HeaderTruncated):
        extract_fields(TCP_FRAME[:50])


frames_st = st.builds(
    lambda sport, dport, seq, ack, ttl, ident, nopt, payload, kind: (
        frames.tcp_frame("10.1.2.3", "192.0.2.9", sport, dport, seq=seq, ack=ack, ttl=ttl,
                         ident=ident, options=b"\x01" * (4 * nopt), payload=payload)
        if kind else frames.udp_frame("10.1.2.3", "192.0.2.9", sport, dport, payload, ttl=ttl, ident=ident)),
    st.integers(0, 65535), st.integers(0, 65535), st.integers(0, 2**32 - 1),
    st.integers(0, 2**32 - 1), st.integers(0, 255), st.integers(0, 65535),
    st.integers(0, 10), st.binary(max_size=30), st.booleans(),
)


@settings(max_examples=150)
@given(frames_st)
def test_bits_reassemble_to_field_values(frame):
    bits = encode_bits(frame)
    values = extract_fields(frame)
    for f in layout().fields:
        if f.key not in values or f.key in ("IP_options", "TCP_options"):
            continue
        chunk = bits[f.offset:f.offset + f.width]
        assert np.all(chunk >= 0)
        assert int("".join(map(str, chunk)), 2) == values[f.key], f.name


def test_csv_export(tmp_path):
    n = write_csv([TCP_FRAME, UDP_FRAME], tmp_path / "b.csv")
    with open(tmp_path / "b.csv") as fh:
        rows = list(csv.reader(fh))
    assert n == 2 and len(rows) == 3
    assert rows[0][0] == "eth.dst.bit0" and rows[0][112] == "ipv4.version.bit0"
    assert len(rows[1]) == 1136 and set(rows[2]) <= {"-1", "0", "1"}
