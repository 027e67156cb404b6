"""
Fixed-layout per-bit header encoding and numeric header-field extraction.

Every packet maps to 1136 positions holding 1, 0 or -1 (absent)::

    ethernet   112 bits  [   0,  112)
    ipv4       160 bits  [ 112,  272)   + options 320 bits [ 272,  592)
    tcp        160 bits  [ 592,  752)   + options 320 bits [ 752, 1072)
    udp         64 bits  [1072, 1136)

Fields are copied MSB-first. Bytes past the captured length are -1. An
options region of a present header is zero-padded past the options the
header declares.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from .errors import HeaderTruncated, NotEthernet

ETH_LEN = 14
IPV4_MIN = 20
TCP_MIN = 20
UDP_LEN = 8
OPTIONS_MAX = 40


@dataclass(frozen=True)
class FieldSpec:
    name: str      # "ipv4.ttl"
    key: str       # header-field name used in reports, e.g. "IP_ttl"
    protocol: str
    offset: int    # global bit offset
    width: int


_REGIONS = [
    ("eth", 0, [("dst", "Ether_dst", 48), ("src", "Ether_src", 48), ("type", "Ether_type", 16)]),
    ("ipv4", 112, [
        ("version", "IP_version", 4), ("ihl", "IP_ihl", 4), ("tos", "IP_tos", 8),
        ("len", "IP_len", 16), ("id", "IP_id", 16), ("flags", "IP_flags", 3),
        ("frag", "IP_frag", 13), ("ttl", "IP_ttl", 8), ("proto", "IP_proto", 8),
        ("chksum", "IP_chksum", 16), ("src", "IP_src", 32), ("dst", "IP_dst", 32),
        ("options", "IP_options", 320),
    ]),
    ("tcp", 592, [
        ("sport", "TCP_sport", 16), ("dport", "TCP_dport", 16), ("seq", "TCP_seq", 32),
        ("ack", "TCP_ack", 32), ("dataofs", "TCP_dataofs", 4), ("reserved", "TCP_reserved", 3),
        ("flags", "TCP_flags", 9), ("window", "TCP_window", 16), ("chksum", "TCP_chksum", 16),
        ("urgptr", "TCP_urgptr", 16), ("options", "TCP_options", 320),
    ]),
    ("udp", 1072, [
        ("sport", "UDP_sport", 16), ("dport", "UDP_dport", 16),
        ("len", "UDP_len", 16), ("chksum", "UDP_chksum", 16),
    ]),
]

IPV4_BASE, TCP_BASE, UDP_BASE = 112, 592, 1072
N_BITS = 1136


@dataclass(frozen=True)
class FieldLayout:
    fields: Tuple[FieldSpec, ...]

    @property
    def n_bits(self) -> int:
        return sum(f.width for f in self.fields)

    def field(self, name: str) -> FieldSpec:
        for f in self.fields:
            if f.name == name or f.key == name:
                return f
        raise KeyError(name)

    def region(self, protocol: str) -> Tuple[int, int]:
        fs = [f for f in self.fields if f.protocol == protocol]
        return fs[0].offset, fs[-1].offset + fs[-1].width

    def column_names(self) -> List[str]:
        return [f"{f.name}.bit{i}" for f in self.fields for i in range(f.width)]


@lru_cache(maxsize=1)
def layout() -> FieldLayout:
    specs = []
    for proto, base, entries in _REGIONS:
        off = base
        for name, key, width in entries:
            specs.append(FieldSpec(f"{proto}.{name}", key, proto, off, width))
            off += width
    return FieldLayout(tuple(specs))


def _copy_bytes(out, bit_off, data: bytes, start: int, length: int):
    """Copy ``length`` bytes from ``data[start:]`` as bits; missing bytes stay -1."""
    avail = max(0, min(length, len(data) - start))
    if avail:
        chunk = np.frombuffer(data, dtype=np.uint8, count=avail, offset=start)
        out[bit_off:bit_off + 8 * avail] = np.unpackbits(chunk)


def _options(out, bit_off, data: bytes, start: int, declared: int):
    declared = min(max(declared, 0), OPTIONS_MAX)
    out[bit_off + 8 * declared:bit_off + 8 * OPTIONS_MAX] = 0
    _copy_bytes(out, bit_off, data, start, declared)


def encode_bits(data: bytes) -> np.ndarray:
    """Encode one frame into an int8 vector of length 1136 over {-1, 0, 1}."""
    data = bytes(data)
    if len(data) < ETH_LEN:
        raise NotEthernet(f"frame of {len(data)} bytes has no Ethernet header")
    out = np.full(N_BITS, -1, dtype=np.int8)
    _copy_bytes(out, 0, data, 0, ETH_LEN)
    if data[12:14] != b"\x08\x00":
        return out

    _copy_bytes(out, IPV4_BASE, data, ETH_LEN, IPV4_MIN)
    if len(data) <= ETH_LEN:
        return out
    ihl = max(data[ETH_LEN] & 0x0F, 5) * 4
    _options(out, IPV4_BASE + 160, data, ETH_LEN + IPV4_MIN, ihl - IPV4_MIN)
    if len(data) < ETH_LEN + 10:
        return out
    proto = data[ETH_LEN + 9]
    frag_off = int.from_bytes(data[ETH_LEN + 6:ETH_LEN + 8], "big") & 0x1FFF
    l4 = ETH_LEN + ihl
    if frag_off:
        return out
    if proto == 6:
        _copy_bytes(out, TCP_BASE, data, l4, TCP_MIN)
        if len(data) > l4 + 12:
            dataofs = (data[l4 + 12] >> 4) * 4
            _options(out, TCP_BASE + 160, data, l4 + TCP_MIN, dataofs - TCP_MIN)
    elif proto == 17:
        _copy_bytes(out, UDP_BASE, data, l4, UDP_LEN)
    return out


def encode_many(packets: Iterable[bytes]) -> np.ndarray:
    rows = [encode_bits(p) for p in packets]
    if not rows:
        return np.empty((0, N_BITS), dtype=np.int8)
    return np.stack(rows)


def _int(data: bytes, bit_off: int, width: int) -> int:
    """Big-endian unsigned integer at a bit offset within ``data``."""
    nbytes = (bit_off + width + 7) // 8
    v = int.from_bytes(data[:nbytes], "big")
    return (v >> (8 * nbytes - bit_off - width)) & ((1 << width) - 1)


def extract_fields(data: bytes) -> Dict[str, int]:
    """Numeric header fields keyed by report name (``IP_ttl``, ``TCP_seq``...).

    ``IP_options``, ``TCP_options`` and ``Raw_load`` are presence
    indicators (0/1). Fields of absent protocols are omitted. Raises
    HeaderTruncated when a present header is cut short.
    """
    data = bytes(data)
    if len(data) < ETH_LEN:
        raise HeaderTruncated("Ethernet header truncated")
    lay = layout()
    out = {}
    for f in lay.fields:
        if f.protocol == "eth":
            out[f.key] = _int(data, f.offset, f.width)
    if out["Ether_type"] != 0x0800:
        return out

    ip = data[ETH_LEN:]
    if len(ip) < IPV4_MIN:
        raise HeaderTruncated("IPv4 header truncated")
    for f in lay.fields:
        if f.protocol == "ipv4" and f.key != "IP_options":
            out[f.key] = _int(ip, f.offset - IPV4_BASE, f.width)
    ihl = out["IP_ihl"] * 4
    if ihl < IPV4_MIN or len(ip) < ihl:
        raise HeaderTruncated("IPv4 options truncated")
    out["IP_options"] = int(ihl > IPV4_MIN)
    if out["IP_frag"]:
        return out

    l4 = ip[ihl:]
    if out["IP_proto"] == 6:
        if len(l4) < TCP_MIN:
            raise HeaderTruncated("TCP header truncated")
        for f in lay.fields:
            if f.protocol == "tcp" and f.key != "TCP_options":
                out[f.key] = _int(l4, f.offset - TCP_BASE, f.width)
        hl = out["TCP_dataofs"] * 4
        if hl < TCP_MIN or len(l4) < hl:
            raise HeaderTruncated("TCP options truncated")
        out["TCP_options"] = int(hl > TCP_MIN)
        out["Raw_load"] = int(len(l4) > hl)
    elif out["IP_proto"] == 17:
        if len(l4) < UDP_LEN:
            raise HeaderTruncated("UDP header truncated")
        for f in lay.fields:
            if f.protocol == "udp":
                out[f.key] = _int(l4, f.offset - UDP_BASE, f.width)
        out["Raw_load"] = int(len(l4) > UDP_LEN)
    return out


def write_csv(packets: Iterable[bytes], path: str | os.PathLike) -> int:
    """One row per packet, one column per bit position. Returns the row count."""
    rows = 0
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(layout().column_names())
        for p in packets:
            w.writerow(encode_bits(p).tolist())
            rows += 1
    return rows
