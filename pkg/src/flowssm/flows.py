"""
Flow assembly: 5-tuple keys, capture splitting and DNS-driven service filtering.

Flows are bidirectional: both directions of a connection map to one canonical
key whose lower (address, port) endpoint comes first.
"""

from __future__ import annotations

import ipaddress
import json
import logging
import os
import struct
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .errors import DataError, HeaderTruncated, NotIPv4
from .pcap import CaptureFile, Packet

log = logging.getLogger(__name__)

ETH_HDR_LEN = 14
ETHERTYPE_IPV4 = 0x0800
PROTO_TCP = 6
PROTO_UDP = 17
DNS_PORT = 53


@dataclass(frozen=True, order=True)
class FlowKey:
    addr_a: bytes
    port_a: int
    addr_b: bytes
    port_b: int
    proto: int

    def __str__(self):
        a = ipaddress.IPv4Address(self.addr_a)
        b = ipaddress.IPv4Address(self.addr_b)
        return f"{a}:{self.port_a}-{b}:{self.port_b}-{self.proto}"

    @property
    def filename(self) -> str:
        return str(self).replace(":", "_") + ".pcap"


@dataclass
class FlowRecord:
    key: FlowKey
    packets: List[Packet]
    label: str

    def __len__(self):
        return len(self.packets)


@dataclass
class SplitResult:
    flows: List[FlowRecord]
    diverted: int = 0


@dataclass
class DnsFilterResult:
    capture: CaptureFile
    addresses: Set[bytes] = field(default_factory=set)
    malformed_dns: int = 0


def _ipv4_header(data: bytes) -> Tuple[int, int, bytes, bytes]:
    """Return (ihl_bytes, proto, src, dst) of an Ethernet/IPv4 frame."""
    if len(data) < ETH_HDR_LEN:
        raise HeaderTruncated("frame shorter than an Ethernet header")
    (ethertype,) = struct.unpack_from("!H", data, 12)
    if ethertype != ETHERTYPE_IPV4:
        raise NotIPv4(f"ethertype 0x{ethertype:04x}")
    if len(data) < ETH_HDR_LEN + 20:
        raise HeaderTruncated("IPv4 header is truncated")
    vihl = data[ETH_HDR_LEN]
    ihl = (vihl & 0x0F) * 4
    if vihl >> 4 != 4 or ihl < 20:
        raise NotIPv4("bad IPv4 version or header length")
    if len(data) < ETH_HDR_LEN + ihl:
        raise HeaderTruncated("IPv4 options are truncated")
    proto = data[ETH_HDR_LEN + 9]
    src = data[ETH_HDR_LEN + 12:ETH_HDR_LEN + 16]
    dst = data[ETH_HDR_LEN + 16:ETH_HDR_LEN + 20]
    return ihl, proto, src, dst


def _endpoints(p: Packet):
    data = p.data
    ihl, proto, src, dst = _ipv4_header(data)
    sport = dport = 0
    if proto in (PROTO_TCP, PROTO_UDP):
        off = ETH_HDR_LEN + ihl
        if len(data) < off + 4:
            raise HeaderTruncated("transport ports are truncated")
        sport, dport = struct.unpack_from("!HH", data, off)
    return (src, sport), (dst, dport), proto


def extract_key(p: Packet, bidirectional: bool = True) -> FlowKey:
    """Canonical 5-tuple of an Ethernet/IPv4 packet.

    Non-TCP/UDP protocols get ports (0, 0). Raises NotIPv4 or HeaderTruncated.
    """
    a, b, proto = _endpoints(p)
    if bidirectional and b < a:
        a, b = b, a
    return FlowKey(a[0], a[1], b[0], b[1], proto)


def split_flows(cap: CaptureFile, label: str, bidirectional: bool = True) -> SplitResult:
    """Partition a capture into flows ordered by first-packet index.

    Packets that are not parseable Ethernet/IPv4 are diverted and counted.
    """
    by_key: Dict[FlowKey, FlowRecord] = {}
    diverted = 0
    for p in cap.packets:
        try:
            key = extract_key(p, bidirectional)
        except DataError:
            diverted += 1
            continue
        rec = by_key.get(key)
        if rec is None:
            rec = by_key[key] = FlowRecord(key, [], label)
        rec.packets.append(p)
    if diverted:
        log.info("diverted %d non-IPv4 or truncated packets", diverted)
    # dicts keep insertion order, which is first-packet order
    return SplitResult(list(by_key.values()), diverted)


# -- DNS ---------------------------------------------------------------------

class _MalformedDNS(Exception):
    pass


def _read_name(msg: bytes, off: int) -> Tuple[str, int]:
    """Decode a possibly compressed domain name; returns (name, next offset)."""
    labels = []
    end = None
    jumps = 0
    while True:
        if off >= len(msg):
            raise _MalformedDNS("name runs past message end")
        n = msg[off]
        if n & 0xC0 == 0xC0:
            if off + 1 >= len(msg):
                raise _MalformedDNS("truncated compression pointer")
            if end is None:
                end = off + 2
            off = ((n & 0x3F) << 8) | msg[off + 1]
            jumps += 1
            if jumps > 32:
                raise _MalformedDNS("compression loop")
            continue
        if n & 0xC0:
            raise _MalformedDNS("reserved label type")
        off += 1
        if n == 0:
            break
        if off + n > len(msg):
            raise _MalformedDNS("label runs past message end")
        labels.append(msg[off:off + n].decode("ascii", "replace"))
        off += n
    return ".".join(labels).lower(), (end if end is not None else off)


def parse_dns_a_records(msg: bytes) -> Tuple[List[str], List[bytes]]:
    """Return (question names, A-record addresses) of a DNS response."""
    if len(msg) < 12:
        raise _MalformedDNS("header truncated")
    _, flags, qd, an, _, _ = struct.unpack_from("!HHHHHH", msg, 0)
    if not flags & 0x8000:
        return [], []
    off = 12
    names = []
    for _ in range(qd):
        name, off = _read_name(msg, off)
        off += 4
        names.append(name)
    addrs = []
    for _ in range(an):
        _, off = _read_name(msg, off)
        if off + 10 > len(msg):
            raise _MalformedDNS("answer header truncated")
        rtype, rclass, _, rdlen = struct.unpack_from("!HHIH", msg, off)
        off += 10
        if off + rdlen > len(msg):
            raise _MalformedDNS("rdata truncated")
        if rtype == 1 and rclass == 1 and rdlen == 4:
            addrs.append(msg[off:off + 4])
        off += rdlen
    return names, addrs


def _udp_dns_payload(p: Packet) -> Optional[Tuple[bytes, bool]]:
    """(payload, is_response) when p is a UDP port-53 packet, else None."""
    try:
        ihl, proto, _, _ = _ipv4_header(p.data)
    except DataError:
        return None
    off = ETH_HDR_LEN + ihl
    if proto != PROTO_UDP or len(p.data) < off + 8:
        return None
    sport, dport = struct.unpack_from("!HH", p.data, off)
    if DNS_PORT not in (sport, dport):
        return None
    return p.data[off + 8:], sport == DNS_PORT


def _matches(name: str, patterns: Sequence[str]) -> bool:
    for pat in patterns:
        pat = pat.lower().strip(".")
        if name == pat or name.endswith("." + pat):
            return True
    return False


def dns_filter(cap: CaptureFile, name_patterns: Sequence[str]) -> DnsFilterResult:
    """Keep DNS packets plus traffic to or from addresses resolved for the patterns.

    Patterns are case-insensitive domain suffixes. An empty pattern list
    returns the capture unchanged.
    """
    if not name_patterns:
        return DnsFilterResult(cap)
    addresses: Set[bytes] = set()
    malformed = 0
    dns_idx = set()
    for i, p in enumerate(cap.packets):
        dns = _udp_dns_payload(p)
        if dns is None:
            continue
        dns_idx.add(i)
        payload, is_response = dns
        if not is_response:
            continue
        try:
            names, addrs = parse_dns_a_records(payload)
        except _MalformedDNS:
            malformed += 1
            continue
        if any(_matches(n, name_patterns) for n in names):
            addresses.update(addrs)

    kept = []
    for i, p in enumerate(cap.packets):
        if i in dns_idx:
            kept.append(p)
            continue
        try:
            _, _, src, dst = _ipv4_header(p.data)
        except DataError:
            continue
        if src in addresses or dst in addresses:
            kept.append(p)
    if malformed:
        log.warning("skipped %d malformed DNS responses", malformed)
    out = CaptureFile(kept, cap.link_type, cap.resolution, cap.snaplen)
    return DnsFilterResult(out, addresses, malformed)


# -- dataset manifest --------------------------------------------------------

def load_manifest(path: str | os.PathLike, labels: Optional[Iterable[str]] = None) -> List[dict]:
    """Read a JSON list of {"pcap": path, "label": name} entries.

    Relative pcap paths resolve against the manifest's directory.
    """
    with open(path) as f:
        entries = json.load(f)
    if not isinstance(entries, list):
        raise DataError("manifest must be a JSON list")
    allowed = set(labels) if labels is not None else None
    base = os.path.dirname(os.path.abspath(path))
    out = []
    for e in entries:
        if not isinstance(e, dict) or "pcap" not in e or "label" not in e:
            raise DataError(f"bad manifest entry: {e!r}")
        if allowed is not None and e["label"] not in allowed:
            raise DataError(f"label {e['label']!r} is not in the configured label set")
        out.append({"pcap": os.path.join(base, e["pcap"]), "label": e["label"]})
    return out


def save_manifest(entries: List[dict], path: str | os.PathLike) -> None:
    with open(path, "w") as f:
        json.dump(entries, f, indent=2)
