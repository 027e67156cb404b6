"""Small synthetic TCP/UDP flows for demos and tests.

Flows carry a handshake, request/response exchange and teardown with
consistent sequence/ack numbers, so they exercise the same header structure
real captures do while staying a few hundred bytes long.
"""

from __future__ import annotations

from typing import List, Optional

import numpy as np

from . import frames
from .flows import FlowRecord, extract_key
from .pcap import CaptureFile, Packet


def tcp_flow_packets(rng: np.random.Generator, n_data: int = 2, payload_max: int = 48,
                     client: Optional[str] = None, server: Optional[str] = None,
                     server_port: int = 443) -> List[bytes]:
    """Frames of one TCP connection: SYN, SYN/ACK, ACK, data exchanges, FIN."""
    client = client or f"10.0.{rng.integers(0, 4)}.{rng.integers(2, 250)}"
    server = server or f"93.184.{rng.integers(0, 256)}.{rng.integers(1, 255)}"
    cport = int(rng.integers(49152, 65535))
    cmac, smac = "02:00:00:00:00:01", "02:00:00:00:00:02"
    cseq = int(rng.integers(0, 2**32))
    sseq = int(rng.integers(0, 2**32))
    ident = int(rng.integers(0, 60000))
    out = []

    def c2s(flags, payload=b"", options=b""):
        nonlocal cseq, ident
        out.append(frames.tcp_frame(client, server, cport, server_port, src_mac=cmac, dst_mac=smac,
                                    ident=ident, seq=cseq, ack=sseq, flags=flags,
                                    window=64240, options=options, payload=payload))
        ident = (ident + 1) & 0xFFFF
        cseq = (cseq + len(payload) + (1 if flags & (frames.TCP_SYN | frames.TCP_FIN) else 0)) & 0xFFFFFFFF

    def s2c(flags, payload=b"", options=b""):
        nonlocal sseq
        out.append(frames.tcp_frame(server, client, server_port, cport, src_mac=smac, dst_mac=cmac,
                                    ttl=57, seq=sseq, ack=cseq, flags=flags,
                                    window=65535, options=options, payload=payload))
        sseq = (sseq + len(payload) + (1 if flags & (frames.TCP_SYN | frames.TCP_FIN) else 0)) & 0xFFFFFFFF

    mss = b"\x02\x04\x05\xb4"
    sseq_saved = sseq
    sseq = 0
    c2s(frames.TCP_SYN, options=mss)
    sseq = sseq_saved
    s2c(frames.TCP_SYN | frames.TCP_ACK, options=mss)
    c2s(frames.TCP_ACK)
    for _ in range(n_data):
        req = bytes(rng.integers(0, 256, int(rng.integers(8, payload_max + 1)), dtype=np.uint8))
        c2s(frames.TCP_PSH | frames.TCP_ACK, payload=req)
        resp = bytes(rng.integers(0, 256, int(rng.integers(8, payload_max + 1)), dtype=np.uint8))
        s2c(frames.TCP_PSH | frames.TCP_ACK, payload=resp)
    c2s(frames.TCP_FIN | frames.TCP_ACK)
    s2c(frames.TCP_FIN | frames.TCP_ACK)
    return out


def udp_flow_packets(rng: np.random.Generator, n: int = 4, payload_max: int = 64) -> List[bytes]:
    client = f"10.1.0.{rng.integers(2, 250)}"
    server = f"198.51.100.{rng.integers(1, 255)}"
    cport = int(rng.integers(49152, 65535))
    out = []
    for i in range(n):
        payload = bytes(rng.integers(0, 256, int(rng.integers(8, payload_max + 1)), dtype=np.uint8))
        if i % 2 == 0:
            out.append(frames.udp_frame(client, server, cport, 3478, payload, ident=i))
        else:
            out.append(frames.udp_frame(server, client, 3478, cport, payload, ident=i))
    return out


def make_flow(packets: List[bytes], label: str, t0: int = 1_700_000_000) -> FlowRecord:
    pkts = [Packet(p, t0, 1000 * i) for i, p in enumerate(packets)]
    return FlowRecord(extract_key(pkts[0]), pkts, label)


def toy_flows(n_flows: int, labels, seed: int = 0, **kw) -> List[FlowRecord]:
    """``n_flows`` TCP flows with labels assigned round-robin."""
    rng = np.random.default_rng(seed)
    labels = list(labels)
    return [make_flow(tcp_flow_packets(rng, **kw), labels[i % len(labels)]) for i in range(n_flows)]


def interleave(flows: List[FlowRecord]) -> CaptureFile:
    """Merge flows into one capture, round-robin, timestamps re-assigned."""
    pkts = []
    queues = [list(f.packets) for f in flows]
    while any(queues):
        for q in queues:
            if q:
                pkts.append(q.pop(0))
    return CaptureFile([Packet(p.data, 1_700_000_000, 1000 * i) for i, p in enumerate(pkts)])
