"""
Classic PCAP reading and writing.

All four classic magics are accepted on input (micro/nano resolution, either
byte order). Output is always little-endian, microsecond resolution.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from typing import List

from .errors import BadMagic, OversizedPacket, TruncatedRecord, UnsupportedLinkType

LINKTYPE_ETHERNET = 1
GLOBAL_HEADER_LEN = 24
RECORD_HEADER_LEN = 16
MAX_PACKET_LEN = 65535

MAGIC_MICRO = 0xA1B2C3D4
MAGIC_NANO = 0xA1B23C4D

# magic as read little-endian -> (byte order prefix, resolution)
_MAGICS = {
    MAGIC_MICRO: ("<", "micro"),
    0xD4C3B2A1: (">", "micro"),
    MAGIC_NANO: ("<", "nano"),
    0x4D3CB2A1: (">", "nano"),
}


@dataclass(frozen=True)
class Packet:
    """One captured frame: raw link-layer bytes plus record metadata."""

    data: bytes
    ts_sec: int = 0
    ts_frac: int = 0
    orig_len: int = -1

    def __post_init__(self):
        if not isinstance(self.data, bytes):
            object.__setattr__(self, "data", bytes(self.data))
        if self.orig_len < 0:
            object.__setattr__(self, "orig_len", len(self.data))


@dataclass
class CaptureFile:
    packets: List[Packet] = field(default_factory=list)
    link_type: int = LINKTYPE_ETHERNET
    resolution: str = "micro"
    snaplen: int = 65535

    def __len__(self):
        return len(self.packets)


def parse_pcap(buf: bytes) -> CaptureFile:
    """Parse a classic PCAP byte string.

    Raises BadMagic, TruncatedRecord or UnsupportedLinkType. The parser never
    reads past the lengths it has checked against the buffer.
    """
    buf = bytes(buf)
    if len(buf) < 4:
        raise BadMagic("input shorter than the magic number")
    (magic,) = struct.unpack_from("<I", buf, 0)
    if magic not in _MAGICS:
        raise BadMagic(f"unknown magic 0x{magic:08x}")
    order, resolution = _MAGICS[magic]
    if len(buf) < GLOBAL_HEADER_LEN:
        raise TruncatedRecord("global header is truncated")
    _, _, _, _, _, snaplen, network = struct.unpack_from(order + "IHHiIII", buf, 0)
    if network != LINKTYPE_ETHERNET:
        raise UnsupportedLinkType(f"link type {network} is not Ethernet")

    rec = struct.Struct(order + "IIII")
    packets = []
    off = GLOBAL_HEADER_LEN
    n = len(buf)
    while off < n:
        if off + RECORD_HEADER_LEN > n:
            raise TruncatedRecord(f"record header at offset {off} is truncated")
        ts_sec, ts_frac, incl_len, orig_len = rec.unpack_from(buf, off)
        off += RECORD_HEADER_LEN
        if incl_len > n - off:
            raise TruncatedRecord(
                f"record body at offset {off} needs {incl_len} bytes, {n - off} left"
            )
        if incl_len == 0:
            raise TruncatedRecord(f"empty record at offset {off}")
        packets.append(Packet(buf[off:off + incl_len], ts_sec, ts_frac, orig_len))
        off += incl_len
    return CaptureFile(packets, network, resolution, snaplen)


def write_pcap(capture: CaptureFile) -> bytes:
    """Serialize to little-endian microsecond-resolution classic PCAP.

    Nanosecond timestamps are truncated to microseconds.
    """
    scale = 1000 if capture.resolution == "nano" else 1
    chunks = [
        struct.pack("<IHHiIII", MAGIC_MICRO, 2, 4, 0, 0, capture.snaplen, LINKTYPE_ETHERNET)
    ]
    for p in capture.packets:
        if len(p.data) > MAX_PACKET_LEN:
            raise OversizedPacket(f"packet of {len(p.data)} bytes exceeds {MAX_PACKET_LEN}")
        chunks.append(struct.pack("<IIII", p.ts_sec, p.ts_frac // scale, len(p.data), p.orig_len))
        chunks.append(p.data)
    return b"".join(chunks)


def read_pcap(path: str | os.PathLike) -> CaptureFile:
    with open(path, "rb") as f:
        return parse_pcap(f.read())


def save_pcap(capture: CaptureFile, path: str | os.PathLike) -> None:
    with open(path, "wb") as f:
        f.write(write_pcap(capture))
