"""Builders for Ethernet/IPv4/TCP/UDP/DNS frames.

Used to assemble fixture captures and toy corpora. Checksums are computed
the way a sender would, so built frames look like real traffic to parsers.
"""

from __future__ import annotations

import ipaddress
import struct

ETH_IPV4 = 0x0800
PROTO_ICMP = 1
PROTO_TCP = 6
PROTO_UDP = 17

TCP_FIN = 0x01
TCP_SYN = 0x02
TCP_RST = 0x04
TCP_PSH = 0x08
TCP_ACK = 0x10


def ip_bytes(addr) -> bytes:
    return ipaddress.IPv4Address(addr).packed


def mac_bytes(mac: str) -> bytes:
    return bytes(int(x, 16) for x in mac.split(":"))


def inet_checksum(data: bytes) -> int:
    if len(data) % 2:
        data += b"\x00"
    total = sum(struct.unpack(f"!{len(data) // 2}H", data))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def ethernet(dst: str, src: str, payload: bytes, ethertype: int = ETH_IPV4) -> bytes:
    return mac_bytes(dst) + mac_bytes(src) + struct.pack("!H", ethertype) + payload


def ipv4(src, dst, proto: int, payload: bytes, *, ttl: int = 64, ident: int = 0,
         tos: int = 0, flags: int = 0b010, frag: int = 0, options: bytes = b"") -> bytes:
    if len(options) % 4:
        raise ValueError("IPv4 options must be a multiple of 4 bytes")
    ihl = 5 + len(options) // 4
    total_len = ihl * 4 + len(payload)
    hdr = struct.pack(
        "!BBHHHBBH4s4s", (4 << 4) | ihl, tos, total_len, ident,
        (flags << 13) | frag, ttl, proto, 0, ip_bytes(src), ip_bytes(dst),
    ) + options
    csum = inet_checksum(hdr)
    return hdr[:10] + struct.pack("!H", csum) + hdr[12:] + payload


def _pseudo_header(src, dst, proto: int, length: int) -> bytes:
    return ip_bytes(src) + ip_bytes(dst) + struct.pack("!BBH", 0, proto, length)


def tcp(src, dst, sport: int, dport: int, *, seq: int = 0, ack: int = 0,
        flags: int = TCP_ACK, window: int = 65535, urgptr: int = 0,
        options: bytes = b"", payload: bytes = b"") -> bytes:
    if len(options) % 4:
        raise ValueError("TCP options must be a multiple of 4 bytes")
    dataofs = 5 + len(options) // 4
    hdr = struct.pack(
        "!HHIIHHHH", sport, dport, seq & 0xFFFFFFFF, ack & 0xFFFFFFFF,
        (dataofs << 12) | (flags & 0x1FF), window, 0, urgptr,
    ) + options
    seg = hdr + payload
    csum = inet_checksum(_pseudo_header(src, dst, PROTO_TCP, len(seg)) + seg)
    return seg[:16] + struct.pack("!H", csum) + seg[18:]


def udp(src, dst, sport: int, dport: int, payload: bytes = b"") -> bytes:
    length = 8 + len(payload)
    seg = struct.pack("!HHHH", sport, dport, length, 0) + payload
    csum = inet_checksum(_pseudo_header(src, dst, PROTO_UDP, length) + seg) or 0xFFFF
    return seg[:6] + struct.pack("!H", csum) + seg[8:]


def tcp_frame(src, dst, sport, dport, *, src_mac="02:00:00:00:00:01",
              dst_mac="02:00:00:00:00:02", ttl=64, ident=0, **kw) -> bytes:
    seg = tcp(src, dst, sport, dport, **kw)
    return ethernet(dst_mac, src_mac, ipv4(src, dst, PROTO_TCP, seg, ttl=ttl, ident=ident))


def udp_frame(src, dst, sport, dport, payload=b"", *, src_mac="02:00:00:00:00:01",
              dst_mac="02:00:00:00:00:02", ttl=64, ident=0) -> bytes:
    seg = udp(src, dst, sport, dport, payload)
    return ethernet(dst_mac, src_mac, ipv4(src, dst, PROTO_UDP, seg, ttl=ttl, ident=ident))


def icmp_frame(src, dst, *, src_mac="02:00:00:00:00:01",
               dst_mac="02:00:00:00:00:02") -> bytes:
    body = struct.pack("!BBHHH", 8, 0, 0, 1, 1) + b"ping" * 8
    body = body[:2] + struct.pack("!H", inet_checksum(body)) + body[4:]
    return ethernet(dst_mac, src_mac, ipv4(src, dst, PROTO_ICMP, body))


def _dns_name(name: str) -> bytes:
    out = b""
    for label in name.rstrip(".").split("."):
        out += bytes([len(label)]) + label.encode("ascii")
    return out + b"\x00"


def dns_query(name: str, txid: int = 0x1234, qtype: int = 1) -> bytes:
    return struct.pack("!HHHHHH", txid, 0x0100, 1, 0, 0, 0) + _dns_name(name) + struct.pack("!HH", qtype, 1)


def dns_a_response(name: str, addresses, txid: int = 0x1234, ttl: int = 300) -> bytes:
    """DNS response with one question and A answers using name compression."""
    msg = struct.pack("!HHHHHH", txid, 0x8180, 1, len(addresses), 0, 0)
    msg += _dns_name(name) + struct.pack("!HH", 1, 1)
    for addr in addresses:
        msg += struct.pack("!HHHIH", 0xC00C, 1, 1, ttl, 4) + ip_bytes(addr)
    return msg
