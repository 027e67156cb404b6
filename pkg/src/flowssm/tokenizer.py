"""
Byte-level tokenization of flows.

Layout of a sample::

    [<|label|>, b0, b1, ..., <|pkt|>, b0, ..., <|pkt|>]

Byte ``v`` maps to id ``v``; ``<|pkt|>`` is 256; label ``i`` is ``257 + i``.

Corpus file (``.ntgc``, little-endian)::

    b"NTGC" | u32 n_samples | n_samples x (u32 n_tokens | n_tokens x u16 id)
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from .errors import CorpusFormatError, UnknownLabel

PKT_TOKEN = 256
N_BYTE_TOKENS = 256
MIN_PACKET_LEN = 34  # Ethernet (14) + minimal IPv4 (20)

# Ten service labels, grouped as streaming / conferencing / social media.
DEFAULT_LABELS = (
    "netflix", "youtube", "twitch", "amazon",
    "zoom", "teams", "meet",
    "facebook", "instagram", "twitter",
)

CORPUS_MAGIC = b"NTGC"


@dataclass(frozen=True)
class Vocabulary:
    labels: tuple = DEFAULT_LABELS

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if not self.labels:
            raise ValueError("vocabulary needs at least one label")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("duplicate label names")

    @property
    def pkt_token(self) -> int:
        return PKT_TOKEN

    @property
    def size(self) -> int:
        return N_BYTE_TOKENS + 1 + len(self.labels)

    @property
    def label_tokens(self) -> Dict[str, int]:
        return {name: PKT_TOKEN + 1 + i for i, name in enumerate(self.labels)}

    def label_id(self, name: str) -> int:
        try:
            return PKT_TOKEN + 1 + self.labels.index(name)
        except ValueError:
            raise UnknownLabel(f"label {name!r} not in vocabulary") from None

    def is_label(self, tok: int) -> bool:
        return PKT_TOKEN < tok < self.size

    def label_name(self, tok: int) -> str:
        return self.labels[tok - PKT_TOKEN - 1]

    def render(self, tokens: Sequence[int]) -> str:
        """Human-readable form, e.g. ``<|twitch|> 160 206 <|pkt|>``."""
        out = []
        for t in tokens:
            t = int(t)
            if t < N_BYTE_TOKENS:
                out.append(str(t))
            elif t == PKT_TOKEN:
                out.append("<|pkt|>")
            else:
                out.append(f"<|{self.label_name(t)}|>")
        return " ".join(out)

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w") as f:
            json.dump({"labels": list(self.labels)}, f)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Vocabulary":
        with open(path) as f:
            return cls(tuple(json.load(f)["labels"]))


@dataclass
class DecodeResult:
    packets: List[bytes] = field(default_factory=list)
    malformed: int = 0
    dropped_tail: int = 0
    stopped_on_label: bool = False


def encode_packets(label: str, packets: Sequence[bytes], vocab: Vocabulary) -> np.ndarray:
    total = 1 + sum(len(p) + 1 for p in packets)
    out = np.empty(total, dtype=np.int64)
    out[0] = vocab.label_id(label)
    i = 1
    for p in packets:
        n = len(p)
        out[i:i + n] = np.frombuffer(bytes(p), dtype=np.uint8)
        out[i + n] = PKT_TOKEN
        i += n + 1
    return out


def encode_flow(flow, vocab: Vocabulary) -> np.ndarray:
    """Token ids for a FlowRecord: label, then each packet's bytes and ``<|pkt|>``."""
    return encode_packets(flow.label, [p.data for p in flow.packets], vocab)


def decode_tokens(tokens: Sequence[int], vocab: Vocabulary,
                  min_len: int = MIN_PACKET_LEN) -> DecodeResult:
    """Split a token stream back into packets. Total: never raises.

    Segments shorter than ``min_len`` count as malformed, an unterminated
    tail is dropped, and a label token after position 0 ends decoding.
    """
    res = DecodeResult()
    seg = bytearray()
    toks = [int(t) for t in tokens]
    start = 1 if toks and vocab.is_label(toks[0]) else 0
    for t in toks[start:]:
        if 0 <= t < N_BYTE_TOKENS:
            seg.append(t)
        elif t == PKT_TOKEN:
            if len(seg) < min_len:
                res.malformed += 1
            else:
                res.packets.append(bytes(seg))
            seg = bytearray()
        else:
            res.stopped_on_label = True
            break
    if seg:
        res.dropped_tail = 1
    return res


# -- corpus file -------------------------------------------------------------

def write_corpus(samples: Sequence[Sequence[int]], path: str | os.PathLike) -> None:
    with open(path, "wb") as f:
        f.write(CORPUS_MAGIC + struct.pack("<I", len(samples)))
        for s in samples:
            arr = np.asarray(s)
            if arr.size and (arr.min() < 0 or arr.max() > 0xFFFF):
                raise CorpusFormatError("token id does not fit in u16")
            f.write(struct.pack("<I", arr.size))
            f.write(arr.astype("<u2").tobytes())


def read_corpus(path: str | os.PathLike) -> List[np.ndarray]:
    with open(path, "rb") as f:
        buf = f.read()
    if buf[:4] != CORPUS_MAGIC:
        raise CorpusFormatError("not an NTGC corpus file")
    if len(buf) < 8:
        raise CorpusFormatError("corpus header truncated")
    (n,) = struct.unpack_from("<I", buf, 4)
    off = 8
    out = []
    for _ in range(n):
        if off + 4 > len(buf):
            raise CorpusFormatError("sample header truncated")
        (k,) = struct.unpack_from("<I", buf, off)
        off += 4
        if off + 2 * k > len(buf):
            raise CorpusFormatError("sample body truncated")
        out.append(np.frombuffer(buf, dtype="<u2", count=k, offset=off).astype(np.int64))
        off += 2 * k
    if off != len(buf):
        raise CorpusFormatError("trailing bytes after last sample")
    return out
