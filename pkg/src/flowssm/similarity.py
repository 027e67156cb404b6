"""
Distribution distances between real and synthetic traces, the random
baseline, and packet-level memorization analysis.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from . import nprint
from .errors import DataError, EmptyInput
from .pcap import CaptureFile, Packet

METRICS = ("jsd", "tvd", "hd")


def _pair(p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("distributions must share one support")
    return p, q


def _kl2(p, m):
    nz = p > 0
    return np.sum(p[nz] * np.log2(p[nz] / m[nz]))


def jsd(p, q) -> float:
    """Jensen-Shannon divergence in bits (range [0, 1])."""
    p, q = _pair(p, q)
    m = 0.5 * (p + q)
    return float(min(max(0.5 * _kl2(p, m) + 0.5 * _kl2(q, m), 0.0), 1.0))


def tvd(p, q) -> float:
    p, q = _pair(p, q)
    return float(0.5 * np.abs(p - q).sum())


def hellinger(p, q) -> float:
    """sqrt(1 - sum sqrt(p q)), evaluated as sqrt(0.5 sum (sqrt p - sqrt q)^2).

    The two agree for normalized inputs; the second avoids cancellation, so
    hellinger(p, p) is exactly 0.
    """
    p, q = _pair(p, q)
    d = np.sqrt(p) - np.sqrt(q)
    return float(np.sqrt(min(max(0.5 * np.sum(d * d), 0.0), 1.0)))


# vectorized forms over binary distributions, one per bit position
def _binary_metrics(p1, q1) -> Dict[str, np.ndarray]:
    P = np.stack([1 - p1, p1], axis=-1)
    Q = np.stack([1 - q1, q1], axis=-1)
    M = 0.5 * (P + Q)
    with np.errstate(divide="ignore", invalid="ignore"):
        kp = np.where(P > 0, P * np.log2(P / M), 0.0).sum(-1)
        kq = np.where(Q > 0, Q * np.log2(Q / M), 0.0).sum(-1)
    return {
        "jsd": np.clip(0.5 * (kp + kq), 0.0, 1.0),
        "tvd": np.abs(p1 - q1),
        "hd": np.sqrt(np.clip(0.5 * ((np.sqrt(P) - np.sqrt(Q)) ** 2).sum(-1), 0.0, 1.0)),
    }


@dataclass
class FieldDistributionTable:
    """Per-bit counts of 0 and 1 values; -1 (absent) entries are excluded."""

    zeros: np.ndarray
    ones: np.ndarray

    @classmethod
    def from_bits(cls, bits: np.ndarray) -> "FieldDistributionTable":
        bits = np.atleast_2d(bits)
        return cls((bits == 0).sum(axis=0), (bits == 1).sum(axis=0))

    @classmethod
    def from_packets(cls, packets) -> "FieldDistributionTable":
        return cls.from_bits(nprint.encode_many(packets))

    def merge(self, other: "FieldDistributionTable") -> "FieldDistributionTable":
        return FieldDistributionTable(self.zeros + other.zeros, self.ones + other.ones)

    @property
    def support(self) -> np.ndarray:
        return self.zeros + self.ones

    @property
    def p_one(self) -> np.ndarray:
        s = self.support
        return np.divide(self.ones, s, out=np.zeros(s.shape), where=s > 0)

    @property
    def unsupported(self) -> np.ndarray:
        return np.flatnonzero(self.support == 0)


@dataclass
class SimilarityReport:
    means: Dict[str, float]
    per_bit: Dict[str, List[float]]
    scored_bits: List[int]
    skipped_bits: List[int]

    def to_json(self, per_bit: bool = False) -> str:
        d = {"means": self.means, "n_scored": len(self.scored_bits),
             "n_skipped": len(self.skipped_bits), "skipped_bits": self.skipped_bits}
        if per_bit:
            d["scored_bits"] = self.scored_bits
            d["per_bit"] = self.per_bit
        return json.dumps(d, indent=2)


def _packets(captures) -> List[bytes]:
    out = []
    for c in captures:
        pkts = c.packets if isinstance(c, CaptureFile) else c
        out.extend(p.data if isinstance(p, Packet) else bytes(p) for p in pkts)
    return out


def similarity_from_tables(real: FieldDistributionTable, synth: FieldDistributionTable) -> SimilarityReport:
    ok = (real.support > 0) & (synth.support > 0)
    scored = np.flatnonzero(ok)
    per = _binary_metrics(real.p_one[scored], synth.p_one[scored])
    means = {m: float(per[m].mean()) if scored.size else float("nan") for m in METRICS}
    return SimilarityReport(means, {m: per[m].tolist() for m in METRICS},
                            scored.tolist(), np.flatnonzero(~ok).tolist())


def similarity(real: Sequence, synth: Sequence) -> SimilarityReport:
    """Per-bit JSD/TVD/HD between the header-bit distributions of two trace sets.

    Inputs are sequences of captures (or of packet lists). Bits without
    support on either side are skipped and listed in the report.
    """
    rp, sp = _packets(real), _packets(synth)
    if not rp or not sp:
        raise EmptyInput("both sides need at least one packet")
    return similarity_from_tables(FieldDistributionTable.from_packets(rp),
                                  FieldDistributionTable.from_packets(sp))


def random_baseline(template: Sequence[CaptureFile], rng_seed: int = 0) -> List[CaptureFile]:
    """Uniform random bytes, one packet per template packet, same lengths."""
    if not template:
        raise EmptyInput("template is empty")
    rng = np.random.default_rng(rng_seed)
    out = []
    for cap in template:
        pkts = [Packet(rng.integers(0, 256, len(p.data), dtype=np.uint8).tobytes(),
                       p.ts_sec, p.ts_frac) for p in cap.packets]
        out.append(CaptureFile(pkts, cap.link_type, cap.resolution, cap.snaplen))
    return out


# -- memorization ------------------------------------------------------------

@dataclass
class PairReport:
    compared: int
    identical: int
    differing_byte_pct: float
    field_change: Dict[str, float] = field(default_factory=dict)


@dataclass
class MemorizationReport:
    pairs: List[PairReport]
    mean_identical: float
    mean_differing_byte_pct: float
    field_change: Dict[str, float]
    k: int = 100
    aggregation: str = ("differing_byte_pct: per-pair mean over non-identical packets, "
                        "then unweighted mean over pairs having any; field_change: mean "
                        "over all aligned packet pairs where both packets carry the field")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def write_field_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["Field", "Average Change"])
            for name, v in sorted(self.field_change.items(), key=lambda kv: -kv[1]):
                w.writerow([name, f"{v:.2f}"])


def differing_bytes(a: bytes, b: bytes) -> int:
    """Positions that differ, counting the unmatched tail of the longer packet."""
    n = min(len(a), len(b))
    x = np.frombuffer(a, dtype=np.uint8, count=n)
    y = np.frombuffer(b, dtype=np.uint8, count=n)
    return int(np.count_nonzero(x != y)) + abs(len(a) - len(b))


def _safe_fields(data: bytes):
    try:
        return nprint.extract_fields(data)
    except DataError:
        return None


def memorization(real_flows: Sequence, synth_captures: Sequence, k: int = 100) -> MemorizationReport:
    """Compare each real flow with its generated counterpart packet by packet.

    ``real_flows[i]`` (FlowRecord, CaptureFile or packet list) pairs with
    ``synth_captures[i]``. The first ``k`` aligned packets are compared.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(real_flows) != len(synth_captures):
        raise ValueError("real and synthetic sequences must pair up one-to-one")
    pairs = []
    sums: Dict[str, float] = {}
    counts: Dict[str, int] = {}
    for real, synth in zip(real_flows, synth_captures):
        rp = _packets([real.packets if hasattr(real, "packets") else real])
        sp = _packets([synth.packets if hasattr(synth, "packets") else synth])
        n = min(k, len(rp), len(sp))
        identical = 0
        pcts = []
        fsum: Dict[str, float] = {}
        fcnt: Dict[str, int] = {}
        for a, b in zip(rp[:n], sp[:n]):
            if a == b:
                identical += 1
            else:
                pcts.append(100.0 * differing_bytes(a, b) / max(len(a), len(b)))
            fa, fb = _safe_fields(a), _safe_fields(b)
            if fa is None or fb is None:
                continue
            for name in fa.keys() & fb.keys():
                fsum[name] = fsum.get(name, 0.0) + abs(fa[name] - fb[name])
                fcnt[name] = fcnt.get(name, 0) + 1
        for name in fsum:
            sums[name] = sums.get(name, 0.0) + fsum[name]
            counts[name] = counts.get(name, 0) + fcnt[name]
        pairs.append(PairReport(
            n, identical, float(np.mean(pcts)) if pcts else 0.0,
            {name: fsum[name] / fcnt[name] for name in sorted(fsum)},
        ))
    with_diffs = [p.differing_byte_pct for p in pairs if p.identical < p.compared]
    return MemorizationReport(
        pairs=pairs,
        mean_identical=float(np.mean([p.identical for p in pairs])) if pairs else 0.0,
        mean_differing_byte_pct=float(np.mean(with_diffs)) if with_diffs else 0.0,
        field_change={name: sums[name] / counts[name] for name in sorted(sums)},
        k=k,
    )
