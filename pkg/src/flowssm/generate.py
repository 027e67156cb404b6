"""Seeded autoregressive generation and PCAP reconstruction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import ssm
from .errors import InvalidSeed, SeedTooLong
from .pcap import CaptureFile, Packet
from .tokenizer import PKT_TOKEN, Vocabulary, decode_tokens, encode_flow, encode_packets

DEFAULT_MAX_TOKENS = 100_000
EXTRA_TOKENS = 10
SYNTH_T0 = 1_700_000_000
SYNTH_SPACING_US = 1000


@dataclass(frozen=True)
class GenerationRequest:
    seed: tuple
    length: int
    sampling: str = "temperature"  # or "greedy"
    temperature: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "seed", tuple(int(t) for t in self.seed))
        if self.sampling not in ("greedy", "temperature"):
            raise ValueError(f"unknown sampling mode {self.sampling!r}")
        if self.sampling == "temperature" and self.temperature <= 0:
            raise ValueError("temperature must be positive")


@dataclass
class RebuildResult:
    capture: CaptureFile
    n_packets: int
    malformed: int
    dropped_tail: int


def make_seed(flow, vocab: Vocabulary) -> np.ndarray:
    """Label token, the first packet's bytes, then ``<|pkt|>``."""
    if not flow.packets:
        raise ValueError("flow has no packets")
    return encode_packets(flow.label, [flow.packets[0].data], vocab)


def default_length(flow, vocab: Vocabulary) -> int:
    """Token budget: the real tokenized flow length plus ten."""
    return len(encode_flow(flow, vocab)) + EXTRA_TOKENS


def _check_seed(seed, vocab: Vocabulary):
    if len(seed) < 2 or not vocab.is_label(seed[0]) or seed[-1] != PKT_TOKEN:
        raise InvalidSeed("seed must start with a label token and end with <|pkt|>")
    if any(vocab.is_label(t) for t in seed[1:]):
        raise InvalidSeed("label tokens may only appear at position 0")


def generate(params: ssm.ModelParameters, cfg: ssm.ModelConfig, req: GenerationRequest,
             vocab: Optional[Vocabulary] = None, max_tokens: int = DEFAULT_MAX_TOKENS) -> np.ndarray:
    """Continue ``req.seed`` until exactly ``req.length`` tokens exist.

    Label tokens are excluded from sampling. Output starts with the seed.
    """
    if vocab is None:
        vocab = Vocabulary(tuple(f"label{i}" for i in range(cfg.vocab_size - PKT_TOKEN - 1)))
    if vocab.size != cfg.vocab_size:
        raise ValueError("vocabulary size does not match the model")
    seed = list(req.seed)
    _check_seed(seed, vocab)
    if len(seed) >= req.length:
        raise SeedTooLong(f"seed of {len(seed)} tokens leaves no room in a budget of {req.length}")
    if req.length > max_tokens:
        raise SeedTooLong(f"budget {req.length} exceeds the generation cap {max_tokens}")

    rng = np.random.default_rng(req.rng_seed)
    mask = np.zeros(cfg.vocab_size, dtype=bool)
    mask[PKT_TOKEN + 1:] = True
    out = np.empty(req.length, dtype=np.int64)
    out[:len(seed)] = seed

    state = ssm.start_state(cfg, params.embedding.dtype)
    for tok in seed:
        state, logits = ssm.step(state, tok, params, cfg)
    for i in range(len(seed), req.length):
        logits = np.where(mask, -np.inf, logits)
        if req.sampling == "greedy":
            tok = int(np.argmax(logits))
        else:
            z = logits / req.temperature
            p = np.exp(z - z.max())
            p /= p.sum()
            tok = int(rng.choice(cfg.vocab_size, p=p))
        out[i] = tok
        if i + 1 < req.length:
            state, logits = ssm.step(state, tok, params, cfg)
    return out


def rebuild_pcap(tokens, vocab: Vocabulary, t0: int = SYNTH_T0) -> RebuildResult:
    """Decode a token stream into a capture with 1 ms synthetic spacing."""
    dec = decode_tokens(tokens, vocab)
    pkts = []
    for k, data in enumerate(dec.packets):
        us = k * SYNTH_SPACING_US
        pkts.append(Packet(data, t0 + us // 1_000_000, us % 1_000_000))
    return RebuildResult(CaptureFile(pkts), len(pkts), dec.malformed, dec.dropped_tail)
