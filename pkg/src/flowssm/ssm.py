"""
Selective state-space language model over byte tokens.

Layout conventions: sequences are time-major, ``x[t, channel]``. Each block
computes::

    n      = rmsnorm(x) * g
    xi, z  = split(n @ W_in)
    u      = silu(causal_conv(xi))
    delta  = softplus((u @ W_dt_down) @ W_dt_up + b_dt)
    B, C   = u @ W_B, u @ W_C
    h_t    = exp(delta_t * A) * h_{t-1} + delta_t * B_t * u_t
    y_t    = C_t . h_t + D * u_t
    out    = x + (y * silu(z)) @ W_out

with ``A = -exp(A_log)`` diagonal per (channel, state). The output head
reuses the embedding matrix after a final RMS norm.

Two evaluation paths exist: :func:`forward` runs whole sequences with a
vectorized scan; :func:`step` advances one token with an explicit recurrent
update. They must agree, which the test-suite checks.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from .errors import SequenceTooLong

RMS_EPS = 1e-5
DT_MIN = 1e-3
DT_MAX = 1e-1
DT_RANK_DIVISOR = 16


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int = 64
    n_layers: int = 2
    d_state: int = 16
    conv_width: int = 4
    max_seq_len: int = 4096
    rng_seed: int = 0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name != "rng_seed" and v <= 0:
                raise ValueError(f"{f.name} must be positive, got {v}")
        if self.max_seq_len < 2:
            raise ValueError("max_seq_len must be at least 2")

    @property
    def d_inner(self) -> int:
        return 2 * self.d_model

    @property
    def dt_rank(self) -> int:
        return math.ceil(self.d_inner / DT_RANK_DIVISOR)

    def to_dict(self) -> dict:
        return asdict(self)


PRESETS = {
    "desk": dict(d_model=64, n_layers=2, d_state=16, max_seq_len=4096),
    "paper": dict(d_model=768, n_layers=24, d_state=16, max_seq_len=50_000),
}


def preset_config(name: str, vocab_size: int, **overrides) -> ModelConfig:
    return ModelConfig(vocab_size=vocab_size, **{**PRESETS[name], **overrides})


@dataclass
class BlockParams:
    norm: np.ndarray        # (D,)
    in_proj: np.ndarray     # (D, 2E)
    conv_weight: np.ndarray  # (E, K); column K-1 multiplies the current input
    conv_bias: np.ndarray   # (E,)
    dt_down: np.ndarray     # (E, R)
    dt_up: np.ndarray       # (R, E)
    dt_bias: np.ndarray     # (E,)
    B_proj: np.ndarray      # (E, N)
    C_proj: np.ndarray      # (E, N)
    A_log: np.ndarray       # (E, N), A = -exp(A_log)
    D: np.ndarray           # (E,)
    out_proj: np.ndarray    # (E, D)

    @property
    def A(self) -> np.ndarray:
        return -np.exp(self.A_log)


@dataclass
class ModelParameters:
    embedding: np.ndarray   # (V, D), also the output head
    blocks: List[BlockParams]
    final_norm: np.ndarray  # (D,)

    def named_tensors(self) -> Iterator[Tuple[str, np.ndarray]]:
        """Tensors in the fixed serialization order."""
        yield "embedding", self.embedding
        for i, b in enumerate(self.blocks):
            for f in fields(BlockParams):
                yield f"blocks.{i}.{f.name}", getattr(b, f.name)
        yield "final_norm", self.final_norm

    def map(self, fn) -> "ModelParameters":
        """New parameters with ``fn`` applied to every tensor."""
        return ModelParameters(
            fn(self.embedding),
            [BlockParams(**{f.name: fn(getattr(b, f.name)) for f in fields(BlockParams)})
             for b in self.blocks],
            fn(self.final_norm),
        )

    @classmethod
    def from_named(cls, named: Dict[str, np.ndarray], n_layers: int) -> "ModelParameters":
        blocks = [
            BlockParams(**{f.name: named[f"blocks.{i}.{f.name}"] for f in fields(BlockParams)})
            for i in range(n_layers)
        ]
        return cls(named["embedding"], blocks, named["final_norm"])

    def copy(self) -> "ModelParameters":
        return self.map(np.copy)

    def n_params(self) -> int:
        return sum(t.size for _, t in self.named_tensors())


@dataclass
class BlockState:
    conv: np.ndarray  # (K-1, E) most recent conv inputs, oldest first
    h: np.ndarray     # (E, N)


@dataclass
class SSMState:
    blocks: List[BlockState] = field(default_factory=list)
    position: int = 0


# -- elementwise helpers -----------------------------------------------------

def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def silu(x):
    return x * sigmoid(x)


def softplus(x):
    return np.logaddexp(0.0, x)


def inverse_softplus(y):
    return y + np.log(-np.expm1(-y))


# -- initialization ----------------------------------------------------------

def _uniform(rng, shape, fan_in):
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_parameters(cfg: ModelConfig, dtype=np.float64) -> ModelParameters:
    """Deterministic initialization from ``cfg.rng_seed``.

    ``A_log[c, k] = log(k + 1)`` (real diagonal init), ``D = 1``, and the
    step-size bias is set so ``softplus(dt_bias)`` is log-uniform in
    ``[DT_MIN, DT_MAX]``.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    D, E, N, K, R = cfg.d_model, cfg.d_inner, cfg.d_state, cfg.conv_width, cfg.dt_rank
    emb = rng.normal(0.0, 0.02, size=(cfg.vocab_size, D))
    blocks = []
    for _ in range(cfg.n_layers):
        dt = np.exp(rng.uniform(math.log(DT_MIN), math.log(DT_MAX), size=E))
        blocks.append(BlockParams(
            norm=np.ones(D),
            in_proj=_uniform(rng, (D, 2 * E), D),
            conv_weight=_uniform(rng, (E, K), K),
            conv_bias=_uniform(rng, (E,), K),
            dt_down=_uniform(rng, (E, R), E),
            dt_up=_uniform(rng, (R, E), R),
            dt_bias=inverse_softplus(dt),
            B_proj=_uniform(rng, (E, N), E),
            C_proj=_uniform(rng, (E, N), E),
            A_log=np.tile(np.log(np.arange(1, N + 1, dtype=np.float64)), (E, 1)),
            D=np.ones(E),
            out_proj=_uniform(rng, (E, D), E),
        ))
    params = ModelParameters(emb, blocks, np.ones(D))
    return params.map(lambda t: np.asarray(t, dtype=dtype))


# -- SSM primitives ----------------------------------------------------------

def discretize(delta, A, B):
    """Zero-order hold on diagonal ``A`` and Euler on ``B``.

    Broadcasting: ``delta`` (..., E), ``A`` (E, N), ``B`` (..., N) give
    ``(A_bar, B_bar)`` both shaped (..., E, N).
    """
    delta = np.atleast_1d(np.asarray(delta, dtype=float))[..., :, None]
    A_bar = np.exp(delta * A)
    B_bar = delta * np.atleast_1d(np.asarray(B, dtype=float))[..., None, :]
    return A_bar, B_bar


def selective_scan(u, delta, A, B, C, D, h0=None, return_states=False):
    """Run the time-variant recurrence over a whole sequence.

    Shapes: ``u``/``delta`` (T, E), ``A`` (E, N), ``B``/``C`` (T, N), ``D`` (E,).
    Returns ``y`` (T, E); with ``return_states`` also the stacked states
    (T, E, N) and the discretized decay (T, E, N).
    """
    u = np.asarray(u, dtype=float)
    T, E = u.shape
    A_bar, B_bar = discretize(delta, A, B)
    drive = B_bar * u[:, :, None]
    hs = np.empty_like(drive)
    h = np.zeros(drive.shape[1:]) if h0 is None else h0
    for t in range(T):
        h = A_bar[t] * h + drive[t]
        hs[t] = h
    y = np.einsum("ten,tn->te", hs, C) + u * D
    if return_states:
        return y, hs, A_bar
    return y


def causal_conv(xi, weight, bias, prev=None):
    """Depthwise causal convolution; ``prev`` holds the K-1 earlier inputs."""
    T, E = xi.shape
    K = weight.shape[1]
    if prev is None:
        prev = np.zeros((K - 1, E), dtype=xi.dtype)
    pad = np.concatenate([prev, xi], axis=0)
    out = np.broadcast_to(bias, (T, E)).copy()
    for k in range(K):
        out += pad[k:k + T] * weight[:, k]
    return out, pad


def rmsnorm(x, g):
    r = 1.0 / np.sqrt(np.mean(x * x, axis=-1, keepdims=True) + RMS_EPS)
    xn = x * r
    return xn * g, xn, r


# -- full-sequence path ------------------------------------------------------

def mamba_block(x, bp: BlockParams, state: Optional[BlockState] = None, cache: Optional[dict] = None):
    """One residual block over a (T, D) sequence.

    Returns ``(y, state')``. When ``cache`` is a dict the intermediates needed
    for the backward pass are stored in it.
    """
    E = bp.D.shape[0]
    n, xn, r = rmsnorm(x, bp.norm)
    xz = n @ bp.in_proj
    xi, z = xz[:, :E], xz[:, E:]
    c, pad = causal_conv(xi, bp.conv_weight, bp.conv_bias, None if state is None else state.conv)
    u = silu(c)
    dt_low = u @ bp.dt_down
    dt_raw = dt_low @ bp.dt_up + bp.dt_bias
    delta = softplus(dt_raw)
    Bm = u @ bp.B_proj
    Cm = u @ bp.C_proj
    A = bp.A
    h0 = None if state is None else state.h
    y, hs, A_bar = selective_scan(u, delta, A, Bm, Cm, bp.D, h0=h0, return_states=True)
    sz = silu(z)
    gated = y * sz
    out = x + gated @ bp.out_proj
    K = bp.conv_weight.shape[1]
    new_state = BlockState(conv=pad[pad.shape[0] - (K - 1):].copy(), h=hs[-1].copy())
    if cache is not None:
        cache.update(x=x, xn=xn, r=r, n=n, xi=xi, z=z, pad=pad, c=c, u=u,
                     dt_low=dt_low, dt_raw=dt_raw, delta=delta, Bm=Bm, Cm=Cm,
                     A=A, hs=hs, A_bar=A_bar, y=y, sz=sz, gated=gated,
                     h0=np.zeros_like(hs[0]) if h0 is None else h0)
    return out, new_state


def check_length(n_tokens: int, cfg: ModelConfig) -> None:
    if n_tokens < 1:
        raise ValueError("empty token sequence")
    if n_tokens > cfg.max_seq_len:
        raise SequenceTooLong(f"{n_tokens} tokens exceeds max_seq_len={cfg.max_seq_len}")


def forward(tokens, params: ModelParameters, cfg: ModelConfig, cache: Optional[dict] = None):
    """Logits of shape (T, vocab_size); row t depends only on tokens[:t+1]."""
    tokens = np.asarray(tokens, dtype=np.int64)
    check_length(tokens.shape[0], cfg)
    x = params.embedding[tokens]
    block_caches = []
    for bp in params.blocks:
        bc = {} if cache is not None else None
        x, _ = mamba_block(x, bp, cache=bc)
        block_caches.append(bc)
    xf, xn, r = rmsnorm(x, params.final_norm)
    logits = xf @ params.embedding.T
    if cache is not None:
        cache.update(tokens=tokens, blocks=block_caches, x_last=x, xf=xf, xn=xn, r=r)
    return logits


# -- recurrent path ----------------------------------------------------------

def start_state(cfg: ModelConfig, dtype=np.float64) -> SSMState:
    E, N, K = cfg.d_inner, cfg.d_state, cfg.conv_width
    return SSMState([BlockState(np.zeros((K - 1, E), dtype), np.zeros((E, N), dtype))
                     for _ in range(cfg.n_layers)])


def _block_step(x, bp: BlockParams, st: BlockState) -> Tuple[np.ndarray, BlockState]:
    """Single-token update of one block; ``x`` has shape (D,)."""
    E = bp.D.shape[0]
    ms = np.dot(x, x) / x.shape[0]
    n = x / np.sqrt(ms + RMS_EPS) * bp.norm
    xz = n @ bp.in_proj
    xi, z = xz[:E], xz[E:]
    window = np.vstack([st.conv, xi[None, :]])          # (K, E)
    c = np.einsum("ke,ek->e", window, bp.conv_weight) + bp.conv_bias
    u = silu(c)
    delta = softplus((u @ bp.dt_down) @ bp.dt_up + bp.dt_bias)
    Bt = u @ bp.B_proj
    Ct = u @ bp.C_proj
    h = np.exp(delta[:, None] * bp.A) * st.h + (delta * u)[:, None] * Bt[None, :]
    y = h @ Ct + bp.D * u
    out = x + (y * silu(z)) @ bp.out_proj
    return out, BlockState(window[1:], h)


def step(state: SSMState, token: int, params: ModelParameters, cfg: ModelConfig):
    """Advance by one token. Returns ``(state', logits)`` with logits (vocab,)."""
    x = params.embedding[int(token)]
    new_blocks = []
    for bp, st in zip(params.blocks, state.blocks):
        x, st2 = _block_step(x, bp, st)
        new_blocks.append(st2)
    ms = np.dot(x, x) / x.shape[0]
    xf = x / np.sqrt(ms + RMS_EPS) * params.final_norm
    return SSMState(new_blocks, state.position + 1), params.embedding @ xf
