"""
Reverse-mode gradients for the fixed computation graph of :mod:`flowssm.ssm`.

Every forward op recorded by ``ssm.forward(..., cache=...)`` has a matching
adjoint here. Gradients come back as a :class:`ModelParameters` holding one
array per parameter, same shapes.
"""

from __future__ import annotations

import numpy as np

from .ssm import BlockParams, ModelParameters, sigmoid


def rmsnorm_backward(dy, xn, r, g):
    """Returns (dx, dg) for ``y = x * r * g`` with ``r = 1/sqrt(mean(x^2)+eps)``."""
    dg = np.sum(dy * xn, axis=0)
    dxn = dy * g
    dx = r * (dxn - xn * np.mean(dxn * xn, axis=-1, keepdims=True))
    return dx, dg


def silu_backward(dy, x):
    s = sigmoid(x)
    return dy * s * (1.0 + x * (1.0 - s))


def causal_conv_backward(dc, pad, weight):
    """Returns (dxi, dweight, dbias); ``pad`` is the K-1 zero-prefixed input."""
    T = dc.shape[0]
    K = weight.shape[1]
    dpad = np.zeros_like(pad)
    dw = np.empty_like(weight)
    for k in range(K):
        dpad[k:k + T] += dc * weight[:, k]
        dw[:, k] = np.sum(dc * pad[k:k + T], axis=0)
    return dpad[K - 1:], dw, dc.sum(axis=0)


def selective_scan_backward(dy, u, delta, A, Bm, Cm, D, hs, A_bar, h0):
    """Adjoint of ``selective_scan``.

    Returns (du, ddelta, dA, dB, dC, dD).
    """
    T = u.shape[0]
    dD = np.sum(dy * u, axis=0)
    du = dy * D
    dC = np.einsum("te,ten->tn", dy, hs)
    # state adjoint: G_t = dy_t C_t^T + A_bar_{t+1} * G_{t+1}
    G = dy[:, :, None] * Cm[:, None, :]
    for t in range(T - 2, -1, -1):
        G[t] += A_bar[t + 1] * G[t + 1]
    h_prev = np.concatenate([h0[None], hs[:-1]], axis=0)
    dlog = G * h_prev * A_bar              # d/d(delta*A)
    ddelta = np.einsum("ten,en->te", dlog, A)
    dA = np.einsum("ten,te->en", dlog, delta)
    du_drive = delta * u
    dBm = np.einsum("ten,te->tn", G, du_drive)
    d_du = np.einsum("ten,tn->te", G, Bm)
    ddelta += d_du * u
    du += d_du * delta
    return du, ddelta, dA, dBm, dC, dD


def block_backward(dout, bp: BlockParams, c: dict):
    """Returns (dx, BlockParams of gradients) for one residual block."""
    E = bp.D.shape[0]
    dx = dout.copy()
    d_out_proj = c["gated"].T @ dout
    dgated = dout @ bp.out_proj.T
    dy = dgated * c["sz"]
    dz = silu_backward(dgated * c["y"], c["z"])

    du, ddelta, dA, dBm, dCm, dD = selective_scan_backward(
        dy, c["u"], c["delta"], c["A"], c["Bm"], c["Cm"], bp.D, c["hs"], c["A_bar"], c["h0"])
    dA_log = dA * c["A"]

    d_B_proj = c["u"].T @ dBm
    d_C_proj = c["u"].T @ dCm
    du += dBm @ bp.B_proj.T + dCm @ bp.C_proj.T

    ddt_raw = ddelta * sigmoid(c["dt_raw"])
    d_dt_bias = ddt_raw.sum(axis=0)
    d_dt_up = c["dt_low"].T @ ddt_raw
    ddt_low = ddt_raw @ bp.dt_up.T
    d_dt_down = c["u"].T @ ddt_low
    du += ddt_low @ bp.dt_down.T

    dc = silu_backward(du, c["c"])
    dxi, d_conv_w, d_conv_b = causal_conv_backward(dc, c["pad"], bp.conv_weight)

    dxz = np.concatenate([dxi, dz], axis=1)
    d_in_proj = c["n"].T @ dxz
    dn = dxz @ bp.in_proj.T
    dx_norm, d_norm = rmsnorm_backward(dn, c["xn"], c["r"], bp.norm)
    dx += dx_norm

    grads = BlockParams(
        norm=d_norm, in_proj=d_in_proj, conv_weight=d_conv_w, conv_bias=d_conv_b,
        dt_down=d_dt_down, dt_up=d_dt_up, dt_bias=d_dt_bias,
        B_proj=d_B_proj, C_proj=d_C_proj, A_log=dA_log, D=dD, out_proj=d_out_proj,
    )
    return dx, grads


def backward(cache: dict, dlogits, params: ModelParameters) -> ModelParameters:
    """Gradients of a scalar loss given ``dlogits = dL/dlogits`` (T, V)."""
    d_emb = dlogits.T @ cache["xf"]
    dxf = dlogits @ params.embedding
    dx, d_final = rmsnorm_backward(dxf, cache["xn"], cache["r"], params.final_norm)
    block_grads = []
    for bp, bc in zip(reversed(params.blocks), reversed(cache["blocks"])):
        dx, g = block_backward(dx, bp, bc)
        block_grads.append(g)
    block_grads.reverse()
    np.add.at(d_emb, cache["tokens"], dx)
    return ModelParameters(d_emb, block_grads, d_final)
