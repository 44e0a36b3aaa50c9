"""Region-conditioned caption transformer in plain numpy, float64.

Encoder: per-image region features, no positional encoding (region order
carries no information; the geometry gates carry the spatial structure).
Each layer is geometry-fused multi-head attention followed by a two-layer
ReLU feed-forward, both with residual adds and post-layer-norm. The gate
tensor is computed once per image from pairwise box displacements and shared
by every encoder layer.

Decoder: token embedding (scaled by sqrt(d_model)) plus sinusoidal
positions, then per layer: causally masked self-attention, cross-attention
over the encoded regions, feed-forward, each with residual + layer norm.
The output head is a bias-free projection to the token-id space, so the
only vocab-size-dependent parameters are the embedding and the head.

Every forward has a hand-written backward; gradients accumulate in a flat
name->array dict in a fixed order, so training is bitwise reproducible.
Token ids follow the vocabulary file convention: 0=<pad>, 1=<bos>, 2=<eos>,
pieces from 3.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import CheckpointError
from .geometry import (
    N_DISP_FEATURES,
    RegionSet,
    displacement_matrix,
    positional_embed,
)

PAD_ID, BOS_ID, EOS_ID = 0, 1, 2

_LN_EPS = 1e-5
_POS_BASE = 10000.0


@dataclass(frozen=True)
class ModelConfig:
    """Desk-scale defaults; vocab_size counts the full token-id space
    (the three controls included)."""

    vocab_size: int
    d_model: int = 32
    n_enc_layers: int = 2
    n_dec_layers: int = 2
    n_heads: int = 2
    d_ff: int = 64
    d_in: int = 16
    geo_embed_dim: int = 8
    max_seq_len: int = 32

    def __post_init__(self):
        if self.vocab_size < 4:
            raise ValueError("vocab_size must cover the controls plus one piece")
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if self.d_model % 2:
            raise ValueError("d_model must be even for sinusoidal positions")
        if self.geo_embed_dim < 2 or self.geo_embed_dim % 2:
            raise ValueError("geo_embed_dim must be even and >= 2")
        for field in ("d_model", "n_enc_layers", "n_dec_layers", "n_heads",
                      "d_ff", "d_in", "max_seq_len"):
            if getattr(self, field) < 1:
                raise ValueError(f"{field} must be >= 1")

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads


def paper_scale_config(vocab_size: int, max_seq_len: int = 20) -> ModelConfig:
    """The full-size configuration the desk defaults are scaled down from."""
    return ModelConfig(
        vocab_size=vocab_size,
        d_model=512,
        n_enc_layers=6,
        n_dec_layers=6,
        n_heads=8,
        d_ff=2048,
        d_in=2048,
        geo_embed_dim=64,
        max_seq_len=max_seq_len,
    )


def param_shapes(cfg: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Every tensor, in the order checkpoints store them."""
    d, ff, v = cfg.d_model, cfg.d_ff, cfg.vocab_size
    shapes: list[tuple[str, tuple[int, ...]]] = [
        ("appear.W", (cfg.d_in, d)),
        ("appear.b", (d,)),
        ("geo.W_G", (N_DISP_FEATURES * cfg.geo_embed_dim, cfg.n_heads)),
    ]

    def attn(prefix: str) -> None:
        for w in ("Wq", "Wk", "Wv", "Wo"):
            shapes.append((f"{prefix}.{w}", (d, d)))
        # no key bias: both attention normalizations are invariant to a
        # per-query constant, so its gradient is identically zero
        for b in ("bq", "bv", "bo"):
            shapes.append((f"{prefix}.{b}", (d,)))

    def ln(prefix: str) -> None:
        shapes.append((f"{prefix}.g", (d,)))
        shapes.append((f"{prefix}.b", (d,)))

    def ffn(prefix: str) -> None:
        shapes.append((f"{prefix}.W1", (d, ff)))
        shapes.append((f"{prefix}.b1", (ff,)))
        shapes.append((f"{prefix}.W2", (ff, d)))
        shapes.append((f"{prefix}.b2", (d,)))

    for i in range(cfg.n_enc_layers):
        attn(f"enc{i}.attn")
        ln(f"enc{i}.ln1")
        ffn(f"enc{i}.ffn")
        ln(f"enc{i}.ln2")
    for i in range(cfg.n_dec_layers):
        attn(f"dec{i}.self")
        ln(f"dec{i}.ln1")
        attn(f"dec{i}.cross")
        ln(f"dec{i}.ln2")
        ffn(f"dec{i}.ffn")
        ln(f"dec{i}.ln3")
    shapes.append(("embed.W", (v, d)))
    shapes.append(("out.W", (d, v)))  # bias-free on purpose: the vocab-size
    # parameter delta must be exactly 2 * dv * d_model
    return shapes


def init_params(cfg: ModelConfig, seed: int = 0) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(cfg):
        leaf = name.rsplit(".", 1)[1]
        if leaf == "g":
            params[name] = np.ones(shape)
        elif leaf.startswith("b"):
            params[name] = np.zeros(shape)
        elif name == "embed.W":
            params[name] = rng.normal(0.0, 1.0 / math.sqrt(cfg.d_model), shape)
        elif name == "out.W":
            # cool head: initial logits near zero, so the starting cross
            # entropy sits at ln(vocab_size)
            params[name] = rng.normal(0.0, 0.1 / math.sqrt(shape[0]), shape)
        else:
            params[name] = rng.normal(0.0, 1.0 / math.sqrt(shape[0]), shape)
    return params


def zero_grads(cfg: ModelConfig) -> dict[str, np.ndarray]:
    return {name: np.zeros(shape) for name, shape in param_shapes(cfg)}


def num_params(cfg: ModelConfig) -> int:
    return sum(int(np.prod(shape)) for _, shape in param_shapes(cfg))


# ---------------------------------------------------------------------------
# primitive layers; x is always (T, d)


def _ln_fwd(x, g, b):
    mu = x.mean(-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = xc * inv
    return g * xhat + b, (xhat, inv, g)


def _ln_bwd(dy, cache):
    xhat, inv, g = cache
    dg = (dy * xhat).sum(0)
    db = dy.sum(0)
    dxhat = dy * g
    m1 = dxhat.mean(-1, keepdims=True)
    m2 = (dxhat * xhat).mean(-1, keepdims=True)
    return inv * (dxhat - m1 - xhat * m2), dg, db


def _ffn_fwd(x, params, prefix):
    pre = x @ params[f"{prefix}.W1"] + params[f"{prefix}.b1"]
    h = np.maximum(pre, 0.0)
    out = h @ params[f"{prefix}.W2"] + params[f"{prefix}.b2"]
    return out, (x, pre, h)


def _ffn_bwd(dout, params, prefix, cache, grads):
    x, pre, h = cache
    grads[f"{prefix}.W2"] += h.T @ dout
    grads[f"{prefix}.b2"] += dout.sum(0)
    dh = dout @ params[f"{prefix}.W2"].T
    dpre = dh * (pre > 0.0)
    grads[f"{prefix}.W1"] += x.T @ dpre
    grads[f"{prefix}.b1"] += dpre.sum(0)
    return dpre @ params[f"{prefix}.W1"].T


def _split_heads(x, n_heads):
    t, d = x.shape
    return x.reshape(t, n_heads, d // n_heads).transpose(1, 0, 2)


def _merge_heads(x):
    h, t, dk = x.shape
    return x.transpose(1, 0, 2).reshape(t, h * dk)


def _project_qkv(xq, xkv, params, prefix, n_heads):
    q = xq @ params[f"{prefix}.Wq"] + params[f"{prefix}.bq"]
    k = xkv @ params[f"{prefix}.Wk"]
    v = xkv @ params[f"{prefix}.Wv"] + params[f"{prefix}.bv"]
    return _split_heads(q, n_heads), _split_heads(k, n_heads), _split_heads(v, n_heads)


def _mha_fwd(xq, xkv, params, prefix, n_heads, mask=None):
    """Standard scaled-dot attention; mask is (Tq, Tk) bool, True = attend."""
    qh, kh, vh = _project_qkv(xq, xkv, params, prefix, n_heads)
    scale = 1.0 / math.sqrt(qh.shape[-1])
    scores = qh @ kh.transpose(0, 2, 1) * scale
    if mask is not None:
        scores = np.where(mask, scores, -np.inf)
    p = np.exp(scores - scores.max(-1, keepdims=True))
    p /= p.sum(-1, keepdims=True)
    ctx = _merge_heads(p @ vh)
    out = ctx @ params[f"{prefix}.Wo"] + params[f"{prefix}.bo"]
    return out, (xq, xkv, qh, kh, vh, p, ctx, scale)


def _mha_bwd(dout, params, prefix, cache, grads):
    xq, xkv, qh, kh, vh, p, ctx, scale = cache
    grads[f"{prefix}.Wo"] += ctx.T @ dout
    grads[f"{prefix}.bo"] += dout.sum(0)
    dctx = _split_heads(dout @ params[f"{prefix}.Wo"].T, p.shape[0])
    dp = dctx @ vh.transpose(0, 2, 1)
    dvh = p.transpose(0, 2, 1) @ dctx
    # softmax backward; masked cells have p == 0 so no gradient leaks past
    # the mask
    ds = p * (dp - (dp * p).sum(-1, keepdims=True))
    dqh = ds @ kh * scale
    dkh = ds.transpose(0, 2, 1) @ qh * scale
    dq, dk, dv = _merge_heads(dqh), _merge_heads(dkh), _merge_heads(dvh)
    grads[f"{prefix}.Wq"] += xq.T @ dq
    grads[f"{prefix}.bq"] += dq.sum(0)
    grads[f"{prefix}.Wk"] += xkv.T @ dk
    grads[f"{prefix}.Wv"] += xkv.T @ dv
    grads[f"{prefix}.bv"] += dv.sum(0)
    dxq = dq @ params[f"{prefix}.Wq"].T
    dxkv = dk @ params[f"{prefix}.Wk"].T + dv @ params[f"{prefix}.Wv"].T
    return dxq, dxkv


def _fused_mha_fwd(x, params, prefix, n_heads, gates):
    """Encoder attention with geometric gates (H, N, N)."""
    qh, kh, vh = _project_qkv(x, x, params, prefix, n_heads)
    scale = 1.0 / math.sqrt(qh.shape[-1])
    scores = qh @ kh.transpose(0, 2, 1) * scale
    e = np.exp(scores - scores.max(-1, keepdims=True))
    gated = gates * e
    denom = gated.sum(-1, keepdims=True)
    fallback = denom == 0.0
    safe = np.where(fallback, 1.0, denom)
    p = np.where(fallback, e / e.sum(-1, keepdims=True), gated / safe)
    ctx = _merge_heads(p @ vh)
    out = ctx @ params[f"{prefix}.Wo"] + params[f"{prefix}.bo"]
    return out, (x, qh, kh, vh, e, safe, fallback, p, ctx, scale)


def _fused_mha_bwd(dout, params, prefix, cache, grads):
    x, qh, kh, vh, e, safe, fallback, p, ctx, scale = cache
    grads[f"{prefix}.Wo"] += ctx.T @ dout
    grads[f"{prefix}.bo"] += dout.sum(0)
    dctx = _split_heads(dout @ params[f"{prefix}.Wo"].T, p.shape[0])
    dp = dctx @ vh.transpose(0, 2, 1)
    dvh = p.transpose(0, 2, 1) @ dctx
    common = dp - (dp * p).sum(-1, keepdims=True)
    # w.r.t. scores the fused and fallback branches share one formula;
    # gates get gradient only where they actually acted
    ds = p * common
    dgates = np.where(fallback, 0.0, common * e / safe)
    dqh = ds @ kh * scale
    dkh = ds.transpose(0, 2, 1) @ qh * scale
    dq, dk, dv = _merge_heads(dqh), _merge_heads(dkh), _merge_heads(dvh)
    grads[f"{prefix}.Wq"] += x.T @ dq
    grads[f"{prefix}.bq"] += dq.sum(0)
    grads[f"{prefix}.Wk"] += x.T @ dk
    grads[f"{prefix}.Wv"] += x.T @ dv
    grads[f"{prefix}.bv"] += dv.sum(0)
    dx = dq @ params[f"{prefix}.Wq"].T
    dx += dk @ params[f"{prefix}.Wk"].T
    dx += dv @ params[f"{prefix}.Wv"].T
    return dx, dgates


# ---------------------------------------------------------------------------
# encoder


def _encoder_fwd(regions: RegionSet, params, cfg: ModelConfig):
    if regions.appearance.shape[1] != cfg.d_in:
        raise ValueError(
            f"appearance width {regions.appearance.shape[1]} != d_in {cfg.d_in}"
        )
    x = regions.appearance @ params["appear.W"] + params["appear.b"]
    emb = positional_embed(displacement_matrix(regions), cfg.geo_embed_dim)
    pre = emb @ params["geo.W_G"]  # (N, N, H)
    gates = np.maximum(pre, 0.0).transpose(2, 0, 1)
    layers = []
    for i in range(cfg.n_enc_layers):
        att, c_att = _fused_mha_fwd(x, params, f"enc{i}.attn", cfg.n_heads, gates)
        h1, c_ln1 = _ln_fwd(x + att, params[f"enc{i}.ln1.g"], params[f"enc{i}.ln1.b"])
        ff, c_ffn = _ffn_fwd(h1, params, f"enc{i}.ffn")
        x, c_ln2 = _ln_fwd(h1 + ff, params[f"enc{i}.ln2.g"], params[f"enc{i}.ln2.b"])
        layers.append((c_att, c_ln1, c_ffn, c_ln2))
    return x, (regions, emb, pre, layers)


def _encoder_bwd(dq, cache, params, cfg: ModelConfig, grads):
    regions, emb, pre, layers = cache
    dgates_total = None
    dx = dq
    for i in range(cfg.n_enc_layers - 1, -1, -1):
        c_att, c_ln1, c_ffn, c_ln2 = layers[i]
        dsum2, dg2, db2 = _ln_bwd(dx, c_ln2)
        grads[f"enc{i}.ln2.g"] += dg2
        grads[f"enc{i}.ln2.b"] += db2
        dh1 = dsum2 + _ffn_bwd(dsum2, params, f"enc{i}.ffn", c_ffn, grads)
        dsum1, dg1, db1 = _ln_bwd(dh1, c_ln1)
        grads[f"enc{i}.ln1.g"] += dg1
        grads[f"enc{i}.ln1.b"] += db1
        datt, dgates = _fused_mha_bwd(dsum1, params, f"enc{i}.attn", c_att, grads)
        dx = dsum1 + datt
        dgates_total = dgates if dgates_total is None else dgates_total + dgates
    dpre = dgates_total.transpose(1, 2, 0) * (pre > 0.0)
    flat = emb.reshape(-1, emb.shape[-1])
    grads["geo.W_G"] += flat.T @ dpre.reshape(-1, dpre.shape[-1])
    grads["appear.W"] += regions.appearance.T @ dx
    grads["appear.b"] += dx.sum(0)


def encoder_forward(regions: RegionSet, params, cfg: ModelConfig) -> np.ndarray:
    """Encoded region memory q, shape (N, d_model)."""
    q, _ = _encoder_fwd(regions, params, cfg)
    return q


# ---------------------------------------------------------------------------
# decoder


def sinusoid_positions(n: int, d: int) -> np.ndarray:
    pos = np.arange(n)[:, None]
    freqs = _POS_BASE ** (-2.0 * np.arange(d // 2) / d)
    phase = pos * freqs
    out = np.empty((n, d))
    out[:, 0::2] = np.sin(phase)
    out[:, 1::2] = np.cos(phase)
    return out


def _decoder_fwd(q, ids, params, cfg: ModelConfig):
    ids = np.asarray(ids, dtype=np.int64)
    t = ids.shape[0]
    if t == 0:
        raise ValueError("decoder needs at least one input token")
    if t > cfg.max_seq_len:
        raise ValueError(f"sequence length {t} exceeds max_seq_len {cfg.max_seq_len}")
    scale = math.sqrt(cfg.d_model)
    x = params["embed.W"][ids] * scale + sinusoid_positions(t, cfg.d_model)
    mask = np.tril(np.ones((t, t), dtype=bool))
    layers = []
    for i in range(cfg.n_dec_layers):
        s, c_s = _mha_fwd(x, x, params, f"dec{i}.self", cfg.n_heads, mask)
        h1, c1 = _ln_fwd(x + s, params[f"dec{i}.ln1.g"], params[f"dec{i}.ln1.b"])
        cr, c_c = _mha_fwd(h1, q, params, f"dec{i}.cross", cfg.n_heads)
        h2, c2 = _ln_fwd(h1 + cr, params[f"dec{i}.ln2.g"], params[f"dec{i}.ln2.b"])
        ff, c_f = _ffn_fwd(h2, params, f"dec{i}.ffn")
        x, c3 = _ln_fwd(h2 + ff, params[f"dec{i}.ln3.g"], params[f"dec{i}.ln3.b"])
        layers.append((c_s, c1, c_c, c2, c_f, c3))
    logits = x @ params["out.W"]
    return logits, (ids, scale, x, layers)


def _decoder_bwd(dlogits, cache, params, cfg: ModelConfig, grads):
    """Returns dq accumulated over the cross-attention of every layer."""
    ids, scale, x_final, layers = cache
    grads["out.W"] += x_final.T @ dlogits
    dx = dlogits @ params["out.W"].T
    dq = None
    for i in range(cfg.n_dec_layers - 1, -1, -1):
        c_s, c1, c_c, c2, c_f, c3 = layers[i]
        dsum3, dg3, db3 = _ln_bwd(dx, c3)
        grads[f"dec{i}.ln3.g"] += dg3
        grads[f"dec{i}.ln3.b"] += db3
        dh2 = dsum3 + _ffn_bwd(dsum3, params, f"dec{i}.ffn", c_f, grads)
        dsum2, dg2, db2 = _ln_bwd(dh2, c2)
        grads[f"dec{i}.ln2.g"] += dg2
        grads[f"dec{i}.ln2.b"] += db2
        dh1_c, dq_i = _mha_bwd(dsum2, params, f"dec{i}.cross", c_c, grads)
        dh1 = dsum2 + dh1_c
        dq = dq_i if dq is None else dq + dq_i
        dsum1, dg1, db1 = _ln_bwd(dh1, c1)
        grads[f"dec{i}.ln1.g"] += dg1
        grads[f"dec{i}.ln1.b"] += db1
        dxq, dxkv = _mha_bwd(dsum1, params, f"dec{i}.self", c_s, grads)
        dx = dsum1 + dxq + dxkv
    np.add.at(grads["embed.W"], ids, dx * scale)
    return dq


def decoder_forward(q, prefix_ids, params, cfg: ModelConfig) -> np.ndarray:
    """Next-token logits for every prefix position, shape (T, vocab_size)."""
    logits, _ = _decoder_fwd(q, prefix_ids, params, cfg)
    return logits


# ---------------------------------------------------------------------------
# loss


def frame_sequence(content_ids: Sequence[int]) -> tuple[list[int], list[int]]:
    """(decoder inputs, shifted targets) for one caption's piece ids."""
    full = [BOS_ID] + list(content_ids) + [EOS_ID]
    return full[:-1], full[1:]


Batch = Sequence[tuple[RegionSet, Sequence[int]]]


def _check_batch(batch: Batch) -> None:
    if not batch:
        raise ValueError("empty batch")
    for k, (_, ids) in enumerate(batch):
        if len(ids) == 0:
            raise ValueError(f"batch item {k} has an empty token sequence; "
                             "nothing to predict")


def loss_and_grads(batch: Batch, params, cfg: ModelConfig):
    """Mean next-token cross entropy over the batch, with gradients.

    Samples are processed in batch order and gradients summed in that fixed
    order, so results are bitwise reproducible.
    """
    _check_batch(batch)
    total_targets = sum(len(ids) + 1 for _, ids in batch)  # +1 for <eos>
    grads = zero_grads(cfg)
    loss = 0.0
    for regions, ids in batch:
        inputs, targets = frame_sequence(ids)
        q, enc_cache = _encoder_fwd(regions, params, cfg)
        logits, dec_cache = _decoder_fwd(q, inputs, params, cfg)
        shifted = logits - logits.max(-1, keepdims=True)
        log_z = np.log(np.exp(shifted).sum(-1, keepdims=True))
        logp = shifted - log_z
        rows = np.arange(len(targets))
        tgt = np.asarray(targets)
        loss += -logp[rows, tgt].sum()
        dlogits = np.exp(logp)
        dlogits[rows, tgt] -= 1.0
        dlogits /= total_targets
        dq = _decoder_bwd(dlogits, dec_cache, params, cfg, grads)
        _encoder_bwd(dq, enc_cache, params, cfg, grads)
    return loss / total_targets, grads


def loss_only(batch: Batch, params, cfg: ModelConfig) -> float:
    _check_batch(batch)
    total_targets = sum(len(ids) + 1 for _, ids in batch)
    loss = 0.0
    for regions, ids in batch:
        inputs, targets = frame_sequence(ids)
        q, _ = _encoder_fwd(regions, params, cfg)
        logits, _ = _decoder_fwd(q, inputs, params, cfg)
        shifted = logits - logits.max(-1, keepdims=True)
        logp = shifted - np.log(np.exp(shifted).sum(-1, keepdims=True))
        loss += -logp[np.arange(len(targets)), np.asarray(targets)].sum()
    return loss / total_targets


# ---------------------------------------------------------------------------
# checkpoints: 4-byte header length, JSON header, raw little-endian float64


_CKPT_FORMAT = "subicap-checkpoint"
_CKPT_VERSION = 1


def save_checkpoint(path: str | Path, params, cfg: ModelConfig) -> None:
    shapes = param_shapes(cfg)
    header = {
        "format": _CKPT_FORMAT,
        "version": _CKPT_VERSION,
        "config": asdict(cfg),
        "tensors": [
            {"name": name, "shape": list(shape), "dtype": "<f8"}
            for name, shape in shapes
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for name, shape in shapes:
            arr = params[name]
            if arr.shape != shape:
                raise CheckpointError(f"tensor {name} has shape {arr.shape}, "
                                      f"expected {shape}")
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], ModelConfig]:
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise CheckpointError(f"{path}: truncated header")
    (hlen,) = struct.unpack("<I", raw[:4])
    if len(raw) < 4 + hlen:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[4 : 4 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise CheckpointError(f"{path}: bad header: {err}") from None
    if header.get("format") != _CKPT_FORMAT:
        raise CheckpointError(f"{path}: not a checkpoint file")
    cfg = ModelConfig(**header["config"])
    expected = param_shapes(cfg)
    stored = [(t["name"], tuple(t["shape"])) for t in header["tensors"]]
    if stored != expected:
        raise CheckpointError(f"{path}: tensor table does not match its config")
    params: dict[str, np.ndarray] = {}
    offset = 4 + hlen
    for name, shape in expected:
        n = int(np.prod(shape)) * 8
        if offset + n > len(raw):
            raise CheckpointError(f"{path}: truncated payload at {name}")
        params[name] = np.frombuffer(
            raw, dtype="<f8", count=int(np.prod(shape)), offset=offset
        ).reshape(shape).copy()
        offset += n
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes")
    return params, cfg
