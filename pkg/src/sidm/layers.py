"""Forward and backward passes for the embedding -> conv -> pool -> BiGRU ->
attention -> GAP -> dropout -> dense(sigmoid) architecture.

Every backward pass is hand-derived and checked against central differences
(see gradcheck). All ops are per-example: inputs are [T] id vectors or
[T x channels] matrices with no batch axis. Parameter fan conventions for
initialization: matrices use (rows, cols); the conv kernel uses
(kernel*in_channels, kernel*filters); the attention scorer v and the output
weights map to a scalar, so their fan_out is 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .numcore import TRAIN_DTYPE, glorot_uniform, sigmoid, softmax


class ShapeError(ValueError):
    """Configuration or input violates the layer shape contract."""


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int = 10_000
    max_len: int = 100
    embedding_dim: int = 128
    conv_filters: int = 128
    kernel_size: int = 5
    pool_size: int = 2
    gru_units: int = 128
    attention_width: int = 64
    dropout: float = 0.5

    def __post_init__(self):
        for name in (
            "vocab_size",
            "max_len",
            "embedding_dim",
            "conv_filters",
            "kernel_size",
            "pool_size",
            "gru_units",
            "attention_width",
        ):
            if getattr(self, name) < 1:
                raise ShapeError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.vocab_size < 2:
            raise ShapeError("vocab_size must cover the PAD and OOV ids")
        if not 0.0 <= self.dropout < 1.0:
            raise ShapeError(f"dropout must be in [0, 1), got {self.dropout}")
        shape_chain(self)  # fails fast on an impossible pipeline


def shape_chain(cfg: ModelConfig) -> list[tuple[int, ...]]:
    """Per-layer output shapes: ids -> embedded -> conv -> pool -> BiGRU ->
    attention -> pooled vector -> scalar. Raises if any stage collapses."""
    conv_len = cfg.max_len - cfg.kernel_size + 1
    if conv_len < 1:
        raise ShapeError(
            f"sequence length {cfg.max_len} shorter than kernel {cfg.kernel_size}"
        )
    pool_len = conv_len // cfg.pool_size
    if pool_len < 1:
        raise ShapeError(f"conv output {conv_len} shorter than pool {cfg.pool_size}")
    width = 2 * cfg.gru_units
    return [
        (cfg.max_len,),
        (cfg.max_len, cfg.embedding_dim),
        (conv_len, cfg.conv_filters),
        (pool_len, cfg.conv_filters),
        (pool_len, width),
        (pool_len, width),
        (width,),
        (1,),
    ]


@dataclass
class GruParams:
    """One direction of the GRU: input, recurrent, and bias blocks per gate."""

    w_z: np.ndarray
    w_r: np.ndarray
    w_h: np.ndarray
    u_z: np.ndarray
    u_r: np.ndarray
    u_h: np.ndarray
    b_z: np.ndarray
    b_r: np.ndarray
    b_h: np.ndarray

    FIELDS = ("w_z", "w_r", "w_h", "u_z", "u_r", "u_h", "b_z", "b_r", "b_h")

    def items(self) -> Iterator[tuple[str, np.ndarray]]:
        for name in self.FIELDS:
            yield name, getattr(self, name)


@dataclass
class ModelParams:
    embedding: np.ndarray
    conv_w: np.ndarray
    conv_b: np.ndarray
    gru_fwd: GruParams
    gru_bwd: GruParams
    attn_w: np.ndarray
    attn_b: np.ndarray
    attn_v: np.ndarray
    out_w: np.ndarray
    out_b: np.ndarray

    def to_dict(self) -> dict[str, np.ndarray]:
        """Name -> array view in a fixed order (shared by Adam and the container)."""
        out = {"embedding": self.embedding, "conv_w": self.conv_w, "conv_b": self.conv_b}
        for prefix, block in (("gru_fwd", self.gru_fwd), ("gru_bwd", self.gru_bwd)):
            for name, arr in block.items():
                out[f"{prefix}.{name}"] = arr
        out.update(
            attn_w=self.attn_w,
            attn_b=self.attn_b,
            attn_v=self.attn_v,
            out_w=self.out_w,
            out_b=self.out_b,
        )
        return out

    @classmethod
    def from_dict(cls, d: dict[str, np.ndarray]) -> "ModelParams":
        def gru(prefix: str) -> GruParams:
            return GruParams(**{n: d[f"{prefix}.{n}"] for n in GruParams.FIELDS})

        return cls(
            embedding=d["embedding"],
            conv_w=d["conv_w"],
            conv_b=d["conv_b"],
            gru_fwd=gru("gru_fwd"),
            gru_bwd=gru("gru_bwd"),
            attn_w=d["attn_w"],
            attn_b=d["attn_b"],
            attn_v=d["attn_v"],
            out_w=d["out_w"],
            out_b=d["out_b"],
        )

    def copy(self) -> "ModelParams":
        return ModelParams.from_dict({k: v.copy() for k, v in self.to_dict().items()})

    def n_params(self) -> int:
        return sum(int(v.size) for v in self.to_dict().values())

    def astype(self, dtype) -> "ModelParams":
        return ModelParams.from_dict(
            {k: v.astype(dtype) for k, v in self.to_dict().items()}
        )


# ---------------------------------------------------------------------------
# embedding


def embed_fwd(ids: np.ndarray, table: np.ndarray) -> np.ndarray:
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(
            f"token id out of range [0, {table.shape[0]}): "
            f"min {ids.min()}, max {ids.max()}"
        )
    return table[ids]


def embed_bwd(ids: np.ndarray, grad_out: np.ndarray, table_shape: tuple[int, int]) -> np.ndarray:
    grad = np.zeros(table_shape, dtype=grad_out.dtype)
    np.add.at(grad, np.asarray(ids), grad_out)  # repeated ids accumulate
    return grad


# ---------------------------------------------------------------------------
# 1-D convolution (valid, no padding) + ReLU


def conv1d_fwd(
    x: np.ndarray, w: np.ndarray, b: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Valid cross-correlation over time with ReLU; returns (output, pre-activation)."""
    t_len, channels = x.shape
    kernel, in_ch, filters = w.shape
    if in_ch != channels:
        raise ShapeError(f"conv channels {in_ch} != input channels {channels}")
    if t_len < kernel:
        raise ShapeError(f"sequence length {t_len} shorter than kernel {kernel}")
    out_len = t_len - kernel + 1
    pre = np.broadcast_to(b, (out_len, filters)).astype(x.dtype).copy()
    for k in range(kernel):
        pre += x[k : k + out_len] @ w[k]
    return np.maximum(pre, 0), pre


def conv1d_bwd(
    x: np.ndarray, w: np.ndarray, pre: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    dpre = grad_out * (pre > 0).astype(grad_out.dtype)
    db = dpre.sum(axis=0)
    dw = np.zeros_like(w)
    dx = np.zeros_like(x)
    out_len = pre.shape[0]
    for k in range(w.shape[0]):
        dw[k] = x[k : k + out_len].T @ dpre
        dx[k : k + out_len] += dpre @ w[k].T
    return dx, dw, db


# ---------------------------------------------------------------------------
# non-overlapping max pooling over time


def maxpool1d_fwd(x: np.ndarray, pool: int = 2) -> tuple[np.ndarray, np.ndarray]:
    t_len, channels = x.shape
    n = t_len // pool
    if n < 1:
        raise ShapeError(f"sequence length {t_len} shorter than pool window {pool}")
    windows = x[: n * pool].reshape(n, pool, channels)
    idx = windows.argmax(axis=1)  # first index on ties
    out = np.take_along_axis(windows, idx[:, None, :], axis=1)[:, 0, :]
    return out, idx


def maxpool1d_bwd(
    x_shape: tuple[int, int], pool: int, idx: np.ndarray, grad_out: np.ndarray
) -> np.ndarray:
    n, channels = grad_out.shape
    dx = np.zeros(x_shape, dtype=grad_out.dtype)
    windows = dx[: n * pool].reshape(n, pool, channels)
    np.put_along_axis(windows, idx[:, None, :], grad_out[:, None, :], axis=1)
    return dx


# ---------------------------------------------------------------------------
# GRU, one direction at a time


@dataclass
class GruCache:
    x: np.ndarray
    z: np.ndarray
    r: np.ndarray
    hcand: np.ndarray
    h: np.ndarray


def gru_fwd(x: np.ndarray, p: GruParams) -> tuple[np.ndarray, GruCache]:
    """z_t = sig(W_z x_t + U_z h_prev + b_z); r_t likewise;
    hcand_t = tanh(W_h x_t + U_h (r_t * h_prev) + b_h);
    h_t = (1 - z_t) * h_prev + z_t * hcand_t, with h_0 = 0."""
    t_len = x.shape[0]
    units = p.b_z.shape[0]
    z = np.zeros((t_len, units), dtype=x.dtype)
    r = np.zeros_like(z)
    hcand = np.zeros_like(z)
    h = np.zeros_like(z)
    h_prev = np.zeros(units, dtype=x.dtype)
    for t in range(t_len):
        xt = x[t]
        z[t] = sigmoid(xt @ p.w_z + h_prev @ p.u_z + p.b_z)
        r[t] = sigmoid(xt @ p.w_r + h_prev @ p.u_r + p.b_r)
        hcand[t] = np.tanh(xt @ p.w_h + (r[t] * h_prev) @ p.u_h + p.b_h)
        h[t] = (1.0 - z[t]) * h_prev + z[t] * hcand[t]
        h_prev = h[t]
    return h, GruCache(x=x, z=z, r=r, hcand=hcand, h=h)


def gru_bwd(
    cache: GruCache, p: GruParams, dh_seq: np.ndarray
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Backprop through time; dh_seq[t] is the gradient arriving at h_t from
    the layers above (the recurrent contribution is accumulated internally)."""
    t_len, units = cache.h.shape
    g = {name: np.zeros_like(arr) for name, arr in p.items()}
    dx = np.zeros_like(cache.x)
    dh_next = np.zeros(units, dtype=cache.x.dtype)
    for t in reversed(range(t_len)):
        dh = dh_seq[t] + dh_next
        h_prev = cache.h[t - 1] if t > 0 else np.zeros(units, dtype=cache.x.dtype)
        z, r, hcand, xt = cache.z[t], cache.r[t], cache.hcand[t], cache.x[t]
        dz = dh * (hcand - h_prev)
        da_z = dz * z * (1.0 - z)
        da_h = dh * z * (1.0 - hcand * hcand)
        drh = da_h @ p.u_h.T  # gradient w.r.t. (r * h_prev)
        da_r = drh * h_prev * r * (1.0 - r)
        g["w_z"] += np.outer(xt, da_z)
        g["w_r"] += np.outer(xt, da_r)
        g["w_h"] += np.outer(xt, da_h)
        g["u_z"] += np.outer(h_prev, da_z)
        g["u_r"] += np.outer(h_prev, da_r)
        g["u_h"] += np.outer(r * h_prev, da_h)
        g["b_z"] += da_z
        g["b_r"] += da_r
        g["b_h"] += da_h
        dx[t] = da_z @ p.w_z.T + da_r @ p.w_r.T + da_h @ p.w_h.T
        dh_next = dh * (1.0 - z) + drh * r + da_z @ p.u_z.T + da_r @ p.u_r.T
    return dx, g


def bigru_fwd(
    x: np.ndarray, p_fwd: GruParams, p_bwd: GruParams
) -> tuple[np.ndarray, tuple[GruCache, GruCache]]:
    """Concatenate the forward pass with a time-reversed pass re-aligned to
    the original order: out_t = [h_fwd_t ; h_bwd at original position t]."""
    h_f, cache_f = gru_fwd(x, p_fwd)
    h_b, cache_b = gru_fwd(x[::-1], p_bwd)
    return np.concatenate([h_f, h_b[::-1]], axis=1), (cache_f, cache_b)


def bigru_bwd(
    caches: tuple[GruCache, GruCache],
    p_fwd: GruParams,
    p_bwd: GruParams,
    grad_out: np.ndarray,
) -> tuple[np.ndarray, dict[str, np.ndarray], dict[str, np.ndarray]]:
    units = caches[0].h.shape[1]
    dx_f, g_f = gru_bwd(caches[0], p_fwd, grad_out[:, :units])
    dx_b, g_b = gru_bwd(caches[1], p_bwd, grad_out[::-1, units:])
    return dx_f + dx_b[::-1], g_f, g_b


# ---------------------------------------------------------------------------
# additive attention producing a weighted sequence (pooling happens later)


@dataclass
class AttnCache:
    x: np.ndarray
    tau: np.ndarray
    alpha: np.ndarray


def attention_fwd(
    x: np.ndarray, w: np.ndarray, b: np.ndarray, v: np.ndarray
) -> tuple[np.ndarray, np.ndarray, AttnCache]:
    """Scores e_t = v . tanh(x_t W + b); alpha = softmax(e); out_t = alpha_t * x_t."""
    tau = np.tanh(x @ w + b)
    alpha = softmax(tau @ v)
    weighted = alpha[:, None] * x
    return weighted, alpha, AttnCache(x=x, tau=tau, alpha=alpha)


def attention_bwd(
    cache: AttnCache, w: np.ndarray, v: np.ndarray, grad_weighted: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    x, tau, alpha = cache.x, cache.tau, cache.alpha
    dalpha = (grad_weighted * x).sum(axis=1)
    dx = alpha[:, None] * grad_weighted
    dscores = alpha * (dalpha - np.dot(dalpha, alpha))  # softmax Jacobian
    dv = tau.T @ dscores
    du = np.outer(dscores, v) * (1.0 - tau * tau)
    dw = x.T @ du
    db = du.sum(axis=0)
    dx += du @ w.T
    return dx, dw, db, dv


# ---------------------------------------------------------------------------
# global average pooling / dropout / dense head


def gap_fwd(x: np.ndarray) -> np.ndarray:
    if x.shape[0] < 1:
        raise ShapeError("cannot average an empty sequence")
    return x.mean(axis=0)


def gap_bwd(t_len: int, grad_out: np.ndarray) -> np.ndarray:
    return np.tile(grad_out / t_len, (t_len, 1))


def dropout_fwd(
    x: np.ndarray, p: float, train: bool, rng: np.random.Generator | None = None
) -> tuple[np.ndarray, np.ndarray | None]:
    """Inverted dropout: survivors scaled by 1/(1-p); eval mode is identity."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return x, None
    if rng is None:
        raise ValueError("train-mode dropout needs an rng")
    mask = rng.random(x.shape) >= p
    return (x * mask / (1.0 - p)).astype(x.dtype), mask


def dropout_bwd(mask: np.ndarray | None, p: float, grad_out: np.ndarray) -> np.ndarray:
    if mask is None:
        return grad_out
    return (grad_out * mask / (1.0 - p)).astype(grad_out.dtype)


def dense_sigmoid_fwd(
    x: np.ndarray, w: np.ndarray, b: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    logit = x @ w + b
    return sigmoid(logit), logit


def dense_sigmoid_bwd(
    x: np.ndarray, w: np.ndarray, prob: np.ndarray, dprob: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    dlogit = dprob * prob * (1.0 - prob)
    return dlogit * w, dlogit * x, np.asarray(dlogit)


# ---------------------------------------------------------------------------
# the assembled model


@dataclass
class ForwardTrace:
    """Per-layer activations cached by forward; backward never recomputes."""

    ids: np.ndarray
    embedded: np.ndarray
    conv_pre: np.ndarray
    conv_out: np.ndarray
    pool_idx: np.ndarray
    pool_out: np.ndarray
    gru_caches: tuple[GruCache, GruCache]
    bigru_out: np.ndarray
    attn_cache: AttnCache
    alphas: np.ndarray
    weighted: np.ndarray
    gap_out: np.ndarray
    drop_mask: np.ndarray | None
    dropped: np.ndarray
    logit: np.ndarray
    prob: np.ndarray


class CnnBiGruAttention:
    """Stateless network: holds the configuration, operates on explicit params.

    Shapes for the default configuration:
    100 -> 100x128 -> 96x128 -> 48x128 -> 48x256 -> 48x256 -> 256 -> 1.
    """

    def __init__(self, config: ModelConfig):
        self.config = config
        self.shapes = shape_chain(config)

    def init_params(
        self, rng: np.random.Generator, dtype=TRAIN_DTYPE
    ) -> ModelParams:
        cfg = self.config
        width = 2 * cfg.gru_units

        def zeros(*shape):
            return np.zeros(shape, dtype=dtype)

        def gru_block() -> GruParams:
            kw = {}
            for name in ("w_z", "w_r", "w_h"):
                kw[name] = glorot_uniform((cfg.conv_filters, cfg.gru_units), rng, dtype=dtype)
            for name in ("u_z", "u_r", "u_h"):
                kw[name] = glorot_uniform((cfg.gru_units, cfg.gru_units), rng, dtype=dtype)
            for name in ("b_z", "b_r", "b_h"):
                kw[name] = zeros(cfg.gru_units)
            return GruParams(**kw)

        return ModelParams(
            embedding=glorot_uniform((cfg.vocab_size, cfg.embedding_dim), rng, dtype=dtype),
            conv_w=glorot_uniform(
                (cfg.kernel_size, cfg.embedding_dim, cfg.conv_filters), rng, dtype=dtype
            ),
            conv_b=zeros(cfg.conv_filters),
            gru_fwd=gru_block(),
            gru_bwd=gru_block(),
            attn_w=glorot_uniform((width, cfg.attention_width), rng, dtype=dtype),
            attn_b=zeros(cfg.attention_width),
            attn_v=glorot_uniform(
                (cfg.attention_width,), rng, fans=(cfg.attention_width, 1), dtype=dtype
            ),
            out_w=glorot_uniform((width,), rng, fans=(width, 1), dtype=dtype),
            out_b=np.zeros((), dtype=dtype),
        )

    def forward(
        self,
        ids: np.ndarray,
        params: ModelParams,
        train: bool = False,
        dropout_rng: np.random.Generator | None = None,
    ) -> tuple[float, ForwardTrace]:
        cfg = self.config
        ids = np.asarray(ids)
        embedded = embed_fwd(ids, params.embedding)
        conv_out, conv_pre = conv1d_fwd(embedded, params.conv_w, params.conv_b)
        pool_out, pool_idx = maxpool1d_fwd(conv_out, cfg.pool_size)
        bigru_out, gru_caches = bigru_fwd(pool_out, params.gru_fwd, params.gru_bwd)
        weighted, alphas, attn_cache = attention_fwd(
            bigru_out, params.attn_w, params.attn_b, params.attn_v
        )
        gap_out = gap_fwd(weighted)
        dropped, drop_mask = dropout_fwd(gap_out, cfg.dropout, train, dropout_rng)
        prob, logit = dense_sigmoid_fwd(dropped, params.out_w, params.out_b)
        trace = ForwardTrace(
            ids=ids,
            embedded=embedded,
            conv_pre=conv_pre,
            conv_out=conv_out,
            pool_idx=pool_idx,
            pool_out=pool_out,
            gru_caches=gru_caches,
            bigru_out=bigru_out,
            attn_cache=attn_cache,
            alphas=alphas,
            weighted=weighted,
            gap_out=gap_out,
            drop_mask=drop_mask,
            dropped=dropped,
            logit=logit,
            prob=prob,
        )
        return float(prob), trace

    def backward(
        self, params: ModelParams, trace: ForwardTrace, dprob: float
    ) -> dict[str, np.ndarray]:
        cfg = self.config
        d_dropped, d_out_w, d_out_b = dense_sigmoid_bwd(
            trace.dropped, params.out_w, trace.prob, np.asarray(dprob, trace.dropped.dtype)
        )
        d_gap = dropout_bwd(trace.drop_mask, cfg.dropout, d_dropped)
        d_weighted = gap_bwd(trace.weighted.shape[0], d_gap)
        d_bigru, d_attn_w, d_attn_b, d_attn_v = attention_bwd(
            trace.attn_cache, params.attn_w, params.attn_v, d_weighted
        )
        d_pool, g_fwd, g_bwd = bigru_bwd(
            trace.gru_caches, params.gru_fwd, params.gru_bwd, d_bigru
        )
        d_conv = maxpool1d_bwd(trace.conv_out.shape, cfg.pool_size, trace.pool_idx, d_pool)
        d_emb, d_conv_w, d_conv_b = conv1d_bwd(
            trace.embedded, params.conv_w, trace.conv_pre, d_conv
        )
        d_embedding = embed_bwd(trace.ids, d_emb, params.embedding.shape)
        grads = {"embedding": d_embedding, "conv_w": d_conv_w, "conv_b": d_conv_b}
        for prefix, block in (("gru_fwd", g_fwd), ("gru_bwd", g_bwd)):
            for name, arr in block.items():
                grads[f"{prefix}.{name}"] = arr
        grads.update(
            attn_w=d_attn_w,
            attn_b=d_attn_b,
            attn_v=d_attn_v,
            out_w=d_out_w,
            out_b=d_out_b,
        )
        return grads

    def predict_proba(self, ids_rows: np.ndarray, params: ModelParams) -> np.ndarray:
        """Eval-mode probabilities for a matrix of id rows."""
        ids_rows = np.atleast_2d(np.asarray(ids_rows))
        return np.array(
            [self.forward(row, params)[0] for row in ids_rows], dtype=np.float64
        )
