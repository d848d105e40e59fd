"""Finite-difference verification of every hand-derived backward pass.

Each check wraps a layer in a scalar loss L = sum(output * R) for a fixed
random projection R, computes the analytic gradient via the layer's backward,
and compares against 64-bit central differences. Draws that would sit on a
ReLU kink or a max-pool tie within the finite-difference step are rejected
and redrawn, so the comparison is always made where the loss is smooth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers
from .layers import CnnBiGruAttention, GruParams, ModelConfig
from .numcore import CHECK_DTYPE, finite_diff_grad, relative_error
from .trainer import bce_loss

DEFAULT_TOL = 1e-4
FD_STEP = 1e-5
_SMOOTH_MARGIN = 1e-3


@dataclass
class GradCheckResult:
    name: str
    max_rel_err: float

    def passed(self, tol: float = DEFAULT_TOL) -> bool:
        return self.max_rel_err <= tol


def _draw(rng: np.random.Generator, *shape: int) -> np.ndarray:
    return rng.standard_normal(shape).astype(CHECK_DTYPE)


def _check_tensor(name, f, x, analytic, results):
    fd = finite_diff_grad(f, x.astype(CHECK_DTYPE), h=FD_STEP)
    results.append(GradCheckResult(name, relative_error(analytic, fd)))


def _conv_inputs(rng, t_len, channels, filters, kernel):
    # keep every pre-activation away from the ReLU kink
    for _ in range(200):
        x = _draw(rng, t_len, channels)
        w = _draw(rng, kernel, channels, filters)
        b = _draw(rng, filters)
        _, pre = layers.conv1d_fwd(x, w, b)
        if np.min(np.abs(pre)) > _SMOOTH_MARGIN:
            return x, w, b
    raise RuntimeError("could not draw a smooth conv configuration")


def _pool_input(rng, t_len, channels, pool):
    # keep window maxima unambiguous
    for _ in range(200):
        x = _draw(rng, t_len, channels)
        n = t_len // pool
        windows = np.sort(x[: n * pool].reshape(n, pool, channels), axis=1)
        if pool == 1 or np.min(windows[:, -1, :] - windows[:, -2, :]) > _SMOOTH_MARGIN:
            return x
    raise RuntimeError("could not draw a smooth pooling input")


def check_embedding(rng: np.random.Generator) -> list[GradCheckResult]:
    vocab, dim, t_len = 7, 3, 4
    table = _draw(rng, vocab, dim)
    ids = np.array([2, 5, 2, 6])  # repeated id exercises scatter-add
    proj = _draw(rng, t_len, dim)
    analytic = layers.embed_bwd(ids, proj, table.shape)
    results: list[GradCheckResult] = []
    _check_tensor(
        "embedding/table",
        lambda t: float(np.sum(layers.embed_fwd(ids, t) * proj)),
        table,
        analytic,
        results,
    )
    return results


def check_conv(rng: np.random.Generator) -> list[GradCheckResult]:
    t_len, channels, filters, kernel = 8, 2, 3, 3
    x, w, b = _conv_inputs(rng, t_len, channels, filters, kernel)
    proj = _draw(rng, t_len - kernel + 1, filters)

    def loss(xv, wv, bv):
        out, _ = layers.conv1d_fwd(xv, wv, bv)
        return float(np.sum(out * proj))

    _, pre = layers.conv1d_fwd(x, w, b)
    dx, dw, db = layers.conv1d_bwd(x, w, pre, proj)
    results: list[GradCheckResult] = []
    _check_tensor("conv1d/x", lambda v: loss(v, w, b), x, dx, results)
    _check_tensor("conv1d/w", lambda v: loss(x, v, b), w, dw, results)
    _check_tensor("conv1d/b", lambda v: loss(x, w, v), b, db, results)
    return results


def check_maxpool(rng: np.random.Generator) -> list[GradCheckResult]:
    t_len, channels, pool = 7, 3, 2
    x = _pool_input(rng, t_len, channels, pool)
    out, idx = layers.maxpool1d_fwd(x, pool)
    proj = _draw(rng, *out.shape)
    analytic = layers.maxpool1d_bwd(x.shape, pool, idx, proj)
    results: list[GradCheckResult] = []
    _check_tensor(
        "maxpool/x",
        lambda v: float(np.sum(layers.maxpool1d_fwd(v, pool)[0] * proj)),
        x,
        analytic,
        results,
    )
    return results


def _gru_params(rng, in_dim, units) -> GruParams:
    kw = {name: _draw(rng, in_dim, units) for name in ("w_z", "w_r", "w_h")}
    kw.update({name: _draw(rng, units, units) for name in ("u_z", "u_r", "u_h")})
    kw.update({name: _draw(rng, units) for name in ("b_z", "b_r", "b_h")})
    return GruParams(**kw)


def check_gru_direction(rng: np.random.Generator, label: str) -> list[GradCheckResult]:
    t_len, in_dim, units = 5, 3, 3
    x = _draw(rng, t_len, in_dim)
    p = _gru_params(rng, in_dim, units)
    proj = _draw(rng, t_len, units)

    def loss_x(xv):
        return float(np.sum(layers.gru_fwd(xv, p)[0] * proj))

    _, cache = layers.gru_fwd(x, p)
    dx, grads = layers.gru_bwd(cache, p, proj)
    results: list[GradCheckResult] = []
    _check_tensor(f"{label}/x", loss_x, x, dx, results)
    for name, arr in p.items():
        def loss_p(v, _name=name):
            trial = GruParams(**{n: (v if n == _name else a) for n, a in p.items()})
            return float(np.sum(layers.gru_fwd(x, trial)[0] * proj))

        _check_tensor(f"{label}/{name}", loss_p, arr, grads[name], results)
    return results


def check_bigru(rng: np.random.Generator) -> list[GradCheckResult]:
    t_len, in_dim, units = 4, 2, 2
    x = _draw(rng, t_len, in_dim)
    p_fwd = _gru_params(rng, in_dim, units)
    p_bwd = _gru_params(rng, in_dim, units)
    proj = _draw(rng, t_len, 2 * units)
    out, caches = layers.bigru_fwd(x, p_fwd, p_bwd)
    dx, g_f, g_b = layers.bigru_bwd(caches, p_fwd, p_bwd, proj)
    results: list[GradCheckResult] = []
    _check_tensor(
        "bigru/x",
        lambda v: float(np.sum(layers.bigru_fwd(v, p_fwd, p_bwd)[0] * proj)),
        x,
        dx,
        results,
    )
    for direction, params, grads in (("fwd", p_fwd, g_f), ("bwd", p_bwd, g_b)):
        for name, arr in params.items():
            def loss_p(v, _name=name, _params=params, _direction=direction):
                trial = GruParams(
                    **{n: (v if n == _name else a) for n, a in _params.items()}
                )
                pf = trial if _direction == "fwd" else p_fwd
                pb = trial if _direction == "bwd" else p_bwd
                return float(np.sum(layers.bigru_fwd(x, pf, pb)[0] * proj))

            _check_tensor(f"bigru/{direction}.{name}", loss_p, arr, grads[name], results)
    return results


def check_attention(rng: np.random.Generator) -> list[GradCheckResult]:
    t_len, dim, width = 4, 3, 2
    x = _draw(rng, t_len, dim)
    w = _draw(rng, dim, width)
    b = _draw(rng, width)
    v = _draw(rng, width)
    proj = _draw(rng, t_len, dim)

    def loss(xv, wv, bv, vv):
        weighted, _, _ = layers.attention_fwd(xv, wv, bv, vv)
        return float(np.sum(weighted * proj))

    _, _, cache = layers.attention_fwd(x, w, b, v)
    dx, dw, db, dv = layers.attention_bwd(cache, w, v, proj)
    results: list[GradCheckResult] = []
    _check_tensor("attention/x", lambda t: loss(t, w, b, v), x, dx, results)
    _check_tensor("attention/w", lambda t: loss(x, t, b, v), w, dw, results)
    _check_tensor("attention/b", lambda t: loss(x, w, t, v), b, db, results)
    _check_tensor("attention/v", lambda t: loss(x, w, b, t), v, dv, results)
    return results


def check_gap(rng: np.random.Generator) -> list[GradCheckResult]:
    t_len, dim = 5, 4
    x = _draw(rng, t_len, dim)
    proj = _draw(rng, dim)
    analytic = layers.gap_bwd(t_len, proj)
    results: list[GradCheckResult] = []
    _check_tensor(
        "gap/x", lambda v: float(np.sum(layers.gap_fwd(v) * proj)), x, analytic, results
    )
    return results


def check_dense(rng: np.random.Generator) -> list[GradCheckResult]:
    dim = 4
    x = _draw(rng, dim)
    w = _draw(rng, dim)
    b = _draw(rng)

    def loss(xv, wv, bv):
        prob, _ = layers.dense_sigmoid_fwd(xv, wv, bv)
        return float(prob)

    prob, _ = layers.dense_sigmoid_fwd(x, w, b)
    dx, dw, db = layers.dense_sigmoid_bwd(x, w, prob, np.asarray(1.0, CHECK_DTYPE))
    results: list[GradCheckResult] = []
    _check_tensor("dense_sigmoid/x", lambda v: loss(v, w, b), x, dx, results)
    _check_tensor("dense_sigmoid/w", lambda v: loss(x, v, b), w, dw, results)
    _check_tensor("dense_sigmoid/b", lambda v: loss(x, w, v), b, db, results)
    return results


def check_end_to_end(rng: np.random.Generator) -> list[GradCheckResult]:
    """BCE(model(ids), y) gradient w.r.t. every parameter tensor at once."""
    config = ModelConfig(
        vocab_size=9,
        max_len=6,
        embedding_dim=3,
        conv_filters=3,
        kernel_size=3,
        pool_size=2,
        gru_units=3,
        attention_width=2,
        dropout=0.0,
    )
    model = CnnBiGruAttention(config)
    y = 1
    for _ in range(200):
        params = model.init_params(rng, dtype=CHECK_DTYPE)
        # fatten the init a little so activations are not vanishingly small
        for arr in params.to_dict().values():
            arr *= 3.0
        ids = rng.integers(0, config.vocab_size, size=config.max_len)
        _, trace = model.forward(ids, params)
        windows = np.sort(
            trace.conv_out[: (trace.conv_out.shape[0] // 2) * 2].reshape(
                -1, 2, config.conv_filters
            ),
            axis=1,
        )
        if (
            np.min(np.abs(trace.conv_pre)) > _SMOOTH_MARGIN
            and np.min(windows[:, -1, :] - windows[:, -2, :]) > _SMOOTH_MARGIN
        ):
            break
    else:
        raise RuntimeError("could not draw a smooth end-to-end configuration")

    prob, trace = model.forward(ids, params)
    _, dldp = bce_loss(prob, y)
    analytic = model.backward(params, trace, dldp)
    param_dict = params.to_dict()
    results: list[GradCheckResult] = []
    for name, arr in param_dict.items():
        def loss_p(v, _name=name):
            trial = layers.ModelParams.from_dict(
                {n: (v if n == _name else a) for n, a in param_dict.items()}
            )
            p, _ = model.forward(ids, trial)
            return bce_loss(p, y)[0]

        _check_tensor(f"end_to_end/{name}", loss_p, arr, analytic[name], results)
    return results


def check_once(seed: int) -> list[GradCheckResult]:
    """One randomized toy configuration through every layer check."""
    rng = np.random.default_rng(seed)
    results: list[GradCheckResult] = []
    results += check_embedding(rng)
    results += check_conv(rng)
    results += check_maxpool(rng)
    results += check_gru_direction(rng, "gru_forward")
    results += check_gru_direction(rng, "gru_backward")
    results += check_bigru(rng)
    results += check_attention(rng)
    results += check_gap(rng)
    results += check_dense(rng)
    results += check_end_to_end(rng)
    return results


def run_suite(
    n_configs: int = 20, seed: int = 0, tol: float = DEFAULT_TOL
) -> tuple[list[GradCheckResult], bool]:
    """n_configs randomized rounds; returns (worst result per check name, ok)."""
    worst: dict[str, GradCheckResult] = {}
    for k in range(n_configs):
        for res in check_once(seed + k):
            if res.name not in worst or res.max_rel_err > worst[res.name].max_rel_err:
                worst[res.name] = res
    results = list(worst.values())
    return results, all(r.passed(tol) for r in results)
