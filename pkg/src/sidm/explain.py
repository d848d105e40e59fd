"""Shapley-value token attributions and attention-weight export.

A coalition is a subset of the non-PAD token positions; absent positions are
replaced by the PAD id, the model's native no-signal input. Exact mode
enumerates all 2^n coalitions (n capped at 12); sampled mode averages
marginal contributions over random permutations and reports a standard error
per position. Positive values push the prediction toward the positive
(suicidal) class.
"""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .textprep import PAD_ID

EXACT_MODE_CAP = 12

PredictFn = Callable[[np.ndarray], float]


class TooManyPositions(ValueError):
    """Exact enumeration refused; the caller should switch to sampled mode."""


@dataclass
class CoalitionSpec:
    """Which positions may be masked, and what replaces a masked token."""

    positions: list[int]
    baseline_id: int = PAD_ID

    @classmethod
    def for_ids(cls, ids: np.ndarray, baseline_id: int = PAD_ID) -> "CoalitionSpec":
        positions = [int(i) for i in np.flatnonzero(np.asarray(ids) != baseline_id)]
        return cls(positions=positions, baseline_id=baseline_id)


@dataclass
class Attribution:
    positions: list[int]
    shap_values: np.ndarray
    base_value: float
    prediction: float
    tokens: list[str] | None = None
    std_errors: np.ndarray | None = None

    def efficiency_gap(self) -> float:
        return abs(float(np.sum(self.shap_values)) - (self.prediction - self.base_value))


def _masked_ids(ids: np.ndarray, spec: CoalitionSpec, keep: set[int]) -> np.ndarray:
    out = np.asarray(ids).copy()
    for pos in spec.positions:
        if pos not in keep:
            out[pos] = spec.baseline_id
    return out


def exact_shapley(
    predict_fn: PredictFn,
    ids: np.ndarray,
    spec: CoalitionSpec,
    tokens: list[str] | None = None,
) -> Attribution:
    """Full enumeration: phi_i = sum over S not containing i of
    |S|!(n-|S|-1)!/n! * (f(S + i) - f(S))."""
    n = len(spec.positions)
    if n > EXACT_MODE_CAP:
        raise TooManyPositions(
            f"{n} maskable positions exceeds the exact-mode cap of "
            f"{EXACT_MODE_CAP}; use sampled_shapley"
        )
    values = np.empty(2**n, dtype=np.float64)
    for mask in range(2**n):
        keep = {spec.positions[i] for i in range(n) if mask >> i & 1}
        values[mask] = predict_fn(_masked_ids(ids, spec, keep))
    weights = [
        math.factorial(s) * math.factorial(n - s - 1) / math.factorial(n)
        for s in range(n)
    ]
    phi = np.zeros(n, dtype=np.float64)
    for mask in range(2**n):
        size = bin(mask).count("1")
        for i in range(n):
            if not mask >> i & 1:
                phi[i] += weights[size] * (values[mask | (1 << i)] - values[mask])
    return Attribution(
        positions=list(spec.positions),
        shap_values=phi,
        base_value=float(values[0]),
        prediction=float(values[-1]) if n else float(values[0]),
        tokens=tokens,
    )


def sampled_shapley(
    predict_fn: PredictFn,
    ids: np.ndarray,
    spec: CoalitionSpec,
    samples: int,
    rng: np.random.Generator,
    tokens: list[str] | None = None,
) -> Attribution:
    """Permutation-sampling estimator: each permutation contributes one
    marginal f(prefix + i) - f(prefix) per position."""
    if samples < 100:
        raise ValueError(f"need at least 100 samples, got {samples}")
    n = len(spec.positions)
    base_value = float(predict_fn(_masked_ids(ids, spec, set())))
    prediction = float(predict_fn(np.asarray(ids)))
    if n == 0:
        return Attribution([], np.zeros(0), base_value, prediction, tokens, np.zeros(0))
    contrib = np.zeros((samples, n), dtype=np.float64)
    for s in range(samples):
        perm = rng.permutation(n)
        keep: set[int] = set()
        prev = base_value
        for i in perm:
            keep.add(spec.positions[i])
            value = float(predict_fn(_masked_ids(ids, spec, keep)))
            contrib[s, i] = value - prev
            prev = value
    phi = contrib.mean(axis=0)
    stderr = contrib.std(axis=0, ddof=1) / math.sqrt(samples)
    return Attribution(
        positions=list(spec.positions),
        shap_values=phi,
        base_value=base_value,
        prediction=prediction,
        tokens=tokens,
        std_errors=stderr,
    )


def attention_export(model, params, ids: np.ndarray) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Eval-mode attention weights over the pooled time axis, with the span of
    input-token positions each pooled step covers (conv+pool receptive field)."""
    _, trace = model.forward(np.asarray(ids), params)
    cfg = model.config
    spans = []
    for j in range(len(trace.alphas)):
        start = j * cfg.pool_size
        end = start + cfg.pool_size - 1 + cfg.kernel_size - 1
        spans.append((start, end))
    return trace.alphas.astype(np.float64), spans


def _sign_class(value: float) -> str:
    return "supports" if value > 0 else "opposes"


def explanation_report(
    attributions: list[Attribution], out_dir: str | Path
) -> list[Path]:
    """Write per-example records and the corpus-level mean-|phi| ranking."""
    if not attributions:
        raise ValueError("no attributions to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    records = []
    for attr in attributions:
        tokens = attr.tokens or ["" for _ in attr.positions]
        entry = {
            "base_value": attr.base_value,
            "prediction": attr.prediction,
            "efficiency_gap": attr.efficiency_gap(),
            "tokens": [
                {
                    "token": tok,
                    "position": pos,
                    "shap_value": float(phi),
                    "sign": _sign_class(float(phi)),
                }
                for tok, pos, phi in zip(tokens, attr.positions, attr.shap_values)
            ],
        }
        if attr.std_errors is not None:
            for item, se in zip(entry["tokens"], attr.std_errors):
                item["std_error"] = float(se)
        records.append(entry)
    records_path = out_dir / "explanations.json"
    records_path.write_text(json.dumps(records, indent=2) + "\n")

    by_token: dict[str, list[float]] = defaultdict(list)
    for attr in attributions:
        tokens = attr.tokens or ["" for _ in attr.positions]
        for tok, phi in zip(tokens, attr.shap_values):
            by_token[tok].append(abs(float(phi)))
    ranking = sorted(
        ((sum(vals) / len(vals), tok, len(vals)) for tok, vals in by_token.items()),
        key=lambda row: (-row[0], row[1]),
    )
    summary_path = out_dir / "summary.csv"
    with summary_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["token", "mean_abs_shap", "count"])
        for mean_abs, tok, count in ranking:
            writer.writerow([tok, repr(mean_abs), count])
    return [records_path, summary_path]


def parse_explanations(path: str | Path) -> list[dict]:
    return json.loads(Path(path).read_text())
