"""BCE loss, Adam, the mini-batch training loop with early stopping, and the
grid search over GRU width and dropout rate.

Training is single-threaded and fully deterministic: the shuffle and dropout
streams are derived from the run seed, batches keep the final partial chunk,
and gradients are accumulated in example order.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np

from .layers import CnnBiGruAttention, ModelConfig, ModelParams
from .numcore import RngState

logger = logging.getLogger(__name__)

LOSS_CLAMP = 1e-7


class TrainingDiverged(RuntimeError):
    """Loss became NaN/Inf; carries the epoch and batch where it happened."""


@dataclass
class TrainConfig:
    epochs: int = 40
    batch_size: int = 512
    patience: int = 4
    learning_rate: float = 0.001
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 42
    grad_clip_norm: float | None = None

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ValueError("epochs, batch_size and patience must be positive")
        # single-epoch smoke runs are allowed: early stopping is vacuous there
        if self.epochs > 1 and self.patience >= self.epochs:
            raise ValueError(
                f"patience {self.patience} must be smaller than epochs {self.epochs}"
            )
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    best_epoch: int = 0  # 1-based
    stop_reason: str = ""

    def to_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "val_accuracy": self.val_accuracy,
            "best_epoch": self.best_epoch,
            "stop_reason": self.stop_reason,
        }


def bce_loss(p: float, y: int) -> tuple[float, float]:
    """Binary cross-entropy on a clamped probability; returns (loss, dL/dp)."""
    pc = min(max(float(p), LOSS_CLAMP), 1.0 - LOSS_CLAMP)
    loss = -(y * np.log(pc) + (1 - y) * np.log1p(-pc))
    grad = (pc - y) / (pc * (1.0 - pc))
    return float(loss), float(grad)


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray], lr: float = 0.001) -> "AdamState":
        return cls(
            lr=lr,
            m={k: np.zeros_like(a) for k, a in params.items()},
            v={k: np.zeros_like(a) for k, a in params.items()},
        )


def adam_step(
    params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState
) -> None:
    """One bias-corrected Adam update, in place."""
    if set(params) != set(grads):
        raise ValueError("parameter and gradient names disagree")
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for name, theta in params.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != {theta.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / bc1
        v_hat = v / bc2
        theta -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def clip_grads(grads: dict[str, np.ndarray], max_norm: float) -> None:
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale


class EarlyStopping:
    """Stop after `patience` consecutive epochs without a new best loss."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_loss = np.inf
        self.best_epoch = 0
        self.epochs_since_best = 0

    def update(self, epoch: int, loss: float) -> bool:
        """Record one epoch's validation loss; True means stop now."""
        if loss < self.best_loss:
            self.best_loss = loss
            self.best_epoch = epoch
            self.epochs_since_best = 0
        else:
            self.epochs_since_best += 1
        return self.epochs_since_best >= self.patience


def evaluate(
    model: CnnBiGruAttention,
    params: ModelParams,
    ids_rows: np.ndarray,
    labels: np.ndarray,
) -> tuple[float, float]:
    """Eval-mode (mean loss, accuracy) over a dataset."""
    if len(ids_rows) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    total = 0.0
    correct = 0
    for row, y in zip(ids_rows, labels):
        prob, _ = model.forward(row, params)
        loss, _ = bce_loss(prob, int(y))
        total += loss
        correct += int((prob >= 0.5) == bool(y))
    return total / len(ids_rows), correct / len(ids_rows)


def train(
    model: CnnBiGruAttention,
    params: ModelParams,
    train_data: tuple[np.ndarray, np.ndarray],
    val_data: tuple[np.ndarray, np.ndarray],
    config: TrainConfig,
    progress: bool = False,
) -> tuple[ModelParams, TrainHistory]:
    """Optimize `params` in place; returns (best-epoch copy, history).

    Each epoch: seeded shuffle, batches of `batch_size` (final partial batch
    kept), per-batch mean-reduced BCE, one Adam step per batch; then the
    validation loss drives early stopping with best-weight restore.
    """
    x_train, y_train = train_data
    x_val, y_val = val_data
    if len(x_train) == 0 or len(x_val) == 0:
        raise ValueError("training and validation sets must be non-empty")

    rng = RngState(config.seed)
    shuffle_rng = rng.substream("shuffle")
    dropout_rng = rng.substream("dropout")

    param_dict = params.to_dict()
    state = AdamState.for_params(param_dict, lr=config.learning_rate)
    stopper = EarlyStopping(config.patience)
    history = TrainHistory()
    best_params = params.copy()

    n = len(x_train)
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        for batch_no, start in enumerate(range(0, n, config.batch_size)):
            batch = order[start : start + config.batch_size]
            bsize = len(batch)
            grad_sum: dict[str, np.ndarray] | None = None
            batch_loss = 0.0
            for i in batch:
                prob, trace = model.forward(
                    x_train[i], params, train=True, dropout_rng=dropout_rng
                )
                loss, dldp = bce_loss(prob, int(y_train[i]))
                batch_loss += loss
                grads = model.backward(params, trace, dldp / bsize)
                if grad_sum is None:
                    grad_sum = grads
                else:
                    for name, g in grads.items():
                        grad_sum[name] += g
            if not np.isfinite(batch_loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {batch_no}"
                )
            if config.grad_clip_norm is not None:
                clip_grads(grad_sum, config.grad_clip_norm)
            adam_step(param_dict, grad_sum, state)
            epoch_loss += batch_loss

        train_loss = epoch_loss / n
        val_loss, val_acc = evaluate(model, params, x_val, y_val)
        if not np.isfinite(val_loss):
            raise TrainingDiverged(f"non-finite validation loss at epoch {epoch}")
        history.train_loss.append(train_loss)
        history.val_loss.append(val_loss)
        history.val_accuracy.append(val_acc)

        improved = val_loss < stopper.best_loss
        should_stop = stopper.update(epoch, val_loss)
        if improved:
            best_params = params.copy()
        elapsed = time.perf_counter() - t0
        line = (
            f"epoch {epoch}/{config.epochs} train_loss={train_loss:.6f} "
            f"val_loss={val_loss:.6f} val_acc={val_acc:.4f} ({elapsed:.1f}s)"
        )
        if progress:
            print(line, flush=True)
        else:
            logger.info(line)
        if should_stop:
            history.stop_reason = (
                f"early stop: no improvement for {config.patience} epochs"
            )
            break
    else:
        history.stop_reason = "epoch budget exhausted"

    history.best_epoch = stopper.best_epoch
    return best_params, history


@dataclass
class HyperTrial:
    gru_units: int
    dropout: float
    val_loss: float
    n_params: int


@dataclass
class HyperSearchResult:
    best: HyperTrial
    trials: list[HyperTrial]


def hyper_search(
    base_model_config: ModelConfig,
    train_data: tuple[np.ndarray, np.ndarray],
    val_data: tuple[np.ndarray, np.ndarray],
    config: TrainConfig,
    gru_units_grid: tuple[int, ...] = (64, 128, 256),
    dropout_grid: tuple[float, ...] = (0.3, 0.5),
    budget_epochs: int = 10,
) -> HyperSearchResult:
    """Train every grid point with a shortened epoch budget; the winner is the
    lowest final validation loss, ties broken by fewer parameters."""
    if not gru_units_grid or not dropout_grid:
        raise ValueError("grid must be non-empty")
    budget = TrainConfig(
        epochs=budget_epochs,
        batch_size=config.batch_size,
        patience=min(config.patience, max(1, budget_epochs - 1)),
        learning_rate=config.learning_rate,
        ratios=config.ratios,
        seed=config.seed,
        grad_clip_norm=config.grad_clip_norm,
    )
    trials: list[HyperTrial] = []
    for units, drop in product(gru_units_grid, dropout_grid):
        model = CnnBiGruAttention(
            replace(base_model_config, gru_units=units, dropout=drop)
        )
        params = model.init_params(RngState(config.seed).substream("init"))
        best_params, history = train(model, params, train_data, val_data, budget)
        trials.append(
            HyperTrial(
                gru_units=units,
                dropout=drop,
                val_loss=min(history.val_loss),
                n_params=best_params.n_params(),
            )
        )
        logger.info(
            "hyper-search trial gru_units=%d dropout=%.2f val_loss=%.6f",
            units,
            drop,
            trials[-1].val_loss,
        )
    best = min(trials, key=lambda t: (t.val_loss, t.n_params))
    return HyperSearchResult(best=best, trials=trials)
