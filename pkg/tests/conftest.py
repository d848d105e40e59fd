import numpy as np
import pytest

from sidm.layers import CnnBiGruAttention, ModelConfig
from sidm.numcore import RngState
from sidm.trainer import TrainConfig, train

TOY_CONFIG = ModelConfig(
    vocab_size=12,
    max_len=10,
    embedding_dim=8,
    conv_filters=8,
    kernel_size=3,
    pool_size=2,
    gru_units=6,
    attention_width=4,
    dropout=0.0,
)


def make_separable(n_per_class: int = 32, seed: int = 0):
    """Linearly separable toy corpus: positives draw tokens from ids 2..6,
    negatives from ids 7..11, post-padded to length 10."""
    rng = np.random.default_rng(seed)

    def rows(lo, hi):
        out = np.zeros((n_per_class, TOY_CONFIG.max_len), dtype=np.int32)
        for i in range(n_per_class):
            out[i, :6] = rng.integers(lo, hi, size=6)
        return out

    x = np.concatenate([rows(2, 7), rows(7, 12)])
    y = np.concatenate(
        [np.ones(n_per_class, dtype=np.int8), np.zeros(n_per_class, dtype=np.int8)]
    )
    return x, y


@pytest.fixture(scope="session")
def separable_data():
    return make_separable()


@pytest.fixture(scope="session")
def toy_model():
    return CnnBiGruAttention(TOY_CONFIG)


@pytest.fixture(scope="session")
def trained_toy(toy_model, separable_data):
    """A quickly overfit toy model, shared by explain/metrics/cli tests."""
    x, y = separable_data
    params = toy_model.init_params(RngState(1).substream("init"))
    config = TrainConfig(epochs=40, batch_size=8, patience=39, learning_rate=0.001, seed=1)
    best, history = train(toy_model, params, (x, y), (x, y), config)
    return best, history


def write_toy_csv(path, rows=None, repeat=1):
    """A small well-formed dataset in the declared CSV dialect."""
    import csv

    if rows is None:
        rows = [
            ("I want to end my life, nothing matters anymore", "suicide"),
            ("had a great day hiking with friends", "non-suicide"),
            ("I cannot go on, everything feels hopeless and dark", "suicide"),
            ("looking forward to the weekend game night", "non-suicide"),
            ("no reason to keep living another day", "suicide"),
            ("my dog learned a new trick today", "non-suicide"),
            ("thinking about hurting myself again tonight", "suicide"),
            ("baked fresh bread and it smells amazing", "non-suicide"),
            ("everyone would be better off without me", "suicide"),
            ("started a new book and love it so far", "non-suicide"),
        ]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["text", "class"])
        writer.writerows(rows * repeat)
    return path
