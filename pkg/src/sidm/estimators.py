"""Scikit-learn style facade over the hand-rolled pipeline.

`PaddedSequenceVectorizer` turns raw strings into fixed-length token-id rows;
`CnnBiGruAttentionClassifier` fits the network with Adam, early stopping and
best-weight restore. Both follow the fit/transform/predict and
get_params/set_params conventions, so they compose with Pipeline,
cross-validation and friends.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import textprep
from .layers import CnnBiGruAttention, ModelConfig
from .numcore import RngState
from .trainer import TrainConfig, train


def _as_text_list(X) -> list[str]:
    if isinstance(X, str):
        raise TypeError("X must be an iterable of documents, not a single string")
    docs = list(X)
    if not all(isinstance(d, str) for d in docs):
        raise TypeError("every document must be a string")
    return docs


def _as_id_matrix(X, vocab_size: int | None = None) -> np.ndarray:
    X = np.asarray(X)
    if X.ndim != 2:
        raise ValueError(f"X must be 2-D (n_examples, sequence_length), got {X.shape}")
    if not np.issubdtype(X.dtype, np.integer):
        if not np.all(np.equal(np.mod(X, 1), 0)):
            raise ValueError("X must contain integer token ids")
        X = X.astype(np.int64)
    if X.size and X.min() < 0:
        raise ValueError("token ids must be non-negative")
    if vocab_size is not None and X.size and X.max() >= vocab_size:
        raise ValueError(f"token id {X.max()} out of range for vocab_size {vocab_size}")
    return X


class PaddedSequenceVectorizer(TransformerMixin, BaseEstimator):
    """Clean, stem, stop-filter and encode documents to padded id rows.

    The vocabulary is fitted on the documents passed to `fit` (use the
    training split only), ranked by frequency with lexicographic tie-breaks,
    and capped at `vocab_size` including the reserved PAD=0 and OOV=1 ids.
    """

    def __init__(self, vocab_size: int = 10_000, max_len: int = 100,
                 stopwords_path: str | None = None):
        self.vocab_size = vocab_size
        self.max_len = max_len
        self.stopwords_path = stopwords_path

    def analyze(self, text: str) -> list[str]:
        """The token pipeline for one document (no encoding)."""
        stoplist = textprep.load_stopwords(self.stopwords_path)
        return textprep.tokenize_stem(textprep.clean(text), stoplist)

    def fit(self, X, y=None):
        docs = _as_text_list(X)
        self.vocabulary_ = textprep.build_vocab(
            (self.analyze(d) for d in docs), max_size=self.vocab_size
        )
        self.n_features_in_ = 1
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "vocabulary_")
        docs = _as_text_list(X)
        rows = [
            textprep.encode_pad(self.analyze(d), self.vocabulary_, self.max_len)
            for d in docs
        ]
        if rows:
            return np.stack(rows)
        return np.zeros((0, self.max_len), dtype=np.int32)


class CnnBiGruAttentionClassifier(ClassifierMixin, BaseEstimator):
    """Binary sequence classifier: embedding -> conv/pool -> BiGRU ->
    attention -> GAP -> dropout -> sigmoid head, trained with Adam/BCE.

    X is a matrix of token-id rows (see PaddedSequenceVectorizer); y holds
    binary labels. When no validation set is supplied, `validation_fraction`
    of the training rows is split off with the run seed for early stopping.
    """

    def __init__(
        self,
        vocab_size: int | None = None,
        embedding_dim: int = 128,
        conv_filters: int = 128,
        kernel_size: int = 5,
        pool_size: int = 2,
        gru_units: int = 128,
        attention_width: int = 64,
        dropout: float = 0.5,
        learning_rate: float = 0.001,
        epochs: int = 40,
        batch_size: int = 512,
        patience: int = 4,
        validation_fraction: float = 0.1,
        grad_clip_norm: float | None = None,
        random_state: int = 42,
    ):
        self.vocab_size = vocab_size
        self.embedding_dim = embedding_dim
        self.conv_filters = conv_filters
        self.kernel_size = kernel_size
        self.pool_size = pool_size
        self.gru_units = gru_units
        self.attention_width = attention_width
        self.dropout = dropout
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.patience = patience
        self.validation_fraction = validation_fraction
        self.grad_clip_norm = grad_clip_norm
        self.random_state = random_state

    def _model_config(self, X: np.ndarray) -> ModelConfig:
        vocab_size = self.vocab_size
        if vocab_size is None:
            vocab_size = max(int(X.max()) + 1 if X.size else 2, 2)
        return ModelConfig(
            vocab_size=vocab_size,
            max_len=X.shape[1],
            embedding_dim=self.embedding_dim,
            conv_filters=self.conv_filters,
            kernel_size=self.kernel_size,
            pool_size=self.pool_size,
            gru_units=self.gru_units,
            attention_width=self.attention_width,
            dropout=self.dropout,
        )

    def fit(self, X, y, validation_data=None):
        X = _as_id_matrix(X, self.vocab_size)
        y = np.asarray(y)
        if y.shape != (X.shape[0],):
            raise ValueError(f"y shape {y.shape} does not match X rows {X.shape[0]}")
        if not np.isin(y, (0, 1)).all():
            raise ValueError("y must contain only 0 and 1")

        config = self._model_config(X)
        self.model_ = CnnBiGruAttention(config)
        rng = RngState(self.random_state)
        params = self.model_.init_params(rng.substream("init"))

        if validation_data is not None:
            x_val = _as_id_matrix(validation_data[0], config.vocab_size)
            y_val = np.asarray(validation_data[1])
            x_train, y_train = X, y
        else:
            n_val = max(1, int(round(self.validation_fraction * X.shape[0])))
            if n_val >= X.shape[0]:
                raise ValueError("validation_fraction leaves no training rows")
            order = rng.substream("validation-split").permutation(X.shape[0])
            val_idx, train_idx = order[:n_val], order[n_val:]
            x_train, y_train = X[train_idx], y[train_idx]
            x_val, y_val = X[val_idx], y[val_idx]

        train_config = TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            patience=self.patience,
            learning_rate=self.learning_rate,
            seed=self.random_state,
            grad_clip_norm=self.grad_clip_norm,
        )
        self.params_, self.history_ = train(
            self.model_, params, (x_train, y_train), (x_val, y_val), train_config
        )
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        X = _as_id_matrix(X, self.model_.config.vocab_size)
        pos = self.model_.predict_proba(X, self.params_)
        return np.column_stack([1.0 - pos, pos])

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)
