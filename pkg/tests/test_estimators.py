import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import Pipeline

from sidm.estimators import CnnBiGruAttentionClassifier, PaddedSequenceVectorizer
from tests.conftest import make_separable

DOCS = [
    "I want to end my life tonight",
    "lovely sunny afternoon in the park",
    "cannot stop thinking about dying",
    "the new coffee shop downtown is great",
]
LABELS = np.array([1, 0, 1, 0])


class TestVectorizer:
    def test_fit_transform_shapes(self):
        vec = PaddedSequenceVectorizer(vocab_size=50, max_len=12)
        out = vec.fit_transform(DOCS)
        assert out.shape == (4, 12)
        assert out.dtype == np.int32

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            PaddedSequenceVectorizer().transform(DOCS)

    def test_rejects_single_string(self):
        with pytest.raises(TypeError):
            PaddedSequenceVectorizer().fit("just one document")

    def test_get_params_round_trip(self):
        vec = PaddedSequenceVectorizer(vocab_size=77, max_len=5)
        params = vec.get_params()
        assert params["vocab_size"] == 77
        rebuilt = PaddedSequenceVectorizer(**params)
        assert rebuilt.get_params() == params

    def test_clone(self):
        vec = PaddedSequenceVectorizer(vocab_size=99).fit(DOCS)
        cloned = clone(vec)
        assert cloned.vocab_size == 99
        assert not hasattr(cloned, "vocabulary_")

    def test_stopwords_removed(self):
        vec = PaddedSequenceVectorizer()
        assert "the" not in vec.analyze("the cat sat on the mat")

    def test_analyze_matches_transform_ids(self):
        vec = PaddedSequenceVectorizer(max_len=8).fit(DOCS)
        tokens = vec.analyze(DOCS[0])
        row = vec.transform([DOCS[0]])[0]
        n = len(tokens)
        assert (row[n:] == 0).all()
        assert (row[:n] > 0).all()


class TestClassifier:
    def _small_clf(self, **overrides):
        kwargs = dict(
            vocab_size=12,
            embedding_dim=6,
            conv_filters=6,
            kernel_size=3,
            pool_size=2,
            gru_units=4,
            attention_width=3,
            dropout=0.0,
            epochs=12,
            batch_size=8,
            patience=11,
            random_state=0,
        )
        kwargs.update(overrides)
        return CnnBiGruAttentionClassifier(**kwargs)

    def test_fit_predict_interface(self):
        x, y = make_separable(n_per_class=12, seed=2)
        clf = self._small_clf().fit(x, y)
        assert list(clf.classes_) == [0, 1]
        proba = clf.predict_proba(x[:5])
        assert proba.shape == (5, 2)
        np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-9)
        pred = clf.predict(x[:5])
        assert set(pred) <= {0, 1}

    def test_score_accuracy(self):
        x, y = make_separable(n_per_class=12, seed=2)
        clf = self._small_clf(epochs=40, patience=39, learning_rate=0.01).fit(
            x, y, validation_data=(x, y)
        )
        assert clf.score(x, y) == 1.0

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            self._small_clf().predict(np.zeros((2, 10), dtype=np.int32))

    def test_rejects_non_integer_ids(self):
        clf = self._small_clf()
        with pytest.raises(ValueError, match="integer"):
            clf.fit(np.full((4, 10), 0.5), np.array([0, 1, 0, 1]))

    def test_rejects_out_of_range_ids(self):
        clf = self._small_clf(vocab_size=4)
        x = np.full((4, 10), 9, dtype=np.int32)
        with pytest.raises(ValueError, match="out of range"):
            clf.fit(x, np.array([0, 1, 0, 1]))

    def test_rejects_non_binary_labels(self):
        x, _ = make_separable(n_per_class=4, seed=3)
        with pytest.raises(ValueError, match="0 and 1"):
            self._small_clf().fit(x, np.arange(8))

    def test_internal_validation_split(self):
        x, y = make_separable(n_per_class=12, seed=4)
        clf = self._small_clf(validation_fraction=0.25, epochs=4, patience=3).fit(x, y)
        # 6 of 24 rows held out for validation
        assert len(clf.history_.val_loss) >= 1

    def test_clone_and_get_params(self):
        clf = self._small_clf(gru_units=5)
        cloned = clone(clf)
        assert cloned.get_params()["gru_units"] == 5

    def test_pipeline_composition(self):
        texts = [
            "I want to die and cannot cope",
            "what a wonderful bright morning walk",
            "ending it all feels like the answer",
            "enjoying tea and a good novel",
            "there is no point in living anymore",
            "planted tomatoes in the garden today",
        ]
        labels = np.array([1, 0, 1, 0, 1, 0])
        pipeline = Pipeline(
            [
                ("vectorize", PaddedSequenceVectorizer(vocab_size=60, max_len=10)),
                (
                    "classify",
                    CnnBiGruAttentionClassifier(
                        vocab_size=60,
                        embedding_dim=6,
                        conv_filters=6,
                        kernel_size=3,
                        pool_size=2,
                        gru_units=4,
                        attention_width=3,
                        dropout=0.0,
                        epochs=6,
                        batch_size=6,
                        patience=5,
                        validation_fraction=0.34,
                        random_state=0,
                    ),
                ),
            ]
        )
        pipeline.fit(texts, labels)
        proba = pipeline.predict_proba(["feeling hopeless about everything"])
        assert proba.shape == (1, 2)
