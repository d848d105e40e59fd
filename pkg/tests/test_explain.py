import numpy as np
import pytest

from sidm.explain import (
    Attribution,
    CoalitionSpec,
    TooManyPositions,
    attention_export,
    exact_shapley,
    explanation_report,
    parse_explanations,
    sampled_shapley,
)
from sidm.numcore import RngState, sigmoid


def additive_fn(weights):
    """f(ids) = sum of per-id weights; strictly additive in the tokens."""

    def f(ids):
        return float(sum(weights.get(int(i), 0.0) for i in ids))

    return f


class TestExactShapley:
    def test_additive_model_standalone_effects(self):
        ids = np.array([5, 7, 0, 0])
        weights = {5: 0.3, 7: -0.2}
        f = additive_fn(weights)
        spec = CoalitionSpec.for_ids(ids)
        attr = exact_shapley(f, ids, spec)
        # brute force over all 4 coalitions of an n=2 game
        empty = f(np.array([0, 0, 0, 0]))
        phi_expected = [
            f(np.array([5, 0, 0, 0])) - empty,
            f(np.array([0, 7, 0, 0])) - empty,
        ]
        np.testing.assert_allclose(attr.shap_values, phi_expected, atol=1e-12)

    def test_efficiency_axiom(self):
        rng = np.random.default_rng(0)
        ids = np.array([2, 3, 4, 5, 6, 0, 0, 0])
        lin = rng.standard_normal(7)

        def f(v):  # nonlinear, non-additive
            active = [lin[int(i) - 1] for i in v if i != 0]
            return float(sigmoid(np.array(sum(active) + 0.5 * len(active) ** 2)))

        attr = exact_shapley(f, ids, CoalitionSpec.for_ids(ids))
        assert attr.efficiency_gap() < 1e-10

    def test_efficiency_on_real_model(self, toy_model, trained_toy):
        best, _ = trained_toy
        ids = np.array([2, 5, 3, 9, 8, 0, 0, 0, 0, 0], dtype=np.int32)
        attr = exact_shapley(
            lambda v: toy_model.forward(v, best)[0], ids, CoalitionSpec.for_ids(ids)
        )
        assert attr.efficiency_gap() < 1e-10
        assert attr.prediction == pytest.approx(toy_model.forward(ids, best)[0])

    def test_null_player(self):
        ids = np.array([4, 9, 6, 0])

        def f(v):  # position 1 never matters
            return float(v[0] != 0) * 0.4 + float(v[2] != 0) * 0.25

        attr = exact_shapley(f, ids, CoalitionSpec.for_ids(ids))
        assert attr.shap_values[1] == 0.0

    def test_symmetry(self):
        ids = np.array([3, 3, 8, 0])

        def f(v):  # symmetric in positions 0 and 1
            joint = (v[0] != 0) + (v[1] != 0)
            return 0.1 * joint * joint + 0.7 * (v[2] != 0)

        attr = exact_shapley(f, ids, CoalitionSpec.for_ids(ids))
        assert abs(attr.shap_values[0] - attr.shap_values[1]) < 1e-10

    def test_cap_enforced(self):
        ids = np.arange(2, 15)  # 13 non-PAD tokens
        with pytest.raises(TooManyPositions):
            exact_shapley(lambda v: 0.0, ids, CoalitionSpec.for_ids(ids))

    def test_no_maskable_positions(self):
        ids = np.zeros(4, dtype=np.int64)
        attr = exact_shapley(lambda v: 0.25, ids, CoalitionSpec.for_ids(ids))
        assert attr.shap_values.size == 0
        assert attr.base_value == attr.prediction == 0.25


class TestSampledShapley:
    def _setup(self, n=8, seed=1):
        rng = np.random.default_rng(seed)
        ids = np.arange(2, 2 + n)
        lin = rng.standard_normal(n + 2)

        def f(v):
            active = [lin[int(i)] for i in v if i != 0]
            return float(np.tanh(sum(active)) + 0.05 * len(active))

        return ids, f

    def test_requires_min_samples(self):
        ids, f = self._setup()
        with pytest.raises(ValueError):
            sampled_shapley(f, ids, CoalitionSpec.for_ids(ids), 50, np.random.default_rng(0))

    def test_deterministic_per_seed(self):
        ids, f = self._setup()
        spec = CoalitionSpec.for_ids(ids)
        a = sampled_shapley(f, ids, spec, 200, RngState(5).substream("sampling"))
        b = sampled_shapley(f, ids, spec, 200, RngState(5).substream("sampling"))
        np.testing.assert_array_equal(a.shap_values, b.shap_values)

    def test_converges_to_exact_within_stderr(self):
        ids, f = self._setup()
        spec = CoalitionSpec.for_ids(ids)
        exact = exact_shapley(f, ids, spec)
        sampled = sampled_shapley(f, ids, spec, 2000, np.random.default_rng(7))
        gap = np.abs(sampled.shap_values - exact.shap_values)
        assert (gap <= 4.0 * sampled.std_errors + 1e-12).all()

    def test_efficiency_gap_stays_at_float_noise(self):
        # marginals telescope along every permutation, so the estimator
        # satisfies efficiency exactly at ANY sample count (up to round-off)
        ids, f = self._setup(seed=2)
        spec = CoalitionSpec.for_ids(ids)
        gaps = [
            sampled_shapley(f, ids, spec, k, np.random.default_rng(3)).efficiency_gap()
            for k in (100, 1000, 10_000)
        ]
        assert all(gap <= 1e-12 for gap in gaps)


class TestAttentionExport:
    def test_weights_sum_to_one(self, toy_model, trained_toy):
        best, _ = trained_toy
        ids = np.array([2, 3, 4, 5, 6, 7, 8, 9, 2, 3], dtype=np.int32)
        alphas, spans = attention_export(toy_model, best, ids)
        assert float(alphas.sum()) == pytest.approx(1.0, abs=1e-6)

    def test_uniform_for_degenerate_scorer(self, toy_model, trained_toy):
        best, _ = trained_toy
        neutral = best.copy()
        neutral.attn_v[:] = 0.0  # every score identical -> uniform softmax
        ids = np.array([2, 3, 4, 5, 6, 7, 8, 9, 2, 3], dtype=np.int32)
        alphas, _ = attention_export(toy_model, neutral, ids)
        np.testing.assert_allclose(alphas, 1.0 / len(alphas), atol=1e-7)

    def test_length_and_spans(self, toy_model, trained_toy):
        best, _ = trained_toy
        ids = np.array([2, 3, 4, 5, 6, 7, 8, 9, 2, 3], dtype=np.int32)
        alphas, spans = attention_export(toy_model, best, ids)
        cfg = toy_model.config
        pooled = (cfg.max_len - cfg.kernel_size + 1) // cfg.pool_size
        assert len(alphas) == len(spans) == pooled
        # receptive field: pool window of conv windows of width kernel_size
        assert spans[0] == (0, cfg.pool_size - 1 + cfg.kernel_size - 1)
        assert spans[1][0] == cfg.pool_size


class TestExplanationReport:
    def _attributions(self):
        return [
            Attribution(
                positions=[0, 1, 2],
                shap_values=np.array([0.4, -0.1, 0.0]),
                base_value=0.5,
                prediction=0.8,
                tokens=["den", "hope", "run"],
            ),
            Attribution(
                positions=[0, 1],
                shap_values=np.array([-0.6, 0.05]),
                base_value=0.5,
                prediction=-0.05,
                tokens=["hope", "run"],
            ),
        ]

    def test_sign_classes(self, tmp_path):
        paths = explanation_report(self._attributions(), tmp_path)
        records = parse_explanations(paths[0])
        signs = {t["token"]: t["sign"] for t in records[0]["tokens"]}
        assert signs["den"] == "supports"
        assert signs["hope"] == "opposes"

    def test_summary_sorted_by_mean_abs(self, tmp_path):
        paths = explanation_report(self._attributions(), tmp_path)
        rows = paths[1].read_text().strip().splitlines()[1:]
        means = [float(r.split(",")[1]) for r in rows]
        assert means == sorted(means, reverse=True)
        # hope appears twice: mean(|  -0.1|, |-0.6|) = 0.35
        top = rows[0].split(",")
        assert top[0] == "den" and float(top[1]) == pytest.approx(0.4)

    def test_round_trip_exact_values(self, tmp_path):
        attrs = self._attributions()
        paths = explanation_report(attrs, tmp_path)
        records = parse_explanations(paths[0])
        assert records[0]["tokens"][0]["shap_value"] == 0.4
        assert records[1]["base_value"] == 0.5

    def test_empty_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            explanation_report([], tmp_path)
