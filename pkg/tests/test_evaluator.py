import dataclasses

import numpy as np
import pytest

from causalign.evaluator import (
    EvaluatorModel,
    Prediction,
    TrainConfig,
    Variant,
    agreement_report,
    extract_features,
    feature_names,
    loss_and_grad,
    predict,
    train_evaluator,
)
from causalign.records import EvaluationInput, LabeledEvaluation
from causalign.tagged import Extraction, Relation


def make_input(source, ref_c, ref_e, out_c, out_e, out_rel=Relation.CAUSE):
    return EvaluationInput(
        source=source,
        reference=Extraction(cause=ref_c, effect=ref_e, relation=Relation.CAUSE),
        output=Extraction(cause=out_c, effect=out_e, relation=out_rel),
    )


class TestFeatures:
    def test_identity_output(self):
        inp = make_input(
            "alpha beta gamma delta", "alpha beta", "gamma delta", "alpha beta", "gamma delta"
        )
        x = dict(zip(feature_names(Variant.FULL), extract_features(inp)))
        assert x["token_f1_cause_vs_reference"] == 1.0
        assert x["token_f1_effect_vs_reference"] == 1.0
        assert x["containment_cause_in_source"] == 1.0
        assert x["containment_effect_in_source"] == 1.0
        assert x["numeric_mismatch_vs_source"] == 0.0
        assert x["relation_match"] == 1.0
        assert x["bias"] == 1.0

    def test_numeric_mismatch_detected(self):
        # output invents $9.50 where the source only mentions $75.00
        inp = make_input(
            "Auris Medical currently has a consensus price target of $75.00",
            "a consensus price target of $75.00",
            "a potential upside",
            "a consensus price target of $9.50",
            "a potential upside",
        )
        x = dict(zip(feature_names(Variant.FULL), extract_features(inp)))
        assert x["numeric_mismatch_vs_source"] >= 1.0

    def test_overlap_within_output(self):
        inp = make_input(
            "a b c d w x y z", "a b c d", "w x y z", "a b c d", "a b y z"
        )
        x = dict(zip(feature_names(Variant.FULL), extract_features(inp)))
        assert x["overlap_within_output"] == pytest.approx(0.5)

    def test_no_reference_ignores_reference(self):
        base = make_input("a b c d", "a b", "c d", "a b", "c d")
        mutated = dataclasses.replace(
            base, reference=Extraction(cause="zzz", effect="qqq", relation=Relation.ENABLE)
        )
        fa = extract_features(base, Variant.NO_REFERENCE)
        fb = extract_features(mutated, Variant.NO_REFERENCE)
        assert np.array_equal(fa, fb)

    def test_no_source_ignores_source(self):
        base = make_input("a b c d", "a b", "c d", "a b", "c d")
        mutated = dataclasses.replace(base, source="completely different text 42")
        fa = extract_features(base, Variant.NO_SOURCE)
        fb = extract_features(mutated, Variant.NO_SOURCE)
        assert np.array_equal(fa, fb)

    def test_all_finite_on_degenerate_text(self):
        inp = make_input("...", "—", "—", "...", "...")
        for variant in Variant:
            assert np.all(np.isfinite(extract_features(inp, variant)))


class TestPredict:
    def test_zero_weights_is_half(self):
        model = EvaluatorModel(
            variant=Variant.FULL, weights=np.zeros(len(feature_names(Variant.FULL)))
        )
        inp = make_input("a b", "a", "b", "a", "b")
        pred = predict(model, inp)
        assert pred == Prediction(0.5, True, 0.5)

    def test_bias_only_unit_weight(self):
        weights = np.zeros(len(feature_names(Variant.FULL)))
        weights[-1] = 1.0  # bias component
        model = EvaluatorModel(variant=Variant.FULL, weights=weights)
        pred = predict(model, make_input("a b", "a", "b", "a", "b"))
        assert pred.p_valid == pytest.approx(1 / (1 + np.exp(-1)), abs=1e-12)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError, match="dimensionality"):
            EvaluatorModel(variant=Variant.FULL, weights=np.zeros(3))


def _toy_labeled(n_each=8):
    """Linearly separable toy set: good outputs vs hallucinated ones."""
    items = []
    for i in range(n_each):
        src = f"alpha{i} beta{i} gamma{i} delta{i}"
        ref = Extraction(cause=f"alpha{i} beta{i}", effect=f"gamma{i} delta{i}")
        good = EvaluationInput(source=src, reference=ref, output=ref)
        bad = EvaluationInput(
            source=src,
            reference=ref,
            output=Extraction(cause=f"zork{i} quux{i}", effect=f"blip{i} blap{i}"),
        )
        items.append(LabeledEvaluation(input=good, verdict=True, id=f"g{i}"))
        items.append(LabeledEvaluation(input=bad, verdict=False, id=f"b{i}"))
    return items


class TestTraining:
    def test_separable_data_learned(self):
        data = _toy_labeled()
        model = train_evaluator(data, TrainConfig(seed=1))
        for item in data:
            assert predict(model, item.input).verdict == item.verdict

    def test_loss_non_increasing_small_lr(self):
        data = _toy_labeled()
        X = np.stack([extract_features(d.input) for d in data])
        y = np.array([1.0 if d.verdict else 0.0 for d in data])
        w = np.zeros(X.shape[1])
        losses = []
        for _ in range(50):
            loss, grad = loss_and_grad(w, X, y, l2=1e-4)
            losses.append(loss)
            w = w - 0.05 * grad
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))

    def test_paper_default_epochs_and_patience(self):
        cfg = TrainConfig()
        assert cfg.max_epochs == 100
        assert cfg.patience == 10

    def test_single_class_rejected(self):
        data = [x for x in _toy_labeled() if x.verdict]
        with pytest.raises(ValueError, match="both"):
            train_evaluator(data)

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="no training data"):
            train_evaluator([])

    def test_deterministic_given_seed(self):
        data = _toy_labeled()
        m1 = train_evaluator(data, TrainConfig(seed=7))
        m2 = train_evaluator(data, TrainConfig(seed=7))
        assert np.array_equal(m1.weights, m2.weights)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n, d = 12, len(feature_names(Variant.FULL))
            X = rng.normal(size=(n, d))
            y = rng.integers(0, 2, size=n).astype(float)
            w = rng.normal(scale=0.5, size=d)
            _, grad = loss_and_grad(w, X, y, l2=1e-3)
            h = 1e-6
            for i in rng.choice(d, size=6, replace=False):
                wp, wm = w.copy(), w.copy()
                wp[i] += h
                wm[i] -= h
                fd = (loss_and_grad(wp, X, y, 1e-3)[0] - loss_and_grad(wm, X, y, 1e-3)[0]) / (2 * h)
                assert abs(grad[i] - fd) <= 1e-4 * max(abs(grad[i]), abs(fd)) + 1e-9

    def test_monotone_in_positively_weighted_feature(self):
        data = _toy_labeled()
        model = train_evaluator(data, TrainConfig(seed=3))
        names = feature_names(model.variant)
        i = names.index("token_f1_cause_vs_reference")
        w = model.weights
        if w[i] <= 0:
            pytest.skip("trained weight not positive on this fixture")
        x = extract_features(data[0].input)
        base = float(w @ x)
        bumped = x.copy()
        bumped[i] += 0.1
        assert float(w @ bumped) > base


class TestPersistence:
    def test_save_load_round_trip(self, tmp_path):
        model = train_evaluator(_toy_labeled(), TrainConfig(seed=2))
        path = tmp_path / "model.json"
        model.save(path)
        loaded = EvaluatorModel.load(path)
        assert loaded.variant == model.variant
        assert np.array_equal(loaded.weights, model.weights)
        assert loaded.metadata["seed"] == 2

    def test_load_rejects_wrong_format(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"format": "something-else"}')
        with pytest.raises(ValueError, match="not an evaluator"):
            EvaluatorModel.load(path)


class TestAgreementReport:
    def test_perfect_model(self):
        data = _toy_labeled()
        model = train_evaluator(data, TrainConfig(seed=1))
        report = agreement_report(model, data)
        assert report["agreement"] == 1.0
        assert report["kappa"] == pytest.approx(1.0)
        assert report["per_class"]["valid"]["f1"] == 1.0

    def test_zero_weight_model_enumerated(self):
        # p = 0.5 everywhere; the >= 0.5 tie rule maps every verdict to valid
        data = _toy_labeled(n_each=4)
        model = EvaluatorModel(
            variant=Variant.FULL, weights=np.zeros(len(feature_names(Variant.FULL)))
        )
        report = agreement_report(model, data)
        assert report["agreement"] == pytest.approx(0.5)  # half the fixture is valid
