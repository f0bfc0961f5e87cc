"""Trainable binary validity classifier over (source, reference, output).

A logistic model over interpretable text features stands in for a pretrained
encoder behind the same interface: anything that maps an EvaluationInput to a
validity probability can serve as the RL reward model. Features operationalize
the annotation criteria: output tokens should come from the source, numbers
must not drift, cause and effect should not bleed into each other, and the
output should overlap the reference.

Variants:
  full          — all features.
  no_reference  — drops every reference-derived feature (never reads it).
  no_source     — drops source containment and numeric-mismatch features.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from . import metrics
from .records import EvaluationInput, LabeledEvaluation
from .tagged import Relation

log = logging.getLogger(__name__)

LAYOUT_VERSION = 1

# Clamp for count/ratio features so a single outlier cannot destabilize
# full-batch gradient descent.
_CLAMP = 4.0

_FULL_FEATURES = [
    "token_f1_cause_vs_reference",
    "token_f1_effect_vs_reference",
    "trigram_cosine_cause_vs_reference",
    "trigram_cosine_effect_vs_reference",
    "containment_cause_in_source",
    "containment_effect_in_source",
    "numeric_mismatch_vs_source",
    "overlap_within_output",
    "relation_match",
    "length_ratio_cause",
    "length_ratio_effect",
    "bias",
]

_REFERENCE_FEATURES = {
    "token_f1_cause_vs_reference",
    "token_f1_effect_vs_reference",
    "trigram_cosine_cause_vs_reference",
    "trigram_cosine_effect_vs_reference",
    "relation_match",
    "length_ratio_cause",
    "length_ratio_effect",
}
_SOURCE_FEATURES = {
    "containment_cause_in_source",
    "containment_effect_in_source",
    "numeric_mismatch_vs_source",
}


class Variant(str, Enum):
    FULL = "full"
    NO_REFERENCE = "no_reference"
    NO_SOURCE = "no_source"


def feature_names(variant: Variant) -> list[str]:
    variant = Variant(variant)
    if variant is Variant.FULL:
        dropped = set()
    elif variant is Variant.NO_REFERENCE:
        dropped = _REFERENCE_FEATURES
    else:
        dropped = _SOURCE_FEATURES
    return [name for name in _FULL_FEATURES if name not in dropped]


def _is_numeric(token: str) -> bool:
    return any(ch.isdigit() for ch in token)


def _containment(field_tokens: list[str], source_tokens: set[str]) -> float:
    if not field_tokens:
        return 1.0
    return sum(t in source_tokens for t in field_tokens) / len(field_tokens)


def extract_features(inp: EvaluationInput, variant: Variant = Variant.FULL) -> np.ndarray:
    """Deterministic feature vector for one evaluation input.

    The no_reference layout is computed without touching ``inp.reference`` at
    all, and no_source without touching ``inp.source``.
    """
    variant = Variant(variant)
    out_cause = metrics.normalize_tokens(inp.output.cause)
    out_effect = metrics.normalize_tokens(inp.output.effect)

    values: dict[str, float] = {}

    if variant is not Variant.NO_REFERENCE:
        ref_cause = metrics.normalize_tokens(inp.reference.cause)
        ref_effect = metrics.normalize_tokens(inp.reference.effect)
        values["token_f1_cause_vs_reference"] = metrics.field_prf(out_cause, ref_cause).f1
        values["token_f1_effect_vs_reference"] = metrics.field_prf(out_effect, ref_effect).f1
        values["trigram_cosine_cause_vs_reference"] = metrics.trigram_cosine(
            inp.output.cause, inp.reference.cause
        )
        values["trigram_cosine_effect_vs_reference"] = metrics.trigram_cosine(
            inp.output.effect, inp.reference.effect
        )
        values["relation_match"] = float(
            Relation(inp.output.relation) == Relation(inp.reference.relation)
        )
        values["length_ratio_cause"] = min(
            _CLAMP, len(out_cause) / max(1, len(ref_cause))
        )
        values["length_ratio_effect"] = min(
            _CLAMP, len(out_effect) / max(1, len(ref_effect))
        )

    if variant is not Variant.NO_SOURCE:
        src_tokens = metrics.normalize_tokens(inp.source)
        src_set = set(src_tokens)
        values["containment_cause_in_source"] = _containment(out_cause, src_set)
        values["containment_effect_in_source"] = _containment(out_effect, src_set)
        src_numbers = {t for t in src_tokens if _is_numeric(t)}
        mismatches = sum(
            1 for t in out_cause + out_effect if _is_numeric(t) and t not in src_numbers
        )
        values["numeric_mismatch_vs_source"] = min(_CLAMP, float(mismatches))

    cset, eset = set(out_cause), set(out_effect)
    if cset and eset:
        values["overlap_within_output"] = len(cset & eset) / min(len(cset), len(eset))
    else:
        values["overlap_within_output"] = 0.0
    values["bias"] = 1.0

    return np.array([values[name] for name in feature_names(variant)], dtype=np.float64)


@dataclass
class EvaluatorModel:
    variant: Variant
    weights: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.variant = Variant(self.variant)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        expected = len(feature_names(self.variant))
        if self.weights.shape != (expected,):
            raise ValueError(
                f"weight dimensionality {self.weights.shape} does not match "
                f"variant {self.variant.value} layout ({expected})"
            )

    def save(self, path: str | Path) -> None:
        from .records import atomic_write_text

        atomic_write_text(
            path,
            json.dumps(
                {
                    "format": "causalign-evaluator",
                    "layout_version": LAYOUT_VERSION,
                    "variant": self.variant.value,
                    "feature_names": feature_names(self.variant),
                    "weights": self.weights.tolist(),
                    "metadata": self.metadata,
                },
                indent=2,
                sort_keys=True,
            )
            + "\n",
        )

    @classmethod
    def load(cls, path: str | Path) -> "EvaluatorModel":
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
        if data.get("format") != "causalign-evaluator":
            raise ValueError(f"{path}: not an evaluator model file")
        if data.get("layout_version") != LAYOUT_VERSION:
            raise ValueError(
                f"{path}: layout version {data.get('layout_version')} unsupported"
            )
        return cls(
            variant=Variant(data["variant"]),
            weights=np.array(data["weights"], dtype=np.float64),
            metadata=data.get("metadata", {}),
        )


class Prediction(NamedTuple):
    p_valid: float
    verdict: bool
    confidence: float


def _sigmoid(z: np.ndarray | float):
    return 1.0 / (1.0 + np.exp(-z))


def predict(model: EvaluatorModel, inp: EvaluationInput) -> Prediction:
    """Validity probability, thresholded verdict (ties -> valid), confidence."""
    x = extract_features(inp, model.variant)
    p = float(_sigmoid(float(model.weights @ x)))
    verdict = p >= 0.5
    return Prediction(p_valid=p, verdict=verdict, confidence=max(p, 1.0 - p))


def predict_batch(model: EvaluatorModel, inputs: Sequence[EvaluationInput]) -> list[Prediction]:
    return [predict(model, inp) for inp in inputs]


@dataclass
class TrainConfig:
    variant: Variant = Variant.FULL
    lr: float = 1.0  # full-batch GD on standardized features
    max_epochs: int = 100
    patience: int = 10
    l2: float = 1e-4
    seed: int = 0
    dev_fraction: float = 0.1


def loss_and_grad(
    weights: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy with L2 penalty on non-bias weights, and its gradient."""
    z = X @ weights
    # log(1 + exp(-|z|)) formulation avoids overflow
    losses = np.logaddexp(0.0, z) - y * z
    penalty_mask = np.ones_like(weights)
    penalty_mask[-1] = 0.0  # bias is the last component of every layout
    loss = float(losses.mean() + l2 * np.sum((weights * penalty_mask) ** 2))
    grad = X.T @ (_sigmoid(z) - y) / len(y) + 2.0 * l2 * weights * penalty_mask
    return loss, grad


def _positive_f1(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    tp = int(np.sum((y_pred == 1) & (y_true == 1)))
    fp = int(np.sum((y_pred == 1) & (y_true == 0)))
    fn = int(np.sum((y_pred == 0) & (y_true == 1)))
    if tp == 0:
        return 0.0
    p = tp / (tp + fp)
    r = tp / (tp + fn)
    return 2 * p * r / (p + r)


def train_evaluator(
    data: Sequence[LabeledEvaluation],
    config: TrainConfig | None = None,
    dev: Sequence[LabeledEvaluation] | None = None,
) -> EvaluatorModel:
    """Full-batch gradient descent on cross-entropy, early-stopped on dev F1.

    When no dev set is supplied, a seed-fixed 10% sample of ``data`` is held
    out. Requires both classes in the training data.
    """
    config = config or TrainConfig()
    if not data:
        raise ValueError("no training data")
    labels = np.array([1.0 if item.verdict else 0.0 for item in data])
    if labels.min() == labels.max():
        raise ValueError("training data must contain both 'valid' and 'invalid' labels")

    if dev is None:
        rng = np.random.default_rng(config.seed)
        n_dev = int(round(config.dev_fraction * len(data)))
        dev_idx = set(rng.choice(len(data), size=n_dev, replace=False).tolist()) if n_dev else set()
        train_items = [x for i, x in enumerate(data) if i not in dev_idx]
        dev_items = [x for i, x in enumerate(data) if i in dev_idx]
        train_labels = np.array([1.0 if x.verdict else 0.0 for x in train_items])
        if not dev_items or train_labels.min() == train_labels.max():
            log.warning(
                "dev split would leave a single-class training set; "
                "early-stopping on the training data instead"
            )
            train_items, dev_items = list(data), list(data)
    else:
        train_items, dev_items = list(data), list(dev)

    variant = Variant(config.variant)
    X = np.stack([extract_features(x.input, variant) for x in train_items])
    y = np.array([1.0 if x.verdict else 0.0 for x in train_items])
    X_dev = np.stack([extract_features(x.input, variant) for x in dev_items])
    y_dev = np.array([1.0 if x.verdict else 0.0 for x in dev_items])

    # Descend on standardized features (better conditioning), then fold the
    # scaler back so the stored weights apply to raw feature vectors.
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd < 1e-9] = 1.0
    mu[-1], sd[-1] = 0.0, 1.0  # bias column untouched
    X_s = (X - mu) / sd
    X_dev_s = (X_dev - mu) / sd

    weights = np.zeros(X.shape[1], dtype=np.float64)
    best_weights = weights.copy()
    # Early stopping tracks dev F1; dev cross-entropy breaks ties because F1
    # on a small dev split is quantized and plateaus while the model still
    # improves.
    best_key = (-1.0, -math.inf)
    best_f1 = -1.0
    best_epoch = 0
    epochs_run = 0
    since_best = 0
    for epoch in range(1, config.max_epochs + 1):
        _, grad = loss_and_grad(weights, X_s, y, config.l2)
        weights = weights - config.lr * grad
        epochs_run = epoch
        dev_pred = (_sigmoid(X_dev_s @ weights) >= 0.5).astype(float)
        f1 = _positive_f1(y_dev, dev_pred)
        dev_loss, _ = loss_and_grad(weights, X_dev_s, y_dev, 0.0)
        key = (f1, -dev_loss)
        if key > best_key:
            best_key = key
            best_f1 = f1
            best_weights = weights.copy()
            best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break

    raw_weights = best_weights / sd
    raw_weights[-1] = best_weights[-1] - float(
        np.sum(best_weights[:-1] * mu[:-1] / sd[:-1])
    )

    return EvaluatorModel(
        variant=variant,
        weights=raw_weights,
        metadata={
            "seed": config.seed,
            "epochs_run": epochs_run,
            "best_epoch": best_epoch,
            "dev_f1": best_f1,
            "lr": config.lr,
            "l2": config.l2,
            "train_size": len(train_items),
            "dev_size": len(dev_items),
        },
    )


def agreement_report(
    model: EvaluatorModel, labeled: Sequence[LabeledEvaluation]
) -> dict:
    """Agreement, kappa and per-class P/R/F1 of model verdicts vs stored labels."""
    if not labeled:
        raise ValueError("no labeled data")
    truth = [x.verdict for x in labeled]
    predicted = [predict(model, x.input).verdict for x in labeled]
    kappa = metrics.cohens_kappa(truth, predicted)
    per_class = {}
    for cls, name in ((True, "valid"), (False, "invalid")):
        tp = sum(1 for t, p in zip(truth, predicted) if p == cls and t == cls)
        fp = sum(1 for t, p in zip(truth, predicted) if p == cls and t != cls)
        fn = sum(1 for t, p in zip(truth, predicted) if p != cls and t == cls)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        per_class[name] = {"precision": prec, "recall": rec, "f1": f1}
    return {
        "n": len(labeled),
        "agreement": metrics.percent_agreement(truth, predicted),
        "kappa": kappa.value,
        "kappa_degenerate": kappa.degenerate,
        "per_class": per_class,
    }
