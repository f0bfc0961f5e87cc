"""Weak-to-strong supervision: seed subset -> partial evaluator -> pseudo-labels
-> per-class confidence filtering -> combined retraining."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .evaluator import EvaluatorModel, TrainConfig, predict, train_evaluator
from .records import EvaluationInput, LabeledEvaluation

log = logging.getLogger(__name__)


@dataclass
class WeakConfig:
    x_percent: float = 0.5  # fraction of labeled data kept as the seed set
    keep_fraction: float = 0.75  # per-class retention among pseudo-labels
    seed: int = 0
    balance: bool = True  # downsample retained classes to equal counts

    def __post_init__(self):
        if not 0.0 < self.x_percent < 1.0:
            raise ValueError(f"x_percent must be in (0, 1), got {self.x_percent}")
        if not 0.0 <= self.keep_fraction <= 1.0:
            raise ValueError(f"keep_fraction must be in [0, 1], got {self.keep_fraction}")


@dataclass(frozen=True)
class WeakLabeled:
    input: EvaluationInput
    pseudo_verdict: bool
    confidence: float
    id: str = ""


def split_seed(
    data: Sequence[LabeledEvaluation], cfg: WeakConfig
) -> tuple[list[LabeledEvaluation], list[LabeledEvaluation]]:
    """Seed/pool split: floor(x_percent * n) items sampled without replacement.

    Pool labels are meant to be hidden downstream; callers should only read
    ``item.input`` from the pool.
    """
    if not data:
        raise ValueError("no data to split")
    n = len(data)
    k = int(cfg.x_percent * n)
    if k == 0 or k == n:
        raise ValueError(
            f"x_percent={cfg.x_percent} yields an empty seed or pool for n={n}"
        )
    rng = np.random.default_rng(cfg.seed)
    chosen = set(rng.permutation(n)[:k].tolist())
    seed_set = [data[i] for i in range(n) if i in chosen]
    pool = [data[i] for i in range(n) if i not in chosen]
    return seed_set, pool


def pseudo_label(
    model: EvaluatorModel, pool: Sequence[EvaluationInput], ids: Sequence[str] | None = None
) -> list[WeakLabeled]:
    """Label each pool item with the model's verdict and confidence."""
    out = []
    for i, inp in enumerate(pool):
        pred = predict(model, inp)
        out.append(
            WeakLabeled(
                input=inp,
                pseudo_verdict=pred.verdict,
                confidence=pred.confidence,
                id=ids[i] if ids else "",
            )
        )
    return out


def filter_top_confidence(
    labeled: Sequence[WeakLabeled],
    keep_fraction: float = 0.75,
    seed: int = 0,
    balance: bool = True,
) -> list[WeakLabeled]:
    """Keep the floor(keep_fraction * n) highest-confidence items per class.

    With ``balance`` the larger retained class is then downsampled (seed-fixed)
    to the smaller one's size so both classes contribute equally. If a class is
    absent the balanced result is empty (logged).
    """
    by_class: dict[bool, list[tuple[int, WeakLabeled]]] = {True: [], False: []}
    for idx, item in enumerate(labeled):
        by_class[item.pseudo_verdict].append((idx, item))

    retained: dict[bool, list[tuple[int, WeakLabeled]]] = {}
    for cls, items in by_class.items():
        items_sorted = sorted(items, key=lambda pair: (-pair[1].confidence, pair[0]))
        retained[cls] = items_sorted[: int(keep_fraction * len(items))]

    if balance:
        target = min(len(retained[True]), len(retained[False]))
        if target == 0 and labeled:
            log.warning(
                "filter_top_confidence: a pseudo-label class is absent or fully "
                "filtered; balanced result is empty"
            )
        rng = np.random.default_rng(seed)
        for cls in (True, False):
            if len(retained[cls]) > target:
                keep_idx = rng.choice(len(retained[cls]), size=target, replace=False)
                retained[cls] = [retained[cls][i] for i in sorted(keep_idx.tolist())]

    merged = retained[True] + retained[False]
    merged.sort(key=lambda pair: pair[0])  # restore input order
    return [item for _, item in merged]


def weak_to_strong_train(
    data: Sequence[LabeledEvaluation],
    cfg: WeakConfig,
    train_config: TrainConfig | None = None,
) -> tuple[EvaluatorModel, dict]:
    """Run the full pipeline; returns the final model and a provenance report."""
    train_config = train_config or TrainConfig()
    seed_set, pool = split_seed(data, cfg)
    partial = train_evaluator(seed_set, train_config)
    weak = pseudo_label(partial, [x.input for x in pool], ids=[x.id for x in pool])
    filtered = filter_top_confidence(
        weak, keep_fraction=cfg.keep_fraction, seed=cfg.seed, balance=cfg.balance
    )
    combined = list(seed_set) + [
        LabeledEvaluation(input=w.input, verdict=w.pseudo_verdict, id=w.id)
        for w in filtered
    ]
    final = train_evaluator(combined, train_config)
    report = {
        "n_data": len(data),
        "x_percent": cfg.x_percent,
        "keep_fraction": cfg.keep_fraction,
        "balance": cfg.balance,
        "seed": cfg.seed,
        "seed_set_size": len(seed_set),
        "pool_size": len(pool),
        "pseudo_valid": sum(1 for w in weak if w.pseudo_verdict),
        "pseudo_invalid": sum(1 for w in weak if not w.pseudo_verdict),
        "filtered_valid": sum(1 for w in filtered if w.pseudo_verdict),
        "filtered_invalid": sum(1 for w in filtered if not w.pseudo_verdict),
        "final_train_size": len(combined),
    }
    return final, report
