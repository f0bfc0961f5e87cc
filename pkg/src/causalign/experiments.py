"""Experiment drivers: agreement study, data-split curve, main SFT-vs-RL
comparison, and RL with weakly-supervised reward models.

All drivers are deterministic given their seed and return flat row dicts
ready for TSV emission. Desk-scale model settings live here, not on the
module config defaults (those carry the reference hyperparameters): tiny
from-scratch models need larger steps and fewer examples than fine-tuned
checkpoints. The main study also trains its SFT stage on a fraction of the
data — a deliberately under-trained extractor is what gives the RL stage the
headroom that exists naturally at real scale.
"""

from __future__ import annotations

import copy
import dataclasses
import logging
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np

from .evaluator import (
    EvaluatorModel,
    TrainConfig,
    Variant,
    agreement_report,
    predict,
    train_evaluator,
)
from .extractor import InfeasibleSpanError, PolicyModel, SFTConfig, decode_greedy, sft_train
from .metrics import (
    exact_match,
    extraction_rouge_l,
    pearson,
    percent_agreement,
    token_prf,
    trigram_cosine,
    without_em_rate,
    cohens_kappa,
)
from .records import CausalInstance, EvaluationInput, LabeledEvaluation
from .rl import EvaluatorReward, PPOConfig, rl_train
from .tagged import serialize_extraction
from .weak import WeakConfig, weak_to_strong_train

log = logging.getLogger(__name__)

SIMILARITY_THRESHOLD = 0.75  # tagged-string trigram cosine at/above -> "valid"


def _tagged_similarity(item: LabeledEvaluation) -> float:
    return trigram_cosine(
        serialize_extraction(item.input.output.normalized()),
        serialize_extraction(item.input.reference.normalized()),
    )


def run_agreement_study(
    train: Sequence[LabeledEvaluation],
    dev: Sequence[LabeledEvaluation],
    seed: int = 0,
    eval_config: TrainConfig | None = None,
) -> dict:
    """Agreement of metric baselines and trained evaluator variants vs labels,
    plus Pearson correlations of the continuous metrics."""
    base = eval_config or TrainConfig()
    truth = [x.verdict for x in dev]

    agreement_rows = []

    def add_row(name: str, predicted: list[bool]):
        kappa = cohens_kappa(truth, predicted)
        agreement_rows.append(
            {
                "name": name,
                "agreement": percent_agreement(truth, predicted),
                "kappa": kappa.value,
            }
        )

    add_row(
        "exact_match",
        [exact_match(x.input.output, x.input.reference) for x in dev],
    )
    add_row(
        "similarity_threshold",
        [_tagged_similarity(x) >= SIMILARITY_THRESHOLD for x in dev],
    )
    models = {}
    for variant in (Variant.NO_REFERENCE, Variant.NO_SOURCE, Variant.FULL):
        cfg = dataclasses.replace(base, variant=variant, seed=seed)
        model = train_evaluator(train, cfg)
        models[variant] = model
        add_row(
            f"evaluator_{variant.value}",
            [predict(model, x.input).verdict for x in dev],
        )

    labels = [1.0 if v else 0.0 for v in truth]
    correlation_rows = [
        {
            "metric": "token_f1",
            "pearson": pearson(
                [token_prf(x.input.output, x.input.reference).f1 for x in dev], labels
            ),
        },
        {
            "metric": "rouge_l",
            "pearson": pearson(
                [extraction_rouge_l(x.input.output, x.input.reference) for x in dev], labels
            ),
        },
        {
            "metric": "trigram_cosine",
            "pearson": pearson([_tagged_similarity(x) for x in dev], labels),
        },
        {
            "metric": "evaluator_full_p_valid",
            "pearson": pearson(
                [predict(models[Variant.FULL], x.input).p_valid for x in dev], labels
            ),
        },
    ]
    return {
        "agreement": agreement_rows,
        "correlation": correlation_rows,
        "models": models,
    }


def run_split_study(
    train: Sequence[LabeledEvaluation],
    dev: Sequence[LabeledEvaluation],
    fractions: Sequence[float] = (0.1, 0.3, 0.5, 0.8, 1.0),
    seed: int = 0,
    eval_config: TrainConfig | None = None,
) -> list[dict]:
    """Evaluator agreement by percentage of labeled training data used."""
    base = eval_config or TrainConfig()
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(train))
    rows = []
    for fraction in fractions:
        k = max(1, int(round(fraction * len(train)))) if fraction < 1.0 else len(train)
        subset = [train[i] for i in sorted(order[:k].tolist())]
        model = train_evaluator(subset, dataclasses.replace(base, seed=seed))
        rows.append(
            {
                "fraction": fraction,
                "n_train": k,
                "agreement": agreement_report(model, dev)["agreement"],
            }
        )
    return rows


def evaluate_policy(
    policy: PolicyModel,
    evaluator: EvaluatorModel,
    instances: Sequence[CausalInstance],
) -> dict:
    """Token P/R/F1, EM, evaluator-verdict rate and w/o EM of greedy decodes."""
    precisions, recalls, f1s = [], [], []
    records = []
    for inst in instances:
        try:
            pred, _ = decode_greedy(policy, inst.context)
        except InfeasibleSpanError:
            precisions.append(0.0)
            recalls.append(0.0)
            f1s.append(0.0)
            records.append((False, False))
            continue
        prf = token_prf(pred, inst.gold)
        precisions.append(prf.precision)
        recalls.append(prf.recall)
        f1s.append(prf.f1)
        verdict = predict(
            evaluator, EvaluationInput(source=inst.context, reference=inst.gold, output=pred)
        ).verdict
        records.append((verdict, exact_match(pred, inst.gold)))
    n = max(1, len(records))
    return {
        "precision": float(np.mean(precisions)) if precisions else 0.0,
        "recall": float(np.mean(recalls)) if recalls else 0.0,
        "f1": float(np.mean(f1s)) if f1s else 0.0,
        "em": sum(1 for _, em in records if em) / n,
        "human_prox": sum(1 for v, _ in records if v) / n,
        "without_em": without_em_rate(records),
    }


@dataclass
class MainStudyConfig:
    seed: int = 0
    rl_enabled: bool = True
    # under-train the SFT stage on a data fraction to leave RL headroom
    sft_fraction: float = 0.25
    sft: SFTConfig = dc_field(
        default_factory=lambda: SFTConfig(
            lr=1e-3, max_epochs=4, patience=4, batch_size=32, embed_dim=32, hidden_dim=32
        )
    )
    ppo: PPOConfig = dc_field(
        default_factory=lambda: PPOConfig(
            learning_rate=3e-3, kl_coef=0.2, batch_size=16, epochs=2
        )
    )
    eval_train: TrainConfig = dc_field(default_factory=TrainConfig)


def train_stages(
    train: Sequence[CausalInstance],
    dev: Sequence[CausalInstance],
    evaluator: EvaluatorModel,
    cfg: MainStudyConfig,
) -> tuple[PolicyModel, PolicyModel | None]:
    """SFT on a data fraction, then (optionally) PPO over the full train set."""
    n_sft = max(2, int(round(cfg.sft_fraction * len(train))))
    sft_cfg = copy.deepcopy(cfg.sft)
    sft_cfg.seed = cfg.seed
    sft_policy = sft_train(list(train[:n_sft]), sft_cfg, dev=dev)
    if not cfg.rl_enabled:
        return sft_policy, None
    ppo_cfg = copy.deepcopy(cfg.ppo)
    ppo_cfg.seed = cfg.seed
    rl_policy = copy.deepcopy(sft_policy)
    rl_policy, results = rl_train(rl_policy, EvaluatorReward(evaluator), list(train), ppo_cfg)
    applied = sum(1 for r in results if r.status == "applied")
    log.info("rl: %d/%d batches applied", applied, len(results))
    return sft_policy, rl_policy


def run_main_experiment(
    train: Sequence[CausalInstance],
    dev: Sequence[CausalInstance],
    test: Sequence[CausalInstance],
    labeled_train: Sequence[LabeledEvaluation],
    cfg: MainStudyConfig | None = None,
) -> dict:
    """SFT vs RL rows with automated metrics plus the evaluator-verdict rate."""
    cfg = cfg or MainStudyConfig()
    eval_cfg = copy.deepcopy(cfg.eval_train)
    eval_cfg.seed = cfg.seed
    evaluator = train_evaluator(labeled_train, eval_cfg)
    sft_policy, rl_policy = train_stages(train, dev, evaluator, cfg)
    rows = [{"model": "sft", **evaluate_policy(sft_policy, evaluator, test)}]
    if rl_policy is not None:
        rows.append({"model": "rl", **evaluate_policy(rl_policy, evaluator, test)})
    return {
        "rows": rows,
        "evaluator": evaluator,
        "sft_policy": sft_policy,
        "rl_policy": rl_policy,
    }


def run_weak_rl(
    train: Sequence[CausalInstance],
    dev: Sequence[CausalInstance],
    test: Sequence[CausalInstance],
    labeled_train: Sequence[LabeledEvaluation],
    x_grid: Sequence[float] = (0.3, 0.5, 0.8),
    keep_fraction: float = 0.75,
    cfg: MainStudyConfig | None = None,
) -> dict:
    """RL driven by weak evaluators built from x% seeds; x = 1.0 is the full run."""
    cfg = cfg or MainStudyConfig()
    eval_cfg = copy.deepcopy(cfg.eval_train)
    eval_cfg.seed = cfg.seed
    full_evaluator = train_evaluator(labeled_train, eval_cfg)
    sft_policy, rl_full = train_stages(train, dev, full_evaluator, cfg)
    rows = [
        {"x": "sft", **evaluate_policy(sft_policy, full_evaluator, test)},
        {"x": "1.0", **evaluate_policy(rl_full, full_evaluator, test)},
    ]
    reports = {}
    for x in x_grid:
        if x >= 1.0:
            continue
        weak_model, report = weak_to_strong_train(
            list(labeled_train),
            WeakConfig(x_percent=x, keep_fraction=keep_fraction, seed=cfg.seed),
            eval_cfg,
        )
        reports[x] = report
        ppo_cfg = copy.deepcopy(cfg.ppo)
        ppo_cfg.seed = cfg.seed
        rl_policy = copy.deepcopy(sft_policy)
        rl_policy, _ = rl_train(rl_policy, EvaluatorReward(weak_model), list(train), ppo_cfg)
        # scored with the full evaluator: the weak model drives training only
        rows.append({"x": f"{x:g}", **evaluate_policy(rl_policy, full_evaluator, test)})
    return {"rows": rows, "weak_reports": reports, "evaluator": full_evaluator}
