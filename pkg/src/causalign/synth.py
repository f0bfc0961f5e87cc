"""Synthetic oracle corpus for desk-scale experiments.

Contexts are built from disjoint cause/effect word pools joined by a
relation-bearing connective, padded with ambiguous filler. Gold spans carry
deliberate boundary noise (a filler token randomly folded in), so exact
matches are rare even for a perfect extractor while rule-valid spans remain
learnable — the ambiguity the whole pipeline is about.

Validity of a (source, reference, output) triple is rule-defined: every
output token must come from the source, numeric tokens must appear in the
source, and each field's token F1 against the reference must clear a
threshold. The rule is the ground-truth "human" used by the acceptance
experiments.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .evaluator import _is_numeric
from .metrics import field_prf, normalize_tokens
from .records import CausalInstance, EvaluationInput, LabeledEvaluation
from .tagged import Extraction, Relation

CAUSE_WORDS = [
    "drought", "tariffs", "outage", "layoffs", "frost", "shortage", "strike",
    "recall", "flooding", "inflation", "overfishing", "smog", "drilling",
    "poaching", "austerity", "embargo", "subsidies", "leakage", "congestion",
    "rationing",
]
EFFECT_WORDS = [
    "prices", "wages", "sales", "yields", "traffic", "exports", "margins",
    "enrolment", "attendance", "turnout", "revenue", "backlog", "delays",
    "closures", "savings", "premiums", "queues", "demand", "output", "imports",
]
FILLER_WORDS = [
    "reportedly", "notably", "persistent", "regional", "ongoing", "sudden",
    "widespread", "seasonal", "unexpected", "modest", "gradual", "renewed",
]
OOV_WORDS = ["synergy", "blockchain", "unicorn", "quantum", "paradigm", "metaverse"]

CONNECTIVES = {
    Relation.CAUSE: ["caused", "drove", "triggered", "raised"],
    Relation.PREVENT: ["prevented", "blocked", "averted", "curbed"],
    Relation.ENABLE: ["enabled", "allowed", "facilitated", "boosted"],
}


@dataclass
class SynthConfig:
    f1_threshold: float = 0.6
    require_containment: bool = True
    require_numbers: bool = True
    boundary_noise: float = 0.5  # chance a gold span absorbs an adjacent filler token
    number_prob: float = 0.35  # chance a core carries a numeric token
    relation_mix: tuple[float, float, float] = (0.6, 0.2, 0.2)  # cause/prevent/enable
    min_core: int = 3
    max_core: int = 6


def _number_token(rng: np.random.Generator) -> str:
    kind = rng.integers(0, 3)
    if kind == 0:
        return f"${rng.integers(1, 99)}.{rng.integers(0, 10)}"
    if kind == 1:
        return f"{rng.integers(1990, 2030)}"
    return f"{rng.integers(1, 99)}.{rng.integers(0, 10)}%"


def _corrupt_number(token: str, rng: np.random.Generator) -> str:
    digits = [i for i, ch in enumerate(token) if ch.isdigit()]
    i = int(rng.choice(digits))
    old = token[i]
    new = str((int(old) + int(rng.integers(1, 9))) % 10)
    return token[:i] + new + token[i + 1 :]


def _core(words: list[str], cfg: SynthConfig, rng: np.random.Generator) -> list[str]:
    k = int(rng.integers(cfg.min_core, cfg.max_core + 1))
    core = [str(w) for w in rng.choice(words, size=k, replace=False)]
    if rng.random() < cfg.number_prob:
        core.insert(int(rng.integers(0, len(core) + 1)), _number_token(rng))
    return core


def gen_instance(
    idx: int, rng: np.random.Generator, split: str = "train", cfg: SynthConfig | None = None
) -> CausalInstance:
    cfg = cfg or SynthConfig()
    relation = [Relation.CAUSE, Relation.PREVENT, Relation.ENABLE][
        int(rng.choice(3, p=list(cfg.relation_mix)))
    ]
    prefix = [str(w) for w in rng.choice(FILLER_WORDS, size=int(rng.integers(1, 4)), replace=False)]
    suffix = [str(w) for w in rng.choice(FILLER_WORDS, size=int(rng.integers(1, 4)), replace=False)]
    cause_core = _core(CAUSE_WORDS, cfg, rng)
    effect_core = _core(EFFECT_WORDS, cfg, rng)
    connective = str(rng.choice(CONNECTIVES[relation]))

    tokens = prefix + cause_core + [connective] + effect_core + suffix
    c_start, c_end = len(prefix), len(prefix) + len(cause_core)
    e_start = c_end + 1
    e_end = e_start + len(effect_core)

    # Boundary noise: gold may absorb the filler token next to a core.
    if rng.random() < cfg.boundary_noise and c_start > 0:
        c_start -= 1
    if rng.random() < cfg.boundary_noise and e_end < len(tokens):
        e_end += 1

    context = " ".join(tokens)
    gold = Extraction(
        cause=" ".join(tokens[c_start:c_end]),
        effect=" ".join(tokens[e_start:e_end]),
        relation=relation,
    )
    return CausalInstance(
        id=f"synth-{split}-{idx:05d}", context=context, gold=gold, split=split
    )


def gen_instances(
    n: int, seed: int, split: str = "train", cfg: SynthConfig | None = None
) -> list[CausalInstance]:
    rng = np.random.default_rng(seed)
    return [gen_instance(i, rng, split=split, cfg=cfg) for i in range(n)]


def gen_corpus(
    n_train: int, n_dev: int, n_test: int, seed: int, cfg: SynthConfig | None = None
) -> list[CausalInstance]:
    """Train/dev/test instances from a single seed (distinct sub-seeds per split)."""
    out = gen_instances(n_train, seed, "train", cfg)
    out += gen_instances(n_dev, seed + 1, "dev", cfg)
    out += gen_instances(n_test, seed + 2, "test", cfg)
    return out


def rule_validity(
    source: str,
    reference: Extraction,
    output: Extraction,
    cfg: SynthConfig | None = None,
) -> bool:
    """The oracle: containment in source, numbers grounded, per-field F1 over threshold."""
    cfg = cfg or SynthConfig()
    src_tokens = normalize_tokens(source)
    src_set = set(src_tokens)
    out_cause = normalize_tokens(output.cause)
    out_effect = normalize_tokens(output.effect)
    if cfg.require_containment:
        if any(t not in src_set for t in out_cause + out_effect):
            return False
    if cfg.require_numbers:
        src_numbers = {t for t in src_tokens if _is_numeric(t)}
        if any(
            _is_numeric(t) and t not in src_numbers for t in out_cause + out_effect
        ):
            return False
    ref_cause = normalize_tokens(reference.cause)
    ref_effect = normalize_tokens(reference.effect)
    if field_prf(out_cause, ref_cause).f1 < cfg.f1_threshold:
        return False
    if field_prf(out_effect, ref_effect).f1 < cfg.f1_threshold:
        return False
    return True


def _span_location(context_tokens: list[str], span_tokens: list[str]) -> tuple[int, int]:
    for i in range(len(context_tokens) - len(span_tokens) + 1):
        if context_tokens[i : i + len(span_tokens)] == span_tokens:
            return i, i + len(span_tokens)
    raise ValueError("gold span not found in context")


def _mild(tokens: list[str], lo: int, hi: int, rng: np.random.Generator) -> list[str]:
    """Drop one boundary token or absorb up to two adjacent context tokens."""
    span = tokens[lo:hi]
    move = rng.random()
    if move < 0.4 and hi - lo > 2:
        return span[1:] if rng.random() < 0.5 else span[:-1]
    grow = int(rng.integers(1, 3))
    if rng.random() < 0.5 and lo - grow >= 0:
        return tokens[lo - grow : hi]
    if hi + grow <= len(tokens):
        return tokens[lo : hi + grow]
    if lo > 0:
        return tokens[lo - 1 : hi]
    return span


def _severe(tokens: list[str], lo: int, hi: int, rng: np.random.Generator) -> list[str]:
    """Truncate to a single token or shift the span into unrelated context."""
    if rng.random() < 0.5:
        return [tokens[int(rng.integers(lo, hi))]]
    width = hi - lo
    candidates = [
        s
        for s in range(0, len(tokens) - width + 1)
        if s + width <= lo or s >= hi
    ]
    if not candidates:
        return [tokens[lo]]
    s = int(rng.choice(candidates))
    return tokens[s : s + width]


def perturb_output(
    inst: CausalInstance, kind: str, rng: np.random.Generator
) -> Extraction:
    """Build a model-output-like Extraction of the given perturbation kind."""
    tokens = inst.context.split()
    c_lo, c_hi = _span_location(tokens, inst.gold.cause.split())
    e_lo, e_hi = _span_location(tokens, inst.gold.effect.split())
    relation = inst.gold.relation
    if kind != "exact" and rng.random() < 0.1:
        others = [r for r in Relation if r != relation]
        relation = others[int(rng.integers(0, len(others)))]

    if kind == "exact":
        return inst.gold
    if kind == "mild":
        cause = _mild(tokens, c_lo, c_hi, rng)
        effect = _mild(tokens, e_lo, e_hi, rng)
    elif kind == "severe":
        if rng.random() < 0.5:
            cause = _severe(tokens, c_lo, c_hi, rng)
            effect = _mild(tokens, e_lo, e_hi, rng)
        else:
            cause = _mild(tokens, c_lo, c_hi, rng)
            effect = _severe(tokens, e_lo, e_hi, rng)
    elif kind == "hallucinate":
        cause = _mild(tokens, c_lo, c_hi, rng)
        effect = _mild(tokens, e_lo, e_hi, rng)
        side = cause if rng.random() < 0.5 else effect
        for _ in range(int(rng.integers(1, 3))):
            side[int(rng.integers(0, len(side)))] = str(rng.choice(OOV_WORDS))
    elif kind == "number":
        cause = tokens[c_lo:c_hi]
        effect = tokens[e_lo:e_hi]
        numeric_slots = [
            (side, i)
            for side in (cause, effect)
            for i, t in enumerate(side)
            if _is_numeric(t)
        ]
        if not numeric_slots:
            side = cause if rng.random() < 0.5 else effect
            side[int(rng.integers(0, len(side)))] = str(rng.choice(OOV_WORDS))
        else:
            side, i = numeric_slots[int(rng.integers(0, len(numeric_slots)))]
            side[i] = _corrupt_number(side[i], rng)
    else:
        raise ValueError(f"unknown perturbation kind {kind!r}")
    return Extraction(cause=" ".join(cause), effect=" ".join(effect), relation=relation)


PERTURBATION_MIX = [
    ("exact", 0.12),
    ("mild", 0.38),
    ("severe", 0.20),
    ("hallucinate", 0.15),
    ("number", 0.15),
]


def gen_labeled(
    instances: Sequence[CausalInstance],
    seed: int,
    cfg: SynthConfig | None = None,
) -> list[LabeledEvaluation]:
    """One perturbed output per instance, verdict assigned by the rule oracle."""
    cfg = cfg or SynthConfig()
    rng = np.random.default_rng(seed)
    kinds = [k for k, _ in PERTURBATION_MIX]
    probs = [p for _, p in PERTURBATION_MIX]
    out = []
    for inst in instances:
        kind = kinds[int(rng.choice(len(kinds), p=probs))]
        output = perturb_output(inst, kind, rng)
        inp = EvaluationInput(source=inst.context, reference=inst.gold, output=output)
        out.append(
            LabeledEvaluation(
                input=inp,
                verdict=rule_validity(inst.context, inst.gold, output, cfg),
                id=f"{inst.id}-out",
            )
        )
    return out
