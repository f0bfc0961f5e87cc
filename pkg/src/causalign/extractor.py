"""Span-pointer extraction policy.

The policy reads a tokenized source passage and selects five categorical
actions in a fixed decode order: cause_start, cause_end, effect_start,
effect_end, relation. Feasibility masks enforce end >= start and cause/effect
disjointness, so every decoded extraction is a verbatim source span pair.
A bidirectional GRU encoder feeds four pointer heads (one score per source
position each), a relation head and a scalar value head over the mean-pooled
state. Everything runs in float64 on CPU; models are small by design.
"""

from __future__ import annotations

import copy
import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import torch
from torch import nn

from . import metrics
from .records import CausalInstance
from .tagged import Extraction, Relation

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
STEPS = ("cause_start", "cause_end", "effect_start", "effect_end", "relation")
RELATION_ORDER = (Relation.CAUSE, Relation.PREVENT, Relation.ENABLE)
UNK = "<unk>"


class InfeasibleSpanError(RuntimeError):
    """No feasible position remains at some decode step."""

    def __init__(self, step: str, message: str = ""):
        super().__init__(f"no feasible action at step {step}" + (f": {message}" if message else ""))
        self.step = step


class Token(NamedTuple):
    text: str
    start: int
    end: int


_TOKEN_RE = re.compile(r"\S+")


def tokenize_with_offsets(text: str, max_len: int = 128) -> list[Token]:
    tokens = [Token(m.group(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]
    if len(tokens) > max_len:
        log.warning("context of %d tokens truncated to %d", len(tokens), max_len)
        tokens = tokens[:max_len]
    return tokens


@dataclass(frozen=True)
class SpanAction:
    cause_start: int
    cause_end: int  # inclusive
    effect_start: int
    effect_end: int  # inclusive
    relation: Relation = Relation.CAUSE

    def validate(self, n: int) -> None:
        a = self
        if not (0 <= a.cause_start <= a.cause_end < n):
            raise ValueError(f"bad cause span [{a.cause_start}, {a.cause_end}] for n={n}")
        if not (0 <= a.effect_start <= a.effect_end < n):
            raise ValueError(f"bad effect span [{a.effect_start}, {a.effect_end}] for n={n}")
        if not (a.cause_end < a.effect_start or a.effect_end < a.cause_start):
            raise ValueError("cause and effect spans overlap")


@dataclass(frozen=True)
class TraceStep:
    name: str
    probs: np.ndarray  # post-masking distribution over the step's support
    chosen: int
    logp: float


@dataclass(frozen=True)
class ActionTrace:
    steps: tuple[TraceStep, ...]

    @property
    def total_logp(self) -> float:
        return float(sum(s.logp for s in self.steps))


class Vocab:
    """Lowercased token vocabulary with an unknown entry at index 0."""

    def __init__(self, tokens: Sequence[str]):
        self.itos = [UNK] + list(tokens)
        self.stoi = {t: i for i, t in enumerate(self.itos)}

    @classmethod
    def build(cls, contexts: Sequence[str], min_freq: int = 1, max_size: int = 20000) -> "Vocab":
        counts: dict[str, int] = {}
        for ctx in contexts:
            for tok in ctx.lower().split():
                counts[tok] = counts.get(tok, 0) + 1
        kept = [t for t, c in counts.items() if c >= min_freq]
        kept.sort(key=lambda t: (-counts[t], t))
        return cls(kept[:max_size])

    def __len__(self) -> int:
        return len(self.itos)

    def encode(self, tokens: Sequence[str]) -> torch.Tensor:
        return torch.tensor(
            [self.stoi.get(t.lower(), 0) for t in tokens], dtype=torch.long
        )


@dataclass
class PolicyConfig:
    embed_dim: int = 64
    hidden_dim: int = 64
    max_len: int = 128
    fixed_relation: bool = False  # restrict the relation head to `cause`
    seed: int = 0


class PolicyModel(nn.Module):
    def __init__(self, vocab: Vocab, config: PolicyConfig):
        super().__init__()
        self.vocab = vocab
        self.config = config
        torch.manual_seed(config.seed)
        self.embedding = nn.Embedding(len(vocab), config.embed_dim)
        self.position = nn.Embedding(config.max_len, config.embed_dim)
        self.encoder = nn.GRU(
            config.embed_dim, config.hidden_dim, bidirectional=True, batch_first=True
        )
        self.pointer_heads = nn.Linear(2 * config.hidden_dim, 4)
        self.relation_head = nn.Linear(2 * config.hidden_dim, len(RELATION_ORDER))
        self.value_head = nn.Linear(2 * config.hidden_dim, 1)
        self.double()

    def forward(self, token_ids: torch.Tensor):
        """Returns (pointer_scores [n, 4], relation_scores [3], value scalar)."""
        n = token_ids.shape[0]
        positions = torch.arange(n, dtype=torch.long)
        x = self.embedding(token_ids) + self.position(positions)
        states, _ = self.encoder(x.unsqueeze(0))
        states = states.squeeze(0)  # [n, 2H]
        pooled = states.mean(dim=0)
        return self.pointer_heads(states), self.relation_head(pooled), self.value_head(pooled)[0]

    def save(self, path: str | Path) -> None:
        from .records import atomic_write_text

        payload = {
            "format": "causalign-policy",
            "version": FORMAT_VERSION,
            "config": {
                "embed_dim": self.config.embed_dim,
                "hidden_dim": self.config.hidden_dim,
                "max_len": self.config.max_len,
                "fixed_relation": self.config.fixed_relation,
                "seed": self.config.seed,
            },
            "vocab": self.vocab.itos[1:],  # UNK is implicit at index 0
            "params": {
                name: tensor.detach().numpy().tolist()
                for name, tensor in self.state_dict().items()
            },
        }
        atomic_write_text(path, json.dumps(payload, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "PolicyModel":
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
        if data.get("format") != "causalign-policy":
            raise ValueError(f"{path}: not a policy model file")
        if data.get("version") != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported version {data.get('version')}")
        model = cls(Vocab(data["vocab"]), PolicyConfig(**data["config"]))
        state = {
            name: torch.tensor(values, dtype=torch.float64)
            for name, values in data["params"].items()
        }
        model.load_state_dict(state)
        return model


def step_mask(step: str, partial: dict, n: int, fixed_relation: bool) -> np.ndarray:
    """Boolean feasibility mask for one decode step given earlier choices."""
    if step == "relation":
        mask = np.ones(len(RELATION_ORDER), dtype=bool)
        if fixed_relation:
            mask[:] = False
            mask[RELATION_ORDER.index(Relation.CAUSE)] = True
        return mask
    mask = np.zeros(n, dtype=bool)
    if step == "cause_start":
        if n >= 2:
            mask[:] = True
    elif step == "cause_end":
        cs = partial["cause_start"]
        hi = n - 1 if cs > 0 else n - 2  # cause at offset 0 must leave room after
        mask[cs : hi + 1] = True
    elif step == "effect_start":
        cs, ce = partial["cause_start"], partial["cause_end"]
        mask[:] = True
        mask[cs : ce + 1] = False
    elif step == "effect_end":
        cs, es = partial["cause_start"], partial["effect_start"]
        if es < cs:
            mask[es:cs] = True
        else:
            mask[es:] = True
    else:
        raise ValueError(f"unknown step {step!r}")
    return mask


def _masked_log_probs(scores: torch.Tensor, mask: np.ndarray, step: str) -> torch.Tensor:
    if not mask.any():
        raise InfeasibleSpanError(step)
    masked = scores.masked_fill(torch.from_numpy(~mask), -torch.inf)
    return torch.log_softmax(masked, dim=0)


def _action_value(action: SpanAction, step: str) -> int:
    if step == "relation":
        return RELATION_ORDER.index(Relation(action.relation))
    return getattr(action, step)


def action_log_probs(model: PolicyModel, token_ids: torch.Tensor, action: SpanAction) -> torch.Tensor:
    """Differentiable sum of the five masked log-probabilities of ``action``."""
    n = token_ids.shape[0]
    action.validate(n)
    pointer_scores, relation_scores, _ = model(token_ids)
    partial: dict[str, int] = {}
    total = torch.zeros((), dtype=torch.float64)
    for k, step in enumerate(STEPS):
        scores = relation_scores if step == "relation" else pointer_scores[:, k]
        mask = step_mask(step, partial, n, model.config.fixed_relation)
        log_probs = _masked_log_probs(scores, mask, step)
        value = _action_value(action, step)
        if not mask[value]:
            raise InfeasibleSpanError(step, f"action value {value} is masked")
        total = total + log_probs[value]
        partial[step] = value
    return total


def _decode(
    model: PolicyModel,
    token_ids: torch.Tensor,
    pick,  # (probs: np.ndarray) -> int
) -> tuple[SpanAction, ActionTrace]:
    n = token_ids.shape[0]
    with torch.no_grad():
        pointer_scores, relation_scores, _ = model(token_ids)
    partial: dict[str, int] = {}
    steps = []
    for k, step in enumerate(STEPS):
        scores = relation_scores if step == "relation" else pointer_scores[:, k]
        mask = step_mask(step, partial, n, model.config.fixed_relation)
        log_probs = _masked_log_probs(scores, mask, step)
        probs = torch.exp(log_probs).numpy()
        chosen = int(pick(probs))
        if probs[chosen] <= 0.0:
            raise InfeasibleSpanError(step, f"picked masked value {chosen}")
        steps.append(
            TraceStep(name=step, probs=probs, chosen=chosen, logp=float(log_probs[chosen]))
        )
        partial[step] = chosen
    action = SpanAction(
        cause_start=partial["cause_start"],
        cause_end=partial["cause_end"],
        effect_start=partial["effect_start"],
        effect_end=partial["effect_end"],
        relation=RELATION_ORDER[partial["relation"]],
    )
    return action, ActionTrace(steps=tuple(steps))


def action_distributions(
    model: PolicyModel, tokens: Sequence[Token], partial: dict | None = None
) -> dict[str, np.ndarray]:
    """Masked distribution of the next undecided step given the partial action.

    ``partial`` maps already-decided step names to their chosen indices and
    must form a prefix of the decode order. Later steps are not returned:
    their masks depend on the outcome of this one.
    """
    token_ids = model.vocab.encode([t.text for t in tokens])
    n = len(tokens)
    with torch.no_grad():
        pointer_scores, relation_scores, _ = model(token_ids)
    partial = dict(partial or {})
    for k, step in enumerate(STEPS):
        if step in partial:
            continue
        scores = relation_scores if step == "relation" else pointer_scores[:, k]
        mask = step_mask(step, partial, n, model.config.fixed_relation)
        return {step: torch.exp(_masked_log_probs(scores, mask, step)).numpy()}
    return {}


def assemble_extraction(context: str, tokens: Sequence[Token], action: SpanAction) -> Extraction:
    """Surface substrings between the first and last token offsets of each span."""
    action.validate(len(tokens))
    cause = context[tokens[action.cause_start].start : tokens[action.cause_end].end]
    effect = context[tokens[action.effect_start].start : tokens[action.effect_end].end]
    return Extraction(cause=cause, effect=effect, relation=Relation(action.relation))


def decode_greedy(model: PolicyModel, context: str) -> tuple[Extraction, ActionTrace]:
    """Argmax at each step; ties resolve to the lowest index."""
    tokens = tokenize_with_offsets(context, model.config.max_len)
    if not tokens:
        raise InfeasibleSpanError("cause_start", "empty context")
    token_ids = model.vocab.encode([t.text for t in tokens])
    action, trace = _decode(model, token_ids, pick=np.argmax)
    return assemble_extraction(context, tokens, action), trace


def sample_actions(
    model: PolicyModel, context: str, rng: np.random.Generator
) -> tuple[SpanAction, ActionTrace]:
    tokens = tokenize_with_offsets(context, model.config.max_len)
    if not tokens:
        raise InfeasibleSpanError("cause_start", "empty context")
    token_ids = model.vocab.encode([t.text for t in tokens])

    def pick(probs: np.ndarray) -> int:
        return int(rng.choice(len(probs), p=probs / probs.sum()))

    return _decode(model, token_ids, pick=pick)


def trace_action(model: PolicyModel, token_ids: torch.Tensor, action: SpanAction) -> ActionTrace:
    """Trace of a fixed action under ``model`` (used for the frozen reference)."""
    values = {
        step: _action_value(action, step) for step in STEPS
    }
    n = token_ids.shape[0]
    with torch.no_grad():
        pointer_scores, relation_scores, _ = model(token_ids)
    partial: dict[str, int] = {}
    steps = []
    for k, step in enumerate(STEPS):
        scores = relation_scores if step == "relation" else pointer_scores[:, k]
        mask = step_mask(step, partial, n, model.config.fixed_relation)
        log_probs = _masked_log_probs(scores, mask, step)
        probs = torch.exp(log_probs).numpy()
        chosen = values[step]
        if not mask[chosen]:
            raise InfeasibleSpanError(step, f"action value {chosen} is masked")
        steps.append(
            TraceStep(name=step, probs=probs, chosen=chosen, logp=float(log_probs[chosen]))
        )
        partial[step] = chosen
    return ActionTrace(steps=tuple(steps))


# ---------------------------------------------------------------------------
# Gold span alignment and supervised training


def _norm_token(tok: str) -> str:
    import unicodedata

    tok = tok.lower()
    start, end = 0, len(tok)
    while start < end and unicodedata.category(tok[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(tok[end - 1]).startswith("P"):
        end -= 1
    return tok[start:end]


def find_token_span(context_tokens: Sequence[str], span_text: str) -> tuple[int, int] | None:
    """First token range whose normalized tokens equal the span's; None if absent."""
    span_tokens = span_text.split()
    if not span_tokens:
        return None
    for normalize in (str.lower, _norm_token):
        ctx = [normalize(t) for t in context_tokens]
        pat = [normalize(t) for t in span_tokens]
        width = len(pat)
        for i in range(len(ctx) - width + 1):
            if ctx[i : i + width] == pat:
                return i, i + width - 1  # inclusive end
    return None


def align_gold_action(inst: CausalInstance, max_len: int = 128) -> SpanAction | None:
    """Map gold texts to a feasible SpanAction, or None when alignment fails."""
    tokens = [t.text for t in tokenize_with_offsets(inst.context, max_len)]
    cause = find_token_span(tokens, inst.gold.cause)
    effect = find_token_span(tokens, inst.gold.effect)
    if cause is None or effect is None:
        return None
    action = SpanAction(
        cause_start=cause[0],
        cause_end=cause[1],
        effect_start=effect[0],
        effect_end=effect[1],
        relation=Relation(inst.gold.relation),
    )
    try:
        action.validate(len(tokens))
    except ValueError:
        return None
    return action


@dataclass
class SFTConfig:
    lr: float = 1e-4
    max_epochs: int = 20
    patience: int = 5  # epochs without dev token-F1 improvement
    batch_size: int = 32
    embed_dim: int = 64
    hidden_dim: int = 64
    max_len: int = 128
    fixed_relation: bool = False
    seed: int = 0


def evaluate_token_f1(model: PolicyModel, instances: Sequence[CausalInstance]) -> float:
    """Mean macro token-F1 of greedy decodes against gold."""
    scores = []
    for inst in instances:
        try:
            pred, _ = decode_greedy(model, inst.context)
        except InfeasibleSpanError:
            scores.append(0.0)
            continue
        scores.append(metrics.token_prf(pred, inst.gold).f1)
    return float(np.mean(scores)) if scores else 0.0


def sft_batch_loss(
    model: PolicyModel, batch: Sequence[tuple[torch.Tensor, SpanAction]]
) -> torch.Tensor:
    """Mean negative log-likelihood of gold actions under the masked decode."""
    total = torch.zeros((), dtype=torch.float64)
    for token_ids, action in batch:
        total = total - action_log_probs(model, token_ids, action)
    return total / len(batch)


def prepare_sft_items(
    instances: Sequence[CausalInstance], vocab: Vocab, max_len: int
) -> list[tuple[torch.Tensor, SpanAction]]:
    items = []
    skipped = 0
    for inst in instances:
        action = align_gold_action(inst, max_len)
        if action is None:
            skipped += 1
            continue
        tokens = [t.text for t in tokenize_with_offsets(inst.context, max_len)]
        items.append((vocab.encode(tokens), action))
    if skipped:
        log.warning("skipped %d instances with unalignable gold spans", skipped)
    return items


def sft_train(
    data: Sequence[CausalInstance],
    config: SFTConfig | None = None,
    dev: Sequence[CausalInstance] | None = None,
) -> PolicyModel:
    """Supervised training on gold span endpoints and relation."""
    config = config or SFTConfig()
    vocab = Vocab.build([x.context for x in data])
    model = PolicyModel(vocab, PolicyConfig(
        embed_dim=config.embed_dim,
        hidden_dim=config.hidden_dim,
        max_len=config.max_len,
        fixed_relation=config.fixed_relation,
        seed=config.seed,
    ))
    items = prepare_sft_items(data, vocab, config.max_len)
    if not items:
        raise ValueError("no usable training instances after alignment")
    dev_instances = list(dev) if dev else list(data)

    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr)
    rng = np.random.default_rng(config.seed)
    best_f1 = -1.0
    best_state = copy.deepcopy(model.state_dict())
    since_best = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(items))
        for lo in range(0, len(items), config.batch_size):
            batch = [items[i] for i in order[lo : lo + config.batch_size]]
            loss = sft_batch_loss(model, batch)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
        f1 = evaluate_token_f1(model, dev_instances)
        if f1 > best_f1:
            best_f1 = f1
            best_state = copy.deepcopy(model.state_dict())
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break
    model.load_state_dict(best_state)
    return model
