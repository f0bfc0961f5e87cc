"""PPO alignment of the extraction policy with an evaluator reward.

Rollouts are sampled from the current policy; the reward model scores the
assembled extraction against the source and gold reference at the sequence
level. Per-instance KL against a frozen reference policy is subtracted from
the reward before the advantage is formed, and any batch whose mean KL
exceeds the skip threshold is discarded without touching the parameters —
batches that drift too far from the reference are where training blows up.
"""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch

from .evaluator import EvaluatorModel, predict
from .extractor import (
    ActionTrace,
    InfeasibleSpanError,
    PolicyModel,
    SpanAction,
    action_log_probs,
    assemble_extraction,
    sample_actions,
    tokenize_with_offsets,
    trace_action,
)
from .metrics import trigram_cosine
from .records import CausalInstance, EvaluationInput
from .tagged import Extraction, serialize_extraction

log = logging.getLogger(__name__)

# Initial KL coefficients by dataset.
DATASET_KL_COEF = {"fcr": 0.4, "scite": 0.2, "fincausal": 0.05}

RewardFn = Callable[[str, Extraction, Extraction], float]


class EvaluatorReward:
    """Learned reward: the evaluator's validity probability."""

    def __init__(self, model: EvaluatorModel):
        self.model = model

    def __call__(self, source: str, reference: Extraction, output: Extraction) -> float:
        return predict(
            self.model, EvaluationInput(source=source, reference=reference, output=output)
        ).p_valid


class SimilarityReward:
    """Baseline reward: character-trigram cosine of the tagged strings."""

    def __call__(self, source: str, reference: Extraction, output: Extraction) -> float:
        return trigram_cosine(
            serialize_extraction(output.normalized()),
            serialize_extraction(reference.normalized()),
        )


def compute_reward(
    reward_fn: RewardFn, source: str, reference: Extraction, output: Extraction
) -> float:
    """Sequence-level scalar reward in [0, 1]."""
    r = float(reward_fn(source, reference, output))
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"reward {r} outside [0, 1]")
    return r


def kl_divergence(policy_trace: ActionTrace, ref_trace: ActionTrace) -> float:
    """Sum over decode steps of KL(policy || reference) on the feasible support.

    Returns inf when the reference puts zero mass where the policy does not
    (treated as above any skip threshold). Raises on mask mismatch.
    """
    if len(policy_trace.steps) != len(ref_trace.steps):
        raise ValueError("traces have different numbers of steps")
    total = 0.0
    for sp, sq in zip(policy_trace.steps, ref_trace.steps):
        p, q = sp.probs, sq.probs
        if sp.name != sq.name or p.shape != q.shape:
            raise ValueError(f"step mismatch: {sp.name}/{p.shape} vs {sq.name}/{q.shape}")
        support = p > 0.0
        if (support != (q > 0.0)).any():
            if (support & (q == 0.0)).any():
                return math.inf
            raise ValueError(f"mask mismatch at step {sp.name}")
        total += float(np.sum(p[support] * np.log(p[support] / q[support])))
    return max(0.0, total)


@dataclass
class PPOConfig:
    learning_rate: float = 1.4e-4
    kl_coef: float = 0.2
    clip_epsilon: float = 0.2
    kl_skip_threshold: float = 2.0
    batch_size: int = 32
    epochs: int = 1
    value_loss_coef: float = 0.5
    seed: int = 0
    normalize_rewards: bool = False  # per-batch centering, off by default
    scale_rewards: bool = False  # per-batch std scaling, off by default

    @classmethod
    def for_dataset(cls, dataset: str, **overrides) -> "PPOConfig":
        kl = DATASET_KL_COEF.get(dataset.lower())
        if kl is None:
            raise ValueError(
                f"unknown dataset {dataset!r}; expected one of {sorted(DATASET_KL_COEF)}"
            )
        overrides.setdefault("kl_coef", kl)
        return cls(**overrides)


@dataclass(frozen=True)
class RolloutItem:
    instance: CausalInstance
    action: SpanAction
    policy_trace: ActionTrace
    ref_trace: ActionTrace
    reward: float
    value_estimate: float
    token_ids: torch.Tensor
    kl: float


@dataclass
class UpdateResult:
    status: str  # "applied" | "skipped"
    mean_reward: float
    mean_kl: float
    policy_loss: float = math.nan
    value_loss: float = math.nan
    batch_index: int = -1

    def to_record(self) -> dict:
        return {
            "batch": self.batch_index,
            "status": self.status,
            "mean_reward": self.mean_reward,
            "mean_kl": self.mean_kl,
            "policy_loss": None if math.isnan(self.policy_loss) else self.policy_loss,
            "value_loss": None if math.isnan(self.value_loss) else self.value_loss,
        }


class PPONumericsError(RuntimeError):
    """Non-finite loss; the offending batch statistics ride along."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(f"{message}; diagnostics: {diagnostics}")
        self.diagnostics = diagnostics


def collect_rollouts(
    policy: PolicyModel,
    reference: PolicyModel,
    instances: Sequence[CausalInstance],
    reward_fn: RewardFn,
    rng: np.random.Generator,
) -> list[RolloutItem]:
    """Sample one action per instance under the current policy snapshot."""
    items = []
    for inst in instances:
        try:
            action, trace = sample_actions(policy, inst.context, rng)
        except InfeasibleSpanError as exc:
            log.warning("skipping instance %s: %s", inst.id, exc)
            continue
        tokens = tokenize_with_offsets(inst.context, policy.config.max_len)
        token_ids = policy.vocab.encode([t.text for t in tokens])
        ref_trace = trace_action(reference, token_ids, action)
        output = assemble_extraction(inst.context, tokens, action)
        reward = compute_reward(reward_fn, inst.context, inst.gold, output)
        with torch.no_grad():
            _, _, value = policy(token_ids)
        items.append(
            RolloutItem(
                instance=inst,
                action=action,
                policy_trace=trace,
                ref_trace=ref_trace,
                reward=reward,
                value_estimate=float(value),
                token_ids=token_ids,
                kl=kl_divergence(trace, ref_trace),
            )
        )
    return items


def _adjusted_rewards(batch: Sequence[RolloutItem], cfg: PPOConfig) -> np.ndarray:
    rewards = np.array([item.reward for item in batch], dtype=np.float64)
    if cfg.normalize_rewards:
        rewards = rewards - rewards.mean()
    if cfg.scale_rewards:
        std = rewards.std()
        if std > 1e-9:
            rewards = rewards / std
    return rewards


def ppo_losses(
    policy: PolicyModel, batch: Sequence[RolloutItem], cfg: PPOConfig
) -> tuple[torch.Tensor, torch.Tensor]:
    """Clipped-surrogate policy loss and value MSE for one rollout batch."""
    rewards = _adjusted_rewards(batch, cfg)
    surrogates = []
    value_errors = []
    for item, reward in zip(batch, rewards):
        target = reward - cfg.kl_coef * item.kl
        advantage = target - item.value_estimate
        logp_new = action_log_probs(policy, item.token_ids, item.action)
        logp_old = item.policy_trace.total_logp
        ratio = torch.exp(logp_new - logp_old)
        clipped = torch.clamp(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon)
        surrogates.append(torch.minimum(ratio * advantage, clipped * advantage))
        _, _, value = policy(item.token_ids)
        value_errors.append((value - target) ** 2)
    policy_loss = -torch.stack(surrogates).mean()
    value_loss = torch.stack(value_errors).mean()
    return policy_loss, value_loss


def ppo_step(
    policy: PolicyModel,
    reference: PolicyModel,
    batch: Sequence[RolloutItem],
    cfg: PPOConfig,
    optimizer: torch.optim.Optimizer | None = None,
) -> UpdateResult:
    """One PPO update, or a skip when the batch's mean KL is over threshold."""
    if not batch:
        return UpdateResult(status="skipped", mean_reward=math.nan, mean_kl=math.nan)
    mean_reward = float(np.mean([item.reward for item in batch]))
    mean_kl = float(np.mean([item.kl for item in batch]))
    # ">=" so a zero threshold skips even the first batch, whose KL against
    # the fresh reference copy is exactly zero.
    if mean_kl >= cfg.kl_skip_threshold:
        return UpdateResult(status="skipped", mean_reward=mean_reward, mean_kl=mean_kl)

    policy_loss, value_loss = ppo_losses(policy, batch, cfg)
    total = policy_loss + cfg.value_loss_coef * value_loss
    if not torch.isfinite(total):
        raise PPONumericsError(
            "non-finite PPO loss",
            {
                "mean_reward": mean_reward,
                "mean_kl": mean_kl,
                "policy_loss": float(policy_loss.detach()),
                "value_loss": float(value_loss.detach()),
            },
        )
    if optimizer is None:
        policy.zero_grad()
        total.backward()
        with torch.no_grad():
            for param in policy.parameters():
                if param.grad is not None:
                    param -= cfg.learning_rate * param.grad
        policy.zero_grad()
    else:
        optimizer.zero_grad()
        total.backward()
        optimizer.step()
    return UpdateResult(
        status="applied",
        mean_reward=mean_reward,
        mean_kl=mean_kl,
        policy_loss=float(policy_loss.detach()),
        value_loss=float(value_loss.detach()),
    )


def rl_train(
    policy: PolicyModel,
    reward_fn: RewardFn,
    data: Sequence[CausalInstance],
    cfg: PPOConfig,
    use_adam: bool = True,
) -> tuple[PolicyModel, list[UpdateResult]]:
    """PPO over shuffled batches; the reference is a frozen copy of the input policy."""
    reference = copy.deepcopy(policy)
    for param in reference.parameters():
        param.requires_grad_(False)
    optimizer = (
        torch.optim.Adam(policy.parameters(), lr=cfg.learning_rate) if use_adam else None
    )
    rng = np.random.default_rng(cfg.seed)
    results: list[UpdateResult] = []
    batch_index = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(len(data))
        for lo in range(0, len(data), cfg.batch_size):
            instances = [data[i] for i in order[lo : lo + cfg.batch_size]]
            batch = collect_rollouts(policy, reference, instances, reward_fn, rng)
            result = ppo_step(policy, reference, batch, cfg, optimizer)
            result.batch_index = batch_index
            results.append(result)
            batch_index += 1
    return policy, results
