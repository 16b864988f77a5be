"""Group-relative advantage and clipped-surrogate objective values.

This is a reference numerical core for validating reward pipelines: rewards
standardized within a rollout group, and the clipped importance-sampling
objective with a KL penalty evaluated on supplied per-token statistics. No
model, no gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

from .records import RolloutGroup, Trajectory
from .verify import VerifierOutcome, extract_boxed, verify_two_way


@dataclass(frozen=True)
class GrpoConfig:
    epsilon: float = 0.2
    beta: float = 0.001  # KL penalty weight
    std_floor: float = 1e-8  # below this the group is degenerate

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.std_floor < 0:
            raise ValueError("std_floor must be nonnegative")


@dataclass(frozen=True)
class AdvantageResult:
    advantages: tuple[float, ...]
    mean: float
    std: float
    degenerate: bool


def group_advantage(rewards: Sequence[float], cfg: GrpoConfig = GrpoConfig()) -> AdvantageResult:
    """Standardize rewards within the group: (r_i - mean) / std.

    Population statistics (divide by G). Groups whose std falls below
    cfg.std_floor carry no learning signal and get all-zero advantages
    instead of an error.
    """
    if len(rewards) == 0:
        raise ValueError("empty reward list")
    g = len(rewards)
    vals = [float(r) for r in rewards]
    if any(not math.isfinite(v) for v in vals):
        raise ValueError("non-finite reward")
    mean = math.fsum(vals) / g
    var = math.fsum((v - mean) ** 2 for v in vals) / g
    std = math.sqrt(var)
    if std < cfg.std_floor:
        return AdvantageResult(advantages=(0.0,) * g, mean=mean, std=std, degenerate=True)
    return AdvantageResult(
        advantages=tuple((v - mean) / std for v in vals),
        mean=mean,
        std=std,
        degenerate=False,
    )


def surrogate_objective(
    group: RolloutGroup,
    advantages: Sequence[float],
    cfg: GrpoConfig = GrpoConfig(),
) -> float:
    """Clipped-surrogate objective value for one rollout group.

    (1/G) sum_i (1/|o_i|) sum_t [ min(rho*A_i, clip(rho, 1-eps, 1+eps)*A_i)
    - beta * KL_{i,t} ]. Ratios must be present; KL terms are optional and
    contribute only when beta > 0.
    """
    if group.ratios is None:
        raise ValueError("rollout group carries no ratio arrays")
    if len(advantages) != group.group_size:
        raise ValueError("advantages length != group size")
    lo, hi = 1.0 - cfg.epsilon, 1.0 + cfg.epsilon
    total = 0.0
    for i, ratios in enumerate(group.ratios):
        if not ratios:
            raise ValueError(f"trajectory {i} has zero tokens")
        adv = float(advantages[i])
        if not math.isfinite(adv):
            raise ValueError(f"non-finite advantage at trajectory {i}")
        kl_row = group.kl_terms[i] if group.kl_terms is not None else (0.0,) * len(ratios)
        if len(kl_row) != len(ratios):
            raise ValueError(f"ratios/kl_terms length mismatch at trajectory {i}")
        inner = 0.0
        for rho, kl in zip(ratios, kl_row):
            if not math.isfinite(rho) or not math.isfinite(kl):
                raise ValueError(f"non-finite token statistic at trajectory {i}")
            clipped = min(max(rho, lo), hi)
            inner += min(rho * adv, clipped * adv) - cfg.beta * kl
        total += inner / len(ratios)
    return total / group.group_size


def reward_group(
    task_id: str,
    answer: str,
    trajectories: Sequence[str],
    verifier: Callable[[str | None, str], VerifierOutcome] = verify_two_way,
) -> RolloutGroup:
    """Score each trajectory text and assemble a RolloutGroup.

    Extraction takes the last boxed answer; unparseable trajectories score 0.
    Rewards are binary: only a full verifier reward of 1 counts as correct.
    """
    if not trajectories:
        raise ValueError("no trajectories")
    scored = []
    for text in trajectories:
        extracted = extract_boxed(text)
        outcome = verifier(extracted, answer)
        scored.append(
            Trajectory(text=text, extracted_answer=extracted, reward=1 if outcome.reward >= 1.0 else 0)
        )
    return RolloutGroup(task_id=task_id, trajectories=tuple(scored))
