"""Group-normalized advantages, the clipped surrogate objective with KL
penalty, and JSONL export of training batches for an external trainer.

No gradients or weight updates happen here; the math is exact, pure Python,
and closed over per-sequence summed log-probabilities.
"""

from __future__ import annotations

import json
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import (
    GroupTooSmallError,
    InvariantViolationError,
    LengthMismatchError,
    NonFiniteError,
)

DEFAULT_GROUP_SIZE = 8
DEFAULT_STD_FLOOR = 1e-6
DEFAULT_EPSILON = 0.2
DEFAULT_KL_COEFF = 0.0

KL_ESTIMATOR_NONNEG = "nonneg"   # exp(d) - d - 1, always >= 0
KL_ESTIMATOR_DELTA = "delta"     # plain -d = logprob_new - logprob_ref


@dataclass(frozen=True)
class RewardGroup:
    rewards: tuple
    prompt_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "rewards", tuple(float(r) for r in self.rewards))


@dataclass(frozen=True)
class AdvantageGroup:
    advantages: tuple

    def __post_init__(self):
        object.__setattr__(self, "advantages", tuple(self.advantages))


def advantages(group: RewardGroup, std_floor: float = DEFAULT_STD_FLOOR) -> AdvantageGroup:
    """(r - mean) / max(pop_std, std_floor). Constant-reward groups give
    all-zero advantages through the floor path."""
    r = group.rewards
    if len(r) < 2:
        raise GroupTooSmallError(f"need >= 2 rewards, got {len(r)}")
    mean = statistics.fmean(r)
    std = statistics.pstdev(r)
    denom = max(std, std_floor)
    return AdvantageGroup(tuple((x - mean) / denom for x in r))


@dataclass(frozen=True)
class ObjectiveInputs:
    logprob_new: tuple
    logprob_old: tuple
    logprob_ref: tuple
    advantages: tuple
    epsilon: float = DEFAULT_EPSILON
    kl_coeff: float = DEFAULT_KL_COEFF
    kl_estimator: str = KL_ESTIMATOR_NONNEG

    def __post_init__(self):
        for name in ("logprob_new", "logprob_old", "logprob_ref", "advantages"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if not 0.0 < self.epsilon:
            raise ValueError("epsilon must be positive")
        if self.kl_coeff < 0.0:
            raise ValueError("kl_coeff must be >= 0")


@dataclass(frozen=True)
class ObjectiveValue:
    surrogate: float
    kl: float
    total: float
    clipped_fraction: float


def grpo_objective(inp: ObjectiveInputs) -> ObjectiveValue:
    """Clipped-ratio surrogate averaged over the group, minus kl_coeff times
    the KL estimate against the reference policy."""
    n = len(inp.logprob_new)
    if not (len(inp.logprob_old) == len(inp.logprob_ref) == len(inp.advantages) == n):
        raise LengthMismatchError("all objective inputs must share one group length")
    if n == 0:
        raise LengthMismatchError("empty group")
    all_values = inp.logprob_new + inp.logprob_old + inp.logprob_ref + inp.advantages
    if any(not math.isfinite(v) for v in all_values):
        raise NonFiniteError("objective inputs must be finite")

    surrogate_sum = 0.0
    kl_sum = 0.0
    clipped = 0
    lo, hi = 1.0 - inp.epsilon, 1.0 + inp.epsilon
    for ln, lo_, lr, a in zip(inp.logprob_new, inp.logprob_old, inp.logprob_ref, inp.advantages):
        ratio = math.exp(ln - lo_)
        clipped_ratio = min(max(ratio, lo), hi)
        unclipped_term = ratio * a
        clipped_term = clipped_ratio * a
        term = min(unclipped_term, clipped_term)
        if clipped_term < unclipped_term:
            clipped += 1
        surrogate_sum += term
        delta = lr - ln
        if inp.kl_estimator == KL_ESTIMATOR_NONNEG:
            kl_sum += math.exp(delta) - delta - 1.0
        elif inp.kl_estimator == KL_ESTIMATOR_DELTA:
            kl_sum += -delta
        else:
            raise ValueError(f"unknown kl estimator: {inp.kl_estimator}")
    surrogate = surrogate_sum / n
    kl = kl_sum / n
    return ObjectiveValue(
        surrogate=surrogate,
        kl=kl,
        total=surrogate - inp.kl_coeff * kl,
        clipped_fraction=clipped / n,
    )


@dataclass(frozen=True)
class TrainingGroup:
    """One prompt with its G sampled completions and scalar rewards."""

    prompt_system: str
    prompt_user: str
    completions: tuple
    rewards: tuple
    advantages: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "completions", tuple(self.completions))
        object.__setattr__(self, "rewards", tuple(float(r) for r in self.rewards))
        if self.advantages is not None:
            object.__setattr__(self, "advantages", tuple(float(a) for a in self.advantages))
        if len(self.completions) != len(self.rewards):
            raise LengthMismatchError("completions and rewards must align")


def export_training_batch(groups: Sequence[TrainingGroup], path: str | Path,
                          stage: str | None = None,
                          std_floor: float = DEFAULT_STD_FLOOR) -> int:
    """Write one JSONL line per group with advantages recomputed on write.

    Groups that carry precomputed advantages are checked against the
    recomputation (InvariantViolationError beyond 1e-9). Returns the number
    of lines written.
    """
    path = Path(path)
    lines = []
    for group in groups:
        adv = advantages(RewardGroup(group.rewards), std_floor=std_floor).advantages
        if group.advantages is not None:
            if len(group.advantages) != len(adv) or \
                    any(abs(a - b) > 1e-9 for a, b in zip(group.advantages, adv)):
                raise InvariantViolationError(
                    "stored advantages disagree with recomputation")
        obj = {
            "prompt_system": group.prompt_system,
            "prompt_user": group.prompt_user,
            "completions": list(group.completions),
            "rewards": list(group.rewards),
            "advantages": list(adv),
        }
        if stage is not None:
            obj["stage"] = stage
        lines.append(json.dumps(obj, ensure_ascii=False))
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return len(lines)


def read_training_batch(path: str | Path) -> list:
    """Read back an exported batch file as TrainingGroup objects."""
    groups = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        groups.append(TrainingGroup(
            prompt_system=obj["prompt_system"],
            prompt_user=obj["prompt_user"],
            completions=tuple(obj["completions"]),
            rewards=tuple(obj["rewards"]),
            advantages=tuple(obj["advantages"]),
        ))
    return groups
