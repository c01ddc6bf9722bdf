"""Candidate scoring and action selection over the panoramic action space."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoders import AttentionParams


@dataclass
class ActionDistribution:
    logits: Tensor  # (k+1,)
    probs: Tensor  # (k+1,) softmax over logits


def score_candidates(cands, f_hat: Tensor,
                     params: AttentionParams) -> ActionDistribution:
    """Per-candidate logit = [feature; quad] . (W f_hat), softmaxed."""
    if not cands:
        raise ValueError("candidate list is empty")
    if not cands[-1].is_stop:
        raise ValueError("last candidate must be the stop action")
    rows = Tensor(np.stack([np.concatenate([c.feature, c.quad]) for c in cands]))
    key = params.W @ f_hat
    if rows.data.shape[1] != key.data.shape[0]:
        raise ValueError(f"candidate dim {rows.data.shape[1]} does not match "
                         f"scorer dim {key.data.shape[0]}")
    logits = rows @ key
    if not np.isfinite(logits.data).all():
        raise FloatingPointError("non-finite candidate logits")
    return ActionDistribution(logits=logits, probs=ad.softmax(logits))


def select_action(dist: ActionDistribution, mode: str,
                  teacher_idx: int | None = None,
                  rng: np.random.Generator | None = None) -> int:
    if mode == "teacher":
        if teacher_idx is None:
            raise ValueError("teacher mode requires teacher_idx")
        return teacher_idx
    if mode == "sample":
        return int(rng.choice(dist.probs.data.shape[0], p=dist.probs.data))
    if mode == "argmax":
        return int(np.argmax(dist.probs.data))  # first maximum: lowest index
    raise ValueError(f"unknown selection mode {mode!r}")


def step_record(episode_id: str, t: int, node: int,
                dist: ActionDistribution, action: int, mode: str) -> str:
    """One rollout-log line: probabilities and the chosen action."""
    return json.dumps({
        "episode_id": episode_id, "t": t, "node": node,
        "candidate_count": dist.probs.data.shape[0],
        "p_t": [float(p) for p in dist.probs.data],
        "a_t": action, "mode": mode,
    }, separators=(", ", ": "))
