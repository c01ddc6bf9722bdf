"""Navigation losses: imitation, advantage actor-critic, and the joint step.

The joint step backpropagates one combined scalar, which by linearity of the
gradient equals summing the gradients of a teacher-forced pass (imitation plus
all four auxiliary losses) and a student-forced pass (policy gradient, value
regression, and the progress/matching losses only).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import auxiliary as aux
from .autodiff import Tensor
from .model import NavModel, RolloutRecord


class TrainingDivergence(RuntimeError):
    """Raised when a loss or gradient goes non-finite; names the term."""


@dataclass
class AdvantageEstimate:
    advantages: list  # per-step A_t = G_t - V_t, held constant for the policy
    returns: list  # discounted Monte Carlo returns G_t


def compute_rewards(trajectory, episode, stopped: bool,
                    success_radius: float = 1.0) -> list:
    """Shaped rewards: geodesic progress per move, terminal bonus +-2.

    The terminal bonus lands on the last step: +2 for stopping within the
    success radius, -2 otherwise (wrong stop or running out of budget). The
    reward shape is a stand-in; nothing upstream depends on its exact form.
    """
    if not trajectory:
        raise ValueError("empty trajectory")
    graph, goal = episode.graph, episode.goal
    rewards = [graph.distance(u, goal) - graph.distance(v, goal)
               for u, v in zip(trajectory, trajectory[1:])]
    if stopped:
        near = graph.distance(trajectory[-1], goal) <= success_radius
        rewards.append(2.0 if near else -2.0)
    elif rewards:
        rewards[-1] -= 2.0
    return rewards


def discounted_returns(rewards: list, gamma: float) -> list:
    out = [0.0] * len(rewards)
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def compute_advantages(rollout: RolloutRecord, rewards: list,
                       gamma: float) -> AdvantageEstimate:
    if len(rewards) != rollout.T:
        raise ValueError(f"{len(rewards)} rewards for {rollout.T} steps")
    returns = discounted_returns(rewards, gamma)
    advantages = [g - float(s.value.data)
                  for g, s in zip(returns, rollout.steps)]
    return AdvantageEstimate(advantages=advantages, returns=returns)


def il_loss(rollout: RolloutRecord) -> Tensor:
    """Sum over steps of -log p_t(teacher action)."""
    terms = []
    for s in rollout.steps:
        if s.teacher_idx is None:
            raise ValueError("rollout lacks teacher actions")
        terms.append(ad.pick(s.log_probs, s.teacher_idx))
    return -sum_tensors(terms)


def rl_loss(rollout: RolloutRecord,
            adv: AdvantageEstimate) -> tuple[Tensor, Tensor]:
    """(policy loss, value loss).

    A_t multiplies log p_t as a plain constant, so no gradient flows through
    the advantage into either the policy or the value head; the value loss is
    the squared-return regression and is the only path into the value head.
    """
    if len(adv.advantages) != rollout.T:
        raise ValueError(f"{len(adv.advantages)} advantages for "
                         f"{rollout.T} steps")
    policy_terms = [ad.pick(s.log_probs, s.action) * (-a)
                    for s, a in zip(rollout.steps, adv.advantages)]
    value_terms = [(s.value - g) * (s.value - g)
                   for s, g in zip(rollout.steps, adv.returns)]
    return sum_tensors(policy_terms), sum_tensors(value_terms)


def _check_finite(name: str, loss: Tensor, iteration: int) -> Tensor:
    if not np.isfinite(loss.data).all():
        raise TrainingDivergence(
            f"{name} loss is non-finite at iteration {iteration}")
    return loss


def joint_step(il_batch: list, rl_batch: list, model: NavModel, optimizer,
               aux_weights, rng: np.random.Generator, gamma: float = 0.9,
               value_weight: float = 0.5, progress_kind: str = "bce",
               angle_norm: str = "l2", success_radius: float = 1.0,
               iteration: int = 0) -> dict:
    """One summed-gradient update from paired teacher/student rollouts.

    il_batch and rl_batch are rollouts of the same episodes (same
    instructions). Returns the per-term loss values for the training log.
    """
    w_speaker, w_progress, w_matching, w_angle = aux_weights
    # Fixed spawn order keeps each side's shuffle stream identical whether or
    # not the other side's batch is present (gradient-additivity contract).
    il_rng, rl_rng = rng.spawn(2)
    terms: dict[str, float] = {}
    pieces = []

    def add(name: str, loss: Tensor, weight: float) -> None:
        # loss is a batch mean; the log records it unweighted.
        _check_finite(name, loss, iteration)
        terms[name] = float(loss.data)
        if weight != 0.0:
            pieces.append(loss * weight)

    def batch_mean(losses: list) -> Tensor:
        return sum_tensors(losses) * (1.0 / len(losses))

    if il_batch:
        add("il", batch_mean([il_loss(r) for r in il_batch]), 1.0)
        if w_speaker > 0:
            add("speaker", batch_mean(
                [aux.speaker_loss(r.episode.tokens, r.history(), model.speaker,
                                  model.instr_enc)[0] for r in il_batch]),
                w_speaker)
        if w_progress > 0:
            add("progress", batch_mean(
                [aux.progress_loss(r.f_hats(), model.progress,
                                   kind=progress_kind) for r in il_batch]),
                w_progress)
        if w_matching > 0 and len(il_batch) >= 2:
            add("matching", aux.matching_loss(
                [(r.f_hats(), r.lang_mean) for r in il_batch], model.matching,
                il_rng), w_matching)
        if w_angle > 0:
            add("angle", batch_mean(
                [aux.angle_loss(r.f_hats(), [s.teacher_quad for s in r.steps],
                                model.angle, norm=angle_norm)
                 for r in il_batch]), w_angle)

    if rl_batch:
        policies, values = [], []
        for r in rl_batch:
            rewards = compute_rewards(r.trajectory, r.episode, r.stopped,
                                      success_radius)
            adv = compute_advantages(r, rewards, gamma)
            p, v = rl_loss(r, adv)
            policies.append(p)
            values.append(v)
        add("rl_policy", batch_mean(policies), 1.0)
        add("value", batch_mean(values), value_weight)
        # Speaker and angle stay out of the student pass by design.
        if w_progress > 0:
            add("progress_rl", batch_mean(
                [aux.progress_loss(r.f_hats(), model.progress,
                                   kind=progress_kind) for r in rl_batch]),
                w_progress)
        if w_matching > 0 and len(rl_batch) >= 2:
            add("matching_rl", aux.matching_loss(
                [(r.f_hats(), r.lang_mean) for r in rl_batch], model.matching,
                rl_rng), w_matching)

    total = sum_tensors(pieces)
    terms["total"] = float(total.data)
    total.backward()
    for name, p in model.named_parameters():
        if p.grad is not None and not np.isfinite(p.grad).all():
            raise TrainingDivergence(
                f"gradient of {name} is non-finite at iteration {iteration}")
    optimizer.step()
    optimizer.zero_grad()
    return terms


def sum_tensors(tensors: list) -> Tensor:
    if not tensors:
        return Tensor(0.0)
    if len(tensors) == 1:
        return tensors[0]
    return ad.tsum(ad.stack(tensors))
