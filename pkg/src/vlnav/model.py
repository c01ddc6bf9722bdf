"""The navigation agent: parameters and the per-episode rollout loop."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import graphworld as gw
from .autodiff import Tensor
from .encoders import (AttentionParams, InstructionEncoder, VisionEncoder,
                       fuse_cross_modal)
from .nn import Linear, LSTMCell, Module
from .policy import score_candidates, select_action


class SpeakerHead(Module):
    """Teacher-forced decoder retelling the instruction from vision history."""

    def __init__(self, rng: np.random.Generator, d_h: int, vocab_size: int):
        self.lstm = LSTMCell(rng, d_h, d_h)
        self.attn_s = AttentionParams(rng, d_h, d_h)
        # Projects [attended history; decoder state] to vocabulary logits.
        self.out = Linear(rng, 2 * d_h, vocab_size)


class NavModel(Module):
    """All learnable parameters of the agent, enumerated by name."""

    def __init__(self, rng: np.random.Generator, d_v: int = 32, d_h: int = 64,
                 vocab_size: int = 64, vision_query: str = "cross_modal"):
        if vision_query not in ("cross_modal", "vision_history"):
            raise ValueError(f"unknown vision_query {vision_query!r}")
        self.d_v = d_v
        self.d_h = d_h
        self.vocab_size = vocab_size
        self.vision_query = vision_query
        self.instr_enc = InstructionEncoder(rng, vocab_size, d_h)
        self.vis_enc = VisionEncoder(rng, d_v, d_h)
        self.attn_w = AttentionParams(rng, d_h, d_h)
        self.attn_c = AttentionParams(rng, d_v + 4, d_h)
        self.value = Linear(rng, d_h, 1)
        self.speaker = SpeakerHead(rng, d_h, vocab_size)
        self.progress = Linear(rng, d_h, 1)
        self.matching = Linear(rng, 2 * d_h, 1)
        self.angle = Linear(rng, d_h, 4)


@dataclass
class Step:
    node: int
    probs: Tensor  # (k+1,)
    log_probs: Tensor  # (k+1,)
    action: int
    teacher_idx: int
    teacher_quad: np.ndarray  # (4,) zero quad for the stop action
    value: Tensor  # scalar V_t
    f_hat: Tensor  # (D_h,) cross-modal context
    h: Tensor  # (D_h,) vision-history context
    view_weights: np.ndarray  # (36,) panorama attention, for diagnostics
    token_weights: np.ndarray  # (l+1,) instruction attention, for heatmaps


@dataclass
class RolloutRecord:
    episode: gw.Episode
    mode: str  # teacher / sample / argmax / replay
    steps: list = field(default_factory=list)
    trajectory: list = field(default_factory=list)  # visited nodes, start first
    stopped: bool = False
    lang_mean: Tensor | None = None

    @property
    def T(self) -> int:
        return len(self.steps)

    def f_hats(self) -> list:
        return [s.f_hat for s in self.steps]

    def history(self) -> list:
        return [s.h for s in self.steps]


def rollout(model: NavModel, episode: gw.Episode, mode: str,
            rng: np.random.Generator | None = None, max_steps: int = 10,
            forced_actions: list | None = None) -> RolloutRecord:
    """Run one episode and record everything the losses need.

    Modes: teacher (follow a_t*), sample (draw from p_t), argmax (greedy),
    replay (follow forced_actions; freezes a sampled trajectory so losses
    along it can be re-evaluated under perturbed parameters).
    """
    if mode == "replay" and forced_actions is None:
        raise ValueError("replay mode requires forced_actions")
    graph = episode.graph
    lang = model.instr_enc(episode.tokens)
    rec = RolloutRecord(episode=episode, mode=mode, lang_mean=lang.mean)

    query, h, c = model.vis_enc.initial_state()
    node = episode.start
    heading = 0.0
    rec.trajectory.append(node)
    for t in range(max_steps):
        obs = gw.observe(graph, node, heading)
        views = Tensor(np.concatenate([obs.features, obs.quads], axis=1))
        f_hat_o, h, c, w_views = model.vis_enc.step(views, query, h, c)
        f_hat, w_tokens = fuse_cross_modal(lang, h, model.attn_w)

        cands = gw.candidates(graph, node, heading)
        dist = score_candidates(cands, f_hat, model.attn_c)
        teacher_idx = gw.teacher_action(episode, node)
        if mode == "replay":
            action = forced_actions[t]
        else:
            action = select_action(dist, mode, teacher_idx=teacher_idx, rng=rng)
        value = ad.pick(model.value(f_hat), 0)

        stop_idx = len(cands) - 1
        teacher_quad = cands[teacher_idx].quad if teacher_idx != stop_idx \
            else np.zeros(4)
        rec.steps.append(Step(
            node=node, probs=dist.probs, log_probs=ad.log_softmax(dist.logits),
            action=action, teacher_idx=teacher_idx, teacher_quad=teacher_quad,
            value=value, f_hat=f_hat, h=h,
            view_weights=w_views.data.copy(),
            token_weights=w_tokens.data.copy()))

        query = f_hat if model.vision_query == "cross_modal" else h
        if action == stop_idx:
            rec.stopped = True
            break
        prev = node
        node = cands[action].target
        heading = graph.heading_to(prev, node)
        rec.trajectory.append(node)
    return rec
