"""Cross-modal encoders: attention, vision history, instruction encoding.

One generic attention layer serves four sites (panorama views, instruction
tokens, move candidates, speaker decoding): weights are a softmax over
logits f_i . (W q) and the fused vector is the weight-averaged feature sum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, parameter
from .nn import Embedding, Linear, LSTMCell, Module, uniform_init

N_VIEWS = 36


class AttentionParams(Module):
    def __init__(self, rng: np.random.Generator, feat_dim: int, query_dim: int):
        self.W = parameter(uniform_init(rng, (feat_dim, query_dim), query_dim))


def attend(features: Tensor, query: Tensor,
           params: AttentionParams) -> tuple[Tensor, Tensor]:
    """Softmax attention: returns (fused feature, weights over rows)."""
    if features.data.ndim != 2 or features.data.shape[0] == 0:
        raise ValueError("features must be a nonempty (n, d) matrix")
    if params.W.data.shape != (features.data.shape[1], query.data.shape[0]):
        raise ValueError(
            f"attention shape mismatch: W {params.W.data.shape} for features "
            f"dim {features.data.shape[1]} and query dim {query.data.shape[0]}")
    logits = features @ (params.W @ query)
    weights = ad.softmax(logits)
    fused = weights @ features
    return fused, weights


@dataclass
class LanguageEncoding:
    features: Tensor  # (l+1, D_h) per-token contexts
    mean: Tensor  # (D_h,) global language context, arithmetic mean


class InstructionEncoder(Module):
    """Embedding + bidirectional LSTM; halves concatenated then projected."""

    def __init__(self, rng: np.random.Generator, vocab_size: int, d_h: int):
        self.embed = Embedding(rng, vocab_size, d_h)
        self.fwd = LSTMCell(rng, d_h, d_h)
        self.bwd = LSTMCell(rng, d_h, d_h)
        self.proj = Linear(rng, 2 * d_h, d_h)
        self.vocab_size = vocab_size
        self.d_h = d_h

    def token_embedding(self, token: int) -> Tensor:
        if not 0 <= token < self.vocab_size:
            raise ValueError(f"token id {token} outside vocabulary "
                             f"of size {self.vocab_size}")
        return ad.take_row(self.embed.table, token)

    def __call__(self, tokens) -> LanguageEncoding:
        embs = [self.token_embedding(t) for t in tokens]
        n = len(embs)
        zero = Tensor(np.zeros(self.d_h))
        h, c = zero, zero
        fwd_states = []
        for e in embs:
            h, c = ad.lstm_step(e, h, c, self.fwd.Wx, self.fwd.Wh, self.fwd.b)
            fwd_states.append(h)
        h, c = zero, zero
        bwd_states = [None] * n
        for i in range(n - 1, -1, -1):
            h, c = ad.lstm_step(embs[i], h, c, self.bwd.Wx, self.bwd.Wh, self.bwd.b)
            bwd_states[i] = h
        rows = [self.proj(ad.concat([fwd_states[i], bwd_states[i]]))
                for i in range(n)]
        feats = ad.stack(rows)
        return LanguageEncoding(features=feats, mean=ad.mean_rows(feats))


class VisionEncoder(Module):
    """Panorama attention plus the trajectory-long vision-history LSTM."""

    def __init__(self, rng: np.random.Generator, d_v: int, d_h: int):
        self.attn_o = AttentionParams(rng, d_v + 4, d_h)
        self.lstm = LSTMCell(rng, d_v + 4, d_h)
        # Learned initial states, zero at init so t=0 behaves like rest.
        self.init_query = parameter(np.zeros(d_h))
        self.init_h = parameter(np.zeros(d_h))
        self.init_c = parameter(np.zeros(d_h))

    def initial_state(self) -> tuple[Tensor, Tensor, Tensor]:
        return self.init_query, self.init_h, self.init_c

    def step(self, view_features: Tensor, prev_query: Tensor,
             h_prev: Tensor, c_prev: Tensor):
        """One vision-history step.

        Returns (attended panorama vector, h_t, c_t, view weights); the
        recurrent output h_t is the vision-history context for step t.
        """
        if view_features.data.shape[0] != N_VIEWS:
            raise ValueError(
                f"panorama must have {N_VIEWS} views, got {view_features.data.shape[0]}")
        f_hat_o, weights = attend(view_features, prev_query, self.attn_o)
        h, c = ad.lstm_step(f_hat_o, h_prev, c_prev,
                            self.lstm.Wx, self.lstm.Wh, self.lstm.b)
        return f_hat_o, h, c, weights


def fuse_cross_modal(lang: LanguageEncoding, query: Tensor,
                     params: AttentionParams) -> tuple[Tensor, Tensor]:
    """Attend over instruction token features; weights feed the heatmap log."""
    return attend(lang.features, query, params)
