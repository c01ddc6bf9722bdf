"""The four self-supervised auxiliary losses and their weighted sum.

Speaker and angle prediction are teacher-pass-only tasks: student-forced
trajectories carry no ground truth worth retelling, so the training step
never evaluates them there and no gradient can reach those heads.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, no_grad
from .encoders import attend
from .graphworld import BOS, EOS


def _bce(logit: Tensor, label: float) -> Tensor:
    """Soft-target binary cross entropy, stable for large |logit|."""
    return ad.softplus(logit) - logit * label


def speaker_loss(tokens, history: list, head, instr_enc,
                 return_weights: bool = True):
    """Teacher-forced retelling: predict each next token from attended history.

    The decoder consumes ground-truth embeddings of tokens[:-1]; position i
    queries the vision history and predicts tokens[i+1]. Loss is the mean
    -log p over the predicted tokens. Returns (loss, attention weights).
    """
    if not history:
        raise ValueError("empty vision history")
    if len(tokens) < 2:
        raise ValueError("instruction too short to retell")
    rows = ad.stack(history)
    d_h = history[0].data.shape[0]
    h = Tensor(np.zeros(d_h))
    c = Tensor(np.zeros(d_h))
    terms, weights = [], []
    for inp, target in zip(tokens[:-1], tokens[1:]):
        emb = instr_enc.token_embedding(inp)
        h, c = ad.lstm_step(emb, h, c, head.lstm.Wx, head.lstm.Wh, head.lstm.b)
        fused, w = attend(rows, h, head.attn_s)
        logits = head.out(ad.concat([fused, h]))
        terms.append(ad.pick(ad.log_softmax(logits), target))
        weights.append(w.data.copy())
    loss = -ad.tmean(ad.stack(terms))
    return (loss, weights) if return_weights else loss


def speaker_generate(history: list, head, instr_enc, max_len: int) -> tuple:
    """Greedy decode from vision history; BOS prefix, stops at EOS/max_len."""
    with no_grad():
        rows = ad.stack(history)
        d_h = history[0].data.shape[0]
        h = Tensor(np.zeros(d_h))
        c = Tensor(np.zeros(d_h))
        out = [BOS]
        token = BOS
        for _ in range(max_len):
            emb = instr_enc.token_embedding(token)
            h, c = ad.lstm_step(emb, h, c, head.lstm.Wx, head.lstm.Wh,
                                head.lstm.b)
            fused, _ = attend(rows, h, head.attn_s)
            logits = head.out(ad.concat([fused, h]))
            token = int(np.argmax(logits.data))
            out.append(token)
            if token == EOS:
                break
    return tuple(out)


def progress_loss(f_hats: list, head, kind: str = "bce") -> Tensor:
    """Soft-label progress regression against r_t = t/T, t = 1..T."""
    T = len(f_hats)
    if T == 0:
        raise ValueError("empty step sequence")
    terms = []
    for t, f in enumerate(f_hats):
        r = (t + 1) / T
        z = ad.pick(head(f), 0)
        if kind == "bce":
            terms.append(_bce(z, r))
        elif kind == "mse":
            d = ad.sigmoid(z) - r
            terms.append(d * d)
        else:
            raise ValueError(f"unknown progress loss kind {kind!r}")
    return ad.tmean(ad.stack(terms))


def sample_shuffle_assignment(batch_size: int,
                              rng: np.random.Generator) -> list:
    """Per-episode source indices: src[i] == i means episode i keeps its own
    language feature. Each episode is shuffled with probability 0.5; selected
    episodes rotate features among themselves so every one of them really
    receives a different episode's feature (a lone selectee borrows from its
    neighbour instead).
    """
    if batch_size < 2:
        raise ValueError("shuffling needs a batch of at least 2")
    src = list(range(batch_size))
    chosen = [i for i in range(batch_size) if rng.random() < 0.5]
    if len(chosen) == 1:
        i = chosen[0]
        src[i] = (i + 1) % batch_size
    else:
        for j, i in enumerate(chosen):
            src[i] = chosen[(j + 1) % len(chosen)]
    return src


def matching_loss(batch: list, head, rng: np.random.Generator) -> Tensor:
    """Classify whether each episode's global language feature was swapped.

    batch entries are (f_hat sequence, language mean). Labels: m = 1 for an
    unswapped episode, 0 for a swapped one; per episode the BCE is averaged
    over steps, then averaged over the batch.
    """
    src = sample_shuffle_assignment(len(batch), rng)
    per_episode = []
    for i, (f_hats, _) in enumerate(batch):
        mean = batch[src[i]][1]
        label = 1.0 if src[i] == i else 0.0
        terms = [_bce(ad.pick(head(ad.concat([f, mean])), 0), label)
                 for f in f_hats]
        per_episode.append(ad.tmean(ad.stack(terms)))
    return ad.tmean(ad.stack(per_episode))


def angle_loss(f_hats: list, teacher_quads: list, head,
               norm: str = "l2") -> Tensor:
    """Mean distance between predicted and teacher orientation quads."""
    if len(teacher_quads) != len(f_hats):
        raise ValueError("one teacher quad per step is required")
    if not f_hats:
        raise ValueError("empty step sequence")
    terms = []
    for f, quad in zip(f_hats, teacher_quads):
        diff = head(f) - Tensor(np.asarray(quad, dtype=np.float64))
        if norm == "l2":
            terms.append(ad.l2norm(diff))
        elif norm == "l1":
            terms.append(ad.tsum(ad.absval(diff)))
        else:
            raise ValueError(f"unknown angle norm {norm!r}")
    return ad.tmean(ad.stack(terms))


def total_aux_loss(losses, weights) -> Tensor:
    """Weighted sum of the four auxiliary losses."""
    if len(losses) != len(weights):
        raise ValueError("one weight per loss is required")
    if any(w < 0 for w in weights):
        raise ValueError("auxiliary weights must be nonnegative")
    total = Tensor(0.0)
    for loss, w in zip(losses, weights):
        if w != 0.0:
            total = total + loss * w
    return total


def diagnostic_rows(f_hats: list, lang_mean: Tensor,
                    progress_head, matching_head) -> list:
    """Per-step (t, progress prediction, matching probability) for curve CSVs."""
    rows = []
    with no_grad():
        for t, f in enumerate(f_hats):
            p = ad.sigmoid(progress_head(f)).data[0]
            m = ad.sigmoid(matching_head(ad.concat([f, lang_mean]))).data[0]
            rows.append((t, float(p), float(m)))
    return rows
