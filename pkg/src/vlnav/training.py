"""Training stages: pretraining, back-translation, pre-exploration, ablation.

A run is a deterministic function of (config, seed). Every random stream is
seeded with a (seed, purpose) tuple so the stages cannot perturb each other:
purpose 1 is model init, 2 the pretrain loop, 4 back-translation sampling.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import graphworld as gw
from . import metrics
from .autodiff import no_grad
from .auxiliary import speaker_generate
from .config import Config, config_hash, parse_config, to_text
from .model import NavModel, rollout
from .nn import SGD
from .objectives import joint_step

MAGIC = b"NAVCKPT1"
EVAL_SPLITS = ("val-seen", "val-unseen")
AUGMENT_SOURCES = ("train-worlds", "unseen-worlds")


def world_seeds(cfg: Config) -> list[int]:
    # Spacing keeps world seeds collision-free across run seeds for any
    # n_worlds < 1000.
    return [cfg.seed * 1000 + k for k in range(cfg.n_worlds)]


def build_dataset(cfg: Config) -> list:
    return gw.make_dataset(world_seeds(cfg), cfg.episodes_per_world,
                           cfg.splits, d_v=cfg.d_v, n_nodes=cfg.n_nodes,
                           avg_degree=cfg.avg_degree, t_max=cfg.t_max,
                           vocab_size=cfg.vocab_size, l_max=cfg.l_max)


def by_split(episodes: list, split: str) -> list:
    out = [ep for ep in episodes if ep.split == split]
    if not out:
        raise ValueError(f"no episodes in split {split!r}")
    return out


def build_model(cfg: Config) -> NavModel:
    rng = np.random.default_rng((cfg.seed, 1))
    return NavModel(rng, d_v=cfg.d_v, d_h=cfg.d_h,
                    vocab_size=cfg.vocab_size, vision_query=cfg.vision_query)


# --------------------------------------------------------------------------
# Checkpoints. Binary container: 8-byte magic, 8-byte big-endian header
# length, canonical JSON header, then raw little-endian float64 blocks in
# the header's array order. Canonical JSON plus a fixed array order makes
# save -> load -> save byte-identical.

@dataclass
class Checkpoint:
    config: Config
    stage: str
    iteration: int
    val_spl: float | None
    params: dict  # name -> float64 array
    momenta: dict  # name -> float64 array, optimizer velocity
    rng_state: dict


def _rng_state(rng: np.random.Generator) -> dict:
    # bit_generator.state alone cannot reproduce spawn(); the seed sequence
    # identity and its child counter must ride along.
    ss = rng.bit_generator.seed_seq
    entropy = ss.entropy if isinstance(ss.entropy, int) else list(ss.entropy)
    return {"bit_generator": copy.deepcopy(rng.bit_generator.state),
            "entropy": entropy, "spawn_key": list(ss.spawn_key),
            "pool_size": ss.pool_size,
            "n_children_spawned": ss.n_children_spawned}


def _restore_rng(saved: dict) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=saved["entropy"],
                                spawn_key=tuple(saved["spawn_key"]),
                                pool_size=saved["pool_size"])
    if saved["n_children_spawned"]:
        ss.spawn(saved["n_children_spawned"])  # advance the child counter
    rng = np.random.Generator(np.random.PCG64(ss))
    rng.bit_generator.state = copy.deepcopy(saved["bit_generator"])
    return rng


def snapshot(cfg: Config, stage: str, iteration: int, val_spl,
             model: NavModel, opt: SGD, rng: np.random.Generator) -> Checkpoint:
    named = model.named_parameters()
    params = {name: p.data.copy() for name, p in named}
    momenta = {name: v.copy() for (name, _), v in zip(named, opt.velocity)}
    return Checkpoint(config=cfg, stage=stage, iteration=iteration,
                      val_spl=val_spl, params=params, momenta=momenta,
                      rng_state=_rng_state(rng))


def materialize(ckpt: Checkpoint) -> tuple:
    """Rebuild (model, optimizer, rng) exactly as they were at snapshot."""
    cfg = ckpt.config
    model = build_model(cfg)
    named = model.named_parameters()
    want = {name for name, _ in named}
    if want != set(ckpt.params):
        raise ValueError("checkpoint parameters do not match the model: "
                         f"{sorted(want ^ set(ckpt.params))}")
    for name, p in named:
        stored = ckpt.params[name]
        if p.data.shape != stored.shape:
            raise ValueError(f"shape mismatch for {name}: "
                             f"{p.data.shape} vs {stored.shape}")
        p.data[...] = stored
    opt = SGD(model.parameters(), cfg.lr, cfg.momentum)
    for (name, _), v in zip(named, opt.velocity):
        v[...] = ckpt.momenta[name]
    return model, opt, _restore_rng(ckpt.rng_state)


def save_checkpoint(ckpt: Checkpoint, path: str) -> None:
    arrays = sorted([(name, "param", list(arr.shape))
                     for name, arr in ckpt.params.items()]
                    + [(name, "momentum", list(arr.shape))
                       for name, arr in ckpt.momenta.items()])
    header = {
        "config": to_text(ckpt.config),
        "config_hash": config_hash(ckpt.config),
        "stage": ckpt.stage,
        "iteration": ckpt.iteration,
        "val_spl": ckpt.val_spl,
        "rng_state": ckpt.rng_state,
        "arrays": [list(entry) for entry in arrays],
    }
    blob = json.dumps(header, sort_keys=True,
                      separators=(", ", ": ")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(blob).to_bytes(8, "big"))
        fh.write(blob)
        for name, kind, _ in arrays:
            side = ckpt.params if kind == "param" else ckpt.momenta
            fh.write(np.ascontiguousarray(side[name], dtype="<f8").tobytes())


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path} is not a checkpoint file (bad magic)")
    header_len = int.from_bytes(raw[8:16], "big")
    header = json.loads(raw[16:16 + header_len].decode())
    cfg = parse_config(header["config"])
    if config_hash(cfg) != header["config_hash"]:
        raise ValueError(f"{path} config hash mismatch (corrupt header)")
    params: dict = {}
    momenta: dict = {}
    offset = 16 + header_len
    for name, kind, shape in header["arrays"]:
        count = int(np.prod(shape)) if shape else 1
        block = raw[offset:offset + 8 * count]
        if len(block) != 8 * count:
            raise ValueError(f"{path} is truncated at array {name!r}")
        arr = np.frombuffer(block, dtype="<f8").reshape(shape).copy()
        (params if kind == "param" else momenta)[name] = arr
        offset += 8 * count
    if offset != len(raw):
        raise ValueError(f"{path} has {len(raw) - offset} trailing bytes")
    return Checkpoint(config=cfg, stage=header["stage"],
                      iteration=header["iteration"],
                      val_spl=header["val_spl"], params=params,
                      momenta=momenta, rng_state=header["rng_state"])


# --------------------------------------------------------------------------
# Evaluation.

def agent_walk(model: NavModel, episode: gw.Episode, t_max: int) -> list:
    with no_grad():
        rec = rollout(model, episode, "argmax", max_steps=t_max)
    return list(rec.trajectory)


def evaluate_split(model: NavModel, episodes: list, cfg: Config) -> dict:
    reports = [metrics.evaluate(agent_walk(model, ep, cfg.t_max), ep,
                                success_radius=cfg.success_radius,
                                distance=cfg.distance_metric)
               for ep in episodes]
    return metrics.aggregate(reports)


def progress_error(model: NavModel, episodes: list, cfg: Config) -> float:
    """Mean |sigmoid(z_t) - r_t| along the agent's own greedy trajectories."""
    total = 0.0
    with no_grad():
        for ep in episodes:
            rec = rollout(model, ep, "argmax", max_steps=cfg.t_max)
            preds = [expit(model.progress(s.f_hat).data[0])
                     for s in rec.steps]
            errs = [abs(p - (t + 1) / rec.T) for t, p in enumerate(preds)]
            total += sum(errs) / rec.T
    return total / len(episodes)


def _probe_sets(episodes: list, cfg: Config) -> dict:
    cap = cfg.probe_episodes if cfg.probe_episodes > 0 else None
    return {split: by_split(episodes, split)[:cap] for split in EVAL_SPLITS}


def _eval_row(model: NavModel, probes: dict, cfg: Config,
              iteration: int) -> dict:
    row: dict = {"kind": "eval", "iteration": iteration}
    for split, eps in probes.items():
        row[split] = evaluate_split(model, eps, cfg)
    return row


# --------------------------------------------------------------------------
# Stage loops.

def _draw_batch(pool: list, size: int, rng: np.random.Generator) -> list:
    replace = size > len(pool)
    return [int(i) for i in rng.choice(len(pool), size=size, replace=replace)]


def _train_iteration(model: NavModel, opt: SGD, rng: np.random.Generator,
                     batch: list, cfg: Config, weights, iteration: int) -> dict:
    il = [rollout(model, ep, "teacher", max_steps=cfg.t_max) for ep in batch]
    rl = [rollout(model, ep, "sample", rng, max_steps=cfg.t_max)
          for ep in batch]
    return joint_step(il, rl, model, opt, weights, rng, gamma=cfg.gamma,
                      value_weight=cfg.value_loss_weight,
                      progress_kind=cfg.progress_loss,
                      angle_norm=cfg.angle_norm,
                      success_radius=cfg.success_radius, iteration=iteration)


def pretrain(cfg: Config, episodes: list) -> tuple:
    """Stage 1: train on train-seen, keep the highest-SPL checkpoint.

    Returns (checkpoint, log) where log rows are JSON-ready dicts, one per
    iteration plus one per periodic evaluation.
    """
    train = by_split(episodes, "train-seen")
    probes = _probe_sets(episodes, cfg)
    model = build_model(cfg)
    opt = SGD(model.parameters(), cfg.lr, cfg.momentum)
    rng = np.random.default_rng((cfg.seed, 2))
    log: list = []
    best: Checkpoint | None = None

    def run_eval(iteration: int) -> None:
        nonlocal best
        row = _eval_row(model, probes, cfg, iteration)
        log.append(row)
        spl = row[cfg.selection_split]["spl"]
        # Ties go to the most recent model: equal SPL but more training.
        if best is None or spl >= best.val_spl:
            best = snapshot(cfg, "pretrain", iteration, spl, model, opt, rng)

    run_eval(0)
    for it in range(1, cfg.iterations + 1):
        ids = _draw_batch(train, cfg.batch_size, rng)
        terms = _train_iteration(model, opt, rng, [train[i] for i in ids],
                                 cfg, cfg.aux_weights, it)
        log.append({"kind": "train", "iteration": it,
                    "episode_ids": [train[i].episode_id for i in ids],
                    **terms})
        if it % cfg.eval_every == 0 or it == cfg.iterations:
            run_eval(it)
    return best, log


def finetune(cfg: Config, ckpt: Checkpoint, labeled: list, augmented: list,
             iterations: int | None = None, eval_episodes: list | None = None,
             stage: str = "finetune") -> tuple:
    """Continue training from a checkpoint; returns the LAST state.

    Augmented batches train with halved auxiliary weights. When labeled
    episodes are supplied, batches alternate mix_labeled labeled batches
    per augmented one.
    """
    if not augmented:
        raise ValueError("augmented episode set is empty")
    model, opt, rng = materialize(ckpt)
    n_iters = cfg.iterations if iterations is None else iterations
    probes = _probe_sets(eval_episodes, cfg) if eval_episodes else None
    halved = tuple(w / 2 for w in cfg.aux_weights)
    mix = cfg.mix_labeled if labeled else 0
    log: list = []
    last_spl = ckpt.val_spl

    def run_eval(iteration: int) -> None:
        nonlocal last_spl
        if probes is None:
            return
        row = _eval_row(model, probes, cfg, iteration)
        log.append(row)
        last_spl = row[cfg.selection_split]["spl"]

    start = ckpt.iteration
    run_eval(start)
    for k in range(1, n_iters + 1):
        it = start + k
        use_labeled = mix > 0 and (k - 1) % (mix + 1) < mix
        pool = labeled if use_labeled else augmented
        weights = cfg.aux_weights if use_labeled else halved
        ids = _draw_batch(pool, cfg.batch_size, rng)
        terms = _train_iteration(model, opt, rng, [pool[i] for i in ids],
                                 cfg, weights, it)
        log.append({"kind": "train", "iteration": it,
                    "source": "labeled" if use_labeled else "augmented",
                    "episode_ids": [pool[i].episode_id for i in ids],
                    **terms})
        if k % cfg.eval_every == 0 or k == n_iters:
            run_eval(it)
    return snapshot(cfg, stage, start + n_iters, last_spl, model, opt,
                    rng), log


def pre_explore(cfg: Config, ckpt: Checkpoint, augmented: list,
                eval_episodes: list | None = None,
                iterations: int | None = None) -> tuple:
    """Stage 3: finetune on unseen-world augmented episodes alone."""
    return finetune(cfg, ckpt, [], augmented, iterations=iterations,
                    eval_episodes=eval_episodes, stage="pre-explore")


# --------------------------------------------------------------------------
# Back-translation.

def augment_backtranslate(cfg: Config, ckpt: Checkpoint, episodes: list,
                          source: str, n_samples: int | None = None) -> list:
    """Label sampled shortest paths with the checkpoint's speaker head.

    The labeling pass replays each path under a neutral two-token
    instruction, so the generated text depends only on the visual
    trajectory and the frozen parameters.
    """
    if source not in AUGMENT_SOURCES:
        raise ValueError(f"source must be one of {AUGMENT_SOURCES}, "
                         f"got {source!r}")
    if ckpt.iteration == 0:
        raise ValueError("speaker head is untrained "
                         "(checkpoint at iteration 0)")
    n = cfg.augment_samples if n_samples is None else n_samples
    if n == 0:
        return []

    want_seen = source == "train-worlds"
    graphs: dict[int, gw.NavGraph] = {}
    for ep in episodes:
        if (ep.split in ("train-seen", "val-seen")) == want_seen:
            graphs.setdefault(ep.graph.seed, ep.graph)
    if not graphs:
        raise ValueError(f"dataset has no {source} episodes")
    seeds = sorted(graphs)

    model, _, _ = materialize(ckpt)
    rng = np.random.default_rng((cfg.seed, 4))
    out: list = []
    attempts = 0
    while len(out) < n:
        if attempts >= 50 * n:
            raise ValueError("could not sample enough shortest paths; "
                             "check t_max against the world diameter")
        graph = graphs[seeds[attempts % len(seeds)]]
        attempts += 1
        path = gw.sample_episode_path(graph, rng, cfg.t_max)
        if path is None:
            continue
        neutral = gw.Episode(
            graph=graph, start=path[0], goal=path[-1], path=tuple(path),
            tokens=(gw.BOS, gw.EOS),
            episode_id=f"aug-w{graph.seed}-{len(out):03d}", split="augmented")
        with no_grad():
            rec = rollout(model, neutral, "teacher", max_steps=cfg.t_max)
        tokens = speaker_generate(rec.history(), model.speaker,
                                  model.instr_enc, cfg.l_max - 1)
        if tokens[-1] != gw.EOS:
            tokens = tokens[:cfg.l_max - 1] + (gw.EOS,)
        out.append(gw.Episode(
            graph=graph, start=path[0], goal=path[-1], path=tuple(path),
            tokens=tokens, episode_id=neutral.episode_id, split="augmented"))
    return out


# --------------------------------------------------------------------------
# Ablation harness.

CORE_ROWS = (
    ("baseline", (0.0, 0.0, 0.0, 0.0)),
    ("+speaker", (1.0, 0.0, 0.0, 0.0)),
    ("+progress", (0.0, 1.0, 0.0, 0.0)),
    ("+matching", (0.0, 0.0, 1.0, 0.0)),
    ("+angle", (0.0, 0.0, 0.0, 1.0)),
    ("+all", (1.0, 1.0, 1.0, 1.0)),
)


def run_ablation(cfg: Config, episodes: list) -> list:
    """Train the six core rows plus the progress-objective pair.

    Returns flat row dicts, one per (row, split), scored on both
    validation splits with the per-step progress prediction error.
    """
    rows: list = []

    def score(label: str, ckpt: Checkpoint) -> None:
        model, _, _ = materialize(ckpt)
        for split in EVAL_SPLITS:
            eps = by_split(episodes, split)
            agg = evaluate_split(model, eps, cfg)
            rows.append({
                "row": label, "split": split, "ne": agg["ne"],
                "or_": agg["or_"], "sr": agg["sr"], "spl": agg["spl"],
                "progress_error": progress_error(model, eps, cfg)})

    progress_ckpt: Checkpoint | None = None
    for label, (ws, wp, wm, wa) in CORE_ROWS:
        cfg_row = cfg.with_overrides(speaker_weight=ws, progress_weight=wp,
                                     matching_weight=wm, angle_weight=wa)
        ckpt, _ = pretrain(cfg_row, episodes)
        score(label, ckpt)
        if label == "+progress":
            progress_ckpt = ckpt
    for kind in ("bce", "mse"):
        if kind == cfg.progress_loss:
            ckpt = progress_ckpt  # same run as the +progress core row
        else:
            cfg_var = cfg.with_overrides(
                speaker_weight=0.0, progress_weight=1.0, matching_weight=0.0,
                angle_weight=0.0, progress_loss=kind)
            ckpt, _ = pretrain(cfg_var, episodes)
        score(f"progress-{kind}", ckpt)
    return rows


ABLATION_COLUMNS = ("ne", "or_", "sr", "spl", "progress_error")
ABLATION_HEADERS = ("NE", "OR", "SR", "SPL", "ProgErr")


def ablation_csv(rows: list) -> str:
    lines = ["row,split,ne,or,sr,spl,progress_error"]
    for r in rows:
        cells = [r["row"], r["split"]]
        cells += [repr(float(r[k])) for k in ABLATION_COLUMNS]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def ablation_text(rows: list) -> str:
    label_w = max(len(r["row"]) for r in rows)
    split_w = max(len(r["split"]) for r in rows)
    out = [f"{'row':<{label_w}}  {'split':<{split_w}}  "
           + "  ".join(f"{h:>7}" for h in ABLATION_HEADERS)]
    for r in rows:
        cells = "  ".join(f"{float(r[k]):>7.4f}" for k in ABLATION_COLUMNS)
        out.append(f"{r['row']:<{label_w}}  {r['split']:<{split_w}}  {cells}")
    return "\n".join(out) + "\n"


def write_jsonl(rows: list, path: str) -> None:
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True,
                                separators=(", ", ": ")) + "\n")
