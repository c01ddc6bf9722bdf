"""Command-line front end: data, training stages, evaluation, plot data.

Exit codes: 0 success, 1 usage or config error, 2 runtime failure.
Commands that read a checkpoint use its embedded config as the base;
--config and flag overrides layer on top.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from scipy.special import expit

from . import metrics
from . import training as tr
from .autodiff import no_grad
from .config import Config, ConfigError, load_config
from .model import rollout
from .objectives import TrainingDivergence


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit 2; the contract is 1
        raise _UsageError(message)


def _resolve_config(args, base: Config | None = None) -> Config:
    cfg = base or Config()
    if getattr(args, "config", None):
        try:
            cfg = load_config(args.config, base=cfg)
        except OSError as e:
            raise ConfigError(f"cannot read config file: {e}")
    kw: dict = {}
    if getattr(args, "seed", None) is not None:
        kw["seed"] = args.seed
    if getattr(args, "iterations", None) is not None:
        kw["iterations"] = args.iterations
    if getattr(args, "progress_loss", None):
        kw["progress_loss"] = args.progress_loss
    if getattr(args, "vision_query", None):
        kw["vision_query"] = args.vision_query
    if getattr(args, "aux_weights", None):
        parts = args.aux_weights.split(",")
        if len(parts) != 4:
            raise ConfigError("--aux-weights expects four comma-separated "
                              "numbers: speaker,progress,matching,angle")
        try:
            ws, wp, wm, wa = (float(p) for p in parts)
        except ValueError:
            raise ConfigError(f"--aux-weights has a non-numeric entry: "
                              f"{args.aux_weights!r}")
        kw.update(speaker_weight=ws, progress_weight=wp,
                  matching_weight=wm, angle_weight=wa)
    return cfg.with_overrides(**kw)


def _write_config(cfg: Config, out_dir: str) -> None:
    from .config import to_text
    with open(os.path.join(out_dir, "config.txt"), "w") as fh:
        fh.write(to_text(cfg))


def _split_counts(episodes: list) -> str:
    counts: dict = {}
    for ep in episodes:
        counts[ep.split] = counts.get(ep.split, 0) + 1
    return ", ".join(f"{k}: {v}" for k, v in sorted(counts.items()))


# --------------------------------------------------------------------------
# Subcommands. Each returns 0; failures raise and main() maps them.

def cmd_gen_data(args) -> int:
    from .graphworld import save_dataset
    cfg = _resolve_config(args)
    episodes = tr.build_dataset(cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    save_dataset(episodes, args.out_dir)
    _write_config(cfg, args.out_dir)
    print(f"wrote {len(episodes)} episodes to {args.out_dir} "
          f"({_split_counts(episodes)})")
    return 0


def cmd_pretrain(args) -> int:
    cfg = _resolve_config(args)
    episodes = tr.build_dataset(cfg)
    ckpt, log = tr.pretrain(cfg, episodes)
    os.makedirs(args.run_dir, exist_ok=True)
    tr.save_checkpoint(ckpt, os.path.join(args.run_dir, "best.ckpt"))
    tr.write_jsonl(log, os.path.join(args.run_dir, "log.jsonl"))
    _write_config(cfg, args.run_dir)
    print(f"best checkpoint at iteration {ckpt.iteration} "
          f"({cfg.selection_split} SPL {ckpt.val_spl:.4f}) -> {args.run_dir}")
    return 0


def cmd_augment(args) -> int:
    from .graphworld import save_dataset
    ckpt = tr.load_checkpoint(args.checkpoint)
    cfg = _resolve_config(args, base=ckpt.config)
    episodes = tr.build_dataset(cfg)
    out = tr.augment_backtranslate(cfg, ckpt, episodes, args.split)
    os.makedirs(args.out_dir, exist_ok=True)
    save_dataset(out, args.out_dir)
    _write_config(cfg, args.out_dir)
    print(f"wrote {len(out)} augmented episodes from {args.split} "
          f"to {args.out_dir}")
    return 0


def cmd_pre_explore(args) -> int:
    from .graphworld import load_dataset
    ckpt = tr.load_checkpoint(args.checkpoint)
    cfg = _resolve_config(args, base=ckpt.config)
    augmented = load_dataset(args.out_dir, cfg.d_v)
    episodes = tr.build_dataset(cfg)
    out, log = tr.pre_explore(cfg, ckpt, augmented, eval_episodes=episodes,
                              iterations=args.iterations)
    os.makedirs(args.run_dir, exist_ok=True)
    tr.save_checkpoint(out, os.path.join(args.run_dir, "last.ckpt"))
    tr.write_jsonl(log, os.path.join(args.run_dir, "log.jsonl"))
    _write_config(cfg, args.run_dir)
    spl = "n/a" if out.val_spl is None else f"{out.val_spl:.4f}"
    print(f"finished at iteration {out.iteration} "
          f"({cfg.selection_split} SPL {spl}) -> {args.run_dir}")
    return 0


def cmd_eval(args) -> int:
    ckpt = tr.load_checkpoint(args.checkpoint)
    cfg = _resolve_config(args, base=ckpt.config)
    model, _, _ = tr.materialize(ckpt)
    episodes = tr.build_dataset(cfg)
    eps = tr.by_split(episodes, args.split)
    agg = tr.evaluate_split(model, eps, cfg)
    print(metrics.summary_table({args.split: agg}))
    return 0


def cmd_ablate(args) -> int:
    cfg = _resolve_config(args)
    episodes = tr.build_dataset(cfg)
    rows = tr.run_ablation(cfg, episodes)
    os.makedirs(args.out_dir, exist_ok=True)
    with open(os.path.join(args.out_dir, "ablation.csv"), "w") as fh:
        fh.write(tr.ablation_csv(rows))
    text = tr.ablation_text(rows)
    with open(os.path.join(args.out_dir, "ablation.txt"), "w") as fh:
        fh.write(text)
    _write_config(cfg, args.out_dir)
    print(text, end="")
    return 0


_TERM_ORDER = ("il", "speaker", "progress", "matching", "angle",
               "rl_policy", "value", "progress_rl", "matching_rl", "total")


def _write_csv(path: str, header: list, rows: list) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(c) if isinstance(c, float) else str(c)
                              for c in row) + "\n")


def cmd_emit_plots(args) -> int:
    run_dir = args.run_dir
    ckpt_path = None
    for name in ("best.ckpt", "last.ckpt"):
        candidate = os.path.join(run_dir, name)
        if os.path.exists(candidate):
            ckpt_path = candidate
            break
    if ckpt_path is None:
        raise ValueError(f"no checkpoint (best.ckpt or last.ckpt) "
                         f"in {run_dir}")
    ckpt = tr.load_checkpoint(ckpt_path)
    cfg = ckpt.config
    model, _, _ = tr.materialize(ckpt)
    out_dir = args.out_dir or os.path.join(run_dir, "plots")
    os.makedirs(out_dir, exist_ok=True)
    written = []

    # Attention heatmaps and the progress curve come from one teacher-forced
    # pass over the first seen-validation episode.
    episodes = tr.build_dataset(cfg)
    ep = tr.by_split(episodes, "val-seen")[0]
    with no_grad():
        rec = rollout(model, ep, "teacher", max_steps=cfg.t_max)
    n_tok = len(rec.steps[0].token_weights)
    path = os.path.join(out_dir, "attention_tokens.csv")
    _write_csv(path, ["step"] + [f"token_{i}" for i in range(n_tok)],
               [[t] + [float(w) for w in s.token_weights]
                for t, s in enumerate(rec.steps)])
    written.append(path)
    path = os.path.join(out_dir, "attention_views.csv")
    _write_csv(path, ["step"] + [f"view_{i}" for i in range(36)],
               [[t] + [float(w) for w in s.view_weights]
                for t, s in enumerate(rec.steps)])
    written.append(path)
    path = os.path.join(out_dir, "progress_curve.csv")
    with no_grad():
        preds = [float(expit(model.progress(s.f_hat).data[0]))
                 for s in rec.steps]
    _write_csv(path, ["step", "predicted", "target"],
               [[t, p, (t + 1) / rec.T] for t, p in enumerate(preds)])
    written.append(path)

    log_path = os.path.join(run_dir, "log.jsonl")
    if os.path.exists(log_path):
        with open(log_path) as fh:
            log = [json.loads(line) for line in fh]
        trains = [r for r in log if r.get("kind") == "train"]
        evals = [r for r in log if r.get("kind") == "eval"]
        if trains:
            keys = [k for k in _TERM_ORDER if any(k in r for r in trains)]
            path = os.path.join(out_dir, "loss_curve.csv")
            _write_csv(path, ["iteration"] + keys,
                       [[r["iteration"]] + [float(r[k]) if k in r else ""
                                            for k in keys] for r in trains])
            written.append(path)
        if evals:
            header = ["iteration"]
            for split in tr.EVAL_SPLITS:
                header += [f"{split}_sr", f"{split}_spl"]
            rows = []
            for r in evals:
                row = [r["iteration"]]
                for split in tr.EVAL_SPLITS:
                    row += [float(r[split]["sr"]), float(r[split]["spl"])]
                rows.append(row)
            path = os.path.join(out_dir, "eval_curve.csv")
            _write_csv(path, header, rows)
            written.append(path)

    for path in written:
        print(f"wrote {path}")
    return 0


# --------------------------------------------------------------------------
# Parser.

def build_parser() -> _Parser:
    parser = _Parser(prog="vlnav",
                     description="Graph-world navigation agent with "
                                 "self-supervised auxiliary losses.")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="command")

    def add(name: str, helptext: str, func):
        p = sub.add_parser(name, help=helptext, description=helptext)
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--seed", type=int, help="override the run seed")
        p.set_defaults(func=func)
        return p

    p = add("gen-data", "generate the synthetic world/episode dataset",
            cmd_gen_data)
    p.add_argument("--out-dir", required=True,
                   help="directory for worlds/ and episodes.jsonl")

    p = add("pretrain", "train on train-seen, keep the best-SPL checkpoint",
            cmd_pretrain)
    p.add_argument("--run-dir", required=True,
                   help="directory for best.ckpt, log.jsonl, config.txt")
    p.add_argument("--iterations", type=int, help="override the budget")
    p.add_argument("--aux-weights",
                   help="comma list: speaker,progress,matching,angle")
    p.add_argument("--progress-loss", choices=("bce", "mse"),
                   help="progress estimation objective")
    p.add_argument("--vision-query", choices=("cross_modal",
                                              "vision_history"),
                   help="query feeding the panorama attention")

    p = add("augment", "label sampled shortest paths with the speaker head",
            cmd_augment)
    p.add_argument("--checkpoint", required=True,
                   help="trained checkpoint providing the speaker")
    p.add_argument("--split", required=True,
                   choices=("train-worlds", "unseen-worlds"),
                   help="which worlds to sample paths from")
    p.add_argument("--out-dir", required=True,
                   help="directory for the augmented episode set")

    p = add("pre-explore", "finetune on augmented unseen-world episodes",
            cmd_pre_explore)
    p.add_argument("--checkpoint", required=True,
                   help="checkpoint to continue from")
    p.add_argument("--out-dir", required=True,
                   help="directory written by `augment` holding the "
                        "episodes to train on")
    p.add_argument("--run-dir", required=True,
                   help="directory for last.ckpt, log.jsonl, config.txt")
    p.add_argument("--iterations", type=int, help="override the budget")

    p = add("eval", "print the metric summary row for one split", cmd_eval)
    p.add_argument("--checkpoint", required=True, help="checkpoint to score")
    p.add_argument("--split", default="val-unseen",
                   choices=("train-seen", "val-seen", "val-unseen",
                            "test-unseen"),
                   help="dataset split to score")

    p = add("ablate", "train the auxiliary-loss ablation grid", cmd_ablate)
    p.add_argument("--out-dir", required=True,
                   help="directory for ablation.csv and ablation.txt")
    p.add_argument("--iterations", type=int,
                   help="override the per-row budget")

    p = add("emit-plots", "write plot-ready CSVs for a finished run",
            cmd_emit_plots)
    p.add_argument("--run-dir", required=True,
                   help="run directory holding a checkpoint and log.jsonl")
    p.add_argument("--out-dir", help="CSV destination "
                                     "(default: RUN_DIR/plots)")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except SystemExit as e:  # --help
        return int(e.code or 0)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except (TrainingDivergence, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
