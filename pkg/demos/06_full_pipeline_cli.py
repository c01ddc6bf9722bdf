"""The whole pipeline through the command line, in a scratch directory:
gen-data, pretrain, augment, pre-explore, eval, ablate, emit-plots.

Takes a couple of minutes. Run: python3 demos/06_full_pipeline_cli.py
"""

import tempfile
from pathlib import Path

from vlnav import cli

CFG = """\
seed=2
n_worlds=3
n_nodes=8
avg_degree=3.0
episodes_per_world=20
d_v=16
d_h=32
vocab_size=64
t_max=8
l_max=24
iterations=300
batch_size=8
eval_every=100
probe_episodes=6
augment_samples=12
"""


def run(args):
    print(f"\n$ vlnav {' '.join(args)}")
    code = cli.main(args)
    assert code == 0, f"exit {code}"


def main():
    root = Path(tempfile.mkdtemp(prefix="vlnav-demo-"))
    cfg = root / "demo.cfg"
    cfg.write_text(CFG)
    data, run_dir, aug = root / "data", root / "run", root / "aug"

    run(["gen-data", "--config", str(cfg), "--out-dir", str(data)])
    run(["pretrain", "--config", str(cfg), "--run-dir", str(run_dir)])
    best = run_dir / "best.ckpt"
    run(["augment", "--checkpoint", str(best), "--split", "unseen-worlds",
         "--out-dir", str(aug)])
    run(["pre-explore", "--checkpoint", str(best), "--out-dir", str(aug),
         "--iterations", "150", "--run-dir", str(run_dir)])
    run(["eval", "--checkpoint", str(run_dir / "last.ckpt"),
         "--split", "val-unseen"])
    run(["ablate", "--config", str(cfg), "--iterations", "100",
         "--out-dir", str(root / "ablation")])
    run(["emit-plots", "--run-dir", str(run_dir),
         "--out-dir", str(root / "plots")])

    print("\nartifacts:")
    for p in sorted(root.rglob("*")):
        if p.is_file():
            print(f"  {p.relative_to(root)}  ({p.stat().st_size} bytes)")


if __name__ == "__main__":
    main()
