"""Train a small agent end to end and watch validation SR climb.

Takes about half a minute. Run: python3 demos/05_train_tiny_agent.py
"""

import numpy as np

from vlnav import config as cf
from vlnav import graphworld as gw
from vlnav import training as tr


def random_policy_sr(episodes, t_max, radius, n=2000, seed=0):
    rng = np.random.default_rng(seed)
    hits = 0
    for k in range(n):
        ep = episodes[k % len(episodes)]
        node, heading = ep.start, 0.0
        for _ in range(t_max):
            cands = gw.candidates(ep.graph, node, heading)
            a = int(rng.integers(len(cands)))
            if cands[a].is_stop:
                break
            prev, node = node, cands[a].target
            heading = ep.graph.heading_to(prev, node)
        hits += ep.graph.distance(node, ep.goal) <= radius
    return hits / n


def main():
    cfg = cf.Config(seed=1, n_worlds=3, n_nodes=8, episodes_per_world=30,
                    d_v=16, d_h=32, t_max=8, l_max=24, iterations=800,
                    batch_size=8, eval_every=200, probe_episodes=8)
    episodes = tr.build_dataset(cfg)
    val_seen = tr.by_split(episodes, "val-seen")
    print(f"dataset: {len(episodes)} episodes over {cfg.n_worlds} worlds, "
          f"{len(val_seen)} val-seen")

    baseline = random_policy_sr(val_seen, cfg.t_max, cfg.success_radius)
    print(f"random policy val-seen SR: {baseline:.3f}\n")

    ckpt, log = tr.pretrain(cfg, episodes)
    for row in log:
        if row.get("kind") == "eval":
            probe = row["val-seen"]
            print(f"  iter {row['iteration']:>4}  val-seen probe "
                  f"SR {probe['sr']:.3f}  SPL {probe['spl']:.3f}")

    model, _, _ = tr.materialize(ckpt)
    final = tr.evaluate_split(model, val_seen, cfg)
    print(f"\nbest checkpoint (iter {ckpt.iteration}) on full val-seen: "
          f"SR {final['sr']:.3f} SPL {final['spl']:.3f} "
          f"NE {final['ne']:.2f}m")
    print(f"lift over random policy: {final['sr'] - baseline:+.3f} SR")


if __name__ == "__main__":
    main()
