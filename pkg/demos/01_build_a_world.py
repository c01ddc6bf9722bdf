"""Tour of the synthetic graph world: nodes, panoramas, episodes.

Run: python3 demos/01_build_a_world.py
"""

import numpy as np

from vlnav import graphworld as gw


def main():
    graph = gw.generate_world(seed=7, n_nodes=10, avg_degree=3.0, d_v=32)
    print(f"world seed=7: {graph.n_nodes} nodes, {len(graph.edges)} edges")
    for u in range(graph.n_nodes):
        x, y = graph.positions[u]
        nbrs = ", ".join(f"{v}({graph.edge_length(u, v):.1f}m)"
                         for v in graph.neighbors[u])
        print(f"  node {u} at ({x:+.1f}, {y:+.1f}) -> {nbrs}")

    obs = gw.observe(graph, node=0, heading=0.0)
    print(f"\npanorama at node 0: {obs.features.shape[0]} views of "
          f"dim {obs.features.shape[1]} (12 headings x 3 elevations)")

    cands = gw.candidates(graph, node=0, heading=0.0)
    print(f"candidates at node 0: {len(cands)} (last one is stop)")
    for c in cands:
        label = "stop" if c.is_stop else f"go to {c.target}"
        print(f"  {label:<10} quad (sin/cos heading, sin/cos elev) ="
              f" {np.round(c.quad, 2)}")

    rng = np.random.default_rng(1)
    path = gw.sample_episode_path(graph, rng, t_max=10)
    tokens = gw.synth_instruction(path, graph, seed=7)
    print(f"\nsampled episode: path {path}")
    print(f"instruction ({len(tokens)} tokens, BOS={gw.BOS} EOS={gw.EOS}):")
    print(f"  {tokens}")

    # fractions: train-seen, val-seen, val-unseen, test-unseen
    episodes = gw.make_dataset(
        world_seeds=[7000, 7001], episodes_per_world=10,
        splits=(0.5, 0.1, 0.2, 0.2), d_v=32, n_nodes=10)
    counts = {}
    for ep in episodes:
        counts[ep.split] = counts.get(ep.split, 0) + 1
    print(f"\ndataset over 2 worlds: {counts}")
    print("unseen splits come from worlds no training episode touches.")


if __name__ == "__main__":
    main()
