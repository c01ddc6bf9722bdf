"""Watch the agent read: attention over instruction tokens and panorama views.

Run: python3 demos/02_attention_and_encoders.py
"""

import numpy as np

from vlnav import graphworld as gw
from vlnav.model import NavModel, rollout


def bar(w: float, width: int = 24) -> str:
    return "#" * int(round(w * width))


def main():
    graph = gw.generate_world(seed=3, n_nodes=8, avg_degree=3.0, d_v=16)
    rng = np.random.default_rng(0)
    path = gw.sample_episode_path(graph, rng, t_max=8)
    tokens = gw.synth_instruction(path, graph, seed=3, vocab_size=64,
                                  l_max=24)
    episode = gw.Episode(graph=graph, start=path[0], goal=path[-1],
                         path=tuple(path), tokens=tokens,
                         episode_id="demo", split="demo")

    model = NavModel(np.random.default_rng((0, 1)), d_v=16, d_h=32,
                     vocab_size=64)
    rec = rollout(model, episode, "teacher", max_steps=8)
    print(f"teacher rollout along {rec.trajectory} "
          f"(instruction: {len(tokens)} tokens)\n")

    for t, step in enumerate(rec.steps):
        print(f"step {t} at node {step.node}")
        tw = np.asarray(step.token_weights)
        top = np.argsort(tw)[::-1][:3]
        for j in top:
            print(f"  token[{j:2d}]={tokens[j]:2d}  {tw[j]:.3f} {bar(tw[j])}")
        vw = np.asarray(step.view_weights)
        v = int(np.argmax(vw))
        heading, elev = divmod(v, 3)
        print(f"  view {v} (heading {heading * 30} deg, elev row {elev}) "
              f"gets {vw[v]:.3f} of the panorama attention")
        probs = step.probs.data
        labels = [f"->{v}" for v in graph.neighbors[step.node]] + ["stop"]
        dist = "  ".join(f"{l}:{p:.2f}" for l, p in zip(labels, probs))
        print(f"  action probs: {dist}")
        print(f"  both attention rows sum to 1: "
              f"{tw.sum():.6f}, {vw.sum():.6f}\n")


if __name__ == "__main__":
    main()
