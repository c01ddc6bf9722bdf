"""All seven training losses on one batch, plus a finite-difference check.

Run: python3 demos/03_losses_and_gradients.py
"""

import numpy as np

from vlnav import graphworld as gw
from vlnav import objectives as ob
from vlnav.model import NavModel, rollout
from vlnav.nn import SGD


def make_episodes(n: int = 2):
    graph = gw.generate_world(seed=5, n_nodes=8, avg_degree=3.0, d_v=16)
    rng = np.random.default_rng(2)
    out = []
    while len(out) < n:
        path = gw.sample_episode_path(graph, rng, t_max=8)
        if path is None:
            continue
        tokens = gw.synth_instruction(path, graph, seed=5, vocab_size=64,
                                      l_max=24)
        out.append(gw.Episode(graph=graph, start=path[0], goal=path[-1],
                              path=tuple(path), tokens=tokens,
                              episode_id=f"demo-{len(out)}", split="demo"))
    return out


def main():
    episodes = make_episodes()
    model = NavModel(np.random.default_rng((11, 1)), d_v=16, d_h=32,
                     vocab_size=64)
    opt = SGD(model.parameters(), lr=0.003, momentum=0.9)

    il_batch = [rollout(model, ep, "teacher", max_steps=8)
                for ep in episodes]
    rl_rng = np.random.default_rng((11, 2))
    rl_batch = [rollout(model, ep, "sample", rl_rng, max_steps=8)
                for ep in episodes]

    terms = ob.joint_step(il_batch, rl_batch, model, opt,
                          aux_weights=(1.0, 1.0, 1.0, 1.0),
                          rng=np.random.default_rng((11, 3)))
    print("one optimizer step; loss terms:")
    for name, value in terms.items():
        print(f"  {name:<12} {value:+.4f}")

    # Spot-check one analytic gradient against central differences.
    ep = episodes[0]
    model.zero_grad()
    ob.il_loss(rollout(model, ep, "teacher", max_steps=8)).backward()
    name, p = next((n, q) for n, q in model.named_parameters()
                   if q.grad is not None and np.abs(q.grad).max() > 1e-4)
    idx = int(np.argmax(np.abs(p.grad)))
    analytic = p.grad.reshape(-1)[idx]

    h = 1e-4
    flat = p.data.reshape(-1)
    keep = flat[idx]
    flat[idx] = keep + h
    up = float(ob.il_loss(rollout(model, ep, "teacher", max_steps=8)).data)
    flat[idx] = keep - h
    down = float(ob.il_loss(rollout(model, ep, "teacher", max_steps=8)).data)
    flat[idx] = keep
    fd = (up - down) / (2 * h)
    rel = abs(fd - analytic) / max(abs(fd), abs(analytic))
    print(f"\nIL gradient check at {name}[{idx}]:")
    print(f"  analytic {analytic:+.6f}  finite-diff {fd:+.6f}  "
          f"rel err {rel:.1e}")

    # Reward shaping behind the RL term.
    rec = rl_batch[0]
    rewards = ob.compute_rewards(rec.trajectory, rec.episode, rec.stopped,
                                 success_radius=1.0)
    adv = ob.compute_advantages(rec, rewards, gamma=0.9)
    print(f"\nsampled walk {rec.trajectory} toward goal {rec.episode.goal}:")
    print(f"  rewards    {[f'{r:+.2f}' for r in rewards]}")
    print(f"  returns    {[f'{g:+.2f}' for g in adv.returns]}")
    print(f"  advantages {[f'{a:+.2f}' for a in adv.advantages]}")


if __name__ == "__main__":
    main()
