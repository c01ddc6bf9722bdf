"""How one trajectory scores: NE, TL, SR, OR and SPL side by side.

Run: python3 demos/04_metrics.py
"""

from vlnav import graphworld as gw
from vlnav import metrics


def main():
    graph = gw.generate_world(seed=9, n_nodes=8, avg_degree=3.0, d_v=8)
    start = 0
    goal = max(range(graph.n_nodes),
               key=lambda v: graph.distance(start, v))
    shortest = graph.distance(start, goal)
    print(f"start {start}, goal {goal}, shortest path {shortest:.2f}m, "
          f"success radius 1.0m\n")

    def shortest_walk():
        walk = [start]
        while walk[-1] != goal:
            walk.append(min(graph.neighbors[walk[-1]],
                            key=lambda v: graph.distance(v, goal)))
        return walk

    direct = shortest_walk()
    detour = [direct[0], direct[1], direct[0]] + direct
    overshoot = direct[:-1] + [direct[-1], direct[-2]]
    walks = [
        ("shortest path, stop at goal", direct),
        ("detour first, still reach goal", detour),
        ("reach goal then wander off", overshoot),
        ("stop immediately", [start]),
    ]

    reports = []
    for label, walk in walks:
        ep = gw.Episode(graph=graph, start=start, goal=goal,
                        path=tuple(direct), tokens=(gw.BOS, gw.EOS),
                        episode_id=label, split="demo")
        r = metrics.evaluate(walk, ep)
        reports.append(r)
        print(f"{label}: walk {walk}")
        print(f"  TL {r['tl']:.2f}m  NE {r['ne']:.2f}m  SR {r['sr']}  "
              f"OR {r['or_']}  SPL {r['spl']:.3f}")

    print("\nSPL only credits success, scaled by path efficiency;")
    print("OR credits passing the goal even without stopping there.\n")
    print(metrics.summary_table({"demo": metrics.aggregate(reports)}))


if __name__ == "__main__":
    main()
