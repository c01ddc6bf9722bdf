"""Deterministic synthetic navigation worlds.

A world is a connected random geometric graph in a 10 m square. Nodes carry
latent appearance vectors; panoramic observations and move candidates are pure
functions of (latent, view direction), so the same seed always produces the
same bytes.

Two quantizations keep float determinism airtight:

* Edge lengths are rounded to multiples of 2^-20 m. Path sums then stay well
  below 2^53 quanta, so shortest-path distances are exact integers in disguise
  and agree bitwise with any correctly ordered reference implementation.
* Angles snap to a grid of 2^20 units per turn, so a heading rotated by 2 pi
  lands on the same grid point and yields an identical observation.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

TWO_PI = 2.0 * math.pi
ANGLE_UNITS = 1 << 20
LENGTH_UNITS = 1 << 20
WORLD_SIZE = 10.0
N_VIEWS = 36
ELEVATIONS = (-math.pi / 6.0, 0.0, math.pi / 6.0)

# Token layout for templated instructions.
PAD, BOS, EOS, STOP_WORD = 0, 1, 2, 3
DIR_STRAIGHT, DIR_LEFT, DIR_RIGHT, DIR_BACK, DIR_UP, DIR_DOWN = 4, 5, 6, 7, 8, 9
LANDMARK_BASE = 10

_BASIS_SEED = 202406  # direction embedding used by view features
_LANDMARK_SEED = 331199  # projection assigning landmark words to latents
_basis_cache: dict[int, np.ndarray] = {}
_landmark_cache: dict[tuple[int, int], np.ndarray] = {}


def canonical_angle(theta: float) -> float:
    """Snap an angle to the canonical grid in [0, 2 pi)."""
    unit = int(round(theta / TWO_PI * ANGLE_UNITS)) % ANGLE_UNITS
    return unit * (TWO_PI / ANGLE_UNITS)


def signed_delta(a: float, b: float) -> float:
    """Smallest signed rotation from b to a, in (-pi, pi]."""
    d = math.fmod(a - b, TWO_PI)
    if d > math.pi:
        d -= TWO_PI
    elif d <= -math.pi:
        d += TWO_PI
    return d


def quantized_length(d: float) -> float:
    """Edge length as a positive multiple of 2^-20 m."""
    return max(round(d * LENGTH_UNITS), 1) / LENGTH_UNITS


def _direction_basis(d_v: int) -> np.ndarray:
    if d_v not in _basis_cache:
        rng = np.random.default_rng(_BASIS_SEED)
        _basis_cache[d_v] = rng.standard_normal((d_v, 4))
    return _basis_cache[d_v]


def _landmark_proj(n_landmarks: int, d_v: int) -> np.ndarray:
    key = (n_landmarks, d_v)
    if key not in _landmark_cache:
        rng = np.random.default_rng(_LANDMARK_SEED)
        _landmark_cache[key] = rng.standard_normal((n_landmarks, d_v))
    return _landmark_cache[key]


def view_feature(latent: np.ndarray, world_theta: float, phi: float) -> np.ndarray:
    """Appearance of a node latent seen from a world-frame direction."""
    t = canonical_angle(world_theta)
    q = np.array([math.sin(t), math.cos(t), math.sin(phi), math.cos(phi)])
    return np.tanh(latent + _direction_basis(latent.shape[0]) @ q)


@dataclass
class NavGraph:
    seed: int
    positions: np.ndarray  # (n, 2) meters
    latents: np.ndarray  # (n, d_v)
    neighbors: tuple  # per node, ascending ids
    edges: tuple  # sorted (a, b) pairs with a < b
    _dist: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def n_nodes(self) -> int:
        return self.positions.shape[0]

    def edge_length(self, a: int, b: int) -> float:
        d = math.dist(tuple(self.positions[a]), tuple(self.positions[b]))
        return quantized_length(d)

    def heading_to(self, a: int, b: int) -> float:
        dx = float(self.positions[b][0] - self.positions[a][0])
        dy = float(self.positions[b][1] - self.positions[a][1])
        return canonical_angle(math.atan2(dy, dx))

    def euclidean(self, a: int, b: int) -> float:
        return math.dist(tuple(self.positions[a]), tuple(self.positions[b]))

    def all_pairs(self) -> np.ndarray:
        """Geodesic distance matrix over quantized edge lengths."""
        if self._dist is None:
            n = self.n_nodes
            rows, cols, vals = [], [], []
            for a, b in self.edges:
                w = self.edge_length(a, b)
                rows += [a, b]
                cols += [b, a]
                vals += [w, w]
            mat = csr_matrix((vals, (rows, cols)), shape=(n, n))
            self._dist = dijkstra(mat, directed=False)
        return self._dist

    def distance(self, a: int, b: int) -> float:
        return float(self.all_pairs()[a, b])

    def path_length(self, path) -> float:
        return sum(self.edge_length(u, v) for u, v in zip(path, path[1:]))


@dataclass(frozen=True)
class PanoramicObservation:
    node_id: int
    features: np.ndarray  # (36, d_v)
    quads: np.ndarray  # (36, 4) heading-relative (sin t, cos t, sin p, cos p)


@dataclass(frozen=True)
class Candidate:
    target: int | None  # None for the stop action
    feature: np.ndarray  # (d_v,)
    quad: np.ndarray  # (4,)
    is_stop: bool


@dataclass
class Episode:
    graph: NavGraph
    start: int
    goal: int
    path: tuple  # teacher shortest path, start..goal inclusive
    tokens: tuple  # instruction token ids, BOS..EOS
    episode_id: str
    split: str


def generate_world(seed: int, n_nodes: int, avg_degree: float,
                   d_v: int = 32) -> NavGraph:
    """Connected random geometric graph; bit-reproducible per seed."""
    if n_nodes < 2:
        raise ValueError(f"n_nodes must be >= 2, got {n_nodes}")
    if avg_degree < 1:
        raise ValueError(f"avg_degree must be >= 1, got {avg_degree}")
    rng = np.random.default_rng(seed)
    # Order matters: loaders redraw positions to reach the latent stream.
    positions = rng.uniform(0.0, WORLD_SIZE, size=(n_nodes, 2))
    latents = rng.standard_normal((n_nodes, d_v))

    k = min(n_nodes - 1, max(1, int(round(avg_degree))))
    edge_set: set = set()
    for i in range(n_nodes):
        d = np.linalg.norm(positions - positions[i], axis=1)
        order = np.argsort(d, kind="stable")
        picked = 0
        for j in order:
            j = int(j)
            if j == i:
                continue
            edge_set.add((min(i, j), max(i, j)))
            picked += 1
            if picked == k:
                break

    # Repair pass: greedily join components by their closest node pair.
    parent = list(range(n_nodes))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edge_set:
        parent[find(a)] = find(b)
    while len({find(i) for i in range(n_nodes)}) > 1:
        best = None
        for i in range(n_nodes):
            for j in range(i + 1, n_nodes):
                if find(i) != find(j):
                    cand = (float(np.linalg.norm(positions[i] - positions[j])), i, j)
                    if best is None or cand < best:
                        best = cand
        _, i, j = best
        edge_set.add((i, j))
        parent[find(i)] = find(j)

    edges = tuple(sorted(edge_set))
    nbrs = [[] for _ in range(n_nodes)]
    for a, b in edges:
        nbrs[a].append(b)
        nbrs[b].append(a)
    neighbors = tuple(tuple(sorted(ns)) for ns in nbrs)
    return NavGraph(seed=seed, positions=positions, latents=latents,
                    neighbors=neighbors, edges=edges)


def observe(graph: NavGraph, node: int, heading: float) -> PanoramicObservation:
    """36-view panorama: 12 headings at 30 degree steps x 3 elevations."""
    if not 0 <= node < graph.n_nodes:
        raise KeyError(f"unknown node id {node}")
    latent = graph.latents[node]
    d_v = latent.shape[0]
    features = np.empty((N_VIEWS, d_v))
    quads = np.empty((N_VIEWS, 4))
    for h in range(12):
        theta_rel = h * (TWO_PI / 12.0)
        world = heading + theta_rel
        for e, phi in enumerate(ELEVATIONS):
            i = h * 3 + e
            features[i] = view_feature(latent, world, phi)
            quads[i] = (math.sin(theta_rel), math.cos(theta_rel),
                        math.sin(phi), math.cos(phi))
    return PanoramicObservation(node_id=node, features=features, quads=quads)


def candidates(graph: NavGraph, node: int, heading: float) -> list[Candidate]:
    """One candidate per neighbour (ascending id) plus a trailing stop."""
    if not 0 <= node < graph.n_nodes:
        raise KeyError(f"unknown node id {node}")
    d_v = graph.latents.shape[1]
    out = []
    for nbr in graph.neighbors[node]:
        world = graph.heading_to(node, nbr)
        rel = canonical_angle(world - heading)
        quad = np.array([math.sin(rel), math.cos(rel), 0.0, 1.0])
        out.append(Candidate(target=nbr,
                             feature=view_feature(graph.latents[nbr], world, 0.0),
                             quad=quad, is_stop=False))
    out.append(Candidate(target=None, feature=np.zeros(d_v),
                         quad=np.zeros(4), is_stop=True))
    return out


def teacher_action(episode: Episode, current_node: int) -> int:
    """Index of the stop action at the goal, else the steepest-descent move."""
    graph, goal = episode.graph, episode.goal
    nbrs = graph.neighbors[current_node]
    if current_node == goal:
        return len(nbrs)  # stop is last
    dist = graph.all_pairs()
    best_idx, best_d = 0, math.inf
    for idx, nbr in enumerate(nbrs):
        d = dist[nbr, goal]
        if d < best_d:  # strict: ties keep the lowest node id
            best_idx, best_d = idx, d
    return best_idx


def greedy_teacher_path(graph: NavGraph, start: int, goal: int,
                        max_hops: int) -> tuple | None:
    """Replay the teacher rule; None if it exceeds max_hops."""
    dist = graph.all_pairs()
    path = [start]
    node = start
    while node != goal:
        if len(path) - 1 >= max_hops:
            return None
        nbrs = graph.neighbors[node]
        best, best_d = None, math.inf
        for nbr in nbrs:
            if dist[nbr, goal] < best_d:
                best, best_d = nbr, dist[nbr, goal]
        node = best
        path.append(node)
    return tuple(path)


def synth_instruction(path, graph: NavGraph, seed: int,
                      vocab_size: int = 64, l_max: int = 40) -> tuple:
    """Templated instruction: per hop a turn-direction word and a landmark word.

    Deterministic in its arguments; `seed` is reserved for grammar variation
    and does not perturb the template today.
    """
    if len(path) == 0:
        raise ValueError("empty path")
    if len(path) == 1:
        return (BOS, STOP_WORD, EOS)
    n_landmarks = vocab_size - LANDMARK_BASE
    proj = _landmark_proj(n_landmarks, graph.latents.shape[1])
    tokens = [BOS]
    heading = 0.0
    for u, v in zip(path, path[1:]):
        world = graph.heading_to(u, v)
        delta = signed_delta(world, heading)
        if abs(delta) <= math.pi / 6.0:
            tokens.append(DIR_STRAIGHT)
        elif math.pi / 6.0 < delta <= 5.0 * math.pi / 6.0:
            tokens.append(DIR_LEFT)
        elif -5.0 * math.pi / 6.0 <= delta < -math.pi / 6.0:
            tokens.append(DIR_RIGHT)
        else:
            tokens.append(DIR_BACK)
        tokens.append(LANDMARK_BASE + int(np.argmax(proj @ graph.latents[v])))
        heading = world
        if len(tokens) >= l_max - 1:
            break
    tokens.append(EOS)
    return tuple(tokens[:l_max])


def sample_episode_path(graph: NavGraph, rng: np.random.Generator,
                        t_max: int) -> tuple | None:
    """Draw (start, goal) whose greedy teacher path is exactly shortest.

    The greedy rule can detour on weighted graphs; rejecting those pairs keeps
    the Episode invariant (teacher_path is a shortest path) airtight.
    """
    dist = graph.all_pairs()
    n = graph.n_nodes
    for _ in range(200):
        start = int(rng.integers(n))
        goal = int(rng.integers(n))
        if goal == start:
            continue
        path = greedy_teacher_path(graph, start, goal, max_hops=t_max - 1)
        if path is None:
            continue
        if graph.path_length(path) == dist[start, goal]:
            return path
    return None


def _largest_remainder(total: int, weights) -> list:
    raw = [total * w for w in weights]
    base = [int(math.floor(r)) for r in raw]
    short = total - sum(base)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - base[i]), i))
    for i in order[:short]:
        base[i] += 1
    return base


def make_dataset(world_seeds, episodes_per_world: int, splits,
                 d_v: int = 32, n_nodes: int = 10, avg_degree: float = 3.0,
                 t_max: int = 10, vocab_size: int = 64,
                 l_max: int = 40) -> list[Episode]:
    """Generate worlds and episodes split into seen/unseen partitions.

    `splits` are fractions (train-seen, val-seen, val-unseen, test-unseen)
    summing to 1. Unseen splits draw from held-out tail worlds whose seeds
    never appear in the seen splits.
    """
    seeds = list(world_seeds)
    if not seeds:
        raise ValueError("world_seeds is empty")
    if len(set(seeds)) != len(seeds):
        raise ValueError("duplicate world seeds would overlap seen/unseen sets")
    f_train, f_vs, f_vu, f_test = splits
    if any(f < 0 for f in splits):
        raise ValueError("split fractions must be nonnegative")
    if abs(sum(splits) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must sum to 1, got {sum(splits)}")

    n_worlds = len(seeds)
    seen_frac, unseen_frac = f_train + f_vs, f_vu + f_test
    if unseen_frac == 0.0:
        n_unseen = 0
    elif seen_frac == 0.0:
        n_unseen = n_worlds
    else:
        if n_worlds < 2:
            raise ValueError("need at least 2 worlds to hold out unseen ones")
        n_unseen = min(n_worlds - 1, max(1, round(n_worlds * unseen_frac)))
    seen_seeds = seeds[:n_worlds - n_unseen]
    unseen_seeds = seeds[n_worlds - n_unseen:]

    graphs = {s: generate_world(s, n_nodes, avg_degree, d_v) for s in seeds}
    total = n_worlds * episodes_per_world
    counts = _largest_remainder(total, splits)

    def side_episodes(side_seeds, count) -> list[Episode]:
        # Round-robin across the side's worlds with per-world episode indices.
        out = []
        for k in range(count):
            ws = side_seeds[k % len(side_seeds)]
            idx = k // len(side_seeds)
            g = graphs[ws]
            rng = np.random.default_rng((ws, idx))
            path = sample_episode_path(g, rng, t_max)
            if path is None:
                raise RuntimeError(f"world {ws} yields no valid episodes")
            tokens = synth_instruction(path, g, seed=ws,
                                       vocab_size=vocab_size, l_max=l_max)
            out.append(Episode(graph=g, start=path[0], goal=path[-1],
                               path=path, tokens=tokens,
                               episode_id=f"w{ws}e{idx:03d}", split=""))
        return out

    episodes: list[Episode] = []
    if seen_seeds:
        seen_eps = side_episodes(seen_seeds, counts[0] + counts[1])
        for i, ep in enumerate(seen_eps):
            ep.split = "train-seen" if i < counts[0] else "val-seen"
        episodes += seen_eps
    if unseen_seeds:
        unseen_eps = side_episodes(unseen_seeds, counts[2] + counts[3])
        for i, ep in enumerate(unseen_eps):
            ep.split = "val-unseen" if i < counts[2] else "test-unseen"
        episodes += unseen_eps
    return episodes


# -- plain-text serialization -------------------------------------------------

def graph_to_json(graph: NavGraph) -> str:
    doc = {
        "seed": graph.seed,
        "nodes": [{"id": i, "x": float(graph.positions[i][0]),
                   "y": float(graph.positions[i][1])}
                  for i in range(graph.n_nodes)],
        "edges": [[a, b] for a, b in graph.edges],
    }
    return json.dumps(doc, separators=(", ", ": "))


def graph_from_json(text: str, d_v: int) -> NavGraph:
    """Rebuild a graph; latents are regenerated from the stored seed."""
    doc = json.loads(text)
    n = len(doc["nodes"])
    rng = np.random.default_rng(doc["seed"])
    positions = rng.uniform(0.0, WORLD_SIZE, size=(n, 2))
    latents = rng.standard_normal((n, d_v))
    for rec in doc["nodes"]:
        if positions[rec["id"]][0] != rec["x"] or positions[rec["id"]][1] != rec["y"]:
            raise ValueError(f"graph file does not match seed {doc['seed']}: "
                             f"node {rec['id']} position differs")
    edges = tuple(sorted((min(a, b), max(a, b)) for a, b in doc["edges"]))
    nbrs = [[] for _ in range(n)]
    for a, b in edges:
        nbrs[a].append(b)
        nbrs[b].append(a)
    return NavGraph(seed=doc["seed"], positions=positions, latents=latents,
                    neighbors=tuple(tuple(sorted(x)) for x in nbrs), edges=edges)


def save_dataset(episodes: list[Episode], out_dir: str) -> None:
    worlds_dir = os.path.join(out_dir, "worlds")
    os.makedirs(worlds_dir, exist_ok=True)
    seen: dict[int, NavGraph] = {}
    for ep in episodes:
        seen.setdefault(ep.graph.seed, ep.graph)
    for s in sorted(seen):
        with open(os.path.join(worlds_dir, f"w{s}.json"), "w") as fh:
            fh.write(graph_to_json(seen[s]) + "\n")
    with open(os.path.join(out_dir, "episodes.jsonl"), "w") as fh:
        for ep in episodes:
            row = {"episode_id": ep.episode_id, "world_seed": ep.graph.seed,
                   "start": ep.start, "goal": ep.goal, "path": list(ep.path),
                   "token_ids": list(ep.tokens), "split": ep.split}
            fh.write(json.dumps(row, separators=(", ", ": ")) + "\n")


def load_dataset(out_dir: str, d_v: int) -> list[Episode]:
    worlds_dir = os.path.join(out_dir, "worlds")
    graphs: dict[int, NavGraph] = {}
    for name in sorted(os.listdir(worlds_dir)):
        with open(os.path.join(worlds_dir, name)) as fh:
            g = graph_from_json(fh.read(), d_v)
        graphs[g.seed] = g
    episodes = []
    with open(os.path.join(out_dir, "episodes.jsonl")) as fh:
        for line in fh:
            row = json.loads(line)
            episodes.append(Episode(
                graph=graphs[row["world_seed"]], start=row["start"],
                goal=row["goal"], path=tuple(row["path"]),
                tokens=tuple(row["token_ids"]), episode_id=row["episode_id"],
                split=row["split"]))
    return episodes
