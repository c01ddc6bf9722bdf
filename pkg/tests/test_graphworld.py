"""World generation, observations, teacher paths, datasets.

Oracles are written independently of the implementation: BFS for
connectivity, Floyd-Warshall for distances, direct atan2 for candidate
angles, and a re-derivation of the turn quantization for instructions.
"""

import json
import math

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vlnav import graphworld as gw


def bfs_reachable(n_nodes, edges, source=0):
    adj = {i: [] for i in range(n_nodes)}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = {source}
    frontier = [source]
    while frontier:
        nxt = []
        for u in frontier:
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    nxt.append(v)
        frontier = nxt
    return seen


def floyd_warshall(graph):
    n = graph.n_nodes
    d = np.full((n, n), np.inf)
    np.fill_diagonal(d, 0.0)
    for a, b in graph.edges:
        w = gw.quantized_length(math.dist(tuple(graph.positions[a]),
                                          tuple(graph.positions[b])))
        d[a, b] = d[b, a] = w
    for k in range(n):
        for i in range(n):
            for j in range(n):
                if d[i, k] + d[k, j] < d[i, j]:
                    d[i, j] = d[i, k] + d[k, j]
    return d


class TestGenerateWorld:
    def test_two_nodes_one_edge(self):
        g = gw.generate_world(seed=7, n_nodes=2, avg_degree=1)
        assert g.edges == ((0, 1),)

    def test_deterministic(self):
        a = gw.generate_world(7, 10, 3)
        b = gw.generate_world(7, 10, 3)
        npt.assert_array_equal(a.positions, b.positions)
        npt.assert_array_equal(a.latents, b.latents)
        assert a.edges == b.edges

    def test_connected_bfs_oracle(self):
        g = gw.generate_world(7, 10, 3)
        assert bfs_reachable(g.n_nodes, g.edges) == set(range(10))

    @given(st.integers(0, 10_000), st.integers(2, 25))
    @settings(max_examples=40, deadline=None)
    def test_connected_for_any_seed(self, seed, n):
        g = gw.generate_world(seed, n, 3, d_v=4)
        assert bfs_reachable(n, g.edges) == set(range(n))
        assert all(len(ns) >= 1 for ns in g.neighbors)

    def test_rejects_tiny(self):
        with pytest.raises(ValueError):
            gw.generate_world(7, 1, 3)
        with pytest.raises(ValueError):
            gw.generate_world(7, 5, 0.5)

    def test_positions_finite_lengths_positive(self):
        g = gw.generate_world(3, 15, 3)
        assert np.isfinite(g.positions).all()
        assert all(g.edge_length(a, b) > 0 for a, b in g.edges)


class TestDistances:
    @pytest.mark.parametrize("seed", [0, 1, 7, 42])
    def test_exactly_match_floyd_warshall(self, seed):
        g = gw.generate_world(seed, 12, 3, d_v=4)
        npt.assert_array_equal(np.asarray(g.all_pairs()), floyd_warshall(g))

    def test_edge_lengths_are_quanta(self):
        g = gw.generate_world(7, 10, 3)
        for a, b in g.edges:
            w = g.edge_length(a, b)
            assert w * gw.LENGTH_UNITS == round(w * gw.LENGTH_UNITS)


class TestAngles:
    def test_canonical_periodic(self):
        rng = np.random.default_rng(0)
        for theta in rng.uniform(-20, 20, size=200):
            assert gw.canonical_angle(theta) == gw.canonical_angle(theta + gw.TWO_PI)

    def test_canonical_range(self):
        for theta in [-0.1, 0.0, 1.0, 6.28, 100.0]:
            c = gw.canonical_angle(theta)
            assert 0.0 <= c < gw.TWO_PI

    def test_signed_delta(self):
        assert gw.signed_delta(0.1, 0.0) == pytest.approx(0.1)
        assert gw.signed_delta(0.0, 0.1) == pytest.approx(-0.1)
        assert gw.signed_delta(math.pi + 0.2, 0.0) == pytest.approx(-math.pi + 0.2)


class TestObserve:
    def test_exactly_36_views(self):
        g = gw.generate_world(7, 10, 3)
        obs = gw.observe(g, 0, 0.3)
        assert obs.features.shape == (36, 32)
        assert obs.quads.shape == (36, 4)

    def test_deterministic(self):
        g = gw.generate_world(7, 10, 3)
        a, b = gw.observe(g, 4, 1.1), gw.observe(g, 4, 1.1)
        npt.assert_array_equal(a.features, b.features)
        npt.assert_array_equal(a.quads, b.quads)

    def test_heading_plus_two_pi_identical(self):
        g = gw.generate_world(7, 10, 3)
        rng = np.random.default_rng(5)
        for h in rng.uniform(0, gw.TWO_PI, size=20):
            a = gw.observe(g, 2, float(h))
            b = gw.observe(g, 2, float(h) + gw.TWO_PI)
            npt.assert_array_equal(a.features, b.features)
            npt.assert_array_equal(a.quads, b.quads)

    def test_quads_unit_normalized(self):
        g = gw.generate_world(7, 10, 3)
        q = gw.observe(g, 0, 0.7).quads
        npt.assert_allclose(q[:, 0] ** 2 + q[:, 1] ** 2, 1.0, atol=1e-6)
        npt.assert_allclose(q[:, 2] ** 2 + q[:, 3] ** 2, 1.0, atol=1e-6)

    def test_unknown_node(self):
        g = gw.generate_world(7, 10, 3)
        with pytest.raises(KeyError):
            gw.observe(g, 99, 0.0)

    def test_features_depend_on_direction(self):
        g = gw.generate_world(7, 10, 3)
        obs = gw.observe(g, 0, 0.0)
        assert not np.allclose(obs.features[0], obs.features[18])


class TestCandidates:
    def test_count_is_degree_plus_one(self):
        g = gw.generate_world(7, 10, 3)
        for node in range(g.n_nodes):
            cands = gw.candidates(g, node, 0.0)
            assert len(cands) == len(g.neighbors[node]) + 1
            assert cands[-1].is_stop
            assert sum(c.is_stop for c in cands) == 1

    def test_stop_is_all_zeros(self):
        g = gw.generate_world(7, 10, 3)
        stop = gw.candidates(g, 0, 0.4)[-1]
        npt.assert_array_equal(stop.feature, 0.0)
        npt.assert_array_equal(stop.quad, 0.0)
        assert stop.target is None

    def test_quads_match_atan2_oracle(self):
        g = gw.generate_world(7, 10, 3)
        heading = 0.9
        for node in range(g.n_nodes):
            for cand in gw.candidates(g, node, heading)[:-1]:
                dx = g.positions[cand.target][0] - g.positions[node][0]
                dy = g.positions[cand.target][1] - g.positions[node][1]
                rel = math.atan2(dy, dx) - heading
                npt.assert_allclose(cand.quad[0], math.sin(rel), atol=1e-5)
                npt.assert_allclose(cand.quad[1], math.cos(rel), atol=1e-5)
                assert cand.quad[0] ** 2 + cand.quad[1] ** 2 == pytest.approx(1.0, abs=1e-6)
                assert cand.quad[2] == 0.0 and cand.quad[3] == 1.0

    def test_degree_one_node_has_two_candidates(self):
        g = gw.generate_world(7, 2, 1)
        assert len(gw.candidates(g, 0, 0.0)) == 2

    def test_unknown_node(self):
        g = gw.generate_world(7, 10, 3)
        with pytest.raises(KeyError):
            gw.candidates(g, -1, 0.0)


def make_episode(graph, start, goal, split="train-seen"):
    path = gw.greedy_teacher_path(graph, start, goal, max_hops=graph.n_nodes)
    tokens = gw.synth_instruction(path, graph, seed=0)
    return gw.Episode(graph=graph, start=start, goal=goal, path=path,
                      tokens=tokens, episode_id="t", split=split)


class TestTeacherAction:
    def test_stop_at_goal(self):
        g = gw.generate_world(7, 10, 3)
        ep = make_episode(g, 0, 5)
        assert gw.teacher_action(ep, 5) == len(g.neighbors[5])

    def test_adjacent_to_goal(self):
        g = gw.generate_world(7, 2, 1)
        ep = make_episode(g, 0, 1)
        assert gw.teacher_action(ep, 0) == 0

    def test_matches_floyd_warshall_oracle(self):
        g = gw.generate_world(11, 10, 3, d_v=4)
        d = floyd_warshall(g)
        for goal in range(g.n_nodes):
            ep = make_episode(g, 0 if goal else 1, goal)
            for node in range(g.n_nodes):
                idx = gw.teacher_action(ep, node)
                nbrs = g.neighbors[node]
                if node == goal:
                    assert idx == len(nbrs)
                else:
                    best = min(range(len(nbrs)), key=lambda i: (d[nbrs[i], goal], i))
                    assert idx == best

    def test_replay_reaches_goal(self):
        g = gw.generate_world(13, 10, 3, d_v=4)
        rng = np.random.default_rng(2)
        for _ in range(20):
            path = gw.sample_episode_path(g, rng, t_max=10)
            ep = gw.Episode(graph=g, start=path[0], goal=path[-1], path=path,
                            tokens=(1, 2), episode_id="t", split="train-seen")
            node, moves = ep.start, 0
            while True:
                idx = gw.teacher_action(ep, node)
                if idx == len(g.neighbors[node]):
                    break
                node = g.neighbors[node][idx]
                moves += 1
            assert node == ep.goal
            assert moves == len(ep.path) - 1


class TestSynthInstruction:
    def test_single_node(self):
        g = gw.generate_world(7, 10, 3)
        assert gw.synth_instruction((4,), g, seed=0) == (gw.BOS, gw.STOP_WORD, gw.EOS)

    def test_deterministic(self):
        g = gw.generate_world(7, 10, 3)
        path = gw.greedy_teacher_path(g, 0, 5, max_hops=9)
        assert gw.synth_instruction(path, g, 0) == gw.synth_instruction(path, g, 0)

    def test_empty_path_rejected(self):
        g = gw.generate_world(7, 10, 3)
        with pytest.raises(ValueError):
            gw.synth_instruction((), g, seed=0)

    def test_three_hop_structure_and_direction_oracle(self):
        g = gw.generate_world(19, 12, 3, d_v=4)
        rng = np.random.default_rng(3)
        path = None
        while path is None or len(path) != 4:
            path = gw.sample_episode_path(g, rng, t_max=10)
        tokens = gw.synth_instruction(path, g, seed=0)
        assert tokens[0] == gw.BOS and tokens[-1] == gw.EOS
        assert len(tokens) == 2 + 2 * 3
        heading = 0.0
        for hop, (u, v) in enumerate(zip(path, path[1:])):
            world = math.atan2(g.positions[v][1] - g.positions[u][1],
                               g.positions[v][0] - g.positions[u][0])
            delta = (world - heading) % (2 * math.pi)
            if delta > math.pi:
                delta -= 2 * math.pi
            if abs(delta) <= math.pi / 6:
                expect = gw.DIR_STRAIGHT
            elif math.pi / 6 < delta <= 5 * math.pi / 6:
                expect = gw.DIR_LEFT
            elif -5 * math.pi / 6 <= delta < -math.pi / 6:
                expect = gw.DIR_RIGHT
            else:
                expect = gw.DIR_BACK
            assert tokens[1 + 2 * hop] == expect
            assert tokens[2 + 2 * hop] >= gw.LANDMARK_BASE
            heading = world

    def test_tokens_in_vocab_and_bounded(self):
        g = gw.generate_world(7, 10, 3)
        rng = np.random.default_rng(4)
        for _ in range(10):
            path = gw.sample_episode_path(g, rng, t_max=10)
            tokens = gw.synth_instruction(path, g, 0)
            assert 1 <= len(tokens) <= 40
            assert all(0 <= t < 64 for t in tokens)
            assert tokens[0] == gw.BOS and tokens[-1] == gw.EOS


DEFAULT_SPLITS = (0.5, 0.1, 0.2, 0.2)


class TestMakeDataset:
    def test_unseen_worlds_disjoint(self):
        eps = gw.make_dataset([101, 102, 103, 104], 10, DEFAULT_SPLITS, d_v=4)
        seen_worlds = {e.graph.seed for e in eps
                       if e.split in ("train-seen", "val-seen")}
        unseen_worlds = {e.graph.seed for e in eps
                         if e.split in ("val-unseen", "test-unseen")}
        assert seen_worlds == {101, 102}
        assert unseen_worlds == {103, 104}
        assert not (seen_worlds & unseen_worlds)

    def test_empty_seed_list(self):
        with pytest.raises(ValueError):
            gw.make_dataset([], 10, DEFAULT_SPLITS)

    def test_duplicate_seeds(self):
        with pytest.raises(ValueError):
            gw.make_dataset([5, 5], 10, DEFAULT_SPLITS)

    def test_bad_fractions(self):
        with pytest.raises(ValueError):
            gw.make_dataset([1, 2], 10, (0.5, 0.5, 0.5, 0.5))

    def test_counts_match_fractions_oracle(self):
        eps = gw.make_dataset([101, 102, 103, 104], 50, DEFAULT_SPLITS, d_v=4)
        n = len(eps)
        assert n == 200
        counts = {}
        for e in eps:
            counts[e.split] = counts.get(e.split, 0) + 1
        for split, frac in zip(
                ("train-seen", "val-seen", "val-unseen", "test-unseen"),
                DEFAULT_SPLITS):
            assert abs(counts[split] - n * frac) <= 1, (split, counts)

    def test_paths_are_shortest_and_bounded(self):
        eps = gw.make_dataset([7, 8], 20, DEFAULT_SPLITS, d_v=4)
        for e in eps:
            d = floyd_warshall(e.graph)
            assert e.graph.path_length(e.path) == d[e.start, e.goal]
            assert 2 <= len(e.path) <= 10

    def test_deterministic(self):
        a = gw.make_dataset([7, 8], 5, DEFAULT_SPLITS, d_v=4)
        b = gw.make_dataset([7, 8], 5, DEFAULT_SPLITS, d_v=4)
        assert [(e.episode_id, e.path, e.tokens, e.split) for e in a] == \
               [(e.episode_id, e.path, e.tokens, e.split) for e in b]


class TestSerialization:
    def test_graph_roundtrip(self, tmp_path):
        g = gw.generate_world(7, 10, 3)
        text = gw.graph_to_json(g)
        g2 = gw.graph_from_json(text, d_v=32)
        npt.assert_array_equal(g.positions, g2.positions)
        npt.assert_array_equal(g.latents, g2.latents)
        assert g.edges == g2.edges
        assert gw.graph_to_json(g2) == text

    def test_graph_json_keys(self):
        doc = json.loads(gw.graph_to_json(gw.generate_world(7, 3, 2, d_v=4)))
        assert set(doc) == {"seed", "nodes", "edges"}
        assert set(doc["nodes"][0]) == {"id", "x", "y"}

    def test_wrong_seed_detected(self):
        g = gw.generate_world(7, 10, 3)
        doc = json.loads(gw.graph_to_json(g))
        doc["seed"] = 8
        with pytest.raises(ValueError):
            gw.graph_from_json(json.dumps(doc), d_v=32)

    def test_dataset_roundtrip(self, tmp_path):
        eps = gw.make_dataset([7, 8], 5, DEFAULT_SPLITS, d_v=8)
        gw.save_dataset(eps, str(tmp_path))
        loaded = gw.load_dataset(str(tmp_path), d_v=8)
        assert len(loaded) == len(eps)
        for a, b in zip(eps, loaded):
            assert (a.episode_id, a.start, a.goal, a.path, a.tokens, a.split) == \
                   (b.episode_id, b.start, b.goal, b.path, b.tokens, b.split)
            npt.assert_array_equal(a.graph.latents, b.graph.latents)

    def test_episode_rows_have_contract_keys(self, tmp_path):
        eps = gw.make_dataset([7, 8], 3, DEFAULT_SPLITS, d_v=4)
        gw.save_dataset(eps, str(tmp_path))
        with open(tmp_path / "episodes.jsonl") as fh:
            row = json.loads(fh.readline())
        assert set(row) == {"episode_id", "world_seed", "start", "goal",
                            "path", "token_ids", "split"}

    def test_save_is_byte_deterministic(self, tmp_path):
        eps = gw.make_dataset([7, 8], 5, DEFAULT_SPLITS, d_v=8)
        d1, d2 = tmp_path / "a", tmp_path / "b"
        gw.save_dataset(eps, str(d1))
        gw.save_dataset(gw.make_dataset([7, 8], 5, DEFAULT_SPLITS, d_v=8), str(d2))
        assert (d1 / "episodes.jsonl").read_bytes() == (d2 / "episodes.jsonl").read_bytes()
        assert (d1 / "worlds" / "w7.json").read_bytes() == (d2 / "worlds" / "w7.json").read_bytes()
