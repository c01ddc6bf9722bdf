"""Metric formulas against brute-force oracles."""

import json
import math

import numpy as np
import numpy.testing as npt
import pytest

from vlnav import graphworld as gw
from vlnav import metrics
from test_graphworld import floyd_warshall


def hand_built_square():
    """4-node path graph 0-1-2-3 on a line, 2 m apart."""
    positions = np.array([[0.0, 0.0], [2.0, 0.0], [4.0, 0.0], [6.0, 0.0]])
    edges = ((0, 1), (1, 2), (2, 3))
    nbrs = ((1,), (0, 2), (1, 3), (2,))
    return gw.NavGraph(seed=0, positions=positions,
                       latents=np.zeros((4, 4)), neighbors=nbrs, edges=edges)


def episode_on(graph, start, goal):
    path = gw.greedy_teacher_path(graph, start, goal, max_hops=10)
    return gw.Episode(graph=graph, start=start, goal=goal, path=path,
                      tokens=(1, 2), episode_id=f"e{start}{goal}",
                      split="val-seen")


class TestEvaluate:
    def test_teacher_path_is_perfect(self):
        ep = episode_on(hand_built_square(), 0, 3)
        r = metrics.evaluate(list(ep.path), ep)
        assert r["sr"] == 1 and r["or_"] == 1
        npt.assert_allclose(r["spl"], 1.0, atol=1e-12)
        npt.assert_allclose(r["ne"], 0.0, atol=1e-12)
        npt.assert_allclose(r["tl"], 6.0, atol=1e-6)

    def test_immediate_stop_far_from_goal(self):
        ep = episode_on(hand_built_square(), 0, 3)
        r = metrics.evaluate([0], ep)
        assert r["sr"] == 0 and r["or_"] == 0 and r["spl"] == 0.0
        npt.assert_allclose(r["tl"], 0.0, atol=1e-12)

    def test_double_length_success_halves_spl(self):
        ep = episode_on(hand_built_square(), 0, 2)
        walk = [0, 1, 0, 1, 2]  # TL = 8 m, twice the 4 m shortest path
        r = metrics.evaluate(walk, ep)
        assert r["sr"] == 1
        npt.assert_allclose(r["spl"], 0.5, atol=1e-9)

    def test_wrong_start_rejected(self):
        ep = episode_on(hand_built_square(), 0, 3)
        with pytest.raises(ValueError):
            metrics.evaluate([1, 2], ep)
        with pytest.raises(ValueError):
            metrics.evaluate([], ep)

    def test_oracle_visited_but_not_stopped(self):
        ep = episode_on(hand_built_square(), 0, 3)
        r = metrics.evaluate([0, 1, 2, 3, 2], ep)  # overshoot then back off
        assert r["or_"] == 1 and r["sr"] == 0
        assert r["spl"] == 0.0

    def test_euclidean_flag(self):
        g = hand_built_square()
        ep = episode_on(g, 0, 3)
        r = metrics.evaluate([0, 1], ep, distance="euclidean")
        npt.assert_allclose(r["ne"], 4.0, atol=1e-12)
        with pytest.raises(ValueError):
            metrics.evaluate([0], ep, distance="manhattan")

    def test_invariants_on_random_trajectories(self):
        g = gw.generate_world(3, 12, 3, d_v=4)
        rng = np.random.default_rng(0)
        for _ in range(200):
            start = int(rng.integers(12))
            goal = int(rng.integers(12))
            ep = episode_on(g, start, goal)
            traj = [start]
            for _ in range(int(rng.integers(0, 8))):
                traj.append(int(rng.choice(g.neighbors[traj[-1]])))
            r = metrics.evaluate(traj, ep)
            assert r["spl"] <= r["sr"] + 1e-12
            assert r["or_"] >= r["sr"]
            assert 0.0 <= r["spl"] <= 1.0
            assert r["tl"] >= 0.0 and r["ne"] >= 0.0

    def test_or_monotone_under_extension(self):
        g = gw.generate_world(5, 10, 3, d_v=4)
        rng = np.random.default_rng(1)
        for _ in range(50):
            ep = episode_on(g, 0, int(rng.integers(1, 10)))
            traj = [0]
            prev_or = 0
            for _ in range(8):
                traj.append(int(rng.choice(g.neighbors[traj[-1]])))
                cur = metrics.evaluate(traj, ep)["or_"]
                assert cur >= prev_or
                prev_or = cur


class TestAgainstBruteForceOracle:
    def test_hundred_random_pairs(self):
        rng = np.random.default_rng(42)
        for trial in range(100):
            g = gw.generate_world(1000 + trial, int(rng.integers(6, 14)), 3,
                                  d_v=4)
            d = floyd_warshall(g)
            n = g.n_nodes
            start, goal = int(rng.integers(n)), int(rng.integers(n))
            ep = episode_on(g, start, goal)
            traj = [start]
            for _ in range(int(rng.integers(0, 9))):
                traj.append(int(rng.choice(g.neighbors[traj[-1]])))

            r = metrics.evaluate(traj, ep)
            tl = sum(gw.quantized_length(math.dist(tuple(g.positions[u]),
                                                   tuple(g.positions[v])))
                     for u, v in zip(traj, traj[1:]))
            ne = d[traj[-1], goal]
            sr = 1 if ne <= 1.0 else 0
            orc = 1 if any(d[v, goal] <= 1.0 for v in traj) else 0
            ell = d[start, goal]
            spl = sr * ell / max(tl, ell) if max(tl, ell) > 0 else float(sr)
            assert r["sr"] == sr and r["or_"] == orc
            assert abs(r["spl"] - spl) <= 1e-9
            assert abs(r["ne"] - ne) <= 1e-9
            assert abs(r["tl"] - tl) <= 1e-9


class TestAggregationAndFormat:
    def sample_reports(self):
        g = hand_built_square()
        ep = episode_on(g, 0, 3)
        return [metrics.evaluate(list(ep.path), ep),
                metrics.evaluate([0], ep),
                metrics.evaluate([0, 1, 0, 1, 0, 1, 2, 3], ep)]

    def test_aggregate_is_exact_mean(self):
        reports = self.sample_reports()
        agg = metrics.aggregate(reports)
        for k in metrics.COLUMNS:
            assert agg[k] == sum(r[k] for r in reports) / 3

    def test_aggregate_empty_rejected(self):
        with pytest.raises(ValueError):
            metrics.aggregate([])

    def test_summary_table_column_order(self):
        agg = metrics.aggregate(self.sample_reports())
        table = metrics.summary_table({"val-seen": agg})
        header = table.splitlines()[0].split()
        assert header == ["split", "NE", "OR", "SR", "SPL", "TL"]
        assert "val-seen" in table

    def test_report_lines_round_trip(self):
        reports = self.sample_reports()
        lines = metrics.report_lines(reports).strip().split("\n")
        assert len(lines) == 3
        parsed = [json.loads(x) for x in lines]
        assert parsed[0]["spl"] == reports[0]["spl"]
        assert set(parsed[0]) == {"episode_id", "split", "tl", "ne", "or_",
                                  "sr", "spl"}
