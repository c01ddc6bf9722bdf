"""Action scoring and selection."""

import json

import numpy as np
import numpy.testing as npt
import pytest

from vlnav import graphworld as gw
from vlnav.autodiff import Tensor
from vlnav.encoders import AttentionParams
from vlnav.policy import score_candidates, select_action, step_record


def make_cand(feature, quad, stop=False, target=None):
    return gw.Candidate(target=target, feature=np.asarray(feature, float),
                        quad=np.asarray(quad, float), is_stop=stop)


def stop_cand(d_v):
    return make_cand(np.zeros(d_v), np.zeros(4), stop=True)


def make_params(d_v, d_h, seed=0):
    return AttentionParams(np.random.default_rng(seed), d_v + 4, d_h)


class TestScoreCandidates:
    def test_stop_only(self):
        dist = score_candidates([stop_cand(4)], Tensor(np.ones(8)), make_params(4, 8))
        npt.assert_allclose(dist.probs.data, [1.0], atol=1e-12)

    def test_identical_features_symmetric(self):
        f, q = np.ones(4), np.array([0.1, 0.2, 0.3, 0.4])
        cands = [make_cand(f, q, target=0), make_cand(f, q, target=1), stop_cand(4)]
        dist = score_candidates(cands, Tensor(np.ones(8)), make_params(4, 8))
        npt.assert_allclose(dist.probs.data[0], dist.probs.data[1], atol=1e-12)

    def test_matches_independent_softmax_oracle(self):
        rng = np.random.default_rng(5)
        params = make_params(4, 8, seed=5)
        cands = [make_cand(rng.standard_normal(4), rng.standard_normal(4), target=i)
                 for i in range(3)] + [stop_cand(4)]
        f_hat = rng.standard_normal(8)
        dist = score_candidates(cands, Tensor(f_hat), params)
        logits = np.array([np.concatenate([c.feature, c.quad]) @ (params.W.data @ f_hat)
                           for c in cands])
        e = np.exp(logits - logits.max())
        npt.assert_allclose(dist.probs.data, e / e.sum(), atol=1e-6)

    def test_variable_candidate_counts(self):
        g = gw.generate_world(7, 10, 3, d_v=4)
        params = make_params(4, 8)
        for node in range(g.n_nodes):
            cands = gw.candidates(g, node, 0.0)
            dist = score_candidates(cands, Tensor(np.zeros(8)), params)
            assert dist.probs.data.shape == (len(g.neighbors[node]) + 1,)
            npt.assert_allclose(dist.probs.data.sum(), 1.0, atol=1e-6)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            score_candidates([], Tensor(np.zeros(8)), make_params(4, 8))

    def test_stop_not_last_rejected(self):
        cands = [stop_cand(4), make_cand(np.ones(4), np.zeros(4), target=0)]
        with pytest.raises(ValueError):
            score_candidates(cands, Tensor(np.zeros(8)), make_params(4, 8))

    def test_nan_logits_rejected(self):
        cands = [make_cand(np.full(4, np.nan), np.zeros(4), target=0), stop_cand(4)]
        with pytest.raises(FloatingPointError):
            score_candidates(cands, Tensor(np.ones(8)), make_params(4, 8))

    def test_argmax_shift_invariant(self):
        rng = np.random.default_rng(6)
        params = make_params(4, 8, seed=6)
        cands = [make_cand(rng.standard_normal(4), rng.standard_normal(4), target=i)
                 for i in range(4)] + [stop_cand(4)]
        dist = score_candidates(cands, Tensor(rng.standard_normal(8)), params)
        base = int(np.argmax(dist.logits.data))
        shifted = dist.logits.data + 123.0
        e = np.exp(shifted - shifted.max())
        assert int(np.argmax(e / e.sum())) == base


class FakeDist:
    def __init__(self, probs):
        self.probs = Tensor(np.asarray(probs, float))
        self.logits = Tensor(np.log(np.asarray(probs, float)))


class TestSelectAction:
    def test_argmax(self):
        assert select_action(FakeDist([0.1, 0.7, 0.2]), "argmax") == 1

    def test_argmax_tie_lowest_index(self):
        assert select_action(FakeDist([0.4, 0.4, 0.2]), "argmax") == 0

    def test_teacher_overrides_probs(self):
        assert select_action(FakeDist([0.99, 0.003, 0.003, 0.004]), "teacher",
                             teacher_idx=3) == 3

    def test_teacher_requires_index(self):
        with pytest.raises(ValueError):
            select_action(FakeDist([1.0]), "teacher")

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            select_action(FakeDist([1.0]), "beam")

    def test_sample_frequencies(self):
        rng = np.random.default_rng(9)
        dist = FakeDist([0.25, 0.75])
        draws = np.array([select_action(dist, "sample", rng=rng)
                          for _ in range(100_000)])
        npt.assert_allclose((draws == 1).mean(), 0.75, atol=0.01)

    def test_sample_reproducible(self):
        dist = FakeDist([0.3, 0.3, 0.4])
        a = [select_action(dist, "sample", rng=np.random.default_rng(4)) for _ in range(20)]
        b = [select_action(dist, "sample", rng=np.random.default_rng(4)) for _ in range(20)]
        assert a == b


def test_step_record_fields():
    rec = json.loads(step_record("w7e001", 2, 5, FakeDist([0.5, 0.5]), 1, "sample"))
    assert rec == {"episode_id": "w7e001", "t": 2, "node": 5,
                   "candidate_count": 2, "p_t": [0.5, 0.5], "a_t": 1,
                   "mode": "sample"}
