import numpy as np
import pytest

import fewslot.tensor as T
from fewslot.episodes import Episode, EpisodeSpec, sample_episode
from fewslot.errors import ContractError, DimensionError, NumericError
from fewslot.models import (AttentiveDiagnostics, ModelBundle, ModelConfig,
                            PredictionDistribution, attentive_head_node,
                            attentive_relation_scores, bind_params, class_sum,
                            encode, encode_node, episode_score_matrix,
                            episode_score_nodes, init_bundle, load_bundle,
                            matching_scores, one_shot_equivalence_check,
                            pair_feature, prototypical_scores, relation_scores,
                            save_bundle)
from fewslot.tensor import Graph, grad_check

from test_data import make_collection


# ---------------------------------------------------------------------------
# brute-force oracles (independent of the graph implementation)
# ---------------------------------------------------------------------------

def oracle_matching(supports, classes, query):
    """Average pairwise cosine per class, plain loops."""
    query = np.asarray(query, dtype=float).reshape(-1)
    n_classes = max(classes) + 1
    sums = [0.0] * n_classes
    counts = [0] * n_classes
    for vec, ci in zip(supports, classes):
        vec = np.asarray(vec, dtype=float).reshape(-1)
        cos = float(vec @ query) / (np.linalg.norm(vec) * np.linalg.norm(query))
        sums[ci] += cos
        counts[ci] += 1
    return np.array([s / c for s, c in zip(sums, counts)])


def oracle_prototypical(supports, classes, query):
    """Negative distance to the nearest class mean, plain loops."""
    query = np.asarray(query, dtype=float).reshape(-1)
    n_classes = max(classes) + 1
    scores = []
    for ci in range(n_classes):
        members = [np.asarray(v, dtype=float).reshape(-1)
                   for v, c in zip(supports, classes) if c == ci]
        proto = sum(members) / len(members)
        scores.append(-float(np.linalg.norm(query - proto)))
    return np.array(scores)


def random_episode_arrays(rng, c=3, k=2, dim=4, integer=False):
    supports, classes = [], []
    for ci in range(c):
        for _ in range(k):
            vec = (rng.integers(-4, 5, size=dim).astype(float) if integer
                   else rng.normal(size=dim))
            if integer and not vec.any():
                vec[0] = 1.0
            supports.append(vec)
            classes.append(ci)
    query = (rng.integers(-4, 5, size=dim).astype(float) if integer
             else rng.normal(size=dim))
    if integer and not query.any():
        query[0] = 1.0
    return supports, classes, query


class TestMatching:
    def test_identical_supports_score_one(self):
        q = np.array([0.3, -0.7, 2.0])
        dist = matching_scores([q, q, np.array([1.0, 0, 0])], [0, 0, 1], q)
        assert dist.scores[0] == pytest.approx(1.0, abs=1e-12)
        assert dist.predicted_class == 0

    def test_orthogonal_supports(self):
        dist = matching_scores([[1, 0], [0, 1]], [0, 1], [1, 0])
        np.testing.assert_allclose(dist.scores, [1.0, 0.0], atol=1e-12)
        assert dist.predicted_class == 0

    def test_tie_breaks_to_lowest_class(self):
        dist = matching_scores([[1, 0], [0, 1]], [0, 1], [1, 1])
        np.testing.assert_allclose(dist.scores, [1 / np.sqrt(2)] * 2, atol=1e-12)
        assert dist.predicted_class == 0

    def test_zero_norm_support_rejected(self):
        with pytest.raises(NumericError, match="support feature 1"):
            matching_scores([[1, 0], [0, 0]], [0, 1], [1, 1])

    def test_zero_norm_query_rejected(self):
        with pytest.raises(NumericError, match="query"):
            matching_scores([[1, 0]], [0], [0, 0])

    def test_matches_oracle_on_random_cases(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            c = int(rng.integers(1, 6))
            k = int(rng.integers(1, 6))
            dim = int(rng.integers(1, 9))
            supports, classes, query = random_episode_arrays(
                rng, c, k, dim, integer=True)
            got = matching_scores(supports, classes, query)
            np.testing.assert_allclose(
                got.scores, oracle_matching(supports, classes, query), atol=1e-12)

    def test_scale_invariance_of_prediction(self):
        rng = np.random.default_rng(5)
        supports, classes, query = random_episode_arrays(rng, 4, 3, 6)
        base = matching_scores(supports, classes, query)
        scaled = matching_scores([3.7 * s for s in supports], classes, 3.7 * query)
        assert base.predicted_class == scaled.predicted_class
        np.testing.assert_allclose(base.scores, scaled.scores, atol=1e-12)


class TestPrototypical:
    def test_prototype_is_mean(self):
        dist = prototypical_scores([[0, 0], [2, 2]], [0, 0], [1, 1])
        assert dist.scores[0] == pytest.approx(0.0, abs=1e-12)

    def test_query_at_prototype_wins(self):
        dist = prototypical_scores([[0, 0], [2, 2], [5, 5]], [0, 0, 1], [1, 1])
        assert dist.predicted_class == 0

    def test_hand_euclidean(self):
        dist = prototypical_scores([[1, 1], [3, 3]], [0, 1], [0, 0])
        np.testing.assert_allclose(dist.scores,
                                   [-np.sqrt(2), -3 * np.sqrt(2)], atol=1e-12)
        assert dist.predicted_class == 0

    def test_matches_oracle_on_random_cases(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            c = int(rng.integers(1, 6))
            k = int(rng.integers(1, 6))
            dim = int(rng.integers(1, 9))
            supports, classes, query = random_episode_arrays(
                rng, c, k, dim, integer=True)
            got = prototypical_scores(supports, classes, query)
            np.testing.assert_allclose(
                got.scores, oracle_prototypical(supports, classes, query), atol=1e-12)


class TestClassSum:
    def test_basic_sum(self):
        sums = class_sum([[1, 0], [0, 1]], [0, 0])
        np.testing.assert_array_equal(sums[0], [1, 1])

    def test_single_support_identity(self):
        sums = class_sum([[2.5, -1.0]], [0])
        np.testing.assert_array_equal(sums[0], [2.5, -1.0])

    def test_k_identical_supports(self):
        v = np.array([1.0, 2.0])
        sums = class_sum([v, v, v], [0, 0, 0])
        np.testing.assert_array_equal(sums[0], 3 * v)


def small_config(dim=8, kind="relation"):
    return ModelConfig(input_dim=dim, encoder_hidden=16, encoder_out=8,
                       channels=4, kernel=3, fc_hidden=8)


class TestRelationHead:
    def test_pair_feature_stacks_class_sum_and_query(self):
        g = Graph()
        pair = pair_feature(g.constant([[1.0], [2.0]]), g.constant([[3.0], [4.0]]))
        np.testing.assert_array_equal(pair.value, [[1.0, 2.0], [3.0, 4.0]])

    def test_zero_weights_give_half_everywhere(self):
        cfg = small_config()
        bundle = init_bundle("relation", cfg, seed=0)
        bundle.params = {name: np.zeros_like(arr)
                         for name, arr in bundle.params.items()}
        feats = [np.ones(cfg.encoder_out)] * 2
        dist = relation_scores(bundle, feats, [0, 1], np.ones(cfg.encoder_out))
        np.testing.assert_array_equal(dist.scores, [0.5, 0.5])
        assert dist.predicted_class == 0

    def test_scores_in_open_unit_interval(self):
        cfg = small_config()
        bundle = init_bundle("relation", cfg, seed=3)
        rng = np.random.default_rng(4)
        feats = [rng.normal(size=cfg.encoder_out) for _ in range(6)]
        dist = relation_scores(bundle, feats, [0, 0, 1, 1, 2, 2],
                               rng.normal(size=cfg.encoder_out))
        assert np.all(dist.scores > 0) and np.all(dist.scores < 1)

    def test_wrong_kind_rejected(self):
        bundle = init_bundle("matching", small_config(), seed=0)
        with pytest.raises(ContractError):
            relation_scores(bundle, [np.ones(8)], [0], np.ones(8))


class TestAttentiveHead:
    def test_zero_parameter_fixed_point(self):
        cfg = ModelConfig(input_dim=8, channels=4)
        bundle = init_bundle("attentive", cfg, seed=1)
        for name in ("head.compat.w", "head.compat.b",
                     "head.classifier.w", "head.classifier.b"):
            bundle.params[name] = np.zeros_like(bundle.params[name])
        rng = np.random.default_rng(2)
        supports = [rng.normal(size=8) for _ in range(4)]
        dist, diags = attentive_relation_scores(bundle, supports, [0, 0, 1, 1],
                                                rng.normal(size=8))
        np.testing.assert_array_equal(dist.scores, [0.5, 0.5])
        for diag in diags:
            np.testing.assert_array_equal(diag.compatibility, np.zeros(8))
            np.testing.assert_array_equal(diag.attention, np.full(8, 0.5))
            assert diag.score == 0.5

    def test_zero_params_global_feature_is_half_local1(self):
        cfg = ModelConfig(input_dim=6, channels=3)
        bundle = init_bundle("attentive", cfg, seed=5)
        for name in ("head.compat.w", "head.compat.b",
                     "head.classifier.w", "head.classifier.b"):
            bundle.params[name] = np.zeros_like(bundle.params[name])
        rng = np.random.default_rng(6)
        supports = [rng.normal(size=6)]
        query = rng.normal(size=6)
        _, diags = attentive_relation_scores(bundle, supports, [0], query)
        # recompute local1 by hand from the block-1 parameters
        pair = np.stack([supports[0], query])
        g = Graph()
        pn = bind_params(g, bundle.params)
        conv = T.conv1d(g.constant(pair), pn["head.block1.w"], "same")
        conv = T.add(conv, T.broadcast_to(pn["head.block1.b"], conv.shape))
        proj = T.conv1d(g.constant(pair), pn["head.block1.proj_w"], "same")
        proj = T.add(proj, T.broadcast_to(pn["head.block1.proj_b"], proj.shape))
        local1 = T.relu(T.add(conv, proj)).value
        np.testing.assert_allclose(diags[0].global_feature,
                                   (0.5 * local1).reshape(-1), atol=1e-15)

    def test_outputs_in_open_unit_interval(self):
        # moderate magnitudes: float64 sigmoid saturates to exactly 0/1
        # once |logit| exceeds ~36.7
        cfg = ModelConfig(input_dim=10, channels=4)
        bundle = init_bundle("attentive", cfg, seed=7)
        rng = np.random.default_rng(8)
        supports = [rng.normal(size=10) for _ in range(6)]
        dist, diags = attentive_relation_scores(bundle, supports, [0, 0, 1, 1, 2, 2],
                                                rng.normal(size=10))
        assert np.all(dist.scores > 0) and np.all(dist.scores < 1)
        for diag in diags:
            assert np.all(diag.attention > 0) and np.all(diag.attention < 1)

    def test_parallel_blocks_config(self):
        cfg = ModelConfig(input_dim=8, channels=4, sequential_blocks=False)
        bundle = init_bundle("attentive", cfg, seed=9)
        assert "head.block2.proj_w" in bundle.params
        rng = np.random.default_rng(10)
        dist, _ = attentive_relation_scores(bundle, [rng.normal(size=8)], [0],
                                            rng.normal(size=8))
        assert 0 < dist.scores[0] < 1


class TestEncoder:
    def test_zero_weights_zero_output(self):
        cfg = small_config(dim=4)
        bundle = init_bundle("matching", cfg, seed=0)
        bundle.params = {n: np.zeros_like(a) for n, a in bundle.params.items()}
        out = encode(bundle, np.ones(4))
        np.testing.assert_array_equal(out, np.zeros(cfg.encoder_out))

    def test_identity_construction_passes_through(self):
        # d == hidden == out with identity weights: relu clips negatives
        cfg = ModelConfig(input_dim=3, encoder_hidden=3, encoder_out=3)
        bundle = init_bundle("matching", cfg, seed=0)
        bundle.params["encoder.w1"] = np.eye(3)
        bundle.params["encoder.w2"] = np.eye(3)
        bundle.params["encoder.b1"] = np.zeros((3, 1))
        bundle.params["encoder.b2"] = np.zeros((3, 1))
        np.testing.assert_array_equal(encode(bundle, [1.0, -2.0, 3.0]),
                                      [1.0, 0.0, 3.0])

    def test_dimension_mismatch(self):
        bundle = init_bundle("matching", small_config(dim=4), seed=0)
        with pytest.raises(DimensionError):
            encode(bundle, np.ones(5))

    def test_gradient_vs_finite_differences(self):
        cfg = small_config(dim=5)
        bundle = init_bundle("matching", cfg, seed=11)
        g = Graph()
        pn = bind_params(g, bundle.params)
        out = encode_node(pn, g.constant(np.random.default_rng(1).normal(size=(5, 1))))
        loss = T.sum_axis(T.mul_elementwise(out, out))
        report = grad_check(g, loss, tolerance=1e-4)
        assert report.passed, str(report)


class TestPermutationInvariance:
    @pytest.mark.parametrize("kind", ["matching", "prototypical", "relation",
                                      "attentive"])
    def test_support_order_within_class_does_not_matter(self, kind):
        rng = np.random.default_rng(13)
        dim = 8
        cfg = small_config(dim=dim)
        bundle = init_bundle(kind, cfg, seed=14)
        supports, classes, query = random_episode_arrays(rng, c=3, k=3, dim=dim)

        def score(sup, cls):
            if kind == "matching":
                return matching_scores(sup, cls, query).scores
            if kind == "prototypical":
                return prototypical_scores(sup, cls, query).scores
            if kind == "relation":
                feats = [encode(bundle, v) for v in sup]
                qf = encode(bundle, query)
                return relation_scores(bundle, feats, cls, qf).scores
            return attentive_relation_scores(bundle, sup, cls, query)[0].scores

        base = score(supports, classes)
        order = [2, 1, 0, 5, 4, 3, 8, 7, 6]  # reverse within each class
        shuffled = score([supports[i] for i in order], [classes[i] for i in order])
        np.testing.assert_allclose(base, shuffled, atol=1e-12)


class TestOneShotEquivalence:
    def test_random_unit_episode_true(self):
        rng = np.random.default_rng(15)
        supports = [v / np.linalg.norm(v) for v in rng.normal(size=(4, 6))]
        query = rng.normal(size=6)
        query /= np.linalg.norm(query)
        assert one_shot_equivalence_check(supports, [0, 1, 2, 3], query) is True

    def test_rejects_unnormalized(self):
        with pytest.raises(ContractError, match="unit-normalized"):
            one_shot_equivalence_check([[2.0, 0.0]], [0], [1.0, 0.0])

    def test_rejects_k_greater_than_one(self):
        v = np.array([1.0, 0.0])
        with pytest.raises(ContractError, match="K=1"):
            one_shot_equivalence_check([v, v], [0, 0], v)

    def test_thousand_seeded_episodes_all_agree(self):
        rng = np.random.default_rng(16)
        for _ in range(1000):
            c = int(rng.integers(2, 6))
            dim = int(rng.integers(2, 9))
            supports = [v / np.linalg.norm(v) for v in rng.normal(size=(c, dim))]
            query = rng.normal(size=dim)
            query /= np.linalg.norm(query)
            assert one_shot_equivalence_check(supports, list(range(c)), query)


class TestEpisodeScoreNodes:
    @pytest.mark.parametrize("kind", ["matching", "prototypical", "relation",
                                      "attentive"])
    def test_scores_match_public_ops(self, kind):
        coll = make_collection(n_labels=5, per_label=6, dim=8, seed=20)
        episode = sample_episode(coll, EpisodeSpec(c_way=3, k_shot=2, seed=21))
        cfg = small_config(dim=8)
        bundle = init_bundle(kind, cfg, seed=22)
        g = Graph()
        pn = bind_params(g, bundle.params)
        scores, true_classes = episode_score_nodes(g, pn, kind, cfg, episode)
        assert len(scores) == len(episode.query)
        assert true_classes == [ci for _, ci in episode.query]
        sup_vecs = [t.vector for t, _ in episode.support]
        sup_cls = [ci for _, ci in episode.support]
        for row, (t, _) in zip(scores, episode.query):
            values = np.array([node.item() for node in row])
            if kind == "matching":
                feats = [encode(bundle, v) for v in sup_vecs]
                expected = matching_scores(feats, sup_cls, encode(bundle, t.vector)).scores
            elif kind == "prototypical":
                feats = [encode(bundle, v) for v in sup_vecs]
                expected = prototypical_scores(feats, sup_cls,
                                               encode(bundle, t.vector)).scores
            elif kind == "relation":
                feats = [encode(bundle, v) for v in sup_vecs]
                expected = relation_scores(bundle, feats, sup_cls,
                                           encode(bundle, t.vector)).scores
            else:
                expected = attentive_relation_scores(bundle, sup_vecs, sup_cls,
                                                     t.vector)[0].scores
            np.testing.assert_allclose(values, expected, atol=1e-12)


class TestEpisodeScoreMatrix:
    @pytest.mark.parametrize("kind", ["matching", "prototypical", "relation",
                                      "attentive"])
    def test_matches_per_pair_path(self, kind):
        coll = make_collection(n_labels=5, per_label=6, dim=8, seed=40)
        episode = sample_episode(coll, EpisodeSpec(c_way=3, k_shot=2,
                                                   query_per_class=3, seed=41))
        cfg = small_config(dim=8)
        bundle = init_bundle(kind, cfg, seed=42)

        g1 = Graph()
        matrix, true_m = episode_score_matrix(g1, bind_params(g1, bundle.params),
                                              kind, cfg, episode)
        g2 = Graph()
        rows, true_r = episode_score_nodes(g2, bind_params(g2, bundle.params),
                                           kind, cfg, episode)
        assert true_m == true_r
        per_pair = np.array([[node.item() for node in row] for row in rows])
        np.testing.assert_allclose(matrix.value, per_pair, atol=1e-10)

    @pytest.mark.parametrize("kind", ["matching", "prototypical", "relation",
                                      "attentive"])
    def test_matrix_gradients_match_per_pair_gradients(self, kind):
        from fewslot.training import episode_loss

        coll = make_collection(n_labels=4, per_label=5, dim=6, seed=43)
        episode = sample_episode(coll, EpisodeSpec(c_way=2, k_shot=2,
                                                   query_per_class=2, seed=44))
        cfg = small_config(dim=6)
        bundle = init_bundle(kind, cfg, seed=45)

        g1 = Graph()
        p1 = bind_params(g1, bundle.params)
        matrix, true_classes = episode_score_matrix(g1, p1, kind, cfg, episode)
        grads_matrix = g1.backward(episode_loss(g1, kind, matrix, true_classes))

        g2 = Graph()
        p2 = bind_params(g2, bundle.params)
        rows, _ = episode_score_nodes(g2, p2, kind, cfg, episode)
        stacked = T.reshape(rows[0][0], (1, 1))
        for node in rows[0][1:]:
            stacked = T.concat(stacked, T.reshape(node, (1, 1)), axis=1)
        for row in rows[1:]:
            line = T.reshape(row[0], (1, 1))
            for node in row[1:]:
                line = T.concat(line, T.reshape(node, (1, 1)), axis=1)
            stacked = T.concat(stacked, line, axis=0)
        grads_pairs = g2.backward(episode_loss(g2, kind, stacked, true_classes))

        for name in bundle.params:
            np.testing.assert_allclose(grads_matrix[p1[name].id],
                                       grads_pairs[p2[name].id],
                                       rtol=1e-8, atol=1e-12, err_msg=name)


class TestGradChecks:
    def test_relation_head_full_episode_loss(self):
        cfg = small_config(dim=6)
        bundle = init_bundle("relation", cfg, seed=30)
        coll = make_collection(n_labels=4, per_label=4, dim=6, seed=31)
        episode = sample_episode(coll, EpisodeSpec(c_way=3, k_shot=2,
                                                   query_per_class=1, seed=32))
        g = Graph()
        pn = bind_params(g, bundle.params)
        scores, true_classes = episode_score_nodes(g, pn, "relation", cfg, episode)
        terms = []
        for row, true in zip(scores, true_classes):
            for ci, node in enumerate(row):
                target = g.constant(1.0 if ci == true else 0.0)
                delta = T.sub(node, target)
                terms.append(T.mul_elementwise(delta, delta))
        loss = T.scale(terms[0], 1.0 / len(terms))
        for term in terms[1:]:
            loss = T.add(loss, T.scale(term, 1.0 / len(terms)))
        report = grad_check(g, loss, tolerance=1e-4)
        assert report.passed, str(report)

    def test_attentive_head_gradient(self):
        cfg = ModelConfig(input_dim=8, channels=4)
        bundle = init_bundle("attentive", cfg, seed=33)
        rng = np.random.default_rng(34)
        g = Graph()
        pn = bind_params(g, bundle.params)
        pair = g.constant(rng.normal(size=(2, 8)))
        score, _ = attentive_head_node(pn, pair, cfg)
        report = grad_check(g, score, tolerance=1e-4)
        assert report.passed, str(report)

    @pytest.mark.slow
    def test_default_width_encoder_gradient(self):
        cfg = ModelConfig(input_dim=16)
        bundle = init_bundle("matching", cfg, seed=35)
        g = Graph()
        pn = bind_params(g, bundle.params)
        out = encode_node(pn, g.constant(np.random.default_rng(2).normal(size=(16, 1))))
        loss = T.mean_axis(T.mul_elementwise(out, out))
        report = grad_check(g, loss, tolerance=1e-4)
        assert report.passed, str(report)


class TestBundleIO:
    def test_checkpoint_round_trip_exact(self, tmp_path):
        bundle = init_bundle("attentive", ModelConfig(input_dim=8, channels=4),
                             seed=40, train_labels=["b", "a"])
        bundle.trained_episodes = 17
        path = tmp_path / "model.json"
        save_bundle(bundle, path)
        back = load_bundle(path)
        assert back.kind == "attentive"
        assert back.config == bundle.config
        assert back.train_labels == ("a", "b")
        assert back.trained_episodes == 17
        for name, arr in bundle.params.items():
            assert back.params[name].tobytes() == arr.tobytes()

    def test_checkpoint_bytes_deterministic(self, tmp_path):
        bundle = init_bundle("relation", small_config(), seed=41)
        save_bundle(bundle, tmp_path / "a.json")
        save_bundle(bundle, tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_unknown_kind_rejected(self):
        with pytest.raises(ContractError):
            init_bundle("fancy", small_config(), seed=0)
