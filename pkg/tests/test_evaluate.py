"""Evaluation harness: classifier, recognition accuracy, precision/recall, MSE."""

import numpy as np
import pytest

from glyphfusion.data import GlyphImage
from glyphfusion.errors import IncompleteTripleError, ShapeMismatchError, TooFewPointsError
from glyphfusion.evaluate import (
    ClassifierCheckpoint,
    ClassifierConfig,
    MetricReport,
    collect_weight_triples,
    embed_features,
    improved_precision_recall,
    mse,
    predictions_from_logits,
    recognition_accuracy,
    train_classifier,
    weight_triple_mse,
)


# ---------------------------------------------------------------------------
# brute-force oracle: a second, naively-written implementation of the
# k-NN manifold rule, kept deliberately loop-based and sort-based
# ---------------------------------------------------------------------------


def brute_radius(points: np.ndarray, i: int, k: int) -> float:
    dists = np.linalg.norm(points - points[i], axis=1).astype(np.float64)
    dists[i] = np.inf
    return float(np.sort(dists)[k - 1])


def brute_in_manifold(query: np.ndarray, points: np.ndarray, radii: list[float]) -> bool:
    for j in range(points.shape[0]):
        if float(np.linalg.norm(query - points[j])) <= radii[j]:
            return True
    return False


def brute_precision_recall(real: np.ndarray, gen: np.ndarray, k: int) -> tuple[float, float]:
    real_radii = [brute_radius(real, i, k) for i in range(real.shape[0])]
    gen_radii = [brute_radius(gen, i, k) for i in range(gen.shape[0])]
    precision = float(np.mean([brute_in_manifold(g, real, real_radii) for g in gen]))
    recall = float(np.mean([brute_in_manifold(r, gen, gen_radii) for r in real]))
    return precision, recall


def test_matches_brute_force_oracle_exactly():
    rng = np.random.default_rng(2024)
    for trial in range(30):
        k = int(rng.choice([1, 3, 5]))
        n_real = int(rng.integers(k + 2, 120))
        n_gen = int(rng.integers(k + 2, 120))
        dim = int(rng.integers(2, 64))
        real = rng.normal(size=(n_real, dim))
        gen = rng.normal(loc=rng.normal() * 0.5, size=(n_gen, dim))
        assert improved_precision_recall(real, gen, k) == brute_precision_recall(real, gen, k)


def test_identical_sets_full_scores():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(40, 8))
    assert improved_precision_recall(x, x.copy(), 3) == (1.0, 1.0)


def test_far_separated_clusters_zero_scores():
    rng = np.random.default_rng(6)
    a = rng.normal(size=(50, 4))
    b = rng.normal(size=(50, 4)) + 1e6
    assert improved_precision_recall(a, b, 3) == (0.0, 0.0)


def test_precision_recall_role_swap_symmetry():
    rng = np.random.default_rng(7)
    a = rng.normal(size=(60, 6))
    b = rng.normal(size=(45, 6)) * 1.4
    p_ab, r_ab = improved_precision_recall(a, b, 3)
    p_ba, r_ba = improved_precision_recall(b, a, 3)
    assert p_ab == r_ba and r_ab == p_ba


def test_duplicate_point_behaviour():
    """Duplicating a generated point keeps the real manifold fixed, so its
    membership vote simply repeats: precision cannot decrease when the
    duplicated point is itself in the manifold."""
    rng = np.random.default_rng(8)
    real = rng.normal(size=(50, 4))
    gen = rng.normal(size=(30, 4)) * 0.8
    from glyphfusion.evaluate import _in_manifold, _knn_radii

    radii = _knn_radii(real, 3)
    member = _in_manifold(gen, real, radii)
    p0, _ = improved_precision_recall(real, gen, 3)
    inside = np.flatnonzero(member)
    assert inside.size > 0
    dup = np.concatenate([gen, gen[inside[:1]]])
    p1, _ = improved_precision_recall(real, dup, 3)
    assert p1 >= p0
    # duplicated points re-evaluate to the same membership
    member_dup = _in_manifold(dup, real, radii)
    assert member_dup[-1] == member[inside[0]]


def test_duplicates_inside_one_set_shrink_radii_to_zero():
    # two identical points give each a zero k=1 radius; with <= they still
    # contain each other, so identical sets keep scoring 1
    x = np.zeros((5, 3))
    assert improved_precision_recall(x, x.copy(), 1) == (1.0, 1.0)


def test_too_few_points_rejected():
    x = np.zeros((3, 2))
    with pytest.raises(TooFewPointsError):
        improved_precision_recall(x, x, 3)
    with pytest.raises(ValueError):
        improved_precision_recall(np.full((5, 2), np.nan), x, 1)


# ---------------------------------------------------------------------------
# classifier + recognition accuracy
# ---------------------------------------------------------------------------


MICRO_CLF = ClassifierConfig(
    side=32, base_channels=8, n_stages=2, batch_size=16, lr=1e-3, iters=40,
    augment_prob=0.0, seed=4,
)


def test_classifier_micro_training_and_round_trip(train_arrays, val_arrays, tmp_path):
    ckpt = train_classifier(train_arrays, val_arrays, MICRO_CLF)
    assert 0.0 <= ckpt.held_out_accuracy <= 1.0
    ckpt.save(tmp_path / "c.npz")
    back = ClassifierCheckpoint.load(tmp_path / "c.npz")
    assert back.content_hash() == ckpt.content_hash()
    # logged accuracy equals re-evaluation of the saved checkpoint
    imgs, labels = val_arrays.flat()
    assert recognition_accuracy(imgs, labels, back) == ckpt.held_out_accuracy


def test_classifier_training_deterministic(train_arrays, val_arrays):
    a = train_classifier(train_arrays, val_arrays, MICRO_CLF)
    b = train_classifier(train_arrays, val_arrays, MICRO_CLF)
    assert a.content_hash() == b.content_hash()
    assert a.held_out_accuracy == b.held_out_accuracy


def test_prediction_tie_breaks_to_lowest_index():
    logits = np.array([[0.5, 0.5, 0.1], [0.1, 0.7, 0.7]])
    assert predictions_from_logits(logits).tolist() == [0, 1]


def test_accuracy_order_invariant(trained_classifier, val_arrays):
    imgs, labels = val_arrays.flat()
    acc = recognition_accuracy(imgs, labels, trained_classifier)
    perm = np.random.default_rng(0).permutation(len(labels))
    assert recognition_accuracy(imgs[perm], labels[perm], trained_classifier) == acc


def test_embed_features_contract(trained_classifier, val_arrays):
    imgs, _ = val_arrays.flat()
    feats = embed_features(imgs[:10], trained_classifier)
    assert feats.shape == (10, trained_classifier.model.feature_dim)
    again = embed_features(imgs[:10], trained_classifier)
    assert np.array_equal(feats, again)
    # identical image twice -> identical rows
    pair = embed_features(np.stack([imgs[0], imgs[0]]), trained_classifier)
    assert np.array_equal(pair[0], pair[1])
    # distinct fonts embed apart
    assert np.linalg.norm(feats[0] - feats[5]) > 0


# ---------------------------------------------------------------------------
# MSE and weight triples
# ---------------------------------------------------------------------------


def test_mse_properties():
    rng = np.random.default_rng(9)
    a = GlyphImage.from_array(rng.random((16, 16), dtype=np.float32))
    b = GlyphImage.from_array(rng.random((16, 16), dtype=np.float32))
    assert mse(a, a) == 0.0
    assert mse(a, b) == mse(b, a)
    ink = GlyphImage.from_array(np.ones((16, 16), dtype=np.float32))
    blank = GlyphImage.blank(16)
    assert mse(ink, blank) == 1.0
    assert 0.0 <= mse(a, b) <= 1.0
    with pytest.raises(ShapeMismatchError):
        mse(a, GlyphImage.blank(8))


def test_collect_weight_triples(full_manifest):
    triples = collect_weight_triples(full_manifest)
    assert len(triples) >= 10
    for light, medium, bold in triples:
        assert light.family == medium.family == bold.family
        assert (light.weight, medium.weight, bold.weight) == ("Light", "Medium", "Bold")


def test_weight_triple_mse_fannet_baseline(full_manifest, tiny_fannet):
    triples = collect_weight_triples(full_manifest)[:2]
    per_cat, avg = weight_triple_mse(triples, "fannet", "AB", full_manifest, fannet=tiny_fannet)
    assert 0.0 <= avg <= 1.0
    assert all(0.0 <= v <= 1.0 for v in per_cat.values())
    assert avg == pytest.approx(np.mean([v for cat in per_cat for v in [per_cat[cat]]]), abs=0.2)


def test_weight_triple_mse_validates_triples(full_manifest, tiny_fannet):
    triples = collect_weight_triples(full_manifest)
    light, medium, bold = triples[0]
    other_light = triples[1][0]
    with pytest.raises(IncompleteTripleError):
        weight_triple_mse([(other_light, medium, bold)], "fannet", "A", full_manifest, fannet=tiny_fannet)
    with pytest.raises(IncompleteTripleError):
        weight_triple_mse([(medium, light, bold)], "fannet", "A", full_manifest, fannet=tiny_fannet)
    with pytest.raises(IncompleteTripleError):
        weight_triple_mse([], "fannet", "A", full_manifest, fannet=tiny_fannet)


def test_metric_report_validation_and_json():
    rep = MetricReport(accuracy=0.5, precision=0.1, recall=0.9, n_real=10, n_gen=10)
    payload = rep.to_json()
    assert '"accuracy": 0.5' in payload
    with pytest.raises(ValueError):
        MetricReport(accuracy=1.5)
