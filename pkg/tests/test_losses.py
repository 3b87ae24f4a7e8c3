import math

import numpy as np
import pytest

from amde.diffcore import Tensor, grad_check
from amde.errors import ConfigError, ContractError, SamplingError
from amde.losses import (
    AnnConfig,
    BatchEmbeddings,
    MetricLoss,
    Rounding,
    adaptive_k,
    ann_loss,
    ann_loss_with_stats,
    batch_hard_triplet,
    class_entropy,
    contrastive_loss,
    hardest_positives,
    joint_loss,
    joint_loss_components,
    pairwise_sqdist,
    softmax_xent,
    sqdist_to,
)


def make_batch(embeddings, labels, logits=None, classes=None):
    embeddings = np.asarray(embeddings, dtype=np.float64)
    classes = classes or int(np.max(labels)) + 1
    if logits is None:
        logits = np.zeros((len(labels), classes))
    return BatchEmbeddings(Tensor(embeddings), Tensor(logits),
                           np.asarray(labels))


def enumeration_ann(embeddings, labels, ks, margin):
    """Sorts every anchor's positive and negative distances explicitly."""
    total = 0.0
    for a in range(len(labels)):
        dist = {b: sum((embeddings[a][j] - embeddings[b][j]) ** 2
                       for j in range(len(embeddings[a])))
                for b in range(len(labels))}
        positives = sorted((b for b in dist if b != a and labels[b] == labels[a]),
                           key=lambda b: (-dist[b], b))
        negatives = sorted((b for b in dist if labels[b] != labels[a]),
                           key=lambda b: (dist[b], b))
        k = min(ks[a], len(positives), len(negatives))
        d_ap = sum(dist[b] for b in positives[:k]) / k
        d_an = sum(dist[b] for b in negatives[:k]) / k
        total += max(0.0, margin + d_ap - d_an)
    return total


def test_pairwise_sqdist_examples(rng):
    d = pairwise_sqdist(Tensor([[0.0, 0.0], [3.0, 4.0], [0.0, 0.0]])).data
    assert d[0, 1] == 25.0
    assert d[0, 2] == 0.0

    x = rng.normal(size=(5, 3))
    d = pairwise_sqdist(Tensor(x)).data
    oracle = [[sum((x[a][j] - x[b][j]) ** 2 for j in range(3))
               for b in range(5)] for a in range(5)]
    np.testing.assert_allclose(d, oracle, rtol=0, atol=1e-12)
    np.testing.assert_array_equal(d, d.T)
    assert np.all(d >= 0)

    shifted = pairwise_sqdist(Tensor(x + 7.5)).data
    np.testing.assert_allclose(shifted, d, atol=1e-12)


def test_sqdist_to_matches_pairwise(rng):
    x = rng.normal(size=(4, 3))
    np.testing.assert_allclose(sqdist_to(x[0], x[1:]),
                               pairwise_sqdist(Tensor(x)).data[0, 1:],
                               atol=1e-12)


@pytest.mark.parametrize('p, expected', [
    ([0.0, 1.0, 0.0], 0.0),
    ([0.25] * 4, math.log(4)),
    ([0.5, 0.5, 0.0, 0.0], math.log(2)),
])
def test_class_entropy(p, expected):
    assert class_entropy(p) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize('p', [[0.5, 0.6], [1.2, -0.2]])
def test_class_entropy_rejects_non_distributions(p):
    with pytest.raises(ContractError):
        class_entropy(p)


ENTROPY_TABLE = [
    # (entropy, ceil K, floor K) with K0 = 1
    (0.0, 1, 1),
    (0.05, 1, 1),
    (0.5, 1, 1),
    (math.log(2), 1, 1),
    (0.9999, 1, 1),
    (1.0, 1, 1),
    (1.0001, 2, 1),
    (math.log(3), 2, 1),
    (math.log(4), 2, 1),
    (1.5, 2, 1),
    (math.log(5), 2, 1),
    (math.log(6), 2, 1),
    (2.0, 2, 2),
    (math.log(8), 3, 2),
    (math.log(10), 3, 2),
    (2.5, 3, 2),
    (math.log(16), 3, 2),
    (2.999, 3, 2),
    (math.log(32), 4, 3),
    (math.log(64), 5, 4),
]


@pytest.mark.parametrize('entropy, ceil_k, floor_k', ENTROPY_TABLE)
def test_adaptive_k_table(entropy, ceil_k, floor_k):
    assert adaptive_k(entropy, AnnConfig(rounding=Rounding.CEIL)) == ceil_k
    assert adaptive_k(entropy, AnnConfig(rounding=Rounding.FLOOR)) == floor_k


@pytest.mark.parametrize('entropy, rounding, k0, expected', [
    (0.4, Rounding.FLOOR, 3, 3),
    (math.log(3), Rounding.CEIL, 2, 2),
    (math.log(64), Rounding.CEIL, 2, 5),
    (math.log(64), Rounding.FLOOR, 5, 5),
])
def test_adaptive_k_floor_at_k0(entropy, rounding, k0, expected):
    cfg = AnnConfig(rounding=rounding, k0=k0)
    assert adaptive_k(entropy, cfg) == expected


def test_ann_k_clamps_at_both_ends():
    labels = [0, 0, 0, 0, 1, 1, 1, 1]
    logits = np.zeros((8, 64))
    logits[:4, 0] = 80.0
    _, stats = ann_loss_with_stats(make_batch(np.eye(8), labels, logits),
                                   AnnConfig())
    np.testing.assert_array_equal(stats.raw_k, [1] * 4 + [5] * 4)
    # three positives per anchor, K - 1 for K = 4
    np.testing.assert_array_equal(stats.used_k, [1] * 4 + [3] * 4)
    assert stats.clamp_events == 4


def test_fixed_k_ignores_entropy():
    labels = [0, 0, 0, 1, 1, 1]
    logits = np.zeros((6, 64))
    logits[0, 0] = 80.0
    _, stats = ann_loss_with_stats(make_batch(np.eye(6), labels, logits),
                                   AnnConfig(fixed_k=2))
    np.testing.assert_array_equal(stats.raw_k, [2] * 6)
    np.testing.assert_array_equal(stats.used_k, [2] * 6)
    assert stats.clamp_events == 0


def test_adaptive_k_rejects_negative_entropy():
    with pytest.raises(ContractError):
        adaptive_k(-0.1, AnnConfig())


def test_adaptive_k_stays_in_entropy_bounds(rng):
    cfg = AnnConfig()
    for _ in range(50):
        logits = rng.normal(scale=3.0, size=(1, 6))
        p = np.exp(logits[0] - logits[0].max())
        entropy = class_entropy(p / p.sum())
        assert 0.0 <= entropy <= math.log(6) + 1e-12
        assert 1 <= adaptive_k(entropy, cfg) <= math.ceil(math.log(6))


def test_ann_identical_embeddings():
    labels = [0, 0, 1, 1, 2, 2]
    batch = make_batch(np.ones((6, 3)), labels)
    assert ann_loss(batch, AnnConfig(margin=0.3)).item() == pytest.approx(
        6 * 0.3, abs=1e-15)


def test_ann_separated_clusters():
    labels = [0, 0, 0, 1, 1, 1]
    embeddings = np.array([[0.0, 0.0], [0.1, 0.0], [0.0, 0.1],
                           [5.0, 5.0], [5.1, 5.0], [5.0, 5.1]])
    assert ann_loss(make_batch(embeddings, labels), AnnConfig()).item() == 0.0


def test_ann_matches_enumeration(rng):
    labels = [0, 0, 0, 1, 1, 1]
    for _ in range(20):
        embeddings = rng.normal(size=(6, 4))
        logits = rng.normal(scale=2.0, size=(6, 2))
        batch = make_batch(embeddings, labels, logits)
        cfg = AnnConfig(margin=0.5)
        loss, stats = ann_loss_with_stats(batch, cfg)
        expected = enumeration_ann(embeddings.tolist(), labels,
                                   stats.raw_k.tolist(), 0.5)
        assert loss.item() == pytest.approx(expected, abs=1e-12)


def test_ann_clamps_to_available_neighbors():
    labels = [0, 0, 1, 1]
    batch = make_batch(np.eye(4), labels, np.zeros((4, 2)))
    _, stats = ann_loss_with_stats(batch, AnnConfig(fixed_k=3))
    np.testing.assert_array_equal(stats.raw_k, [3, 3, 3, 3])
    np.testing.assert_array_equal(stats.used_k, [1, 1, 1, 1])
    assert stats.clamp_events == 4


def test_ann_entropy_drives_k():
    labels = [0, 0, 0, 1, 1, 1, 2, 2, 2]
    logits = np.zeros((9, 3))
    logits[0] = [40.0, 0.0, 0.0]
    _, stats = ann_loss_with_stats(make_batch(np.eye(9), labels, logits),
                                   AnnConfig())
    assert stats.raw_k[0] == 1
    assert stats.entropies[1] == pytest.approx(math.log(3))
    assert stats.raw_k[1] == 2


def test_ann_requires_positive():
    with pytest.raises(SamplingError) as info:
        ann_loss(make_batch(np.eye(3), [0, 0, 1]), AnnConfig())
    assert info.value.anchor == 2


def test_ann_requires_negative():
    with pytest.raises(SamplingError) as info:
        ann_loss(make_batch(np.eye(2), [0, 0]), AnnConfig())
    assert info.value.anchor == 0


def test_triplet_equals_ann_with_unit_k():
    cfg = AnnConfig(fixed_k=1, margin=0.3)
    for seed in range(200):
        rng = np.random.default_rng(seed)
        labels = np.repeat(np.arange(4), 2)
        batch = make_batch(rng.normal(size=(8, 5)), labels,
                           rng.normal(size=(8, 4)))
        assert (ann_loss(batch, cfg).item()
                == batch_hard_triplet(batch, 0.3).item())


def test_triplet_matches_enumeration(rng):
    labels = [0, 0, 1, 1, 2, 2, 3, 3]
    embeddings = rng.normal(size=(8, 3))
    expected = enumeration_ann(embeddings.tolist(), labels, [1] * 8, 0.3)
    loss = batch_hard_triplet(make_batch(embeddings, labels), 0.3).item()
    assert loss == pytest.approx(expected, abs=1e-12)


def test_triplet_identical_embeddings():
    batch = make_batch(np.zeros((4, 2)), [0, 0, 1, 1])
    assert batch_hard_triplet(batch, 0.3).item() == pytest.approx(1.2)


def test_hardest_selections_are_nested(rng):
    labels = np.repeat(np.arange(2), 5)
    d = pairwise_sqdist(Tensor(rng.normal(size=(10, 3)))).data
    for k in range(1, 4):
        smaller = set(hardest_positives(d, labels, 0, k))
        assert smaller <= set(hardest_positives(d, labels, 0, k + 1))


def test_contrastive_examples():
    coincident = make_batch([[1.0, 1.0], [1.0, 1.0]], [0, 0])
    assert contrastive_loss(coincident, 1.0).item() == 0.0

    far = make_batch([[0.0, 0.0], [3.0, 0.0]], [0, 1])
    assert contrastive_loss(far, 1.0).item() == 0.0

    near = make_batch([[0.0, 0.0], [0.5, 0.0]], [0, 1])
    assert contrastive_loss(near, 1.0).item() == pytest.approx(0.25)


def test_contrastive_matches_enumeration(rng):
    labels = [0, 0, 1, 1]
    embeddings = rng.normal(scale=0.4, size=(4, 2))
    expected = 0.0
    for a in range(4):
        for b in range(a + 1, 4):
            d = sum((embeddings[a][j] - embeddings[b][j]) ** 2
                    for j in range(2))
            if labels[a] == labels[b]:
                expected += d
            else:
                expected += max(0.0, 1.0 - math.sqrt(d)) ** 2
    loss = contrastive_loss(make_batch(embeddings, labels), 1.0).item()
    assert loss == pytest.approx(expected, abs=1e-12)


def test_softmax_xent_examples(rng):
    assert softmax_xent(Tensor(np.zeros((2, 5))), [0, 3]).item() == \
        pytest.approx(math.log(5), abs=1e-12)

    saturated = np.zeros((1, 4))
    saturated[0, 2] = 30.0
    assert softmax_xent(Tensor(saturated), [2]).item() < 1e-9

    logits = rng.normal(size=(4, 5))
    labels = [0, 4, 2, 2]
    expected = sum(-logits[b][labels[b]]
                   + math.log(sum(math.exp(v) for v in logits[b]))
                   for b in range(4)) / 4
    assert softmax_xent(Tensor(logits), labels).item() == pytest.approx(
        expected, abs=1e-12)


@pytest.mark.parametrize('labels', [[0, 5], [-1, 0]])
def test_softmax_xent_label_range(labels):
    with pytest.raises(ContractError):
        softmax_xent(Tensor(np.zeros((2, 5))), labels)


def test_joint_loss_lambda(rng):
    labels = np.repeat(np.arange(3), 2)
    batch = make_batch(rng.normal(size=(6, 3)), labels,
                       rng.normal(size=(6, 3)))

    zero = joint_loss(batch, AnnConfig(lambda_=0.0))
    assert zero.item() == softmax_xent(batch.logits, labels).item()

    parts = joint_loss_components(batch, AnnConfig(lambda_=1.0))
    assert parts.total.item() == pytest.approx(
        parts.softmax.item() + parts.metric.item(), abs=1e-15)

    low = joint_loss(batch, AnnConfig(lambda_=0.5)).item()
    high = joint_loss(batch, AnnConfig(lambda_=2.0)).item()
    assert high - low == pytest.approx(1.5 * parts.metric.item(), abs=1e-12)


def test_joint_loss_metric_selection(rng):
    labels = np.repeat(np.arange(2), 2)
    batch = make_batch(rng.normal(size=(4, 3)), labels,
                       rng.normal(size=(4, 2)))
    cfg = AnnConfig()

    softmax_only = joint_loss_components(batch, cfg, MetricLoss.NONE)
    assert softmax_only.metric is None

    triplet = joint_loss_components(batch, cfg, MetricLoss.TRIPLET)
    assert triplet.metric.item() == batch_hard_triplet(batch, 0.3).item()

    contrastive = joint_loss_components(batch, cfg, MetricLoss.CONTRASTIVE)
    assert contrastive.metric.item() == contrastive_loss(batch, 1.0).item()


@pytest.mark.parametrize('metric', [MetricLoss.ANN, MetricLoss.TRIPLET,
                                    MetricLoss.CONTRASTIVE])
def test_loss_gradients(metric):
    rng = np.random.default_rng(5)
    labels = np.repeat(np.arange(3), 2)
    logits = Tensor(rng.normal(size=(6, 3)))
    cfg = AnnConfig(margin=5.0)

    def loss(t):
        return joint_loss(BatchEmbeddings(t, logits, labels), cfg, metric)

    assert grad_check(loss, Tensor(rng.normal(size=(6, 4)))) < 1e-4


@pytest.mark.parametrize('data', [{'margin': 0}, {'k0': 0}, {'lambda': -1},
                                  {'rounding': 'round'}, {'m': 1}])
def test_ann_config_validation(data):
    with pytest.raises(ConfigError):
        AnnConfig.unmarshal(data)


def test_ann_config_lambda_key():
    cfg = AnnConfig.unmarshal({'lambda': 0.25})
    assert cfg.lambda_ == 0.25
    assert cfg.to_dict()['lambda'] == 0.25
