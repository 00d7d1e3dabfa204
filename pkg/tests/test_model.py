import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_dataset
from fedvrdp.errors import ConfigurationError
from fedvrdp.model import (
    DataPoint,
    Dataset,
    ModelSpec,
    evaluate,
    gradient,
    init_params,
    loss,
    predict,
)

LOGISTIC = ModelSpec("logistic", 4, 3)
MLP = ModelSpec("mlp1", 4, 3, hidden_dim=5)


def reference_loss(spec, x, batch):
    """Straight-line cross-entropy with explicit loops and ``math.fsum``."""
    m, c, h = spec.input_dim, spec.num_classes, spec.hidden_dim
    total = []
    for feats, label in zip(batch.features.tolist(), batch.labels.tolist()):
        if spec.kind == "logistic":
            logits = [math.fsum(x[k * m + j] * feats[j] for j in range(m)) + x[c * m + k] for k in range(c)]
        else:
            off_w2, off_b1, off_b2 = h * m, h * m + c * h, h * m + c * h + h
            hidden = [
                math.tanh(math.fsum(x[u * m + j] * feats[j] for j in range(m)) + x[off_b1 + u])
                for u in range(h)
            ]
            logits = [
                math.fsum(x[off_w2 + k * h + u] * hidden[u] for u in range(h)) + x[off_b2 + k]
                for k in range(c)
            ]
        top = max(logits)
        lse = top + math.log(math.fsum(math.exp(z - top) for z in logits))
        total.append(lse - logits[label])
    return math.fsum(total) / len(total)


def central_difference(spec, x, batch, i, h=1e-5):
    xp, xm = x.copy(), x.copy()
    xp[i] += h
    xm[i] -= h
    return (loss(spec, xp, batch) - loss(spec, xm, batch)) / (2 * h)


def test_dimension_and_unpack():
    assert LOGISTIC.dim == 3 * 4 + 3
    assert MLP.dim == 5 * 4 + 3 * 5 + 5 + 3
    w1, w2, b1, b2 = MLP.unpack(np.arange(MLP.dim, dtype=float))
    assert w1.shape == (5, 4) and w2.shape == (3, 5) and b1.shape == (5,) and b2.shape == (3,)
    assert b2[-1] == MLP.dim - 1
    with pytest.raises(ConfigurationError):
        LOGISTIC.unpack(np.zeros(LOGISTIC.dim + 1))


def test_spec_validation():
    with pytest.raises(ConfigurationError):
        ModelSpec("cnn", 4, 3)
    with pytest.raises(ConfigurationError):
        ModelSpec("mlp1", 4, 3, hidden_dim=0)
    with pytest.raises(ConfigurationError):
        ModelSpec("logistic", 4, 1)


def test_dataset_validation():
    with pytest.raises(ConfigurationError):
        Dataset(np.zeros((2, 3)), np.array([0, 3]), 3)
    with pytest.raises(ConfigurationError):
        Dataset(np.zeros((2, 3)), np.array([0]), 3)
    with pytest.raises(ConfigurationError):
        Dataset(np.array([[0.0, np.nan]]), np.array([0]), 2)
    points = [DataPoint(np.array([1.0, 2.0]), 1), DataPoint(np.array([3.0, 4.0]), 0)]
    ds = Dataset.from_points(points, 2)
    assert len(ds) == 2 and ds.input_dim == 2
    assert [p.label for p in ds] == [1, 0]


def test_zero_logistic_loss_is_log_classes(rng):
    batch = random_dataset(rng, c=3)
    assert loss(LOGISTIC, np.zeros(LOGISTIC.dim), batch) == pytest.approx(math.log(3), rel=1e-15)


def test_large_margin_drives_loss_to_zero():
    spec = ModelSpec("logistic", 1, 2)
    batch = Dataset(np.array([[1.0]]), np.array([1]), 2)
    losses = [loss(spec, np.array([-a, a, 0.0, 0.0]), batch) for a in (0.5, 1, 2, 4, 8, 16)]
    assert all(b < a for a, b in zip(losses, losses[1:]))
    assert losses[-1] < 1e-13


@pytest.mark.parametrize("spec", [LOGISTIC, MLP], ids=["logistic", "mlp1"])
def test_loss_matches_reference(spec, rng):
    for _ in range(10):
        batch = random_dataset(rng)
        x = rng.standard_normal(spec.dim)
        assert loss(spec, x, batch) == pytest.approx(reference_loss(spec, x, batch), rel=1e-10)


def test_balanced_zero_model_has_zero_bias_gradient():
    features = np.array([[1.0, -1.0], [-1.0, 1.0], [1.0, 1.0], [-1.0, -1.0], [0.5, 0.5], [-0.5, -0.5]])
    batch = Dataset(features, np.array([0, 0, 1, 1, 2, 2]), 3)
    spec = ModelSpec("logistic", 2, 3)
    g = gradient(spec, np.zeros(spec.dim), batch)
    np.testing.assert_allclose(g[-3:], 0.0, atol=1e-15)


@pytest.mark.parametrize("spec", [LOGISTIC, MLP], ids=["logistic", "mlp1"])
def test_gradient_matches_finite_differences(spec, rng):
    for _ in range(5):
        batch = random_dataset(rng)
        x = rng.standard_normal(spec.dim)
        g = gradient(spec, x, batch)
        for i in rng.choice(spec.dim, size=min(50, spec.dim), replace=False):
            fd = central_difference(spec, x, batch, i)
            assert abs(g[i] - fd) <= 1e-4 * max(abs(g[i]), abs(fd), 1e-6)


@pytest.mark.parametrize("spec", [LOGISTIC, MLP], ids=["logistic", "mlp1"])
def test_duplicated_point_has_same_gradient(spec, rng):
    one = random_dataset(rng, n=1)
    two = one.subset([0, 0])
    x = rng.standard_normal(spec.dim)
    np.testing.assert_allclose(gradient(spec, x, two), gradient(spec, x, one), rtol=1e-14, atol=1e-16)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_loss_and_gradient_are_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    batch = random_dataset(rng, n=7)
    perm = rng.permutation(7)
    x = rng.standard_normal(MLP.dim)
    assert loss(MLP, x, batch.subset(perm)) == pytest.approx(loss(MLP, x, batch), rel=1e-12)
    np.testing.assert_allclose(
        gradient(MLP, x, batch.subset(perm)), gradient(MLP, x, batch), rtol=1e-10, atol=1e-13
    )


def test_zero_model_predicts_class_zero():
    labels = np.arange(50) % 10
    test = Dataset(np.random.default_rng(0).standard_normal((50, 3)), labels, 10)
    spec = ModelSpec("logistic", 3, 10)
    acc, _ = evaluate(spec, np.zeros(spec.dim), test)
    assert acc == pytest.approx(np.mean(labels == 0))


def test_separable_pair_is_fit():
    spec = ModelSpec("logistic", 1, 2)
    test = Dataset(np.array([[-1.0], [1.0]]), np.array([0, 1]), 2)
    acc, _ = evaluate(spec, np.array([-1.0, 1.0, 0.0, 0.0]), test)
    assert acc == 1.0


@pytest.mark.parametrize("spec", [LOGISTIC, MLP], ids=["logistic", "mlp1"])
def test_evaluate_matches_reference(spec):
    rng = np.random.default_rng(7)
    test = random_dataset(rng, n=40)
    x = rng.standard_normal(spec.dim)
    acc, test_loss = evaluate(spec, x, test)
    # argmax recomputed from the independent logits
    correct = 0
    for row, label in zip(test.features, test.labels):
        single = Dataset(row[None, :], np.array([0]), spec.num_classes)
        per_class = [reference_loss(spec, x, Dataset(row[None, :], np.array([k]), spec.num_classes))
                     for k in range(spec.num_classes)]
        correct += int(np.argmin(per_class) == label)
        assert predict(spec, x, single.features)[0] == np.argmin(per_class)
    assert acc == correct / len(test)
    assert test_loss == pytest.approx(reference_loss(spec, x, test), rel=1e-10)


def test_init_params():
    assert not init_params(LOGISTIC, 0).any()
    a, b = init_params(MLP, 1), init_params(MLP, 1)
    np.testing.assert_array_equal(a, b)
    w1, w2, b1, b2 = MLP.unpack(a)
    assert w1.any() and w2.any() and not b1.any() and not b2.any()
    assert not np.array_equal(init_params(MLP, 2), a)


def test_batch_shape_checks(rng):
    with pytest.raises(ConfigurationError):
        loss(ModelSpec("logistic", 5, 3), np.zeros(18), random_dataset(rng))
