import numpy as np
import pytest

from ctlkit import losses
from ctlkit.losses import (ClassCenters, ClassifierHead, LossWeights,
                           Margins, batch_hard_triplet, center_loss,
                           classification_loss, combine, ctl_batch,
                           ctl_grad, ctl_loss, triplet_loss)

H = 1e-3
REL = 1e-4


def central_diff(fn, x, h=H):
    """Central finite-difference gradient of scalar fn at array x."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = g.ravel()
    xf = x.ravel()
    for i in range(x.size):
        orig = xf[i]
        xf[i] = orig + h
        fp = fn(x)
        xf[i] = orig - h
        fm = fn(x)
        xf[i] = orig
        flat[i] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b):
    denom = max(np.abs(a).max(), np.abs(b).max(), 1e-12)
    return np.abs(a - b).max() / denom


def scalar_triplet_oracle(fa, fp, fn_, alpha):
    dp = sum((float(x) - float(y)) ** 2 for x, y in zip(fa, fp))
    dn = sum((float(x) - float(y)) ** 2 for x, y in zip(fa, fn_))
    return max(dp - dn + alpha, 0.0)


def test_triplet_easy_case_zero():
    assert triplet_loss([0, 0], [0, 0], [1, 0], 0.3) == 0.0


def test_triplet_symmetric_pn_gives_margin():
    v = np.array([0.7, -1.2])
    assert triplet_loss([1.0, 2.0], v, v, 0.3) == pytest.approx(0.3)


def test_triplet_matches_scalar_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        fa, fp, fn_ = rng.standard_normal((3, 4))
        assert triplet_loss(fa, fp, fn_, 0.3) == pytest.approx(
            scalar_triplet_oracle(fa, fp, fn_, 0.3), rel=1e-9)


def test_triplet_dimension_mismatch():
    with pytest.raises(ValueError):
        triplet_loss([1, 2], [1, 2, 3], [1, 2], 0.3)


def test_ctl_inactive_hinge():
    assert ctl_loss([0, 0], [0, 0], [2, 0], 0.3) == 0.0


def test_ctl_degenerate_centroids_give_margin():
    c = np.array([0.5, 0.5])
    assert ctl_loss([1.0, 0.0], c, c, 0.3) == pytest.approx(0.3)


def test_ctl_equals_triplet_with_centroids():
    rng = np.random.default_rng(1)
    fa, cp, cn = rng.standard_normal((3, 6))
    assert ctl_loss(fa, cp, cn, 0.4) == triplet_loss(fa, cp, cn, 0.4)


def test_ctl_translation_invariant():
    rng = np.random.default_rng(2)
    fa, cp, cn = rng.standard_normal((3, 5))
    t = rng.standard_normal(5)
    assert ctl_loss(fa + t, cp + t, cn + t, 0.3) == pytest.approx(
        ctl_loss(fa, cp, cn, 0.3), rel=1e-9, abs=1e-9)


def test_ctl_grad_inactive_is_zero():
    g = ctl_grad([0, 0], [0, 0], [2, 0], 0.3)
    for part in g:
        np.testing.assert_array_equal(part, 0.0)


def test_ctl_grad_hand_case():
    d_fa, _, _ = ctl_grad([1, 0], [0, 0], [3, 0], 9.0)
    np.testing.assert_allclose(d_fa, [6.0, 0.0])


def test_ctl_grad_matches_finite_differences():
    rng = np.random.default_rng(3)
    checked = 0
    while checked < 50:
        fa, cp, cn = rng.standard_normal((3, 4))
        inner = (np.sum((fa - cp) ** 2) - np.sum((fa - cn) ** 2) + 0.5)
        if abs(inner) < 1e-3 or inner <= 0:
            continue
        d_fa, d_cp, d_cn = ctl_grad(fa, cp, cn, 0.5)
        assert rel_err(d_fa, central_diff(
            lambda x: ctl_loss(x, cp, cn, 0.5), fa.copy())) < REL
        assert rel_err(d_cp, central_diff(
            lambda x: ctl_loss(fa, x, cn, 0.5), cp.copy())) < REL
        assert rel_err(d_cn, central_diff(
            lambda x: ctl_loss(fa, cp, x, 0.5), cn.copy())) < REL
        checked += 1


def test_center_loss_zero_at_centers():
    centers = ClassCenters({0: np.array([1.0, 2.0])})
    value, grad, _, _ = center_loss([[1.0, 2.0]], [0], centers)
    assert value == 0.0
    np.testing.assert_array_equal(grad, 0.0)


def test_center_loss_half_unit():
    centers = ClassCenters({0: np.zeros(2)})
    value, _, _, _ = center_loss([[1.0, 0.0]], [0], centers)
    assert value == pytest.approx(0.5)


def test_center_loss_missing_center():
    centers = ClassCenters({0: np.zeros(2)})
    with pytest.raises(KeyError):
        center_loss([[1.0, 0.0]], [5], centers)


def test_center_loss_finite_differences():
    rng = np.random.default_rng(4)
    emb = rng.standard_normal((5, 3))
    labels = np.array([0, 1, 0, 1, 1])
    centers = ClassCenters({0: rng.standard_normal(3),
                            1: rng.standard_normal(3)})
    value, grad_emb, grad_c, counts = center_loss(emb, labels, centers)

    fd_emb = central_diff(
        lambda x: center_loss(x, labels, centers)[0], emb.copy())
    assert rel_err(grad_emb, fd_emb) < REL

    for k in (0, 1):
        def f(c, k=k):
            saved = centers.centers[k]
            centers.centers[k] = c
            v = center_loss(emb, labels, centers)[0]
            centers.centers[k] = saved
            return v
        assert rel_err(grad_c[k], central_diff(f, centers.centers[k].copy())) < REL
    assert counts == {0: 2, 1: 3}


def test_center_sgd_step_count_normalized():
    centers = ClassCenters({0: np.zeros(2)}, lr=0.5)
    grads = {0: np.array([2.0, 0.0])}
    centers.sgd_step(grads, {0: 3})
    np.testing.assert_allclose(centers.centers[0], [-0.5 * 2.0 / 4.0, 0.0])


def test_classification_uniform_logits():
    head = ClassifierHead(weight=np.zeros((2, 3)), bias=np.zeros(2))
    value, *_ = classification_loss(np.ones((4, 3)), [0, 1, 0, 1], head)
    assert value == pytest.approx(np.log(2))


def test_classification_saturated_logits():
    head = ClassifierHead(weight=np.array([[50.0], [-50.0]]),
                          bias=np.zeros(2))
    value, *_ = classification_loss([[1.0], [-1.0]], [0, 1], head)
    assert value < 1e-8


def test_classification_out_of_range():
    head = ClassifierHead(weight=np.zeros((2, 3)), bias=np.zeros(2))
    with pytest.raises(ValueError):
        classification_loss(np.ones((1, 3)), [2], head)


def test_classification_finite_differences():
    rng = np.random.default_rng(5)
    emb = rng.standard_normal((6, 4))
    labels = rng.integers(0, 3, 6)
    head = ClassifierHead(weight=rng.standard_normal((3, 4)),
                          bias=rng.standard_normal(3))
    _, g_emb, g_w, g_b = classification_loss(emb, labels, head)

    assert rel_err(g_emb, central_diff(
        lambda x: classification_loss(x, labels, head)[0], emb.copy())) < REL

    def f_w(w):
        return classification_loss(
            emb, labels, ClassifierHead(w, head.bias))[0]

    def f_b(b):
        return classification_loss(
            emb, labels, ClassifierHead(head.weight, b))[0]

    assert rel_err(g_w, central_diff(f_w, head.weight.copy())) < REL
    assert rel_err(g_b, central_diff(f_b, head.bias.copy())) < REL


@pytest.mark.parametrize("mining", ["hard", "all"])
def test_batch_hard_triplet_finite_differences(mining):
    rng = np.random.default_rng(6)
    emb = rng.standard_normal((8, 3))
    labels = np.array([0, 0, 1, 1, 2, 2, 0, 1])
    value, grad = batch_hard_triplet(emb, labels, 0.3, mining)
    assert value >= 0.0
    fd = central_diff(
        lambda x: batch_hard_triplet(x, labels, 0.3, mining)[0], emb.copy())
    assert rel_err(grad, fd) < 1e-3  # mining switches add subgradient noise


@pytest.mark.parametrize("negatives", ["average", "hardest"])
def test_ctl_batch_finite_differences(negatives):
    rng = np.random.default_rng(7)
    emb = rng.standard_normal((8, 3))
    labels = np.array([0, 0, 1, 1, 2, 2, 0, 1])
    value, grad = ctl_batch(emb, labels, 0.3, negatives)
    assert value >= 0.0
    fd = central_diff(
        lambda x: ctl_batch(x, labels, 0.3, negatives)[0], emb.copy())
    assert rel_err(grad, fd) < 1e-3


def test_margins_validate():
    with pytest.raises(ValueError):
        Margins(alpha=-0.1)


def test_combine_zero_components():
    bundle = combine([0, 1], {})
    assert bundle.total == 0.0


def test_combine_weight_arithmetic():
    grad = np.zeros((1, 2))
    bundle = combine([7], {"center": (2.0, grad)})
    assert bundle.total == pytest.approx(1e-3)
    assert bundle.center == 2.0
    assert set(bundle.grad) == {7}


def test_combine_total_grad_is_weighted_sum():
    rng = np.random.default_rng(8)
    g1, g2 = rng.standard_normal((2, 3, 2))
    w = LossWeights(triplet=2.0, ctl=0.5)
    bundle = combine([0, 1, 2], {"triplet": (1.0, g1), "ctl": (3.0, g2)}, w)
    assert bundle.total == pytest.approx(2.0 * 1.0 + 0.5 * 3.0)
    np.testing.assert_allclose(bundle.grad[1], 2.0 * g1[1] + 0.5 * g2[1])
