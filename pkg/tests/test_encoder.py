import numpy as np
import pytest

from ctlkit.encoder import MlpEncoder


def fd_param_grads(enc, x, d_raw, d_norm, h=1e-3):
    """Finite-difference gradients of sum(raw*d_raw) + sum(norm*d_norm)."""
    def value():
        raw, norm = enc.forward(x, "train", update_running=False)
        return float((raw * d_raw).sum() + (norm * d_norm).sum())

    grads = {}
    for name, arr in enc.params.items():
        g = np.zeros_like(arr)
        flat_a = arr.ravel()
        flat_g = g.ravel()
        for i in range(arr.size):
            orig = flat_a[i]
            flat_a[i] = orig + h
            fp = value()
            flat_a[i] = orig - h
            fm = value()
            flat_a[i] = orig
            flat_g[i] = (fp - fm) / (2 * h)
        grads[name] = g
    return grads


def rel_err(a, b):
    denom = max(np.abs(a).max(), np.abs(b).max(), 1e-10)
    return np.abs(a - b).max() / denom


def sample_away_from_kinks(enc, rng, batch, margin=5e-3):
    """Random batch whose hidden pre-activations stay clear of the ReLU
    kink, so central differences are valid (boundary-case exclusion)."""
    for _ in range(200):
        x = rng.standard_normal((batch, enc.input_dim))
        z = x @ enc.params["W0"].T + enc.params["b0"]
        if np.abs(z).min() > margin:
            return x
    raise AssertionError("could not sample away from ReLU kinks")


def test_eval_mode_deterministic():
    enc = MlpEncoder(3, 2, hidden_dims=(4,), seed=0)
    x = np.random.default_rng(0).standard_normal((5, 3))
    a = enc.forward(x, "eval")
    b = enc.forward(x, "eval")
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_train_mode_normalizes_batch():
    enc = MlpEncoder(3, 2, hidden_dims=(4,), seed=1)
    x = np.random.default_rng(1).standard_normal((64, 3))
    _, norm = enc.forward(x, "train")  # gamma=1, beta=0 at init
    np.testing.assert_allclose(norm.mean(axis=0), 0.0, atol=1e-4)
    np.testing.assert_allclose(norm.var(axis=0), 1.0, atol=1e-4)


def test_identity_configuration():
    enc = MlpEncoder(3, 3, hidden_dims=(), seed=0)
    enc.params["W0"] = np.eye(3)
    enc.params["b0"] = np.zeros(3)
    x = np.random.default_rng(2).standard_normal((4, 3))
    raw, _ = enc.forward(x, "eval")
    np.testing.assert_allclose(raw, x)


def test_train_batch_of_one_rejected():
    enc = MlpEncoder(3, 2, seed=0)
    with pytest.raises(ValueError):
        enc.forward(np.ones((1, 3)), "train")


def test_backward_without_forward():
    enc = MlpEncoder(3, 2, seed=0)
    with pytest.raises(RuntimeError):
        enc.backward(None, None)


def test_zero_upstream_zero_grads():
    enc = MlpEncoder(3, 2, hidden_dims=(4,), seed=3)
    x = np.random.default_rng(3).standard_normal((4, 3))
    enc.forward(x, "train")
    grads, d_in = enc.backward(np.zeros((4, 2)), np.zeros((4, 2)))
    for g in grads.values():
        np.testing.assert_array_equal(g, 0.0)
    np.testing.assert_array_equal(d_in, 0.0)


@pytest.mark.parametrize("seed", range(20))
def test_backward_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    enc = MlpEncoder(3, 2, hidden_dims=(4,), seed=seed)
    x = sample_away_from_kinks(enc, rng, 4)
    d_raw = rng.standard_normal((4, 2))
    d_norm = rng.standard_normal((4, 2))
    enc.forward(x, "train", update_running=False)
    grads, _ = enc.backward(d_raw, d_norm)
    fd = fd_param_grads(enc, x, d_raw, d_norm)
    for name in grads:
        assert rel_err(grads[name], fd[name]) < 1e-3, name


def test_frozen_bn_is_affine():
    # Eval-mode BN reduces to y = gamma*(x-mu)*istd + beta; its gradient
    # w.r.t. raw is the closed-form affine scale.
    rng = np.random.default_rng(99)
    enc = MlpEncoder(2, 2, hidden_dims=(), seed=9)
    enc.running_mean = rng.standard_normal(2)
    enc.running_var = np.abs(rng.standard_normal(2)) + 0.5
    x = rng.standard_normal((3, 2))
    raw, norm = enc.forward(x, "eval")
    istd = 1.0 / np.sqrt(enc.running_var + enc.bn_eps)
    expected = enc.params["gamma"] * (raw - enc.running_mean) * istd \
        + enc.params["beta"]
    np.testing.assert_allclose(norm, expected)


def test_input_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    enc = MlpEncoder(3, 2, hidden_dims=(4,), seed=7)
    x = sample_away_from_kinks(enc, rng, 4)
    d_raw = rng.standard_normal((4, 2))
    d_norm = rng.standard_normal((4, 2))
    enc.forward(x, "train", update_running=False)
    _, d_in = enc.backward(d_raw, d_norm)

    def value(xv):
        raw, norm = enc.forward(xv, "train", update_running=False)
        return float((raw * d_raw).sum() + (norm * d_norm).sum())

    fd = np.zeros_like(x)
    h = 1e-3
    for i in range(x.size):
        orig = x.ravel()[i]
        x.ravel()[i] = orig + h
        fp = value(x)
        x.ravel()[i] = orig - h
        fm = value(x)
        x.ravel()[i] = orig
        fd.ravel()[i] = (fp - fm) / (2 * h)
    # restore cache for any later backward calls
    enc.forward(x, "train", update_running=False)
    assert rel_err(d_in, fd) < 1e-3


def test_running_stats_update():
    enc = MlpEncoder(2, 2, hidden_dims=(), seed=0)
    x = np.random.default_rng(5).standard_normal((16, 2))
    before = enc.running_mean.copy()
    enc.forward(x, "train")
    assert not np.array_equal(before, enc.running_mean)
    assert np.all(enc.running_var > 0)


def test_checkpoint_round_trip(tmp_path):
    enc = MlpEncoder(5, 3, hidden_dims=(7, 4), seed=21)
    x = np.random.default_rng(6).standard_normal((8, 5))
    enc.forward(x, "train")  # move running stats off their init values
    path = tmp_path / "enc.ckpt"
    enc.save(path)
    back = MlpEncoder.load(path)
    assert back.hidden_dims == (7, 4)
    ra, na = enc.forward(x, "eval")
    rb, nb = back.forward(x, "eval")
    np.testing.assert_allclose(ra, rb, atol=1e-6)  # f32 checkpoint rounding
    np.testing.assert_allclose(na, nb, atol=1e-6)


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"XXXX" + b"\x00" * 20)
    with pytest.raises(ValueError, match="magic"):
        MlpEncoder.load(path)
