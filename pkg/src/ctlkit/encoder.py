"""Pluggable embedding function: a small MLP followed by batch
normalization, exposing both the raw (pre-BN) and normalized (post-BN)
embeddings.

Checkpoint format (binary, little-endian):
  magic ``CTLK``, version u16, input_dim u32, out_dim u32,
  n_hidden u32, hidden dims u32 each, then float32 parameter blocks in
  order: per layer W (row-major [out, in]) and b, then gamma, beta,
  running_mean, running_var.
"""

import struct

import numpy as np

__all__ = ["MlpEncoder"]

_MAGIC = b"CTLK"
_VERSION = 1


class MlpEncoder:
    """MLP (ReLU hidden layers) + batch-norm output layer.

    Parameters are float64 in memory; checkpoints store float32.
    """

    def __init__(self, input_dim, out_dim, hidden_dims=(64,), seed=0,
                 bn_eps=1e-5, bn_momentum=0.1):
        self.input_dim = int(input_dim)
        self.out_dim = int(out_dim)
        self.hidden_dims = tuple(int(h) for h in hidden_dims)
        self.bn_eps = bn_eps
        self.bn_momentum = bn_momentum

        rng = np.random.default_rng(seed)
        self.params = {}
        dims = (self.input_dim, *self.hidden_dims, self.out_dim)
        for li in range(len(dims) - 1):
            fan_in = dims[li]
            limit = np.sqrt(6.0 / fan_in)
            self.params[f"W{li}"] = rng.uniform(
                -limit, limit, size=(dims[li + 1], dims[li]))
            self.params[f"b{li}"] = np.zeros(dims[li + 1])
        self.params["gamma"] = np.ones(self.out_dim)
        self.params["beta"] = np.zeros(self.out_dim)
        self.running_mean = np.zeros(self.out_dim)
        self.running_var = np.ones(self.out_dim)
        self._cache = None

    @property
    def num_layers(self):
        return len(self.hidden_dims) + 1

    def forward(self, inputs, mode, update_running=True):
        """Returns (raw, normalized), both float64 ``[B, out_dim]``."""
        if mode not in ("train", "eval"):
            raise ValueError(f"unknown mode: {mode!r}")
        x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
        if x.shape[1] != self.input_dim:
            raise ValueError(
                f"input dim {x.shape[1]} != {self.input_dim}")
        if mode == "train" and x.shape[0] < 2:
            raise ValueError("train mode needs batch size >= 2")

        activations = [x]
        h = x
        for li in range(self.num_layers):
            z = h @ self.params[f"W{li}"].T + self.params[f"b{li}"]
            if li < self.num_layers - 1:
                h = np.maximum(z, 0.0)
            else:
                h = z
            activations.append(h)
        raw = h

        if mode == "train":
            mu = raw.mean(axis=0)
            var = raw.var(axis=0)
            if update_running:
                n = raw.shape[0]
                unbiased = var * n / (n - 1)
                m = self.bn_momentum
                self.running_mean = (1 - m) * self.running_mean + m * mu
                self.running_var = (1 - m) * self.running_var + m * unbiased
        else:
            mu = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + self.bn_eps)
        xhat = (raw - mu) * inv_std
        normalized = self.params["gamma"] * xhat + self.params["beta"]

        if mode == "train":
            self._cache = (activations, xhat, inv_std)
        else:
            self._cache = None
        return raw, normalized

    def backward(self, d_raw, d_norm):
        """Backprop upstream grads on (raw, normalized) from the last
        train-mode forward. Returns (param_grads, d_input)."""
        if self._cache is None:
            raise RuntimeError("backward without a matching train forward")
        activations, xhat, inv_std = self._cache
        b = xhat.shape[0]
        d_raw = np.zeros_like(xhat) if d_raw is None else np.asarray(d_raw)
        d_norm = np.zeros_like(xhat) if d_norm is None else np.asarray(d_norm)

        grads = {
            "gamma": (d_norm * xhat).sum(axis=0),
            "beta": d_norm.sum(axis=0),
        }
        dxhat = d_norm * self.params["gamma"]
        # Batch-norm backward through the batch statistics.
        d_bn = (inv_std / b) * (
            b * dxhat
            - dxhat.sum(axis=0)
            - xhat * (dxhat * xhat).sum(axis=0))
        d_h = d_raw + d_bn

        for li in range(self.num_layers - 1, -1, -1):
            h_in = activations[li]
            h_out = activations[li + 1]
            if li < self.num_layers - 1:
                d_h = d_h * (h_out > 0.0)
            grads[f"W{li}"] = d_h.T @ h_in
            grads[f"b{li}"] = d_h.sum(axis=0)
            d_h = d_h @ self.params[f"W{li}"]
        return grads, d_h

    def embed(self, inputs):
        """Eval-mode convenience: returns (raw, normalized)."""
        return self.forward(inputs, "eval")

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(struct.pack("<4sHII", _MAGIC, _VERSION,
                                 self.input_dim, self.out_dim))
            fh.write(struct.pack("<I", len(self.hidden_dims)))
            for h in self.hidden_dims:
                fh.write(struct.pack("<I", h))
            for arr in self._param_blocks():
                fh.write(arr.astype("<f4").tobytes())

    def _param_blocks(self):
        for li in range(self.num_layers):
            yield self.params[f"W{li}"]
            yield self.params[f"b{li}"]
        yield self.params["gamma"]
        yield self.params["beta"]
        yield self.running_mean
        yield self.running_var

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            magic, version, input_dim, out_dim = struct.unpack(
                "<4sHII", fh.read(14))
            if magic != _MAGIC:
                raise ValueError(f"{path}: bad checkpoint magic {magic!r}")
            if version != _VERSION:
                raise ValueError(f"{path}: unsupported version {version}")
            (n_hidden,) = struct.unpack("<I", fh.read(4))
            hidden = struct.unpack(f"<{n_hidden}I", fh.read(4 * n_hidden)) \
                if n_hidden else ()
            enc = cls(input_dim, out_dim, hidden_dims=hidden)
            for name, arr in zip(cls._block_names(enc), enc._param_blocks()):
                data = np.frombuffer(fh.read(4 * arr.size), dtype="<f4")
                if data.size != arr.size:
                    raise ValueError(f"{path}: truncated checkpoint")
                value = data.astype(np.float64).reshape(arr.shape)
                if name in ("running_mean", "running_var"):
                    setattr(enc, name, value)
                else:
                    enc.params[name] = value
            extra = fh.read(1)
        if extra:
            raise ValueError(f"{path}: trailing bytes in checkpoint")
        return enc

    @staticmethod
    def _block_names(enc):
        for li in range(enc.num_layers):
            yield f"W{li}"
            yield f"b{li}"
        yield "gamma"
        yield "beta"
        yield "running_mean"
        yield "running_var"
