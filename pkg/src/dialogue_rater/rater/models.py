"""RNN and CNN dialogue raters with hand-written backward passes."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from .heads import Head


def glorot(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class RaterModel:
    """Shared plumbing: named parameter arrays, a head, loss and gradients."""

    arch = ""

    def __init__(self, n_features: int, head: Head):
        self.n_features = n_features
        self.head = head
        self.params: dict[str, np.ndarray] = {}

    def _check(self, seq) -> np.ndarray:
        X = np.atleast_2d(np.asarray(seq, dtype=float))
        if X.shape[0] < 1:
            raise ValueError("empty dialogue")
        if X.shape[1] != self.n_features:
            raise ValueError(f"feature width {X.shape[1]} != model width {self.n_features}")
        return X

    def logits(self, seq) -> tuple[np.ndarray, dict]:
        raise NotImplementedError

    def backward(self, cache: dict, dz: np.ndarray) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def forward(self, seq):
        """Activated head output and the cache needed for ``backward``."""
        z, cache = self.logits(seq)
        return self.head.activate(z), cache

    def predict(self, seq):
        return self.forward(seq)[0]

    def loss(self, seq, target) -> float:
        z, _ = self.logits(seq)
        return self.head.loss_from_logits(z, target)

    def loss_and_grads(self, seq, target) -> tuple[float, dict[str, np.ndarray]]:
        z, cache = self.logits(seq)
        grads = self.backward(cache, self.head.grad_logits(z, target))
        return self.head.loss_from_logits(z, target), grads

    def copy(self) -> "RaterModel":
        clone = object.__new__(type(self))
        clone.__dict__.update(self.__dict__)
        clone.params = {k: v.copy() for k, v in self.params.items()}
        return clone

    def hyper(self) -> dict:
        raise NotImplementedError


class RNNRater(RaterModel):
    """Sigmoid Elman network; the head reads the last hidden state."""

    arch = "rnn"

    def __init__(self, n_features: int, head: Head, hidden: int = 300,
                 rng: np.random.Generator | None = None):
        super().__init__(n_features, head)
        if hidden < 1:
            raise ValueError("hidden width must be >= 1")
        rng = rng or np.random.default_rng(0)
        H, F, O = hidden, n_features, head.out_dim
        self.hidden = hidden
        self.params = {
            "W_in": glorot(rng, (H, F), F, H),
            "W_rec": glorot(rng, (H, H), H, H),
            "b_h": np.zeros(H),
            "W_out": glorot(rng, (O, H), H, O),
            "b_out": np.zeros(O),
        }

    def logits(self, seq):
        X = self._check(seq)
        p = self.params
        drive = X @ p["W_in"].T + p["b_h"]
        hs = np.zeros((len(X) + 1, self.hidden))
        for t in range(len(X)):
            hs[t + 1] = expit(drive[t] + p["W_rec"] @ hs[t])
        z = p["W_out"] @ hs[-1] + p["b_out"]
        return z, {"X": X, "hs": hs}

    def backward(self, cache, dz):
        p = self.params
        X, hs = cache["X"], cache["hs"]
        N = len(X)
        g = {"W_out": np.outer(dz, hs[-1]), "b_out": dz.copy()}
        dh = p["W_out"].T @ dz
        da = np.zeros((N, self.hidden))
        for t in range(N - 1, -1, -1):
            h = hs[t + 1]
            da[t] = dh * h * (1.0 - h)
            dh = p["W_rec"].T @ da[t]
        g["W_in"] = da.T @ X
        g["W_rec"] = da.T @ hs[:-1]
        g["b_h"] = da.sum(axis=0)
        return g

    def hyper(self):
        return {"H": self.hidden}


class CNNRater(RaterModel):
    """Narrow convolution over a zero-padded dialogue matrix, max-pool, 2-layer MLP.

    The MLP is a tanh hidden layer followed by the head's output layer.
    """

    arch = "cnn"

    def __init__(self, n_features: int, head: Head, n_filters: int = 50, width: int = 30,
                 mlp_hidden: int | None = None, rng: np.random.Generator | None = None):
        super().__init__(n_features, head)
        if width < 1 or n_filters < 1:
            raise ValueError("filter width and count must be >= 1")
        if mlp_hidden is None:
            mlp_hidden = 300 if head.kind == "class" else 50
        rng = rng or np.random.default_rng(0)
        M, F, W, H1, O = n_filters, n_features, width, mlp_hidden, head.out_dim
        self.n_filters, self.width, self.mlp_hidden = M, W, H1
        self.params = {
            "filters": glorot(rng, (M, F, W), F * W, M),
            "b_conv": np.zeros(M),
            "W_1": glorot(rng, (H1, M), M, H1),
            "b_1": np.zeros(H1),
            "W_out": glorot(rng, (O, H1), H1, O),
            "b_out": np.zeros(O),
        }

    def _patches(self, X: np.ndarray) -> np.ndarray:
        W = self.width
        pad = np.zeros((W - 1, X.shape[1]))
        Xp = np.vstack([pad, X, pad])
        # (L, F, W) windows with L = N + W - 1
        return sliding_window_view(Xp, W, axis=0)

    def logits(self, seq):
        X = self._check(seq)
        p = self.params
        P = self._patches(X).reshape(-1, self.n_features * self.width)
        conv = np.tanh(P @ p["filters"].reshape(self.n_filters, -1).T + p["b_conv"])
        idx = np.argmax(conv, axis=0)  # first maximum wins ties
        pooled = conv[idx, np.arange(self.n_filters)]
        hid = np.tanh(p["W_1"] @ pooled + p["b_1"])
        z = p["W_out"] @ hid + p["b_out"]
        return z, {"P": P, "conv": conv, "idx": idx, "pooled": pooled, "hid": hid}

    def backward(self, cache, dz):
        p = self.params
        hid, pooled, idx, conv, P = (cache[k] for k in ("hid", "pooled", "idx", "conv", "P"))
        g = {"W_out": np.outer(dz, hid), "b_out": dz.copy()}
        da1 = (p["W_out"].T @ dz) * (1.0 - hid ** 2)
        g["W_1"] = np.outer(da1, pooled)
        g["b_1"] = da1
        dpool = p["W_1"].T @ da1
        dconv = np.zeros_like(conv)
        cols = np.arange(self.n_filters)
        dconv[idx, cols] = dpool * (1.0 - pooled ** 2)
        g["filters"] = (dconv.T @ P).reshape(p["filters"].shape)
        g["b_conv"] = dconv.sum(axis=0)
        return g

    def hyper(self):
        return {"M": self.n_filters, "W": self.width, "H1": self.mlp_hidden}


def build_rater(arch: str, n_features: int, head: Head, seed: int = 0, **kw) -> RaterModel:
    rng = np.random.default_rng(seed)
    if arch == "rnn":
        return RNNRater(n_features, head, rng=rng, **kw)
    if arch == "cnn":
        return CNNRater(n_features, head, rng=rng, **kw)
    raise ValueError(f"unknown architecture {arch!r}")


def grad_check(model: RaterModel, seq, target, eps: float = 1e-5,
               grads: dict[str, np.ndarray] | None = None, dtype=np.float64) -> float:
    """Largest relative error between analytic and central-difference gradients.

    The differences are taken on a copy of the model cast to ``dtype``;
    ``np.longdouble`` cuts the round-off that otherwise dominates the
    numerical estimate of tiny gradient components. ``grads`` may be
    supplied to check an externally computed gradient.
    """
    if grads is None:
        _, grads = model.loss_and_grads(seq, target)
    probe = model.copy()
    probe.params = {k: v.astype(dtype) for k, v in model.params.items()}
    seq = np.asarray(seq, dtype=dtype)
    target = np.asarray(target, dtype=dtype) if np.ndim(target) else dtype(target)
    worst = 0.0
    for name, theta in probe.params.items():
        flat = theta.reshape(-1)
        ana = grads[name].reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            up = probe.loss(seq, target)
            flat[i] = old - eps
            down = probe.loss(seq, target)
            flat[i] = old
            num = float((up - down) / (2 * eps))
            denom = max(abs(num) + abs(ana[i]), 1e-8)
            worst = max(worst, abs(num - ana[i]) / denom)
    return worst
