"""Small dense autoencoders in numpy, trained with Adam."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .base import Detector, EmptyInputError, MeanPlus3Sigma

SURROGATE_LAYERS = (100, 32, 8, 2, 8, 32, 100)


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))
    if name == "linear":
        return z
    raise ValueError(name)


def _act_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0).astype(float)
    if name == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(z)


def rmse(X: np.ndarray, R: np.ndarray) -> np.ndarray:
    return np.sqrt(np.mean((X - R) ** 2, axis=1))


class MLP:
    """Fully connected stack with per-layer activations.

    Weights use Glorot-uniform initialisation from a seeded generator.
    """

    def __init__(self, sizes: Sequence[int], activations: Sequence[str] | None = None, seed: int = 0):
        self.sizes = tuple(int(s) for s in sizes)
        n_layers = len(self.sizes) - 1
        if activations is None:
            activations = ["relu"] * (n_layers - 1) + ["sigmoid"]
        if len(activations) != n_layers:
            raise ValueError("need one activation per layer")
        self.activations = tuple(activations)
        rng = np.random.default_rng(seed)
        self.W: list[np.ndarray] = []
        self.b: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            self.W.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
            self.b.append(np.zeros(fan_out))
        self._adam = None

    @property
    def params(self) -> list[np.ndarray]:
        return self.W + self.b

    def forward(self, X: np.ndarray, keep: bool = False):
        a = X
        cache = [(None, X)]
        for W, b, act in zip(self.W, self.b, self.activations):
            z = a @ W + b
            a = _act(act, z)
            if keep:
                cache.append((z, a))
        return (a, cache) if keep else a

    def reconstruct(self, X: np.ndarray) -> np.ndarray:
        return self.forward(np.atleast_2d(X))

    def loss_and_grads(self, X: np.ndarray, loss: str = "mse"):
        """Reconstruction loss averaged over the batch and its gradients.

        ``loss`` is ``"mse"`` (mean squared error over all entries) or
        ``"rmse"`` (batch mean of per-row root mean squared error).
        """
        out, cache = self.forward(X, keep=True)
        n, d = X.shape
        diff = out - X
        if loss == "mse":
            value = float(np.mean(diff ** 2))
            g = 2.0 * diff / (n * d)
        elif loss == "rmse":
            per_row = np.sqrt(np.mean(diff ** 2, axis=1))
            value = float(per_row.mean())
            safe = np.where(per_row > 0, per_row, 1.0)
            g = np.where(per_row[:, None] > 0, diff / (d * safe[:, None] * n), 0.0)
        else:
            raise ValueError(loss)
        gW = [None] * len(self.W)
        gb = [None] * len(self.b)
        for i in range(len(self.W) - 1, -1, -1):
            z, a = cache[i + 1]
            delta = g * _act_grad(self.activations[i], z, a)
            a_prev = cache[i][1]
            gW[i] = a_prev.T @ delta
            gb[i] = delta.sum(axis=0)
            g = delta @ self.W[i].T
        return value, gW + gb

    def adam_step(self, grads: list[np.ndarray], lr: float = 1e-3, beta1: float = 0.9,
                  beta2: float = 0.999, eps: float = 1e-7) -> None:
        params = self.params
        if self._adam is None:
            self._adam = [0, [np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params]]
        st = self._adam
        st[0] += 1
        t = st[0]
        for p, g, m, v in zip(params, grads, st[1], st[2]):
            m *= beta1
            m += (1 - beta1) * g
            v *= beta2
            v += (1 - beta2) * g * g
            m_hat = m / (1 - beta1 ** t)
            v_hat = v / (1 - beta2 ** t)
            p -= lr * m_hat / (np.sqrt(v_hat) + eps)

    def train(self, X: np.ndarray, epochs: int = 1, batch_size: int = 32, lr: float = 1e-3,
              shuffle_seed: int | None = None, loss: str = "mse") -> list[float]:
        """Mini-batch training; rows are visited in order unless ``shuffle_seed`` is set."""
        history = []
        rng = None if shuffle_seed is None else np.random.default_rng(shuffle_seed)
        for _ in range(epochs):
            order = np.arange(len(X)) if rng is None else rng.permutation(len(X))
            for start in range(0, len(X), batch_size):
                batch = X[order[start:start + batch_size]]
                value, grads = self.loss_and_grads(batch, loss)
                self.adam_step(grads, lr)
                history.append(value)
        return history

    def get_arrays(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {}
        for i, (W, b) in enumerate(zip(self.W, self.b)):
            out[f"{prefix}W{i}"] = W
            out[f"{prefix}b{i}"] = b
        return out

    def describe(self) -> dict:
        return {"sizes": list(self.sizes), "activations": list(self.activations)}

    @classmethod
    def from_arrays(cls, desc: dict, arrays: dict[str, np.ndarray], prefix: str = "") -> "MLP":
        m = cls(desc["sizes"], desc["activations"])
        m.W = [np.array(arrays[f"{prefix}W{i}"]) for i in range(len(m.W))]
        m.b = [np.array(arrays[f"{prefix}b{i}"]) for i in range(len(m.b))]
        return m


class DenseAutoencoder(Detector):
    """RMSE-scored autoencoder on min-max scaled features.

    The default architecture is 100-32-8-2-8-32-100 with ReLU everywhere
    except a sigmoid output layer.
    """

    kind = "autoencoder"
    default_threshold = MeanPlus3Sigma()

    def __init__(self, seed: int = 0, sizes: Sequence[int] = SURROGATE_LAYERS,
                 activations: Sequence[str] | None = None, epochs: int = 1,
                 batch_size: int = 32, lr: float = 1e-3, threshold_method=None):
        super().__init__(seed)
        self.sizes = tuple(sizes)
        self.activations = activations
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        if threshold_method is not None:
            self.default_threshold = threshold_method
        self.net: MLP | None = None
        self.loss_history: list[float] = []

    def _fit_normalized(self, Xn: np.ndarray) -> None:
        if Xn.shape[1] != self.sizes[0]:
            raise ValueError(f"expected {self.sizes[0]} features, got {Xn.shape[1]}")
        self.net = MLP(self.sizes, self.activations, seed=self.seed)
        self.loss_history = self.net.train(Xn, self.epochs, self.batch_size, self.lr)

    def _score_normalized(self, Xn: np.ndarray) -> np.ndarray:
        return rmse(Xn, self.net.forward(Xn))

    def reconstruct_normalized(self, Xn: np.ndarray) -> np.ndarray:
        self._check()
        return self.net.forward(np.atleast_2d(Xn))

    def get_state(self):
        params, arrays = self._base_state()
        params.update(net=self.net.describe(), epochs=self.epochs, batch_size=self.batch_size,
                      lr=self.lr, method=_method_to_json(self.default_threshold))
        arrays.update(self.net.get_arrays())
        return params, arrays

    def _set_state(self, params, arrays):
        self._set_base_state(params, arrays)
        self.net = MLP.from_arrays(params["net"], arrays)
        self.sizes = tuple(params["net"]["sizes"])
        self.activations = tuple(params["net"]["activations"])
        self.epochs, self.batch_size, self.lr = params["epochs"], params["batch_size"], params["lr"]
        self.default_threshold = _method_from_json(params["method"])


def _method_to_json(m) -> dict:
    from .base import Percentile
    if isinstance(m, Percentile):
        return {"percentile": m.q}
    return {"mean_plus_sigma": m.k}


def _method_from_json(d: dict):
    from .base import Percentile
    if "percentile" in d:
        return Percentile(d["percentile"])
    return MeanPlus3Sigma(d["mean_plus_sigma"])


def fit_surrogate(benign: np.ndarray, seed: int = 0, **kwargs) -> DenseAutoencoder:
    """One epoch over the benign rows in file order; threshold = mean + 3 std."""
    benign = np.atleast_2d(np.asarray(benign, dtype=float))
    if benign.size == 0:
        raise EmptyInputError("surrogate needs a non-empty benign matrix")
    return DenseAutoencoder(seed=seed, **kwargs).fit(benign)
