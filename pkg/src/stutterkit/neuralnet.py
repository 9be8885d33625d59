"""Two-branch neural classifier with a minimal reverse-mode gradient engine.

One branch separates fluent from stuttered speech on pseudo-labels (all four
disfluency types collapsed to one class); the other classifies the four
disfluency types and sees zero loss (and therefore exactly zero gradient and
batch-norm contribution) from fluent samples. Both branches are three
fully-connected layers, each followed by ReLU and 1-D batch normalization,
with dropout after the first two blocks and a softmax cross-entropy head,
trained with Adam and a shared early-stopping clock on the summed validation
loss. All arithmetic is float64 numpy, deterministic given the seed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .dataio import ClassLabel, N_CLASSES, read_embedding, write_embedding
from .errors import (
    DimensionMismatch,
    DivergedLoss,
    InvalidArgument,
    NoDisfluentSamples,
    NonFiniteValue,
)

N_DISFLUENT = N_CLASSES - 1  # codes 0..3


def pseudo_label(labels) -> np.ndarray:
    """Binary relabeling for the fluent/stuttered gate: fluent 0, any disfluency 1."""
    y = np.asarray(labels, dtype=np.int64)
    if y.size and (y.min() < 0 or y.max() >= N_CLASSES):
        raise InvalidArgument("labels must be class codes 0..4")
    return np.where(y == int(ClassLabel.FLUENT), 0, 1).astype(np.int64)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


# --------------------------------------------------------------------------
# Layers
# --------------------------------------------------------------------------

class Layer:
    def forward(self, x, train=False, rng=None):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def params(self) -> dict:
        return {}

    def grads(self) -> dict:
        return {}

    def buffers(self) -> dict:
        return {}


class Linear(Layer):
    """Affine map with uniform fan-in initialization from the given generator."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        bound = 1.0 / math.sqrt(n_in)
        self.w = rng.uniform(-bound, bound, size=(n_in, n_out))
        self.b = rng.uniform(-bound, bound, size=n_out)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._x = None

    def forward(self, x, train=False, rng=None):
        self._x = x
        return x @ self.w + self.b

    def backward(self, grad):
        self.dw[...] = self._x.T @ grad
        self.db[...] = grad.sum(axis=0)
        return grad @ self.w.T

    def params(self):
        return {"w": self.w, "b": self.b}

    def grads(self):
        return {"w": self.dw, "b": self.db}


class ReLU(Layer):
    def forward(self, x, train=False, rng=None):
        self._mask = x > 0
        return x * self._mask

    def backward(self, grad):
        return grad * self._mask


class BatchNorm1d(Layer):
    """Per-feature batch normalization with running statistics for inference.

    Training normalizes by batch mean and biased batch variance; inference
    uses the running statistics, so prediction is batch-size invariant.
    """

    def __init__(self, n_features: int, eps: float = 1e-5, momentum: float = 0.1):
        self.gamma = np.ones(n_features)
        self.beta = np.zeros(n_features)
        self.dgamma = np.zeros_like(self.gamma)
        self.dbeta = np.zeros_like(self.beta)
        self.running_mean = np.zeros(n_features)
        self.running_var = np.ones(n_features)
        self.eps = eps
        self.momentum = momentum

    def forward(self, x, train=False, rng=None):
        if train:
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            self.running_mean = (1.0 - self.momentum) * self.running_mean + self.momentum * mean
            self.running_var = (1.0 - self.momentum) * self.running_var + self.momentum * var
            self._inv_std = 1.0 / np.sqrt(var + self.eps)
            self._xhat = (x - mean) * self._inv_std
            return self.gamma * self._xhat + self.beta
        return self.gamma * (x - self.running_mean) / np.sqrt(self.running_var + self.eps) + self.beta

    def backward(self, grad):
        b = grad.shape[0]
        self.dgamma[...] = (grad * self._xhat).sum(axis=0)
        self.dbeta[...] = grad.sum(axis=0)
        dxhat = grad * self.gamma
        return (self._inv_std / b) * (
            b * dxhat - dxhat.sum(axis=0) - self._xhat * (dxhat * self._xhat).sum(axis=0)
        )

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def grads(self):
        return {"gamma": self.dgamma, "beta": self.dbeta}

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}


class Dropout(Layer):
    """Inverted dropout; active only when training with a generator supplied."""

    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise InvalidArgument(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self._mask = None

    def forward(self, x, train=False, rng=None):
        if train and rng is not None and self.rate > 0.0:
            keep = 1.0 - self.rate
            self._mask = (rng.random(x.shape) < keep) / keep
            return x * self._mask
        self._mask = None
        return x

    def backward(self, grad):
        if self._mask is None:
            return grad
        return grad * self._mask


class Sequential:
    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x, train=False, rng=None):
        for layer in self.layers:
            x = layer.forward(x, train=train, rng=rng)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def params(self) -> dict:
        return {
            f"{i}.{name}": arr
            for i, layer in enumerate(self.layers)
            for name, arr in layer.params().items()
        }

    def grads(self) -> dict:
        return {
            f"{i}.{name}": arr
            for i, layer in enumerate(self.layers)
            for name, arr in layer.grads().items()
        }

    def state(self) -> dict:
        out = {key: arr.copy() for key, arr in self.params().items()}
        for i, layer in enumerate(self.layers):
            for name, arr in layer.buffers().items():
                out[f"{i}.{name}"] = arr.copy()
        return out

    def load_state(self, state: dict) -> None:
        # copy in place so optimizer references stay valid
        for key, arr in self.params().items():
            arr[...] = state[key]
        for i, layer in enumerate(self.layers):
            for name in layer.buffers():
                layer.buffers()[name][...] = state[f"{i}.{name}"]


class BranchNet(Sequential):
    """Three [Linear -> ReLU -> BatchNorm] blocks, dropout after the first two."""

    def __init__(self, n_in: int, hidden: tuple[int, int], n_out: int,
                 rng: np.random.Generator, dropout: float = 0.2):
        h1, h2 = hidden
        super().__init__([
            Linear(n_in, h1, rng), ReLU(), BatchNorm1d(h1), Dropout(dropout),
            Linear(h1, h2, rng), ReLU(), BatchNorm1d(h2), Dropout(dropout),
            Linear(h2, n_out, rng), ReLU(), BatchNorm1d(n_out),
        ])
        self.n_in = n_in
        self.n_out = n_out


# --------------------------------------------------------------------------
# Losses, optimizer, early stopping
# --------------------------------------------------------------------------

class SoftmaxCrossEntropy:
    """Mean softmax cross-entropy over the batch."""

    def forward(self, logits: np.ndarray, targets: np.ndarray) -> float:
        z = logits - logits.max(axis=1, keepdims=True)
        log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        self._probs = np.exp(log_probs)
        self._targets = targets
        return float(-log_probs[np.arange(len(targets)), targets].mean())

    def backward(self) -> np.ndarray:
        grad = self._probs.copy()
        grad[np.arange(len(self._targets)), self._targets] -= 1.0
        return grad / len(self._targets)


class SquaredError:
    """0.5 * batch-mean of summed squared differences; used for gradient checks."""

    def forward(self, outputs: np.ndarray, targets: np.ndarray) -> float:
        self._diff = outputs - targets
        return float(0.5 * (self._diff ** 2).sum() / outputs.shape[0])

    def backward(self) -> np.ndarray:
        return self._diff / self._diff.shape[0]


class Adam:
    def __init__(self, params: dict, lr: float = 1e-2, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict) -> None:
        self.t += 1
        bias1 = 1.0 - self.beta1 ** self.t
        bias2 = 1.0 - self.beta2 ** self.t
        for key, param in self.params.items():
            g = grads[key]
            self.m[key] = self.beta1 * self.m[key] + (1.0 - self.beta1) * g
            self.v[key] = self.beta2 * self.v[key] + (1.0 - self.beta2) * g * g
            param -= self.lr * (self.m[key] / bias1) / (np.sqrt(self.v[key] / bias2) + self.eps)


class EarlyStopping:
    """Stop after ``patience`` consecutive epochs without strict improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.epoch = 0
        self.stale = 0

    def update(self, loss: float) -> bool:
        """Record one epoch's loss; returns True when it strictly improved."""
        self.epoch += 1
        if loss < self.best:
            self.best = loss
            self.best_epoch = self.epoch
            self.stale = 0
            return True
        self.stale += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.stale >= self.patience


def gradient_check(net, loss, inputs, targets, epsilon: float = 1e-5) -> float:
    """Max relative disagreement between analytic and central-difference grads.

    Runs the net in training mode (batch statistics) with dropout inactive;
    the relative error for each parameter is
    ``|g_analytic - g_fd| / max(1e-8, |g_analytic| + |g_fd|)``.
    """
    out = net.forward(inputs, train=True)
    loss.forward(out, targets)
    net.backward(loss.backward())
    analytic = {key: g.copy() for key, g in net.grads().items()}
    worst = 0.0
    for key, param in net.params().items():
        flat = param.reshape(-1)
        ga = analytic[key].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            lp = loss.forward(net.forward(inputs, train=True), targets)
            flat[i] = orig - epsilon
            lm = loss.forward(net.forward(inputs, train=True), targets)
            flat[i] = orig
            g_fd = (lp - lm) / (2.0 * epsilon)
            rel = abs(ga[i] - g_fd) / max(1e-8, abs(ga[i]) + abs(g_fd))
            worst = max(worst, rel)
    return worst


# --------------------------------------------------------------------------
# Two-branch classifier
# --------------------------------------------------------------------------

def compose_two_branch_probs(fluent_probs: np.ndarray, disfluent_probs: np.ndarray) -> np.ndarray:
    """Assemble the 5-class vector: p(fluent) from the gate, disfluency mass split by the 4-way branch."""
    out = np.empty((fluent_probs.shape[0], N_CLASSES))
    out[:, :N_DISFLUENT] = fluent_probs[:, 1:2] * disfluent_probs
    out[:, int(ClassLabel.FLUENT)] = fluent_probs[:, 0]
    return out


def gate_labels(fluent_probs: np.ndarray, disfluent_probs: np.ndarray) -> np.ndarray:
    """Gated decision: fluent wins ties; otherwise the 4-way argmax decides."""
    is_fluent = fluent_probs[:, 0] >= fluent_probs[:, 1]
    dis_pick = np.argmax(disfluent_probs, axis=1)
    return np.where(is_fluent, int(ClassLabel.FLUENT), dis_pick).astype(np.int64)


@dataclass
class EpochRecord:
    epoch: int
    fluent_train: float
    disfluent_train: float
    fluent_valid: float
    disfluent_valid: float


class TwoBranchClassifier(BaseEstimator, ClassifierMixin):
    """Fluent-gate plus disfluency-type network over fixed-length features.

    Parameters
    ----------
    hidden : (int, int)
        Widths of the two hidden blocks (default (256, 64)).
    lr : float
        Adam learning rate (default 1e-2).
    batch_size, max_epochs, patience, dropout, seed
        Training configuration; early stopping watches the sum of both
        branches' validation losses with the given patience and restores the
        best epoch's weights.
    """

    def __init__(self, hidden: tuple[int, int] = (256, 64), lr: float = 1e-2,
                 batch_size: int = 128, max_epochs: int = 200, patience: int = 7,
                 dropout: float = 0.2, seed: int = 0):
        self.hidden = hidden
        self.lr = lr
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.dropout = dropout
        self.seed = seed

    def _valid_losses(self, ce, X_val, y_val_bin, X_val_dis, y_val_dis) -> tuple[float, float]:
        fluent = ce.forward(self.fluent_net_.forward(X_val, train=False), y_val_bin)
        disfluent = 0.0
        if X_val_dis.shape[0]:
            disfluent = ce.forward(self.disfluent_net_.forward(X_val_dis, train=False), y_val_dis)
        return fluent, disfluent

    def fit(self, X, y, X_val=None, y_val=None):
        X, y = _check_xy(X, y)
        if X_val is None or y_val is None:
            # fall back to the training data as the stopping signal
            X_val, y_val = X, y
        else:
            X_val, y_val = _check_xy(X_val, y_val)
            if X_val.shape[1] != X.shape[1]:
                raise DimensionMismatch("validation feature width differs from training")
        n, k = X.shape
        y_bin = pseudo_label(y)
        disfluent_rows = y != int(ClassLabel.FLUENT)
        if not disfluent_rows.any():
            raise NoDisfluentSamples("training fold has no disfluent samples")

        rng = np.random.default_rng(self.seed)
        self.fluent_net_ = BranchNet(k, self.hidden, 2, rng, self.dropout)
        self.disfluent_net_ = BranchNet(k, self.hidden, N_DISFLUENT, rng, self.dropout)
        opt_fluent = Adam(self.fluent_net_.params(), lr=self.lr)
        opt_disfluent = Adam(self.disfluent_net_.params(), lr=self.lr)
        ce = SoftmaxCrossEntropy()

        y_val_bin = pseudo_label(y_val)
        val_dis = y_val != int(ClassLabel.FLUENT)
        X_val_dis = X_val[val_dis]
        y_val_dis = y_val[val_dis]

        stopper = EarlyStopping(self.patience)
        best_state = None
        history: list[EpochRecord] = []
        for epoch in range(1, self.max_epochs + 1):
            perm = rng.permutation(n)
            fluent_sum = 0.0
            fluent_batches = 0
            dis_sum = 0.0
            dis_batches = 0
            for start in range(0, n, self.batch_size):
                idx = perm[start:start + self.batch_size]
                xb = X[idx]
                loss = ce.forward(self.fluent_net_.forward(xb, train=True, rng=rng), y_bin[idx])
                self.fluent_net_.backward(ce.backward())
                opt_fluent.step(self.fluent_net_.grads())
                fluent_sum += loss
                fluent_batches += 1

                sel = y[idx] != int(ClassLabel.FLUENT)
                if sel.any():
                    xd = xb[sel]
                    dloss = ce.forward(self.disfluent_net_.forward(xd, train=True, rng=rng), y[idx][sel])
                    self.disfluent_net_.backward(ce.backward())
                    opt_disfluent.step(self.disfluent_net_.grads())
                    dis_sum += dloss
                    dis_batches += 1
                else:
                    dloss = 0.0
                if not (math.isfinite(loss) and math.isfinite(dloss)):
                    raise DivergedLoss(f"non-finite training loss at epoch {epoch}")

            val_fluent, val_dis_loss = self._valid_losses(ce, X_val, y_val_bin, X_val_dis, y_val_dis)
            combined = val_fluent + val_dis_loss
            if not math.isfinite(combined):
                raise DivergedLoss(f"non-finite validation loss at epoch {epoch}")
            history.append(EpochRecord(
                epoch=epoch,
                fluent_train=fluent_sum / max(fluent_batches, 1),
                disfluent_train=dis_sum / max(dis_batches, 1),
                fluent_valid=val_fluent,
                disfluent_valid=val_dis_loss,
            ))
            if stopper.update(combined):
                best_state = (self.fluent_net_.state(), self.disfluent_net_.state())
            if stopper.should_stop:
                break

        if best_state is not None:
            self.fluent_net_.load_state(best_state[0])
            self.disfluent_net_.load_state(best_state[1])
        self.history_ = history
        self.best_epoch_ = stopper.best_epoch
        self.n_epochs_ = stopper.epoch
        self.classes_ = np.arange(N_CLASSES)
        self.n_features_in_ = k
        return self

    def _check_is_fitted(self):
        if not hasattr(self, "fluent_net_"):
            raise NotFittedError("TwoBranchClassifier is not fitted")

    def _branch_probs(self, X) -> tuple[np.ndarray, np.ndarray]:
        self._check_is_fitted()
        queries = np.asarray(X, dtype=np.float64)
        if queries.ndim == 1:
            queries = queries[None, :]
        if queries.shape[1] != self.n_features_in_:
            raise DimensionMismatch(
                f"expected {self.n_features_in_} features, got {queries.shape[1]}"
            )
        fluent = softmax(self.fluent_net_.forward(queries, train=False))
        disfluent = softmax(self.disfluent_net_.forward(queries, train=False))
        return fluent, disfluent

    def predict_proba(self, X) -> np.ndarray:
        fluent, disfluent = self._branch_probs(X)
        return compose_two_branch_probs(fluent, disfluent)

    def predict(self, X) -> np.ndarray:
        fluent, disfluent = self._branch_probs(X)
        return gate_labels(fluent, disfluent)


def _check_xy(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0] or X.shape[0] == 0:
        raise DimensionMismatch(f"X is {X.shape}, y is {y.shape}")
    if not np.isfinite(X).all():
        raise NonFiniteValue("feature matrix holds non-finite values")
    if y.min() < 0 or y.max() >= N_CLASSES:
        raise InvalidArgument("labels must be class codes 0..4")
    return X, y


def save_two_branch(model: TwoBranchClassifier, out_dir, name: str = "nn") -> None:
    """Checkpoint both branches as embedding tensors with a CSV index."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    index_rows = []
    for branch_name, net in (("fluent", model.fluent_net_), ("disfluent", model.disfluent_net_)):
        state = net.state()
        for key in sorted(state):
            arr = state[key]
            tensor = arr if arr.ndim == 2 else arr[None, :]
            fname = f"{name}_{branch_name}_{key.replace('.', '_')}.emb1"
            write_embedding(tensor, out_dir / fname)
            index_rows.append([branch_name, key, arr.ndim, fname])
    with open(out_dir / f"{name}_index.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["branch", "key", "ndim", "file"])
        writer.writerows(index_rows)


def load_two_branch_state(in_dir, name: str = "nn") -> dict[str, dict[str, np.ndarray]]:
    """Read a checkpoint back as {branch: {key: array}} (float32 storage precision)."""
    in_dir = Path(in_dir)
    out: dict[str, dict[str, np.ndarray]] = {"fluent": {}, "disfluent": {}}
    with open(in_dir / f"{name}_index.csv", "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for branch_name, key, ndim, fname in reader:
            arr = read_embedding(in_dir / fname).astype(np.float64)
            out[branch_name][key] = arr[0] if int(ndim) == 1 else arr
    return out


def write_training_curves(model: TwoBranchClassifier, path) -> None:
    """Per-epoch train/valid loss CSV for both branches."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "epoch", "fluent_train_loss", "fluent_valid_loss",
            "disfluent_train_loss", "disfluent_valid_loss",
        ])
        for rec in model.history_:
            writer.writerow([
                rec.epoch,
                f"{rec.fluent_train:.8f}", f"{rec.fluent_valid:.8f}",
                f"{rec.disfluent_train:.8f}", f"{rec.disfluent_valid:.8f}",
            ])
