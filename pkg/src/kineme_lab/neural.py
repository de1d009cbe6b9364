"""Minimal neural core: LSTM, dense/normalization layers, Adam, losses, BPTT.

Pure numpy, no autodiff: every layer implements an explicit backward pass and
accumulates parameter gradients in-place. `finite_difference_check` verifies
any composite model's analytic gradients against central differences.

Forward recurrence per step (gate order i, f, g, o):

    a = x_t W + h_{t-1} U + b
    i, f, o = sigmoid(a_i), sigmoid(a_f), sigmoid(a_o);  g = tanh(a_g)
    c_t = f * c_{t-1} + i * g
    h_t = o * tanh(c_t)

with zero initial state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ShapeError, TrainingDivergedError

BCE_CLIP = 1e-7
LAYER_NORM_EPS = 1e-5
GRAD_CLIP_NORM = 5.0


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def xavier_uniform(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    limit = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-limit, limit, size=shape)


def orthogonal(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    a = rng.standard_normal(size=shape)
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))  # fix sign convention for determinism
    return q[: shape[0], : shape[1]]


class LSTMLayer:
    """Single LSTM layer over (L, input_dim) sequences.

    Input weights are Xavier-uniform, recurrent weights orthogonal, and the
    forget-gate bias starts at +1.
    """

    def __init__(self, input_dim: int, hidden_dim: int, rng: np.random.Generator):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        h = hidden_dim
        self.W = np.concatenate(
            [xavier_uniform(rng, (input_dim, h)) for _ in range(4)], axis=1
        )
        self.U = np.concatenate([orthogonal(rng, (h, h)) for _ in range(4)], axis=1)
        self.b = np.zeros(4 * h)
        self.b[h : 2 * h] = 1.0
        self.zero_grads()
        self._cache = None

    def parameters(self) -> dict[str, np.ndarray]:
        return {"W": self.W, "U": self.U, "b": self.b}

    def gradients(self) -> dict[str, np.ndarray]:
        return {"W": self.dW, "U": self.dU, "b": self.db}

    def zero_grads(self) -> None:
        self.dW = np.zeros_like(self.W)
        self.dU = np.zeros_like(self.U)
        self.db = np.zeros_like(self.b)

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Returns the full hidden-state sequence (L, hidden_dim)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ShapeError(f"expected (L, {self.input_dim}), got {x.shape}")
        L, h = x.shape[0], self.hidden_dim
        gates = np.empty((L, 4 * h))
        cs = np.empty((L, h))
        hs = np.empty((L, h))
        h_prev = np.zeros(h)
        c_prev = np.zeros(h)
        for t in range(L):
            a = x[t] @ self.W + h_prev @ self.U + self.b
            i = sigmoid(a[:h])
            f = sigmoid(a[h : 2 * h])
            g = np.tanh(a[2 * h : 3 * h])
            o = sigmoid(a[3 * h :])
            c = f * c_prev + i * g
            gates[t] = np.concatenate([i, f, g, o])
            cs[t] = c
            hs[t] = o * np.tanh(c)
            h_prev, c_prev = hs[t], c
        self._cache = (x, gates, cs, hs)
        return hs

    def backward(self, d_hs: np.ndarray) -> np.ndarray:
        """BPTT given dLoss/dh_t for every step; returns dLoss/dx (L, input_dim)."""
        x, gates, cs, hs = self._cache
        L, h = x.shape[0], self.hidden_dim
        dx = np.empty_like(x)
        dh_next = np.zeros(h)
        dc_next = np.zeros(h)
        for t in range(L - 1, -1, -1):
            i, f, g, o = gates[t, :h], gates[t, h : 2 * h], gates[t, 2 * h : 3 * h], gates[t, 3 * h :]
            c_prev = cs[t - 1] if t > 0 else np.zeros(h)
            h_prev = hs[t - 1] if t > 0 else np.zeros(h)
            tc = np.tanh(cs[t])
            dh = d_hs[t] + dh_next
            do = dh * tc
            dc = dc_next + dh * o * (1.0 - tc * tc)
            di = dc * g
            dg = dc * i
            df = dc * c_prev
            dc_next = dc * f
            da = np.concatenate(
                [di * i * (1 - i), df * f * (1 - f), dg * (1 - g * g), do * o * (1 - o)]
            )
            self.dW += np.outer(x[t], da)
            self.dU += np.outer(h_prev, da)
            self.db += da
            dh_next = da @ self.U.T
            dx[t] = da @ self.W.T
        return dx


class Dense:
    """Affine layer with optional built-in activation ('identity'|'sigmoid'|'tanh')."""

    def __init__(self, input_dim: int, output_dim: int, rng: np.random.Generator,
                 activation: str = "identity"):
        if activation not in ("identity", "sigmoid", "tanh"):
            raise ConfigurationError(f"unknown activation {activation!r}")
        self.W = xavier_uniform(rng, (input_dim, output_dim))
        self.b = np.zeros(output_dim)
        self.activation = activation
        self.zero_grads()
        self._cache = None

    def parameters(self):
        return {"W": self.W, "b": self.b}

    def gradients(self):
        return {"W": self.dW, "b": self.db}

    def zero_grads(self):
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Accepts (in,) or (L, in); returns the matching shape."""
        x = np.asarray(x, dtype=np.float64)
        x2 = np.atleast_2d(x)
        z = x2 @ self.W + self.b
        if self.activation == "sigmoid":
            y = sigmoid(z)
        elif self.activation == "tanh":
            y = np.tanh(z)
        else:
            y = z
        self._cache = (x2, y)
        return y if x.ndim == 2 else y[0]

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x2, y = self._cache
        dy = np.asarray(dy, dtype=np.float64)
        dy2 = np.atleast_2d(dy)
        if self.activation == "sigmoid":
            dz = dy2 * y * (1.0 - y)
        elif self.activation == "tanh":
            dz = dy2 * (1.0 - y * y)
        else:
            dz = dy2
        self.dW += x2.T @ dz
        self.db += dz.sum(axis=0)
        dx = dz @ self.W.T
        return dx if dy.ndim == 2 else dx[0]


def layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """(x - mean) / sqrt(var + 1e-5) * gain + bias over the last axis."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < 2:
        raise ShapeError("layer_norm needs dim >= 2")
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + LAYER_NORM_EPS) * gain + bias


class LayerNorm:
    def __init__(self, dim: int):
        self.gain = np.ones(dim)
        self.bias = np.zeros(dim)
        self.zero_grads()
        self._cache = None

    def parameters(self):
        return {"gain": self.gain, "bias": self.bias}

    def gradients(self):
        return {"gain": self.dgain, "bias": self.dbias}

    def zero_grads(self):
        self.dgain = np.zeros_like(self.gain)
        self.dbias = np.zeros_like(self.bias)

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Normalizes over the last axis; accepts (dim,) or (L, dim)."""
        x = np.asarray(x, dtype=np.float64)
        mean = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + LAYER_NORM_EPS)
        xhat = (x - mean) * inv
        self._cache = (xhat, inv)
        return xhat * self.gain + self.bias

    def backward(self, dy: np.ndarray) -> np.ndarray:
        xhat, inv = self._cache
        self.dgain += (dy * xhat).reshape(-1, xhat.shape[-1]).sum(axis=0)
        self.dbias += np.asarray(dy).reshape(-1, xhat.shape[-1]).sum(axis=0)
        dxhat = dy * self.gain
        return inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * np.mean(dxhat * xhat, axis=-1, keepdims=True)
        )


def softmax(z: np.ndarray) -> np.ndarray:
    """Softmax over the last axis."""
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(s: np.ndarray, ds: np.ndarray) -> np.ndarray:
    return s * (ds - np.sum(ds * s, axis=-1, keepdims=True))


def bce(pred, target) -> float:
    """Binary cross entropy, batch mean; predictions clipped to [1e-7, 1-1e-7]."""
    p = np.clip(np.asarray(pred, dtype=np.float64), BCE_CLIP, 1.0 - BCE_CLIP)
    t = np.asarray(target, dtype=np.float64)
    return float(np.mean(-(t * np.log(p) + (1.0 - t) * np.log(1.0 - p))))


def bce_grad(pred, target) -> np.ndarray:
    """d(mean BCE)/d pred; zero where the clip is active (loss is flat there)."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    inside = (p > BCE_CLIP) & (p < 1.0 - BCE_CLIP)
    pc = np.clip(p, BCE_CLIP, 1.0 - BCE_CLIP)
    g = (pc - t) / (pc * (1.0 - pc))
    return np.where(inside, g, 0.0) / np.size(p)


def mae(pred, target) -> float:
    """Mean absolute error over the batch."""
    return float(np.mean(np.abs(np.asarray(pred, dtype=np.float64) - np.asarray(target))))


def mae_grad(pred, target) -> np.ndarray:
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    return np.sign(p - t) / np.size(p)


LOSSES = {"bce": (bce, bce_grad), "mae": (mae, mae_grad)}


class Adam:
    """Adam with bias correction; a zero gradient leaves parameters unchanged."""

    def __init__(self, lr: float = 0.01, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for key, p in params.items():
            g = grads[key]
            if key not in self._m:
                self._m[key] = np.zeros_like(p)
                self._v[key] = np.zeros_like(p)
            m = self._m[key]
            v = self._v[key]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


@dataclass
class TrainConfig:
    lr: float = 0.01
    loss: str = "bce"  # 'bce' for classification, 'mae' for regression
    max_epochs: int = 100
    patience: int = 4
    batch_size: int = 32
    seed: int = 0
    grad_clip: float = GRAD_CLIP_NORM

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigurationError("lr must be positive")
        if self.patience < 1:
            raise ConfigurationError("patience must be >= 1")
        if self.loss not in LOSSES:
            raise ConfigurationError(f"unknown loss {self.loss!r}")


@dataclass
class TrainingHistory:
    epochs: list[tuple[int, float, float]] = field(default_factory=list)  # (epoch, train, val)
    best_epoch: int = 0
    best_val_loss: float = float("inf")

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epoch,train_loss,val_loss\n")
            for epoch, train_loss, val_loss in self.epochs:
                fh.write(f"{epoch},{train_loss!r},{val_loss!r}\n")


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> None:
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale


def _validate_targets(pairs, loss: str) -> None:
    for _, y in pairs:
        if loss == "bce" and y not in (0, 0.0, 1, 1.0):
            raise ConfigurationError(f"classification target must be 0/1, got {y}")
        if loss == "mae" and not 0.0 <= y <= 1.0:
            raise ConfigurationError(f"regression target must be in [0,1], got {y}")


def train(model, train_pairs, val_pairs, config: TrainConfig) -> TrainingHistory:
    """Mini-batch Adam with early stopping on validation loss.

    Stops once validation loss has failed to improve for `patience` epochs and
    restores the parameters of the best-validation epoch. Deterministic for a
    fixed seed. Raises TrainingDivergedError on a non-finite loss.
    """
    _validate_targets(train_pairs, config.loss)
    loss_fn, loss_grad = LOSSES[config.loss]
    rng = np.random.default_rng(config.seed)
    optimizer = Adam(lr=config.lr)
    params = model.parameters()
    history = TrainingHistory()
    best_params = {k: v.copy() for k, v in params.items()}
    since_best = 0

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_pairs))
        loss_sum = 0.0
        for b_start in range(0, len(order), config.batch_size):
            batch = [train_pairs[j] for j in order[b_start : b_start + config.batch_size]]
            model.zero_grads()
            batch_loss = 0.0
            # Both losses decompose per sample, so gradients can be pushed
            # immediately (layer caches hold one sample at a time).
            for x, y in batch:
                pred = model.forward(x)
                batch_loss += loss_fn(pred, y)
                model.backward(float(loss_grad(pred, y)) / len(batch))
            batch_loss /= len(batch)
            if not np.isfinite(batch_loss):
                raise TrainingDivergedError(
                    "non-finite training loss", lr=config.lr,
                    batch_index=b_start // config.batch_size,
                )
            grads = model.gradients()
            clip_global_norm(grads, config.grad_clip)
            optimizer.step(params, grads)
            loss_sum += batch_loss * len(batch)
        train_loss = float(loss_sum / len(train_pairs))

        val_preds = np.array([model.forward(x) for x, _ in val_pairs])
        val_targets = np.array([y for _, y in val_pairs], dtype=np.float64)
        val_loss = loss_fn(val_preds, val_targets)
        history.epochs.append((epoch, train_loss, float(val_loss)))

        if val_loss < history.best_val_loss:
            history.best_val_loss = float(val_loss)
            history.best_epoch = epoch
            best_params = {k: v.copy() for k, v in params.items()}
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break

    for key, value in params.items():
        value[...] = best_params[key]
    return history


def finite_difference_check(model, loss_name: str, samples, h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Relative error uses max(|analytic|, |numeric|, 1e-6) as the denominator so
    near-zero gradients compare absolutely.
    """
    loss_fn, loss_grad = LOSSES[loss_name]

    def total_loss() -> float:
        preds = np.array([model.forward(x) for x, _ in samples])
        targets = np.array([y for _, y in samples], dtype=np.float64)
        return loss_fn(preds, targets)

    model.zero_grads()
    preds = np.array([model.forward(x) for x, _ in samples])
    targets = np.array([y for _, y in samples], dtype=np.float64)
    dpreds = loss_grad(preds, targets)
    for j, (x, _) in enumerate(samples):
        model.forward(x)
        model.backward(float(dpreds[j]))

    params = model.parameters()
    analytic = {k: g.copy() for k, g in model.gradients().items()}
    worst = 0.0
    for key, p in params.items():
        flat = p.reshape(-1)
        a_flat = analytic[key].reshape(-1)
        for idx in range(flat.shape[0]):
            orig = flat[idx]
            flat[idx] = orig + h
            up = total_loss()
            flat[idx] = orig - h
            down = total_loss()
            flat[idx] = orig
            numeric = (up - down) / (2.0 * h)
            denom = max(abs(a_flat[idx]), abs(numeric), 1e-6)
            worst = max(worst, abs(a_flat[idx] - numeric) / denom)
    return worst
