"""Small multi-output feed-forward regressor with hand-written backprop.

Parameters live in one flat float64 vector: every layer's weight matrix
(row-major, shape ``(fan_in, fan_out)``) in layer order, followed by every
layer's bias vector.  Inputs and targets are mapped through stored affine
transforms so the trunk always sees O(1) numbers::

    x_net = (state - in_shift) / in_scale
    value = out_shift + out_scale * trunk(x_net)
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ContractViolation, TrainingError


class Activation(str, enum.Enum):
    SIGMOID = "sigmoid"
    TANH = "tanh"


def _act(kind: Activation, z: np.ndarray) -> np.ndarray:
    if kind is Activation.SIGMOID:
        # tanh form cannot overflow
        return 0.5 + 0.5 * np.tanh(0.5 * z)
    return np.tanh(z)


def _act_grad(kind: Activation, a: np.ndarray) -> np.ndarray:
    """Derivative expressed through the activation output ``a``."""
    if kind is Activation.SIGMOID:
        return a * (1.0 - a)
    return 1.0 - a * a


@dataclass(eq=False)
class Network:
    layer_sizes: tuple[int, ...]
    params: np.ndarray
    activation: Activation = Activation.SIGMOID
    in_shift: np.ndarray | None = None
    in_scale: np.ndarray | None = None
    out_shift: np.ndarray | None = None
    out_scale: np.ndarray | None = None

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ContractViolation(f"bad layer sizes {self.layer_sizes}")
        self.activation = Activation(self.activation)
        self.params = np.asarray(self.params, dtype=float)
        if self.params.shape != (n_params(self.layer_sizes),):
            raise ContractViolation(
                f"expected {n_params(self.layer_sizes)} parameters, got {self.params.shape}"
            )
        d, k = self.layer_sizes[0], self.layer_sizes[-1]
        self.in_shift = _vec(self.in_shift, d, 0.0)
        self.in_scale = _vec(self.in_scale, d, 1.0)
        self.out_shift = _vec(self.out_shift, k, 0.0)
        self.out_scale = _vec(self.out_scale, k, 1.0)

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    def layers(self, params: np.ndarray | None = None) -> list[tuple[np.ndarray, np.ndarray]]:
        """Views ``(W, b)`` into ``params`` (defaults to this network's)."""
        return _unflatten(self.layer_sizes, self.params if params is None else params)

    def copy(self, **changes) -> "Network":
        net = replace(self, **changes)
        if "params" not in changes:
            net.params = self.params.copy()
        return net

    def scale_inputs(self, states) -> np.ndarray:
        return (np.asarray(states, dtype=float) - self.in_shift) / self.in_scale

    def predict(self, states) -> np.ndarray:
        """Continuation values in original units for raw (unscaled) states."""
        states = np.asarray(states, dtype=float)
        out = forward(self, self.scale_inputs(states))
        return self.out_shift + self.out_scale * out


def _vec(v, n: int, default: float) -> np.ndarray:
    if v is None:
        return np.full(n, default)
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape != (n,):
        raise ContractViolation(f"transform vector must have length {n}")
    return v


def n_params(layer_sizes) -> int:
    return sum(a * b + b for a, b in zip(layer_sizes, layer_sizes[1:]))


def _unflatten(sizes, flat):
    pairs = list(zip(sizes, sizes[1:]))
    ws, pos = [], 0
    for a, b in pairs:
        ws.append(flat[pos:pos + a * b].reshape(a, b))
        pos += a * b
    bs = []
    for _, b in pairs:
        bs.append(flat[pos:pos + b])
        pos += b
    return list(zip(ws, bs))


def init_network(
    layer_sizes, seed: int = 0, init_scale: float = 1.0,
    activation: Activation | str = Activation.SIGMOID,
) -> Network:
    """Weights ~ N(0, (init_scale / sqrt(fan_in))^2), zero biases."""
    rng = np.random.default_rng(seed)
    net = Network(tuple(layer_sizes), np.zeros(n_params(layer_sizes)), Activation(activation))
    for W, _ in net.layers():
        W[...] = rng.standard_normal(W.shape) * (init_scale / np.sqrt(W.shape[0]))
    return net


def _as_2d(x: np.ndarray, width: int, what: str) -> np.ndarray:
    x = np.asarray(x)
    if x.dtype.kind != "f":
        x = x.astype(float)
    if x.ndim == 1:
        x = x.reshape(1, -1) if x.shape[0] == width else x.reshape(-1, 1)
    if x.ndim != 2 or x.shape[1] != width:
        raise ContractViolation(f"{what} width {x.shape[-1]} does not match network ({width})")
    return x


def _forward_cache(net: Network, x: np.ndarray, params: np.ndarray) -> list[np.ndarray]:
    acts = [x]
    layers = net.layers(params)
    for W, b in layers[:-1]:
        acts.append(_act(net.activation, acts[-1] @ W + b))
    W, b = layers[-1]
    acts.append(acts[-1] @ W + b)
    return acts


def forward(net: Network, inputs, params: np.ndarray | None = None) -> np.ndarray:
    """Trunk output for already-scaled inputs.

    A 1-D input is treated as a single sample and yields a 1-D output.
    """
    single = np.ndim(inputs) == 1 and np.shape(inputs)[0] == net.n_inputs
    x = _as_2d(inputs, net.n_inputs, "input")
    out = _forward_cache(net, x, net.params if params is None else params)[-1]
    return out[0] if single else out


def _batch(net: Network, inputs, targets) -> tuple[np.ndarray, np.ndarray]:
    x = _as_2d(inputs, net.n_inputs, "input")
    y = _as_2d(targets, net.n_outputs, "target")
    if x.shape[0] != y.shape[0]:
        raise ContractViolation(f"{x.shape[0]} inputs vs {y.shape[0]} targets")
    if x.shape[0] == 0:
        raise ContractViolation("empty batch")
    return x, y


def _check_mask(mask, y: np.ndarray) -> np.ndarray | None:
    if mask is None:
        return None
    m = np.asarray(mask)
    if m.ndim == 1 and y.shape[1] == 1:
        m = m[:, None]
    if m.shape != y.shape:
        raise ContractViolation(f"mask has shape {m.shape}, targets {y.shape}")
    if not np.all((m == 0) | (m == 1)):
        raise ContractViolation("mask entries must be 0 or 1")
    return m.astype(y.dtype)


def loss(net: Network, inputs, targets, params: np.ndarray | None = None, mask=None) -> float:
    """Mean over samples of the squared error summed over outputs.

    A 0/1 ``mask`` of the targets' shape drops the masked-out entries from
    the sum (the divisor stays the number of samples).
    """
    x, y = _batch(net, inputs, targets)
    m = _check_mask(mask, y)
    r = forward(net, x, params) - y
    if m is not None:
        r = r * m
    return float(np.einsum("ij,ij->", r, r) / x.shape[0])


def _loss_and_grad(net, x, y, params, mask=None):
    acts = _forward_cache(net, x, params)
    layers = net.layers(params)
    resid = acts[-1] - y
    if mask is not None:
        resid = resid * mask
    n = x.shape[0]
    value = float(np.einsum("ij,ij->", resid, resid) / n)
    grad = np.empty_like(params)
    gl = net.layers(grad)
    delta = resid * (2.0 / n)
    for i in range(len(layers) - 1, -1, -1):
        gW, gb = gl[i]
        gW[...] = acts[i].T @ delta
        gb[...] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ layers[i][0].T) * _act_grad(net.activation, acts[i])
    return value, grad


def gradient(net: Network, inputs, targets, params: np.ndarray | None = None, mask=None) -> np.ndarray:
    """d loss / d params, same flat layout as ``net.params``."""
    x, y = _batch(net, inputs, targets)
    m = _check_mask(mask, y)
    return _loss_and_grad(net, x, y, net.params if params is None else params, m)[1]


@dataclass(frozen=True)
class TrainConfig:
    """Adam hyperparameters and data-normalization switches.

    Training stops after ``max_epochs`` or once the best full-batch loss has
    not improved by a relative ``tolerance`` for ``patience`` epochs.
    """

    learning_rate: float = 0.02
    max_epochs: int = 2000
    batch_size: int = 1024
    tolerance: float = 1e-6
    patience: int = 20
    init_scale: float = 1.0
    normalize_inputs: bool = True
    normalize_targets: bool = True
    hidden: tuple[int, ...] = (10, 10)
    activation: Activation = Activation.SIGMOID
    lr_decay: float = 0.5
    # finish with the exact least-squares output layer for the learned features
    refit_output: bool = True
    # arithmetic precision of the optimization loop; results are stored as float64
    dtype: str = "float32"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "activation", Activation(self.activation))
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.learning_rate <= 0 or self.max_epochs < 1 or self.batch_size < 1:
            raise ContractViolation("learning_rate, max_epochs and batch_size must be positive")
        if self.tolerance < 0 or self.patience < 1 or self.init_scale <= 0:
            raise ContractViolation("tolerance >= 0, patience >= 1 and init_scale > 0 required")
        if not 0 < self.lr_decay <= 1:
            raise ContractViolation("lr_decay must lie in (0, 1]")
        if self.dtype not in ("float32", "float64"):
            raise ContractViolation("dtype must be 'float32' or 'float64'")


@dataclass(frozen=True)
class FitResult:
    network: Network
    loss: float
    initial_loss: float
    epochs: int


def _target_transform(y: np.ndarray, mask: np.ndarray | None = None):
    if mask is None:
        shift = y.mean(axis=0)
        scale = y.std(axis=0)
    else:
        count = mask.sum(axis=0)
        shift = (mask * y).sum(axis=0) / count
        scale = np.sqrt((mask * (y - shift) ** 2).sum(axis=0) / count)
    constant = scale <= 1e-12 * np.maximum(1.0, np.abs(shift))
    return shift, np.where(constant, 1.0, scale), constant


def train(
    net: Network | None, inputs, targets, cfg: TrainConfig = TrainConfig(),
    input_scale=None, mask=None,
) -> FitResult:
    """Fit ``net`` (copied, never mutated) to raw-unit inputs and targets.

    ``net=None`` starts from a fresh seeded initialization.  With
    ``normalize_inputs`` the states are mapped to ``state / input_scale - 1``
    (``input_scale`` defaults to the column means).  With
    ``normalize_targets`` each output is standardized for the fit and the
    transform is stored on the returned network.

    Mini-batch Adam; the learning rate is multiplied by ``lr_decay`` each
    time the best loss stalls, and training ends when it stalls with the
    rate already reduced below 1/20 of its start.  The best parameters seen
    are kept and, with ``refit_output``, the output layer is then solved
    exactly by linear least squares on the last hidden layer, so
    ``loss <= initial_loss`` always holds.

    ``mask`` (0/1, targets' shape) restricts each output's fit to the
    samples where it is 1; every output needs at least one such sample.
    Losses are then reported on the masked entries only.
    """
    x_raw = np.asarray(inputs, dtype=float)
    if x_raw.ndim == 1:
        x_raw = x_raw[:, None]
    y_raw = np.asarray(targets, dtype=float)
    if y_raw.ndim == 1:
        y_raw = y_raw[:, None]
    if x_raw.shape[0] < 1:
        raise ContractViolation("training needs at least one sample")
    w = _check_mask(mask, y_raw)
    if w is not None and not np.all(w.sum(axis=0) > 0):
        raise ContractViolation("every output needs at least one unmasked sample")
    if net is None:
        sizes = (x_raw.shape[1], *cfg.hidden, y_raw.shape[1])
        net = init_network(sizes, cfg.seed, cfg.init_scale, cfg.activation)
    else:
        net = net.copy()

    if cfg.normalize_inputs:
        s = np.asarray(input_scale if input_scale is not None else x_raw.mean(axis=0), dtype=float)
        net.in_shift = _vec(s, net.n_inputs, 1.0)
        net.in_scale = net.in_shift.copy()
    if cfg.normalize_targets:
        net.out_shift, net.out_scale, constant = _target_transform(y_raw, w)
    else:
        constant = np.zeros(net.n_outputs, dtype=bool)
        net.out_shift = np.zeros(net.n_outputs)
        net.out_scale = np.ones(net.n_outputs)

    x, y = _batch(net, net.scale_inputs(x_raw), (y_raw - net.out_shift) / net.out_scale)
    dt = np.dtype(cfg.dtype)
    x, y = x.astype(dt), y.astype(dt)
    if w is not None:
        w = w.astype(dt)
    n = x.shape[0]
    rng = np.random.default_rng(cfg.seed)

    theta = net.params.astype(dt)
    with np.errstate(over="ignore", invalid="ignore"):
        initial = best_loss = loss(net, x, y, theta, w)
    if not np.isfinite(initial):
        raise TrainingError(0, initial)
    bs = min(cfg.batch_size, n)
    with np.errstate(over="ignore", invalid="ignore"):
        best, best_loss, epoch = _adam(net, x, y, theta, cfg, rng, bs, best_loss, w)
    net.params = best.astype(float)
    if cfg.refit_output:
        best_loss = _refit_output_layer(
            net, x.astype(float), y.astype(float), None if w is None else w.astype(float))
    # a constant target is reproduced exactly rather than approximately
    net.out_scale = np.where(constant, 0.0, net.out_scale)
    return FitResult(net, best_loss, initial, epoch)


def _refit_output_layer(net: Network, x: np.ndarray, y: np.ndarray, mask=None) -> float:
    """Replace the (linear) output layer by its least-squares optimum given the
    hidden features.  This can only lower the training loss, and the fitted
    bias makes the mean residual of every output exactly zero, so averaging
    the network over its training distribution reproduces the mean target.
    """
    feats = _forward_cache(net, x, net.params)[-2]
    design = np.column_stack([feats, np.ones(feats.shape[0])])
    if mask is None:
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    else:
        coef = np.empty((design.shape[1], y.shape[1]))
        for k in range(y.shape[1]):
            rows = mask[:, k] > 0
            coef[:, k] = np.linalg.lstsq(design[rows], y[rows, k], rcond=None)[0]
    W, b = net.layers()[-1]
    W[...] = coef[:-1]
    b[...] = coef[-1]
    return loss(net, x, y, mask=mask)


def _adam(net, x, y, theta, cfg, rng, bs, best_loss, mask=None):
    n = x.shape[0]
    best = theta.copy()
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    lr = cfg.learning_rate
    step = stall = epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            _, g = _loss_and_grad(net, x[idx], y[idx], theta, None if mask is None else mask[idx])
            step += 1
            m = beta1 * m + (1 - beta1) * g
            v = beta2 * v + (1 - beta2) * g * g
            mhat = m / (1 - beta1 ** step)
            vhat = v / (1 - beta2 ** step)
            theta = theta - lr * mhat / (np.sqrt(vhat) + eps)
        current = loss(net, x, y, theta, mask)
        if not np.isfinite(current):
            raise TrainingError(epoch, current)
        if current < best_loss * (1 - cfg.tolerance):
            stall = 0
        else:
            stall += 1
        if current < best_loss:
            best_loss, best = current, theta.copy()
        if stall >= cfg.patience:
            if lr <= cfg.learning_rate / 20 or cfg.lr_decay == 1.0:
                break
            lr *= cfg.lr_decay
            theta = best.copy()
            stall = 0
    return best, best_loss, epoch


_MAGIC = b"NNLSMNET"
_FORMAT_VERSION = 1


def to_bytes(net: Network) -> bytes:
    """Binary form: magic, version, activation code, layer count, layer sizes
    (little-endian u32), then float64 weights (row-major, per layer), biases,
    in_shift, in_scale, out_shift, out_scale."""
    act = 0 if net.activation is Activation.SIGMOID else 1
    head = _MAGIC + struct.pack("<III", _FORMAT_VERSION, act, len(net.layer_sizes))
    head += struct.pack(f"<{len(net.layer_sizes)}I", *net.layer_sizes)
    body = np.concatenate([net.params, net.in_shift, net.in_scale, net.out_shift, net.out_scale])
    return head + body.astype("<f8").tobytes()


def from_bytes(blob: bytes) -> Network:
    if blob[:8] != _MAGIC:
        raise ContractViolation("not a serialized network")
    version, act, n_layers = struct.unpack_from("<III", blob, 8)
    if version != _FORMAT_VERSION:
        raise ContractViolation(f"unsupported network format version {version}")
    off = 8 + 12
    sizes = struct.unpack_from(f"<{n_layers}I", blob, off)
    off += 4 * n_layers
    body = np.frombuffer(blob, dtype="<f8", offset=off).astype(float)
    p = n_params(sizes)
    d, k = sizes[0], sizes[-1]
    if body.size != p + 2 * d + 2 * k:
        raise ContractViolation("truncated network blob")
    parts = np.split(body, np.cumsum([p, d, d, k]))
    return Network(
        sizes, parts[0], Activation.SIGMOID if act == 0 else Activation.TANH,
        parts[1], parts[2], parts[3], parts[4],
    )


def save(net: Network, path: str | Path) -> None:
    Path(path).write_bytes(to_bytes(net))


def load(path: str | Path) -> Network:
    return from_bytes(Path(path).read_bytes())
