"""Coordinate MLPs with sine (SIREN) and variable-periodic (FINER) activations.

Gradients are derived by hand; the network is trained full-batch with Adam
on the mean-squared error.
"""

from __future__ import annotations

import enum
import math
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import CorruptHeader, DivergenceDetected, ShapeMismatch
from .metrics import QualityReport

try:  # torch's float64 sin/cos are several times faster than numpy's on CPU
    import torch as _torch
except ImportError:  # pragma: no cover
    _torch = None


def _sincos(z: np.ndarray):
    if _torch is not None:
        tz = _torch.from_numpy(z)
        return _torch.sin(tz).numpy(), _torch.cos(tz).numpy()
    return np.sin(z), np.cos(z)


class Activation(enum.IntEnum):
    SINE = 0
    FINER = 1


@dataclass(frozen=True)
class NetworkConfig:
    """``hidden_layers`` sine layers of ``width`` units, then a linear output layer."""

    in_dim: int = 2
    out_dim: int = 1
    hidden_layers: int = 3
    width: int = 64
    activation: Activation = Activation.SINE
    omega0: float = 30.0
    finer_bias_k: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.omega0 > 0:
            raise ValueError("omega0 must be positive")
        if self.width < 1 or self.in_dim < 1 or self.out_dim < 1 or self.hidden_layers < 1:
            raise ValueError("layer sizes must be positive")

    @property
    def layer_sizes(self):
        return [self.in_dim] + [self.width] * self.hidden_layers + [self.out_dim]


@dataclass
class NetworkState:
    config: NetworkConfig
    weights: list
    biases: list
    m_w: list = field(default_factory=list)
    v_w: list = field(default_factory=list)
    m_b: list = field(default_factory=list)
    v_b: list = field(default_factory=list)
    step: int = 0

    def parameters(self):
        return self.weights + self.biases

    def copy(self) -> "NetworkState":
        cp = lambda xs: [x.copy() for x in xs]
        return NetworkState(self.config, cp(self.weights), cp(self.biases), cp(self.m_w),
                            cp(self.v_w), cp(self.m_b), cp(self.v_b), self.step)


def init_network(cfg: NetworkConfig) -> NetworkState:
    """Sinusoidal-network initialization.

    First layer weights ~ U(-1/c, 1/c); later layers ~ U(+-sqrt(6/n)/omega0)
    with ``n`` the fan-in. Biases start at zero except the FINER first layer,
    drawn from U(-finer_bias_k, finer_bias_k).
    """
    rng = np.random.default_rng(cfg.seed)
    sizes = cfg.layer_sizes
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = 1.0 / fan_in if i == 0 else math.sqrt(6.0 / fan_in) / cfg.omega0
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        if i == 0 and cfg.activation == Activation.FINER:
            biases.append(rng.uniform(-cfg.finer_bias_k, cfg.finer_bias_k, size=fan_out))
        else:
            biases.append(np.zeros(fan_out))
    zeros = lambda xs: [np.zeros_like(x) for x in xs]
    return NetworkState(cfg, weights, biases, zeros(weights), zeros(weights),
                        zeros(biases), zeros(biases))


@dataclass
class ForwardCache:
    inputs: list      # input to each layer
    dact: list        # d activation / d pre-activation, per sine layer
    output: np.ndarray


def forward(state: NetworkState, coords, cache: bool = False):
    """Evaluate the network on ``coords`` of shape ``(N, in_dim)``.

    Returns predictions ``(N, out_dim)``, or ``(predictions, ForwardCache)``
    when ``cache`` is set.
    """
    cfg = state.config
    h = np.asarray(coords, dtype=np.float64)
    if h.ndim == 1:
        h = h[:, None]
    if h.ndim != 2 or h.shape[1] != cfg.in_dim:
        raise ShapeMismatch(f"expected coords of shape (N, {cfg.in_dim}), got {h.shape}")
    w0 = cfg.omega0
    inputs, dact = [], []
    for W, b in zip(state.weights[:-1], state.biases[:-1]):
        inputs.append(h)
        x = h @ W.T
        x += b
        if cfg.activation == Activation.SINE:
            x *= w0
            h, c = _sincos(x)
            if cache:
                c *= w0
                dact.append(c)
        else:
            ax = np.abs(x)
            arg = w0 * (ax + 1.0) * x
            h, c = _sincos(arg)
            if cache:
                c *= w0 * (2.0 * ax + 1.0)
                dact.append(c)
    inputs.append(h)
    out = h @ state.weights[-1].T + state.biases[-1]
    if cache:
        return out, ForwardCache(inputs, dact, out)
    return out


def backward(state: NetworkState, cache: ForwardCache, targets):
    """Gradients of the mean-squared error w.r.t. every weight and bias.

    Returns ``(loss, grad_weights, grad_biases)``.
    """
    targets = np.asarray(targets, dtype=np.float64).reshape(cache.output.shape)
    resid = cache.output - targets
    with np.errstate(over="ignore", invalid="ignore"):
        loss = float(np.mean(resid * resid))
    g = resid * (2.0 / resid.size)
    n = len(state.weights)
    gw, gb = [None] * n, [None] * n
    for i in range(n - 1, -1, -1):
        gw[i] = g.T @ cache.inputs[i]
        gb[i] = g.sum(axis=0)
        if i > 0:
            g = g @ state.weights[i]
            g *= cache.dact[i - 1]
    return loss, gw, gb


def loss_and_grads(state: NetworkState, coords, targets):
    _, cache = forward(state, coords, cache=True)
    return backward(state, cache, targets)


@dataclass(frozen=True)
class Adam:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def step(self, state: NetworkState, grad_w, grad_b) -> None:
        state.step += 1
        t = state.step
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for params, grads, ms, vs in ((state.weights, grad_w, state.m_w, state.v_w),
                                      (state.biases, grad_b, state.m_b, state.v_b)):
            for p, g, m, v in zip(params, grads, ms, vs):
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * (g * g)
                p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    iterations: int = 1000
    eval_every: int = 100
    checkpoints: tuple = ()
    seed: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")

    def eval_points(self):
        pts = set(int(c) for c in self.checkpoints if 0 < c <= self.iterations)
        if self.eval_every > 0:
            pts.update(range(self.eval_every, self.iterations + 1, self.eval_every))
        pts.add(self.iterations)
        return sorted(pts)


@dataclass
class FitReport:
    """Loss/PSNR trace of one fit plus the metrics at each evaluation point."""

    trace: list = field(default_factory=list)          # (iteration, loss, psnr)
    metrics: dict = field(default_factory=dict)        # iteration -> QualityReport
    wall_time: float = 0.0
    diverged: bool = False
    prediction: Optional[np.ndarray] = None

    @property
    def final(self) -> Optional[QualityReport]:
        return self.metrics[max(self.metrics)] if self.metrics else None

    def to_csv(self) -> str:
        lines = ["iteration,loss,psnr"]
        lines += [f"{it},{loss:.10g},{p:.10g}" for it, loss, p in self.trace]
        return "\n".join(lines) + "\n"


def train(state: NetworkState, coords, targets, cfg: TrainConfig,
          evaluate: Optional[Callable[[np.ndarray], QualityReport]] = None,
          raise_on_divergence: bool = False) -> FitReport:
    """Full-batch Adam on the MSE between the network and ``targets``.

    ``evaluate`` receives the raw network output (shape of ``targets``) at
    each evaluation point and returns the quality in the original signal
    domain, i.e. after inverting the transform. Without it the PSNR column
    is computed directly against ``targets`` with peak 1.
    """
    coords = np.asarray(coords, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    y = targets.reshape(coords.shape[0], state.config.out_dim)
    opt = Adam(lr=cfg.lr)
    evals = set(cfg.eval_points())
    report = FitReport()
    start = time.perf_counter()
    for it in range(1, cfg.iterations + 1):
        out, cache = forward(state, coords, cache=True)
        loss, gw, gb = backward(state, cache, y)
        if not math.isfinite(loss):
            report.diverged = True
            break
        opt.step(state, gw, gb)
        if it in evals:
            pred = forward(state, coords)
            report.trace.append(_evaluate(it, pred, y, targets.shape, evaluate, report))
            if not all(np.isfinite(g).all() for g in state.weights):
                report.diverged = True
                break
    report.wall_time = time.perf_counter() - start
    if report.diverged and raise_on_divergence:
        raise DivergenceDetected("training loss became non-finite", report)
    return report


def _evaluate(it, pred, y, shape, evaluate, report):
    loss = float(np.mean((pred - y) ** 2))
    if evaluate is not None:
        q = evaluate(pred.reshape(shape))
    else:
        from .metrics import psnr_from_mse
        q = QualityReport(mse=loss, psnr=psnr_from_mse(loss))
    report.metrics[it] = q
    report.prediction = pred.reshape(shape)
    return (it, loss, q.psnr)


# SPTN checkpoint: b"SPTN", config block, float64 LE parameters (W_l then b_l per layer).
_CKPT_MAGIC = b"SPTN"
_CKPT_CONFIG = struct.Struct("<4sIIIIBddQQ")


def state_to_bytes(state: NetworkState) -> bytes:
    cfg = state.config
    head = _CKPT_CONFIG.pack(_CKPT_MAGIC, cfg.in_dim, cfg.out_dim, cfg.hidden_layers, cfg.width,
                             int(cfg.activation), cfg.omega0, cfg.finer_bias_k, cfg.seed,
                             state.step)
    blob = b"".join(np.concatenate([W.reshape(-1), b]).astype("<f8").tobytes()
                    for W, b in zip(state.weights, state.biases))
    return head + blob


def state_from_bytes(buf: bytes) -> NetworkState:
    if len(buf) < _CKPT_CONFIG.size or buf[:4] != _CKPT_MAGIC:
        raise CorruptHeader("not an SPTN checkpoint")
    _, in_dim, out_dim, hidden, width, act, omega0, k, seed, step = _CKPT_CONFIG.unpack_from(buf)
    cfg = NetworkConfig(in_dim, out_dim, hidden, width, Activation(act), omega0, k, seed)
    sizes = cfg.layer_sizes
    n = sum(o * i + o for i, o in zip(sizes[:-1], sizes[1:]))
    if len(buf) != _CKPT_CONFIG.size + 8 * n:
        raise CorruptHeader("checkpoint parameter blob has the wrong length")
    flat = np.frombuffer(buf, dtype="<f8", offset=_CKPT_CONFIG.size).astype(np.float64)
    state = init_network(cfg)
    pos = 0
    for li, (i, o) in enumerate(zip(sizes[:-1], sizes[1:])):
        state.weights[li] = flat[pos:pos + o * i].reshape(o, i).copy()
        pos += o * i
        state.biases[li] = flat[pos:pos + o].copy()
        pos += o
    state.step = step
    return state


def save_checkpoint(state: NetworkState, path) -> None:
    Path(path).write_bytes(state_to_bytes(state))


def load_checkpoint(path) -> NetworkState:
    return state_from_bytes(Path(path).read_bytes())
