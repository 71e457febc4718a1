"""Symmetric power transformation and the comparison transforms.

Every forward transform returns the transformed :class:`Signal` together
with a :class:`TransformParams` record holding everything needed to invert
it exactly.
"""

from __future__ import annotations

import enum
import hashlib
import logging
import math
import re
import struct
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import CorruptHeader, DegenerateRange, MismatchedBins, OutOfBound
from .tensor import DEFAULT_BINS, Signal, SignalStats, compute_stats, quantile

log = logging.getLogger(__name__)

Q_EPS = 1e-4
BETA_MIN, BETA_MAX = 0.1, 10.0
PAD_CAP = 0.05
BOXCOX_EPS = 1e-6
OUT_OF_BOUND_TOL = 1e-6


class Kind(enum.IntEnum):
    NORM01 = 0
    ZSCORE = 1
    GAMMA = 2
    SCALE = 3
    INVERSE = 4
    PERMUTATION = 5
    BOXCOX = 6
    SYMPOWER = 7


_NAMES = {
    Kind.NORM01: "norm01", Kind.ZSCORE: "zscore", Kind.GAMMA: "gamma",
    Kind.SCALE: "scale", Kind.INVERSE: "inverse", Kind.PERMUTATION: "rpp",
    Kind.BOXCOX: "boxcox", Kind.SYMPOWER: "sym-power",
}


@dataclass(frozen=True)
class TransformKind:
    """Which transform to apply. ``param`` is the gamma exponent or scale
    factor; ``seed`` drives the random permutation."""

    kind: Kind
    param: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind in (Kind.GAMMA, Kind.SCALE) and not self.param > 0:
            raise ValueError(f"{_NAMES[self.kind]} needs a positive parameter")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must fit in u64")

    @property
    def label(self) -> str:
        name = _NAMES[self.kind]
        if self.kind in (Kind.GAMMA, Kind.SCALE):
            return f"{name}({self.param:g})"
        return name

    @classmethod
    def parse(cls, text: str) -> "TransformKind":
        """Parse labels such as ``gamma(0.5)``, ``scale:2``, ``rpp:7`` or ``sym-power``."""
        m = re.fullmatch(r"\s*([a-z0-9_-]+)\s*(?:[(:]\s*([-+0-9.eE]+)\s*\)?)?\s*", text.lower())
        if not m:
            raise ValueError(f"cannot parse transform {text!r}")
        name, arg = m.groups()
        aliases = {"0-1": "norm01", "minmax": "norm01", "z-score": "zscore",
                   "box-cox": "boxcox", "sympower": "sym-power", "sym": "sym-power",
                   "permutation": "rpp"}
        name = aliases.get(name, name)
        for kind, known in _NAMES.items():
            if known == name:
                break
        else:
            raise ValueError(f"unknown transform {name!r}")
        if kind in (Kind.GAMMA, Kind.SCALE):
            return cls(kind, float(arg) if arg is not None else 1.0)
        if kind == Kind.PERMUTATION:
            return cls(kind, seed=int(float(arg)) if arg is not None else 0)
        return cls(kind)


NORM01 = TransformKind(Kind.NORM01)
ZSCORE = TransformKind(Kind.ZSCORE)
INVERSE = TransformKind(Kind.INVERSE)
BOXCOX = TransformKind(Kind.BOXCOX)
SYMPOWER = TransformKind(Kind.SYMPOWER)


def gamma(g: float) -> TransformKind:
    return TransformKind(Kind.GAMMA, float(g))


def scale(k: float) -> TransformKind:
    return TransformKind(Kind.SCALE, float(k))


def permutation(seed: int) -> TransformKind:
    return TransformKind(Kind.PERMUTATION, seed=int(seed))


@dataclass(frozen=True)
class TransformParams:
    """Everything needed to apply and exactly invert one transform."""

    kind: TransformKind
    a: float = -1.0
    b: float = 1.0
    y_min: float = 0.0
    y_max: float = 1.0
    beta: float = 1.0
    beta_plus: float = 1.0
    pad0: float = 0.0
    pad1: float = 0.0
    xi: float = 0.0
    tau: float = 0.1
    kappa: float = 0.0
    lam: float = 0.5
    mean: float = 0.0
    std: float = 1.0
    boxcox_lambda: Optional[float] = None
    boxcox_min: float = 0.0
    boxcox_max: float = 1.0

    @property
    def delta_beta(self) -> float:
        return self.beta - self.beta_plus

    def to_bytes(self) -> bytes:
        return params_to_bytes(self)

    def digest(self) -> str:
        """Short stable hash of the sidecar encoding."""
        return hashlib.sha256(self.to_bytes()).hexdigest()[:12]


# SPTP sidecar: b"SPTP", u8 kind tag, float64 LE fields in the order below, u64 LE seed.
_SIDECAR_MAGIC = b"SPTP"
_SIDECAR_FIELDS = ("a", "b", "y_min", "y_max", "beta", "beta_plus", "pad0", "pad1",
                   "xi", "tau", "kappa", "lam", "mean", "std", "boxcox_lambda",
                   "boxcox_min", "boxcox_max")
_SIDECAR = struct.Struct("<4sBd" + "d" * len(_SIDECAR_FIELDS) + "Q")
SIDECAR_SIZE = _SIDECAR.size


def params_to_bytes(p: TransformParams) -> bytes:
    values = [getattr(p, name) for name in _SIDECAR_FIELDS]
    values = [math.nan if v is None else float(v) for v in values]
    return _SIDECAR.pack(_SIDECAR_MAGIC, int(p.kind.kind), float(p.kind.param), *values,
                         p.kind.seed)


def params_from_bytes(buf: bytes) -> TransformParams:
    if len(buf) != _SIDECAR.size or buf[:4] != _SIDECAR_MAGIC:
        raise CorruptHeader("not an SPTP sidecar")
    magic, tag, param, *values, seed = _SIDECAR.unpack(buf)
    try:
        kind = TransformKind(Kind(tag), param, seed)
    except ValueError as exc:
        raise CorruptHeader(f"bad transform tag or parameter: {exc}") from None
    fields = dict(zip(_SIDECAR_FIELDS, values))
    if math.isnan(fields["boxcox_lambda"]):
        fields["boxcox_lambda"] = None
    return TransformParams(kind=kind, **fields)


def write_params(p: TransformParams, path) -> None:
    Path(path).write_bytes(params_to_bytes(p))


def read_params(path) -> TransformParams:
    return params_from_bytes(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# Symmetric power transformation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SymPowerConfig:
    """Settings of the symmetric power transformation.

    ``xi=0`` disables the deviation-aware calibration, ``kappa=0`` the soft
    boundary and ``power=False`` the power map itself (leaving a linear map).
    """

    a: float = -1.0
    b: float = 1.0
    lam: float = 0.5
    xi: float = 0.5
    tau: float = 0.1
    kappa: float = 256.0
    bins: int = DEFAULT_BINS
    power: bool = True

    def __post_init__(self):
        if not self.b > self.a:
            raise ValueError("target bound needs b > a")
        if not 0 < self.lam < 1:
            raise ValueError("lambda must lie in (0, 1)")
        if not 0 < self.tau <= 0.5:
            raise ValueError("tau must lie in (0, 0.5]")
        if self.xi < 0 or self.kappa < 0:
            raise ValueError("xi and kappa must be non-negative")


def normalize01(s: Signal):
    """Min-max normalize to [0, 1].

    Returns ``(y0, y_min, y_max)``. A constant signal maps to all 0.5 with a
    DegenerateRange warning.
    """
    x = s.data
    y_min, y_max = float(x.min()), float(x.max())
    if y_max == y_min:
        warnings.warn("signal is constant; normalized to 0.5", DegenerateRange, stacklevel=2)
        return s.with_data(np.full(x.size, 0.5)), y_min, y_max
    y0 = (x - y_min) / (y_max - y_min)
    np.clip(y0, 0.0, 1.0, out=y0)
    return s.with_data(y0), y_min, y_max


def compute_beta(stats_of_y0: SignalStats, lam: float = 0.5) -> float:
    """Power that moves the ``lam`` quantile of ``y0`` onto ``lam``."""
    if not 0 < lam < 1:
        raise ValueError("lambda must lie in (0, 1)")
    q = quantile(stats_of_y0, lam)
    q_c = min(max(q, Q_EPS), 1.0 - Q_EPS)
    if q_c != q:
        log.info("quantile %.6g clamped to %.6g", q, q_c)
    beta = math.log(lam) / math.log(q_c)
    beta_c = min(max(beta, BETA_MIN), BETA_MAX)
    if beta_c != beta:
        log.info("beta %.6g clamped to %.6g", beta, beta_c)
    return beta_c


def _window(stats: SignalStats, tau: float, left: bool) -> np.ndarray:
    width = stats.hi - stats.lo
    centers = stats.lo + (np.arange(stats.bins) + 0.5) * (width / stats.bins)
    if left:
        return centers <= stats.lo + tau * width
    return centers >= stats.hi - tau * width


def calibrate_beta(beta: float, stats_y0: SignalStats, stats_y0_pow: SignalStats,
                   xi: float = 0.5, tau: float = 0.1) -> float:
    """Shrink ``beta`` toward 1 by the boundary-window density gain.

    For ``beta > 1`` the window is ``[0, tau]``, for ``beta < 1`` it is
    ``[1 - tau, 1]``; the shift is ``xi`` times the histogram mass that the
    power map moved into the window. The result always lies between 1 and
    ``beta`` inclusive.
    """
    if not stats_y0.same_layout(stats_y0_pow):
        raise MismatchedBins("histograms of y0 and y0**beta must share one bin layout")
    if beta == 1.0 or xi == 0.0:
        return beta
    window = _window(stats_y0, tau, left=beta > 1.0)
    gain = float(stats_y0_pow.histogram[window].sum() - stats_y0.histogram[window].sum())
    delta = xi * gain
    if beta > 1.0:
        return min(max(beta - delta, 1.0), beta)
    return max(min(beta + delta, 1.0), beta)


def soft_boundary(y0: Signal, stats: SignalStats, kappa: float, bins: Optional[int] = None):
    """Pad the normalized range inward in proportion to the boundary masses.

    ``pad_i = min(kappa * f_i / B, 0.05)`` with ``f_0``/``f_1`` the masses of
    the lowest/highest histogram bins. Returns ``(y0_plus, pad0, pad1)``.
    """
    bins = stats.bins if bins is None else bins
    if kappa == 0.0:
        return y0, 0.0, 0.0
    f0, f1 = float(stats.histogram[0]), float(stats.histogram[-1])
    pad0 = min(kappa * f0 / bins, PAD_CAP)
    pad1 = min(kappa * f1 / bins, PAD_CAP)
    return y0.with_data((y0.data + pad0) / (1.0 + pad0 + pad1)), pad0, pad1


def sym_power_forward(s: Signal, cfg: SymPowerConfig = SymPowerConfig()):
    """Apply the symmetric power transformation.

    normalize01 -> soft boundary -> beta from the ``lam`` quantile ->
    deviation-aware calibration -> power -> affine map onto ``[a, b]``.
    """
    y0, y_min, y_max = normalize01(s)
    base = TransformParams(SYMPOWER, a=cfg.a, b=cfg.b, y_min=y_min, y_max=y_max,
                           xi=cfg.xi, tau=cfg.tau, kappa=cfg.kappa, lam=cfg.lam)
    if y_max == y_min:
        return s.with_data(np.full(len(s), 0.5 * (cfg.a + cfg.b))), base

    unit = (0.0, 1.0)
    stats0 = compute_stats(y0, cfg.bins, unit, keep_sorted=False)
    y0p, pad0, pad1 = soft_boundary(y0, stats0, cfg.kappa, cfg.bins)
    beta = beta_plus = 1.0
    if cfg.power:
        stats_p = compute_stats(y0p, cfg.bins, unit, keep_sorted=True)
        beta = beta_plus = compute_beta(stats_p, cfg.lam)
        if cfg.xi > 0.0 and beta != 1.0:
            stats_pow = compute_stats(y0p.data ** beta, cfg.bins, unit, keep_sorted=False)
            beta_plus = calibrate_beta(beta, stats_p, stats_pow, cfg.xi, cfg.tau)
    u = y0p.data if beta_plus == 1.0 else y0p.data ** beta_plus
    t = (cfg.b - cfg.a) * u + cfg.a
    np.clip(t, cfg.a, cfg.b, out=t)
    return s.with_data(t), replace(base, beta=beta, beta_plus=beta_plus, pad0=pad0, pad1=pad1)


def _unit_from_bound(t: np.ndarray, a: float, b: float) -> np.ndarray:
    """Map ``[a, b]`` back to ``[0, 1]``, clamping stray samples."""
    tol = OUT_OF_BOUND_TOL * (b - a)
    if t.size and (t.min() < a - tol or t.max() > b + tol):
        warnings.warn(f"samples outside [{a:g}, {b:g}] clamped before inversion", OutOfBound,
                      stacklevel=3)
    u = (t - a) / (b - a)
    return np.clip(u, 0.0, 1.0)


def sym_power_invert(t: Signal, p: TransformParams) -> Signal:
    """Exact inverse of :func:`sym_power_forward`.

    Inputs outside ``[a, b]`` (network predictions) are clamped first, which
    keeps the inverse monotone.
    """
    u = _unit_from_bound(t.data, p.a, p.b)
    if p.beta_plus != 1.0:
        u = u ** (1.0 / p.beta_plus)
    y0 = u * (1.0 + p.pad0 + p.pad1) - p.pad0
    return t.with_data(p.y_min + y0 * (p.y_max - p.y_min))


# ---------------------------------------------------------------------------
# Comparison transforms
# ---------------------------------------------------------------------------

def boxcox(x: np.ndarray, lmbda: float) -> np.ndarray:
    if abs(lmbda) < 1e-12:
        return np.log(x)
    return np.expm1(lmbda * np.log(x)) / lmbda


def inv_boxcox(z: np.ndarray, lmbda: float) -> np.ndarray:
    if abs(lmbda) < 1e-12:
        return np.exp(z)
    base = np.maximum(lmbda * z, -1.0)
    return np.exp(np.log1p(base) / lmbda)


def boxcox_llf(lmbda: float, x: np.ndarray) -> float:
    """Profile log-likelihood of the Box-Cox parameter for positive ``x``."""
    z = boxcox(x, lmbda)
    var = float(np.var(z))
    if var <= 0.0:
        return -math.inf
    return (lmbda - 1.0) * float(np.sum(np.log(x))) - 0.5 * x.size * math.log(var)


def golden_section_max(f, lo: float, hi: float, tol: float = 1e-7, max_iter: int = 200) -> float:
    """Maximize a unimodal ``f`` on ``[lo, hi]`` by golden-section search."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    c = hi - inv_phi * (hi - lo)
    d = lo + inv_phi * (hi - lo)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if hi - lo < tol:
            break
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - inv_phi * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + inv_phi * (hi - lo)
            fd = f(d)
    return 0.5 * (lo + hi)


def fit_boxcox_lambda(x: np.ndarray, lo: float = -2.0, hi: float = 2.0) -> float:
    return golden_section_max(lambda l: boxcox_llf(l, x), lo, hi)


def _to_bound(u: np.ndarray, a: float, b: float) -> np.ndarray:
    return (b - a) * u + a


def apply_baseline(s: Signal, kind: TransformKind, a: float = -1.0, b: float = 1.0):
    """Apply one of the comparison transforms.

    Returns ``(transformed, params)``. ``Kind.SYMPOWER`` is delegated to
    :func:`sym_power_forward` with default settings.
    """
    if kind.kind == Kind.SYMPOWER:
        return sym_power_forward(s, SymPowerConfig(a=a, b=b))
    if not b > a:
        raise ValueError("target bound needs b > a")
    y0s, y_min, y_max = normalize01(s)
    y0 = y0s.data
    p = TransformParams(kind, a=a, b=b, y_min=y_min, y_max=y_max)
    k = kind.kind
    if k == Kind.NORM01:
        t = y0
    elif k == Kind.ZSCORE:
        mean, std = float(s.data.mean()), float(s.data.std())
        std = std if std > 0.0 else 1.0
        p = replace(p, mean=mean, std=std)
        t = (s.data - mean) / std
    elif k == Kind.GAMMA:
        t = _to_bound(y0 ** kind.param, a, b)
    elif k == Kind.SCALE:
        t = 0.5 * (a + b) + kind.param * 0.5 * (b - a) * (2.0 * y0 - 1.0)
    elif k == Kind.INVERSE:
        t = a + b - _to_bound(y0, a, b)
    elif k == Kind.PERMUTATION:
        perm = np.random.default_rng(kind.seed).permutation(y0.size)
        t = _to_bound(y0, a, b)[perm]
    elif k == Kind.BOXCOX:
        x = y0 + BOXCOX_EPS
        lmbda = fit_boxcox_lambda(x)
        z = boxcox(x, lmbda)
        z_min, z_max = float(z.min()), float(z.max())
        p = replace(p, boxcox_lambda=lmbda, boxcox_min=z_min, boxcox_max=z_max)
        t = _to_bound((z - z_min) / (z_max - z_min), a, b) if z_max > z_min else np.full(z.size, 0.5 * (a + b))
    else:
        raise ValueError(f"unsupported transform {kind}")
    return s.with_data(t), p


def invert(t: Signal, p: TransformParams) -> Signal:
    """Invert any transform given its recorded parameters."""
    k = p.kind.kind
    span = p.y_max - p.y_min
    if k == Kind.SYMPOWER:
        return sym_power_invert(t, p)
    if k == Kind.ZSCORE:
        return t.with_data(p.mean + p.std * t.data)
    if k == Kind.NORM01:
        y0 = t.data
    elif k == Kind.GAMMA:
        y0 = _unit_from_bound(t.data, p.a, p.b) ** (1.0 / p.kind.param)
    elif k == Kind.SCALE:
        c, half = 0.5 * (p.a + p.b), 0.5 * (p.b - p.a)
        y0 = 0.5 * ((t.data - c) / (p.kind.param * half) + 1.0)
    elif k == Kind.INVERSE:
        y0 = (p.b - t.data) / (p.b - p.a)
    elif k == Kind.PERMUTATION:
        perm = np.random.default_rng(p.kind.seed).permutation(t.data.size)
        y0 = np.empty(t.data.size)
        y0[perm] = (t.data - p.a) / (p.b - p.a)
    elif k == Kind.BOXCOX:
        u = _unit_from_bound(t.data, p.a, p.b)
        z = p.boxcox_min + u * (p.boxcox_max - p.boxcox_min)
        y0 = inv_boxcox(z, p.boxcox_lambda) - BOXCOX_EPS
    else:
        raise ValueError(f"unsupported transform {p.kind}")
    return t.with_data(p.y_min + y0 * span)


def apply(s: Signal, kind: TransformKind, a: float = -1.0, b: float = 1.0,
          sym_cfg: Optional[SymPowerConfig] = None):
    """Forward transform of any kind; ``sym_cfg`` overrides the sym-power settings."""
    if kind.kind == Kind.SYMPOWER:
        cfg = sym_cfg if sym_cfg is not None else SymPowerConfig(a=a, b=b)
        return sym_power_forward(s, cfg)
    return apply_baseline(s, kind, a, b)
