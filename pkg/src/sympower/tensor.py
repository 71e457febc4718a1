"""Sample buffers, summary statistics, empirical quantiles and the SPT1 container."""

from __future__ import annotations

import enum
import struct
import warnings
from dataclasses import dataclass, field
from math import prod
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateStd, EmptySignal, MissingSamples, NonFinite, CorruptHeader

DEFAULT_BINS = 256


class Modality(enum.Enum):
    AUDIO1D = "audio1d"
    IMAGE2D = "image2d"
    VOLUME3D = "volume3d"
    SYNTHETIC = "synthetic"


@dataclass(frozen=True, eq=False)
class Signal:
    """A flat float64 sample buffer with its extents.

    ``data`` is stored read-only and flattened row-major; ``shape`` gives the
    logical extents, e.g. ``(H, W, C)`` for an image. ``sample_rate`` is only
    meaningful for audio.
    """

    data: np.ndarray
    shape: tuple
    modality: Modality = Modality.SYNTHETIC
    sample_rate: Optional[int] = None

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64).reshape(-1)
        shape = tuple(int(n) for n in self.shape)
        if any(n < 1 for n in shape):
            raise ValueError(f"extents must be positive, got {shape}")
        if prod(shape) != data.size:
            raise ValueError(f"shape {shape} does not hold {data.size} samples")
        if not np.all(np.isfinite(data)):
            raise NonFinite("signal contains NaN or Inf samples")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "shape", shape)

    @classmethod
    def from_array(cls, array, modality=Modality.SYNTHETIC, sample_rate=None) -> "Signal":
        array = np.asarray(array, dtype=np.float64)
        return cls(array.reshape(-1), array.shape, modality, sample_rate)

    def __len__(self):
        return self.data.size

    @property
    def array(self) -> np.ndarray:
        return self.data.reshape(self.shape)

    def with_data(self, data) -> "Signal":
        """Same shape and metadata, new samples."""
        return Signal(np.asarray(data, dtype=np.float64).reshape(-1), self.shape,
                      self.modality, self.sample_rate)


@dataclass(frozen=True, eq=False)
class SignalStats:
    """Summary statistics of one sample set.

    The histogram holds ``len(histogram)`` probability masses over
    equal-width bins spanning ``[lo, hi]``.
    """

    min: float
    max: float
    mean: float
    std: float
    skewness: float
    histogram: np.ndarray
    lo: float
    hi: float
    count: int
    sorted_samples: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def bins(self) -> int:
        return self.histogram.size

    def same_layout(self, other: "SignalStats") -> bool:
        return self.bins == other.bins and self.lo == other.lo and self.hi == other.hi


def _samples(s) -> np.ndarray:
    if isinstance(s, Signal):
        return s.data
    x = np.asarray(s, dtype=np.float64).reshape(-1)
    if x.size and not np.all(np.isfinite(x)):
        raise NonFinite("samples contain NaN or Inf")
    return x


def _moments(x: np.ndarray):
    mean = float(x.mean())
    centered = x - mean
    sq = centered * centered
    var = float(np.mean(sq))
    std = var ** 0.5
    if std == 0.0 or std <= 1e-15 * max(1.0, abs(mean)):
        return mean, std, 0.0
    skew = float(np.mean(sq * centered)) / var ** 1.5
    return mean, std, skew


def histogram(x, bins: int, lo: float, hi: float) -> np.ndarray:
    """Probability masses over ``bins`` equal-width bins of ``[lo, hi]``.

    Samples outside the interval are counted in the nearest end bin. A
    zero-width interval puts all mass in the middle bin.
    """
    x = _samples(x)
    if hi <= lo:
        masses = np.zeros(bins)
        masses[bins // 2] = 1.0
        return masses
    idx = np.floor((x - lo) * (bins / (hi - lo))).astype(np.int64)
    np.clip(idx, 0, bins - 1, out=idx)
    return np.bincount(idx, minlength=bins) / x.size


def compute_stats(s, bins: int = DEFAULT_BINS, value_range: Optional[Sequence[float]] = None,
                  keep_sorted: bool = True) -> SignalStats:
    """Min/max, moments, histogram and (optionally) a sorted copy of ``s``.

    Parameters
    ----------
    s : Signal or array_like
    bins : int
        Number of histogram bins.
    value_range : (lo, hi), optional
        Fixed histogram support. Defaults to ``[min, max]`` of the samples.
    keep_sorted : bool
        Keep a sorted copy for :func:`quantile` queries.
    """
    x = _samples(s)
    if x.size < 1:
        raise EmptySignal("cannot summarise an empty signal")
    if bins < 1:
        raise ValueError("bins must be positive")
    lo_x, hi_x = float(x.min()), float(x.max())
    mean, std, skew = _moments(x)
    mean = min(max(mean, lo_x), hi_x)
    lo, hi = (lo_x, hi_x) if value_range is None else (float(value_range[0]), float(value_range[1]))
    return SignalStats(
        min=lo_x, max=hi_x, mean=mean, std=std, skewness=skew,
        histogram=histogram(x, bins, lo, hi), lo=lo, hi=hi, count=x.size,
        sorted_samples=np.sort(x) if keep_sorted else None,
    )


def quantile(stats: SignalStats, lam: float) -> float:
    """Empirical quantile by linear interpolation between closest ranks.

    Position ``h = (n - 1) * lam`` in the sorted sample (numpy's default
    "linear" method, Hyndman & Fan type 7).
    """
    xs = stats.sorted_samples
    if xs is None:
        raise MissingSamples("stats were built without a sorted copy")
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    n = xs.size
    h = (n - 1) * lam
    i = min(int(np.floor(h)), n - 1)
    j = min(i + 1, n - 1)
    frac = h - i
    return float(xs[i] + frac * (xs[j] - xs[i]))


def skewness_metric(t) -> float:
    """Third standardized moment. Returns 0 with a DegenerateStd warning for constant input."""
    x = _samples(t)
    if x.size < 1:
        raise EmptySignal("cannot measure an empty signal")
    _, std, skew = _moments(x)
    if std == 0.0 or np.ptp(x) == 0.0:
        warnings.warn("standard deviation is zero; skewness reported as 0", DegenerateStd,
                      stacklevel=2)
        return 0.0
    return skew


def range_metric(t, a: float = -1.0, b: float = 1.0) -> float:
    """Spanned range of ``t`` as a fraction of the target bound ``[a, b]``."""
    if not b > a:
        raise ValueError("target bound needs b > a")
    x = _samples(t)
    return float(x.max() - x.min()) / (b - a)


# SPT1 container: b"SPT1", u8 rank, rank x u64 LE extents, float64 LE samples.

_TENSOR_MAGIC = b"SPT1"


def tensor_to_bytes(s: Signal) -> bytes:
    header = _TENSOR_MAGIC + struct.pack("<B", len(s.shape))
    header += struct.pack(f"<{len(s.shape)}Q", *s.shape)
    return header + s.data.astype("<f8").tobytes()


def tensor_from_bytes(buf: bytes, modality=Modality.SYNTHETIC) -> Signal:
    if len(buf) < 5 or buf[:4] != _TENSOR_MAGIC:
        raise CorruptHeader("missing SPT1 magic")
    rank = buf[4]
    end = 5 + 8 * rank
    if len(buf) < end:
        raise CorruptHeader("truncated SPT1 extents")
    shape = struct.unpack(f"<{rank}Q", buf[5:end])
    n = prod(shape)
    if len(buf) != end + 8 * n:
        raise CorruptHeader(f"SPT1 payload holds {(len(buf) - end) / 8:g} samples, expected {n}")
    data = np.frombuffer(buf, dtype="<f8", offset=end, count=n).astype(np.float64)
    return Signal(data, shape, modality)


def write_tensor(s: Signal, path) -> None:
    Path(path).write_bytes(tensor_to_bytes(s))


def read_tensor(path, modality=Modality.SYNTHETIC) -> Signal:
    return tensor_from_bytes(Path(path).read_bytes(), modality)
