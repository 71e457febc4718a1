"""Netpbm and WAV I/O, synthetic signal generators, coordinate grids and bundled assets."""

from __future__ import annotations

import enum
import re
import wave
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import CorruptHeader, UnsupportedEncoding, UnsupportedFormat
from .tensor import Modality, Signal, skewness_metric

# --------------------------------------------------------------------------
# Netpbm (binary PGM P5 / PPM P6)
# --------------------------------------------------------------------------

_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n?)*(\S+)")


def _header(buf: bytes):
    """Parse ``magic width height maxval`` and return them with the data offset."""
    pos, tokens = 0, []
    while len(tokens) < 4:
        m = _TOKEN.match(buf, pos)
        if m is None:
            raise CorruptHeader("truncated Netpbm header")
        tokens.append(m.group(1))
        pos = m.end()
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise CorruptHeader("missing whitespace after maxval")
    magic = tokens[0]
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise CorruptHeader("non-numeric Netpbm header field") from None
    return magic, width, height, maxval, pos + 1


def decode_netpbm(buf: bytes) -> Signal:
    if buf[:2] not in (b"P5", b"P6"):
        if buf[:1] == b"P" and buf[1:2].isdigit():
            raise UnsupportedFormat(f"Netpbm variant {buf[:2].decode()} is not supported")
        raise UnsupportedFormat("not a binary PGM/PPM file")
    magic, width, height, maxval, offset = _header(buf)
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise CorruptHeader(f"bad dimensions {width}x{height} or maxval {maxval}")
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    n = width * height * channels
    if len(buf) - offset < n * dtype.itemsize:
        raise CorruptHeader("pixel data is truncated")
    px = np.frombuffer(buf, dtype=dtype, count=n, offset=offset).astype(np.float64) / maxval
    shape = (height, width) if channels == 1 else (height, width, 3)
    return Signal(px, shape, Modality.IMAGE2D)


def encode_netpbm(s: Signal, maxval: int = 255) -> bytes:
    """Encode a ``(H, W)`` or ``(H, W, 3)`` signal with samples in [0, 1]."""
    arr = s.array
    if arr.ndim == 2:
        magic = b"P5"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        magic = b"P6"
    elif arr.ndim == 3 and arr.shape[2] == 1:
        magic, arr = b"P5", arr[..., 0]
    else:
        raise UnsupportedFormat(f"cannot store shape {arr.shape} as PGM/PPM")
    dtype = ">u2" if maxval > 255 else "u1"
    q = np.rint(np.clip(arr, 0.0, 1.0) * maxval).astype(dtype)
    h, w = arr.shape[:2]
    return b"%s\n%d %d\n%d\n" % (magic, w, h, maxval) + q.tobytes()


def load_image(path) -> Signal:
    path = Path(path)
    buf = path.read_bytes()
    if buf[:8] == b"\x89PNG\r\n\x1a\n":
        return _load_png(path)
    return decode_netpbm(buf)


def save_image(s: Signal, path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".png":
        _save_png(s, path)
        return
    path.write_bytes(encode_netpbm(s))


def _load_png(path):
    try:
        from PIL import Image
    except ImportError:  # pragma: no cover
        raise UnsupportedFormat("PNG support needs Pillow") from None
    img = Image.open(path)
    if img.mode not in ("L", "RGB"):
        img = img.convert("RGB")
    return Signal.from_array(np.asarray(img, dtype=np.float64) / 255.0, Modality.IMAGE2D)


def _save_png(s, path):
    try:
        from PIL import Image
    except ImportError:  # pragma: no cover
        raise UnsupportedFormat("PNG support needs Pillow") from None
    arr = np.rint(np.clip(s.array, 0.0, 1.0) * 255).astype(np.uint8)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[..., 0]
    Image.fromarray(arr).save(path)


# --------------------------------------------------------------------------
# WAV (PCM16 mono)
# --------------------------------------------------------------------------

def load_wav(path, seconds: Optional[float] = None) -> Signal:
    """Load PCM16 mono audio as samples in [-1, 1), optionally cropped to the first ``seconds``."""
    try:
        with wave.open(str(path), "rb") as w:
            if w.getsampwidth() != 2 or w.getnchannels() != 1 or w.getcomptype() != "NONE":
                raise UnsupportedEncoding(
                    f"need PCM16 mono, got {8 * w.getsampwidth()}-bit x {w.getnchannels()} channels")
            rate = w.getframerate()
            frames = w.getnframes()
            if seconds is not None:
                frames = min(frames, int(round(seconds * rate)))
            raw = w.readframes(frames)
    except wave.Error as exc:
        raise UnsupportedEncoding(str(exc)) from None
    x = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if x.size == 0:
        raise CorruptHeader("WAV file holds no samples")
    return Signal(x, (x.size,), Modality.AUDIO1D, rate)


def save_wav(s: Signal, path, sample_rate: Optional[int] = None) -> None:
    rate = sample_rate or s.sample_rate or 16000
    q = np.clip(np.rint(s.data * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(rate))
        w.writeframes(q.tobytes())


# --------------------------------------------------------------------------
# Synthetic signals
# --------------------------------------------------------------------------

class SyntheticKind(enum.Enum):
    NORMAL_CLIPPED = "normal"
    LOGNORMAL = "lognormal"
    TEXT_LIKE = "text"
    GRADIENT = "gradient"
    CONSTANT = "constant"


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of a synthetic signal.

    ``mu``/``sigma`` parameterize the normal and lognormal kinds, ``levels``
    the number of intensities of a text-like image, ``value`` the constant.
    """

    kind: SyntheticKind
    shape: tuple = (64, 64)
    seed: int = 0
    mu: float = 0.0
    sigma: float = 0.5
    levels: int = 4
    value: float = 0.5
    smoothness: float = 2.0

    def __post_init__(self):
        if self.kind in (SyntheticKind.NORMAL_CLIPPED, SyntheticKind.LOGNORMAL) and not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.kind == SyntheticKind.TEXT_LIKE and self.levels < 2:
            raise ValueError("text-like signals need at least 2 levels")


def gaussian_field(shape, seed: int, smoothness: float = 2.0) -> np.ndarray:
    """Spatially correlated field with exact standard-normal marginal ranks.

    White noise is low-pass filtered (Gaussian, ``smoothness`` samples) and
    then rank-mapped onto normal quantiles, so the marginal distribution is
    normal while neighbouring samples stay correlated.
    """
    from scipy.ndimage import gaussian_filter
    from scipy.special import ndtri

    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(shape)
    if smoothness > 0:
        noise = gaussian_filter(noise, smoothness, mode="wrap")
    flat = noise.reshape(-1)
    ranks = np.empty(flat.size)
    ranks[np.argsort(flat, kind="stable")] = np.arange(flat.size)
    return ndtri((ranks + 0.5) / flat.size).reshape(shape)


def _text_like(shape, levels, rng):
    h, w = shape[:2]
    img = np.zeros((h, w))
    intensities = np.linspace(0.0, 1.0, levels)
    background = intensities[-1]
    img[:] = background
    strokes = intensities[:-1]
    # blocky glyph strokes on a light background; background holds most mass
    glyph_h = max(3, h // 8)
    for row in range(1, h // (glyph_h + 2)):
        top = row * (glyph_h + 2) - glyph_h // 2
        col = 1 + int(rng.integers(0, 3))
        level = strokes[(row - 1) % len(strokes)]
        while col < w - 3:
            gw = int(rng.integers(2, 5))
            pattern = rng.random((glyph_h, gw)) < 0.55
            img[top:top + glyph_h, col:col + gw][pattern] = level
            col += gw + int(rng.integers(1, 3))
    return img


def generate(spec: SyntheticSpec) -> Signal:
    """Deterministic synthetic signal for ``spec``."""
    rng = np.random.default_rng(spec.seed)
    shape = tuple(spec.shape)
    k = spec.kind
    if k == SyntheticKind.NORMAL_CLIPPED:
        # normal intensities on a smooth spatial field, clipped into [-1, 1]
        g = gaussian_field(shape, spec.seed, spec.smoothness)
        data = np.clip(spec.mu + spec.sigma * g, -1.0, 1.0)
    elif k == SyntheticKind.LOGNORMAL:
        data = rng.lognormal(spec.mu, spec.sigma, size=shape)
    elif k == SyntheticKind.TEXT_LIKE:
        data = _text_like(shape, spec.levels, rng)
    elif k == SyntheticKind.GRADIENT:
        axes = np.meshgrid(*[np.linspace(0.0, 1.0, n) for n in shape], indexing="ij")
        data = sum(axes) / len(axes)
    elif k == SyntheticKind.CONSTANT:
        data = np.full(shape, float(spec.value))
    else:
        raise ValueError(f"unknown synthetic kind {k}")
    modality = Modality.IMAGE2D if len(shape) == 2 and k != SyntheticKind.LOGNORMAL else Modality.SYNTHETIC
    return Signal.from_array(data, modality)


def generate_with_skew(spec: SyntheticSpec):
    """Generated signal together with its sample skewness."""
    s = generate(spec)
    return s, skewness_metric(s) if np.ptp(s.data) > 0 else 0.0


# --------------------------------------------------------------------------
# Coordinates
# --------------------------------------------------------------------------

def coord_grid(shape) -> np.ndarray:
    """Row-major grid of points with every axis spanning [-1, 1] inclusively.

    Returns an array of shape ``(prod(shape), len(shape))``.
    """
    axes = [np.linspace(-1.0, 1.0, n) if n > 1 else np.zeros(1) for n in shape]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=-1)


def signal_coords(s: Signal):
    """Coordinates and target matrix for fitting ``s``.

    A trailing channel axis of an image (``(H, W, C)``) becomes the output
    dimension; every other axis is a coordinate axis.
    """
    shape = s.shape
    if s.modality == Modality.IMAGE2D and len(shape) == 3:
        return coord_grid(shape[:2]), s.data.reshape(-1, shape[2])
    return coord_grid(shape), s.data.reshape(-1, 1)


# --------------------------------------------------------------------------
# Bundled assets
# --------------------------------------------------------------------------

NATURAL_IMAGES = ("camera", "coffee", "coins")
IMAGES = NATURAL_IMAGES + ("text", "gradient")


def asset_path(name: str) -> Path:
    return Path(str(resources.files("sympower") / "assets" / name))


def bundled_image(name: str) -> Signal:
    """One of the bundled 64x64 grayscale test images, by stem name."""
    return load_image(asset_path(f"{name}.pgm"))


def bundled_audio() -> Signal:
    return load_wav(asset_path("tone_speech.wav"))
