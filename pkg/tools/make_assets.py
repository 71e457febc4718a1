"""Regenerate the bundled test assets in src/sympower/assets/.

Natural images come from scikit-image's sample data: camera (CC0, Lav
Varshney), coffee (CC0, Rachel Michetti) and coins (Greek coins from Pompeii,
Library of Congress, no known copyright restrictions). The text and gradient
images and the audio clip are synthetic.
"""

from pathlib import Path

import numpy as np
import skimage.data
from PIL import Image, ImageDraw, ImageFont
from skimage.color import rgb2gray
from skimage.transform import resize

from sympower.dataio import SyntheticKind, SyntheticSpec, generate, save_image, save_wav
from sympower.tensor import Modality, Signal

OUT = Path(__file__).resolve().parents[1] / "src" / "sympower" / "assets"
SIZE = 64


def natural(name):
    img = getattr(skimage.data, name)()
    if img.ndim == 3:
        img = rgb2gray(img)
    else:
        img = img / 255.0
    h, w = img.shape
    side = min(h, w)
    top, left = (h - side) // 2, (w - side) // 2
    img = img[top:top + side, left:left + side]
    return resize(img, (SIZE, SIZE), anti_aliasing=True)


def text_image():
    # three words in three intensities on a light background: 4 levels total
    img = Image.new("L", (SIZE, SIZE), 235)
    draw = ImageDraw.Draw(img)
    draw.fontmode = "1"
    font = ImageFont.load_default(size=17)
    for row, (word, level) in enumerate([("INR", 20), ("SYM", 90), ("POW", 160)]):
        draw.text((4, 2 + row * 20), word, fill=level, font=font)
    return np.asarray(img, dtype=np.float64) / 255.0


def audio(rate=16000, seconds=1.0):
    t = np.arange(int(rate * seconds)) / rate
    tone = 0.25 * np.sin(2 * np.pi * 220.0 * t)
    # voiced segments: harmonic stack with a slow pitch glide, gated syllables
    f0 = 140.0 + 30.0 * np.sin(2 * np.pi * 1.5 * t)
    phase = 2 * np.pi * np.cumsum(f0) / rate
    voice = sum(np.sin(k * phase) / k for k in range(1, 8))
    gate = np.clip(np.sin(2 * np.pi * 3.0 * t), 0.0, None) ** 2
    x = tone + 0.3 * gate * voice
    return 0.9 * x / np.abs(x).max()


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name in ("camera", "coffee", "coins"):
        save_image(Signal.from_array(natural(name), Modality.IMAGE2D), OUT / f"{name}.pgm")
    save_image(Signal.from_array(text_image(), Modality.IMAGE2D), OUT / "text.pgm")
    save_image(generate(SyntheticSpec(SyntheticKind.GRADIENT, (SIZE, SIZE))), OUT / "gradient.pgm")
    save_wav(Signal.from_array(audio(), Modality.AUDIO1D), OUT / "tone_speech.wav", 16000)


if __name__ == "__main__":
    main()
