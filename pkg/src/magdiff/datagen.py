"""Synthetic handwritten-digit corpus.

Renders digit glyphs from the DejaVu font family and perturbs each
sample with a small random affine warp, stroke softening, and gain
jitter, then writes the result in the standard IDX layout (same file
names, magics, and counts as the MNIST distribution). Useful wherever
a self-contained stand-in for the real dataset is needed.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont
from scipy import ndimage

from .errors import InputError
from .io import MNIST_FILES, write_idx_images, write_idx_labels

FONT_DIRS = (
    "/usr/share/fonts/truetype/dejavu",
    "/usr/share/fonts/dejavu",
    "/usr/share/fonts/TTF",
)

FONT_FACES = (
    "DejaVuSans.ttf",
    "DejaVuSans-Bold.ttf",
    "DejaVuSerif.ttf",
    "DejaVuSerif-Bold.ttf",
    "DejaVuSansMono.ttf",
    "DejaVuSansMono-Bold.ttf",
)

# Jitter bounds, chosen to keep digits legible but visually varied.
# Scale shrinks the rendered 20px content box to roughly 15px, which
# leaves a wide guaranteed-dark frame around every digit, and the ink
# gain is a fixed constant: per-sample brightness or size jitter would
# swamp the pixel statistics that downstream monitors care about.
MAX_ROTATION_DEG = 12.0
MAX_SHEAR_DEG = 8.0
SCALE_RANGE = (0.72, 0.78)
MAX_TRANSLATE_PX = 2.0
ELASTIC_ALPHA_RANGE = (1.5, 4.0)
ELASTIC_SIGMA_RANGE = (3.0, 5.0)
SOFTEN_SIGMA_RANGE = (0.45, 0.55)
INK_GAIN = 0.45


def _find_font(face: str) -> str:
    for directory in FONT_DIRS:
        candidate = Path(directory) / face
        if candidate.exists():
            return str(candidate)
    raise InputError(f"font face {face} not found under {FONT_DIRS}")


def _render_glyph(digit: int, font_path: str, size: int) -> np.ndarray:
    """Rasterize one digit at 4x resolution, crop to ink, fit into the frame."""
    hi = size * 4
    canvas = Image.new("L", (hi * 2, hi * 2), 0)
    draw = ImageDraw.Draw(canvas)
    font = ImageFont.truetype(font_path, int(hi * 1.2))
    draw.text((hi // 2, hi // 2), str(digit), fill=255, font=font)
    bbox = canvas.getbbox()
    if bbox is None:
        raise InputError(f"font {font_path} produced an empty glyph for {digit}")
    glyph = canvas.crop(bbox)
    # MNIST frames content in a 20x20 box inside the 28x28 image.
    box = int(size * 20 / 28)
    scale = box / max(glyph.size)
    resized = glyph.resize(
        (max(1, round(glyph.size[0] * scale)), max(1, round(glyph.size[1] * scale))),
        Image.BILINEAR,
    )
    frame = Image.new("L", (size, size), 0)
    frame.paste(resized, ((size - resized.size[0]) // 2, (size - resized.size[1]) // 2))
    return np.asarray(frame, dtype=np.float64) / 255.0


def glyph_prototypes(size: int = 28) -> np.ndarray:
    """All digit/face prototypes, shape (10, len(FONT_FACES), size, size)."""
    out = np.zeros((10, len(FONT_FACES), size, size))
    for digit in range(10):
        for f, face in enumerate(FONT_FACES):
            out[digit, f] = _render_glyph(digit, _find_font(face), size)
    return out


def _jitter(img: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    size = img.shape[0]
    theta = np.deg2rad(rng.uniform(-MAX_ROTATION_DEG, MAX_ROTATION_DEG))
    shear = np.deg2rad(rng.uniform(-MAX_SHEAR_DEG, MAX_SHEAR_DEG))
    scale = rng.uniform(*SCALE_RANGE)
    tx = rng.uniform(-MAX_TRANSLATE_PX, MAX_TRANSLATE_PX)
    ty = rng.uniform(-MAX_TRANSLATE_PX, MAX_TRANSLATE_PX)
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    shr = np.array([[1.0, np.tan(shear)], [0.0, 1.0]])
    forward = rot @ shr * scale
    inverse = np.linalg.inv(forward)
    center = (size - 1) / 2.0
    # affine_transform maps output (row, col); our matrices act on (x, y).
    inverse_rc = inverse[::-1, ::-1].copy()
    shift_rc = np.array([center - ty, center - tx])
    offset = np.array([center, center]) - inverse_rc @ shift_rc
    warped = ndimage.affine_transform(
        img, inverse_rc, offset=offset, order=1, mode="constant", cval=0.0
    )
    # Elastic wobble: a smoothed random displacement field bends strokes
    # without moving the glyph as a whole.
    alpha = rng.uniform(*ELASTIC_ALPHA_RANGE)
    sigma = rng.uniform(*ELASTIC_SIGMA_RANGE)
    dx = ndimage.gaussian_filter(rng.uniform(-1.0, 1.0, (size, size)), sigma) * alpha
    dy = ndimage.gaussian_filter(rng.uniform(-1.0, 1.0, (size, size)), sigma) * alpha
    rows, cols = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    warped = ndimage.map_coordinates(
        warped, [rows + dy, cols + dx], order=1, mode="constant", cval=0.0
    )
    softened = ndimage.gaussian_filter(warped, rng.uniform(*SOFTEN_SIGMA_RANGE))
    return np.clip(softened * INK_GAIN, 0.0, 1.0)


def sample_images(
    count: int, seed: int, size: int = 28, prototypes: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Draw (images uint8 (count, size, size), labels int64 (count,))."""
    if count < 1:
        raise InputError(f"count must be positive, got {count}")
    if prototypes is None:
        prototypes = glyph_prototypes(size)
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 10, size=count)
    faces = rng.integers(0, prototypes.shape[1], size=count)
    images = np.zeros((count, size, size), dtype=np.uint8)
    for i in range(count):
        sample = _jitter(prototypes[labels[i], faces[i]], rng)
        images[i] = np.rint(sample * 255.0).astype(np.uint8)
    return images, labels.astype(np.int64)


def make_corpus(
    out_dir, train_count: int = 60000, test_count: int = 10000, seed: int = 0
) -> Path:
    """Write a four-file IDX dataset directory; returns the directory path."""
    out_dir = Path(out_dir)
    prototypes = glyph_prototypes()
    # Disjoint seeds keep train and test independent draws.
    ss_train, ss_test = np.random.SeedSequence(seed).spawn(2)
    train_x, train_y = sample_images(
        train_count, np.random.default_rng(ss_train).integers(2**31), prototypes=prototypes
    )
    test_x, test_y = sample_images(
        test_count, np.random.default_rng(ss_test).integers(2**31), prototypes=prototypes
    )
    write_idx_images(out_dir / MNIST_FILES["train_images"], train_x)
    write_idx_labels(out_dir / MNIST_FILES["train_labels"], train_y)
    write_idx_images(out_dir / MNIST_FILES["test_images"], test_x)
    write_idx_labels(out_dir / MNIST_FILES["test_labels"], test_y)
    return out_dir
