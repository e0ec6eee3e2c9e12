"""Parameterized covariate shifts for grayscale image datasets.

Three corruption kinds: additive Gaussian noise, Gaussian blur, and a
random affine warp ("image shift"). Each comes with a six-step
intensity ladder (levels I..VI) running from near-undetectable to
blatant; the ladder values are artifact defaults, tuned on the bundled
digit corpus, and can be overridden from the experiment config.

apply_shift corrupts a uniformly chosen fraction delta of a dataset
and leaves the rest bit-identical. Randomness is structured for
reproducibility and parallelism: one root seed spawns a child stream
for subset selection plus one stream per image index, so the draw an
image sees does not depend on which other images were selected.

Conventions that change results and are therefore pinned here: noise
clamps to [0, 1] after adding; blur uses a normalized 1-D kernel of
radius ceil(3 sigma) applied separably with mirror (no edge repeat)
padding; affine warps resample by bilinear interpolation with zero
fill, composing zoom, then shear, then rotation about the image
center, with per-image draws in the order rotation, translate-x,
translate-y, zoom, shear.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError, ShapeError

ROMAN_LEVELS = ("I", "II", "III", "IV", "V", "VI")

PARAM_NAMES = {
    "gaussian_noise": ("sigma",),
    "gaussian_blur": ("sigma",),
    "image_shift": (
        "max_rotation_deg",
        "max_translate_frac",
        "max_zoom_frac",
        "max_shear_deg",
    ),
}

SHIFT_KINDS = tuple(PARAM_NAMES)

DEFAULT_LADDERS = {
    "gaussian_noise": {
        "sigma": (0.02, 0.05, 0.10, 0.20, 0.30, 0.45),
    },
    "gaussian_blur": {
        "sigma": (0.30, 0.45, 0.60, 0.75, 0.90, 1.05),
    },
    # Translation stays small through level IV and then jumps: moderate
    # offsets land inside the wobble envelope typical training data already
    # covers, so only clearly-out-of-envelope offsets read as a shift.
    "image_shift": {
        "max_rotation_deg": (2.0, 6.0, 11.0, 17.0, 23.0, 28.0),
        "max_translate_frac": (0.003, 0.008, 0.015, 0.025, 0.12, 0.17),
        "max_zoom_frac": (0.02, 0.05, 0.09, 0.15, 0.21, 0.28),
        "max_shear_deg": (1.0, 3.0, 6.0, 10.0, 13.0, 16.0),
    },
}


def intensity_ladder(kind: str, level: str, ladders: dict | None = None) -> dict:
    """Explicit shift parameters for one rung of the ladder.

    ladders may override whole per-parameter value lists, keyed as
    {kind: {param: [six values]}}.
    """
    if kind not in SHIFT_KINDS:
        raise InputError(f"unknown shift kind {kind!r}, expected one of {SHIFT_KINDS}")
    if level not in ROMAN_LEVELS:
        raise InputError(f"unknown intensity level {level!r}, expected I..VI")
    table = dict(DEFAULT_LADDERS[kind])
    for param, values in ((ladders or {}).get(kind) or {}).items():
        if param not in PARAM_NAMES[kind]:
            raise ConfigError(f"shift kind {kind} has no parameter {param!r}")
        values = tuple(float(v) for v in values)
        if len(values) != len(ROMAN_LEVELS):
            raise ConfigError(
                f"ladder override for {kind}.{param} needs {len(ROMAN_LEVELS)} "
                f"values, got {len(values)}"
            )
        table[param] = values
    idx = ROMAN_LEVELS.index(level)
    return {param: table[param][idx] for param in PARAM_NAMES[kind]}


def _validate_params(kind: str, params: dict) -> dict:
    expected = PARAM_NAMES[kind]
    if set(params) != set(expected):
        raise InputError(
            f"shift kind {kind} needs parameters {expected}, got {tuple(sorted(params))}"
        )
    out = {name: float(params[name]) for name in expected}
    for name, value in out.items():
        if value < 0:
            raise InputError(f"shift parameter {name} must be >= 0, got {value}")
    if kind == "image_shift" and out["max_zoom_frac"] >= 1.0:
        raise InputError("max_zoom_frac must be < 1 so the zoom factor stays positive")
    return out


@dataclass
class ShiftSpec:
    """A fully specified corruption: kind, strength, coverage, seed.

    Exactly one of level (a ladder rung) or params (explicit values)
    must be given.
    """

    kind: str
    delta: float
    seed: int
    level: str | None = None
    params: dict | None = None

    def __post_init__(self) -> None:
        if self.kind not in SHIFT_KINDS:
            raise InputError(
                f"unknown shift kind {self.kind!r}, expected one of {SHIFT_KINDS}"
            )
        if not 0.0 <= self.delta <= 1.0:
            raise InputError(f"delta must be in [0, 1], got {self.delta}")
        if (self.level is None) == (self.params is None):
            raise InputError("give exactly one of level or explicit params")
        if self.level is not None and self.level not in ROMAN_LEVELS:
            raise InputError(f"unknown intensity level {self.level!r}")
        if self.params is not None:
            self.params = _validate_params(self.kind, self.params)

    def resolve_params(self, ladders: dict | None = None) -> dict:
        if self.params is not None:
            return dict(self.params)
        return intensity_ladder(self.kind, self.level, ladders)

    def tag(self, ladders: dict | None = None) -> str:
        """Canonical label carrying every value that affects the output."""
        params = self.resolve_params(ladders)
        inner = ",".join(f"{k}={params[k]!r}" for k in sorted(params))
        level = self.level if self.level is not None else "custom"
        return f"{self.kind}[level={level},{inner},delta={self.delta!r},seed={self.seed}]"


def _check_image(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ShapeError(f"expected a 2-D grayscale image, got shape {img.shape}")
    if not np.isfinite(img).all():
        raise InputError("image pixels must be finite")
    return img


def gaussian_noise(img: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Add white noise per pixel, then clamp into [0, 1]."""
    img = _check_image(img)
    if sigma < 0:
        raise InputError("sigma must be >= 0")
    return np.clip(img + rng.normal(0.0, sigma, size=img.shape), 0.0, 1.0)


def _reflect_index(idx: int, n: int) -> int:
    # Mirror without repeating the edge sample: ...c b | a b c d | c b a...
    if n == 1:
        return 0
    period = 2 * n - 2
    idx %= period
    return idx if idx < n else period - idx


def _blur_operator(n: int, sigma: float) -> np.ndarray:
    """Dense 1-D blur matrix with mirror padding folded in."""
    radius = math.ceil(3.0 * sigma)
    taps = np.arange(-radius, radius + 1, dtype=np.float64)
    raw = np.exp(-(taps * taps) / (2.0 * sigma * sigma))
    kernel = raw / raw.sum()
    op = np.zeros((n, n))
    for out in range(n):
        for t, weight in enumerate(kernel):
            op[out, _reflect_index(out + t - radius, n)] += weight
    return op


def _blur_batch(imgs: np.ndarray, sigma: float) -> np.ndarray:
    if sigma == 0.0:
        return imgs.copy()
    _, height, width = imgs.shape
    row_op = _blur_operator(height, sigma)
    col_op = _blur_operator(width, sigma)
    smoothed = np.matmul(row_op, np.matmul(imgs, col_op.T))
    return np.clip(smoothed, 0.0, 1.0)


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur; sigma = 0 is the identity."""
    img = _check_image(img)
    if sigma < 0:
        raise InputError("sigma must be >= 0")
    return _blur_batch(img[None], sigma)[0]


def _affine_linear(rotation_deg: float, shear_deg: float, zoom: float) -> np.ndarray:
    # Zoom, then shear, then rotation, in (x, y) coordinates.
    th = math.radians(rotation_deg)
    sh = math.radians(shear_deg)
    rot = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    shear = np.array([[1.0, math.tan(sh)], [0.0, 1.0]])
    zoomm = np.array([[zoom, 0.0], [0.0, zoom]])
    return rot @ shear @ zoomm


def warp_affine(img: np.ndarray, linear: np.ndarray, translation) -> np.ndarray:
    """Apply q -> linear @ (q - center) + center + translation to the content.

    Coordinates are (x, y) = (column, row) about the pixel-grid center.
    Output pixels pull from the inverse-mapped source location by
    bilinear interpolation; source locations outside the image read 0.
    """
    img = _check_image(img)
    linear = np.asarray(linear, dtype=np.float64)
    tx, ty = (float(t) for t in translation)
    det = linear[0, 0] * linear[1, 1] - linear[0, 1] * linear[1, 0]
    if abs(det) < 1e-12:
        raise InputError("affine linear part is singular")
    inv = (
        np.array([[linear[1, 1], -linear[0, 1]], [-linear[1, 0], linear[0, 0]]]) / det
    )
    height, width = img.shape
    cx = (width - 1) / 2.0
    cy = (height - 1) / 2.0
    xs, ys = np.meshgrid(np.arange(width, dtype=np.float64),
                         np.arange(height, dtype=np.float64))
    dx = xs - cx - tx
    dy = ys - cy - ty
    sx = inv[0, 0] * dx + inv[0, 1] * dy + cx
    sy = inv[1, 0] * dx + inv[1, 1] * dy + cy

    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    wx = sx - x0
    wy = sy - y0
    out = np.zeros_like(img)
    for oy, ox, weight in (
        (0, 0, (1.0 - wx) * (1.0 - wy)),
        (0, 1, wx * (1.0 - wy)),
        (1, 0, (1.0 - wx) * wy),
        (1, 1, wx * wy),
    ):
        px = x0 + ox
        py = y0 + oy
        valid = (px >= 0) & (px < width) & (py >= 0) & (py < height)
        contrib = np.where(valid, img[py.clip(0, height - 1), px.clip(0, width - 1)], 0.0)
        out += weight * contrib
    return np.clip(out, 0.0, 1.0)


def image_shift(img: np.ndarray, params: dict, rng: np.random.Generator) -> np.ndarray:
    """Random affine warp with magnitudes bounded by params."""
    img = _check_image(img)
    params = _validate_params("image_shift", params)
    height, width = img.shape
    rot = rng.uniform(-params["max_rotation_deg"], params["max_rotation_deg"])
    tx = rng.uniform(-params["max_translate_frac"], params["max_translate_frac"]) * width
    ty = rng.uniform(-params["max_translate_frac"], params["max_translate_frac"]) * height
    zoom = rng.uniform(1.0 - params["max_zoom_frac"], 1.0 + params["max_zoom_frac"])
    shear = rng.uniform(-params["max_shear_deg"], params["max_shear_deg"])
    return warp_affine(img, _affine_linear(rot, shear, zoom), (tx, ty))


def apply_shift(
    dataset: np.ndarray, spec: ShiftSpec, ladders: dict | None = None
) -> np.ndarray:
    """Corrupt a round(delta * N) subset of the dataset, preserving order.

    The subset is drawn without replacement from a dedicated child
    stream of the spec seed; every image index owns its own child
    stream, so per-image draws are independent of the selection.
    Unselected images come back bit-identical.
    """
    imgs = np.asarray(dataset, dtype=np.float64)
    if imgs.ndim != 3:
        raise ShapeError(f"expected (count, height, width) images, got {imgs.shape}")
    if not np.isfinite(imgs).all():
        raise InputError("dataset pixels must be finite")
    params = spec.resolve_params(ladders)
    count = imgs.shape[0]
    # Round half to even, matching the documented subset-size rule.
    selected_count = int(np.rint(spec.delta * count))
    out = imgs.copy()
    if selected_count == 0:
        return out
    children = np.random.SeedSequence(spec.seed).spawn(count + 1)
    selector = np.random.default_rng(children[0])
    chosen = np.sort(selector.choice(count, size=selected_count, replace=False))

    if spec.kind == "gaussian_blur":
        out[chosen] = _blur_batch(imgs[chosen], params["sigma"])
    elif spec.kind == "gaussian_noise":
        for i in chosen:
            rng = np.random.default_rng(children[i + 1])
            out[i] = gaussian_noise(imgs[i], params["sigma"], rng)
    else:
        for i in chosen:
            rng = np.random.default_rng(children[i + 1])
            out[i] = image_shift(imgs[i], params, rng)
    return out
