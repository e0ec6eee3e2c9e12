"""File formats and report emission.

Formats owned by this module:

- IDX image/label files (the MNIST container): big-endian magic and
  dimensions, unsigned byte payload; pixels are scaled to [0, 1] on
  read and expected as uint8 on write.
- Weight manifests: a JSON descriptor plus one raw blob per parameter
  array, 32-bit little-endian IEEE-754 floats, row-major with rows
  indexed by output neuron.
- Class summary files: JSON with full-precision floats.
- Feature blobs: two little-endian uint32 header words (count, dim)
  followed by count*dim 32-bit little-endian floats, row-major.
- Test vector files: JSON pairs of network inputs and expected outputs
  used for cross-implementation checks.
- Report CSV: one header line, then one row per power/type-I cell.
- Power plots: self-contained SVG 1.1 documents.
- Experiment configs: INI-style sections parsed by configparser.

Every writer goes through an atomic temp-file-then-rename step, and all
output is deterministic byte-for-byte given identical inputs.
"""

from __future__ import annotations

import configparser
import csv
import io as _stdio
import json
import math
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .actgraph import MeanGraphSummary
from .errors import ConfigError, InputError, ParseError, ShapeError
from .features import FeatureKind
from .network import ACTIVATIONS, DenseLayer, Network
from .shifts import PARAM_NAMES, ROMAN_LEVELS, SHIFT_KINDS

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def _atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_text(path, text: str) -> None:
    _atomic_write_bytes(path, text.encode("utf-8"))


# ---------------------------------------------------------------------------
# IDX


def read_idx(path) -> np.ndarray:
    """Read an IDX file: images come back as float64 in [0, 1], labels as int64."""
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise ParseError(f"{path}: truncated IDX header at byte 0 (need 4 magic bytes)")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic == IDX_LABELS_MAGIC:
        dims = 1
    elif magic == IDX_IMAGES_MAGIC:
        dims = 3
    else:
        raise ParseError(f"{path}: bad IDX magic 0x{magic:08x} at byte 0")
    header_end = 4 + 4 * dims
    if len(raw) < header_end:
        raise ParseError(
            f"{path}: truncated IDX header at byte {len(raw)} "
            f"(need {header_end} bytes for {dims} dimension sizes)"
        )
    shape = struct.unpack(f">{dims}I", raw[4:header_end])
    expected = header_end + int(np.prod(shape))
    if len(raw) != expected:
        raise ParseError(
            f"{path}: IDX payload length mismatch, expected {expected} bytes "
            f"total but file has {len(raw)}"
        )
    payload = np.frombuffer(raw, dtype=np.uint8, offset=header_end).reshape(shape)
    if magic == IDX_LABELS_MAGIC:
        return payload.astype(np.int64)
    return payload.astype(np.float64) / 255.0


def write_idx_images(path, images: np.ndarray) -> None:
    """Write uint8 images of shape (count, height, width) as IDX."""
    images = np.asarray(images)
    if images.ndim != 3:
        raise ShapeError(f"images must have shape (count, height, width), got {images.shape}")
    if images.dtype != np.uint8:
        raise InputError(f"images must be uint8, got {images.dtype}")
    header = struct.pack(">IIII", IDX_IMAGES_MAGIC, *images.shape)
    _atomic_write_bytes(path, header + images.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ShapeError(f"labels must be 1-D, got shape {labels.shape}")
    if labels.min(initial=0) < 0 or labels.max(initial=0) > 255:
        raise InputError("labels must fit in an unsigned byte")
    header = struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0])
    _atomic_write_bytes(path, header + labels.astype(np.uint8).tobytes())


MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


def load_dataset_dir(directory):
    """Read the four standard IDX files from a dataset directory."""
    directory = Path(directory)
    if not directory.is_dir():
        raise InputError(f"dataset directory {directory} does not exist")
    out = {}
    for key, name in MNIST_FILES.items():
        path = directory / name
        if not path.exists():
            raise InputError(f"dataset directory {directory} is missing {name}")
        out[key] = read_idx(path)
    return out["train_images"], out["train_labels"], out["test_images"], out["test_labels"]


# ---------------------------------------------------------------------------
# Weight manifests


def save_network(net: Network, directory, metadata: dict | None = None) -> Path:
    """Write manifest.json plus f32 weight/bias blobs; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    descriptors = []
    for k, layer in enumerate(net.layers):
        name = f"layer_{k}"
        weight_file = f"{name}.weight.f32"
        bias_file = f"{name}.bias.f32"
        _atomic_write_bytes(
            directory / weight_file,
            np.ascontiguousarray(layer.weight, dtype="<f4").tobytes(),
        )
        _atomic_write_bytes(
            directory / bias_file,
            np.ascontiguousarray(layer.bias, dtype="<f4").tobytes(),
        )
        descriptors.append(
            {
                "name": name,
                "n_in": layer.n_in,
                "n_out": layer.n_out,
                "activation": layer.activation,
                "weight_file": weight_file,
                "bias_file": bias_file,
            }
        )
    manifest = {
        "format_version": 1,
        "class_count": net.class_count,
        "layers": descriptors,
        "metadata": metadata or {},
    }
    path = directory / "manifest.json"
    _atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_network(manifest_path) -> tuple[Network, dict]:
    """Load a manifest and its blobs; returns (network, metadata)."""
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text("utf-8"))
    except FileNotFoundError:
        raise InputError(f"manifest {manifest_path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"{manifest_path}: invalid JSON ({exc})") from None
    if manifest.get("format_version") != 1:
        raise ParseError(
            f"{manifest_path}: unsupported format_version {manifest.get('format_version')!r}"
        )
    descriptors = manifest.get("layers")
    if not descriptors:
        raise ParseError(f"{manifest_path}: manifest lists no layers")
    base = manifest_path.parent
    layers = []
    for desc in descriptors:
        for key in ("name", "n_in", "n_out", "activation", "weight_file", "bias_file"):
            if key not in desc:
                raise ParseError(f"{manifest_path}: layer descriptor missing {key!r}")
        if desc["activation"] not in ACTIVATIONS:
            raise ParseError(
                f"{manifest_path}: layer {desc['name']} has unknown activation "
                f"{desc['activation']!r}"
            )
        n_in, n_out = int(desc["n_in"]), int(desc["n_out"])
        weight = _read_f32_blob(base / desc["weight_file"], n_out * n_in)
        bias = _read_f32_blob(base / desc["bias_file"], n_out)
        layers.append(
            DenseLayer(weight.reshape(n_out, n_in), bias, desc["activation"])
        )
    net = Network(layers, class_count=int(manifest["class_count"]))
    return net, manifest.get("metadata", {})


def _read_f32_blob(path, expected_count: int) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise InputError(f"weight blob {path} does not exist")
    raw = path.read_bytes()
    expected_bytes = expected_count * 4
    if len(raw) != expected_bytes:
        raise ParseError(
            f"{path}: expected exactly {expected_bytes} bytes "
            f"({expected_count} f32 values), got {len(raw)}"
        )
    return np.frombuffer(raw, dtype="<f4").astype(np.float64)


# ---------------------------------------------------------------------------
# Summaries


def save_summaries(path, summaries: list[MeanGraphSummary], meta: dict | None = None) -> None:
    if not summaries:
        raise InputError("cannot save an empty summary list")
    layers = {s.layer_index for s in summaries}
    if len(layers) != 1:
        raise InputError("summaries must all come from one layer")
    doc = {
        "format_version": 1,
        "layer_index": summaries[0].layer_index,
        "class_count": len(summaries),
        "meta": meta or {},
        "summaries": [
            {
                "class_index": s.class_index,
                "sample_count": s.sample_count,
                "mean_pre_activation": [float(v) for v in s.mean_pre_activation],
            }
            for s in summaries
        ],
    }
    _atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_summaries(path) -> tuple[list[MeanGraphSummary], dict]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text("utf-8"))
    except FileNotFoundError:
        raise InputError(f"summary file {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from None
    if doc.get("format_version") != 1:
        raise ParseError(f"{path}: unsupported format_version {doc.get('format_version')!r}")
    layer_index = int(doc["layer_index"])
    summaries = [
        MeanGraphSummary(
            class_index=int(item["class_index"]),
            layer_index=layer_index,
            mean_pre_activation=np.array(item["mean_pre_activation"], dtype=np.float64),
            sample_count=int(item["sample_count"]),
        )
        for item in doc["summaries"]
    ]
    return summaries, doc.get("meta", {})


# ---------------------------------------------------------------------------
# Feature blobs and test vectors


def write_feature_blob(path, values: np.ndarray) -> None:
    """count/dim uint32 LE header then f32 LE row-major payload."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ShapeError(f"feature blob wants a 2-D matrix, got shape {values.shape}")
    header = struct.pack("<II", values.shape[0], values.shape[1])
    _atomic_write_bytes(path, header + np.ascontiguousarray(values, dtype="<f4").tobytes())


def read_feature_blob(path) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 8:
        raise ParseError(f"{path}: truncated feature blob header at byte {len(raw)}")
    count, dim = struct.unpack("<II", raw[:8])
    expected = 8 + count * dim * 4
    if len(raw) != expected:
        raise ParseError(
            f"{path}: expected {expected} bytes for {count}x{dim} f32 payload, "
            f"got {len(raw)}"
        )
    return np.frombuffer(raw, dtype="<f4", offset=8).astype(np.float64).reshape(count, dim)


def write_test_vectors(path, inputs: np.ndarray, outputs: np.ndarray) -> None:
    inputs = np.asarray(inputs, dtype=np.float64)
    outputs = np.asarray(outputs, dtype=np.float64)
    if inputs.ndim != 2 or outputs.ndim != 2 or inputs.shape[0] != outputs.shape[0]:
        raise ShapeError("test vectors need matching 2-D input and output matrices")
    doc = {
        "format_version": 1,
        "count": inputs.shape[0],
        "input_dim": inputs.shape[1],
        "output_dim": outputs.shape[1],
        "vectors": [
            {"input": [float(v) for v in x], "output": [float(v) for v in y]}
            for x, y in zip(inputs, outputs)
        ],
    }
    _atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_test_vectors(path) -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from None
    if doc.get("format_version") != 1:
        raise ParseError(f"{path}: unsupported format_version {doc.get('format_version')!r}")
    inputs = np.array([v["input"] for v in doc["vectors"]], dtype=np.float64)
    outputs = np.array([v["output"] for v in doc["vectors"]], dtype=np.float64)
    if inputs.shape != (doc["count"], doc["input_dim"]):
        raise ParseError(f"{path}: vector shapes disagree with the header")
    return inputs, outputs


# ---------------------------------------------------------------------------
# Report CSV


@dataclass
class ReportRow:
    """One power/type-I estimate cell, ready for the CSV report."""

    feature: str
    layer: int | None
    norm: str | None
    shift: str
    intensity: str
    delta: float
    sample_size: int
    repetitions: int
    mode: str
    estimate: float
    ci_half_width: float
    seed: int


REPORT_COLUMNS = [
    "feature",
    "layer",
    "norm",
    "shift",
    "intensity",
    "delta",
    "sample_size",
    "repetitions",
    "mode",
    "estimate",
    "ci_half_width",
    "seed",
]


def _fmt_estimate(x: float) -> str:
    # Always 17 significant digits: lossless for float64 round-trips and
    # comfortably past the six-digit readability floor.
    return format(float(x), "#.17g")


def report_rows_to_csv(rows: list[ReportRow]) -> str:
    buf = _stdio.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for row in rows:
        writer.writerow(
            [
                row.feature,
                "" if row.layer is None else str(row.layer),
                "" if row.norm is None else row.norm,
                row.shift,
                row.intensity,
                repr(float(row.delta)),
                str(row.sample_size),
                str(row.repetitions),
                row.mode,
                _fmt_estimate(row.estimate),
                _fmt_estimate(row.ci_half_width),
                str(row.seed),
            ]
        )
    return buf.getvalue()


def write_report_csv(path, rows: list[ReportRow]) -> None:
    _atomic_write_text(path, report_rows_to_csv(rows))


def read_report_csv(path) -> list[ReportRow]:
    path = Path(path)
    rows = []
    with path.open("r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty report file, expected a header line") from None
        if header != REPORT_COLUMNS:
            raise ParseError(f"{path}: line 1: unexpected header {header}")
        for lineno, record in enumerate(reader, start=2):
            if len(record) != len(REPORT_COLUMNS):
                raise ParseError(
                    f"{path}: line {lineno}: expected {len(REPORT_COLUMNS)} fields, "
                    f"got {len(record)}"
                )
            try:
                rows.append(
                    ReportRow(
                        feature=record[0],
                        layer=None if record[1] == "" else int(record[1]),
                        norm=None if record[2] == "" else record[2],
                        shift=record[3],
                        intensity=record[4],
                        delta=float(record[5]),
                        sample_size=int(record[6]),
                        repetitions=int(record[7]),
                        mode=record[8],
                        estimate=float(record[9]),
                        ci_half_width=float(record[10]),
                        seed=int(record[11]),
                    )
                )
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from None
    return rows


# ---------------------------------------------------------------------------
# SVG power plots

_PALETTE = (
    "#c0392b",
    "#27ae60",
    "#2980b9",
    "#8e44ad",
    "#d35400",
    "#16a085",
    "#7f8c8d",
    "#2c3e50",
)

_PLOT = {
    "width": 660,
    "height": 420,
    "left": 62,
    "right": 490,
    "top": 24,
    "bottom": 370,
}


def _series_key(row: ReportRow) -> tuple:
    return (
        row.feature,
        "" if row.layer is None else str(row.layer),
        "" if row.norm is None else row.norm,
        row.mode,
    )


def _series_label(key: tuple) -> str:
    feature, layer, norm, mode = key
    if feature == "confidence_vector":
        base = "cv"
    else:
        base = f"{feature} L{layer} {norm}"
    return f"{base} ({mode})"


def _y_coord(value: float) -> float:
    top, bottom = _PLOT["top"], _PLOT["bottom"]
    clamped = min(1.0, max(0.0, value))
    return bottom - clamped * (bottom - top)


def emit_power_plot(rows: list[ReportRow], x_axis: str, path=None) -> str:
    """Render estimate-vs-x curves with CI whiskers as an SVG document.

    x_axis selects what varies: "sample_size" (log-scaled) or
    "intensity" (ladder levels I..VI in order). Rows are grouped into
    one series per (feature, layer, norm, mode).
    """
    if x_axis not in ("sample_size", "intensity"):
        raise InputError(f"x_axis must be sample_size or intensity, got {x_axis!r}")
    if not rows:
        raise InputError("emit_power_plot needs at least one row")

    def x_value(row: ReportRow) -> float:
        if x_axis == "sample_size":
            return math.log10(row.sample_size)
        if row.intensity not in ROMAN_LEVELS:
            raise InputError(
                f"intensity axis needs ladder levels, got {row.intensity!r}"
            )
        return float(ROMAN_LEVELS.index(row.intensity) + 1)

    xs = sorted({x_value(r) for r in rows})
    lo, hi = xs[0], xs[-1]
    span = hi - lo

    def x_coord(value: float) -> float:
        left, right = _PLOT["left"], _PLOT["right"]
        if span == 0.0:
            return (left + right) / 2.0
        return left + (value - lo) / span * (right - left)

    series: dict[tuple, list[ReportRow]] = {}
    for row in rows:
        series.setdefault(_series_key(row), []).append(row)

    parts = []
    parts.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_PLOT["width"]}" '
        f'height="{_PLOT["height"]}" viewBox="0 0 {_PLOT["width"]} {_PLOT["height"]}">'
    )
    echo = "; ".join(
        sorted(
            {
                f"{r.feature}/{r.shift}/{r.intensity}/delta={r.delta!r}"
                f"/m={r.sample_size}/R={r.repetitions}/mode={r.mode}/seed={r.seed}"
                for r in rows
            }
        )
    )
    parts.append(f"<desc>config: {echo}</desc>")
    parts.append(f'<rect width="{_PLOT["width"]}" height="{_PLOT["height"]}" fill="white"/>')

    # Horizontal grid and axis labels.
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = _y_coord(tick)
        parts.append(
            f'<line class="grid" x1="{_PLOT["left"]}" y1="{y:.2f}" '
            f'x2="{_PLOT["right"]}" y2="{y:.2f}" stroke="#dddddd" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_PLOT["left"] - 8}" y="{y + 4:.2f}" text-anchor="end" '
            f'font-size="12" fill="#333333">{tick:g}</text>'
        )
    # Dashed significance line at 0.05.
    y05 = _y_coord(0.05)
    parts.append(
        f'<line class="alpha-line" x1="{_PLOT["left"]}" y1="{y05:.2f}" '
        f'x2="{_PLOT["right"]}" y2="{y05:.2f}" stroke="#888888" '
        f'stroke-width="1" stroke-dasharray="4 3"/>'
    )

    # X ticks at the distinct data positions.
    seen = {}
    for row in rows:
        seen[x_value(row)] = (
            str(row.sample_size) if x_axis == "sample_size" else row.intensity
        )
    for value, label in sorted(seen.items()):
        x = x_coord(value)
        parts.append(
            f'<line x1="{x:.2f}" y1="{_PLOT["bottom"]}" x2="{x:.2f}" '
            f'y2="{_PLOT["bottom"] + 6}" stroke="#333333" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{x:.2f}" y="{_PLOT["bottom"] + 20}" text-anchor="middle" '
            f'font-size="12" fill="#333333">{label}</text>'
        )
    axis_name = "sample size (log scale)" if x_axis == "sample_size" else "intensity level"
    parts.append(
        f'<text x="{(_PLOT["left"] + _PLOT["right"]) / 2:.2f}" '
        f'y="{_PLOT["bottom"] + 40}" text-anchor="middle" font-size="13" '
        f'fill="#111111">{axis_name}</text>'
    )
    parts.append(
        f'<text x="18" y="{(_PLOT["top"] + _PLOT["bottom"]) / 2:.2f}" font-size="13" '
        f'fill="#111111" transform="rotate(-90 18 '
        f'{(_PLOT["top"] + _PLOT["bottom"]) / 2:.2f})" '
        f'text-anchor="middle">rejection rate</text>'
    )
    # Axis frame.
    parts.append(
        f'<line x1="{_PLOT["left"]}" y1="{_PLOT["top"]}" x2="{_PLOT["left"]}" '
        f'y2="{_PLOT["bottom"]}" stroke="#333333" stroke-width="1"/>'
    )
    parts.append(
        f'<line x1="{_PLOT["left"]}" y1="{_PLOT["bottom"]}" x2="{_PLOT["right"]}" '
        f'y2="{_PLOT["bottom"]}" stroke="#333333" stroke-width="1"/>'
    )

    for index, key in enumerate(sorted(series)):
        color = _PALETTE[index % len(_PALETTE)]
        points = sorted(series[key], key=x_value)
        coords = [(x_coord(x_value(r)), r) for r in points]
        # CI whiskers first so lines draw on top.
        for x, row in coords:
            y_lo = _y_coord(row.estimate - row.ci_half_width)
            y_hi = _y_coord(row.estimate + row.ci_half_width)
            parts.append(
                f'<line class="whisker" x1="{x:.2f}" y1="{y_lo:.2f}" x2="{x:.2f}" '
                f'y2="{y_hi:.2f}" stroke="{color}" stroke-width="1"/>'
            )
            for y_cap in (y_lo, y_hi):
                parts.append(
                    f'<line class="whisker-cap" x1="{x - 4:.2f}" y1="{y_cap:.2f}" '
                    f'x2="{x + 4:.2f}" y2="{y_cap:.2f}" stroke="{color}" '
                    f'stroke-width="1"/>'
                )
        if len(coords) >= 2:
            joined = " ".join(
                f"{x:.2f},{_y_coord(row.estimate):.2f}" for x, row in coords
            )
            parts.append(
                f'<polyline fill="none" stroke="{color}" stroke-width="2" '
                f'points="{joined}"/>'
            )
        for x, row in coords:
            parts.append(
                f'<circle cx="{x:.2f}" cy="{_y_coord(row.estimate):.2f}" r="3" '
                f'fill="{color}"/>'
            )
        legend_y = _PLOT["top"] + 16 + index * 18
        parts.append(
            f'<line x1="{_PLOT["right"] + 12}" y1="{legend_y - 4}" '
            f'x2="{_PLOT["right"] + 34}" y2="{legend_y - 4}" stroke="{color}" '
            f'stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{_PLOT["right"] + 40}" y="{legend_y}" font-size="12" '
            f'fill="#111111">{_series_label(key)}</text>'
        )

    parts.append("</svg>")
    document = "\n".join(parts) + "\n"
    if path is not None:
        _atomic_write_text(path, document)
    return document


# ---------------------------------------------------------------------------
# Experiment configs


@dataclass
class ExperimentConfig:
    """Parsed power-grid configuration."""

    data_dir: str
    model_manifest: str
    summaries_path: str
    features: list[FeatureKind]
    shift_kinds: list[str]
    levels: list[str]
    deltas: list[float]
    sample_sizes: list[int]
    modes: list[str]
    alpha: float
    repetitions: int
    seed: int
    ladders: dict = field(default_factory=dict)
    train_limit: int = 0
    csv_path: str = "report.csv"
    plots_dir: str = "plots"
    x_axis: str = "intensity"


def _split_list(raw: str) -> list[str]:
    return [item.strip() for item in raw.split(",") if item.strip()]


def read_experiment_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise InputError(f"config file {path} does not exist")
    parser = configparser.ConfigParser()
    try:
        parser.read_string(path.read_text("utf-8"))
    except configparser.Error as exc:
        raise ParseError(f"{path}: {exc}") from None

    def need(section: str, key: str) -> str:
        try:
            return parser.get(section, key)
        except (configparser.NoSectionError, configparser.NoOptionError):
            raise ConfigError(f"{path}: missing [{section}] {key}") from None

    def optional(section: str, key: str, fallback: str) -> str:
        return parser.get(section, key, fallback=fallback)

    features = []
    feature_names = _split_list(need("grid", "features"))
    norms = _split_list(optional("grid", "norms", "frobenius"))
    layers = [int(v) for v in _split_list(optional("grid", "layers", "-1"))]
    for name in feature_names:
        if name == "magdiff":
            for layer in layers:
                for norm in norms:
                    features.append(FeatureKind.magdiff(layer=layer, norm=norm))
        elif name in ("cv", "confidence_vector"):
            features.append(FeatureKind.confidence_vector())
        else:
            raise ConfigError(f"{path}: unknown feature {name!r} in [grid] features")
    if not features:
        raise ConfigError(f"{path}: [grid] features resolved to an empty list")

    shift_kinds = _split_list(need("grid", "shifts"))
    for kind in shift_kinds:
        if kind not in SHIFT_KINDS:
            raise ConfigError(f"{path}: unknown shift kind {kind!r}")
    levels = _split_list(optional("grid", "levels", ",".join(ROMAN_LEVELS)))
    for level in levels:
        if level not in ROMAN_LEVELS:
            raise ConfigError(f"{path}: unknown intensity level {level!r}")
    modes = _split_list(optional("grid", "modes", "power,type1"))
    for mode in modes:
        if mode not in ("power", "type1"):
            raise ConfigError(f"{path}: unknown mode {mode!r}")

    try:
        deltas = [float(v) for v in _split_list(need("grid", "deltas"))]
        sample_sizes = [int(v) for v in _split_list(need("grid", "sample_sizes"))]
        alpha = float(optional("test", "alpha", "0.05"))
        repetitions = int(need("test", "repetitions"))
        seed = int(need("test", "seed"))
        train_limit = int(optional("data", "train_limit", "0"))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None

    ladders: dict = {}
    if parser.has_section("ladders"):
        for key, raw in parser.items("ladders"):
            if "." not in key:
                raise ConfigError(
                    f"{path}: [ladders] keys look like kind.param, got {key!r}"
                )
            kind, param = key.split(".", 1)
            if kind not in SHIFT_KINDS or param not in PARAM_NAMES[kind]:
                raise ConfigError(f"{path}: [ladders] {key!r} names no known parameter")
            try:
                values = [float(v) for v in _split_list(raw)]
            except ValueError as exc:
                raise ConfigError(f"{path}: [ladders] {key}: {exc}") from None
            if len(values) != len(ROMAN_LEVELS):
                raise ConfigError(
                    f"{path}: [ladders] {key} needs {len(ROMAN_LEVELS)} values"
                )
            ladders.setdefault(kind, {})[param] = values

    x_axis = optional("output", "x_axis", "intensity")
    if x_axis not in ("intensity", "sample_size"):
        raise ConfigError(f"{path}: [output] x_axis must be intensity or sample_size")

    return ExperimentConfig(
        data_dir=need("data", "dir"),
        model_manifest=need("model", "manifest"),
        summaries_path=need("summaries", "path"),
        features=features,
        shift_kinds=shift_kinds,
        levels=levels,
        deltas=deltas,
        sample_sizes=sample_sizes,
        modes=modes,
        alpha=alpha,
        repetitions=repetitions,
        seed=seed,
        ladders=ladders,
        train_limit=train_limit,
        csv_path=optional("output", "csv", "report.csv"),
        plots_dir=optional("output", "plots", "plots"),
        x_axis=x_axis,
    )


def write_experiment_config(config: ExperimentConfig, path) -> None:
    """Serialize a config back to INI form (round-trips through the parser)."""
    parser = configparser.ConfigParser()
    parser["data"] = {"dir": config.data_dir, "train_limit": str(config.train_limit)}
    parser["model"] = {"manifest": config.model_manifest}
    parser["summaries"] = {"path": config.summaries_path}
    feature_names = []
    norms = []
    layers = []
    for kind in config.features:
        if kind.kind == "magdiff":
            if "magdiff" not in feature_names:
                feature_names.append("magdiff")
            if kind.norm not in norms:
                norms.append(kind.norm)
            if str(kind.layer) not in layers:
                layers.append(str(kind.layer))
        else:
            if "cv" not in feature_names:
                feature_names.append("cv")
    grid = {
        "features": ",".join(feature_names),
        "shifts": ",".join(config.shift_kinds),
        "levels": ",".join(config.levels),
        "deltas": ",".join(repr(d) for d in config.deltas),
        "sample_sizes": ",".join(str(m) for m in config.sample_sizes),
        "modes": ",".join(config.modes),
    }
    if norms:
        grid["norms"] = ",".join(norms)
    if layers:
        grid["layers"] = ",".join(layers)
    parser["grid"] = grid
    parser["test"] = {
        "alpha": repr(config.alpha),
        "repetitions": str(config.repetitions),
        "seed": str(config.seed),
    }
    if config.ladders:
        parser["ladders"] = {
            f"{kind}.{param}": ",".join(repr(float(v)) for v in values)
            for kind, table in sorted(config.ladders.items())
            for param, values in sorted(table.items())
        }
    parser["output"] = {
        "csv": config.csv_path,
        "plots": config.plots_dir,
        "x_axis": config.x_axis,
    }
    buf = _stdio.StringIO()
    parser.write(buf)
    _atomic_write_text(path, buf.getvalue())
