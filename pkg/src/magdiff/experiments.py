"""Experiment orchestration: configs in, report rows out.

This module glues the rest of the package together. A grid run loads
the model, the class summaries and the evaluation pool once, builds
each corrupted pool once, extracts features once per (feature, pool)
pair, and only then sweeps the per-cell bootstrap estimates.

Cell seeds are derived by hashing the cell coordinates rather than
drawn sequentially, so any cell can be recomputed in isolation (the
service endpoint does exactly that) and still match the row a full
grid run produces.
"""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .actgraph import MeanGraphSummary, mean_graph_summaries, resolve_layer_index
from .errors import ConfigError, ShapeError
from .features import FeatureKind, FeatureMatrix, extract_features
from .io import (
    ExperimentConfig,
    ReportRow,
    emit_power_plot,
    load_dataset_dir,
    load_network,
    load_summaries,
    save_network,
    save_summaries,
    write_report_csv,
)
from .network import Network, TrainConfig, accuracy, init_mlp, train_sgd
from .shifts import ShiftSpec, apply_shift, intensity_ladder
from .stats import TestOutcome, bonferroni_test, estimate_power

__all__ = [
    "GridCell",
    "GridRunner",
    "TrainingResult",
    "cell_seed",
    "derive_seed",
    "detect_shift",
    "expand_grid",
    "flatten_images",
    "parse_arch",
    "run_grid",
    "run_summaries",
    "run_training",
    "shift_seed",
    "thread_count",
    "write_grid_outputs",
]


def derive_seed(*parts) -> int:
    """Stable 63-bit seed hashed from the identifying parts of a task."""
    text = "|".join(str(part) for part in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def _params_token(params: dict) -> str:
    return ",".join(f"{name}={params[name]!r}" for name in sorted(params))


def shift_seed(base_seed: int, kind: str, params: dict, delta: float) -> int:
    """Seed for building one corrupted pool.

    Depends only on what is corrupted and how, never on a cell's sample
    size or mode, so every cell sharing a pool sees the same corruption.
    """
    return derive_seed(
        "shift", base_seed, kind, _params_token(params), repr(float(delta))
    )


def cell_seed(
    base_seed: int,
    feature: FeatureKind,
    kind: str,
    params: dict,
    delta: float,
    sample_size: int,
    mode: str,
) -> int:
    """Bootstrap seed for one grid cell; every coordinate participates."""
    return derive_seed(
        "cell",
        base_seed,
        feature.label(),
        kind,
        _params_token(params),
        repr(float(delta)),
        sample_size,
        mode,
    )


def parse_arch(text: str) -> list[int]:
    """Turn a dash-joined width list like "784-128-64-32-10" into ints."""
    try:
        dims = [int(part) for part in text.split("-")]
    except ValueError:
        dims = []
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ConfigError(
            f"bad architecture {text!r}, expected dash-joined widths like 784-64-10"
        )
    return dims


def flatten_images(xs: np.ndarray) -> np.ndarray:
    """Image stacks become row vectors; already-flat batches pass through."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim == 3:
        return xs.reshape(len(xs), -1)
    if xs.ndim != 2:
        raise ShapeError(f"expected (count, height, width) images, got {xs.shape}")
    return xs


@dataclass
class TrainingResult:
    net: Network
    test_accuracy: float
    manifest_path: Path


def run_training(
    data_dir,
    out_dir,
    arch: str = "784-128-64-32-10",
    epochs: int = 10,
    learning_rate: float = 0.1,
    batch_size: int = 64,
    seed: int = 0,
    train_limit: int = 0,
    hidden_activation: str = "relu",
) -> TrainingResult:
    """Train an MLP on a dataset directory and save it alongside its recipe.

    train_limit > 0 restricts training to the first train_limit samples;
    epochs = 0 saves the freshly initialized network unchanged.
    """
    train_x, train_y, test_x, test_y = load_dataset_dir(data_dir)
    if train_limit:
        train_x, train_y = train_x[:train_limit], train_y[:train_limit]
    dims = parse_arch(arch) if isinstance(arch, str) else [int(d) for d in arch]
    flat = flatten_images(train_x)
    if flat.shape[1] != dims[0]:
        raise ConfigError(
            f"architecture expects {dims[0]} inputs but images flatten to "
            f"{flat.shape[1]} values"
        )
    net = init_mlp(dims, hidden_activation=hidden_activation, seed=seed)
    net = train_sgd(
        net,
        flat,
        train_y,
        TrainConfig(
            epochs=epochs, batch_size=batch_size, learning_rate=learning_rate, seed=seed
        ),
    )
    test_accuracy = accuracy(net, flatten_images(test_x), test_y)
    manifest_path = save_network(
        net,
        out_dir,
        metadata={
            "arch": "-".join(str(d) for d in dims),
            "hidden_activation": hidden_activation,
            "epochs": epochs,
            "learning_rate": learning_rate,
            "batch_size": batch_size,
            "seed": seed,
            "train_count": int(len(train_y)),
            "test_accuracy": test_accuracy,
        },
    )
    return TrainingResult(
        net=net, test_accuracy=test_accuracy, manifest_path=manifest_path
    )


def run_summaries(
    manifest_path,
    data_dir,
    out_path,
    layer: int = -1,
    subset_size: int = 1000,
    seed: int = 0,
    train_limit: int = 0,
) -> list[MeanGraphSummary]:
    """Build per-class mean-graph summaries from the train split and save them."""
    net, _ = load_network(manifest_path)
    train_x, train_y, _, _ = load_dataset_dir(data_dir)
    if train_limit:
        train_x, train_y = train_x[:train_limit], train_y[:train_limit]
    summaries = mean_graph_summaries(
        net,
        flatten_images(train_x),
        train_y,
        layer_index=layer,
        subset_size=subset_size,
        seed=seed,
    )
    save_summaries(
        out_path,
        summaries,
        meta={
            "model": str(manifest_path),
            "data_dir": str(data_dir),
            "requested_layer": layer,
            "subset_size": subset_size,
            "seed": seed,
        },
    )
    return summaries


def detect_shift(
    net: Network,
    summaries: list[MeanGraphSummary] | None,
    clean_xs: np.ndarray,
    candidate_xs: np.ndarray,
    kind: FeatureKind,
    alpha: float = 0.05,
) -> TestOutcome:
    """Bonferroni verdict comparing two image pools under one feature."""
    clean = extract_features(net, summaries, flatten_images(clean_xs), kind, "clean")
    candidate = extract_features(
        net, summaries, flatten_images(candidate_xs), kind, "candidate"
    )
    return bonferroni_test(clean, candidate, alpha)


@dataclass(frozen=True)
class GridCell:
    feature: FeatureKind
    shift_kind: str
    level: str
    delta: float
    sample_size: int
    mode: str


def expand_grid(config: ExperimentConfig) -> list[GridCell]:
    """Cartesian cell list, ordered feature > shift > level > delta > m > mode."""
    cells = []
    for feature in config.features:
        for kind in config.shift_kinds:
            for level in config.levels:
                for delta in config.deltas:
                    for m in config.sample_sizes:
                        for mode in config.modes:
                            cells.append(
                                GridCell(feature, kind, level, delta, m, mode)
                            )
    return cells


class GridRunner:
    """Loads every grid input once and serves per-cell estimates.

    Corrupted pools and feature matrices are cached across cells; warm()
    fills the caches so that run_cell becomes read-only and safe to call
    from worker threads.
    """

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.net, _ = load_network(config.model_manifest)
        self.summaries, _ = load_summaries(config.summaries_path)
        _, _, test_x, _ = load_dataset_dir(config.data_dir)
        self.images = test_x
        self.flat = flatten_images(test_x)
        summary_layer = self.summaries[0].layer_index
        for feature in config.features:
            if feature.kind != "magdiff":
                continue
            if resolve_layer_index(self.net, feature.layer) != summary_layer:
                raise ConfigError(
                    f"grid feature {feature.label()} needs layer "
                    f"{feature.layer} but the summaries file holds layer "
                    f"{summary_layer}; build one summaries file per layer"
                )
        self._clean_features: dict[FeatureKind, FeatureMatrix] = {}
        self._pools: dict[tuple, np.ndarray] = {}
        self._shifted_features: dict[tuple, FeatureMatrix] = {}

    def clean_features(self, feature: FeatureKind) -> FeatureMatrix:
        if feature not in self._clean_features:
            self._clean_features[feature] = extract_features(
                self.net, self.summaries, self.flat, feature, "clean"
            )
        return self._clean_features[feature]

    def shifted_features(
        self, feature: FeatureKind, kind: str, level: str, delta: float
    ) -> FeatureMatrix:
        pool_key = (kind, level, delta)
        if pool_key not in self._pools:
            params = intensity_ladder(kind, level, self.config.ladders)
            spec = ShiftSpec(
                kind=kind,
                delta=delta,
                seed=shift_seed(self.config.seed, kind, params, delta),
                level=level,
            )
            self._pools[pool_key] = apply_shift(
                self.images, spec, self.config.ladders or None
            )
        feature_key = (feature, pool_key)
        if feature_key not in self._shifted_features:
            self._shifted_features[feature_key] = extract_features(
                self.net,
                self.summaries,
                flatten_images(self._pools[pool_key]),
                feature,
                f"{kind}:{level}:delta={delta!r}",
            )
        return self._shifted_features[feature_key]

    def warm(self, cells: list[GridCell]) -> None:
        for cell in cells:
            self.clean_features(cell.feature)
            if cell.mode == "power":
                self.shifted_features(
                    cell.feature, cell.shift_kind, cell.level, cell.delta
                )

    def run_cell(self, cell: GridCell) -> ReportRow:
        params = intensity_ladder(cell.shift_kind, cell.level, self.config.ladders)
        seed = cell_seed(
            self.config.seed,
            cell.feature,
            cell.shift_kind,
            params,
            cell.delta,
            cell.sample_size,
            cell.mode,
        )
        clean = self.clean_features(cell.feature)
        shifted = None
        if cell.mode == "power":
            shifted = self.shifted_features(
                cell.feature, cell.shift_kind, cell.level, cell.delta
            )
        report = estimate_power(
            clean,
            shifted,
            m=cell.sample_size,
            repetitions=self.config.repetitions,
            alpha=self.config.alpha,
            seed=seed,
            mode=cell.mode,
        )
        return ReportRow(
            feature=cell.feature.kind,
            layer=cell.feature.layer,
            norm=cell.feature.norm,
            shift=cell.shift_kind,
            intensity=cell.level,
            delta=cell.delta,
            sample_size=cell.sample_size,
            repetitions=self.config.repetitions,
            mode=cell.mode,
            estimate=report.estimate,
            ci_half_width=report.half_width,
            seed=seed,
        )


def thread_count() -> int:
    """Grid worker count: MAGDIFF_THREADS when set, else a small default."""
    raw = os.environ.get("MAGDIFF_THREADS", "").strip()
    if raw:
        try:
            workers = int(raw)
        except ValueError:
            raise ConfigError(
                f"MAGDIFF_THREADS must be an integer, got {raw!r}"
            ) from None
        if workers < 1:
            raise ConfigError(f"MAGDIFF_THREADS must be >= 1, got {workers}")
        return workers
    return min(4, os.cpu_count() or 1)


def run_grid(config: ExperimentConfig) -> list[ReportRow]:
    """Every grid cell's estimate, in grid order regardless of worker count."""
    runner = GridRunner(config)
    cells = expand_grid(config)
    runner.warm(cells)
    workers = thread_count()
    if workers == 1 or len(cells) <= 1:
        return [runner.run_cell(cell) for cell in cells]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(runner.run_cell, cells))


def write_grid_outputs(
    config: ExperimentConfig, rows: list[ReportRow]
) -> tuple[Path, list[Path]]:
    """Write the CSV report and one SVG per shift kind; returns the paths."""
    csv_path = Path(config.csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    write_report_csv(csv_path, rows)
    plots_dir = Path(config.plots_dir)
    plot_paths = []
    for kind in dict.fromkeys(row.shift for row in rows):
        plots_dir.mkdir(parents=True, exist_ok=True)
        path = plots_dir / f"{kind}_{config.x_axis}.svg"
        emit_power_plot([row for row in rows if row.shift == kind], config.x_axis, path)
        plot_paths.append(path)
    return csv_path, plot_paths
