"""Shared fixtures: a tiny synthetic setup and a desk-scale cached one.

The tiny bundle (3x3 images, 3 classes, untrained net) exists to
exercise plumbing in milliseconds. The desk bundle is the real thing:
a generated digit corpus, a classifier trained on a 10k subset, and
mean-graph summaries. Building it takes a few minutes, so it is cached
under .testcache/ keyed by the generator source and the training
protocol; changing either invalidates the cache.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from magdiff import datagen
from magdiff.actgraph import MeanGraphSummary, mean_graph_summaries
from magdiff.io import (
    MNIST_FILES,
    load_dataset_dir,
    load_network,
    load_summaries,
    save_network,
    save_summaries,
    write_idx_images,
    write_idx_labels,
)
from magdiff.network import Network, TrainConfig, accuracy, init_mlp, train_sgd

ROOT = Path(__file__).resolve().parent.parent
CACHE_ROOT = ROOT / ".testcache"

# Desk protocol. The classifier sees a 10k subset of the train split.
TRAIN_COUNT = 12_000
TEST_COUNT = 4_000
CORPUS_SEED = 0
TRAIN_SUBSET = 10_000
ARCH = [784, 128, 64, 32, 10]
INIT_SEED = 1
SCHEDULE = ((10, 0.1), (10, 0.05))  # (epochs, learning rate) phases
BATCH_SIZE = 64
TRAIN_SEED = 1
DESK_LAYER = -4
HEAD_LAYER = -1
SUBSET_SIZE = 1000
SUMMARY_SEED = 7


@dataclass
class Bundle:
    root: Path
    data_dir: Path
    manifest_path: Path
    summaries_path: Path
    net: Network
    summaries: list[MeanGraphSummary]
    train_flat: np.ndarray
    train_labels: np.ndarray
    test_images: np.ndarray
    test_flat: np.ndarray
    test_labels: np.ndarray


@dataclass
class DeskBundle(Bundle):
    summaries_head_path: Path
    summaries_head: list[MeanGraphSummary]
    test_accuracy: float


def _desk_key() -> str:
    source = Path(datagen.__file__).read_bytes()
    protocol = repr(
        (
            TRAIN_COUNT,
            TEST_COUNT,
            CORPUS_SEED,
            TRAIN_SUBSET,
            ARCH,
            INIT_SEED,
            SCHEDULE,
            BATCH_SIZE,
            TRAIN_SEED,
            DESK_LAYER,
            HEAD_LAYER,
            SUBSET_SIZE,
            SUMMARY_SEED,
        )
    )
    return hashlib.sha256(source + protocol.encode("utf-8")).hexdigest()[:12]


def ensure_desk() -> Path:
    """Build (or reuse) the cached corpus, model and summaries directory."""
    root = CACHE_ROOT / f"desk_{_desk_key()}"
    marker = root / "DONE"
    if marker.exists():
        return root
    root.mkdir(parents=True, exist_ok=True)
    data_dir = root / "data"
    datagen.make_corpus(
        data_dir, train_count=TRAIN_COUNT, test_count=TEST_COUNT, seed=CORPUS_SEED
    )
    train_x, train_y, test_x, test_y = load_dataset_dir(data_dir)
    flat = train_x[:TRAIN_SUBSET].reshape(TRAIN_SUBSET, -1)
    labels = train_y[:TRAIN_SUBSET]
    net = init_mlp(ARCH, seed=INIT_SEED)
    for epochs, rate in SCHEDULE:
        net = train_sgd(
            net,
            flat,
            labels,
            TrainConfig(
                epochs=epochs,
                batch_size=BATCH_SIZE,
                learning_rate=rate,
                seed=TRAIN_SEED,
            ),
        )
    test_accuracy = accuracy(net, test_x.reshape(len(test_x), -1), test_y)
    save_network(
        net,
        root / "model",
        metadata={
            "arch": "-".join(str(d) for d in ARCH),
            "train_subset": TRAIN_SUBSET,
            "schedule": [list(phase) for phase in SCHEDULE],
            "batch_size": BATCH_SIZE,
            "init_seed": INIT_SEED,
            "train_seed": TRAIN_SEED,
            "test_accuracy": test_accuracy,
        },
    )
    for name, layer in (
        ("summaries_desk.json", DESK_LAYER),
        ("summaries_head.json", HEAD_LAYER),
    ):
        summaries = mean_graph_summaries(
            net, flat, labels, layer_index=layer, subset_size=SUBSET_SIZE, seed=SUMMARY_SEED
        )
        save_summaries(
            root / name,
            summaries,
            meta={"layer": layer, "subset_size": SUBSET_SIZE, "seed": SUMMARY_SEED},
        )
    marker.write_text("ok\n", "utf-8")
    return root


@pytest.fixture(scope="session")
def desk() -> DeskBundle:
    root = ensure_desk()
    data_dir = root / "data"
    manifest_path = root / "model" / "manifest.json"
    net, meta = load_network(manifest_path)
    summaries, _ = load_summaries(root / "summaries_desk.json")
    summaries_head, _ = load_summaries(root / "summaries_head.json")
    train_x, train_y, test_x, test_y = load_dataset_dir(data_dir)
    return DeskBundle(
        root=root,
        data_dir=data_dir,
        manifest_path=manifest_path,
        summaries_path=root / "summaries_desk.json",
        net=net,
        summaries=summaries,
        train_flat=train_x[:TRAIN_SUBSET].reshape(TRAIN_SUBSET, -1),
        train_labels=train_y[:TRAIN_SUBSET],
        test_images=test_x,
        test_flat=test_x.reshape(len(test_x), -1),
        test_labels=test_y,
        summaries_head_path=root / "summaries_head.json",
        summaries_head=summaries_head,
        test_accuracy=float(meta["test_accuracy"]),
    )


@pytest.fixture(scope="session")
def tiny(tmp_path_factory) -> Bundle:
    """3-class, 3x3-pixel bundle with an untrained net; builds in well under a second."""
    root = tmp_path_factory.mktemp("tiny")
    rng = np.random.default_rng(123)
    train_images = rng.integers(0, 256, size=(60, 3, 3), dtype=np.uint8)
    train_labels = (np.arange(60) % 3).astype(np.int64)
    test_images = rng.integers(0, 256, size=(30, 3, 3), dtype=np.uint8)
    test_labels = (np.arange(30) % 3).astype(np.int64)
    data_dir = root / "data"
    data_dir.mkdir()
    write_idx_images(data_dir / MNIST_FILES["train_images"], train_images)
    write_idx_labels(data_dir / MNIST_FILES["train_labels"], train_labels)
    write_idx_images(data_dir / MNIST_FILES["test_images"], test_images)
    write_idx_labels(data_dir / MNIST_FILES["test_labels"], test_labels)

    net = init_mlp([9, 6, 3], seed=5)
    manifest_path = save_network(net, root / "model", metadata={"arch": "9-6-3"})
    train_x, train_y, test_x, test_y = load_dataset_dir(data_dir)
    train_flat = train_x.reshape(len(train_x), -1)
    summaries = mean_graph_summaries(
        net, train_flat, train_y, layer_index=-1, subset_size=10, seed=3
    )
    summaries_path = root / "summaries.json"
    save_summaries(summaries_path, summaries, meta={"layer": -1})
    return Bundle(
        root=root,
        data_dir=data_dir,
        manifest_path=manifest_path,
        summaries_path=summaries_path,
        net=net,
        summaries=summaries,
        train_flat=train_flat,
        train_labels=train_y,
        test_images=test_x,
        test_flat=test_x.reshape(len(test_x), -1),
        test_labels=test_y,
    )
