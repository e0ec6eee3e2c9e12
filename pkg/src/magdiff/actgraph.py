"""Activation graphs, per-class mean summaries, and difference norms.

A dense layer with weight W (shape n_out x n_in) and input x induces a
bipartite weighted graph whose edge (i, j) carries W(j, i) * x(i). As a
matrix that graph has shape (n_in, n_out). Because the graph is linear
in x, the mean graph over a set of samples is fully described by the
mean of their layer inputs, so summaries store one vector per class
instead of a full matrix.

For a sample with layer input x and a class summary with mean mu, the
difference graph is W * diag(d) with d = x - mu (up to transposition,
which the Frobenius and spectral norms do not see). Its Frobenius norm
collapses to sqrt(sum_i d(i)^2 * c(i)^2) where c(i) is the Euclidean
norm of weight column i, making per-sample extraction O(n_in) once the
column norms are precomputed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError, ShapeError
from .network import ForwardTrace, Network, forward_batch

NORM_KINDS = ("frobenius", "spectral", "sup_operator")


def resolve_layer_index(net: Network, layer_index: int) -> int:
    """Canonical non-negative layer index.

    Negative values count dense layers from the output, so -1 is the
    final layer, -2 the one before it, and so on.
    """
    count = len(net.layers)
    if -count <= layer_index < count:
        return layer_index % count
    raise InputError(
        f"layer index {layer_index} out of range for a {count}-layer network"
    )


@dataclass
class ActivationGraph:
    """Materialized activation graph of one sample at one layer.

    entries[i, j] = weight(j, i) * layer_input(i), shape (n_in, n_out).
    Kept around for oracles and inspection; production paths use the
    collapsed forms below.
    """

    layer_index: int
    entries: np.ndarray


@dataclass
class MeanGraphSummary:
    """Per-class mean activation graph, stored as the mean layer input."""

    class_index: int
    layer_index: int
    mean_pre_activation: np.ndarray
    sample_count: int

    def __post_init__(self) -> None:
        self.mean_pre_activation = np.asarray(self.mean_pre_activation, dtype=np.float64)
        if self.mean_pre_activation.ndim != 1:
            raise ShapeError("mean_pre_activation must be a vector")
        if self.sample_count < 1:
            raise InputError("summary needs at least one contributing sample")


def activation_graph(net: Network, trace: ForwardTrace, layer_index: int) -> ActivationGraph:
    """Materialize the graph matrix for one layer of one forward trace.

    The bias never enters: the graph weighs existing connections by the
    layer input only.
    """
    k = resolve_layer_index(net, layer_index)
    x = trace.pre_activations[k]
    w = net.layers[k].weight
    if x.shape[0] != w.shape[1]:
        raise ShapeError(
            f"trace layer input has length {x.shape[0]}, layer expects {w.shape[1]}"
        )
    # Each entry is the single product weight(j, i) * x(i).
    entries = w.T * x[:, None]
    return ActivationGraph(layer_index=k, entries=entries)


def mean_graph_summaries(
    net: Network,
    xs: np.ndarray,
    labels: np.ndarray,
    layer_index: int = -1,
    subset_size: int = 1000,
    seed: int = 0,
) -> list[MeanGraphSummary]:
    """One summary per class from labeled training samples.

    For each class in order, draws min(subset_size, class population)
    samples without replacement from a generator seeded once, then
    averages their layer inputs. The per-class draws consume the same
    generator sequentially, so the full summary set is reproducible from
    the single seed.
    """
    k = resolve_layer_index(net, layer_index)
    xs = np.asarray(xs, dtype=np.float64)
    labels = np.asarray(labels)
    if len(xs) != len(labels):
        raise ShapeError(f"{len(xs)} samples but {len(labels)} labels")
    if subset_size < 1:
        raise InputError("subset_size must be >= 1")
    rng = np.random.default_rng(seed)
    summaries = []
    for cls in range(net.class_count):
        members = np.flatnonzero(labels == cls)
        if members.size == 0:
            raise ConfigError(f"class {cls} has no training samples")
        take = min(subset_size, members.size)
        chosen = rng.choice(members, size=take, replace=False)
        inputs, _ = forward_batch(net, xs[chosen])
        mu = inputs[k].mean(axis=0)
        summaries.append(
            MeanGraphSummary(
                class_index=cls,
                layer_index=k,
                mean_pre_activation=mu,
                sample_count=take,
            )
        )
    return summaries


def column_norms(weight: np.ndarray) -> np.ndarray:
    """Euclidean norm of every weight column (index = input neuron)."""
    return np.sqrt(np.sum(weight * weight, axis=0))


def spectral_norm(matrix: np.ndarray, tol: float = 1e-8, max_iter: int = 10_000) -> float:
    """Largest singular value by power iteration.

    Deterministic: starts from the normalized all-ones vector and stops
    when the singular-value estimate changes by at most tol relative, or
    at max_iter. A start vector that happens to be annihilated by the
    matrix is restarted once from the first standard basis vector; a
    zero matrix returns 0 without iterating.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"matrix must be 2-D, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise InputError("matrix entries must be finite")
    if not m.any():
        return 0.0
    v = np.ones(m.shape[1]) / np.sqrt(m.shape[1])
    sigma = 0.0
    restarted = False
    for _ in range(max_iter):
        w = m @ v
        estimate = float(np.linalg.norm(w))
        if estimate < 1e-300:
            if restarted:
                return 0.0
            v = np.zeros(m.shape[1])
            v[0] = 1.0
            restarted = True
            sigma = 0.0
            continue
        if sigma > 0.0 and abs(estimate - sigma) <= tol * estimate:
            return estimate
        sigma = estimate
        u = m.T @ w
        norm_u = np.linalg.norm(u)
        if norm_u == 0.0:
            # Underflow killed the back-projection; the current estimate
            # is the best information left.
            return estimate
        v = u / norm_u
    return sigma


def diff_norm_from_parts(weight: np.ndarray, d: np.ndarray, norm: str) -> float:
    """Norm of W * diag(d) without forming the matrix when avoidable.

    frobenius: collapsed form sqrt(sum_i d(i)^2 * c(i)^2).
    spectral: power iteration on the materialized scaled matrix.
    sup_operator: max over output rows j of sum_i |W(j, i) * d(i)|.
    """
    if norm == "frobenius":
        c = column_norms(weight)
        return float(np.sqrt(np.sum(d * d * c * c)))
    if norm == "spectral":
        return spectral_norm(weight * d[None, :])
    if norm == "sup_operator":
        return float(np.max(np.sum(np.abs(weight * d[None, :]), axis=1)))
    raise InputError(f"unknown norm kind {norm!r}, expected one of {NORM_KINDS}")


def graph_diff_norm(
    net: Network, trace: ForwardTrace, summary: MeanGraphSummary, norm: str
) -> float:
    """Distance between a sample's activation graph and a class mean graph."""
    k = summary.layer_index
    if not 0 <= k < len(net.layers):
        raise InputError(f"summary layer index {k} invalid for this network")
    x = trace.pre_activations[k]
    mu = summary.mean_pre_activation
    if x.shape != mu.shape:
        raise ShapeError(
            f"trace layer input has shape {x.shape} but summary mean has {mu.shape}"
        )
    return diff_norm_from_parts(net.layers[k].weight, x - mu, norm)
