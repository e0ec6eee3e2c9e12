"""Per-sample feature vectors for the shift test.

Two kinds are supported. The magdiff kind maps each sample to the
D-vector of distances between its activation graph at a chosen layer
and the D per-class mean graphs; the confidence_vector kind is the
plain softmax output. Either way the result is a (samples x D) matrix
whose columns feed coordinate-wise two-sample tests.

Everything here is batched: the spectral norm in particular runs one
power iteration over all samples of a class simultaneously, because
the per-sample matrices only differ by a diagonal scaling of the same
weight matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .actgraph import NORM_KINDS, MeanGraphSummary, column_norms, resolve_layer_index
from .errors import InputError, ShapeError
from .network import Network, forward_batch

FEATURE_KIND_NAMES = ("magdiff", "confidence_vector")


@dataclass(frozen=True)
class FeatureKind:
    """What to extract: magdiff(layer, norm) or confidence_vector."""

    kind: str
    layer: int | None = None
    norm: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in FEATURE_KIND_NAMES:
            raise InputError(
                f"unknown feature kind {self.kind!r}, expected one of {FEATURE_KIND_NAMES}"
            )
        if self.kind == "magdiff":
            if self.layer is None or self.norm is None:
                raise InputError("magdiff features need both a layer and a norm")
            if self.norm not in NORM_KINDS:
                raise InputError(
                    f"unknown norm kind {self.norm!r}, expected one of {NORM_KINDS}"
                )
        elif self.layer is not None or self.norm is not None:
            raise InputError("confidence_vector features take no layer or norm")

    @staticmethod
    def magdiff(layer: int = -1, norm: str = "frobenius") -> "FeatureKind":
        return FeatureKind("magdiff", layer=layer, norm=norm)

    @staticmethod
    def confidence_vector() -> "FeatureKind":
        return FeatureKind("confidence_vector")

    def label(self) -> str:
        """Short human-readable tag used in plots and logs."""
        if self.kind == "confidence_vector":
            return "cv"
        return f"magdiff[layer={self.layer},norm={self.norm}]"


@dataclass
class FeatureMatrix:
    """(samples x class_count) feature values plus provenance."""

    kind: FeatureKind
    values: np.ndarray
    source: str = "clean"

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ShapeError("feature values must form a 2-D matrix")
        if not np.isfinite(self.values).all():
            raise InputError("feature values must be finite")
        if self.kind.kind == "magdiff" and self.values.size and self.values.min() < 0:
            raise InputError("magdiff features are norms and cannot be negative")
        if self.kind.kind == "confidence_vector" and self.values.size:
            sums = self.values.sum(axis=1)
            if np.max(np.abs(sums - 1.0)) > 1e-9:
                raise InputError("confidence vectors must sum to 1 per row")

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def class_count(self) -> int:
        return self.values.shape[1]


def _batched_scaled_spectral(
    weight: np.ndarray, diffs: np.ndarray, tol: float = 1e-8, max_iter: int = 10_000
) -> np.ndarray:
    """Largest singular value of weight * diag(diffs[s]) for every row s.

    Same scheme as actgraph.spectral_norm (all-ones start, relative
    tolerance on the estimate, one basis-vector restart for annihilated
    starts), but iterating all samples at once: for these matrices both
    power-iteration products reduce to dense matmuls against the shared
    weight matrix.
    """
    count, n_in = diffs.shape
    # Rows whose scaled matrix is exactly zero: zero difference on every
    # input that has any outgoing weight.
    active_cols = column_norms(weight) > 0.0
    alive = (diffs[:, active_cols] != 0.0).any(axis=1)
    sigma = np.zeros(count)
    if not alive.any():
        return sigma
    v = np.full((count, n_in), 1.0 / np.sqrt(n_in))
    restarted = np.zeros(count, dtype=bool)
    done = ~alive
    last = np.zeros(count)
    for _ in range(max_iter):
        wv = (v * diffs) @ weight.T
        estimate = np.linalg.norm(wv, axis=1)

        dead = ~done & (estimate < 1e-300)
        if dead.any():
            fresh = dead & ~restarted
            again = dead & restarted
            if fresh.any():
                v[fresh] = 0.0
                v[fresh, 0] = 1.0
                restarted[fresh] = True
                last[fresh] = 0.0
            # Dying a second time means the matrix really acts as zero.
            sigma[again] = 0.0
            done |= again

        ok = ~done & ~dead
        converged = ok & (last > 0.0) & (np.abs(estimate - last) <= tol * estimate)
        sigma[converged] = estimate[converged]
        done |= converged
        still = ok & ~converged
        last[still] = estimate[still]
        sigma[still] = estimate[still]
        if done.all():
            break

        u = (wv @ weight) * diffs
        norms = np.linalg.norm(u, axis=1)
        # Underflow guard mirroring the single-matrix path.
        starving = still & (norms == 0.0)
        if starving.any():
            done |= starving
        norms[norms == 0.0] = 1.0
        v = np.where(still[:, None], u / norms[:, None], v)
    return sigma


def extract_features(
    net: Network,
    summaries: list[MeanGraphSummary] | None,
    xs: np.ndarray,
    kind: FeatureKind,
    source: str = "clean",
) -> FeatureMatrix:
    """Feature matrix for a batch of samples.

    For magdiff, column i is the distance to summaries[i]; passing the
    summaries in a permuted order permutes the columns the same way.
    """
    if kind.kind == "confidence_vector":
        _, out = forward_batch(net, xs)
        return FeatureMatrix(kind, out, source)

    if not summaries:
        raise InputError("magdiff features need class summaries")
    if len(summaries) != net.class_count:
        raise InputError(
            f"need one summary per class ({net.class_count}), got {len(summaries)}"
        )
    if sorted(s.class_index for s in summaries) != list(range(net.class_count)):
        raise InputError("summaries must cover every class exactly once")
    layers = {s.layer_index for s in summaries}
    if len(layers) != 1:
        raise InputError(f"summaries span multiple layers: {sorted(layers)}")
    k = layers.pop()
    if resolve_layer_index(net, kind.layer) != k:
        raise InputError(
            f"feature kind asks for layer {kind.layer} but summaries were "
            f"built at layer {k}"
        )

    inputs, _ = forward_batch(net, xs)
    layer_inputs = inputs[k]
    weight = net.layers[k].weight
    if summaries[0].mean_pre_activation.shape[0] != weight.shape[1]:
        raise ShapeError("summary mean length does not match layer input dimension")

    values = np.empty((layer_inputs.shape[0], net.class_count))
    if kind.norm == "frobenius":
        csq = column_norms(weight) ** 2
        for i, summary in enumerate(summaries):
            d = layer_inputs - summary.mean_pre_activation
            values[:, i] = np.sqrt((d * d) @ csq)
    elif kind.norm == "sup_operator":
        abs_wt = np.abs(weight).T
        for i, summary in enumerate(summaries):
            d = layer_inputs - summary.mean_pre_activation
            values[:, i] = (np.abs(d) @ abs_wt).max(axis=1)
    else:
        for i, summary in enumerate(summaries):
            d = layer_inputs - summary.mean_pre_activation
            values[:, i] = _batched_scaled_spectral(weight, d)
    return FeatureMatrix(kind, values, source)
