"""Dense feed-forward classifiers with per-layer input capture.

The model is deliberately small: an ordered stack of fully connected
layers, each computing activation(W @ x + b). All computation is done
in float64 even when weights came from float32 files, which keeps the
norm identities used downstream tight. A forward pass records the
vector fed into every layer, not just the final output, because
feature extraction needs those per-layer inputs.

Training is plain mini-batch SGD on cross-entropy with a seeded
shuffle and no momentum, which is enough to produce a well-trained
desk-scale classifier deterministically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, ShapeError

ACTIVATIONS = ("relu", "sigmoid", "softmax", "identity")


def _relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # Split by sign so exp never overflows.
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    ez = np.exp(shifted)
    return ez / ez.sum(axis=-1, keepdims=True)


def apply_activation(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return _relu(z)
    if name == "sigmoid":
        return _sigmoid(z)
    if name == "softmax":
        return _softmax(z)
    if name == "identity":
        return z
    raise InputError(f"unknown activation {name!r}")


def _activation_derivative(name: str, post: np.ndarray, pre: np.ndarray) -> np.ndarray:
    """Derivative of the activation w.r.t. its pre-activation.

    Takes both the stored post-activation and the pre-activation so each
    kind can use whichever is cheaper. relu uses derivative 0 at exactly 0.
    """
    if name == "relu":
        return (pre > 0).astype(np.float64)
    if name == "sigmoid":
        return post * (1.0 - post)
    if name == "identity":
        return np.ones_like(pre)
    raise InputError(f"no derivative rule for activation {name!r}")


@dataclass
class DenseLayer:
    """One fully connected layer: activation(weight @ x + bias).

    weight has shape (n_out, n_in); row j holds the fan-in weights of
    output neuron j. bias has length n_out.
    """

    weight: np.ndarray
    bias: np.ndarray
    activation: str

    def __post_init__(self) -> None:
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2:
            raise ShapeError(f"weight must be 2-D, got shape {self.weight.shape}")
        if self.bias.ndim != 1 or self.bias.shape[0] != self.weight.shape[0]:
            raise ShapeError(
                f"bias of shape {self.bias.shape} does not match weight of shape "
                f"{self.weight.shape} (need one bias per output row)"
            )
        if self.activation not in ACTIVATIONS:
            raise InputError(f"unknown activation {self.activation!r}")
        if not (np.isfinite(self.weight).all() and np.isfinite(self.bias).all()):
            raise InputError("layer parameters must be finite")

    @property
    def n_in(self) -> int:
        return self.weight.shape[1]

    @property
    def n_out(self) -> int:
        return self.weight.shape[0]

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weight.copy(), self.bias.copy(), self.activation)


@dataclass
class Network:
    """An ordered stack of dense layers classifying into class_count classes."""

    layers: list[DenseLayer]
    class_count: int

    def __post_init__(self) -> None:
        if not self.layers:
            raise InputError("network needs at least one layer")
        for k in range(len(self.layers) - 1):
            a, b = self.layers[k], self.layers[k + 1]
            if a.n_out != b.n_in:
                raise ShapeError(
                    f"layer {k} outputs {a.n_out} values but layer {k + 1} "
                    f"expects {b.n_in}"
                )
            if a.activation == "softmax":
                raise InputError("softmax is only allowed on the final layer")
        if self.layers[-1].n_out != self.class_count:
            raise ShapeError(
                f"final layer outputs {self.layers[-1].n_out} values, "
                f"expected class_count={self.class_count}"
            )

    @property
    def input_dim(self) -> int:
        return self.layers[0].n_in

    def copy(self) -> "Network":
        return Network([layer.copy() for layer in self.layers], self.class_count)


@dataclass
class ForwardTrace:
    """Everything a forward pass saw.

    pre_activations[k] is the vector fed into layer k, so
    pre_activations[0] is the raw input and the list has one entry per
    layer. output is the final activation (softmax probabilities for a
    classifier head).
    """

    pre_activations: list[np.ndarray]
    output: np.ndarray


def forward(net: Network, x: np.ndarray) -> ForwardTrace:
    """Run one sample through the network, capturing every layer input."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.input_dim,):
        raise ShapeError(
            f"input of shape {x.shape} does not match network input "
            f"dimension {net.input_dim}"
        )
    if not np.isfinite(x).all():
        raise InputError("input contains non-finite values")
    inputs = []
    h = x
    for layer in net.layers:
        inputs.append(h)
        z = layer.weight @ h + layer.bias
        h = apply_activation(layer.activation, z)
    return ForwardTrace(pre_activations=inputs, output=h)


def forward_batch(net: Network, xs: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Batched forward pass.

    Returns (layer_inputs, outputs) where layer_inputs[k] has shape
    (batch, n_in of layer k) and outputs has shape (batch, class_count).
    """
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != net.input_dim:
        raise ShapeError(
            f"batch of shape {xs.shape} does not match network input "
            f"dimension {net.input_dim}"
        )
    if not np.isfinite(xs).all():
        raise InputError("batch contains non-finite values")
    inputs = []
    h = xs
    for layer in net.layers:
        inputs.append(h)
        z = h @ layer.weight.T + layer.bias
        h = apply_activation(layer.activation, z)
    return inputs, h


def predict(net: Network, x: np.ndarray) -> int:
    """Class index with the largest output; ties go to the lowest index."""
    return int(np.argmax(forward(net, x).output))


def predict_batch(net: Network, xs: np.ndarray) -> np.ndarray:
    _, out = forward_batch(net, xs)
    return np.argmax(out, axis=1)


def accuracy(net: Network, xs: np.ndarray, labels: np.ndarray) -> float:
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise InputError("cannot compute accuracy on an empty dataset")
    if len(labels) != len(xs):
        raise ShapeError(f"{len(xs)} samples but {len(labels)} labels")
    return float(np.mean(predict_batch(net, xs) == labels))


@dataclass
class TrainConfig:
    epochs: int
    batch_size: int = 64
    learning_rate: float = 0.1
    seed: int = 0


def loss_and_gradients(
    net: Network, xs: np.ndarray, labels: np.ndarray
) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    """Mean cross-entropy over the batch and its gradient per layer.

    Requires a softmax final layer; the (softmax, cross-entropy) pair is
    what makes the output-layer gradient the plain difference
    probabilities - onehot.
    """
    if net.layers[-1].activation != "softmax":
        raise InputError("cross-entropy training requires a softmax final layer")
    xs = np.asarray(xs, dtype=np.float64)
    labels = np.asarray(labels)
    batch = len(labels)

    inputs = []
    pres = []
    h = xs
    for layer in net.layers:
        inputs.append(h)
        z = h @ layer.weight.T + layer.bias
        pres.append(z)
        h = apply_activation(layer.activation, z)

    probs = h
    picked = probs[np.arange(batch), labels]
    loss = float(-np.mean(np.log(np.maximum(picked, 1e-300))))

    onehot = np.zeros_like(probs)
    onehot[np.arange(batch), labels] = 1.0
    delta = (probs - onehot) / batch

    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(net.layers)
    for k in range(len(net.layers) - 1, -1, -1):
        grads[k] = (delta.T @ inputs[k], delta.sum(axis=0))
        if k > 0:
            back = delta @ net.layers[k].weight
            post_prev = inputs[k]
            delta = back * _activation_derivative(
                net.layers[k - 1].activation, post_prev, pres[k - 1]
            )
    return loss, grads


def train_sgd(
    net: Network, xs: np.ndarray, labels: np.ndarray, config: TrainConfig
) -> Network:
    """Train a copy of the network; the input network is left untouched.

    Deterministic for a fixed seed: the shuffle order is drawn from a
    seeded generator and batches are visited in order.
    """
    xs = np.asarray(xs, dtype=np.float64)
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise InputError("cannot train on an empty dataset")
    if len(labels) != len(xs):
        raise ShapeError(f"{len(xs)} samples but {len(labels)} labels")
    if labels.min() < 0 or labels.max() >= net.class_count:
        raise InputError(
            f"labels must lie in [0, {net.class_count}), "
            f"got range [{labels.min()}, {labels.max()}]"
        )
    if config.epochs < 0:
        raise InputError("epochs must be >= 0")
    if config.batch_size < 1:
        raise InputError("batch_size must be >= 1")

    out = net.copy()
    rng = np.random.default_rng(config.seed)
    count = len(labels)
    for _ in range(config.epochs):
        order = rng.permutation(count)
        for start in range(0, count, config.batch_size):
            idx = order[start : start + config.batch_size]
            _, grads = loss_and_gradients(out, xs[idx], labels[idx])
            for layer, (gw, gb) in zip(out.layers, grads):
                layer.weight -= config.learning_rate * gw
                layer.bias -= config.learning_rate * gb
    return out


def init_mlp(arch: list[int], hidden_activation: str = "relu", seed: int = 0) -> Network:
    """Build an MLP from layer sizes like [784, 128, 64, 32, 10].

    Hidden layers use He-normal initialization (suits relu), the softmax
    head uses Glorot-uniform. Biases start at zero.
    """
    if len(arch) < 2:
        raise InputError("arch needs at least an input and an output size")
    if any(n < 1 for n in arch):
        raise InputError(f"layer sizes must be positive, got {arch}")
    rng = np.random.default_rng(seed)
    layers = []
    for k in range(len(arch) - 2):
        n_in, n_out = arch[k], arch[k + 1]
        w = rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_out, n_in))
        layers.append(DenseLayer(w, np.zeros(n_out), hidden_activation))
    n_in, n_out = arch[-2], arch[-1]
    bound = np.sqrt(6.0 / (n_in + n_out))
    w = rng.uniform(-bound, bound, size=(n_out, n_in))
    layers.append(DenseLayer(w, np.zeros(n_out), "softmax"))
    return Network(layers, class_count=arch[-1])
