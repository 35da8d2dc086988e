"""Dense feed-forward networks: parameter sets, init, and forward passes.

An architecture is a flat list of layer specs:

    ("dense", fan_in, fan_out)
    ("relu",) | ("sigmoid",) | ("tanh",)
    ("softmax",)

Classifier nets end in a dense+softmax head; the feature tap is the
activation entering that head (the backbone/head split).
"""

import numpy as np

from . import autodiff as ad
from .errors import ConfigurationError, GraphError, ShapeError

_ACTIVATIONS = {"relu": ad.relu, "sigmoid": ad.sigmoid, "tanh": ad.tanh}


def validate_architecture(architecture):
    """Check layer-kind validity and size chaining; return the size chain."""
    if not architecture:
        raise ConfigurationError("empty architecture")
    width = None
    for i, layer in enumerate(architecture):
        kind = layer[0]
        if kind == "dense":
            if len(layer) != 3 or layer[1] < 1 or layer[2] < 1:
                raise ConfigurationError(f"bad dense spec at layer {i}: {layer!r}")
            if width is not None and width != layer[1]:
                raise ConfigurationError(
                    f"layer {i} fan_in {layer[1]} != previous width {width}"
                )
            width = layer[2]
        elif kind in _ACTIVATIONS or kind == "softmax":
            if len(layer) != 1:
                raise ConfigurationError(f"bad layer spec at layer {i}: {layer!r}")
        elif kind == "scale":
            # fixed elementwise multiplier; maps a squashed output onto the
            # data range without trainable parameters
            if len(layer) != 2 or not np.isfinite(layer[1]):
                raise ConfigurationError(f"bad scale spec at layer {i}: {layer!r}")
        else:
            raise ConfigurationError(f"unknown layer kind {kind!r} at layer {i}")
    return width


def head_boundary(architecture):
    """Index of the final dense layer when the net ends dense(+softmax)."""
    idx = len(architecture) - 1
    if architecture[idx][0] == "softmax":
        idx -= 1
    if idx < 0 or architecture[idx][0] != "dense":
        raise ConfigurationError("architecture has no dense head")
    return idx


class ParamSet:
    """Ordered named parameters realizing a dense architecture.

    feature_boundary is the layer index of the head dense layer; the
    activation feeding it is the feature tap, and every parameter of an
    earlier layer belongs to the backbone. It may be None for nets (e.g.
    generators) that have no classification head.
    """

    def __init__(self, architecture, entries, feature_boundary=None):
        validate_architecture(architecture)
        self.architecture = list(architecture)
        self.entries = dict(entries)
        names = list(self.entries)
        if len(set(names)) != len(names):
            raise ConfigurationError("duplicate parameter names")
        if feature_boundary is not None:
            if not (0 <= feature_boundary < len(architecture)):
                raise ConfigurationError("feature_boundary out of range")
            if architecture[feature_boundary][0] != "dense":
                raise ConfigurationError("feature_boundary must index a dense layer")
        self.feature_boundary = feature_boundary
        for i, layer in enumerate(architecture):
            if layer[0] != "dense":
                continue
            w, b = self.entries.get(f"W{i}"), self.entries.get(f"b{i}")
            if w is None or b is None:
                raise ConfigurationError(f"missing parameters for dense layer {i}")
            if w.shape != (layer[1], layer[2]) or b.shape != (layer[2],):
                raise ShapeError(f"parameter shape mismatch at dense layer {i}")

    def names(self):
        return list(self.entries)

    def copy(self):
        return ParamSet(
            self.architecture,
            {k: v.copy() for k, v in self.entries.items()},
            self.feature_boundary,
        )

    def input_dim(self):
        for layer in self.architecture:
            if layer[0] == "dense":
                return layer[1]
        raise ConfigurationError("architecture has no dense layer")

    def output_dim(self):
        return validate_architecture(self.architecture)

    def equal(self, other):
        return (
            self.architecture == other.architecture
            and self.names() == other.names()
            and all(np.array_equal(self.entries[k], other.entries[k]) for k in self.entries)
        )


def xavier_init(architecture, seed, feature_boundary="auto"):
    """Xavier-uniform dense weights, zero biases, deterministic per seed."""
    validate_architecture(architecture)
    rng = np.random.Generator(np.random.PCG64(seed))
    entries = {}
    for i, layer in enumerate(architecture):
        if layer[0] != "dense":
            continue
        fan_in, fan_out = layer[1], layer[2]
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        entries[f"W{i}"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        entries[f"b{i}"] = np.zeros(fan_out)
    if feature_boundary == "auto":
        feature_boundary = (
            head_boundary(architecture) if architecture[-1][0] == "softmax" else None
        )
    return ParamSet(architecture, entries, feature_boundary)


def param_vars(net, requires_grad=True):
    """Wrap every parameter as a graph leaf; frozen nets get constants."""
    return {k: ad.Var(v, requires_grad=requires_grad) for k, v in net.entries.items()}


def run_layers(net, x, pvars=None, stop_at=None):
    """Run the architecture over input Var `x`; returns per-layer activations.

    activations[i] is the output of layer i; activations[-1] the net output.
    `stop_at` truncates after that layer index (exclusive of later layers).
    """
    if pvars is None:
        pvars = param_vars(net, requires_grad=False)
    if not isinstance(x, ad.Var):
        x = ad.Var(x)
    if x.value.ndim != 2 or x.value.shape[1] != net.input_dim():
        raise ShapeError(
            f"batch shape {x.value.shape} incompatible with input dim {net.input_dim()}"
        )
    acts = []
    h = x
    for i, layer in enumerate(net.architecture):
        kind = layer[0]
        if kind == "dense":
            h = ad.matmul(h, pvars[f"W{i}"]) + pvars[f"b{i}"]
        elif kind == "softmax":
            h = ad.softmax_rows(h)
        elif kind == "scale":
            h = ad.mul(h, float(layer[1]))
        else:
            h = _ACTIVATIONS[kind](h)
        acts.append(h)
        if stop_at is not None and i == stop_at:
            break
    return acts


def forward(net, batch, pvars=None):
    """Classifier forward pass -> (features, probs) as graph Vars."""
    if net.feature_boundary is None:
        raise GraphError("net has no feature boundary; not a classifier")
    if net.architecture[-1][0] != "softmax":
        raise GraphError("classifier architecture must end in softmax")
    if not isinstance(batch, ad.Var):
        batch = ad.Var(batch)
    acts = run_layers(net, batch, pvars=pvars)
    fb = net.feature_boundary
    features = batch if fb == 0 else acts[fb - 1]
    probs = acts[-1]
    return features, probs


def predict_classes(net, batch):
    """Argmax class ids; ties broken by lowest class index (numpy argmax)."""
    _, probs = forward(net, batch)
    return np.argmax(probs.value, axis=1)
