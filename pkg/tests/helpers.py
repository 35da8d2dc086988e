"""Shared test utilities: finite differences and tiny model builders."""

import numpy as np

from privdistill import autodiff as ad
from privdistill.network import ParamSet, xavier_init


def finite_difference(loss_fn, params, eps=1e-6):
    """Central-difference gradients of `loss_fn(params)` w.r.t. every entry.

    `params` maps names to float64 arrays; `loss_fn` must return a plain
    float. Returns a dict of gradient arrays with the same shapes.
    """
    grads = {}
    for name, value in params.items():
        grad = np.zeros_like(value)
        flat = value.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = loss_fn(params)
            flat[i] = orig - eps
            lo = loss_fn(params)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * eps)
        grads[name] = grad
    return grads


def relative_error(a, b, floor=1e-8):
    """Max elementwise |a-b| / max(|a|, |b|, floor)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def backprop_grads(loss_builder, params):
    """Gradients of `loss_builder(pvars)` where pvars wrap `params` as Vars."""
    pvars = {k: ad.Var(v, requires_grad=True) for k, v in params.items()}
    loss = loss_builder(pvars)
    ad.backward(loss)
    return {k: (np.zeros_like(params[k]) if v.grad is None else v.grad) for k, v in pvars.items()}, float(
        loss.value
    )


def small_classifier(dim=4, hidden=5, classes=3, seed=0):
    arch = [("dense", dim, hidden), ("relu",), ("dense", hidden, classes), ("softmax",)]
    return xavier_init(arch, seed)


def uniform_classifier(dim, classes):
    """Zero-weight classifier: uniform softmax output, zero features."""
    arch = [("dense", dim, classes), ("relu",), ("dense", classes, classes), ("softmax",)]
    entries = {
        "W0": np.zeros((dim, classes)),
        "b0": np.zeros(classes),
        "W2": np.zeros((classes, classes)),
        "b2": np.zeros(classes),
    }
    return ParamSet(arch, entries, feature_boundary=2)
