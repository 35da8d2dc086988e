"""Adam and SGD parameter updates with decay schedules."""

import numpy as np

from .errors import ConfigurationError, ShapeError, TrainingError
from .network import ParamSet


def check_gradmap(net, grads):
    if set(grads) != set(net.entries):
        raise ShapeError("gradient map keys differ from parameter names")
    for k, g in grads.items():
        if g.shape != net.entries[k].shape:
            raise ShapeError(f"gradient shape mismatch for {k!r}")


def _guard_finite(entries):
    for k, v in entries.items():
        if not np.all(np.isfinite(v)):
            raise TrainingError(f"non-finite parameter {k!r} after update")


class AdamState:
    """First/second moment accumulators and step counter."""

    beta1 = 0.9
    beta2 = 0.999
    eps = 1e-8

    def __init__(self, net):
        self.m = {k: np.zeros_like(v) for k, v in net.entries.items()}
        self.v = {k: np.zeros_like(v) for k, v in net.entries.items()}
        self.t = 0


def adam_update(net, grads, state, lr):
    """One Adam step; returns the updated ParamSet, advancing `state`."""
    if lr <= 0:
        raise ConfigurationError("learning rate must be positive")
    check_gradmap(net, grads)
    state.t += 1
    b1c = 1.0 - AdamState.beta1 ** state.t
    b2c = 1.0 - AdamState.beta2 ** state.t
    new_entries = {}
    for k, w in net.entries.items():
        g = grads[k]
        state.m[k] = AdamState.beta1 * state.m[k] + (1 - AdamState.beta1) * g
        state.v[k] = AdamState.beta2 * state.v[k] + (1 - AdamState.beta2) * g * g
        m_hat = state.m[k] / b1c
        v_hat = state.v[k] / b2c
        new_entries[k] = w - lr * m_hat / (np.sqrt(v_hat) + AdamState.eps)
    _guard_finite(new_entries)
    return ParamSet(net.architecture, new_entries, net.feature_boundary)


def decayed_lr(lr0, schedule, round_index, total_rounds):
    """lr at a given round under {constant, linear, step:<every>:<factor>}."""
    if schedule in (None, "constant"):
        return lr0
    if schedule == "linear":
        if total_rounds <= 0:
            return lr0
        return lr0 * (1.0 - round_index / total_rounds)
    if isinstance(schedule, str) and schedule.startswith("step:"):
        try:
            _, every, factor = schedule.split(":")
            every, factor = int(every), float(factor)
        except ValueError as exc:
            raise ConfigurationError(f"bad step schedule {schedule!r}") from exc
        if every < 1:
            raise ConfigurationError("step schedule period must be >= 1")
        return lr0 * factor ** (round_index // every)
    raise ConfigurationError(f"unknown lr schedule {schedule!r}")


def sgd_update(net, grads, lr, schedule=None, round_index=0, total_rounds=0):
    """Plain gradient descent step with optional decay schedule."""
    if lr < 0:
        raise ConfigurationError("learning rate must be non-negative")
    check_gradmap(net, grads)
    step = decayed_lr(lr, schedule, round_index, total_rounds)
    new_entries = {k: w - step * grads[k] for k, w in net.entries.items()}
    _guard_finite(new_entries)
    return ParamSet(net.architecture, new_entries, net.feature_boundary)
