"""Model-inversion probe: gradient ascent on a class confidence.

Reconstructs an input that maximizes ln p(target | x) - l2_weight*||x||^2
against a released classifier. Evaluation-only; never feeds training.
"""

import numpy as np

from . import autodiff as ad
from .errors import ConfigurationError
from .network import forward, param_vars


def inversion_attack(victim, target_class, steps=200, lr=0.1, l2_weight=0.01, seed=0):
    """Returns (reconstructed input vector, per-step confidence trace)."""
    if not 0 <= target_class < victim.output_dim():
        raise ConfigurationError(f"target class {target_class} out of range")
    if steps < 0 or lr <= 0 or l2_weight < 0:
        raise ConfigurationError("need steps >= 0, lr > 0, l2_weight >= 0")
    rng = np.random.Generator(np.random.PCG64([seed, 0xA7]))
    x = 0.01 * rng.standard_normal(victim.input_dim())
    pvars = param_vars(victim, requires_grad=False)
    trace = []
    labels = np.array([target_class])
    for _ in range(steps):
        xv = ad.Var(x[None, :], requires_grad=True)
        _, probs = forward(victim, xv, pvars=pvars)
        objective = (-1.0) * ad.cross_entropy(probs, labels) - l2_weight * ad.vsum(
            ad.square(xv)
        )
        ad.backward(objective)
        trace.append(float(probs.value[0, target_class]))
        x = x + lr * xv.grad[0]
    return x, trace
