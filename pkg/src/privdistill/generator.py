"""Data-free generator training against a frozen classifier.

The frozen classifier scores generated batches through three terms:
confidence (cross-entropy against the batch's own argmax pseudo-labels),
class balance of the batch-mean prediction, and feature activation
magnitude. Minimizing the sum drives the generator toward inputs the
classifier treats like real data.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .datasets import LabeledDataset
from .errors import ConfigurationError, TrainingError
from .network import forward, param_vars, run_layers, xavier_init
from .optim import AdamState, adam_update, decayed_lr


@dataclass
class GeneratorConfig:
    latent_dim: int = 16
    alpha: float = 5.0
    beta: float = 0.1
    batch_size: int = 128
    rounds: int = 200
    lr: float = 0.01
    # the step schedule divides lr by 10 every 40% of the configured rounds
    lr_decay_fraction: float = 0.4
    hidden: int = 64
    # "sigmoid" for [0,1] data; "tanh" (times output_scale) for centered
    # data; "linear" is available but unbounded against the activation term
    output_activation: str = "tanh"
    output_scale: float = 2.0
    seed: int = 0
    # ablation flags: the literal per-sample entropy / +beta activation forms
    literal_balance_term: bool = False
    literal_activation_sign: bool = False
    log: list = field(default_factory=list)

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ConfigurationError("latent_dim must be >= 1")
        if self.alpha < 0 or self.beta < 0:
            raise ConfigurationError("alpha and beta must be non-negative")
        if self.output_activation not in ("linear", "sigmoid", "tanh"):
            raise ConfigurationError(
                f"unknown output activation {self.output_activation!r}"
            )


def generator_architecture(cfg, data_dim):
    arch = [
        ("dense", cfg.latent_dim, cfg.hidden),
        ("relu",),
        ("dense", cfg.hidden, cfg.hidden),
        ("relu",),
        ("dense", cfg.hidden, data_dim),
    ]
    if cfg.output_activation == "sigmoid":
        arch.append(("sigmoid",))
    elif cfg.output_activation == "tanh":
        arch.append(("tanh",))
        arch.append(("scale", cfg.output_scale))
    return arch


def generator_loss(discriminator, batch_x, cfg, disc_vars=None):
    """Scalar generator objective on a produced batch (graph Var).

    `batch_x` may be a Var from the generator's forward pass so gradients
    flow back into generator parameters; the discriminator is held as
    constants and never accumulates gradients.
    """
    if disc_vars is None:
        disc_vars = param_vars(discriminator, requires_grad=False)
    features, probs = forward(discriminator, batch_x, pvars=disc_vars)
    pseudo = np.argmax(probs.value, axis=1)
    confidence_term = ad.cross_entropy(probs, pseudo)
    if cfg.literal_balance_term:
        # per-sample form: rewards uncertain individual predictions
        balance_term = -1.0 * ad.vmean(ad.entropy_rows(probs))
    else:
        balance_term = ad.xlogx_sum(ad.vmean(probs, axis=0))
    activation = ad.vmean(ad.vsum(ad.absolute(features), axis=1))
    act_sign = 1.0 if cfg.literal_activation_sign else -1.0
    return confidence_term + cfg.alpha * balance_term + act_sign * cfg.beta * activation


def train_generator(discriminator, data_dim, cfg):
    """Iterate: sample latents, generate, score with the frozen net, update."""
    gen = xavier_init(generator_architecture(cfg, data_dim), cfg.seed, feature_boundary=None)
    rng = np.random.Generator(np.random.PCG64([cfg.seed, 0x6E9]))
    state = AdamState(gen)
    disc_vars = param_vars(discriminator, requires_grad=False)
    decay_every = max(1, int(cfg.rounds * cfg.lr_decay_fraction))
    for step in range(cfg.rounds):
        z = rng.standard_normal((cfg.batch_size, cfg.latent_dim))
        pv = param_vars(gen)
        batch_x = run_layers(gen, z, pvars=pv)[-1]
        loss = generator_loss(discriminator, batch_x, cfg, disc_vars=disc_vars)
        if not np.isfinite(loss.value):
            raise TrainingError(f"generator loss diverged at round {step}")
        ad.backward(loss)
        grads = {k: v.grad for k, v in pv.items()}
        lr = decayed_lr(cfg.lr, f"step:{decay_every}:0.1", step, cfg.rounds)
        gen = adam_update(gen, grads, state, lr)
        cfg.log.append(float(loss.value))
    return gen


def synthesize_dataset(gen, count, seed, class_count):
    """Unlabeled dataset from i.i.d. standard-normal latent codes."""
    if count < 1:
        raise ConfigurationError("count must be >= 1")
    rng = np.random.Generator(np.random.PCG64([seed, 0x5D5]))
    latent_dim = gen.input_dim()
    out = np.empty((count, gen.output_dim()), dtype=np.float64)
    for start in range(0, count, 1024):
        stop = min(start + 1024, count)
        z = rng.standard_normal((stop - start, latent_dim))
        out[start:stop] = run_layers(gen, z)[-1].value
    return LabeledDataset(out, None, class_count)
