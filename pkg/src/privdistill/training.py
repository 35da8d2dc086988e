"""Supervised classifier training: baseline model and the teacher ensemble."""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConfigurationError, DataError
from .network import ParamSet, forward, param_vars, xavier_init
from .optim import AdamState, adam_update, decayed_lr, sgd_update


@dataclass
class TrainConfig:
    rounds: int = 300
    batch_size: int = 128
    optimizer: str = "adam"
    lr: float = 1e-3
    lr_schedule: str = "constant"
    seed: int = 0
    log: list = field(default_factory=list)

    def __post_init__(self):
        if self.batch_size < 1 or self.rounds < 0:
            raise ConfigurationError("batch_size >= 1 and rounds >= 0 required")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TeacherEnsemble:
    teachers: list
    architecture: list

    def __post_init__(self):
        if not self.teachers:
            raise ConfigurationError("ensemble needs at least one teacher")
        for t in self.teachers:
            if t.architecture != self.architecture:
                raise ConfigurationError("teachers must share one architecture")

    def __len__(self):
        return len(self.teachers)


def _batches(n, batch_size, rounds, rng):
    """Yield `rounds` random minibatch index arrays (one per step)."""
    for _ in range(rounds):
        if n <= batch_size:
            yield np.arange(n)
        else:
            yield rng.choice(n, size=batch_size, replace=False)


def train_classifier(ds, architecture, cfg, init_seed=None):
    """Cross-entropy training of a dense softmax classifier on `ds`."""
    if not ds.labeled:
        raise DataError("classifier training needs a labeled dataset")
    net = xavier_init(architecture, cfg.seed if init_seed is None else init_seed)
    rng = np.random.Generator(np.random.PCG64([cfg.seed, 0xC1A55]))
    state = AdamState(net) if cfg.optimizer == "adam" else None
    x_all = ds.features.astype(np.float64)
    for step, idx in enumerate(_batches(len(ds), cfg.batch_size, cfg.rounds, rng)):
        pv = param_vars(net)
        _, probs = forward(net, x_all[idx], pvars=pv)
        loss = ad.cross_entropy(probs, ds.labels[idx])
        ad.backward(loss)
        grads = {k: v.grad for k, v in pv.items()}
        if cfg.optimizer == "adam":
            lr = decayed_lr(cfg.lr, cfg.lr_schedule, step, cfg.rounds)
            net = adam_update(net, grads, state, lr)
        else:
            net = sgd_update(net, grads, cfg.lr, cfg.lr_schedule, step, cfg.rounds)
        cfg.log.append(float(loss.value))
    return net


def train_teacher_ensemble(ds, partition, architecture, cfg):
    """One independently-seeded teacher per partition subset."""
    if partition.parent_size != len(ds):
        raise DataError("partition does not match the dataset")
    teachers = []
    for i, idx in enumerate(partition.subsets):
        sub_cfg = TrainConfig(
            rounds=cfg.rounds,
            batch_size=cfg.batch_size,
            optimizer=cfg.optimizer,
            lr=cfg.lr,
            lr_schedule=cfg.lr_schedule,
            seed=cfg.seed + i,
        )
        teachers.append(train_classifier(ds.subset(idx), architecture, sub_cfg))
    return TeacherEnsemble(teachers, list(architecture))


def evaluate_accuracy(net, ds):
    """Fraction of argmax-correct predictions; ties go to the lowest class."""
    if not ds.labeled:
        raise DataError("accuracy needs a labeled dataset")
    _, probs = forward(net, ds.features.astype(np.float64))
    pred = np.argmax(probs.value, axis=1)
    return float(np.mean(pred == ds.labels))
