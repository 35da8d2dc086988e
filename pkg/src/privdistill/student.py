"""Semi-supervised student training: noisy-label distillation plus
feature-consistency and entropy regularization on reconstruction triples.

The student never sees private data; its only inputs are the noisy-labeled
query set and the VAE reconstruction triples.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConfigurationError, DataError, TrainingError
from .network import forward, param_vars, xavier_init
from .optim import AdamState, adam_update, decayed_lr
from .training import evaluate_accuracy
from .vae import triples_to_arrays


@dataclass
class StudentLossWeights:
    w_sup: float = 1.0
    w_norm: float = 1.0
    w_tan: float = 1.0
    w_ent: float = 1.0
    # Eq-literal ablation: reward (rather than penalize) output entropy
    literal_entropy_sign: bool = False

    def __post_init__(self):
        weights = (self.w_sup, self.w_norm, self.w_tan, self.w_ent)
        if any(w < 0 for w in weights):
            raise ConfigurationError("loss weights must be non-negative")
        if all(w == 0 for w in weights):
            raise ConfigurationError("at least one loss weight must be positive")


@dataclass
class StudentConfig:
    rounds: int = 400
    batch_size: int = 128
    lr: float = 1e-3
    lr_schedule: str = "linear"
    seed: int = 0
    log: list = field(default_factory=list)


def supervised_energy(student, batch_x, batch_labels, pvars=None):
    """Mean cross-entropy between student predictions and noisy labels."""
    labels = np.asarray(batch_labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= student.output_dim()):
        raise DataError("noisy label outside the student's class range")
    _, probs = forward(student, batch_x, pvars=pvars)
    return ad.cross_entropy(probs, labels)


def unsupervised_energy(student, x_hat, x_tan, x_norm, weights, pvars=None):
    """Consistency + entropy regularization; returns (total, parts).

    parts = (normal term, tangent term, entropy term), each already
    weighted so total == sum(parts).
    """
    if not (x_hat.shape == x_tan.shape == x_norm.shape):
        raise ConfigurationError("triple members must share one shape")
    if pvars is None:
        pvars = param_vars(student, requires_grad=False)
    f_hat, p_hat = forward(student, x_hat, pvars=pvars)
    f_tan, _ = forward(student, x_tan, pvars=pvars)
    f_norm, _ = forward(student, x_norm, pvars=pvars)
    if f_hat.value.shape != f_tan.value.shape or f_hat.value.shape != f_norm.value.shape:
        raise ConfigurationError("feature dims differ across triple members")
    norm_term = weights.w_norm * ad.vmean(ad.vsum(ad.square(f_hat - f_norm), axis=1))
    tan_term = weights.w_tan * ad.vmean(ad.vsum(ad.square(f_hat - f_tan), axis=1))
    ent_sign = -1.0 if weights.literal_entropy_sign else 1.0
    ent_term = weights.w_ent * ent_sign * ad.vmean(ad.entropy_rows(p_hat))
    total = norm_term + tan_term + ent_term
    return total, (norm_term, tan_term, ent_term)


def train_student(
    labeled,
    noisy_labels,
    triples,
    architecture,
    weights,
    cfg,
    eval_ds=None,
    metrics_path=None,
):
    """Alternate one labeled batch and one triple batch per round.

    `labeled` is the query dataset view; `noisy_labels` the aggregated
    class ids aligned with it. When the labeled set is empty w_sup is
    treated as zero (pure unsupervised ablation).
    """
    n_lab = 0 if labeled is None else len(labeled)
    if n_lab == 0 and weights.w_sup > 0:
        weights = StudentLossWeights(
            0.0, weights.w_norm, weights.w_tan, weights.w_ent, weights.literal_entropy_sign
        )
    if n_lab and len(noisy_labels) != n_lab:
        raise DataError("noisy label count does not match the query set")
    student = xavier_init(architecture, cfg.seed)
    rng = np.random.Generator(np.random.PCG64([cfg.seed, 0x57D]))
    state = AdamState(student)
    x_lab = labeled.features.astype(np.float64) if n_lab else None
    y_lab = np.asarray(noisy_labels, dtype=np.int64) if n_lab else None
    x_hat, x_tan, x_norm = (
        triples_to_arrays(triples) if triples else (None, None, None)
    )
    n_unl = 0 if x_hat is None else x_hat.shape[0]
    unsup_active = n_unl > 0 and (weights.w_norm or weights.w_tan or weights.w_ent)
    metrics = []
    log_every = max(1, cfg.rounds // 10)
    for step in range(cfg.rounds):
        lr = decayed_lr(cfg.lr, cfg.lr_schedule, step, cfg.rounds)
        e_sup = 0.0
        if weights.w_sup > 0 and n_lab:
            idx = (
                np.arange(n_lab)
                if n_lab <= cfg.batch_size
                else rng.choice(n_lab, cfg.batch_size, replace=False)
            )
            pv = param_vars(student)
            loss = weights.w_sup * supervised_energy(student, x_lab[idx], y_lab[idx], pvars=pv)
            ad.backward(loss)
            student = adam_update(student, {k: v.grad for k, v in pv.items()}, state, lr)
            e_sup = float(loss.value)
        parts = (0.0, 0.0, 0.0)
        if unsup_active:
            idx = (
                np.arange(n_unl)
                if n_unl <= cfg.batch_size
                else rng.choice(n_unl, cfg.batch_size, replace=False)
            )
            pv = param_vars(student)
            total, part_vars = unsupervised_energy(
                student, x_hat[idx], x_tan[idx], x_norm[idx], weights, pvars=pv
            )
            ad.backward(total)
            student = adam_update(student, {k: v.grad for k, v in pv.items()}, state, lr)
            parts = tuple(float(p.value) for p in part_vars)
        if not np.isfinite(e_sup) or not all(np.isfinite(p) for p in parts):
            raise TrainingError(f"student energy diverged at round {step}")
        cfg.log.append(e_sup + sum(parts))
        if step % log_every == 0 or step == cfg.rounds - 1:
            row = {
                "epoch": step,
                "E_s": e_sup,
                "E_u_norm": parts[0],
                "E_u_tan": parts[1],
                "E_u_ent": parts[2],
            }
            row["train_acc"] = (
                float(np.mean(predicted_classes(student, x_lab) == y_lab)) if n_lab else ""
            )
            row["test_acc"] = evaluate_accuracy(student, eval_ds) if eval_ds is not None else ""
            metrics.append(row)
    if metrics_path is not None:
        write_metrics_csv(metrics, metrics_path)
    return student


def predicted_classes(student, batch_x):
    _, probs = forward(student, batch_x)
    return np.argmax(probs.value, axis=1)


def write_metrics_csv(rows, path):
    fields = ["epoch", "E_s", "E_u_norm", "E_u_tan", "E_u_ent", "train_acc", "test_acc"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
