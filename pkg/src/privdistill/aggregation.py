"""Private aggregation of teacher votes into noisy labels.

The mechanism sees only the vote histogram, never the query itself, so
the only private channel is the noised argmax over counts.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DataError, ShapeError
from .network import forward


@dataclass
class VoteHistogram:
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 1 or np.any(self.counts < 0):
            raise DataError("vote counts must be a vector of non-negative integers")

    @property
    def teacher_count(self):
        return int(self.counts.sum())


@dataclass
class NoisyLabel:
    query_index: int
    label: int


@dataclass
class AggregationConfig:
    mechanism: str = "laplace"
    eps0: float = 0.05  # Laplace scale b = 2 / eps0
    sigma: float = None  # Gaussian mechanism only
    seed: int = 0

    def __post_init__(self):
        if self.mechanism not in ("laplace", "gaussian"):
            raise ConfigurationError(f"unknown mechanism {self.mechanism!r}")
        if self.mechanism == "laplace":
            if self.eps0 is None or self.eps0 <= 0:
                raise ConfigurationError("laplace mechanism needs eps0 > 0")
            if self.sigma is not None:
                raise ConfigurationError("sigma is a gaussian-only parameter")
        else:
            if self.sigma is None or self.sigma <= 0:
                raise ConfigurationError("gaussian mechanism needs sigma > 0")

    @property
    def laplace_scale(self):
        return 2.0 / self.eps0


def sample_laplace(scale, size, rng):
    """Inverse-CDF Laplace(0, scale): x = -b*sgn(u)*ln(1-2|u|), u~U(-1/2,1/2)."""
    if scale == 0.0:
        return np.zeros(size)
    u = rng.random(size) - 0.5
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def vote_histogram(ensemble, x):
    """Per-class count of teacher argmax predictions for one query."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape != (1, ensemble.teachers[0].input_dim()):
        raise ShapeError(f"query shape {x.shape} does not match teacher input")
    k = ensemble.teachers[0].output_dim()
    counts = np.zeros(k, dtype=np.int64)
    for teacher in ensemble.teachers:
        _, probs = forward(teacher, x)
        counts[int(np.argmax(probs.value[0]))] += 1
    return VoteHistogram(counts)


def noisy_argmax(hist, cfg, rng):
    """argmax_k(counts[k] + noise_k); post-noise ties go to the lowest index."""
    k = len(hist.counts)
    if cfg.mechanism == "laplace":
        noise = sample_laplace(cfg.laplace_scale, k, rng)
    else:
        noise = cfg.sigma * rng.standard_normal(k)
    return int(np.argmax(hist.counts + noise))


def _query_rng(seed, query_index):
    # per-query substream: results are independent of execution order
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, query_index])))


def label_query_batch(ensemble, queries, cfg):
    """Noisy label per query plus the mechanism invocation count."""
    if len(queries) == 0:
        raise DataError("query batch is empty")
    labels = []
    for i in range(len(queries)):
        hist = vote_histogram(ensemble, queries.features[i])
        label = noisy_argmax(hist, cfg, _query_rng(cfg.seed, i))
        labels.append(NoisyLabel(query_index=i, label=label))
    return labels, len(labels)


def write_labels_csv(labels, cfg, path):
    noise_param = cfg.eps0 if cfg.mechanism == "laplace" else cfg.sigma
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["query_index", "label", "mechanism", "noise_param"])
        for nl in labels:
            writer.writerow([nl.query_index, nl.label, cfg.mechanism, noise_param])


def read_labels_csv(path):
    labels = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            labels.append(NoisyLabel(int(row["query_index"]), int(row["label"])))
    return labels
