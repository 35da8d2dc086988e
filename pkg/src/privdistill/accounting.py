"""Differential-privacy budget accounting for the two-stream pipeline.

The label-query stream spends eps0 per noisy-argmax invocation; the
latent-noise stream spends a fixed eps1. Three composition rules turn the
ledger into a total (eps, delta) guarantee:

  basic     : eps = q*eps0 + eps1
  advanced  : eps = q*eps0^2 + eps0*sqrt(-2*q*ln(delta)) + eps1
  moments   : data-independent per-query moment bound 2*eps0^2*lam*(lam+1),
              composed additively and converted via the tail bound
              eps = min_lam (q*2*eps0^2*lam*(lam+1) - ln(delta)) / lam + eps1

All logarithms are natural.
"""

import json
import math
from dataclasses import dataclass, asdict

from .errors import ConfigurationError

METHODS = ("basic", "advanced", "moments_independent")


@dataclass
class PrivacyLedger:
    eps0: float = 0.05
    query_count: int = 0
    delta: float = 1e-5
    eps1: float = 0.0
    latent_dim: int = 32

    def __post_init__(self):
        if self.query_count < 0:
            raise ConfigurationError("query_count must be non-negative")
        if self.query_count > 0 and (self.eps0 is None or self.eps0 <= 0):
            raise ConfigurationError("eps0 must be positive when queries were made")
        if not 0.0 < self.delta < 1.0:
            raise ConfigurationError("delta must lie in (0, 1)")
        if self.eps1 < 0:
            raise ConfigurationError("eps1 must be non-negative")

    def record_queries(self, count):
        if count < 0:
            raise ConfigurationError("cannot record a negative query count")
        self.query_count += count


@dataclass
class BudgetReport:
    method: str
    eps_total: float
    delta: float
    discriminative_eps: float
    eps1: float
    minimizing_lambda: int = None

    def __post_init__(self):
        if not math.isfinite(self.eps_total):
            raise ConfigurationError("composed budget must be finite")


def compose_basic(ledger):
    disc = ledger.query_count * ledger.eps0 if ledger.query_count else 0.0
    return BudgetReport("basic", disc + ledger.eps1, ledger.delta, disc, ledger.eps1)


def compose_advanced(ledger):
    q = ledger.query_count
    if q == 0:
        disc = 0.0
    else:
        disc = q * ledger.eps0**2 + ledger.eps0 * math.sqrt(-2.0 * q * math.log(ledger.delta))
    return BudgetReport("advanced", disc + ledger.eps1, ledger.delta, disc, ledger.eps1)


def compose_moments_independent(ledger, lambda_max=64):
    if lambda_max < 1:
        raise ConfigurationError("lambda_max must be >= 1")
    q = ledger.query_count
    if q == 0:
        return BudgetReport(
            "moments_independent", ledger.eps1, ledger.delta, 0.0, ledger.eps1
        )
    best_eps, best_lam = math.inf, None
    log_delta = math.log(ledger.delta)
    for lam in range(1, lambda_max + 1):
        moment = q * 2.0 * ledger.eps0**2 * lam * (lam + 1)
        eps = (moment - log_delta) / lam
        if eps < best_eps:
            best_eps, best_lam = eps, lam
    return BudgetReport(
        "moments_independent",
        best_eps + ledger.eps1,
        ledger.delta,
        best_eps,
        ledger.eps1,
        minimizing_lambda=best_lam,
    )


def generative_epsilon(eps1, latent_dim):
    """Laplace scale for per-coordinate latent noise: 2c / eps1."""
    if eps1 <= 0:
        raise ConfigurationError("eps1 must be positive")
    if latent_dim < 1:
        raise ConfigurationError("latent_dim must be >= 1")
    return 2.0 * latent_dim / eps1


def latent_scale_epsilon(scale, latent_dim):
    """Inverse of generative_epsilon: eps1 implied by a configured scale."""
    if scale <= 0:
        return 0.0
    return 2.0 * latent_dim / scale


def report_min(ledger, lambda_max=64):
    reports = [
        compose_basic(ledger),
        compose_advanced(ledger),
        compose_moments_independent(ledger, lambda_max),
    ]
    return min(reports, key=lambda r: r.eps_total)


def write_budget_report(report, ledger, path):
    payload = asdict(report)
    payload.update(eps0=ledger.eps0, query_count=ledger.query_count, latent_dim=ledger.latent_dim)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_budget_report(path):
    with open(path) as fh:
        return json.load(fh)
