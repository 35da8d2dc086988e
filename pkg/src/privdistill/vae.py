"""Dense VAE: ELBO training, latent encoding, tangent/normal perturbations,
and reconstruction triples with optional per-coordinate Laplace noise.

Tangent directions follow the high-posterior-variance latent coordinates
(on-manifold); normal directions are biased toward low-variance
coordinates (off-manifold). When a positive DP noise scale is given, the
code is clamped to [-1, 1] per coordinate before Laplace noise is added.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .aggregation import sample_laplace
from .datasets import LabeledDataset, read_dataset, write_dataset
from .errors import ConfigurationError, ShapeError, TrainingError
from .network import param_vars, run_layers, xavier_init
from .optim import AdamState, adam_update, decayed_lr

_SIGMA_FLOOR = 1e-6


@dataclass
class VaeConfig:
    latent_dim: int = 32
    hidden: int = 64
    rounds: int = 300
    batch_size: int = 128
    lr: float = 1e-3
    lr_schedule: str = "linear"
    output_activation: str = "linear"
    seed: int = 0
    log: list = field(default_factory=list)

    def __post_init__(self):
        if self.latent_dim < 1 or self.hidden < 1:
            raise ConfigurationError("latent_dim and hidden must be >= 1")
        if self.output_activation not in ("linear", "sigmoid"):
            raise ConfigurationError(
                f"unknown output activation {self.output_activation!r}"
            )


@dataclass
class LatentCode:
    mu: np.ndarray
    sigma: np.ndarray
    sample: np.ndarray

    def __post_init__(self):
        if not (self.mu.shape == self.sigma.shape == self.sample.shape):
            raise ShapeError("latent code components must share one shape")
        if np.any(self.sigma <= 0):
            raise ShapeError("sigma must be positive elementwise")


@dataclass
class SyntheticTriple:
    x_hat: np.ndarray
    x_tan: np.ndarray
    x_norm: np.ndarray

    def __post_init__(self):
        for part in (self.x_hat, self.x_tan, self.x_norm):
            if not np.all(np.isfinite(part)):
                raise ShapeError("non-finite triple member")


def encoder_architecture(cfg, data_dim):
    # the output holds mu in columns [:c] and log-variance in [c:]
    return [
        ("dense", data_dim, cfg.hidden),
        ("relu",),
        ("dense", cfg.hidden, 2 * cfg.latent_dim),
    ]


def decoder_architecture(cfg, data_dim):
    arch = [
        ("dense", cfg.latent_dim, cfg.hidden),
        ("relu",),
        ("dense", cfg.hidden, data_dim),
    ]
    if cfg.output_activation == "sigmoid":
        arch.append(("sigmoid",))
    return arch


def _encode_batch(encoder, x, pvars=None):
    c = encoder.output_dim() // 2
    out = run_layers(encoder, x, pvars=pvars)[-1]
    mu = ad.slice_cols(out, 0, c)
    # keep sigma = exp(logvar/2) in a numerically safe range
    logvar = ad.clip(ad.slice_cols(out, c, 2 * c), -12.0, 12.0)
    return mu, logvar


def kl_standard_normal(mu, logvar):
    """Per-example KL(N(mu, sigma^2) || N(0, I)) with sigma^2 = exp(logvar)."""
    inner = 1.0 + logvar - ad.square(mu) - ad.exp(logvar)
    return -0.5 * ad.vsum(inner, axis=1)


def vae_loss(encoder, decoder, batch, zeta, enc_vars=None, dec_vars=None):
    """Mean reconstruction squared error plus mean KL, at fixed noise `zeta`."""
    if not isinstance(batch, ad.Var):
        batch = ad.Var(batch)
    mu, logvar = _encode_batch(encoder, batch, pvars=enc_vars)
    sigma = ad.exp(0.5 * logvar)
    code = mu + sigma * ad.Var(zeta)
    recon = run_layers(decoder, code, pvars=dec_vars)[-1]
    recon_term = ad.vmean(ad.vsum(ad.square(recon - batch), axis=1))
    kl_term = ad.vmean(kl_standard_normal(mu, logvar))
    return recon_term + kl_term


def train_vae(synthetic, cfg):
    """ELBO training on an (unlabeled) synthetic dataset."""
    if len(synthetic) == 0:
        raise ConfigurationError("cannot train a VAE on an empty dataset")
    data_dim = synthetic.dim
    encoder = xavier_init(encoder_architecture(cfg, data_dim), cfg.seed, feature_boundary=None)
    decoder = xavier_init(decoder_architecture(cfg, data_dim), cfg.seed + 1, feature_boundary=None)
    rng = np.random.Generator(np.random.PCG64([cfg.seed, 0xAE]))
    enc_state, dec_state = AdamState(encoder), AdamState(decoder)
    x_all = synthetic.features.astype(np.float64)
    n = len(synthetic)
    for step in range(cfg.rounds):
        idx = np.arange(n) if n <= cfg.batch_size else rng.choice(n, cfg.batch_size, replace=False)
        zeta = rng.standard_normal((len(idx), cfg.latent_dim))
        enc_vars = param_vars(encoder)
        dec_vars = param_vars(decoder)
        loss = vae_loss(encoder, decoder, x_all[idx], zeta, enc_vars, dec_vars)
        if not np.isfinite(loss.value):
            raise TrainingError(f"VAE loss diverged at round {step}")
        ad.backward(loss)
        lr = decayed_lr(cfg.lr, cfg.lr_schedule, step, cfg.rounds)
        encoder = adam_update(encoder, {k: v.grad for k, v in enc_vars.items()}, enc_state, lr)
        decoder = adam_update(decoder, {k: v.grad for k, v in dec_vars.items()}, dec_state, lr)
        cfg.log.append(float(loss.value))
    return encoder, decoder


def encode(encoder, x, seed):
    """Posterior (mu, sigma) and a reparameterized sample for one example."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    mu, logvar = _encode_batch(encoder, x)
    mu = mu.value[0]
    sigma = np.maximum(np.exp(0.5 * logvar.value[0]), _SIGMA_FLOOR)
    rng = np.random.Generator(np.random.PCG64([seed, 0xE0]))
    zeta = rng.standard_normal(mu.shape[0])
    return LatentCode(mu=mu, sigma=sigma, sample=mu + sigma * zeta)


def perturb_code(code, direction, radius, dp_scale, seed):
    """Perturbed latent vector e + n_direction (+ Laplace DP noise).

    tangent: n = r * (sigma*zeta) / ||sigma*zeta||   (high-variance aligned)
    normal : n = r * (zeta/sigma) / ||zeta/sigma||   (low-variance aligned)
    """
    if direction not in ("tangent", "normal"):
        raise ConfigurationError(f"unknown perturbation direction {direction!r}")
    if radius < 0 or dp_scale < 0:
        raise ConfigurationError("radius and dp_scale must be non-negative")
    rng = np.random.Generator(np.random.PCG64([seed, 0xBD]))
    out = code.sample.copy()
    if radius > 0:
        zeta = rng.standard_normal(out.shape[0])
        raw = code.sigma * zeta if direction == "tangent" else zeta / code.sigma
        norm = np.linalg.norm(raw)
        if norm > 0:
            out = out + radius * raw / norm
    if dp_scale > 0:
        out = np.clip(out, -1.0, 1.0)
        out = out + sample_laplace(dp_scale, out.shape[0], rng)
    return out


def _decode_one(decoder, code_vec):
    return run_layers(decoder, code_vec[None, :])[-1].value[0]


def build_triples(encoder, decoder, pool, radius, dp_scale, seed):
    """One (x_hat, x_tan, x_norm) triple per example of the unlabeled pool.

    Per-example seeds are derived from (seed, index) so output is
    order-independent. DP noise, when enabled, applies to all three
    reconstructions uniformly.
    """
    triples = []
    for j in range(len(pool)):
        sub = int(np.random.SeedSequence([seed, j]).generate_state(1)[0])
        code = encode(encoder, pool.features[j], sub)
        plain = perturb_code(code, "tangent", 0.0, dp_scale, sub + 1)
        tan = perturb_code(code, "tangent", radius, dp_scale, sub + 2)
        norm = perturb_code(code, "normal", radius, dp_scale, sub + 2)
        triples.append(
            SyntheticTriple(
                x_hat=_decode_one(decoder, plain),
                x_tan=_decode_one(decoder, tan),
                x_norm=_decode_one(decoder, norm),
            )
        )
    return triples


def triples_to_arrays(triples):
    x_hat = np.stack([t.x_hat for t in triples])
    x_tan = np.stack([t.x_tan for t in triples])
    x_norm = np.stack([t.x_norm for t in triples])
    return x_hat, x_tan, x_norm


def write_triples(triples, class_count, prefix, manifest_path):
    """Persist a triple list as three dataset files plus a manifest."""
    x_hat, x_tan, x_norm = triples_to_arrays(triples)
    paths = {}
    for name, arr in (("hat", x_hat), ("tan", x_tan), ("norm", x_norm)):
        path = f"{prefix}_{name}.dgds"
        write_dataset(LabeledDataset(arr, None, class_count), path)
        paths[name] = path
    with open(manifest_path, "w") as fh:
        json.dump({"count": len(triples), "files": paths}, fh, indent=2)
        fh.write("\n")


def read_triples(manifest_path):
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    parts = {name: read_dataset(path) for name, path in manifest["files"].items()}
    return [
        SyntheticTriple(
            x_hat=parts["hat"].features[j].astype(np.float64),
            x_tan=parts["tan"].features[j].astype(np.float64),
            x_norm=parts["norm"].features[j].astype(np.float64),
        )
        for j in range(manifest["count"])
    ]
