"""Flat dotted-key configuration files and the pipeline run configuration.

Format: one `section.key = value` per line, '#' comments, blank lines
ignored. Values are parsed as int, float, bool, or string. Every shipped
default matches the reference desk-scale experiment, so a bare run needs
no config file at all.
"""

import os

from .errors import ConfigurationError

DEFAULTS = {
    # private data
    "data.kind": "mixture",  # mixture | digitgrid
    "data.classes": 10,
    "data.dim": 16,
    "data.per_class": 200,
    "data.spread": 0.1,
    "data.noise": 0.1,  # digitgrid pixel flip rate
    "data.test_per_class": 50,
    # shared training knobs
    "run.seed": 0,
    "run.batch_size": 128,
    "arch.hidden": 32,
    # discriminative stream
    "teachers.count": 20,
    "baseline.rounds": 1600,
    "baseline.lr": 0.001,
    "teacher.rounds": 800,
    "teacher.lr": 0.001,
    "teacher.lr_schedule": "linear",
    # generative stream
    "generator.latent_dim": 16,
    "generator.hidden": 64,
    "generator.alpha": 5.0,
    "generator.beta": 0.1,
    "generator.rounds": 1200,
    "generator.lr": 0.01,
    "generator.output_scale": 0.25,
    "synth.count": 0,  # 0 -> same size as the private training set
    "vae.latent_dim": 32,
    "vae.hidden": 128,
    "vae.rounds": 800,
    "vae.lr": 0.001,
    # label queries
    "query.count": 100,
    "query.mechanism": "laplace",
    "query.eps0": 0.05,  # Laplace scale 2/eps0 = 40
    "query.sigma": 0.0,
    # triples
    "triples.radius": 1.0,
    "triples.dp_scale": 0.0,
    # student
    "student.rounds": 600,
    "student.lr": 0.001,
    "student.w_sup": 1.0,
    "student.w_norm": 4.0,
    "student.w_tan": 4.0,
    "student.w_ent": 0.2,
    # accounting
    "privacy.delta": 1e-5,
    "privacy.lambda_max": 64,
}


def _parse_value(raw):
    raw = raw.strip()
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            pass
    if raw.lower() in ("true", "false"):
        return raw.lower() == "true"
    return raw


def parse_config_text(text):
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"line {lineno}: expected 'key = value'")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigurationError(f"line {lineno}: unknown config key {key!r}")
        values[key] = _parse_value(raw)
    return values


def load_config(path=None, overrides=None):
    """Defaults, overlaid with an optional file, then explicit overrides."""
    cfg = dict(DEFAULTS)
    if path is not None:
        with open(path) as fh:
            cfg.update(parse_config_text(fh.read()))
    for key, value in (overrides or {}).items():
        if key not in DEFAULTS:
            raise ConfigurationError(f"unknown config key {key!r}")
        cfg[key] = value
    _validate(cfg)
    return cfg


def _validate(cfg):
    if cfg["data.kind"] not in ("mixture", "digitgrid"):
        raise ConfigurationError(f"unknown data kind {cfg['data.kind']!r}")
    if cfg["query.mechanism"] not in ("laplace", "gaussian"):
        raise ConfigurationError(f"unknown mechanism {cfg['query.mechanism']!r}")
    if cfg["query.mechanism"] == "gaussian" and cfg["query.count"] > 0:
        # the accountant has no gaussian budget formula; see aggregation docs
        raise ConfigurationError(
            "gaussian aggregation cannot be combined with budget accounting"
        )
    if cfg["teachers.count"] < 1:
        raise ConfigurationError("need at least one teacher")
    if not 0.0 < cfg["privacy.delta"] < 1.0:
        raise ConfigurationError("privacy.delta must lie in (0, 1)")


def write_config(cfg, path):
    lines = [f"{key} = {cfg[key]}" for key in sorted(cfg)]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def default_out_root():
    return os.environ.get("DGD_OUT", os.path.join(os.getcwd(), "runs"))
