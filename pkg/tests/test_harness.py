"""Config files, CLI exit codes, resume behavior, reporting, inversion attack."""

import json
import os

import numpy as np
import pytest

from helpers import uniform_classifier
from privdistill.attack import inversion_attack
from privdistill.checkpoint import write_checkpoint
from privdistill.cli import main
from privdistill.config import (
    DEFAULTS,
    default_out_root,
    load_config,
    parse_config_text,
    write_config,
)
from privdistill.errors import ConfigurationError, ReportError
from privdistill.reporting import emit_report, summarize_run

TINY_CONFIG = """
# desk-scale smoke configuration
data.classes = 3
data.dim = 6
data.per_class = 20
data.test_per_class = 10
data.spread = 0.1
teachers.count = 3
baseline.rounds = 60
teacher.rounds = 40
generator.latent_dim = 4
generator.hidden = 8
generator.rounds = 40
synth.count = 60
vae.latent_dim = 4
vae.hidden = 8
vae.rounds = 40
query.count = 10
student.rounds = 40
arch.hidden = 8
"""


# --- config files -------------------------------------------------------


def test_parse_config_ignores_comments_and_blanks():
    values = parse_config_text("# hi\n\nrun.seed = 7\ndata.kind = digitgrid\n")
    assert values == {"run.seed": 7, "data.kind": "digitgrid"}


def test_parse_config_value_types():
    values = parse_config_text(
        "run.seed = 3\nbaseline.lr = 0.5\nteacher.lr_schedule = constant\n"
    )
    assert values["run.seed"] == 3 and isinstance(values["run.seed"], int)
    assert values["baseline.lr"] == 0.5
    assert values["teacher.lr_schedule"] == "constant"


def test_parse_config_rejects_unknown_key_with_line_number():
    with pytest.raises(ConfigurationError, match="line 2"):
        parse_config_text("run.seed = 1\nno.such.key = 2\n")
    with pytest.raises(ConfigurationError, match="key = value"):
        parse_config_text("run.seed 1\n")


def test_load_config_layering(tmp_path):
    path = tmp_path / "cfg.txt"
    path.write_text("run.seed = 9\nquery.count = 27\n")
    cfg = load_config(str(path), overrides={"query.count": 400})
    assert cfg["run.seed"] == 9
    assert cfg["query.count"] == 400
    assert cfg["data.classes"] == DEFAULTS["data.classes"]
    with pytest.raises(ConfigurationError):
        load_config(None, overrides={"bogus.key": 1})


def test_config_round_trip(tmp_path):
    cfg = load_config(None, overrides={"run.seed": 5, "data.kind": "digitgrid"})
    path = tmp_path / "out.txt"
    write_config(cfg, path)
    assert load_config(str(path)) == cfg


def test_gaussian_mechanism_rejected_with_queries():
    with pytest.raises(ConfigurationError):
        load_config(None, overrides={"query.mechanism": "gaussian"})
    cfg = load_config(
        None, overrides={"query.mechanism": "gaussian", "query.count": 0, "query.sigma": 1.0}
    )
    assert cfg["query.mechanism"] == "gaussian"


def test_default_out_root_env(monkeypatch, tmp_path):
    monkeypatch.setenv("DGD_OUT", str(tmp_path))
    assert default_out_root() == str(tmp_path)
    monkeypatch.delenv("DGD_OUT")
    assert default_out_root() == os.path.join(os.getcwd(), "runs")


# --- CLI exit codes and the tiny end-to-end run --------------------------


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny")
    cfg_path = root / "cfg.txt"
    cfg_path.write_text(TINY_CONFIG)
    out = root / "run"
    code = main(["--config", str(cfg_path), "--out", str(out), "run-all"])
    assert code == 0
    return str(cfg_path), str(out)


def test_run_all_produces_every_artifact(tiny_run):
    _, out = tiny_run
    for name in (
        "config.txt", "private.dgds", "test.dgds", "baseline.dgdw",
        "generator.dgdw", "synthetic.dgds", "vae_encoder.dgdw",
        "vae_decoder.dgdw", "labels.csv", "triples_manifest.json",
        "student.dgdw", "metrics.csv", "budget.json",
    ):
        assert os.path.exists(os.path.join(out, name)), name
    assert os.path.exists(os.path.join(out, "teachers", "manifest.json"))
    with open(os.path.join(out, "budget.json")) as fh:
        budget = json.load(fh)
    assert budget["query_count"] == 10


def test_budget_subcommand_exit_zero(tiny_run, capsys):
    cfg_path, out = tiny_run
    assert main(["--config", cfg_path, "--out", out, "budget"]) == 0
    assert "eps_total=" in capsys.readouterr().out


def test_exit_one_on_bad_config(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("nonsense.key = 1\n")
    assert main(["--config", str(bad), "--out", str(tmp_path / "r"), "budget"]) == 1


def test_exit_two_on_stage_failure(tmp_path):
    out = tmp_path / "run"
    out.mkdir()
    (out / "private.dgds").write_bytes(b"not a dataset file")
    assert main(["--out", str(out), "train-baseline"]) == 2


def test_exit_three_on_missing_victim(tmp_path):
    code = main(
        ["attack", "--victim", str(tmp_path / "nope.dgdw"), "--target-class", "0"]
    )
    assert code == 3


def test_resume_retrains_only_missing_stage(tiny_run):
    cfg_path, out = tiny_run
    student_path = os.path.join(out, "student.dgdw")
    with open(student_path, "rb") as fh:
        before = fh.read()
    untouched = ["baseline.dgdw", "generator.dgdw", "synthetic.dgds", "labels.csv"]
    stamps = {n: os.path.getmtime(os.path.join(out, n)) for n in untouched}
    os.remove(student_path)
    assert main(["--config", cfg_path, "--out", out, "--resume", "run-all"]) == 0
    for name in untouched:
        assert os.path.getmtime(os.path.join(out, name)) == stamps[name], name
    with open(student_path, "rb") as fh:
        assert fh.read() == before  # retrained stage is bit-identical


def test_single_stage_subcommand(tiny_run, capsys):
    cfg_path, out = tiny_run
    assert main(["--config", cfg_path, "--out", out, "--resume", "query"]) == 0
    assert "query: done" in capsys.readouterr().out


# --- reporting ----------------------------------------------------------


def test_emit_report_summarizes_runs(tiny_run, tmp_path):
    _, out = tiny_run
    report_dir = tmp_path / "report"
    summary = emit_report([out], str(report_dir))
    with open(summary) as fh:
        lines = fh.read().splitlines()
    assert lines[0] == "run_dir,query_count,noise_scale,eps_total,method,test_acc"
    assert len(lines) == 2 and lines[1].startswith(out)
    for curve in ("accuracy_vs_queries.csv", "budget_vs_queries.csv"):
        assert os.path.exists(report_dir / curve)


def test_summarize_run_requires_artifacts(tmp_path):
    with pytest.raises(ReportError, match="missing artifacts"):
        summarize_run(str(tmp_path))


def test_report_subcommand_exit_codes(tiny_run, tmp_path, capsys):
    _, out = tiny_run
    assert main(["report", out, "--report-out", str(tmp_path / "rep")]) == 0
    capsys.readouterr()
    assert main(["report", str(tmp_path / "empty"), "--report-out", str(tmp_path / "rep2")]) == 2


# --- inversion attack ---------------------------------------------------


def _diagonal_victim(k=4):
    victim = uniform_classifier(k, k)
    victim.entries["W0"][:, :] = np.eye(k)
    victim.entries["b0"][:] = 10.0  # keep every unit active near the origin
    victim.entries["W2"][:, :] = 5.0 * np.eye(k)
    return victim


def test_attack_recovers_target_class_direction():
    victim = _diagonal_victim()
    for target in range(4):
        x, trace = inversion_attack(victim, target, steps=300, lr=0.1, l2_weight=0.01, seed=0)
        assert int(np.argmax(x)) == target
        assert trace[-1] > 0.99
        assert trace[-1] >= trace[0]
        # recovered input aligns with the centered class indicator
        v = -np.ones(4) / 4
        v[target] += 1.0
        cosine = float(x @ v / (np.linalg.norm(x) * np.linalg.norm(v)))
        assert cosine > 0.99


def test_attack_validation_and_zero_steps():
    victim = _diagonal_victim()
    with pytest.raises(ConfigurationError):
        inversion_attack(victim, 9)
    with pytest.raises(ConfigurationError):
        inversion_attack(victim, 0, lr=0.0)
    x, trace = inversion_attack(victim, 0, steps=0)
    assert trace == [] and x.shape == (4,)


def test_attack_subcommand_prints_confidence(tmp_path, capsys):
    path = tmp_path / "victim.dgdw"
    write_checkpoint(_diagonal_victim(), str(path))
    code = main(["attack", "--victim", str(path), "--target-class", "1", "--steps", "50"])
    assert code == 0
    assert "final confidence" in capsys.readouterr().out
