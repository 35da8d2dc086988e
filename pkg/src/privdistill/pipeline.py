"""Stage-by-stage orchestration of the full pipeline.

Stages run in order: private data -> baseline -> teachers -> generator ->
synthesize -> VAE -> query -> triples -> student, each writing its
artifacts into the run directory. With resume enabled a stage whose
artifacts already exist is skipped, so deleting one checkpoint retrains
only that stage (and those after it that are also missing).
"""

import json
import os

import numpy as np

from .accounting import (
    PrivacyLedger,
    latent_scale_epsilon,
    report_min,
    write_budget_report,
)
from .aggregation import AggregationConfig, label_query_batch, read_labels_csv, write_labels_csv
from .checkpoint import read_checkpoint, write_checkpoint
from .config import load_config
from .datasets import (
    make_digitgrid_dataset,
    make_mixture_dataset,
    partition_disjoint,
    read_dataset,
    split_query_pool,
    write_dataset,
)
from .errors import PrivDistillError, StageError
from .generator import GeneratorConfig, synthesize_dataset, train_generator
from .student import StudentConfig, StudentLossWeights, train_student
from .training import TeacherEnsemble, TrainConfig, evaluate_accuracy, train_classifier, train_teacher_ensemble
from .vae import VaeConfig, build_triples, read_triples, train_vae, write_triples

STAGES = (
    "gen-data",
    "train-baseline",
    "train-teachers",
    "train-generator",
    "synthesize",
    "train-vae",
    "query",
    "build-triples",
    "train-student",
)


def _paths(out_dir):
    return {
        "config": os.path.join(out_dir, "config.txt"),
        "private": os.path.join(out_dir, "private.dgds"),
        "test": os.path.join(out_dir, "test.dgds"),
        "baseline": os.path.join(out_dir, "baseline.dgdw"),
        "teacher_dir": os.path.join(out_dir, "teachers"),
        "teacher_manifest": os.path.join(out_dir, "teachers", "manifest.json"),
        "generator": os.path.join(out_dir, "generator.dgdw"),
        "synthetic": os.path.join(out_dir, "synthetic.dgds"),
        "encoder": os.path.join(out_dir, "vae_encoder.dgdw"),
        "decoder": os.path.join(out_dir, "vae_decoder.dgdw"),
        "labels": os.path.join(out_dir, "labels.csv"),
        "triples_manifest": os.path.join(out_dir, "triples_manifest.json"),
        "triples_prefix": os.path.join(out_dir, "triples"),
        "student": os.path.join(out_dir, "student.dgdw"),
        "metrics": os.path.join(out_dir, "metrics.csv"),
        "budget": os.path.join(out_dir, "budget.json"),
    }


def classifier_architecture(cfg):
    dim = 64 if cfg["data.kind"] == "digitgrid" else cfg["data.dim"]
    hidden = cfg["arch.hidden"]
    return [
        ("dense", dim, hidden),
        ("relu",),
        ("dense", hidden, cfg["data.classes"]),
        ("softmax",),
    ]


def _output_activation(cfg):
    return "sigmoid" if cfg["data.kind"] == "digitgrid" else "tanh"


class PipelineRun:
    """Executes pipeline stages against one run directory."""

    def __init__(self, cfg, out_dir, resume=False):
        self.cfg = cfg
        self.out_dir = out_dir
        self.resume = resume
        self.paths = _paths(out_dir)
        os.makedirs(out_dir, exist_ok=True)
        os.makedirs(self.paths["teacher_dir"], exist_ok=True)

    def _done(self, *artifact_keys):
        return self.resume and all(
            os.path.exists(self.paths[k]) for k in artifact_keys
        )

    def _run(self, stage, fn):
        try:
            return fn()
        except PrivDistillError as exc:
            raise StageError(stage, str(exc)) from exc

    # stages ------------------------------------------------------------
    def gen_data(self):
        if self._done("private", "test"):
            return
        cfg = self.cfg

        def build(seed):
            if cfg["data.kind"] == "mixture":
                return make_mixture_dataset(
                    cfg["data.classes"], cfg["data.dim"], cfg["data.per_class"],
                    cfg["data.spread"], seed,
                )
            return make_digitgrid_dataset(cfg["data.per_class"], cfg["data.noise"], seed)

        def run():
            train = build(cfg["run.seed"])
            test_cfg_per_class = cfg["data.test_per_class"]
            if cfg["data.kind"] == "mixture":
                # regenerate around the same centers so train/test match
                full = make_mixture_dataset(
                    cfg["data.classes"], cfg["data.dim"],
                    cfg["data.per_class"] + test_cfg_per_class,
                    cfg["data.spread"], cfg["run.seed"],
                )
                n_train = cfg["data.classes"] * cfg["data.per_class"]
                train = full.subset(np.arange(n_train))
                test = full.subset(np.arange(n_train, len(full)))
            else:
                test = make_digitgrid_dataset(
                    test_cfg_per_class, cfg["data.noise"], cfg["run.seed"] + 1
                )
            write_dataset(train, self.paths["private"])
            write_dataset(test, self.paths["test"])

        self._run("gen-data", run)

    def train_baseline(self):
        if self._done("baseline"):
            return

        def run():
            private = read_dataset(self.paths["private"])
            tc = TrainConfig(
                rounds=self.cfg["baseline.rounds"],
                batch_size=self.cfg["run.batch_size"],
                lr=self.cfg["baseline.lr"],
                seed=self.cfg["run.seed"],
            )
            baseline = train_classifier(private, classifier_architecture(self.cfg), tc)
            write_checkpoint(baseline, self.paths["baseline"])

        self._run("train-baseline", run)

    def train_teachers(self):
        if self._done("teacher_manifest"):
            return

        def run():
            private = read_dataset(self.paths["private"])
            n = self.cfg["teachers.count"]
            partition = partition_disjoint(private, n, self.cfg["run.seed"])
            tc = TrainConfig(
                rounds=self.cfg["teacher.rounds"],
                batch_size=self.cfg["run.batch_size"],
                lr=self.cfg["teacher.lr"],
                lr_schedule=self.cfg["teacher.lr_schedule"],
                seed=self.cfg["run.seed"] + 1000,
            )
            ensemble = train_teacher_ensemble(
                private, partition, classifier_architecture(self.cfg), tc
            )
            files = []
            for i, teacher in enumerate(ensemble.teachers):
                path = os.path.join(self.paths["teacher_dir"], f"teacher_{i:03d}.dgdw")
                write_checkpoint(teacher, path)
                files.append(os.path.basename(path))
            manifest = {
                "count": n,
                "architecture": [list(l) for l in ensemble.architecture],
                "seed": tc.seed,
                "files": files,
            }
            with open(self.paths["teacher_manifest"], "w") as fh:
                json.dump(manifest, fh, indent=2)
                fh.write("\n")

        self._run("train-teachers", run)

    def load_teachers(self):
        with open(self.paths["teacher_manifest"]) as fh:
            manifest = json.load(fh)
        teachers = [
            read_checkpoint(os.path.join(self.paths["teacher_dir"], name))
            for name in manifest["files"]
        ]
        return TeacherEnsemble(teachers, teachers[0].architecture)

    def train_generator(self):
        if self._done("generator"):
            return

        def run():
            baseline = read_checkpoint(self.paths["baseline"])
            gc = self.generator_config()
            gen = train_generator(baseline, baseline.input_dim(), gc)
            write_checkpoint(gen, self.paths["generator"])

        self._run("train-generator", run)

    def generator_config(self):
        return GeneratorConfig(
            latent_dim=self.cfg["generator.latent_dim"],
            hidden=self.cfg["generator.hidden"],
            alpha=self.cfg["generator.alpha"],
            beta=self.cfg["generator.beta"],
            batch_size=self.cfg["run.batch_size"],
            rounds=self.cfg["generator.rounds"],
            lr=self.cfg["generator.lr"],
            output_activation=_output_activation(self.cfg),
            output_scale=self.cfg["generator.output_scale"],
            seed=self.cfg["run.seed"] + 2000,
        )

    def synthesize(self):
        if self._done("synthetic"):
            return

        def run():
            gen = read_checkpoint(self.paths["generator"])
            private = read_dataset(self.paths["private"])
            count = self.cfg["synth.count"] or len(private)
            synthetic = synthesize_dataset(
                gen, count, self.cfg["run.seed"] + 3000, self.cfg["data.classes"]
            )
            write_dataset(synthetic, self.paths["synthetic"])

        self._run("synthesize", run)

    def train_vae(self):
        if self._done("encoder", "decoder"):
            return

        def run():
            synthetic = read_dataset(self.paths["synthetic"])
            vc = VaeConfig(
                latent_dim=self.cfg["vae.latent_dim"],
                hidden=self.cfg["vae.hidden"],
                rounds=self.cfg["vae.rounds"],
                batch_size=self.cfg["run.batch_size"],
                lr=self.cfg["vae.lr"],
                output_activation="sigmoid" if self.cfg["data.kind"] == "digitgrid" else "linear",
                seed=self.cfg["run.seed"] + 4000,
            )
            encoder, decoder = train_vae(synthetic, vc)
            write_checkpoint(encoder, self.paths["encoder"])
            write_checkpoint(decoder, self.paths["decoder"])

        self._run("train-vae", run)

    def query(self):
        if self._done("labels") or self.cfg["query.count"] == 0:
            return

        def run():
            synthetic = read_dataset(self.paths["synthetic"])
            queries, _ = split_query_pool(synthetic, self.cfg["query.count"])
            ensemble = self.load_teachers()
            ac = self.aggregation_config()
            labels, _count = label_query_batch(ensemble, queries, ac)
            write_labels_csv(labels, ac, self.paths["labels"])

        self._run("query", run)

    def aggregation_config(self):
        mech = self.cfg["query.mechanism"]
        return AggregationConfig(
            mechanism=mech,
            eps0=self.cfg["query.eps0"] if mech == "laplace" else None,
            sigma=self.cfg["query.sigma"] if mech == "gaussian" else None,
            seed=self.cfg["run.seed"] + 5000,
        )

    def build_triples(self):
        if self._done("triples_manifest"):
            return

        def run():
            synthetic = read_dataset(self.paths["synthetic"])
            _, pool = split_query_pool(synthetic, self.cfg["query.count"])
            encoder = read_checkpoint(self.paths["encoder"])
            decoder = read_checkpoint(self.paths["decoder"])
            triples = build_triples(
                encoder, decoder, pool,
                self.cfg["triples.radius"], self.cfg["triples.dp_scale"],
                self.cfg["run.seed"] + 6000,
            )
            write_triples(
                triples, self.cfg["data.classes"],
                self.paths["triples_prefix"], self.paths["triples_manifest"],
            )

        self._run("build-triples", run)

    def train_student(self):
        if self._done("student", "metrics", "budget"):
            return

        def run():
            synthetic = read_dataset(self.paths["synthetic"])
            query_count = self.cfg["query.count"]
            queries, _ = split_query_pool(synthetic, query_count)
            noisy = (
                [nl.label for nl in read_labels_csv(self.paths["labels"])]
                if query_count > 0
                else []
            )
            triples = read_triples(self.paths["triples_manifest"])
            weights = StudentLossWeights(
                w_sup=self.cfg["student.w_sup"] if query_count > 0 else 0.0,
                w_norm=self.cfg["student.w_norm"],
                w_tan=self.cfg["student.w_tan"],
                w_ent=self.cfg["student.w_ent"],
            )
            sc = StudentConfig(
                rounds=self.cfg["student.rounds"],
                batch_size=self.cfg["run.batch_size"],
                lr=self.cfg["student.lr"],
                seed=self.cfg["run.seed"] + 7000,
            )
            test = read_dataset(self.paths["test"])
            student = train_student(
                queries if query_count > 0 else None,
                noisy,
                triples,
                classifier_architecture(self.cfg),
                weights,
                sc,
                eval_ds=test,
                metrics_path=self.paths["metrics"],
            )
            write_checkpoint(student, self.paths["student"])
            self.write_budget(query_count)

        self._run("train-student", run)

    def write_budget(self, query_count):
        dp_scale = self.cfg["triples.dp_scale"]
        ledger = PrivacyLedger(
            eps0=self.cfg["query.eps0"],
            query_count=query_count,
            delta=self.cfg["privacy.delta"],
            eps1=latent_scale_epsilon(dp_scale, self.cfg["vae.latent_dim"]),
            latent_dim=self.cfg["vae.latent_dim"],
        )
        report = report_min(ledger, self.cfg["privacy.lambda_max"])
        write_budget_report(report, ledger, self.paths["budget"])
        return report

    def run_all(self):
        from .config import write_config

        write_config(self.cfg, self.paths["config"])
        self.gen_data()
        self.train_baseline()
        self.train_teachers()
        self.train_generator()
        self.synthesize()
        self.train_vae()
        self.query()
        self.build_triples()
        self.train_student()
        return self.paths

    def final_accuracy(self):
        student = read_checkpoint(self.paths["student"])
        test = read_dataset(self.paths["test"])
        return evaluate_accuracy(student, test)


def run_pipeline(config_path=None, out_dir=None, overrides=None, resume=False):
    cfg = load_config(config_path, overrides)
    if out_dir is None:
        from .config import default_out_root

        out_dir = os.path.join(default_out_root(), "run")
    run = PipelineRun(cfg, out_dir, resume=resume)
    run.run_all()
    return run
