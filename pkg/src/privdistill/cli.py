"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 stage failure,
3 IO/format error.
"""

import argparse
import os
import sys

import numpy as np

from .accounting import PrivacyLedger, latent_scale_epsilon, report_min, write_budget_report
from .checkpoint import read_checkpoint
from .config import default_out_root, load_config
from .datasets import digit_templates
from .errors import ConfigurationError, FormatError, PrivDistillError, StageError
from .attack import inversion_attack
from .pipeline import PipelineRun, STAGES
from .reporting import emit_report


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="privdistill",
        description="Privacy-preserving student training via teacher "
        "distillation and data-free generation.",
    )
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--seed", type=int, help="override run.seed")
    parser.add_argument("--out", help="run directory (default $DGD_OUT/run)")
    parser.add_argument("--jobs", type=int, default=1, help="worker cap (stages run serially)")
    parser.add_argument("--resume", action="store_true", help="skip stages with existing artifacts")
    sub = parser.add_subparsers(dest="command", required=True)
    for stage in STAGES:
        sub.add_parser(stage, help=f"run the {stage} stage")
    sub.add_parser("run-all", help="run every stage in order")
    attack_p = sub.add_parser("attack", help="model-inversion probe against a checkpoint")
    attack_p.add_argument("--victim", required=True, help="checkpoint path")
    attack_p.add_argument("--target-class", type=int, required=True)
    attack_p.add_argument("--steps", type=int, default=200)
    attack_p.add_argument("--lr", type=float, default=0.1)
    attack_p.add_argument("--l2-weight", type=float, default=0.01)
    sub.add_parser("budget", help="print the budget report for the configured run")
    report_p = sub.add_parser("report", help="aggregate run directories into summary CSVs")
    report_p.add_argument("run_dirs", nargs="+")
    report_p.add_argument("--report-out", default="report")
    return parser


_STAGE_METHODS = {
    "gen-data": "gen_data",
    "train-baseline": "train_baseline",
    "train-teachers": "train_teachers",
    "train-generator": "train_generator",
    "synthesize": "synthesize",
    "train-vae": "train_vae",
    "query": "query",
    "build-triples": "build_triples",
    "train-student": "train_student",
}


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (ConfigurationError,) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except StageError as exc:
        print(f"stage failure: {exc}", file=sys.stderr)
        return 2
    except (FormatError, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3
    except PrivDistillError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args):
    if args.command == "report":
        path = emit_report(args.run_dirs, args.report_out)
        print(path)
        return 0
    if args.command == "attack":
        victim = read_checkpoint(args.victim)
        x, trace = inversion_attack(
            victim, args.target_class, args.steps, args.lr, args.l2_weight,
            seed=args.seed or 0,
        )
        final = trace[-1] if trace else float("nan")
        print(f"final confidence {final:.4f}")
        templates = digit_templates()
        if x.shape[0] == templates.shape[1]:
            nearest = int(np.abs(templates - np.clip(x, 0, 1)).sum(axis=1).argmin())
            print(f"nearest digit template: {nearest}")
        return 0

    overrides = {}
    if args.seed is not None:
        overrides["run.seed"] = args.seed
    cfg = load_config(args.config, overrides)
    out_dir = args.out or os.path.join(default_out_root(), "run")
    run = PipelineRun(cfg, out_dir, resume=args.resume)
    if args.command == "budget":
        ledger = PrivacyLedger(
            eps0=cfg["query.eps0"],
            query_count=cfg["query.count"],
            delta=cfg["privacy.delta"],
            eps1=latent_scale_epsilon(cfg["triples.dp_scale"], cfg["vae.latent_dim"]),
            latent_dim=cfg["vae.latent_dim"],
        )
        report = report_min(ledger, cfg["privacy.lambda_max"])
        write_budget_report(report, ledger, run.paths["budget"])
        print(f"{report.method}: eps_total={report.eps_total:.4f} delta={report.delta}")
        return 0
    if args.command == "run-all":
        run.run_all()
        print(f"run complete: {out_dir} (test accuracy {run.final_accuracy():.4f})")
        return 0
    getattr(run, _STAGE_METHODS[args.command])()
    print(f"{args.command}: done")
    return 0


if __name__ == "__main__":
    sys.exit(main())
