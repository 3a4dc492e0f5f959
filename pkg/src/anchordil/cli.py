"""Command-line experiment driver.

Subcommands: gen-data, train, eval, ablate, layer-search, id-compare.
All take a JSON config file plus repeated `--set dotted.key=value`
overrides; the resolved config is echoed beside every report. Exit
codes: 0 success, 2 invalid config, 3 mid-run numeric failure.

The default output directory comes from the config, overridable via the
ANCHORDIL_OUTDIR environment variable.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from .autodiff import ConfigurationError, NumericFailure
from .checkpoint import dump_checkpoint, load_checkpoint
from .config import ExperimentConfig, config_to_dict, load_config
from .datagen import save_feature_dataset
from .experiment import (domain_id_accuracy, evaluate_stage, prepare_data,
                         run_experiment)
from .identification import greedy_layer_search, make_bank
from .metrics import AccuracyMatrix, MetricsReport, matrix_csv, summary_text


def _outdir(cfg: ExperimentConfig) -> Path:
    out = Path(os.environ.get("ANCHORDIL_OUTDIR", cfg.output_dir))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo_config(cfg: ExperimentConfig, out: Path) -> None:
    with open(out / "resolved_config.json", "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(cfg), fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def cmd_gen_data(cfg: ExperimentConfig) -> int:
    out = _outdir(cfg)
    _echo_config(cfg, out)
    stream, text = prepare_data(cfg)
    from .anchors import save_text_anchors

    save_text_anchors(out / "anchors.jsonl", text)
    for ds in stream:
        save_feature_dataset(out / f"domain_{ds.domain}.jsonl", ds)
    print(f"wrote anchors and {len(stream)} domain files to {out}")
    return 0


def cmd_train(cfg: ExperimentConfig) -> int:
    out = _outdir(cfg)
    _echo_config(cfg, out)
    result = run_experiment(cfg)
    ckpt = out / "checkpoint.json"
    dump_checkpoint(ckpt, result.state, result.backbone, result.bank)
    _write(out / "metrics.csv", matrix_csv(result.matrix))
    _write(out / "summary.txt", summary_text(result.report))
    print(f"checkpoint: {ckpt}")
    print(f"reports: {out / 'metrics.csv'} {out / 'summary.txt'}")
    return 0


def cmd_eval(cfg: ExperimentConfig, checkpoint: str) -> int:
    out = _outdir(cfg)
    _echo_config(cfg, out)
    state, backbone, bank = load_checkpoint(checkpoint)
    stream, _ = prepare_data(cfg)
    matrix = AccuracyMatrix(n_domains=len(stream))
    evaluate_stage(cfg, state, backbone, stream, bank, len(stream), matrix)
    # only the final row is available from a finished checkpoint
    for j in range(1, len(stream)):
        for i in range(1, j + 1):
            matrix.record(j, i, *matrix.counts[(len(stream), i)])
    a_cls = domain_id_accuracy(cfg, backbone, stream, bank)
    report = MetricsReport.from_matrix(matrix, a_cls=a_cls)
    _write(out / "metrics.csv", matrix_csv(matrix))
    _write(out / "summary.txt", summary_text(report))
    print(f"reports: {out / 'metrics.csv'} {out / 'summary.txt'}")
    return 0


def cmd_layer_search(cfg: ExperimentConfig) -> int:
    out = _outdir(cfg)
    _echo_config(cfg, out)
    stream, _ = prepare_data(cfg)
    from .backbone import Backbone

    res = greedy_layer_search(stream, Backbone(cfg.backbone))
    lines = [f"best_layers {res.best_layers}",
             f"best_accuracy {float(res.best_accuracy):.6f}"]
    for l in sorted(res.single_layer_accuracy):
        lines.append(f"layer_{l}_accuracy "
                     f"{float(res.single_layer_accuracy[l]):.6f}")
    text = "\n".join(lines) + "\n"
    _write(out / "layer_search.txt", text)
    print(text, end="")
    return 0


def cmd_id_compare(cfg: ExperimentConfig) -> int:
    out = _outdir(cfg)
    _echo_config(cfg, out)
    rows = ["strategy,a_cls,a_a"]
    for strategy in ("MLFI", "NMC", "KNN", "PSS"):
        c = dataclasses.replace(cfg, id_strategy=strategy)
        result = run_experiment(c)
        a_cls = result.report.a_cls
        rows.append(f"{strategy},{float(a_cls):.6f},"
                    f"{float(result.report.a_a):.6f}")
    text = "\n".join(rows) + "\n"
    _write(out / "id_compare.csv", text)
    print(text, end="")
    return 0


def cmd_ablate(cfg: ExperimentConfig, lam_grid, np_grid, orders) -> int:
    out = _outdir(cfg)
    _echo_config(cfg, out)
    rows = ["sweep,setting,a_a,a_t,f_t"]

    def run_row(sweep: str, setting: str, c: ExperimentConfig):
        result = run_experiment(c)
        r = result.report
        f_t = f"{float(r.f_t):.6f}" if r.f_t is not None else ""
        rows.append(f"{sweep},{setting},{float(r.a_a):.6f},"
                    f"{float(r.a_t):.6f},{f_t}")

    for variant in ("KL", "L1", "L2", "none"):
        c = dataclasses.replace(
            cfg, loss=dataclasses.replace(cfg.loss, variant=variant))
        run_row("loss_variant", variant, c)
    for lam in lam_grid:
        c = dataclasses.replace(cfg, loss=dataclasses.replace(cfg.loss, lam=lam))
        run_row("lambda", str(lam), c)
    for n_p in np_grid:
        c = dataclasses.replace(
            cfg, optimizer=dataclasses.replace(cfg.optimizer, n_prompt=n_p))
        run_row("prompt_length", str(n_p), c)
    for share in (False, True):
        c = dataclasses.replace(cfg, share_mode=share)
        run_row("share_mode", str(share).lower(), c)
    for order in orders:
        c = dataclasses.replace(cfg, domain_order=list(order))
        run_row("domain_order", "-".join(map(str, order)), c)
    text = "\n".join(rows) + "\n"
    _write(out / "ablation.csv", text)
    print(f"report: {out / 'ablation.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="anchordil")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("gen-data", "train", "eval", "ablate", "layer-search",
                 "id-compare"):
        sp = sub.add_parser(name)
        sp.add_argument("config", help="JSON experiment config")
        sp.add_argument("--set", action="append", default=[], dest="overrides",
                        metavar="KEY=VALUE", help="override a config field")
        if name == "eval":
            sp.add_argument("--checkpoint", required=True)
        if name == "ablate":
            sp.add_argument("--lambda-grid", default="0,0.2,0.5,1.0")
            sp.add_argument("--prompt-grid", default="4,8,16")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
    except (ConfigurationError, FileNotFoundError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    try:
        if args.command == "gen-data":
            return cmd_gen_data(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "eval":
            return cmd_eval(cfg, args.checkpoint)
        if args.command == "layer-search":
            return cmd_layer_search(cfg)
        if args.command == "id-compare":
            return cmd_id_compare(cfg)
        if args.command == "ablate":
            lam_grid = [float(x) for x in args.lambda_grid.split(",") if x]
            np_grid = [int(x) for x in args.prompt_grid.split(",") if x]
            n = cfg.benchmark.n_domains
            orders = [list(range(1, n + 1)), list(range(n, 0, -1))]
            return cmd_ablate(cfg, lam_grid, np_grid, orders)
    except ConfigurationError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (NumericFailure, FloatingPointError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
