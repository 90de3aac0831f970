"""Command-line entry points: train, sample, eval, ablate, synth, serve.

Every command is deterministic given its flags and config; all seeds are
explicit. Exit codes: 0 success, 1 configuration/usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import replace

from . import dataio, metrics
from .config import AppConfig, ConfigError, load_config
from .denoiser import encode_condition, load_params, save_params, train
from .diffusion import SamplerConfig, build_schedule, sample
from .layout import rasterize, write_png, write_ppm
from .metrics import (
    DiffusionLayoutModel,
    EvalConfig,
    IdentityModel,
    ablation_suite,
    eval_table,
    evaluate,
    report_table,
)
from .server import StudioApp, serve


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="layoutforge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="path to the JSON config file")

    p = sub.add_parser("train", parents=[common], help="train denoiser weights")
    p.add_argument("--corpus", help="corpus file (JSON lines)")
    p.add_argument("--synth-n", type=int, help="generate a synthetic corpus of this size")
    p.add_argument("--synth-seed", type=int, default=7)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="weights output path")

    p = sub.add_parser("sample", parents=[common], help="generate one layout")
    p.add_argument("--weights", required=True)
    p.add_argument("--prompt", default="")
    p.add_argument("--sketch-file", help="JSON file with 64 sketch values")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--no-projection", action="store_true")
    p.add_argument("--out", help="layout JSON output path (default stdout)")
    p.add_argument("--raster", help="raster output path (.png or .ppm)")

    p = sub.add_parser("eval", parents=[common], help="evaluate a model on a corpus")
    p.add_argument("--weights")
    p.add_argument("--corpus", required=True)
    p.add_argument("--stub", choices=["identity", "random"], help="use a stub model")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-items", type=int)
    p.add_argument("--no-feedback", action="store_true")
    p.add_argument("--out", help="report JSON output path")
    p.add_argument("--table", help="text table output path")
    p.add_argument("--csv", help="per-item CSV output path")

    p = sub.add_parser("ablate", parents=[common], help="run the four-variant ablation")
    p.add_argument("--corpus")
    p.add_argument("--synth-n", type=int)
    p.add_argument("--synth-seed", type=int, default=7)
    p.add_argument("--epochs", type=int)
    p.add_argument("--max-items", type=int)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic corpus")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--split-ratio", type=float)
    p.add_argument("--split-seed", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("serve", parents=[common], help="run the HTTP studio service")
    p.add_argument("--weights", required=True)
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--static-dir", help="directory with the built studio UI")

    return parser


def _load_corpus_arg(args, cfg: AppConfig, require_split: bool = False) -> dataio.Corpus:
    if getattr(args, "corpus", None):
        if not os.path.exists(args.corpus):
            raise DataError(f"corpus file not found: {args.corpus}")
        corpus = dataio.load_corpus(args.corpus)
    elif getattr(args, "synth_n", None):
        corpus = dataio.synth_corpus(args.synth_n, args.synth_seed)
    else:
        raise DataError("no corpus: pass --corpus FILE or --synth-n N")
    if require_split and not corpus.train_idx:
        corpus = dataio.split(
            corpus, cfg["eval"]["split_ratio"], cfg["seeds"]["split"]
        )
    return corpus


def _load_model_files(path: str, cfg: AppConfig):
    if not os.path.exists(path):
        raise DataError(f"weights file not found: {path}")
    params = load_params(path)
    sidecar_path = path + ".json"
    T, b0, b1 = cfg.schedule_args()
    if os.path.exists(sidecar_path):
        with open(sidecar_path) as fh:
            sidecar = json.load(fh)
        sched_doc = sidecar.get("schedule")
        if sched_doc:
            T, b0, b1 = sched_doc["T"], sched_doc["beta_start"], sched_doc["beta_end"]
    sched = build_schedule(T, b0, b1)
    if sched.T != params.T:
        raise DataError(f"schedule T={sched.T} does not match weights T={params.T}")
    return params, sched


def _weights_version(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()[:12]


def cmd_train(args, cfg: AppConfig) -> int:
    corpus = _load_corpus_arg(args, cfg)
    overrides = {}
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if args.seed is not None:
        overrides["seed"] = args.seed
    train_cfg = cfg.train_config(**overrides)
    items = corpus.train_items() if corpus.train_idx else corpus.items
    if len(items) < train_cfg.batch_size:
        raise DataError(
            f"corpus has {len(items)} training items; batch_size is {train_cfg.batch_size}"
        )
    sched = build_schedule(*cfg.schedule_args())
    params = train(
        items,
        train_cfg,
        sched,
        rules=cfg.rule_config(),
        on_epoch=lambda i, loss: print(f"epoch {i} loss {loss:.6f}"),
    )
    save_params(
        params,
        args.out,
        sidecar_extra={
            "schedule": sched.to_json_dict(),
            "train_config": train_cfg.__dict__,
            "corpus_provenance": corpus.provenance,
        },
    )
    print(f"wrote {args.out}")
    return 0


def _sampler_config(args, cfg: AppConfig, sched, condition) -> SamplerConfig:
    projection_every = 0 if args.no_projection else cfg["sampler"]["projection_every"]
    return SamplerConfig(
        seed=args.seed,
        steps=sched.T,
        condition=condition,
        projection_every=projection_every,
        rules=cfg.rule_config(),
    )


def cmd_sample(args, cfg: AppConfig) -> int:
    params, sched = _load_model_files(args.weights, cfg)
    sketch = None
    if args.sketch_file:
        if not os.path.exists(args.sketch_file):
            raise DataError(f"sketch file not found: {args.sketch_file}")
        with open(args.sketch_file) as fh:
            sketch = json.load(fh)
    condition = encode_condition(args.prompt, sketch)
    layout = sample(_sampler_config(args, cfg, sched, condition), params, sched)
    text = layout.to_json()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    if args.raster:
        img = rasterize(layout)
        if args.raster.endswith(".ppm"):
            write_ppm(img, args.raster)
        else:
            write_png(img, args.raster)
    return 0


def cmd_eval(args, cfg: AppConfig) -> int:
    corpus = _load_corpus_arg(args, cfg, require_split=True)
    if args.stub == "identity":
        model = IdentityModel([gt for gt, _ in corpus.val_items()])
    elif args.stub == "random":
        model = metrics.RandomModel(seed=cfg["seeds"]["eval"])
    else:
        if not args.weights:
            raise DataError("eval needs --weights or --stub")
        params, sched = _load_model_files(args.weights, cfg)
        model = DiffusionLayoutModel(
            params,
            sched,
            projection_every=cfg["sampler"]["projection_every"],
            rule_cfg=cfg.rule_config(),
        )
    eval_cfg = EvalConfig(
        seed=args.seed if args.seed is not None else cfg["seeds"]["eval"],
        max_items=args.max_items if args.max_items is not None else cfg["eval"]["max_items"],
        apply_feedback=cfg["eval"]["apply_feedback"] and not args.no_feedback,
        rule_cfg=cfg.rule_config(),
    )
    rows: list = []
    report = evaluate(model, corpus, eval_cfg, per_item_sink=rows)
    table = eval_table(report)
    print(table)
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    if args.table:
        with open(args.table, "w") as fh:
            fh.write(table + "\n")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
    return 0


def cmd_ablate(args, cfg: AppConfig) -> int:
    corpus = _load_corpus_arg(args, cfg, require_split=True)
    overrides = {}
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    base_cfg = cfg.train_config(**overrides)
    n_train = len(corpus.train_items())
    if n_train < base_cfg.batch_size:
        base_cfg = replace(base_cfg, batch_size=max(1, n_train // 2))
    eval_cfg = EvalConfig(
        seed=cfg["seeds"]["eval"],
        max_items=args.max_items if args.max_items is not None else cfg["eval"]["max_items"],
        rule_cfg=cfg.rule_config(),
    )
    rows = ablation_suite(
        corpus,
        base_cfg,
        build_schedule(*cfg.schedule_args()),
        eval_cfg=eval_cfg,
        rule_cfg=cfg.rule_config(),
        projection_every=cfg["sampler"]["projection_every"],
    )
    os.makedirs(args.out_dir, exist_ok=True)
    table = report_table(rows)
    print(table)
    with open(os.path.join(args.out_dir, "ablation.txt"), "w") as fh:
        fh.write(table + "\n")
    with open(os.path.join(args.out_dir, "ablation.json"), "w") as fh:
        json.dump([row.to_json_dict() for row in rows], fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


def cmd_synth(args, cfg: AppConfig) -> int:
    if args.n < 1:
        raise DataError(f"corpus size must be >= 1, got {args.n}")
    corpus = dataio.synth_corpus(args.n, args.seed)
    if args.split_ratio is not None:
        split_seed = args.split_seed if args.split_seed is not None else cfg["seeds"]["split"]
        corpus = dataio.split(corpus, args.split_ratio, split_seed)
    dataio.save_corpus(corpus, args.out)
    print(f"wrote {args.out} ({args.n} items)")
    return 0


def cmd_serve(args, cfg: AppConfig) -> int:
    params, sched = _load_model_files(args.weights, cfg)
    app = StudioApp(
        params,
        sched,
        rule_cfg=cfg.rule_config(),
        projection_every=cfg["sampler"]["projection_every"],
        static_dir=args.static_dir or cfg["paths"]["static_dir"],
        model_version=_weights_version(args.weights),
    )
    host = args.host or cfg["server"]["host"]
    port = args.port if args.port is not None else cfg["server"]["port"]
    serve(app, host, port)
    return 0


_COMMANDS = {
    "train": cmd_train,
    "sample": cmd_sample,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "synth": cmd_synth,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("LAYOUTFORGE_LOG", "WARNING"))
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code or 0
    try:
        cfg = load_config(args.config)
        return _COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (DataError, ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
