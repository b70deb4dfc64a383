"""Command-line entry point: ``bmd label | run | ablate | gen-data``.

Every failure prints a single line starting with ``error:`` on stderr and
exits with status 2. Data files never contain timestamps; wall-clock timings
go to a ``run.log`` sidecar next to them.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

from .benchmark import generate_domain_pair, labeled_target
from .clustering import KMeansConfig
from .engine import STRATEGIES, ablation_suite, adapt, train_source
from .io import (
    ConfigError,
    FeatureBank,
    FormatError,
    RunConfig,
    load_run_config,
    parse_run_config,
    read_feature_bank,
    write_curves_csv,
    write_feature_bank,
    write_json,
    write_labels_csv,
)
from .labeling import (
    SamplingSpec,
    bmp_prototypes,
    bp_prototypes,
    mono_prototypes,
    mono_refine,
    naive_labels,
    nearest_prototype_labels,
)
from .numerics import softmax_rows
from .objectives import SoftmaxLinearModel, forward

log = logging.getLogger("bmd")

LABEL_STRATEGIES = ("naive", "mono", "bp", "bmp", "bmd-static")


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _workers() -> int:
    raw = os.environ.get("BMD_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise CliError(f"BMD_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise CliError(f"BMD_THREADS must be a positive integer, got {raw!r}")
    return n


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _sidecar(out: Path, command: str, seconds: float) -> None:
    stamp = time.strftime("%Y-%m-%dT%H:%M:%S")
    with open(out / "run.log", "a", encoding="utf-8") as fh:
        fh.write(f"{stamp} {command} wall_time={seconds:.3f}s\n")


# -- label -------------------------------------------------------------------

def _label(features, probs, strategy, S, r, rounds, seed):
    K = probs.shape[1]
    if strategy == "naive":
        return naive_labels(probs)
    if strategy == "mono":
        bank = mono_prototypes(features, probs)
        labels = nearest_prototype_labels(features, bank)
        if rounds >= 1:
            _, labels = mono_refine(features, labels, rounds, num_classes=K, initial=bank)
        return labels
    spec = SamplingSpec(num_classes=K, n_t=features.shape[0], ratio=r)
    if strategy == "bp":
        return bp_prototypes(features, probs, spec, rounds)[1]
    kcfg = KMeansConfig(num_clusters=S, seed=seed)
    return bmp_prototypes(features, probs, spec, S, kcfg, rounds)[1]


def cmd_label(args) -> None:
    bank = read_feature_bank(args.input)
    if bank.logits is None:
        raise CliError(f"strategy {args.strategy} needs classifier logits, but {args.input} has logits=0")
    probs = softmax_rows(bank.logits)
    labels = _label(bank.features, probs, args.strategy, args.S, args.r, args.rounds, args.seed)
    out = _out_dir(args.out)
    write_labels_csv(out / "labels.csv", labels.hard_labels, labels.soft_labels)


# -- run / ablate ------------------------------------------------------------

def _run_config(args) -> RunConfig:
    return load_run_config(args.config) if args.config else parse_run_config({})


def _single_run(cfg: RunConfig, seed: int, strategy: str | None):
    adaptation = replace(cfg.adaptation, seed=seed, **({"strategy": strategy} if strategy else {}))
    adaptation.validate()
    spec = cfg.spec_for_seed(seed)
    source, target = generate_domain_pair(spec)
    model = SoftmaxLinearModel.init(spec.D, cfg.model_dim, spec.K, seed=seed, activation=cfg.activation)
    model = train_source(model, source, replace(cfg.source, seed=seed))
    _, record = adapt(model, target, adaptation)
    return record


def cmd_run(args) -> None:
    cfg = _run_config(args)
    seed = cfg.adaptation.seed if args.seed is None else args.seed
    t0 = time.perf_counter()
    record = _single_run(cfg, seed, args.strategy)
    out = _out_dir(args.out)
    write_json(out / "record.json", {"config": cfg.to_dict(), "seed": seed, "record": record.to_dict()})
    write_curves_csv(out / "curves.csv", record)
    _sidecar(out, "run", time.perf_counter() - t0)


def _ablation_doc(cfg: RunConfig, table) -> dict:
    rows = []
    for row in table.rows:
        d = row.summary()
        d.update(final_acc=row.final_acc, final_cv=row.final_cv, epoch0_pseudo_acc=row.epoch0_pseudo_acc,
                 source_acc=row.source_acc)
        rows.append(d)
    return {"config": cfg.to_dict(), "seeds": list(table.seeds), "rows": rows}


def _write_ablation_csv(path: Path, table) -> None:
    cols = ["strategy", "seeds", "acc_mean", "acc_std", "cv_mean", "cv_std",
            "epoch0_pseudo_acc_mean", "epoch0_pseudo_acc_std", "source_acc_mean"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for s in table.summary():
            w.writerow([s[c] if c in ("strategy", "seeds") else repr(float(s[c])) for c in cols])


def cmd_ablate(args) -> None:
    cfg = _run_config(args)
    strategies = tuple(args.strategy) if args.strategy else cfg.strategies
    for s in strategies:
        if s not in STRATEGIES:
            raise CliError(f"unknown strategy {s!r}; valid: {', '.join(STRATEGIES)}")
    n_seeds = cfg.seeds if args.seeds is None else args.seeds
    first = cfg.first_seed if args.seed is None else args.seed
    t0 = time.perf_counter()
    table = ablation_suite(cfg.spec_for_seed, cfg.adaptation, seeds=range(first, first + n_seeds),
                           strategies=strategies, source_config=cfg.source, model_dim=cfg.model_dim,
                           workers=_workers(), activation=cfg.activation)
    out = _out_dir(args.out)
    write_json(out / "ablation.json", _ablation_doc(cfg, table))
    _write_ablation_csv(out / "ablation.csv", table)
    _sidecar(out, "ablate", time.perf_counter() - t0)


# -- gen-data ----------------------------------------------------------------

def cmd_gen_data(args) -> None:
    """Train a source model on a benchmark pair and export target features."""
    cfg = _run_config(args)
    seed = cfg.adaptation.seed if args.seed is None else args.seed
    spec = cfg.spec_for_seed(seed)
    source, target = generate_domain_pair(spec)
    if args.raw:
        x, logits = target.x, None
    else:
        model = SoftmaxLinearModel.init(spec.D, cfg.model_dim, spec.K, seed=seed, activation=cfg.activation)
        model = train_source(model, source, replace(cfg.source, seed=seed))
        x, _ = forward(model, target.x)
        logits = x @ model.classifier_weights.T + model.classifier_bias
    labels = labeled_target(spec).y if args.labels else None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_feature_bank(out, FeatureBank(x, spec.K, logits, labels))


# -- entry -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bmd", description="Prototype pseudo-labeling for source-free adaptation.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    lab = sub.add_parser("label", help="pseudo-label an exported feature bank")
    lab.add_argument("--input", required=True)
    lab.add_argument("--strategy", required=True, choices=LABEL_STRATEGIES)
    lab.add_argument("--S", type=_positive, default=4, help="prototypes per class (bmp, bmd-static)")
    lab.add_argument("--r", type=float, default=3.0, help="top-M selection ratio")
    lab.add_argument("--rounds", type=int, default=2, help="refinement rounds")
    lab.add_argument("--seed", type=_seed, default=0)
    lab.add_argument("--out", required=True)
    lab.set_defaults(func=cmd_label)

    run = sub.add_parser("run", help="source-train and adapt one benchmark instance")
    run.add_argument("--config")
    run.add_argument("--seed", type=_seed)
    run.add_argument("--strategy")
    run.add_argument("--out", required=True)
    run.set_defaults(func=cmd_run)

    abl = sub.add_parser("ablate", help="compare strategies over several seeds")
    abl.add_argument("--config")
    abl.add_argument("--seeds", type=_positive, help="number of seeds")
    abl.add_argument("--seed", type=_seed, help="first seed")
    abl.add_argument("--strategy", action="append", help="restrict to a strategy (repeatable)")
    abl.add_argument("--out", required=True)
    abl.set_defaults(func=cmd_ablate)

    gen = sub.add_parser("gen-data", help="emit a benchmark feature bank")
    gen.add_argument("--config")
    gen.add_argument("--seed", type=_seed)
    gen.add_argument("--raw", action="store_true", help="raw target inputs instead of model features")
    gen.add_argument("--labels", action="store_true", help="append ground-truth labels")
    gen.add_argument("--out", required=True, help="output file")
    gen.set_defaults(func=cmd_gen_data)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if getattr(args, "strategy", None) and args.command == "run" and args.strategy not in STRATEGIES:
            raise CliError(f"unknown strategy {args.strategy!r}; valid: {', '.join(STRATEGIES)}")
        args.func(args)
    except (CliError, ConfigError, FormatError, ValueError, OSError) as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {msg}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
