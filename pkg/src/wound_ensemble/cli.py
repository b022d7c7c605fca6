"""Command-line entry point: ``wound-ensemble <subcommand> [options]``.

Stage subcommands (prepare, train-patch, train-whole, train-fusion, eval)
work on one round directory: ``<out>/pipeline`` for the fixed train/test
split, or ``<out>/round_<i>`` with ``--round i`` for one cross-validation
round. Each stage reads what the previous stages wrote there, so the stages
can run as separate processes.

Exit status: 0 success, 2 usage/config error, 3 data error, 4 training
error, 5 evaluation error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import StageError, UsageError, WoundEnsembleError
from .labels import LabelSpace, parse_codes


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment config (JSON)")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", type=Path, help="output directory (overrides the config)")
    common.add_argument("--mode", choices=["disjoint", "paper"], help="fold mode (overrides the config)")
    common.add_argument("--data", type=Path, help="dataset root (overrides the config)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="wound-ensemble", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    p.add_argument("--classes", default="D,S,V", help="wound class codes, e.g. S,V")
    p.add_argument("--images-per-class", type=int, default=50)
    p.add_argument("--size", type=int, nargs=2, default=[96, 96], metavar=("H", "W"))
    p.add_argument("--scale-mix", type=float, default=0.5, help="fraction of images with a small wound")
    p.add_argument("--context-rois", action="store_true", help="also emit BG and N ROIs")
    p.add_argument("--extra-test-fraction", type=float, default=0.0)

    for name, text in [
        ("prepare", "validate the dataset and write the round's split"),
        ("train-patch", "train the patch scorer (Classifier B)"),
        ("train-whole", "train the whole-image scorer (Classifier A)"),
        ("train-fusion", "train the fusion head"),
        ("eval", "evaluate A, B and the ensemble on the test ids"),
    ]:
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--round", type=int, help="work on cross-validation round i instead of the fixed split")

    p = sub.add_parser("crossval", parents=[common], help="run k-fold cross-validation end to end")
    p.add_argument("--k", type=int, help="number of folds (overrides the config)")
    p.add_argument("--rounds", type=int, nargs="+", help="only run these rounds (1-based)")

    p = sub.add_parser("report", parents=[common], help="write tables and plots from result.json files")
    p.add_argument("results", type=Path, help="a result.json or a directory searched for them")
    p.add_argument("--format", default="all", choices=["json", "csv", "png", "all"])
    return parser


def _config(args):
    from .harness.config import ExperimentConfig

    if args.config is not None:
        config = ExperimentConfig.load(args.config)
    else:
        config = ExperimentConfig(task=LabelSpace.of(parse_codes("S,V")))
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out_dir"] = str(args.out)
    if args.mode is not None:
        changes["mode"] = args.mode
    if args.data is not None:
        changes["data_root"] = str(args.data)
    return config.replace(**changes) if changes else config


def _runner(config, args, manifest, fresh: bool):
    from .harness.pipeline import RoundRunner, fixed_test_split, fold_plan

    out = Path(config.out_dir)
    if args.round is None:
        directory = out / "pipeline"
        if fresh:
            train, test = fixed_test_split(config, manifest)
            return RoundRunner(config, manifest, train, test, 0, directory)
    else:
        directory = out / f"round_{args.round}"
        if fresh:
            plan = fold_plan(config, manifest)
            if not 1 <= args.round <= len(plan.rounds):
                raise UsageError(f"--round must be in 1..{len(plan.rounds)}, got {args.round}")
            out.mkdir(parents=True, exist_ok=True)
            (out / "foldplan.json").write_text(json.dumps(plan.to_dict(), indent=1))
            train, test = plan.rounds[args.round - 1]
            return RoundRunner(config, manifest, train, test, args.round, directory)
    return RoundRunner.reopen(config, manifest, directory)


def _scorers(runner):
    from .scorer import load_scorer

    a = load_scorer(runner.dir / "whole_scorer")
    b = load_scorer(runner.dir / "patch_scorer")
    return a, b


def _stage(args) -> int:
    from .fusion import MLPHead
    from .harness.pipeline import resolve_manifest
    from .harness.reporting import write_report

    config = _config(args)
    manifest = resolve_manifest(config, None)
    name = args.command
    if name == "prepare":
        runner = _runner(config, args, manifest, fresh=True)
        split = runner.stage("prepare", runner.prepare)
        counts = {s: len(split.ids_in(s)) for s in ("train", "validation")}
        print(f"prepared {runner.dir}: {counts['train']} train / {counts['validation']} validation "
              f"/ {len(runner.test_ids)} test images")
        return 0

    runner = _runner(config, args, manifest, fresh=False)
    if name == "train-patch":
        runner.stage(name, runner.train_patch, runner.load_split())
    elif name == "train-whole":
        runner.stage(name, runner.train_whole, runner.load_split())
    elif name == "train-fusion":
        a, b = runner.stage(name, _scorers, runner)
        runner.stage(name, runner.train_fusion, a, b)
    else:
        a, b = runner.stage(name, _scorers, runner)
        head = runner.stage(name, MLPHead.load, runner.dir / "fusion_head.json")
        result = runner.stage(name, runner.evaluate, a, b, head)
        write_report([result], runner.dir / "report")
        for clf, metrics in ((c, result.headline(c)) for c in ("A", "B", "ensemble")):
            print(clf, " ".join(f"{k}={v:.4f}" for k, v in metrics.items()))
    print(f"{name} done: {runner.dir}")
    return 0


def _synth(args) -> int:
    from .harness.synthetic import SyntheticSpec, generate_synthetic

    out = args.out or args.data
    if out is None:
        raise UsageError("synth needs --out <dir>")
    spec = SyntheticSpec(
        classes=tuple(parse_codes(args.classes)),
        images_per_class=args.images_per_class,
        image_size=tuple(args.size),
        scale_mix=args.scale_mix,
        seed=args.seed or 0,
        context_rois=args.context_rois,
        extra_test_fraction=args.extra_test_fraction,
    )
    manifest = generate_synthetic(spec, out)
    print(f"wrote {len(manifest.images)} images and {len(manifest.rois)} ROIs to {out}")
    return 0


def _crossval(args) -> int:
    from .harness.pipeline import run_crossval
    from .harness.reporting import write_report

    config = _config(args)
    if args.k is not None:
        config = config.replace(k=args.k)  # validated by the config
    results, summary = run_crossval(config, config.k, rounds=args.rounds)
    write_report(results, Path(config.out_dir) / "report")
    for clf in ("A", "B", "ensemble"):
        mean = summary["mean"][clf]
        print(clf, " ".join(f"mean_{k}={v:.4f}" for k, v in mean.items()))
    return 0


def _report(args) -> int:
    from .harness.pipeline import RoundResult
    from .harness.reporting import write_report

    src = args.results
    if src.is_file():
        paths = [src]
    elif src.is_dir():
        paths = sorted(src.rglob("result.json"))
    else:
        raise UsageError(f"no such file or directory: {src}")
    try:
        results = [RoundResult.load(p) for p in paths]
    except (OSError, KeyError, ValueError) as exc:
        raise UsageError(f"cannot read results: {exc}") from exc
    results.sort(key=lambda r: r.round_index)
    out = args.out or (src if src.is_dir() else src.parent) / "report"
    written = write_report(results, out, args.format)
    print(f"wrote {len(written)} files to {out}")
    return 0


COMMANDS = {"synth": _synth, "crossval": _crossval, "report": _report}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        return COMMANDS.get(args.command, _stage)(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except WoundEnsembleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
