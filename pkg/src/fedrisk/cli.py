"""Command-line entry point: ``fedrisk <command> [options]``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import runner
from .config import RunConfig
from .training import TrainingDiverged

log = logging.getLogger("fedrisk")


def _seed_list(text: str) -> tuple[int, ...]:
    try:
        seeds = tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}")
    if not seeds:
        raise argparse.ArgumentTypeError("empty seed list")
    return seeds


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--out", type=Path, help="output directory (overrides config 'out')")
    seeds = common.add_mutually_exclusive_group()
    seeds.add_argument("--seed", type=int, help="single seed")
    seeds.add_argument("--seeds", type=_seed_list, help="comma-separated seeds, e.g. 0,1,2")
    common.add_argument("--data", type=Path, help="OHLCV CSV (overrides data.csv)")
    common.add_argument("--alpha", type=float, help="threshold multiplier (overrides anomaly.alpha)")
    common.add_argument("--mode", choices=("global", "rolling"), help="threshold mode")
    common.add_argument("--segment", choices=("train", "val", "test", "all"),
                        help="rows to score (overrides data.segment)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="fedrisk", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="write a synthetic OHLCV series and its truth mask")
    sub.add_parser("train", parents=[common], help="fit one model per seed")
    for name, text in (("detect", "flag anomalies and score risk with trained checkpoints"),
                       ("forecast", "rolling and latest forecasts from trained checkpoints")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--checkpoint", type=Path,
                       help="checkpoint file (default: <out>/seed_<seed>/checkpoint.json)")
    ev = sub.add_parser("evaluate", parents=[common], help="metrics from produced artifacts")
    ev.add_argument("--truth", type=Path, help="truth CSV (date,is_anomaly)")
    ev.add_argument("--report", type=Path, help="anomaly report JSON")
    ev.add_argument("--forecasts", type=Path, help="forecasts CSV")
    ev.add_argument("--risk", type=Path, help="risk series CSV")
    rep = sub.add_parser("report", parents=[common],
                         help="train, detect, forecast and evaluate every seed, then aggregate")
    rep.add_argument("--truth", type=Path, help="truth CSV when --data is given")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config)
    if args.out is not None:
        cfg.out = str(args.out)
    if args.seed is not None:
        cfg.train = replace(cfg.train, seeds=(args.seed,))
        if args.command == "synth":
            cfg.synth = replace(cfg.synth, seed=args.seed)
    elif args.seeds is not None:
        cfg.train = replace(cfg.train, seeds=args.seeds)
    if args.data is not None:
        cfg.data = replace(cfg.data, csv=str(args.data))
    if args.alpha is not None:
        cfg.anomaly = replace(cfg.anomaly, alpha=args.alpha)
    if args.mode is not None:
        cfg.anomaly = replace(cfg.anomaly, mode=args.mode)
    if args.segment is not None:
        cfg.data = replace(cfg.data, segment=args.segment)
    return cfg


def _checkpoints(args, cfg: RunConfig, out: Path) -> list[tuple[int | None, Path, Path]]:
    """(seed, checkpoint, artifact dir) for each requested model."""
    if getattr(args, "checkpoint", None) is not None:
        return [(None, args.checkpoint, out)]
    return [(s, runner.seed_dir(out, s) / "checkpoint.json", runner.seed_dir(out, s)) for s in cfg.seeds]


def cmd_synth(cfg: RunConfig, args, out: Path) -> None:
    data, truth = runner.run_synth(cfg, out)
    print(f"wrote {data} and {truth}")


def cmd_train(cfg: RunConfig, args, out: Path) -> None:
    frame = runner.load_data(cfg)
    for seed in cfg.seeds:
        res = runner.run_train(cfg, frame, seed, runner.seed_dir(out, seed))
        tlog = res["log"]
        print(f"seed {seed}: best epoch {tlog.best_epoch} val {tlog.best_val:.6g} "
              f"({tlog.stop_reason}); checkpoint sha256 {res['sha256']}")


def cmd_detect(cfg: RunConfig, args, out: Path) -> None:
    frame = runner.load_data(cfg)
    for seed, ckpt, sdir in _checkpoints(args, cfg, out):
        model, scaler, extra = runner.load_trained(ckpt)
        det, _ = runner.run_detect(cfg, model, scaler, extra, frame, sdir)
        rep = det.report
        print(f"{ckpt}: {int(rep.flags.sum())} of {len(rep.flags)} rows flagged "
              f"(theta {rep.stats.theta:.6g}) -> {sdir / 'anomaly.json'}")


def cmd_forecast(cfg: RunConfig, args, out: Path) -> None:
    frame = runner.load_data(cfg)
    for seed, ckpt, sdir in _checkpoints(args, cfg, out):
        model, scaler, _ = runner.load_trained(ckpt)
        fs = runner.run_forecast(cfg, model, scaler, frame, sdir)
        print(f"{ckpt}: {len(fs.end_dates)} rolling forecasts -> {sdir / 'forecasts.csv'}")


def cmd_evaluate(cfg: RunConfig, args, out: Path) -> None:
    if not any((args.truth, args.report, args.forecasts, args.risk)):
        raise ValueError("evaluate needs at least one of --truth/--report, --forecasts, --risk")
    report, baseline = runner.evaluate_files(args.truth, args.report, args.forecasts, args.risk)
    runner.write_eval(report, baseline, out)
    sys.stdout.write(report.to_csv())


def cmd_report(cfg: RunConfig, args, out: Path) -> None:
    results = runner.run_report(cfg, out, args.truth)
    for seed, res in results.items():
        r = res["report"]
        print(f"seed {seed}: f1 {r.f1:.4f} rmse {r.rmse:.6g} "
              f"persistence rmse {res['baseline'].get('persistence_rmse', float('nan')):.6g} "
              f"auc {r.auc:.4f} train {res['seconds']:.1f}s")
    print(f"aggregate -> {out / 'aggregate.csv'}")


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "detect": cmd_detect,
            "forecast": cmd_forecast, "evaluate": cmd_evaluate, "report": cmd_report}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        cfg.save(out / "config.resolved.json")
        COMMANDS[args.command](cfg, args, out)
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 3
    except (FileNotFoundError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
