"""Command line entry point: ``s2pd <subcommand>``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

from . import bench as bn
from . import checkpoint as ckpt
from . import data as dp
from . import distill as ds
from . import evaluation as ev
from . import student as st
from . import teacher as tc
from .config import ConfigError, RunConfig
from .numerics import TrainingError
from .synth import SynthConfig, simulate

log = logging.getLogger("s2pd")


class UsageError(Exception):
    pass


def make_run_dir(out_dir: str | Path, prefix: str) -> Path:
    """Fresh timestamped directory; never reuses an existing one."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = root / f"{prefix}-{stamp}"
    path, n = base, 0
    while True:
        try:
            path.mkdir()
            return path
        except FileExistsError:
            n += 1
            path = Path(f"{base}-{n}")


def write_history(path: Path, history: list[ds.EpochRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_mae", "val_rmse"])
        for r in history:
            w.writerow([r.epoch, repr(r.train_loss), repr(r.val_mae), repr(r.val_rmse)])


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _require_file(path: str | None, what: str) -> Path:
    if not path:
        raise UsageError(f"--{what} is required")
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} file not found: {p}")
    return p


def resolve_config(args, model_path: Path | None = None) -> RunConfig:
    cfg = RunConfig()
    if model_path is not None and (model_path.parent / "config.json").is_file():
        cfg = RunConfig.from_file(model_path.parent / "config.json")
    if args.config:
        cfg = cfg.with_overrides(json.loads(_require_file(args.config, "config").read_text(encoding="utf-8")))
    overrides = {key: value for key, value in _flag_overrides(args).items() if value is not None}
    cfg = cfg.with_overrides(overrides)
    return cfg.validate()


_FLAG_KEYS = {
    "seed": "seed",
    "L": "data.L",
    "H": "data.H",
    "stride": "data.stride",
    "time_features": "data.time_features",
    "epochs": "train.epochs",
    "batch_size": "train.batch_size",
    "patience": "train.patience",
    "lr": "train.lr",
    "weight_decay": "train.weight_decay",
    "schedule": "train.schedule",
    "lam": "distill.lam",
    "gamma": "distill.gamma",
    "minutes": "synth.n_minutes",
    "regimes": "synth.n_regimes",
    "noise": "synth.noise_std",
    "batch": "bench.batch",
    "warmup": "bench.warmup",
    "iters": "bench.iters",
}


def _flag_overrides(args) -> dict:
    out = {key: getattr(args, flag, None) for flag, key in _FLAG_KEYS.items()}
    if getattr(args, "no_logit", False) or getattr(args, "no_distill", False):
        out["distill.use_logit"] = False
    if getattr(args, "no_distill", False):
        out["distill.lam"] = 0.0
    if getattr(args, "no_cache", False):
        out["distill.cache_teacher"] = False
    return out


def load_data(path: Path, cfg: RunConfig) -> dp.PreparedData:
    records = dp.read_csv(path)
    return dp.prepare(records, cfg.data.L, cfg.data.H, cfg.split_spec(), cfg.data.stride,
                      cfg.data.time_features, cfg.data.max_gap)


# subcommands -------------------------------------------------------------------


def cmd_synth(args) -> int:
    if not args.output:
        raise UsageError("-o/--output is required")
    cfg = resolve_config(args)
    sc = SynthConfig(seed=cfg.seed, n_minutes=cfg.synth.n_minutes, n_regimes=cfg.synth.n_regimes,
                     noise_std=cfg.synth.noise_std)
    trace = simulate(sc)
    dp.write_csv(args.output, trace.records)
    print(json.dumps({"output": str(args.output), "rows": len(trace.records), "transitions": trace.transitions}))
    return 0


def _eval_summary(model, prepared: dp.PreparedData) -> dict:
    out = {"test_one_step": ev.eval_one_step(model, prepared.test).to_dict()}
    if isinstance(model, tc.TeacherModel):
        out["test_trajectory"] = ev.eval_trajectory(model, prepared.test).to_dict()
    else:
        out["test_recursive"] = ev.eval_recursive(model, prepared.test).to_dict()
    return out


def cmd_train_teacher(args) -> int:
    data_path = _require_file(args.data, "data")
    cfg = resolve_config(args)
    prepared = load_data(data_path, cfg)
    run = make_run_dir(args.out_dir, "teacher")
    cfg.dump(run / "config.json")
    write_json(run / "scaler.json", prepared.scaler.to_dict())
    result = ds.train_teacher(prepared.train, prepared.val, cfg.teacher_config(), cfg.train_config())
    ckpt.save(result.model, run / "best.ckpt")
    final = tc.TeacherModel(cfg.teacher_config())
    final.load_state(result.final_state)
    ckpt.save(final, run / "final.ckpt")
    write_history(run / "metrics.csv", result.history)
    summary = {"run_dir": str(run), "best_epoch": result.best_epoch, **_eval_summary(result.model, prepared)}
    write_json(run / "eval.json", {k: v for k, v in summary.items() if k != "run_dir"})
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_distill_student(args) -> int:
    data_path = _require_file(args.data, "data")
    cfg = resolve_config(args)
    teacher = None
    if cfg.distill.use_logit or cfg.distill.lam > 0:
        teacher = ckpt.load(_require_file(args.teacher, "teacher"))
        if not isinstance(teacher, tc.TeacherModel):
            raise UsageError(f"{args.teacher} is not a teacher checkpoint")
        tcfg = teacher.config
        if tcfg.d_u != cfg.d_u:
            raise UsageError(f"teacher expects d_u={tcfg.d_u}, data config gives {cfg.d_u}")
        cfg = cfg.with_overrides({"data.L": tcfg.L, "data.H": tcfg.H}).validate()
    prepared = load_data(data_path, cfg)
    run = make_run_dir(args.out_dir, "student")
    cfg.dump(run / "config.json")
    write_json(run / "scaler.json", prepared.scaler.to_dict())
    result = ds.distill_student(prepared.train, prepared.val, teacher, cfg.student_config(), cfg.distill_config())
    ckpt.save(result.model, run / "best.ckpt")
    ckpt.save(result.model, run / "deploy.ckpt", skip_embedding=True)
    final = st.StudentModel(cfg.student_config())
    final.load_state(result.final_state)
    ckpt.save(final, run / "final.ckpt")
    write_history(run / "metrics.csv", result.history)
    summary = {"run_dir": str(run), "best_epoch": result.best_epoch, **_eval_summary(result.model, prepared)}
    write_json(run / "eval.json", {k: v for k, v in summary.items() if k != "run_dir"})
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_evaluate(args) -> int:
    model_path = _require_file(args.model, "model")
    data_path = _require_file(args.data, "data")
    model = ckpt.load(model_path, skip_embedding=args.skip_embed_head)
    cfg = resolve_config(args, model_path)
    if isinstance(model, tc.TeacherModel):
        cfg = cfg.with_overrides({"data.L": model.config.L, "data.H": model.config.H}).validate()
    prepared = load_data(data_path, cfg)
    mode = args.mode
    if mode == "one-step":
        report = ev.eval_one_step(model, prepared.test).to_dict()
    elif mode == "trajectory":
        if not isinstance(model, tc.TeacherModel):
            raise UsageError("trajectory mode needs a teacher checkpoint")
        report = ev.eval_trajectory(model, prepared.test).to_dict()
    elif mode == "recursive":
        if not isinstance(model, st.StudentModel):
            raise UsageError("recursive mode needs a student checkpoint")
        report = ev.eval_recursive(model, prepared.test).to_dict()
    else:
        out = Path(args.trace_out) if args.trace_out else make_run_dir(args.out_dir, "trace") / "trace.csv"
        rows = ev.export_trace(model, prepared.series["test"], args.steps, cfg.data.L, out,
                               recursive=args.recursive_trace)
        report = {"mode": "trace", "rows": len(rows), "path": str(out)}
    print(json.dumps(report, sort_keys=True))
    if not args.quiet and mode != "trace":
        print(ev.EvalReport(**report).table(), file=sys.stderr)
    return 0


def cmd_bench(args) -> int:
    model_path = _require_file(args.model, "model")
    cfg = resolve_config(args)
    try:
        report = bn.bench_latency(model_path, cfg.bench.batch, cfg.bench.warmup, cfg.bench.iters, cfg.seed,
                                  skip_embedding=args.skip_embed_head)
    except ckpt.CheckpointError as exc:
        raise UsageError(f"{model_path}: {exc}") from exc
    print(report.to_json())
    if args.output:
        Path(args.output).write_text(report.to_json() + "\n", encoding="utf-8")
    return 0


# parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    common.add_argument("--config", default=None, help="JSON file of flat section.key overrides")
    common.add_argument("--out-dir", default="runs", help="parent directory for run directories")
    common.add_argument("-v", "--verbose", action="store_true")

    embed_flag = argparse.ArgumentParser(add_help=False)
    embed_flag.add_argument("--skip-embed-head", action=argparse.BooleanOptionalAction, default=True,
                            help="load students without the training-only embedding head")

    parser = argparse.ArgumentParser(prog="s2pd", description="Sequence-to-point distilled load forecasting")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic telemetry CSV")
    p.add_argument("--minutes", type=int)
    p.add_argument("--regimes", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_synth)

    def training_flags(p):
        p.add_argument("--data", help="telemetry CSV")
        p.add_argument("--L", type=int)
        p.add_argument("--H", type=int)
        p.add_argument("--stride", type=int)
        p.add_argument("--time-features", dest="time_features", action="store_const", const=True)
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--patience", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--weight-decay", dest="weight_decay", type=float)
        p.add_argument("--schedule", choices=list(ds.SCHEDULES), help="learning-rate schedule (default cosine)")

    p = sub.add_parser("train-teacher", parents=[common], help="train the sequence teacher")
    training_flags(p)
    p.set_defaults(func=cmd_train_teacher)

    p = sub.add_parser("distill-student", parents=[common], help="distill the point-wise student")
    training_flags(p)
    p.add_argument("--teacher", help="frozen teacher checkpoint")
    p.add_argument("--lam", type=float, help="feature distillation weight")
    p.add_argument("--gamma", type=float, help="decay of the horizon projection weights")
    p.add_argument("--no-logit", action="store_true", help="drop the logit distillation term")
    p.add_argument("--no-distill", action="store_true", help="ground truth only (ablation)")
    p.add_argument("--no-cache", action="store_true", help="recompute teacher targets per batch")
    p.set_defaults(func=cmd_distill_student)

    p = sub.add_parser("evaluate", parents=[common, embed_flag], help="score a checkpoint on the test split")
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--mode", choices=["one-step", "trajectory", "recursive", "trace"], default="one-step")
    p.add_argument("--steps", type=int, default=300, help="trace length")
    p.add_argument("--trace-out", help="CSV path for --mode trace")
    p.add_argument("--recursive-trace", action="store_true", help="student trace feeds back its own forecasts")
    p.add_argument("--L", type=int)
    p.add_argument("--H", type=int)
    p.add_argument("--time-features", dest="time_features", action="store_const", const=True)
    p.add_argument("-q", "--quiet", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", parents=[common, embed_flag], help="deployment metrics and CPU latency")
    p.add_argument("--model")
    p.add_argument("--batch", type=int)
    p.add_argument("--warmup", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("-o", "--output", help="also write the JSON report here")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, dp.CsvFormatError, ckpt.CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
