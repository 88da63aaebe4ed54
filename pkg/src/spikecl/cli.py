"""Command-line experiment runner.

Subcommands: ``run`` (one method, all configured seeds), ``sweep``
(repeat over a lambda list) and ``importance-dump`` (re-derive the
firing-regularity report from a saved checkpoint).  All outputs are
plain CSV/JSON; CSVs contain no timestamps so identical configs produce
byte-identical files.

Exit codes: 0 success, 2 configuration error (argparse uses the same
code for usage errors), 3 data error (missing/corrupt data files or
checkpoints), 4 runtime failure.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import (
    BENCHMARKS,
    METHODS,
    ConfigError,
    _parse_seeds,
    load_config,
)
from .continual import run_sequence
from .data import DataError, build_permuted, build_split, build_synthetic, load_idx_dir
from .importance import collect_spike_record, importance_report
from .network import LIFConfig
from .training import TrainParams


def _fmt(v):
    return f"{v:.10g}"


def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)


def _write_text(path, text):
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write(text)
    os.replace(tmp, path)


def _load_base(cfg):
    """Load the IDX train/test pair once per invocation; synthetic needs none."""
    if cfg.benchmark == "synthetic":
        return None
    return load_idx_dir(cfg.data_dir)


def build_tasks(cfg, seed, base=None):
    """Materialize the configured benchmark for one seed.

    Split benchmarks are seed-independent (fixed class pairs); permuted
    and synthetic derive their permutations/prototypes from the run seed
    so different seeds are fully independent repetitions.
    """
    if cfg.benchmark == "synthetic":
        return build_synthetic(
            num_tasks=cfg.num_tasks, classes=2,
            train_per_class=cfg.synthetic_train,
            test_per_class=cfg.synthetic_test,
            dim=cfg.synthetic_dim, noise=cfg.synthetic_noise, seed=seed,
            timesteps=cfg.timesteps, gain=cfg.gain,
        )
    train, test = base if base is not None else load_idx_dir(cfg.data_dir)
    if cfg.benchmark == "permuted-mnist":
        return build_permuted(
            train, test, num_tasks=cfg.num_tasks, seed=seed,
            timesteps=cfg.timesteps, gain=cfg.gain,
            train_cap=cfg.train_cap, test_cap=cfg.test_cap,
        )
    # split-mnist and split-fashionmnist share the pair structure; the
    # data directory decides which dataset is being split
    return build_split(
        train, test, timesteps=cfg.timesteps, gain=cfg.gain,
        train_cap=cfg.train_cap, test_cap=cfg.test_cap,
        name=cfg.benchmark,
    )


def _run_one_seed(cfg, seed, base, on_task_complete=None):
    tasks = build_tasks(cfg, seed, base)
    return run_sequence(
        tasks, cfg.method, lam=cfg.lam, seed=seed,
        hidden_size=cfg.hidden_size,
        lif_cfg=LIFConfig(timesteps=cfg.timesteps),
        train_params=TrainParams(
            epochs=cfg.epochs, batch_size=cfg.batch_size, lr=cfg.lr
        ),
        importance_samples=cfg.importance_samples,
        on_task_complete=on_task_complete,
    )


METRICS_HEADER = "method,lambda,seed,aa,bwt,af"


def _metrics_rows(results):
    """One CSV row per seed; cross-seed stats live in run.json."""
    lines = []
    for result in results:
        report = result.metrics()
        lines.append(",".join([
            result.method, _fmt(result.lam), str(result.seed),
            _fmt(report.aa), _fmt(report.bwt), _fmt(report.af),
        ]))
    return lines


def _aggregate(results):
    """Mean and population std of each metric across seeds."""
    reports = [r.metrics() for r in results]
    out = {}
    for name in ("aa", "bwt", "af"):
        values = np.array([getattr(rep, name) for rep in reports])
        out[f"{name}_mean"] = float(values.mean())
        out[f"{name}_std"] = float(values.std())
    return out


def _result_json(result):
    report = result.metrics()
    return {
        "seed": result.seed,
        "method": result.method,
        "lambda": result.lam,
        "metrics": report.to_dict(),
        "matrix": [
            [None if np.isnan(v) else float(v) for v in row]
            for row in result.matrix.values
        ],
        "tasks": [
            {
                "task_id": log.task_id,
                "trunk_drift": log.trunk_drift,
                "accuracies": [float(a) for a in log.accuracies],
                "epochs": [
                    {"loss": e.loss, "accuracy": e.accuracy}
                    for e in log.epochs
                ],
            }
            for log in result.logs
        ],
    }


def cmd_run(cfg):
    started = time.perf_counter()
    base = _load_base(cfg)
    _ensure_dir(cfg.out_dir)
    ckpt_dir = os.path.join(cfg.out_dir, "checkpoints")
    imp_dir = os.path.join(cfg.out_dir, "importance")
    _ensure_dir(ckpt_dir)
    _ensure_dir(imp_dir)

    results = []
    for seed in cfg.seeds:
        def checkpointer(task_id, net, seed=seed):
            save_checkpoint(
                os.path.join(ckpt_dir, f"seed{seed}_task{task_id}.ckpt"), net
            )

        result = _run_one_seed(cfg, seed, base, on_task_complete=checkpointer)
        results.append(result)
        _write_text(
            os.path.join(cfg.out_dir, f"rmatrix_seed{seed}.csv"),
            result.matrix.to_csv(),
        )
        for vec in result.importances:
            _write_text(
                os.path.join(imp_dir, f"seed{seed}_task{vec.task_id}.json"),
                json.dumps(vec.to_json_dict(), indent=2, sort_keys=True) + "\n",
            )
        report = result.metrics()
        print(f"seed {seed}: AA={report.aa:.4f} BWT={report.bwt:+.4f} "
              f"AF={report.af:.4f}")

    _write_text(
        os.path.join(cfg.out_dir, "metrics.csv"),
        "\n".join([METRICS_HEADER] + _metrics_rows(results)) + "\n",
    )
    record = {
        "engine_version": __version__,
        "config": cfg.to_dict(),
        "aggregate": _aggregate(results),
        "runs": [_result_json(r) for r in results],
        "wall_clock_seconds": time.perf_counter() - started,
    }
    _write_text(
        os.path.join(cfg.out_dir, "run.json"),
        json.dumps(record, indent=2, sort_keys=True) + "\n",
    )
    print(f"wrote {os.path.join(cfg.out_dir, 'metrics.csv')}")
    return 0


SWEEP_HEADER = "lambda,aa_mean,aa_std,af_mean,af_std"


def cmd_sweep(cfg, lambdas):
    if len(lambdas) < 2:
        raise ConfigError("a sweep needs at least 2 lambda values")
    base = _load_base(cfg)
    _ensure_dir(cfg.out_dir)
    lines = [SWEEP_HEADER]
    for lam in lambdas:
        aa, af, drift = [], [], []
        for seed in cfg.seeds:
            tasks = build_tasks(cfg, seed, base)
            result = run_sequence(
                tasks, cfg.method, lam=lam, seed=seed,
                hidden_size=cfg.hidden_size,
                lif_cfg=LIFConfig(timesteps=cfg.timesteps),
                train_params=TrainParams(
                    epochs=cfg.epochs, batch_size=cfg.batch_size, lr=cfg.lr
                ),
                importance_samples=cfg.importance_samples,
            )
            report = result.metrics()
            aa.append(report.aa)
            af.append(report.af)
            # drift of the trunk away from its post-task-1 anchor
            drift.append(result.logs[1].trunk_drift)
        aa, af, drift = np.array(aa), np.array(af), np.array(drift)
        lines.append(",".join([
            _fmt(lam), _fmt(aa.mean()), _fmt(aa.std()),
            _fmt(af.mean()), _fmt(af.std()),
        ]))
        print(f"lambda {lam:g}: AA={aa.mean():.4f} AF={af.mean():.4f} "
              f"drift={drift.mean():.4f}")
    path = os.path.join(cfg.out_dir, "sweep.csv")
    _write_text(path, "\n".join(lines) + "\n")
    print(f"wrote {path}")
    return 0


def cmd_importance_dump(cfg, checkpoint_path, task_id=None, seed=None, out=None):
    net = load_checkpoint(checkpoint_path)
    if net.num_heads == 0:
        raise CheckpointError(f"{checkpoint_path}: checkpoint has no heads")
    if task_id is None:
        task_id = net.num_heads - 1
    if not 0 <= task_id < net.num_heads:
        raise ConfigError(
            f"task {task_id} not in checkpoint (heads: {net.num_heads})"
        )
    seed = cfg.seeds[0] if seed is None else seed
    tasks = build_tasks(cfg, seed, _load_base(cfg))
    if task_id >= len(tasks):
        raise ConfigError(f"benchmark has only {len(tasks)} tasks")
    if tasks.input_dim != net.input_size:
        raise ConfigError(
            f"checkpoint expects {net.input_size} inputs, benchmark "
            f"provides {tasks.input_dim}"
        )
    record = collect_spike_record(
        net, tasks[task_id].train.images, LIFConfig(timesteps=cfg.timesteps),
        max_samples=cfg.importance_samples, task_id=task_id, gain=cfg.gain,
    )
    report = importance_report(record, task_id=task_id)
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        _write_text(out, text)
        print(f"wrote {out}")
    return 0


def _add_config_flags(parser):
    parser.add_argument("-c", "--config", metavar="FILE",
                        help="flat key = value config file")
    parser.add_argument("--benchmark", choices=BENCHMARKS)
    parser.add_argument("--method", choices=METHODS)
    parser.add_argument("--lambda", dest="lam", type=float,
                        help="penalty strength (default: per-method)")
    parser.add_argument("--seeds", type=_parse_seeds, metavar="S0,S1,...")
    parser.add_argument("--hidden-size", type=int)
    parser.add_argument("--timesteps", type=int)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch-size", type=int)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--train-cap", type=int,
                        help="per-task training samples (default: all)")
    parser.add_argument("--test-cap", type=int)
    parser.add_argument("--num-tasks", type=int)
    parser.add_argument("--data-dir")
    parser.add_argument("--out-dir")
    parser.add_argument("--importance-samples", type=int)
    parser.add_argument("--gain", type=float)
    parser.add_argument("--synthetic-dim", type=int)
    parser.add_argument("--synthetic-noise", type=float)
    parser.add_argument("--synthetic-train", type=int)
    parser.add_argument("--synthetic-test", type=int)


_CONFIG_FIELDS = (
    "benchmark", "method", "lam", "seeds", "hidden_size", "timesteps",
    "epochs", "batch_size", "lr", "train_cap", "test_cap", "num_tasks",
    "data_dir", "out_dir", "importance_samples", "gain", "synthetic_dim",
    "synthetic_noise", "synthetic_train", "synthetic_test",
)


def _config_from_args(args):
    overrides = {
        name: getattr(args, name)
        for name in _CONFIG_FIELDS
        if getattr(args, name, None) is not None
    }
    return load_config(path=args.config, overrides=overrides)


def _parse_lambdas(text):
    try:
        values = tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated numbers, got {text!r}"
        )
    return values


def build_parser():
    parser = argparse.ArgumentParser(
        prog="spikecl",
        description="Spiking-network continual-learning experiment runner",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="train one method over all seeds")
    _add_config_flags(p_run)
    p_run.set_defaults(entry=lambda args: cmd_run(_config_from_args(args)))

    p_sweep = sub.add_parser("sweep", help="repeat a run over lambda values")
    _add_config_flags(p_sweep)
    p_sweep.add_argument("--lambdas", type=_parse_lambdas, required=True,
                         metavar="L0,L1,...")
    p_sweep.set_defaults(
        entry=lambda args: cmd_sweep(_config_from_args(args), args.lambdas)
    )

    p_dump = sub.add_parser(
        "importance-dump",
        help="firing-regularity report for a saved checkpoint",
    )
    _add_config_flags(p_dump)
    p_dump.add_argument("--checkpoint", required=True)
    p_dump.add_argument("--task", type=int, default=None,
                        help="task index (default: newest head)")
    p_dump.add_argument("--run-seed", type=int, default=None,
                        help="seed whose task data to replay (default: first)")
    p_dump.add_argument("--out", default=None,
                        help="output JSON path (default: stdout)")
    p_dump.set_defaults(
        entry=lambda args: cmd_importance_dump(
            _config_from_args(args), args.checkpoint,
            task_id=args.task, seed=args.run_seed, out=args.out,
        )
    )
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.entry(args)
    except ConfigError as exc:
        print(f"spikecl: config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, CheckpointError) as exc:
        print(f"spikecl: data error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"spikecl: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
