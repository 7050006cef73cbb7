"""Command-line interface: ``gmpl split | train | evaluate | estimate | benchmark``.

Exit codes: 0 success, 1 runtime failure (divergence), 2 usage or config error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .data import DEFAULT_RATIOS, SPLIT_FILES, DataFormatError, load_dataset, load_split, save_split, split_dataset
from .lfa import DivergenceError, load_factors, rmse, save_factors
from .trainer import ALGORITHMS, TrainConfig, estimate_missing, train

OUTPUT_ENV = "GMPL_OUTPUT_DIR"
EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

RUN_COLUMNS = [
    "dataset", "algorithm", "seed", "status", "final_rmse", "iterations", "converged", "eta", "lambda",
    "seconds", "seconds_to_best",
]
TABLE_COLUMNS = [
    "dataset", "algorithm", "runs", "failed", "rmse_mean", "rmse_sd", "rmse", "seconds_mean", "seconds_sd", "time",
]


class UsageError(Exception):
    pass


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    values = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def _parse_sets(items) -> dict:
    values = {}
    for item in items or ():
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        values[key.strip()] = value.strip()
    return values


_FLAG_KEYS = ("algorithm", "seed", "f", "q", "max_iters", "tol", "eta", "lambda_")


def build_config(args) -> TrainConfig:
    """Defaults, then the config file, then ``--set`` pairs, then explicit flags."""
    values = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    values.update(_parse_sets(getattr(args, "set", None)))
    for key in _FLAG_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            values["lambda" if key == "lambda_" else key] = v
    try:
        return TrainConfig.from_mapping(values)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid config: {exc}") from None


def _out_dir(args) -> Path:
    out = args.out or os.environ.get(OUTPUT_ENV)
    if not out:
        raise UsageError(f"no output directory: pass --out or set {OUTPUT_ENV}")
    return Path(out)


def dataset_fingerprint(split_dir) -> dict:
    root = Path(split_dir)
    digest = hashlib.sha256()
    for fname in ["manifest.json", *SPLIT_FILES.values()]:
        digest.update((root / fname).read_bytes())
    manifest = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
    return {"path": str(root), "entries": sum(manifest["counts"].values()), "sha256": digest.hexdigest()}


def cmd_split(args) -> int:
    path = Path(args.dataset)
    if not path.is_file():
        raise FileNotFoundError(f"dataset not found: {path}")
    data = load_dataset(path, args.delimiter)
    split = split_dataset(data, args.ratios, args.seed)
    out = _out_dir(args)
    source = {"path": str(path), "entries": len(data), "sha256": hashlib.sha256(path.read_bytes()).hexdigest()}
    save_split(split, out, duplicates=data.duplicates, source=source)
    counts = split.counts()
    print(f"train={counts['train']} validation={counts['validation']} test={counts['test']} duplicates={data.duplicates}")
    return EXIT_OK


def _require_split_dir(path) -> Path:
    root = Path(path)
    if not (root / "manifest.json").is_file():
        raise FileNotFoundError(f"not a split directory (no manifest.json): {root}")
    return root


def run_training(split_dir, cfg: TrainConfig, out: Path, dataset: str = "") -> dict:
    """Train on a saved split and write model, curve, summary and run manifest."""
    split = load_split(split_dir)
    factors, report = train(split, cfg)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "model": out / "model.txt",
        "curve": out / "curve.csv",
        "summary": out / "summary.json",
        "manifest": out / "run.json",
    }
    save_factors(factors, paths["model"])
    report.write_curve_csv(paths["curve"])
    summary = report.summary(dataset or Path(split_dir).name, cfg.seed)
    paths["summary"].write_text(json.dumps(summary, indent=1) + "\n", encoding="utf-8")
    manifest = {
        "version": __version__,
        "config": asdict(cfg),
        "dataset": dataset_fingerprint(split_dir),
        "seeds": [cfg.seed],
        "outputs": {k: str(v) for k, v in paths.items()},
        "nondeterministic_fields": ["elapsed_s", "seconds", "seconds_to_best"],
    }
    paths["manifest"].write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    return summary


def cmd_train(args) -> int:
    root = _require_split_dir(args.split_dir)
    cfg = build_config(args)
    if cfg.algorithm == "sgd" and cfg.fixed_eta is None:
        raise UsageError("fixed_eta required for --algorithm sgd (pass --eta)")
    summary = run_training(root, cfg, _out_dir(args))
    print(repr(summary["final_rmse"]))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    root = _require_split_dir(args.split_dir)
    model = Path(args.model)
    if not model.is_file():
        raise FileNotFoundError(f"model file not found: {model}")
    split = load_split(root)
    factors = load_factors(model)
    print(repr(rmse(factors, getattr(split, args.partition))))
    return EXIT_OK


def cmd_estimate(args) -> int:
    root = _require_split_dir(args.split_dir)
    split = load_split(root)
    factors = load_factors(args.model)
    pairs_path = Path(args.pairs)
    if not pairs_path.is_file():
        raise FileNotFoundError(f"pairs file not found: {pairs_path}")
    pairs = []
    for line in pairs_path.read_text(encoding="utf-8").splitlines():
        fields = line.replace(",", " ").split()
        if fields and not fields[0].startswith("#"):
            if len(fields) < 2:
                raise UsageError(f"{pairs_path}: expected 'user item' per line, got {line!r}")
            pairs.append((fields[0], fields[1]))
    for est in estimate_missing(factors, pairs, split.train):
        print(f"{est.user} {est.item} {est.error}" if est.error else f"{est.user} {est.item} {est.value!r}")
    return EXIT_OK


def _benchmark_run(job):
    split_dir, cfg_values, out, dataset = job
    cfg = TrainConfig(**cfg_values)
    try:
        summary = run_training(split_dir, cfg, Path(out), dataset)
        summary["status"] = "ok"
    except (DivergenceError, ValueError, FloatingPointError) as exc:
        summary = {"algorithm": cfg.algorithm, "dataset": dataset, "seed": cfg.seed, "status": f"failed: {exc}"}
    return summary


def format_cell(mean: float, sd: float, digits: int = 4) -> str:
    """``mean ± sd`` with the spread as one significant digit, e.g. ``0.9982 ± 4E-4``."""
    if not math.isfinite(mean):
        return "failed"
    if sd == 0:
        return f"{mean:.{digits}f} ± 0"
    mantissa, exp = f"{sd:.0E}".split("E")
    return f"{mean:.{digits}f} ± {mantissa}E{int(exp)}"


def aggregate(summaries) -> list[dict]:
    groups: dict[tuple, list] = {}
    for s in summaries:
        groups.setdefault((s["dataset"], s["algorithm"]), []).append(s)
    rows = []
    for (dataset, algorithm), runs in groups.items():
        ok = [r for r in runs if r["status"] == "ok"]
        rm = [r["final_rmse"] for r in ok]
        secs = [r["seconds"] for r in ok]
        rmse_mean = statistics.fmean(rm) if rm else math.nan
        rmse_sd = statistics.stdev(rm) if len(rm) > 1 else 0.0
        sec_mean = statistics.fmean(secs) if secs else math.nan
        sec_sd = statistics.stdev(secs) if len(secs) > 1 else 0.0
        rows.append(
            {
                "dataset": dataset,
                "algorithm": algorithm,
                "runs": len(runs),
                "failed": len(runs) - len(ok),
                "rmse_mean": rmse_mean,
                "rmse_sd": rmse_sd,
                "rmse": format_cell(rmse_mean, rmse_sd),
                "seconds_mean": sec_mean,
                "seconds_sd": sec_sd,
                "time": f"{sec_mean:.1f} ± {sec_sd:.1f}" if secs else "failed",
            }
        )
    return rows


def _write_csv(path: Path, columns, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def cmd_benchmark(args) -> int:
    if not args.algorithms:
        raise UsageError("at least one algorithm is required")
    if not args.datasets:
        raise UsageError("at least one dataset split directory is required")
    for alg in args.algorithms:
        if alg not in ALGORITHMS:
            raise UsageError(f"unknown algorithm {alg!r}; choose from {ALGORITHMS}")
    roots = [_require_split_dir(d) for d in args.datasets]
    out = _out_dir(args)
    base = build_config(args)
    jobs = []
    for root in roots:
        for alg in args.algorithms:
            for seed in args.seeds:
                cfg = asdict(base) | {"algorithm": alg, "seed": seed}
                run_out = out / "runs" / root.name / alg / f"seed{seed}"
                jobs.append((str(root), cfg, str(run_out), root.name))
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            summaries = list(pool.map(_benchmark_run, jobs))
    else:
        summaries = [_benchmark_run(job) for job in jobs]
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "runs.csv", RUN_COLUMNS, summaries)
    table = aggregate(summaries)
    _write_csv(out / "table.csv", TABLE_COLUMNS, table)
    for row in table:
        print(f"{row['dataset']} {row['algorithm']} {row['rmse']} ({row['time']} s)")
    return EXIT_OK if any(s["status"] == "ok" for s in summaries) else EXIT_RUNTIME


def _add_config_flags(p):
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any TrainConfig field")
    p.add_argument("--seed", type=int)
    p.add_argument("--f", type=int, help="latent dimension")
    p.add_argument("--q", type=int, help="swarm size")
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--eta", type=float, help="fixed learning rate (sgd)")
    p.add_argument("--lambda", dest="lambda_", type=float, help="fixed regularization (sgd)")
    p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gmpl", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", help="split a triple file into train/validation/test")
    p.add_argument("dataset")
    p.add_argument("--ratios", type=float, nargs=3, default=list(DEFAULT_RATIOS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--delimiter", default=None, help="field delimiter (default: whitespace or comma)")
    p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV})")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train one model on a split directory")
    p.add_argument("split_dir")
    p.add_argument("--algorithm", choices=ALGORITHMS)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="RMSE of a saved model on one partition")
    p.add_argument("split_dir")
    p.add_argument("model")
    p.add_argument("--partition", choices=tuple(SPLIT_FILES), default="test")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("estimate", help="predict ratings for 'user item' pairs")
    p.add_argument("split_dir")
    p.add_argument("model")
    p.add_argument("pairs")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("benchmark", help="dataset x algorithm x seed cross product")
    p.add_argument("--datasets", nargs="*", default=[])
    p.add_argument("--algorithms", nargs="*", default=[])
    p.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2])
    p.add_argument("--workers", type=int, default=1)
    _add_config_flags(p)
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"gmpl: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (UsageError, FileNotFoundError, DataFormatError, ValueError, OSError) as exc:
        print(f"gmpl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
