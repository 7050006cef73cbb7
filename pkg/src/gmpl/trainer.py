"""Training loops: swarm-adapted SGD (momentum and standard PSO) and plain SGD."""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .lfa import DivergenceError, Hyperparams, LatentFactors, init_factors, rmse, sgd_epoch
from .swarm import PSOConstants, SearchBox, init_swarm

__all__ = [
    "ALGORITHMS",
    "DIVERGED_RMSE",
    "TrainConfig",
    "IterationRecord",
    "TrainReport",
    "TrainingAborted",
    "Estimate",
    "train",
    "train_gmpl",
    "train_pso",
    "train_sgd",
    "grid_search_sgd",
    "sgd_grid",
    "estimate_missing",
    "SWARM_CURVE_COLUMNS",
    "SGD_CURVE_COLUMNS",
]

ALGORITHMS = ("sgd", "pso", "gmpso")
DIVERGED_RMSE = 1e12

SWARM_CURVE_COLUMNS = [
    "t", "j", "eta_j", "lambda_j", "A_j", "F_j", "Ir_j", "gbest_eta", "gbest_lambda", "gamma", "elapsed_s",
]
SGD_CURVE_COLUMNS = ["t", "rmse_val", "elapsed_s"]
TIMING_COLUMNS = ("elapsed_s",)


class TrainingAborted(DivergenceError):
    """Every particle diverged in one iteration, or fixed-rate SGD diverged."""


@dataclass
class TrainConfig:
    f: int = 20
    q: int = 10
    w: float = 0.729
    c1: float = 2.0
    c2: float = 2.0
    eta_min: float = 2.0**-13
    eta_max: float = 2.0**-7
    lambda_min: float = 2.0**-7
    lambda_max: float = 2.0**-1
    gamma_min: float = 0.4
    gamma_max: float = 1.4
    gamma_every: int = 5
    max_iters: int = 1000
    tol: float = 1e-5
    seed: int = 0
    algorithm: str = "gmpso"
    fixed_eta: float | None = None
    fixed_lambda: float | None = None
    per_dimension_random: bool = False
    normalized_distance: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.f < 1:
            raise ValueError(f"f must be >= 1, got {self.f}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.tol >= 0:
            raise ValueError(f"tol must be >= 0, got {self.tol}")
        if not 0 < self.eta_min < self.eta_max:
            raise ValueError(f"invalid eta box [{self.eta_min}, {self.eta_max}]")
        if not 0 <= self.lambda_min < self.lambda_max:
            raise ValueError(f"invalid lambda box [{self.lambda_min}, {self.lambda_max}]")
        if self.algorithm != "sgd" and self.q < 2:
            raise ValueError(f"q must be >= 2 for swarm algorithms, got {self.q}")
        if not self.gamma_min <= self.gamma_max or self.gamma_every < 1:
            raise ValueError("invalid gamma schedule")

    @property
    def box(self) -> SearchBox:
        return SearchBox.from_intervals((self.eta_min, self.eta_max), (self.lambda_min, self.lambda_max))

    @property
    def consts(self) -> PSOConstants:
        return PSOConstants(self.w, self.c1, self.c2)

    @classmethod
    def from_mapping(cls, values: dict, base: "TrainConfig | None" = None) -> "TrainConfig":
        """Build a config from string or typed values layered over ``base``."""
        out = asdict(base) if base is not None else {}
        known = {f.name for f in fields(cls)}
        for key, raw in values.items():
            key = key.strip().replace("-", "_")
            if key == "lambda":
                key = "fixed_lambda"
            elif key == "eta":
                key = "fixed_eta"
            if key not in known:
                raise ValueError(f"unknown config key {key!r}")
            out[key] = _coerce(key, raw)
        return cls(**out)


_INT_KEYS = {"f", "q", "gamma_every", "max_iters", "seed"}
_BOOL_KEYS = {"per_dimension_random", "normalized_distance"}


def _coerce(key, raw):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    if key == "algorithm":
        return raw
    if key in ("fixed_eta", "fixed_lambda") and raw.lower() in ("", "none"):
        return None
    if key in _BOOL_KEYS:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    try:
        return int(raw) if key in _INT_KEYS else float(raw)
    except ValueError:
        raise ValueError(f"{key}: cannot parse {raw!r}") from None


@dataclass
class IterationRecord:
    t: int
    val_rmse: list  # A_1..A_q for swarms, single value for SGD
    elapsed: float
    etas: list = field(default_factory=list)
    lambdas: list = field(default_factory=list)
    velocities: list = field(default_factory=list)
    fitness: list = field(default_factory=list)
    ir: list = field(default_factory=list)
    gbest: list | None = None
    gamma: float | None = None


@dataclass
class TrainReport:
    algorithm: str
    records: list
    initial_val_rmse: float
    test_rmse: float = math.nan
    converged: bool = False
    seconds: float = 0.0
    eta: float = math.nan
    lam: float = math.nan
    best_val_rmse: float = math.inf
    seconds_to_best: float = 0.0
    grid: list | None = None

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def final_val_rmse(self) -> float:
        return self.records[-1].val_rmse[-1] if self.records else self.initial_val_rmse

    def curve_rows(self) -> list[dict]:
        rows = []
        for rec in self.records:
            if self.algorithm == "sgd":
                rows.append({"t": rec.t, "rmse_val": rec.val_rmse[0], "elapsed_s": rec.elapsed})
                continue
            for j, a in enumerate(rec.val_rmse):
                row = {
                    "t": rec.t,
                    "j": j + 1,
                    "eta_j": rec.etas[j],
                    "lambda_j": rec.lambdas[j],
                    "A_j": a,
                    "F_j": rec.fitness[j],
                    "Ir_j": rec.ir[j],
                    "gbest_eta": rec.gbest[0],
                    "gbest_lambda": rec.gbest[1],
                    "gamma": rec.gamma,
                    "elapsed_s": rec.elapsed,
                }
                if rec.gamma is None:
                    del row["gamma"]
                rows.append(row)
        return rows

    def curve_columns(self) -> list[str]:
        if self.algorithm == "sgd":
            return list(SGD_CURVE_COLUMNS)
        if self.algorithm == "pso":
            return [c for c in SWARM_CURVE_COLUMNS if c != "gamma"]
        return list(SWARM_CURVE_COLUMNS)

    def trajectory_rows(self) -> list[dict]:
        """Per-particle swarm log including velocities."""
        rows = self.curve_rows()
        if self.algorithm == "sgd":
            return rows
        velocities = [v for rec in self.records for v in rec.velocities]
        for row, (s_eta, s_lam) in zip(rows, velocities):
            row["s_eta_j"], row["s_lambda_j"] = s_eta, s_lam
        return rows

    def write_curve_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=self.curve_columns(), lineterminator="\n")
            writer.writeheader()
            for row in self.curve_rows():
                writer.writerow({k: _fmt(v) for k, v in row.items()})
        return path

    def summary(self, dataset: str = "", seed: int | None = None) -> dict:
        return {
            "algorithm": self.algorithm,
            "dataset": dataset,
            "seed": seed,
            "final_rmse": self.test_rmse,
            "iterations": self.iterations,
            "converged": self.converged,
            "eta": self.eta,
            "lambda": self.lam,
            "final_val_rmse": self.final_val_rmse,
            "best_val_rmse": self.best_val_rmse,
            "seconds": self.seconds,
            "seconds_to_best": self.seconds_to_best,
        }

    def write_summary_json(self, path, dataset: str = "", seed: int | None = None) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.summary(dataset, seed), indent=1) + "\n", encoding="utf-8")
        return path


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


class _Clock:
    def __init__(self):
        self.start = time.perf_counter()

    def __call__(self) -> float:
        return time.perf_counter() - self.start


def _seeds(seed: int):
    """Independent streams for factor init, swarm draws and SGD visiting order."""
    init_ss, swarm_ss, order_ss = np.random.SeedSequence(seed).spawn(3)
    return (
        int(init_ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1)),
        np.random.default_rng(swarm_ss),
        np.random.default_rng(order_ss),
    )


def _next_order_seed(order_rng) -> int:
    return int(order_rng.integers(0, 2**63 - 1))


def _train_swarm(split, cfg: TrainConfig, momentum: bool):
    clock = _Clock()
    init_seed, swarm_rng, order_rng = _seeds(cfg.seed)
    factors = init_factors(split.n_users, split.n_items, cfg.f, init_seed)
    swarm = init_swarm(
        cfg.q,
        cfg.box,
        swarm_rng,
        cfg.consts,
        momentum=momentum,
        gamma_min=cfg.gamma_min,
        gamma_max=cfg.gamma_max,
        gamma_every=cfg.gamma_every,
        per_dimension_random=cfg.per_dimension_random,
        normalized_distance=cfg.normalized_distance,
    )
    a_prev = rmse(factors, split.validation)
    report = TrainReport("gmpso" if momentum else "pso", [], initial_val_rmse=a_prev)
    report.best_val_rmse = a_prev
    snapshot = factors.copy()

    for t in range(1, cfg.max_iters + 1):
        gamma_used = swarm.gamma
        swarm.evolve()
        ledger = [a_prev]
        diverged = 0
        for p in swarm.particles:
            eta, lam = (float(v) for v in p.position)
            snapshot.restore(factors)
            try:
                sgd_epoch(factors, split.train, Hyperparams(eta, lam), _next_order_seed(order_rng))
                a = rmse(factors, split.validation)
            except DivergenceError:
                factors.restore(snapshot)
                diverged += 1
                a = DIVERGED_RMSE
            ledger.append(a)
            if a < report.best_val_rmse:
                report.best_val_rmse = a
                report.seconds_to_best = clock()
        if diverged == swarm.q:
            raise TrainingAborted(f"all {swarm.q} particles diverged at iteration {t}")
        swarm.assess(ledger)
        report.records.append(
            IterationRecord(
                t=t,
                val_rmse=ledger[1:],
                elapsed=clock(),
                etas=[float(p.position[0]) for p in swarm.particles],
                lambdas=[float(p.position[1]) for p in swarm.particles],
                velocities=[tuple(float(v) for v in p.velocity) for p in swarm.particles],
                fitness=[p.fitness for p in swarm.particles],
                ir=[p.ir for p in swarm.particles],
                gbest=[float(v) for v in swarm.gbest],
                gamma=gamma_used if momentum else None,
            )
        )
        if abs(ledger[-1] - a_prev) < cfg.tol:
            report.converged = True
            break
        a_prev = ledger[-1]

    report.eta, report.lam = (float(v) for v in swarm.gbest)
    report.test_rmse = rmse(factors, split.test)
    report.seconds = clock()
    return factors, report


def train_gmpl(split, cfg: TrainConfig):
    """SGD whose (eta, lambda) are adapted online by generalized-momentum PSO.

    Each iteration moves all particles, then lets each particle in turn run
    one SGD epoch on the shared factors with its own hyper-parameters, and
    finally scores particles by their share of the validation-error drop.
    Stops when the validation error after the last particle changes by less
    than ``cfg.tol`` between iterations, or after ``cfg.max_iters``.
    """
    return _train_swarm(split, cfg, momentum=True)


def train_pso(split, cfg: TrainConfig):
    """Same loop as :func:`train_gmpl` with the standard PSO move."""
    return _train_swarm(split, cfg, momentum=False)


def train_sgd(split, cfg: TrainConfig):
    """Fixed-rate SGD until the validation RMSE of consecutive epochs stalls."""
    if cfg.fixed_eta is None:
        raise ValueError("fixed_eta required for algorithm 'sgd'")
    hp = Hyperparams(cfg.fixed_eta, cfg.fixed_lambda or 0.0)
    clock = _Clock()
    init_seed, _, order_rng = _seeds(cfg.seed)
    factors = init_factors(split.n_users, split.n_items, cfg.f, init_seed)
    a0 = rmse(factors, split.validation)
    report = TrainReport("sgd", [], initial_val_rmse=a0, eta=hp.eta, lam=hp.lam, best_val_rmse=a0)
    prev = None
    for t in range(1, cfg.max_iters + 1):
        try:
            sgd_epoch(factors, split.train, hp, _next_order_seed(order_rng))
        except DivergenceError as exc:
            raise TrainingAborted(f"SGD diverged at epoch {t} (eta={hp.eta!r}, lambda={hp.lam!r})", hp) from exc
        a = rmse(factors, split.validation)
        report.records.append(IterationRecord(t=t, val_rmse=[a], elapsed=clock()))
        if a < report.best_val_rmse:
            report.best_val_rmse = a
            report.seconds_to_best = clock()
        if prev is not None and abs(a - prev) < cfg.tol:
            report.converged = True
            break
        prev = a
    report.test_rmse = rmse(factors, split.test)
    report.seconds = clock()
    return factors, report


def sgd_grid(cfg: TrainConfig) -> list[tuple[float, float]]:
    """Integer powers of two spanning the configured eta and lambda boxes."""
    def powers(lo, hi):
        lo_e, hi_e = math.ceil(math.log2(lo) - 1e-12), math.floor(math.log2(hi) + 1e-12)
        return [2.0**e for e in range(lo_e, hi_e + 1)]

    return [(eta, lam) for eta in powers(cfg.eta_min, cfg.eta_max) for lam in powers(cfg.lambda_min, cfg.lambda_max)]


def grid_search_sgd(split, cfg: TrainConfig, grid: Sequence[tuple[float, float]] | None = None):
    """Train fixed-rate SGD on every grid point; keep the best validation RMSE.

    Diverged grid points are recorded with ``inf`` and skipped. The returned
    report's ``seconds`` covers the whole search.
    """
    clock = _Clock()
    grid = list(grid) if grid is not None else sgd_grid(cfg)
    best = None
    results = []
    for eta, lam in grid:
        sub = TrainConfig.from_mapping({"algorithm": "sgd", "fixed_eta": eta, "fixed_lambda": lam}, cfg)
        try:
            factors, report = train_sgd(split, sub)
        except TrainingAborted:
            results.append((eta, lam, math.inf))
            continue
        results.append((eta, lam, report.best_val_rmse))
        if best is None or report.best_val_rmse < best[1].best_val_rmse:
            best = (factors, report)
    if best is None:
        raise TrainingAborted("every grid point diverged")
    factors, report = best
    report.grid = results
    report.seconds = clock()
    return factors, report


def train(split, cfg: TrainConfig):
    """Dispatch on ``cfg.algorithm``; ``sgd`` without a fixed eta runs the grid search."""
    if cfg.algorithm == "gmpso":
        return train_gmpl(split, cfg)
    if cfg.algorithm == "pso":
        return train_pso(split, cfg)
    if cfg.fixed_eta is None:
        return grid_search_sgd(split, cfg)
    return train_sgd(split, cfg)


class Estimate(NamedTuple):
    user: object
    item: object
    value: float
    error: str | None = None


def estimate_missing(factors: LatentFactors, pairs, data=None) -> list[Estimate]:
    """Predict ratings for ``pairs``.

    With ``data`` (anything carrying ``user_index``/``item_index``) the pairs
    are external ids; otherwise dense indices. Unknown ids or out-of-range
    indices yield an entry with ``value=nan`` and an ``error`` message.
    """
    out = []
    for user, item in pairs:
        try:
            if data is not None:
                u, i = data.user_index[user], data.item_index[item]
            else:
                u, i = int(user), int(item)
            if not (0 <= u < factors.n_users and 0 <= i < factors.n_items):
                raise IndexError
        except KeyError as exc:
            out.append(Estimate(user, item, math.nan, f"unknown id {exc.args[0]!r}"))
            continue
        except (IndexError, ValueError):
            out.append(Estimate(user, item, math.nan, "index out of range"))
            continue
        out.append(Estimate(user, item, float(factors.X[u] @ factors.Y[i])))
    return out
