"""Latent factor model: factor storage, loss, SGD epoch and RMSE."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

__all__ = [
    "DivergenceError",
    "LatentFactors",
    "Hyperparams",
    "init_factors",
    "predict",
    "instant_loss",
    "sgd_epoch",
    "rmse",
    "save_factors",
    "load_factors",
    "INIT_SCALE",
]

INIT_SCALE = 0.004


class DivergenceError(ArithmeticError):
    """SGD produced non-finite factors."""

    def __init__(self, message, hp=None):
        super().__init__(message)
        self.hp = hp


@dataclass(eq=False)
class LatentFactors:
    """User factors ``X`` (|U| x f) and item factors ``Y`` (|I| x f)."""

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        self.Y = np.ascontiguousarray(self.Y, dtype=np.float64)
        if self.X.ndim != 2 or self.Y.ndim != 2 or self.X.shape[1] != self.Y.shape[1]:
            raise ValueError(f"incompatible factor shapes {self.X.shape} and {self.Y.shape}")
        if self.X.shape[1] < 1:
            raise ValueError("latent dimension must be >= 1")

    @property
    def f(self) -> int:
        return self.X.shape[1]

    @property
    def n_users(self) -> int:
        return self.X.shape[0]

    @property
    def n_items(self) -> int:
        return self.Y.shape[0]

    def copy(self) -> "LatentFactors":
        return LatentFactors(self.X.copy(), self.Y.copy())

    def restore(self, other: "LatentFactors") -> None:
        """Overwrite values in place from ``other`` (same shapes)."""
        self.X[...] = other.X
        self.Y[...] = other.Y

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.X).all() and np.isfinite(self.Y).all())

    def __eq__(self, other):
        if not isinstance(other, LatentFactors):
            return NotImplemented
        return np.array_equal(self.X, other.X) and np.array_equal(self.Y, other.Y)


@dataclass(frozen=True)
class Hyperparams:
    eta: float
    lam: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.eta) and np.isfinite(self.lam)):
            raise ValueError(f"hyper-parameters must be finite: eta={self.eta}, lambda={self.lam}")
        if self.eta < 0 or self.lam < 0:
            raise ValueError(f"hyper-parameters must be non-negative: eta={self.eta}, lambda={self.lam}")


def init_factors(n_users: int, n_items: int, f: int, seed: int, scale: float = INIT_SCALE) -> LatentFactors:
    """I.i.d. uniform [0, scale] factors from a seeded generator."""
    if min(n_users, n_items, f) < 1:
        raise ValueError(f"dimensions must be >= 1, got ({n_users}, {n_items}, {f})")
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, scale, size=(n_users, f))
    Y = rng.uniform(0.0, scale, size=(n_items, f))
    return LatentFactors(X, Y)


def _check_index(factors: LatentFactors, u: int, i: int) -> None:
    if not (0 <= u < factors.n_users):
        raise IndexError(f"user index {u} out of range [0, {factors.n_users})")
    if not (0 <= i < factors.n_items):
        raise IndexError(f"item index {i} out of range [0, {factors.n_items})")


def predict(factors: LatentFactors, u: int, i: int) -> float:
    _check_index(factors, u, i)
    return float(factors.X[u] @ factors.Y[i])


def instant_loss(factors: LatentFactors, entry, hp: Hyperparams) -> float:
    """Squared error on one entry plus its L2 penalty on both factor rows."""
    u, i, r = entry
    _check_index(factors, u, i)
    x, y = factors.X[u], factors.Y[i]
    e = r - float(x @ y)
    return e * e + hp.lam * (float(x @ x) + float(y @ y))


@njit(cache=True)
def _sgd_pass(X, Y, users, items, ratings, eta, lam):
    f = X.shape[1]
    for k in range(ratings.shape[0]):
        u = users[k]
        i = items[k]
        pred = 0.0
        for d in range(f):
            pred += X[u, d] * Y[i, d]
        e = ratings[k] - pred
        for d in range(f):
            xo = X[u, d]
            yo = Y[i, d]
            X[u, d] = xo + eta * (e * yo - lam * xo)
            Y[i, d] = yo + eta * (e * xo - lam * yo)


@njit(cache=True)
def _sq_err_sum(X, Y, users, items, ratings):
    f = X.shape[1]
    acc = 0.0
    for k in range(ratings.shape[0]):
        u = users[k]
        i = items[k]
        pred = 0.0
        for d in range(f):
            pred += X[u, d] * Y[i, d]
        e = ratings[k] - pred
        acc += e * e
    return acc


def _check_fit(factors: LatentFactors, data) -> None:
    if data.n_users != factors.n_users or data.n_items != factors.n_items:
        raise ValueError(
            f"factors are {factors.n_users}x{factors.n_items}, data is {data.n_users}x{data.n_items}"
        )


def sgd_epoch(factors: LatentFactors, train, hp: Hyperparams, order_seed: int) -> LatentFactors:
    """One SGD sweep over ``train`` in a seeded random order, in place.

    Per entry the item row is updated with the user row as it was before
    that entry's update. Raises :class:`DivergenceError` if any factor
    becomes non-finite; the factors are then left in the diverged state.
    """
    _check_fit(factors, train)
    if hp.eta == 0.0:
        return factors
    order = np.random.default_rng(order_seed).permutation(len(train))
    # gather first so the kernel streams through memory
    users, items, ratings = train.users[order], train.items[order], train.ratings[order]
    _sgd_pass(factors.X, factors.Y, users, items, ratings, hp.eta, hp.lam)
    if not factors.is_finite():
        raise DivergenceError(f"non-finite factors after SGD epoch (eta={hp.eta!r}, lambda={hp.lam!r})", hp)
    return factors


def rmse(factors: LatentFactors, eval_set) -> float:
    """Root mean squared error of raw (unclipped) predictions."""
    if len(eval_set) == 0:
        raise ValueError("empty evaluation set")
    _check_fit(factors, eval_set)
    sse = _sq_err_sum(factors.X, factors.Y, eval_set.users, eval_set.items, eval_set.ratings)
    return float(np.sqrt(sse / len(eval_set)))


def save_factors(factors: LatentFactors, path) -> Path:
    """Text matrix file: header ``n_users n_items f``, then X rows, then Y rows."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(f"{factors.n_users} {factors.n_items} {factors.f}\n")
        np.savetxt(fh, factors.X, fmt="%.17g")
        np.savetxt(fh, factors.Y, fmt="%.17g")
    return path


def load_factors(path) -> LatentFactors:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ValueError(f"{path}: bad header {header!r}")
        n_users, n_items, f = (int(v) for v in header)
        values = np.loadtxt(fh, dtype=np.float64, ndmin=2)
    if values.shape != (n_users + n_items, f):
        raise ValueError(f"{path}: expected {(n_users + n_items, f)} values, found {values.shape}")
    return LatentFactors(values[:n_users], values[n_users:])
