"""Rating-triple ingestion, seeded splitting and synthetic low-rank data."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .lfa import LatentFactors

__all__ = [
    "DataFormatError",
    "SparseRatings",
    "DatasetSplit",
    "load_dataset",
    "split_dataset",
    "save_split",
    "load_split",
    "generate_synthetic",
    "DEFAULT_RATIOS",
]

DEFAULT_RATIOS = (0.7, 0.1, 0.2)
SPLIT_FILES = {"train": "train.txt", "validation": "validation.txt", "test": "test.txt"}
MANIFEST = "manifest.json"

_WS_OR_COMMA = re.compile(r"[\s,]+")


class DataFormatError(ValueError):
    """Raised when a ratings file or a split directory cannot be parsed."""


def _readonly(a, dtype):
    a = np.array(a, dtype=dtype, copy=True).reshape(-1)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SparseRatings:
    """Known entries of an incomplete rating matrix.

    ``users[k], items[k], ratings[k]`` is the k-th observed cell, with dense
    indices into ``user_ids`` / ``item_ids``. Partitions produced by
    :func:`split_dataset` share the id maps of their source.
    """

    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    user_ids: tuple
    item_ids: tuple
    duplicates: int = 0

    def __post_init__(self):
        users = _readonly(self.users, np.int64)
        items = _readonly(self.items, np.int64)
        ratings = _readonly(self.ratings, np.float64)
        object.__setattr__(self, "users", users)
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "ratings", ratings)
        object.__setattr__(self, "user_ids", tuple(self.user_ids))
        object.__setattr__(self, "item_ids", tuple(self.item_ids))

        if not (len(users) == len(items) == len(ratings)):
            raise ValueError("users, items and ratings must have equal length")
        if len(users) == 0:
            raise ValueError("no entries")
        if not np.all(np.isfinite(ratings)):
            raise ValueError("ratings must be finite")
        if users.min() < 0 or users.max() >= self.n_users:
            raise ValueError("user index out of range")
        if items.min() < 0 or items.max() >= self.n_items:
            raise ValueError("item index out of range")
        if len(np.unique(self.cell_keys)) != len(users):
            raise ValueError("duplicate (user, item) pair")

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def density(self) -> float:
        return len(self) / (self.n_users * self.n_items)

    @property
    def cell_keys(self) -> np.ndarray:
        return self.users * self.n_items + self.items

    @cached_property
    def user_index(self) -> dict:
        return {uid: k for k, uid in enumerate(self.user_ids)}

    @cached_property
    def item_index(self) -> dict:
        return {iid: k for k, iid in enumerate(self.item_ids)}

    def __len__(self) -> int:
        return len(self.ratings)

    def __eq__(self, other):
        if not isinstance(other, SparseRatings):
            return NotImplemented
        return (
            self.user_ids == other.user_ids
            and self.item_ids == other.item_ids
            and np.array_equal(self.users, other.users)
            and np.array_equal(self.items, other.items)
            and np.array_equal(self.ratings, other.ratings)
        )

    def subset(self, idx) -> "SparseRatings":
        """Entries selected by ``idx`` (index array or mask), same id maps."""
        idx = np.asarray(idx)
        return SparseRatings(
            self.users[idx], self.items[idx], self.ratings[idx], self.user_ids, self.item_ids
        )

    def triples(self) -> Iterator[tuple]:
        """Yield ``(user_id, item_id, rating)`` with external ids."""
        for u, i, r in zip(self.users.tolist(), self.items.tolist(), self.ratings.tolist()):
            yield self.user_ids[u], self.item_ids[i], r


@dataclass(frozen=True, eq=False)
class DatasetSplit:
    train: SparseRatings
    validation: SparseRatings
    test: SparseRatings
    seed: int
    ratios: tuple

    @property
    def n_users(self) -> int:
        return self.train.n_users

    @property
    def n_items(self) -> int:
        return self.train.n_items

    def counts(self) -> dict:
        return {"train": len(self.train), "validation": len(self.validation), "test": len(self.test)}

    def __eq__(self, other):
        if not isinstance(other, DatasetSplit):
            return NotImplemented
        return (
            self.train == other.train
            and self.validation == other.validation
            and self.test == other.test
            and self.seed == other.seed
            and tuple(self.ratios) == tuple(other.ratios)
        )


def _tokenize(line: str, delimiter: str | None) -> list[str]:
    if delimiter is None:
        return [tok for tok in _WS_OR_COMMA.split(line.strip()) if tok]
    return [tok.strip() for tok in line.strip().split(delimiter)]


def _parse_lines(lines, delimiter, source, user_index=None, item_index=None):
    """Parse triples; with fixed index maps unknown ids are an error."""
    grow = user_index is None
    if grow:
        user_index, item_index = {}, {}
    cells: dict[tuple[int, int], float] = {}
    duplicates = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = _tokenize(line, delimiter)
        if len(fields) < 3:
            raise DataFormatError(f"{source}:{lineno}: expected at least 3 fields, got {len(fields)}")
        uid, iid, rtok = fields[0], fields[1], fields[2]
        try:
            rating = float(rtok)
        except ValueError:
            raise DataFormatError(f"{source}:{lineno}: rating {rtok!r} is not a number") from None
        if not math.isfinite(rating):
            raise DataFormatError(f"{source}:{lineno}: non-finite rating {rtok!r}")
        if grow:
            u = user_index.setdefault(uid, len(user_index))
            i = item_index.setdefault(iid, len(item_index))
        else:
            try:
                u, i = user_index[uid], item_index[iid]
            except KeyError as exc:
                raise DataFormatError(f"{source}:{lineno}: id {exc.args[0]!r} not in manifest") from None
        key = (u, i)
        if key in cells:
            duplicates += 1
        cells[key] = rating
    if not cells:
        raise DataFormatError(f"{source}: no entries")
    keys = np.array(list(cells.keys()), dtype=np.int64).reshape(-1, 2)
    ratings = np.fromiter(cells.values(), dtype=np.float64, count=len(cells))
    return keys[:, 0], keys[:, 1], ratings, list(user_index), list(item_index), duplicates


def load_dataset(path, delimiter: str | None = None) -> SparseRatings:
    """Load a ``user item rating [ignored...]`` triple file.

    ``delimiter=None`` splits on runs of whitespace and/or commas; pass e.g.
    ``"::"`` for MovieLens dumps. Lines starting with ``#`` are comments.
    Dense indices follow first appearance. A re-rated (user, item) pair keeps
    its last rating; the number of such overrides is ``result.duplicates``.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        users, items, ratings, uids, iids, dups = _parse_lines(fh, delimiter, str(path))
    return SparseRatings(users, items, ratings, uids, iids, duplicates=dups)


def split_dataset(data: SparseRatings, ratios: Sequence[float] = DEFAULT_RATIOS, seed: int = 0) -> DatasetSplit:
    """Shuffle entries with ``seed`` and cut them into train/validation/test."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(not r > 0 for r in ratios):
        raise ValueError(f"ratios must be three positive fractions, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)!r}")
    n = len(data)
    n_train = int(round(n * ratios[0]))
    n_val = int(round(n * ratios[1]))
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise ValueError(f"{n} entries are too few to give each partition at least one entry")
    order = np.random.default_rng(seed).permutation(n)
    return DatasetSplit(
        train=data.subset(order[:n_train]),
        validation=data.subset(order[n_train : n_train + n_val]),
        test=data.subset(order[n_train + n_val :]),
        seed=int(seed),
        ratios=ratios,
    )


def _write_triples(path: Path, part: SparseRatings) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for uid, iid, r in part.triples():
            fh.write(f"{uid} {iid} {r!r}\n")


def save_split(split: DatasetSplit, out_dir, duplicates: int = 0, source: dict | None = None) -> Path:
    """Write three triple files plus ``manifest.json`` into ``out_dir``.

    The manifest carries the id maps so partitions reload with the original
    dense indexing.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, fname in SPLIT_FILES.items():
        _write_triples(out / fname, getattr(split, name))
    manifest = {
        "seed": split.seed,
        "ratios": list(split.ratios),
        "counts": split.counts(),
        "duplicates": int(duplicates),
        "n_users": split.n_users,
        "n_items": split.n_items,
        "source": source or {},
        "files": SPLIT_FILES,
        "user_ids": list(split.train.user_ids),
        "item_ids": list(split.train.item_ids),
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    return out


def load_split(split_dir) -> DatasetSplit:
    """Inverse of :func:`save_split`."""
    root = Path(split_dir)
    manifest_path = root / MANIFEST
    if not manifest_path.is_file():
        raise FileNotFoundError(f"no {MANIFEST} in {root}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        uids, iids = manifest["user_ids"], manifest["item_ids"]
    except (json.JSONDecodeError, KeyError) as exc:
        raise DataFormatError(f"{manifest_path}: invalid manifest ({exc})") from None
    uidx = {u: k for k, u in enumerate(uids)}
    iidx = {i: k for k, i in enumerate(iids)}
    parts = {}
    for name, fname in manifest.get("files", SPLIT_FILES).items():
        path = root / fname
        with path.open("r", encoding="utf-8") as fh:
            users, items, ratings, _, _, _ = _parse_lines(fh, None, str(path), uidx, iidx)
        parts[name] = SparseRatings(users, items, ratings, uids, iids)
    return DatasetSplit(
        train=parts["train"],
        validation=parts["validation"],
        test=parts["test"],
        seed=int(manifest["seed"]),
        ratios=tuple(manifest["ratios"]),
    )


def generate_synthetic(
    n_users: int,
    n_items: int,
    rank: int,
    density: float,
    noise_sd: float = 0.0,
    seed: int = 0,
) -> tuple[SparseRatings, LatentFactors]:
    """Sample cells of a random rank-``rank`` matrix.

    Ground-truth factors are uniform on [0, 1]; each sampled cell holds
    ``<x_u, y_i>`` plus N(0, noise_sd^2) noise. Returns the observed entries
    and the truth factors.
    """
    if n_users < 1 or n_items < 1 or rank < 1:
        raise ValueError("n_users, n_items and rank must be >= 1")
    if rank > min(n_users, n_items):
        raise ValueError("rank must not exceed min(n_users, n_items)")
    if not 0 < density <= 1:
        raise ValueError("density must lie in (0, 1]")
    if noise_sd < 0:
        raise ValueError("noise_sd must be >= 0")
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 1.0, size=(n_users, rank))
    Y = rng.uniform(0.0, 1.0, size=(n_items, rank))
    n_cells = n_users * n_items
    n_obs = max(1, int(round(density * n_cells)))
    cells = np.sort(rng.choice(n_cells, size=n_obs, replace=False))
    users, items = np.divmod(cells, n_items)
    ratings = np.einsum("kd,kd->k", X[users], Y[items])
    if noise_sd > 0:
        ratings = ratings + rng.normal(0.0, noise_sd, size=n_obs)
    data = SparseRatings(
        users,
        items,
        ratings,
        [f"u{k}" for k in range(n_users)],
        [f"i{k}" for k in range(n_items)],
    )
    return data, LatentFactors(X, Y)
