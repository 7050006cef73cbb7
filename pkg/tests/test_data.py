import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gmpl import (
    DataFormatError,
    SparseRatings,
    generate_synthetic,
    load_dataset,
    load_split,
    save_split,
    split_dataset,
)


def write(tmp_path, text, name="r.txt"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_three_lines(tmp_path):
    data = load_dataset(write(tmp_path, "u1 i1 5\nu1 i2 3\nu2 i1 4\n"))
    assert (data.n_users, data.n_items, len(data)) == (2, 2, 3)
    assert data.user_ids == ("u1", "u2")
    assert data.item_ids == ("i1", "i2")
    assert list(data.triples()) == [("u1", "i1", 5.0), ("u1", "i2", 3.0), ("u2", "i1", 4.0)]


def test_empty_file(tmp_path):
    with pytest.raises(DataFormatError, match="no entries"):
        load_dataset(write(tmp_path, ""))


def test_comments_timestamps_and_commas(tmp_path):
    text = "# header\n\n7,42,3.5,881250949\n7 43 -1.25 881250950\n"
    data = load_dataset(write(tmp_path, text))
    assert len(data) == 2
    assert data.ratings.tolist() == [3.5, -1.25]


def test_double_colon_delimiter(tmp_path):
    data = load_dataset(write(tmp_path, "1::122::5::838985046\n1::185::5::838983525\n"), delimiter="::")
    assert data.item_ids == ("122", "185")


def test_duplicates_keep_last(tmp_path):
    data = load_dataset(write(tmp_path, "a x 1\na y 2\na x 3\na x 4\n"))
    assert len(data) == 2
    assert data.duplicates == 2
    assert data.ratings[data.item_index["x"]] == 4.0


@pytest.mark.parametrize(
    "text, match",
    [
        ("u1 i1\n", r":1: expected at least 3 fields"),
        ("u1 i1 5\nu1 i2 five\n", r":2: rating 'five'"),
        ("u1 i1 nan\n", r":1: non-finite"),
        ("u1 i1 inf\n", r":1: non-finite"),
    ],
)
def test_malformed_lines(tmp_path, text, match):
    with pytest.raises(DataFormatError, match=match):
        load_dataset(write(tmp_path, text))


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path / "nope.txt")


def test_load_is_idempotent(toy_file):
    assert load_dataset(toy_file) == load_dataset(toy_file)


def test_index_maps_round_trip(toy_file):
    data = load_dataset(toy_file)
    for uid in data.user_ids:
        assert data.user_ids[data.user_index[uid]] == uid
    for iid in data.item_ids:
        assert data.item_ids[data.item_index[iid]] == iid


def test_sparse_ratings_invariants():
    with pytest.raises(ValueError, match="duplicate"):
        SparseRatings([0, 0], [1, 1], [1.0, 2.0], ["a"], ["x", "y"])
    with pytest.raises(ValueError, match="out of range"):
        SparseRatings([0, 2], [0, 0], [1.0, 2.0], ["a", "b"], ["x"])
    with pytest.raises(ValueError, match="no entries"):
        SparseRatings([], [], [], ["a"], ["x"])


def test_split_counts(toy_file):
    split = split_dataset(load_dataset(toy_file), (0.7, 0.1, 0.2), seed=42)
    assert split.counts() == {"train": 7, "validation": 1, "test": 2}


def test_split_deterministic(toy_file):
    data = load_dataset(toy_file)
    assert split_dataset(data, seed=42) == split_dataset(data, seed=42)
    assert split_dataset(data, seed=42) != split_dataset(data, seed=43)


@pytest.mark.parametrize("ratios", [(0.5, 0.5, 0.5), (0.7, 0.3, 0.0), (1.0, 0.1, -0.1)])
def test_split_invalid_ratios(toy_file, ratios):
    with pytest.raises(ValueError, match="ratios"):
        split_dataset(load_dataset(toy_file), ratios, seed=0)


def test_split_too_few_entries():
    data = SparseRatings([0, 0], [0, 1], [1.0, 2.0], ["a"], ["x", "y"])
    with pytest.raises(ValueError, match="too few"):
        split_dataset(data, seed=0)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(3, 400), seed=st.integers(0, 2**32 - 1))
def test_split_disjoint_and_exhaustive(n, seed):
    rng = np.random.default_rng(n)
    cells = rng.choice(40 * 40, size=n, replace=False)
    data = SparseRatings(cells // 40, cells % 40, rng.normal(size=n), range(40), range(40))
    try:
        split = split_dataset(data, (0.7, 0.1, 0.2), seed)
    except ValueError:
        assert round(n * 0.1) < 1 or n - round(n * 0.7) - round(n * 0.1) < 1
        return
    parts = [set(p.cell_keys.tolist()) for p in (split.train, split.validation, split.test)]
    assert not (parts[0] & parts[1] or parts[0] & parts[2] or parts[1] & parts[2])
    assert parts[0] | parts[1] | parts[2] == set(data.cell_keys.tolist())
    for part, r in zip((split.train, split.validation, split.test), split.ratios):
        assert abs(len(part) - n * r) <= 1


def test_split_save_and_reload(tmp_path, toy_file):
    data = load_dataset(toy_file)
    split = split_dataset(data, seed=3)
    out = save_split(split, tmp_path / "s", duplicates=data.duplicates)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["counts"] == {"train": 7, "validation": 1, "test": 2}
    assert manifest["seed"] == 3
    assert manifest["duplicates"] == 0
    assert load_split(out) == split


def test_synthetic_rank_one_full():
    data, truth = generate_synthetic(6, 5, 1, 1.0, 0.0, seed=0)
    assert len(data) == 30
    M = np.zeros((6, 5))
    M[data.users, data.items] = data.ratings
    assert np.linalg.matrix_rank(M) == 1


def test_synthetic_matches_truth():
    data, truth = generate_synthetic(50, 40, 2, 0.3, 0.0, seed=5)
    assert len(data) == 600
    assert truth.X.shape == (50, 2) and truth.Y.shape == (40, 2)
    assert truth.X.min() >= 0 and truth.X.max() <= 1
    # independent recomputation, one cell at a time
    for u, i, r in zip(data.users, data.items, data.ratings):
        assert abs(r - sum(truth.X[u, d] * truth.Y[i, d] for d in range(2))) <= 1e-12


def test_synthetic_noise():
    data, truth = generate_synthetic(60, 50, 2, 0.5, 0.1, seed=2)
    resid = data.ratings - np.einsum("kd,kd->k", truth.X[data.users], truth.Y[data.items])
    assert 0.09 < resid.std() < 0.11


@pytest.mark.parametrize(
    "kwargs",
    [dict(density=0.0), dict(density=1.5), dict(rank=6), dict(noise_sd=-1.0), dict(n_users=0)],
)
def test_synthetic_invalid(kwargs):
    args = dict(n_users=5, n_items=5, rank=1, density=0.5, noise_sd=0.0, seed=0) | kwargs
    with pytest.raises(ValueError):
        generate_synthetic(**args)
