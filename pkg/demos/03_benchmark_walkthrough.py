# %% [markdown]
# # A small seeded benchmark through the command line
#
# Writes a ratings file, then calls the `gmpl` entry point exactly as a
# shell user would. Outputs land in a temporary directory.

# %%
import csv
import tempfile
from pathlib import Path

from gmpl import generate_synthetic
from gmpl.cli import main

work = Path(tempfile.mkdtemp(prefix="gmpl-demo-"))
data, _ = generate_synthetic(80, 60, 2, 0.3, 0.05, seed=1)
src = work / "toy.txt"
src.write_text("".join(f"{u} {i} {r!r}\n" for u, i, r in data.triples()))

# %%
main(["split", str(src), "--seed", "0", "--out", str(work / "split")])
main(["train", str(work / "split"), "--algorithm", "gmpso", "--max-iters", "20", "--out", str(work / "run")])
print(sorted(p.name for p in (work / "run").iterdir()))

# %% [markdown]
# `benchmark` takes split directories, repeats each algorithm over several
# seeds and aggregates the test RMSE into mean and spread.

# %%
main([
    "benchmark", "--datasets", str(work / "split"), "--algorithms", "gmpso", "pso",
    "--seeds", "0", "1", "--set", "max_iters=15", "--out", str(work / "bench"),
])
with open(work / "bench" / "table.csv") as fh:
    for row in csv.reader(fh):
        print(row)
