# %% [markdown]
# # Completing a synthetic low-rank matrix
#
# We plant a rank-3 ratings matrix, hide most of it, and ask two trainers
# to fill it back in: plain SGD at a fixed learning rate, and the
# swarm-tuned trainer that adapts (eta, lambda) while it trains.

# %%
from gmpl import TrainConfig, estimate_missing, generate_synthetic, rmse, split_dataset, train_gmpl, train_sgd

data, truth = generate_synthetic(n_users=120, n_items=80, rank=3, density=0.3, noise_sd=0.05, seed=0)
split = split_dataset(data, (0.7, 0.1, 0.2), seed=0)
print("entries per partition:", split.counts())

# %% [markdown]
# Fixed-rate SGD. Factors start tiny, so the first epochs barely move the
# error; `tol=0` keeps it from stopping on that early plateau.

# %%
cfg = TrainConfig(algorithm="sgd", fixed_eta=2.0**-7, fixed_lambda=2.0**-7, max_iters=300, tol=0.0, seed=0)
sgd_factors, sgd_report = train_sgd(split, cfg)
print(f"SGD   val {sgd_report.final_val_rmse:.4f}  test {sgd_report.test_rmse:.4f}")

# %% [markdown]
# The swarm trainer: ten particles, each owning one (eta, lambda) pair and
# one SGD epoch per iteration on shared factors.

# %%
gm_factors, gm_report = train_gmpl(split, TrainConfig(max_iters=60, seed=0))
print(f"GMPSO val {gm_report.final_val_rmse:.4f}  test {gm_report.test_rmse:.4f}")
print(f"final gbest eta={gm_report.eta:.5f} lambda={gm_report.lam:.5f}")

# %% [markdown]
# Fill in a few held-out cells and compare against the planted values.

# %%
pairs = [(u, i) for u, i, _ in split.test.triples()][:5]
for est in estimate_missing(sgd_factors, pairs, data=split.test):
    print(est)
print("test RMSE recomputed:", rmse(sgd_factors, split.test))
