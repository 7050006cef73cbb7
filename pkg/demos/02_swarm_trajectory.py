# %% [markdown]
# # How momentum changes a swarm's path
#
# Same starting swarm, same random draws, two update rules. We drive both
# with a made-up error ledger so the behaviour of the swarm itself is
# visible without any matrix training.

# %%
import numpy as np

from gmpl import PSOConstants, SearchBox, gamma_schedule, init_swarm

box = SearchBox.from_intervals((0.0, 1.0), (0.0, 1.0))
target = np.array([0.7, 0.3])


def run(momentum, iters=30):
    swarm = init_swarm(6, box, np.random.default_rng(5), PSOConstants(), momentum=momentum)
    a_prev, path = 1.0, []
    for _ in range(iters):
        swarm.evolve()
        # pretend error after each sub-iteration is the distance to a target
        errs = [np.linalg.norm(p.position - target) for p in swarm.particles]
        ledger = [a_prev, *np.minimum.accumulate(np.r_[a_prev, errs])[1:]]
        swarm.assess(ledger)
        a_prev = ledger[-1]
        path.append(swarm.positions().mean(axis=0))
    return np.array(path)


# %%
for momentum in (False, True):
    path = run(momentum)
    spread = np.linalg.norm(np.diff(path, axis=0), axis=1)
    label = "gm-pso" if momentum else "pso"
    print(f"{label:6s} mean step of swarm centre {spread.mean():.4f}, end at {np.round(path[-1], 3)}")

# %% [markdown]
# The momentum weight climbs in steps of 0.1 every five iterations until it
# caps at 1.4.

# %%
print([gamma_schedule(t) for t in range(0, 60, 5)])
