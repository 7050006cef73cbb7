"""Latent factor analysis on incomplete rating matrices with SGD whose
learning rate and regularization are adapted online by a particle swarm."""

from .data import (
    DEFAULT_RATIOS,
    DataFormatError,
    DatasetSplit,
    SparseRatings,
    generate_synthetic,
    load_dataset,
    load_split,
    save_split,
    split_dataset,
)
from .lfa import (
    DivergenceError,
    Hyperparams,
    LatentFactors,
    init_factors,
    instant_loss,
    load_factors,
    predict,
    rmse,
    save_factors,
    sgd_epoch,
)
from .swarm import (
    Particle,
    PSOConstants,
    SearchBox,
    SwarmState,
    bound,
    fitness_contributions,
    gamma_schedule,
    gm_pso_step,
    improvement_rate,
    init_swarm,
    pso_step,
    update_bests,
)
from .trainer import (
    Estimate,
    TrainConfig,
    TrainingAborted,
    TrainReport,
    estimate_missing,
    grid_search_sgd,
    train,
    train_gmpl,
    train_pso,
    train_sgd,
)

__version__ = "0.1.0"
