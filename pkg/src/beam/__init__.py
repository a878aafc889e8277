"""Restricted Boltzmann machines trained against a hidden-layer critic."""
from .critic import CriticCache, knn_density, t_dnn, t_nn, update_cache
from .datasets import Dataset, MogSpec, mnist_load, mode_coverage, mog_sample, split_validation
from .divergences import DivergenceReport, discriminator_divergence_1d, knn_kl_estimate
from .rbm import GradientBundle, LayerKind, RbmModel
from .tds import ParticlePopulation, TdsConfig, advance, gamma_step, init_population
from .training import TrainConfig, TrainingDiverged, compound_gradient, draw_fantasies, train

__all__ = [
    "CriticCache",
    "Dataset",
    "DivergenceReport",
    "GradientBundle",
    "LayerKind",
    "MogSpec",
    "ParticlePopulation",
    "RbmModel",
    "TdsConfig",
    "TrainConfig",
    "TrainingDiverged",
    "advance",
    "compound_gradient",
    "discriminator_divergence_1d",
    "draw_fantasies",
    "gamma_step",
    "init_population",
    "knn_density",
    "knn_kl_estimate",
    "mnist_load",
    "mode_coverage",
    "mog_sample",
    "split_validation",
    "t_dnn",
    "t_nn",
    "train",
    "update_cache",
]
