"""Continuous displacement-field estimation from particle image pairs.

A coordinate network with a random sinusoidal embedding is fitted per image
pair by minimizing the photometric residual of a differentiable bilinear
warp, yielding a displacement field queryable at any (sub-)pixel
coordinate. The package also bundles synthetic data generation, RMSE
evaluation, and turbulence statistics (mean/Reynolds stress/TKE/PSD).
"""

__version__ = "0.1.0"

from .fields import (
    FieldGrid,
    load_field,
    load_flo,
    pixel_grid_coords,
    rmse_at_points,
    rmse_dense,
    sample_grid,
    save_field,
    to_velocity,
    vorticity,
)
from .images import (
    SequenceMeta,
    clahe,
    gaussian_filter_3x3,
    load_image,
    preprocess_sequence,
    save_image,
    subtract_background,
)
from .model import (
    DisplacementModel,
    ModelConfig,
    forward,
    forward_batch,
    init_model,
    load_model,
    param_count,
    save_model,
)
from .stats import (
    FlowStats,
    FlowStatsAccumulator,
    PsdSeries,
    accumulate_stats,
    fit_loglog_slope,
    psd,
)
from .synth import (
    JetShearFlow,
    ParticleSet,
    RigidRotation,
    ShearFlow,
    SyntheticPair,
    SyntheticSequence,
    UniformFlow,
    generate_pair,
    generate_sequence,
    make_truth_grid,
    random_particles,
    render,
    single_particle_pair,
)
from .training import (
    AdamState,
    EnsembleResult,
    TrainConfig,
    TrainReport,
    adam_step,
    convergence_mask,
    ensemble_train,
    train_pair,
    train_sequence,
)
from .warp import (
    PixelBatch,
    bilinear_sample,
    deformed_intensity,
    loss_and_grad,
    sample_gradient,
)

__all__ = [
    "__version__",
    # model
    "ModelConfig",
    "DisplacementModel",
    "init_model",
    "forward",
    "forward_batch",
    "param_count",
    "save_model",
    "load_model",
    # warp
    "PixelBatch",
    "bilinear_sample",
    "sample_gradient",
    "deformed_intensity",
    "loss_and_grad",
    # training
    "TrainConfig",
    "TrainReport",
    "AdamState",
    "EnsembleResult",
    "adam_step",
    "train_pair",
    "train_sequence",
    "convergence_mask",
    "ensemble_train",
    # fields
    "FieldGrid",
    "pixel_grid_coords",
    "sample_grid",
    "rmse_dense",
    "rmse_at_points",
    "to_velocity",
    "vorticity",
    "save_field",
    "load_field",
    "load_flo",
    # images
    "SequenceMeta",
    "load_image",
    "save_image",
    "subtract_background",
    "gaussian_filter_3x3",
    "clahe",
    "preprocess_sequence",
    # synth
    "UniformFlow",
    "RigidRotation",
    "ShearFlow",
    "JetShearFlow",
    "ParticleSet",
    "SyntheticPair",
    "SyntheticSequence",
    "random_particles",
    "render",
    "generate_pair",
    "generate_sequence",
    "single_particle_pair",
    "make_truth_grid",
    # stats
    "FlowStats",
    "FlowStatsAccumulator",
    "PsdSeries",
    "accumulate_stats",
    "psd",
    "fit_loglog_slope",
]
