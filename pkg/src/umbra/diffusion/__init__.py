"""Conditional shadow denoiser: schedules, model, training, sampling,
and the objective/step-count ablation."""

from .ablation import (AblationProfile, AblationReport, full_profile,
                       phi_reflection_check, run_ablation, smoke_profile,
                       softness_check)
from .conditioning import (build_condition_batch, build_condition_vector,
                           sinusoidal_embed, timestep_embed)
from .model import COND_MODES, DenoiserConfig, ShadowDenoiser
from .sample import T_MAX, sample, sample_state
from .schedule import (OBJECTIVES, Schedule, forward_diffuse, loss_target,
                       rf_interpolate, vp_cosine)
from .train import (TrainConfig, TrainingDiverged, TrainingSet, TrainRunState,
                    load_training_set, load_run, luminance, make_run,
                    object_channel, save_run, train_run, train_step)

__all__ = [
    "AblationProfile", "AblationReport", "COND_MODES", "DenoiserConfig",
    "OBJECTIVES", "Schedule", "ShadowDenoiser", "T_MAX", "TrainConfig",
    "TrainingDiverged", "TrainingSet", "TrainRunState",
    "build_condition_batch", "build_condition_vector", "forward_diffuse",
    "full_profile", "load_run", "load_training_set", "loss_target",
    "luminance", "make_run", "object_channel", "phi_reflection_check",
    "rf_interpolate",
    "run_ablation", "sample", "sample_state", "save_run", "sinusoidal_embed",
    "smoke_profile", "softness_check", "timestep_embed", "train_run",
    "train_step", "vp_cosine",
]
