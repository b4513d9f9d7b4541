"""Conditional flow matching for temporally consistent motion-latent
sequences, with an orthonormal editing basis and diffusion baselines."""

__version__ = "0.1.0"

from .basis import (MotionBasis, compose, decompose, orthonormalize, project,
                    shift_coefficient)
from .flow import (cfm_loss, conditional_path_logpdf, ot_interpolate,
                   sample_dropout, target_field, total_loss, velocity_loss)
from .predictor import PredictorConfig, VectorFieldPredictor
from .sampler import (GuidanceSpec, cfv, euler_integrate, generate_sequence,
                      generate_window, incremental_cfv, midpoint_integrate,
                      redirect_emotion)
from .synthdata import Dataset, SceneSpec, gen_driving, make_dataset

__all__ = [
    "MotionBasis", "compose", "decompose", "orthonormalize", "project",
    "shift_coefficient", "cfm_loss", "conditional_path_logpdf",
    "ot_interpolate", "sample_dropout", "target_field", "total_loss",
    "velocity_loss", "PredictorConfig", "VectorFieldPredictor",
    "GuidanceSpec", "cfv", "euler_integrate", "generate_sequence",
    "generate_window", "incremental_cfv", "midpoint_integrate",
    "redirect_emotion", "Dataset", "SceneSpec", "gen_driving", "make_dataset",
]
