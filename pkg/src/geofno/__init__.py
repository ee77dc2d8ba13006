"""Fourier neural operator surrogates on irregular domains.

Point clouds and structured meshes are deformed into a uniform latent
torus (by analytic maps or a learned residual network), spectral
convolutions run there via the FFT, and a direct non-uniform discrete
Fourier transform carries fields between the two spaces.  Includes a
synthetic deformed-annulus Poisson benchmark with an independent
finite-difference reference solver, a reproducible training loop, and
gradient-based inverse design through trained surrogates.
"""

from ._kernels import BACKEND as kernel_backend
from .geometry import (CoordinateMap, DeformNet, Geometry, canonical_map,
                       deform_inverse, interp_to_uniform, o_mesh_generate,
                       r_mesh_deform, sinusoidal_features)
from .model import (GeoFnoModel, ModelConfig, count_params, forward_pointcloud,
                    forward_spatiotemporal, forward_structured)
from .spectral import (ModeSet, MonitorWeight, nudft_forward, nudft_inverse,
                       roundtrip_identity_check, spectral_conv_uniform)
from .tensor import (AdamState, Tape, Tensor, adam_step, elementwise, fft_nd,
                     grad_check)
from .training import TrainConfig, TrainReport, evaluate, masked_loss, relative_l2, train

__version__ = "0.1.0"

__all__ = [
    "AdamState", "CoordinateMap", "DeformNet", "Geometry", "GeoFnoModel",
    "ModeSet", "ModelConfig", "MonitorWeight", "Tape", "Tensor", "TrainConfig",
    "TrainReport", "adam_step", "canonical_map", "count_params",
    "deform_inverse", "elementwise", "evaluate", "fft_nd", "forward_pointcloud",
    "forward_spatiotemporal", "forward_structured", "grad_check",
    "interp_to_uniform", "kernel_backend", "masked_loss", "nudft_forward",
    "nudft_inverse", "o_mesh_generate", "r_mesh_deform", "relative_l2",
    "roundtrip_identity_check", "sinusoidal_features", "spectral_conv_uniform",
    "train",
]
