"""Guided diffusion speech enhancement with a learned autoregressive noise model."""

from .audio import Wave, log_spectral_distance, mix_at_snr, read_wav, si_sdr, synth_corpus, write_wav
from .diffusion import EpsilonNet, forward_step, posterior_mean, q_sample, sample_unguided, train_backbone, unguided_step
from .guided import EnhanceRun, enhance, estimate_vt, guided_mean
from .noise_model import NoiseModel, build_vt, loss_input_gradient, nll_loss, train_noise_model, white_noise_model
from .schedules import DiffusionSchedule, GuidanceSchedule, guidance_scale, make_linear_beta

__version__ = "0.1.0"

__all__ = [
    "DiffusionSchedule",
    "EnhanceRun",
    "EpsilonNet",
    "GuidanceSchedule",
    "NoiseModel",
    "Wave",
    "build_vt",
    "enhance",
    "estimate_vt",
    "forward_step",
    "guidance_scale",
    "guided_mean",
    "log_spectral_distance",
    "loss_input_gradient",
    "make_linear_beta",
    "mix_at_snr",
    "nll_loss",
    "posterior_mean",
    "q_sample",
    "read_wav",
    "sample_unguided",
    "si_sdr",
    "synth_corpus",
    "train_backbone",
    "train_noise_model",
    "unguided_step",
    "white_noise_model",
    "write_wav",
]
