from .ukf import (FilterError, LinearSystem, UKFModel, fit_linear_system, sigma_points, sigma_weights,
                  ukf_step, ukf_track)
from .vae import RecurrentVAE, VAEConfig, VanillaVAE

__all__ = [
    "FilterError", "LinearSystem", "UKFModel", "fit_linear_system", "sigma_points", "sigma_weights",
    "ukf_step", "ukf_track", "RecurrentVAE", "VAEConfig", "VanillaVAE",
]
