"""Unscented navigation filters for the entry problem."""
from .ukf import Ukf
from .ukf_ac import EntryUkfAC, ukf_ac_step
from .ukf_cm import EntryUkfCM, UkfCM, estimate_q_matching, ukf_cm_step
from .uskf_nn import (ConsiderFilterState, EcrvConfig, EntryUskfNN, MloConfig, mlo,
                      uskf_nn_step, uskf_propagate, uskf_update)
from .ut import UtConfig, nearest_psd, robust_cholesky, sigma_points, unscented_moments

__all__ = [
    "Ukf", "EntryUkfAC", "ukf_ac_step", "EntryUkfCM", "UkfCM", "estimate_q_matching",
    "ukf_cm_step", "ConsiderFilterState", "EcrvConfig", "EntryUskfNN", "MloConfig", "mlo",
    "uskf_nn_step", "uskf_propagate", "uskf_update", "UtConfig", "nearest_psd", "robust_cholesky",
    "sigma_points", "unscented_moments",
]
