"""Stochastic metamorphosis simulation: landmarks, CH2, matching and ensembles."""

__version__ = "0.1.0"

from .errors import BlowUpError, ConfigError, InvalidInputError, MetamorphError
from .kernels import KernelSpec, kernel_eval, kernel_grad
from .noise import (DeformationNoiseField, TemplateNoise, WienerPath, derive_seed,
                    ito_drift_correction, sample_wiener_path)
from .landmarks import LandmarkState, LandmarkSystem, TracerCloud, flow_tracers
from .sde import (Trajectory, euler_heun_step, euler_maruyama_step, integrate_batch,
                  integrate_path, strong_convergence_order)
from .ch2 import Ch2State, Ch2System, Grid1D, peakon_init
from .matching import MatchProblem, MatchResult, match_landmarks, path_energy, shoot
from .ensemble import EnsembleSpec, EnsembleStats, endpoint_moments, run_ensemble
from .fda import FdaSpec, generate_fda_signals
