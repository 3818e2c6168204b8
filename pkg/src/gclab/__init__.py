"""Entropy production and Gallavotti-Cohen fluctuation laboratory for randomly kicked dissipative chains."""
from .spectral_field import SpectralField, WeightSequence
from .burgers import FlowConfig, flow_map
from .noise import GAUSSIAN, ComponentDensity, NoiseModel
from .transition import TransitionModel, sigma
from .oracle import ScalarMap, build_kernel
from .rate import ScgfCurve, RateFunction, legendre_transform, gc_residual

__version__ = "0.1.0"
