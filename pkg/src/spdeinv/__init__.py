"""Forward and inverse toolkit for the stochastic heat equation with
multiplicative space-time Gaussian noise on a box domain."""

__version__ = "0.1.0"

from .basis import BasisSpec
from .noise import QSpec
from .forward import Field, SdeScheme, MCEnsemble
from .covariance import TensorField, GeneratorMatrix, assemble_generator, evolve_theta, theta_ij_exact
from .spectral import SpectralDecomposition, decompose, semigroup_apply, spectral_log
from .inversion import ThetaDataset, end_to_end

__all__ = [
    "BasisSpec",
    "QSpec",
    "Field",
    "SdeScheme",
    "MCEnsemble",
    "TensorField",
    "GeneratorMatrix",
    "assemble_generator",
    "evolve_theta",
    "theta_ij_exact",
    "SpectralDecomposition",
    "decompose",
    "semigroup_apply",
    "spectral_log",
    "ThetaDataset",
    "end_to_end",
]
