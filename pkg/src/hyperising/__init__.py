"""Chaos and scrambling diagnostics for the hyperbolic mixed-field Ising chain.

Subpackages: model (couplings and Hamiltonians), dense (exact spectral
backend), mps (purified tensor-network backend), krylov (Lanczos chains and
complexity observables), fits (Lyapunov / lightcone / regime analysis),
runner (experiment harness), cli (command line).
"""

__version__ = "0.1.0"

from .model import CouplingProfile, ModelParams, TermList  # noqa: F401
from .dense import OTOCSeries, OTOCSpec, SpectralDecomposition  # noqa: F401
from .mps import PurifiedMPS, TrotterScheme, TruncationPolicy  # noqa: F401
from .krylov import (  # noqa: F401
    KrylovObservables,
    KrylovPropagator,
    KrylovWavefunction,
    LanczosData,
)
from .fits import FitResult, LightconeData, LyapunovSeries  # noqa: F401
