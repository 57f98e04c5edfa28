"""Desk-scale simulator for continuous-wave narrowband photonic teleportation
and three-photon GHZ experiments."""
from .counts import CountTable
from .qcore import DensityMatrix, ImpossibleOutcome, PauliAxis, PureState

__version__ = "0.1.0"

__all__ = ["CountTable", "DensityMatrix", "ImpossibleOutcome", "PauliAxis", "PureState", "__version__"]
