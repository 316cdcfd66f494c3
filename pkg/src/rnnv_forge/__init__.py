"""Design, compile and simulate RNnν symmetry-based pulse sequences for
singlet-triplet conversion in coupled spin-1/2 pairs."""

__version__ = "0.1.0"

from .params import DAND, DELTA, FINITE, ExecutionContext, SpinSystem
from .sequence import PulseSequence, SequenceRecipe, SymmetryNumbers

__all__ = ["DAND", "DELTA", "FINITE", "ExecutionContext", "SpinSystem", "PulseSequence",
           "SequenceRecipe", "SymmetryNumbers", "__version__"]
