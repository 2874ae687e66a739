"""Sequential preparation of matrix-product states, local Turing machines and stochastic MPS."""

from .channels import Channel
from .circuits import SeqCircuit, decouple_compile, dilate_mps_naive, run_circuit
from .errors import (CapExceeded, DecouplingError, FactorizationError, InvalidInput, RouteRefused,
                     SeqtapeError)
from .mps import Mps, from_statevector, to_statevector

__version__ = "0.1.0"

__all__ = [
    "Channel", "Mps", "SeqCircuit", "from_statevector", "to_statevector", "decouple_compile",
    "dilate_mps_naive", "run_circuit", "SeqtapeError", "InvalidInput", "RouteRefused",
    "CapExceeded", "DecouplingError", "FactorizationError",
]
