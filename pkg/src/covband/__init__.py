"""Conservative event-triggered compression of covariance-matrix sequences."""

from .bounder import BoundResult, bound, error_bound, in_feasible_set
from .channel import Receiver, Transmitter, decode, encode, frame_size
from .symmat import SymMatrix
from .triggers import (
    AbsoluteChange,
    AlwaysSend,
    Combined,
    NMostChanged,
    Partition,
    ReducedEventSet,
    RelativeChange,
    Subset,
    bounds,
    compile_spec,
    decide,
)

__version__ = "0.1.0"
