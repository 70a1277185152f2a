"""Dissipative spin-boson electron-transfer simulator.

Core layers: truncated Fock algebra (:mod:`etsim.fock`), model
construction (:mod:`etsim.model`), Lindblad propagation and steady
states (:mod:`etsim.propagation`), rate oracles and extraction
(:mod:`etsim.rates`), a discretized-bath brute-force check
(:mod:`etsim.bath`), the trapped-ion laboratory layer
(:mod:`etsim.hardware`), and the sweep driver (:mod:`etsim.scan`,
:mod:`etsim.presets`) behind the ``etsim`` command line.
"""

__version__ = "0.1.0"

from .fock import DensityMatrix, FockSpace, Operator  # noqa: F401
from .model import DerivedQuantities, DissipatorSet, ModelParams, Regime  # noqa: F401
from .propagation import SteadyStateReport, TimeGrid, Trajectory  # noqa: F401
from .rates import FranckCondonTable, RateEstimate, RateMethod  # noqa: F401
