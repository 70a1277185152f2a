"""Electron-transfer model construction.

Builds the two-surface Hamiltonian

    H = (delta_E/2) sz + v_x sx + (g/2) sz (a + adag) + omega adag a,

the dissipator set (cooling channels plus optional spin/motional
dephasing), the displaced-thermal donor initial state, and regime
metadata (reorganization energy, activation barrier, adiabaticity
classification). Everything is expressed in units of the mode frequency.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import fock
from .errors import DegenerateModel, DimensionMismatch
from .fock import DensityMatrix, FockSpace, Operator

#: Required keys for the external parameter schema (scan configs). No
#: physics defaults: every value must be explicit in config files.
PARAM_KEYS = ("omega", "delta_E", "v_x", "g", "gamma", "nbar", "gamma_z", "gamma_m", "ncut")


class Regime(enum.Enum):
    NONADIABATIC = "nonadiabatic"
    ADIABATIC = "adiabatic"
    INTERMEDIATE = "intermediate"


class DephasingBasis(enum.Enum):
    """Spin-dephasing jump axis.

    MODEL_Z dephases along the donor/acceptor axis of the model frame;
    LAB_Y keeps the laboratory-frame jump operator literally (the same
    physical channel seen before the pi/2 basis rotation).
    """

    MODEL_Z = "model_z"
    LAB_Y = "lab_y"


@dataclass(frozen=True)
class ModelParams:
    """Physical parameter set in units of the mode frequency.

    ``nbar`` is the bath occupation entering the cooling rates;
    ``nbar0`` is the initial phonon occupation of the prepared state and
    defaults to ``nbar``.
    """

    delta_E: float
    v_x: float
    g: float
    gamma: float
    nbar: float
    ncut: int
    omega: float = 1.0
    gamma_z: float = 0.0
    gamma_m: float = 0.0
    nbar0: float | None = None

    def __post_init__(self):
        if self.omega <= 0:
            raise ValueError("omega must be > 0")
        for name in ("gamma", "nbar", "gamma_z", "gamma_m"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.ncut < 1:
            raise ValueError("ncut must be >= 1")
        if self.nbar0 is None:
            object.__setattr__(self, "nbar0", self.nbar)
        elif self.nbar0 < 0:
            raise ValueError("nbar0 must be >= 0")

    @property
    def beta(self) -> float:
        """Inverse bath temperature from k_B T = omega / log(1 + 1/nbar)."""
        if self.nbar == 0:
            return math.inf
        return math.log(1.0 + 1.0 / self.nbar) / self.omega

    def validity_flags(self) -> dict:
        """Advisory weak-damping and Markovianity flags (recorded, not enforced)."""
        weak = self.gamma < 0.1 * self.omega
        markov = self.gamma == 0 or self.gamma * self.beta < 0.1
        return {"weak_damping": weak, "markovian": markov}

    def space(self) -> FockSpace:
        return FockSpace(self.ncut)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        missing = [k for k in PARAM_KEYS if k not in data]
        if missing:
            raise KeyError(f"missing parameter keys: {missing}")
        kwargs = {k: data[k] for k in PARAM_KEYS}
        if "nbar0" in data and data["nbar0"] is not None:
            kwargs["nbar0"] = data["nbar0"]
        kwargs["ncut"] = int(kwargs["ncut"])
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {
            "omega": self.omega,
            "delta_E": self.delta_E,
            "v_x": self.v_x,
            "g": self.g,
            "gamma": self.gamma,
            "nbar": self.nbar,
            "nbar0": self.nbar0,
            "gamma_z": self.gamma_z,
            "gamma_m": self.gamma_m,
            "ncut": self.ncut,
        }


@dataclass(frozen=True)
class DerivedQuantities:
    """Regime metadata: advisory only, never gates the physics."""

    reorganization_energy: float  # g^2 / omega
    activation_energy: float      # (delta_E + reorg)^2 / (4 reorg)
    regime: Regime


class DissipatorSet:
    """Ordered collection of (jump operator, nonnegative rate) channels."""

    def __init__(self, channels: list[tuple[Operator, float]]):
        dims = {op.dim for op, _ in channels}
        if len(dims) > 1:
            raise DimensionMismatch("jump operators have inconsistent dimensions")
        for _, rate in channels:
            if rate < 0:
                raise ValueError("dissipator rates must be >= 0")
        self.channels = list(channels)

    def __iter__(self):
        return iter(self.channels)

    def __len__(self):
        return len(self.channels)


def build_hamiltonian(p: ModelParams, space: FockSpace | None = None) -> Operator:
    """Assemble the system Hamiltonian on the full spin (x) Fock space."""
    space = space or p.space()
    a, adag = fock.ladder_ops(space)
    sx, _, sz = fock.spin_ops(space)
    h = (
        0.5 * p.delta_E * sz.matrix
        + p.v_x * sx.matrix
        + 0.5 * p.g * sz.matrix @ (a.matrix + adag.matrix)
        + p.omega * adag.matrix @ a.matrix
    )
    return Operator(h, space, hermitian=True)


def build_dissipators(
    p: ModelParams,
    space: FockSpace | None = None,
    include_dephasing: bool = True,
    dephasing_basis: DephasingBasis = DephasingBasis.MODEL_Z,
) -> DissipatorSet:
    """Cooling channels (a, gamma*(nbar+1)) and (adag, gamma*nbar), plus
    optional spin-dephasing and motional-dephasing channels.

    Channels with a vanishing rate are omitted.
    """
    space = space or p.space()
    a, adag = fock.ladder_ops(space)
    channels: list[tuple[Operator, float]] = []
    if p.gamma > 0:
        channels.append((a, p.gamma * (p.nbar + 1.0)))
        if p.nbar > 0:
            channels.append((adag, p.gamma * p.nbar))
    if include_dephasing:
        if p.gamma_z > 0:
            sx, sy, sz = fock.spin_ops(space)
            jump = sz if dephasing_basis is DephasingBasis.MODEL_Z else sy
            channels.append((Operator(jump.matrix, space, hermitian=True), p.gamma_z))
        if p.gamma_m > 0:
            c_m = a.matrix @ adag.matrix + adag.matrix @ a.matrix
            channels.append((Operator(c_m, space, hermitian=True), p.gamma_m))
    return DissipatorSet(channels)


def initial_state(p: ModelParams, space: FockSpace | None = None) -> DensityMatrix:
    """Donor vibronic state: |D><D| (x) D(-g/2w) thermal(nbar0) D(-g/2w)_dag."""
    space = space or p.space()
    alpha = -p.g / (2.0 * p.omega)
    rho_minus = fock.displaced_thermal(alpha, p.nbar0, space)
    return fock.product_state(fock.DONOR_PROJECTOR, rho_minus, space)


def derived_quantities(p: ModelParams) -> DerivedQuantities:
    """Reorganization energy, activation barrier, and regime label.

    Thresholds: nonadiabatic when v_x < 0.25*(reorg/4) and v_x <= 2*gamma;
    adiabatic when v_x > 0.5*(reorg/4) and v_x > gamma; else intermediate.
    """
    if p.g == 0:
        raise DegenerateModel("activation energy undefined for g = 0")
    reorg = p.g**2 / p.omega
    activation = (p.delta_E + reorg) ** 2 / (4.0 * reorg)
    barrier = reorg / 4.0
    vx = abs(p.v_x)
    if vx < 0.25 * barrier and vx <= 2.0 * p.gamma:
        regime = Regime.NONADIABATIC
    elif vx > 0.5 * barrier and vx > p.gamma:
        regime = Regime.ADIABATIC
    else:
        regime = Regime.INTERMEDIATE
    return DerivedQuantities(reorg, activation, regime)


def polaron_spectrum(p: ModelParams, n_max: int) -> np.ndarray:
    """Exact v_x = 0 eigenvalues: +-delta_E/2 + n*omega - g^2/(4*omega).

    Independent oracle for the displaced-ladder structure of the
    Hamiltonian; sorted ascending over both spin branches and n <= n_max.
    """
    shift = -p.g**2 / (4.0 * p.omega)
    levels = []
    for sign in (+1.0, -1.0):
        for n in range(n_max + 1):
            levels.append(sign * p.delta_E / 2.0 + n * p.omega + shift)
    return np.sort(np.array(levels))
