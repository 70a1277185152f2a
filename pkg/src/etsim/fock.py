"""Truncated spin (x) Fock linear algebra.

Basis convention: spin-major ordering, index = s*(ncut+1) + n with
s = 0 for the up/donor branch and s = 1 for the down/acceptor branch.
All quantities are dimensionless, with the bosonic mode frequency as the
unit of energy. Operators and states are immutable after construction.

Operators can live either on the full spin (x) Fock space (dimension
2*(ncut+1)) or on the bosonic factor alone (dimension ncut+1); the two
are combined with :func:`embed_boson`, :func:`embed_spin` and
:func:`product_state`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import DimensionMismatch, TruncationTooSmall

HERM_TOL = 1e-12
TRACE_TOL = 1e-9
PSD_TOL = 1e-9

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
SIGMA_PLUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
SIGMA_MINUS = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)
DONOR_PROJECTOR = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)
ACCEPTOR_PROJECTOR = np.array([[0.0, 0.0], [0.0, 1.0]], dtype=complex)


@dataclass(frozen=True)
class FockSpace:
    """Two-level system tensored with a Fock space truncated at ``ncut``."""

    ncut: int

    def __post_init__(self):
        if self.ncut < 1:
            raise ValueError(f"ncut must be >= 1, got {self.ncut}")

    @property
    def boson_dim(self) -> int:
        return self.ncut + 1

    @property
    def total_dim(self) -> int:
        return 2 * (self.ncut + 1)

    def index(self, spin: int, n: int) -> int:
        """Flat index of basis state |spin, n> (spin-major layout)."""
        if spin not in (0, 1) or not 0 <= n <= self.ncut:
            raise ValueError(f"invalid basis labels spin={spin}, n={n}")
        return spin * self.boson_dim + n


def _freeze(matrix: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(matrix, dtype=complex)
    out.flags.writeable = False
    return out


class Operator:
    """Complex matrix on a :class:`FockSpace` (full space or bosonic factor).

    If ``hermitian=True`` is passed, Hermiticity is verified at
    construction to within ``HERM_TOL``.
    """

    def __init__(self, matrix, space: FockSpace, hermitian: bool | None = None):
        matrix = np.asarray(matrix, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DimensionMismatch(f"operator matrix must be square, got {matrix.shape}")
        if matrix.shape[0] not in (space.boson_dim, space.total_dim):
            raise DimensionMismatch(
                f"dimension {matrix.shape[0]} does not match space "
                f"(boson {space.boson_dim} or full {space.total_dim})"
            )
        if hermitian:
            defect = np.max(np.abs(matrix - matrix.conj().T))
            if defect >= HERM_TOL:
                raise ValueError(f"operator flagged Hermitian but defect {defect:.3e}")
        self.matrix = _freeze(matrix)
        self.space = space
        self.hermitian = bool(hermitian) if hermitian is not None else None

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def dag(self) -> "Operator":
        return Operator(self.matrix.conj().T, self.space, hermitian=self.hermitian)

    def _require_compatible(self, other: "Operator"):
        if self.space != other.space or self.dim != other.dim:
            raise DimensionMismatch("operators live on different spaces")

    def __add__(self, other: "Operator") -> "Operator":
        self._require_compatible(other)
        return Operator(self.matrix + other.matrix, self.space)

    def __sub__(self, other: "Operator") -> "Operator":
        self._require_compatible(other)
        return Operator(self.matrix - other.matrix, self.space)

    def __mul__(self, scalar) -> "Operator":
        return Operator(self.matrix * scalar, self.space)

    __rmul__ = __mul__

    def __matmul__(self, other: "Operator") -> "Operator":
        self._require_compatible(other)
        return Operator(self.matrix @ other.matrix, self.space)

    def __repr__(self):
        return f"Operator(dim={self.dim}, ncut={self.space.ncut}, hermitian={self.hermitian})"


class DensityMatrix:
    """Unit-trace Hermitian positive-semidefinite state on a FockSpace."""

    def __init__(self, matrix, space: FockSpace, validate: bool = True):
        matrix = np.asarray(matrix, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DimensionMismatch(f"density matrix must be square, got {matrix.shape}")
        if matrix.shape[0] not in (space.boson_dim, space.total_dim):
            raise DimensionMismatch(
                f"dimension {matrix.shape[0]} does not match space "
                f"(boson {space.boson_dim} or full {space.total_dim})"
            )
        if validate:
            trace_defect = abs(np.trace(matrix) - 1.0)
            if trace_defect >= TRACE_TOL:
                raise ValueError(f"trace defect {trace_defect:.3e} exceeds {TRACE_TOL}")
            herm_defect = np.max(np.abs(matrix - matrix.conj().T))
            if herm_defect >= HERM_TOL:
                raise ValueError(f"Hermiticity defect {herm_defect:.3e} exceeds {HERM_TOL}")
            lowest = float(np.linalg.eigvalsh(matrix)[0])
            if lowest <= -PSD_TOL:
                raise ValueError(f"negative eigenvalue {lowest:.3e} below -{PSD_TOL}")
        self.matrix = _freeze(matrix)
        self.space = space

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __repr__(self):
        return f"DensityMatrix(dim={self.dim}, ncut={self.space.ncut})"


def boson_ladder(space: FockSpace) -> tuple[Operator, Operator]:
    """Annihilation/creation pair on the bosonic factor alone.

    a|n> = sqrt(n)|n-1>; the truncated a_dag annihilates |ncut>.
    """
    d = space.boson_dim
    a = np.zeros((d, d), dtype=complex)
    root = np.sqrt(np.arange(1, d))
    a[np.arange(d - 1), np.arange(1, d)] = root
    return Operator(a, space), Operator(a.conj().T, space)


def ladder_ops(space: FockSpace) -> tuple[Operator, Operator]:
    """Annihilation/creation pair embedded on the full spin (x) Fock space."""
    a, adag = boson_ladder(space)
    return embed_boson(a, space), embed_boson(adag, space)


def spin_ops(space: FockSpace) -> tuple[Operator, Operator, Operator]:
    """Pauli (sx, sy, sz) tensored with the bosonic identity.

    sz = +1 labels the up/donor branch.
    """
    return (
        embed_spin(SIGMA_X, space),
        embed_spin(SIGMA_Y, space),
        embed_spin(SIGMA_Z, space),
    )


def embed_boson(op, space: FockSpace) -> Operator:
    """Lift a bosonic-factor operator to the full space as I_2 (x) op."""
    mat = op.matrix if isinstance(op, Operator) else np.asarray(op, dtype=complex)
    if mat.shape[0] != space.boson_dim:
        raise DimensionMismatch("expected a bosonic-factor operator")
    herm = op.hermitian if isinstance(op, Operator) else None
    return Operator(np.kron(np.eye(2), mat), space, hermitian=herm)


def embed_spin(mat2, space: FockSpace) -> Operator:
    """Lift a 2x2 spin matrix to the full space as mat2 (x) I_boson."""
    mat2 = np.asarray(mat2, dtype=complex)
    if mat2.shape != (2, 2):
        raise DimensionMismatch("expected a 2x2 spin matrix")
    return Operator(np.kron(mat2, np.eye(space.boson_dim)), space)


def product_state(spin_dm, boson_dm, space: FockSpace) -> DensityMatrix:
    """Full-space state spin_dm (x) boson_dm."""
    spin = np.asarray(spin_dm, dtype=complex)
    boson = boson_dm.matrix if isinstance(boson_dm, DensityMatrix) else np.asarray(boson_dm)
    if spin.shape != (2, 2) or boson.shape[0] != space.boson_dim:
        raise DimensionMismatch("product_state expects (2x2) spin and bosonic-factor parts")
    return DensityMatrix(np.kron(spin, boson), space)


def min_ncut_for_displacement(alpha: complex) -> int:
    """Truncation buffer rule: ncut >= 4*(|alpha|^2 + 1)."""
    return int(np.ceil(4.0 * (abs(alpha) ** 2 + 1.0)))


def displacement(alpha: complex, space: FockSpace) -> Operator:
    """Displacement unitary exp(alpha*adag - conj(alpha)*a) on the bosonic factor.

    Requires ncut >= 4*(|alpha|^2 + 1) so that the truncated matrix
    exponential stays unitary to better than ~1e-8; see
    :func:`unitarity_defect`.
    """
    need = min_ncut_for_displacement(alpha)
    if space.ncut < need:
        raise TruncationTooSmall(
            f"displacement |alpha|={abs(alpha):.3g} needs ncut >= {need}, got {space.ncut}"
        )
    a, adag = boson_ladder(space)
    gen = alpha * adag.matrix - np.conj(alpha) * a.matrix
    return Operator(expm(gen), space)


def unitarity_defect(op: Operator) -> float:
    """max |U_dag U - I|, the truncation-induced unitarity violation."""
    d = op.matrix.conj().T @ op.matrix
    return float(np.max(np.abs(d - np.eye(op.dim))))


def thermal_state(nbar: float, space: FockSpace) -> DensityMatrix:
    """Bosonic thermal state with mean occupation nbar, renormalized on the truncation.

    Emits a warning when the geometric weight at the top level exceeds
    1e-8 of the total (truncation leakage).
    """
    if nbar < 0:
        raise ValueError("nbar must be >= 0")
    d = space.boson_dim
    if nbar == 0:
        pops = np.zeros(d)
        pops[0] = 1.0
    else:
        q = nbar / (1.0 + nbar)
        pops = (1.0 - q) * q ** np.arange(d)
        top_weight = pops[-1] / pops.sum()
        if top_weight >= 1e-8:
            warnings.warn(
                f"thermal_state truncation leakage {top_weight:.2e} at ncut={space.ncut}",
                stacklevel=2,
            )
        pops = pops / pops.sum()
    return DensityMatrix(np.diag(pops.astype(complex)), space)


def displaced_thermal(alpha: complex, nbar: float, space: FockSpace) -> DensityMatrix:
    """D(alpha) . thermal(nbar) . D(alpha)_dag on the bosonic factor."""
    disp = displacement(alpha, space)
    rho = thermal_state(nbar, space)
    mat = disp.matrix @ rho.matrix @ disp.matrix.conj().T
    mat = 0.5 * (mat + mat.conj().T)
    return DensityMatrix(mat / np.trace(mat).real, space)


def fock_dm(n: int, space: FockSpace) -> DensityMatrix:
    """Pure Fock state |n><n| on the bosonic factor."""
    d = space.boson_dim
    mat = np.zeros((d, d), dtype=complex)
    mat[n, n] = 1.0
    return DensityMatrix(mat, space)


def boson_reduced(rho: DensityMatrix) -> DensityMatrix:
    """Partial trace over the spin: reduced bosonic-factor state."""
    if rho.dim != rho.space.total_dim:
        raise DimensionMismatch("expected a full-space state")
    d = rho.space.boson_dim
    mat = rho.matrix[:d, :d] + rho.matrix[d:, d:]
    return DensityMatrix(mat, rho.space, validate=False)


def spin_reduced(rho: DensityMatrix) -> np.ndarray:
    """Partial trace over the boson: 2x2 spin state."""
    if rho.dim != rho.space.total_dim:
        raise DimensionMismatch("expected a full-space state")
    d = rho.space.boson_dim
    blocks = rho.matrix.reshape(2, d, 2, d)
    return np.trace(blocks, axis1=1, axis2=3)


def trace_distance(rho_a, rho_b) -> float:
    """(1/2) * trace norm of the difference of two states."""
    mat_a = rho_a.matrix if isinstance(rho_a, DensityMatrix) else np.asarray(rho_a)
    mat_b = rho_b.matrix if isinstance(rho_b, DensityMatrix) else np.asarray(rho_b)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(mat_a - mat_b))))


def expectation(op: Operator, rho: DensityMatrix):
    """Tr(op . rho); real-valued when op is flagged Hermitian.

    For Hermitian operators the imaginary residue is checked against
    1e-9 and the real part is returned.
    """
    if op.dim != rho.dim or op.space != rho.space:
        raise DimensionMismatch("operator and state dimensions differ")
    value = complex(np.sum(op.matrix.T * rho.matrix))
    if op.hermitian:
        if abs(value.imag) > 1e-9:
            warnings.warn(f"Hermitian expectation has imaginary residue {value.imag:.2e}")
        return value.real
    return value
