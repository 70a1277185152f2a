"""Lindblad propagation and steady states.

The default propagation path is an embedded Dormand-Prince 5(4) pair on
the d x d density-matrix ODE

    drho/dt = -i[H, rho] + sum_k rate_k (c rho cdag - {cdag c, rho}/2),

with the Hermitian part enforced by symmetrization after every accepted
step and no trace renormalization (the trace defect is kept as a quality
metric). Observable sampling is decoupled from the adaptive steps by
cubic Hermite dense output. A dense superoperator-exponential path is
retained for cross-checks at small dimension, and steady states are
obtained from the null space of the vectorized generator.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sparse
from scipy.linalg import expm

from . import fock
from .errors import (
    DimensionMismatch,
    NoDissipation,
    StepSizeUnderflow,
    TruncationLeak,
)
from .fock import DensityMatrix, FockSpace, Operator
from .model import DissipatorSet, ModelParams

TRACE_DEFECT_TOL = 1e-7
DEFAULT_LEAK_TOL = 1e-6


@dataclass(frozen=True)
class TimeGrid:
    """Sampling grid: either (t_end, n_samples) or explicit times."""

    t_end: float = 0.0
    n_samples: int = 201
    t_start: float = 0.0
    explicit: np.ndarray | None = None

    def times(self) -> np.ndarray:
        if self.explicit is not None:
            t = np.asarray(self.explicit, dtype=float)
            if t.ndim != 1 or len(t) < 2 or np.any(np.diff(t) <= 0):
                raise ValueError("explicit times must be strictly increasing")
            return t
        if self.t_end <= self.t_start:
            raise ValueError("t_end must exceed t_start")
        return np.linspace(self.t_start, self.t_end, self.n_samples)


@dataclass
class Trajectory:
    """Observable records along a propagation.

    ``corr`` is <sz (adag - a)>; ``a_mean`` is <a>; ``omega`` only feeds
    the oscillation-count column of the CSV serialization.
    """

    times: np.ndarray
    p_donor: np.ndarray
    n_mean: np.ndarray
    a_mean: np.ndarray
    corr: np.ndarray
    trace_defect: np.ndarray
    omega: float = 1.0
    states: np.ndarray | None = None
    space: FockSpace | None = None
    stats: dict = field(default_factory=dict)

    CSV_COLUMNS = (
        "t",
        "omega_t_over_2pi",
        "P_D",
        "n_avg",
        "re_a",
        "im_a",
        "re_corr",
        "im_corr",
        "trace_defect",
    )

    def to_csv(self, path) -> None:
        rows = np.column_stack(
            [
                self.times,
                self.omega * self.times / (2.0 * np.pi),
                self.p_donor,
                self.n_mean,
                self.a_mean.real,
                self.a_mean.imag,
                self.corr.real,
                self.corr.imag,
                self.trace_defect,
            ]
        )
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(self.CSV_COLUMNS) + "\n")
            for row in rows:
                fh.write(",".join(f"{v:.12g}" for v in row) + "\n")


def _prepare_channels(dissipators: DissipatorSet):
    prepared = []
    for op, rate in dissipators:
        if rate == 0.0:
            continue
        c = op.matrix
        cdag = c.conj().T
        prepared.append((c, cdag, cdag @ c, float(rate)))
    return prepared


def _make_rhs(h_matrix: np.ndarray, channels):
    """RHS closure valid for Hermitian arguments (all RK stages are)."""

    def rhs(_t: float, rho: np.ndarray) -> np.ndarray:
        hr = h_matrix @ rho
        out = -1j * (hr - hr.conj().T)
        for c, cdag, cdc, rate in channels:
            sand = (c @ rho) @ cdag
            anti = cdc @ rho
            out += rate * (sand - 0.5 * (anti + anti.conj().T))
        return out

    return rhs


def lindblad_rhs(rho: DensityMatrix, h: Operator, dissipators: DissipatorSet) -> Operator:
    """Generator applied once: -i[H, rho] + dissipative channels."""
    if rho.dim != h.dim:
        raise DimensionMismatch("state and Hamiltonian dimensions differ")
    channels = _prepare_channels(dissipators)
    for c, *_ in channels:
        if c.shape[0] != rho.dim:
            raise DimensionMismatch("jump operator dimension differs from state")
    out = _make_rhs(h.matrix, channels)(0.0, rho.matrix)
    return Operator(out, rho.space)


def sparse_liouvillian(h: Operator, dissipators: DissipatorSet) -> sparse.csr_matrix:
    """Sparse vectorized generator (row-major vec convention).

    The Hamiltonian and jump operators are band-limited on the spin (x)
    Fock basis, so the superoperator is applied as a sparse matvec; this
    is what makes long adaptive-RK propagations cheap.
    """
    d = h.dim
    eye = sparse.identity(d, format="csr", dtype=complex)
    hs = sparse.csr_matrix(h.matrix)
    sup = -1j * (sparse.kron(hs, eye) - sparse.kron(eye, hs.T))
    for c, cdag, cdc, rate in _prepare_channels(dissipators):
        cs = sparse.csr_matrix(c)
        cdcs = sparse.csr_matrix(cdc)
        sup = sup + rate * (
            sparse.kron(cs, cs.conj())
            - 0.5 * sparse.kron(cdcs, eye)
            - 0.5 * sparse.kron(eye, cdcs.T)
        )
    return sparse.csr_matrix(sup)


# Dormand-Prince 5(4) tableau.
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_DP_E = _DP_B5 - _DP_B4


def _symmetrize_matrix(y: np.ndarray) -> np.ndarray:
    return 0.5 * (y + y.conj().T)


def integrate_matrix_ode(
    rhs,
    y0: np.ndarray,
    sample_times: np.ndarray,
    tol: float,
    max_step: float | None = None,
    accept_hook=_symmetrize_matrix,
):
    """Adaptive 5(4) integration of a matrix ODE with dense sampling.

    Returns (samples, stats) where samples has shape
    (len(sample_times), *y0.shape). Sampling uses cubic Hermite
    interpolation on the accepted steps, so the sample grid does not
    constrain the step size. ``accept_hook`` post-processes the state
    after each accepted step (Hermitian symmetrization by default).
    """
    if not 1e-12 <= tol <= 1e-4:
        raise ValueError("tol must lie in [1e-12, 1e-4]")
    sample_times = np.asarray(sample_times, dtype=float)
    t = float(sample_times[0])
    t_end = float(sample_times[-1])
    y = np.array(y0, dtype=complex)
    f = rhs(t, y)

    samples = np.empty((len(sample_times),) + y.shape, dtype=complex)
    samples[0] = y
    next_i = 1

    span = t_end - t
    fnorm = np.linalg.norm(f)
    h = 0.01 * max(np.linalg.norm(y), 1e-10) / max(fnorm, 1e-10)
    h = min(h, span / 10.0)
    if max_step is not None:
        h = min(h, max_step)
    h_min = 1e-14 * max(abs(t_end), 1.0)

    n_accept = n_reject = 0
    slack = 1e-12 * max(abs(t_end), 1.0)
    k = [None] * 7
    while t < t_end:
        if t + h > t_end:
            h = t_end - t
        k[0] = f
        for i in range(1, 7):
            yi = y + h * sum(aij * k[j] for j, aij in enumerate(_DP_A[i]) if aij != 0.0)
            k[i] = rhs(t + _DP_C[i] * h, yi)
        y_new = yi  # stage 7 argument equals the 5th-order solution (FSAL)
        err = h * sum(e * k[j] for j, e in enumerate(_DP_E) if e != 0.0)
        scale = tol + tol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = float(np.sqrt(np.mean(np.abs(err / scale) ** 2)))

        if err_norm <= 1.0:
            t_new = t + h
            f_new = k[6]
            # dense output over (t, t_new]
            while next_i < len(sample_times) and sample_times[next_i] <= t_new + slack:
                th = (sample_times[next_i] - t) / h
                h00 = (1.0 + 2.0 * th) * (1.0 - th) ** 2
                h10 = th * (1.0 - th) ** 2
                h01 = th * th * (3.0 - 2.0 * th)
                h11 = th * th * (th - 1.0)
                samples[next_i] = h00 * y + h01 * y_new + h * (h10 * k[0] + h11 * f_new)
                next_i += 1
            y = accept_hook(y_new) if accept_hook is not None else y_new
            t = t_new
            f = f_new
            n_accept += 1
            factor = min(5.0, max(0.2, 0.9 * err_norm ** -0.2)) if err_norm > 0 else 5.0
        else:
            n_reject += 1
            factor = max(0.2, 0.9 * err_norm ** -0.2)
        h *= factor
        if max_step is not None:
            h = min(h, max_step)
        if h < h_min:
            raise StepSizeUnderflow(f"step {h:.3e} below floor at t={t:.6g}")
    if next_i < len(sample_times):
        samples[next_i:] = y  # t_end hit exactly by the last step
    stats = {"n_accept": n_accept, "n_reject": n_reject}
    return samples, stats


def _observables(space: FockSpace, donor_axis: np.ndarray | None = None):
    a, adag = fock.ladder_ops(space)
    _, _, sz = fock.spin_ops(space)
    axis = sz.matrix if donor_axis is None else donor_axis
    num = adag.matrix @ a.matrix
    corr_op = axis @ (adag.matrix - a.matrix)
    return axis, num, a.matrix, corr_op


def _record(
    space: FockSpace, times, states, omega, keep_states, stats, donor_axis=None
) -> Trajectory:
    sz, num, a_op, corr_op = _observables(space, donor_axis)
    n_t = len(times)
    p_d = np.empty(n_t)
    n_mean = np.empty(n_t)
    a_mean = np.empty(n_t, dtype=complex)
    corr = np.empty(n_t, dtype=complex)
    defect = np.empty(n_t)
    for i, rho in enumerate(states):
        tr = np.trace(rho)
        p_d[i] = 0.5 * (np.sum(sz.T * rho).real + tr.real)
        n_mean[i] = np.sum(num.T * rho).real
        a_mean[i] = np.sum(a_op.T * rho)
        corr[i] = np.sum(corr_op.T * rho)
        defect[i] = abs(tr - 1.0)
    return Trajectory(
        times=np.asarray(times, dtype=float),
        p_donor=p_d,
        n_mean=n_mean,
        a_mean=a_mean,
        corr=corr,
        trace_defect=defect,
        omega=omega,
        states=np.asarray(states) if keep_states else None,
        space=space,
        stats=stats,
    )


def _check_leak(space: FockSpace, times, states, leak_tol: float):
    top = (space.ncut, space.ncut + space.boson_dim)
    for t, rho in zip(times, states):
        pop = rho[top[0], top[0]].real + rho[top[1], top[1]].real
        if pop > leak_tol:
            raise TruncationLeak(
                f"top-Fock population {pop:.3e} > {leak_tol:g} at t={t:.6g}; raise ncut"
            )


def evolve(
    rho0: DensityMatrix,
    h: Operator,
    dissipators: DissipatorSet,
    grid: TimeGrid,
    tol: float = 1e-9,
    omega: float = 1.0,
    store_states: bool = False,
    leak_tol: float = DEFAULT_LEAK_TOL,
) -> Trajectory:
    """Propagate rho0 under the Lindblad generator and record observables."""
    space = rho0.space
    if h.dim != rho0.dim:
        raise DimensionMismatch("Hamiltonian and state dimensions differ")
    times = grid.times()
    d = rho0.dim
    sup = sparse_liouvillian(h, dissipators)

    def rhs(_t, vec):
        return sup @ vec

    def accept(vec):
        mat = vec.reshape(d, d)
        return (0.5 * (mat + mat.conj().T)).reshape(-1)

    flat, stats = integrate_matrix_ode(rhs, rho0.matrix.reshape(-1), times, tol, accept_hook=accept)
    states = flat.reshape(len(times), d, d)
    _check_leak(space, times, states, leak_tol)
    traj = _record(space, times, states, omega, store_states, stats)
    worst = float(np.max(traj.trace_defect))
    if worst > TRACE_DEFECT_TOL:
        warnings.warn(f"trace defect {worst:.2e} exceeds {TRACE_DEFECT_TOL:g}; tighten tol")
    return traj


def liouvillian(h: Operator, dissipators: DissipatorSet) -> np.ndarray:
    """Dense vectorized generator (row-major vec convention)."""
    d = h.dim
    eye = np.eye(d)
    sup = -1j * (np.kron(h.matrix, eye) - np.kron(eye, h.matrix.T))
    for c, cdag, cdc, rate in _prepare_channels(dissipators):
        sup += rate * (
            np.kron(c, c.conj())
            - 0.5 * np.kron(cdc, eye)
            - 0.5 * np.kron(eye, cdc.T)
        )
    return sup


def propagate_expm(
    rho0: DensityMatrix,
    h: Operator,
    dissipators: DissipatorSet,
    times: np.ndarray,
    omega: float = 1.0,
) -> Trajectory:
    """Superoperator-exponential propagation (cross-check path, small d)."""
    sup = liouvillian(h, dissipators)
    times = np.asarray(times, dtype=float)
    states = [np.array(rho0.matrix)]
    vec = rho0.matrix.flatten()
    for dt in np.diff(times):
        vec = expm(sup * dt) @ vec
        states.append(vec.reshape(rho0.dim, rho0.dim))
    return _record(rho0.space, times, states, omega, False, {})


@dataclass
class SteadyStateReport:
    """Measured steady-state moments plus their closed-form predictions.

    Measured entries come from the null-space solution; the ``*_predicted``
    entries evaluate the stationarity identities for the phonon number,
    coherent amplitude, and reaction coordinate, and ``n_uncorrelated``
    assumes a factorized spin-phonon state.
    """

    rho_ss: DensityMatrix
    p_donor: float
    n_mean: float
    a_mean: complex
    y_over_y0: float
    corr: complex
    n_from_balance: float
    a_predicted: complex
    y_predicted_over_y0: float
    n_uncorrelated: float
    residual: float
    degenerate: bool | None = None


def _moment_formulas(p: ModelParams, p_donor: float, corr: complex):
    sz_mean = 2.0 * p_donor - 1.0
    denom = 4.0 * p.omega**2 + p.gamma**2
    if p.gamma > 0:
        n_balance = p.nbar - 0.5j * (p.g / p.gamma) * corr
    else:
        n_balance = complex(p.nbar)
    a_pred = -1j * p.g * sz_mean / (2j * p.omega + p.gamma)
    y_pred = -2.0 * p.omega * p.g * sz_mean / denom
    n_uncorr = p.nbar + p.g**2 * sz_mean**2 / denom
    return n_balance.real, a_pred, y_pred, n_uncorr


def steady_state(
    h: Operator,
    dissipators: DissipatorSet,
    params: ModelParams,
    detect_degenerate: bool = False,
    tol: float = 1e-9,
) -> SteadyStateReport:
    """Null-space steady state of the vectorized generator.

    One row of the singular system is replaced by the trace constraint.
    Falls back to long-time evolution (t = 20 / smallest rate) when the
    solve leaves a poor residual.
    """
    channels = _prepare_channels(dissipators)
    if not channels:
        raise NoDissipation("steady state requires at least one dissipative channel")
    d = h.dim
    sup_sparse = sparse_liouvillian(h, dissipators)
    sup = sup_sparse.toarray() if detect_degenerate else None

    mat = sup_sparse.tolil(copy=True)
    trace_row = np.zeros(d * d, dtype=complex)
    trace_row[:: d + 1] = 1.0
    mat[0] = trace_row
    rhs_vec = np.zeros(d * d, dtype=complex)
    rhs_vec[0] = 1.0
    try:
        from scipy.sparse.linalg import splu

        vec = splu(mat.tocsc()).solve(rhs_vec)
    except RuntimeError:  # singular factorization: fall back to least squares
        vec = np.linalg.lstsq(mat.toarray(), rhs_vec, rcond=None)[0]

    rho = vec.reshape(d, d)
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.trace(rho).real
    residual = float(np.linalg.norm(sup_sparse @ rho.flatten()) / np.linalg.norm(rho))

    if residual > 1e-8:
        rates = [rate for *_, rate in channels]
        horizon = 20.0 / min(rates)
        mixed = np.eye(d, dtype=complex) / d
        states, _ = integrate_matrix_ode(
            _make_rhs(h.matrix, channels), mixed, np.array([0.0, horizon]), tol
        )
        rho = 0.5 * (states[-1] + states[-1].conj().T)
        rho = rho / np.trace(rho).real
        residual = float(np.linalg.norm(sup_sparse @ rho.flatten()) / np.linalg.norm(rho))
        if residual > 1e-8:
            warnings.warn(f"steady-state residual {residual:.2e} after fallback")

    degenerate = None
    if detect_degenerate:
        svals = np.linalg.svd(sup, compute_uv=False)
        null_dim = int(np.sum(svals < svals[0] * 1e-10))
        degenerate = null_dim > 1
        if degenerate:
            warnings.warn(f"generator null space has dimension {null_dim}; returning one solution")

    space = FockSpace(d // 2 - 1)
    rho_dm = DensityMatrix(rho, space, validate=False)
    sz, num, a_op, corr_op = _observables(space)
    p_donor = 0.5 * (np.sum(sz.T * rho).real + 1.0)
    n_mean = float(np.sum(num.T * rho).real)
    a_mean = complex(np.sum(a_op.T * rho))
    corr = complex(np.sum(corr_op.T * rho))
    n_balance, a_pred, y_pred, n_uncorr = _moment_formulas(params, p_donor, corr)
    return SteadyStateReport(
        rho_ss=rho_dm,
        p_donor=float(p_donor),
        n_mean=n_mean,
        a_mean=a_mean,
        y_over_y0=float(a_mean.real),
        corr=corr,
        n_from_balance=n_balance,
        a_predicted=a_pred,
        y_predicted_over_y0=y_pred,
        n_uncorrelated=n_uncorr,
        residual=residual,
        degenerate=degenerate,
    )


def phonon_number_balance_residual(report: SteadyStateReport) -> float:
    """|measured n_ss - balance-identity n_ss| for a steady-state report."""
    return abs(report.n_mean - report.n_from_balance)
