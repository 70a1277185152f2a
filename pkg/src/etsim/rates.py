"""Transfer-rate oracles and rate extraction from trajectories.

Analytic side: Franck-Condon tables for displaced oscillator ladders,
the golden-rule rate with Lorentzian-broadened resonances, and the
closed-form two-vibronic-state rate. Data side: exponential fits,
the finite-window inverse-lifetime estimator with its 2/t_sim
correction, and Gaussian-resampling error bars.
"""

from __future__ import annotations

import enum
import functools
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import curve_fit
from scipy.special import eval_genlaguerre, gammaln

from . import fock
from .errors import InsufficientCoverage, InvalidRate, FitDiverged, TruncationTooSmall
from .model import ModelParams
from .propagation import Trajectory


class RateMethod(enum.Enum):
    EXP_FIT = "exp_fit"
    LIFETIME = "lifetime"
    FGR = "fgr"
    TWO_STATE = "two_state"


@dataclass
class RateEstimate:
    """Extracted rate (units of the mode frequency) with uncertainty."""

    k_t: float
    stderr: float
    method: RateMethod
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.stderr < 0:
            raise ValueError("stderr must be >= 0")


@dataclass(frozen=True)
class FranckCondonTable:
    """FC[n, m] = |<n| D(d) |m>|^2 for a displaced oscillator ladder pair."""

    displacement: float
    table: np.ndarray
    ncut: int

    def __getitem__(self, idx):
        return self.table[idx]


def _fc_closed_form(d: float, ncut: int) -> np.ndarray:
    """Associated-Laguerre form of |<n|D(d)|m>|^2 (exact, truncation-free)."""
    x = d * d
    out = np.empty((ncut + 1, ncut + 1))
    for n in range(ncut + 1):
        for m in range(n, ncut + 1):
            # |<m|D|n>|^2 = (n!/m!) x^(m-n) e^(-x) [L_n^(m-n)(x)]^2
            logpref = gammaln(n + 1) - gammaln(m + 1) + (m - n) * np.log(x) if x > 0 else (
                0.0 if m == n else -np.inf
            )
            if np.isneginf(logpref):
                val = 1.0 if (m == n and x == 0.0) else 0.0
            else:
                lag = eval_genlaguerre(n, m - n, x)
                val = np.exp(logpref - x) * lag * lag
            out[n, m] = val
            out[m, n] = val
    return out


@functools.lru_cache(maxsize=64)
def _fc_table_checked(d: float, ncut: int) -> np.ndarray:
    closed = _fc_closed_form(d, ncut)
    # numeric route on an enlarged space so truncation cannot pollute the
    # compared block; a displaced |ncut> reaches up by ~ 2 d sqrt(ncut) + d^2
    pad = int(np.ceil(2.0 * abs(d) * np.sqrt(ncut) + d * d)) + 10
    space = fock.FockSpace(ncut + pad)
    numeric = np.abs(fock.displacement(d, space).matrix[: ncut + 1, : ncut + 1]) ** 2
    discrepancy = np.max(np.abs(closed - numeric))
    if discrepancy >= 1e-8:
        raise AssertionError(
            f"Franck-Condon routes disagree by {discrepancy:.3e} (d={d}, ncut={ncut})"
        )
    closed.flags.writeable = False
    return closed


def franck_condon(d: float, ncut: int) -> FranckCondonTable:
    """Overlap table for ladders displaced by d, validated two ways.

    The stored values come from the associated-Laguerre closed form; a
    numeric displacement-matrix route must agree to 1e-8 on the block
    n, m <= ncut/2 (beyond that the truncated exponential is not
    reliable, which is why the buffer rule below exists).
    """
    need = fock.min_ncut_for_displacement(d)
    if ncut < need:
        raise TruncationTooSmall(f"franck_condon d={d} needs ncut >= {need}, got {ncut}")
    return FranckCondonTable(displacement=float(d), table=_fc_table_checked(float(d), int(ncut)), ncut=int(ncut))


def _thermal_weights(nbar: float, n_max: int) -> np.ndarray:
    if nbar == 0:
        w = np.zeros(n_max + 1)
        w[0] = 1.0
        return w
    q = nbar / (1.0 + nbar)
    w = (1.0 - q) * q ** np.arange(n_max + 1)
    return w / w.sum()


def fgr_rate(p: ModelParams, population_source: str = "nbar", ncut: int | None = None) -> float:
    """Golden-rule rate with Lorentzian-broadened resonances.

    k = 2 pi v_x^2 sum_{n,m} p_n FC[n,m] (gamma/2pi) / [(delta_E + (n-m) omega)^2 + gamma^2/4]

    using the v_x = 0 ladder energies, so a donor level n and acceptor
    level m are separated by delta_E + (n-m) omega. ``population_source``
    picks whether the donor-ladder weights p_n use the bath occupation
    (``"nbar"``) or the prepared occupation (``"nbar0"``).
    """
    if p.gamma <= 0:
        raise InvalidRate("fgr_rate requires gamma > 0")
    if population_source not in ("nbar", "nbar0"):
        raise ValueError("population_source must be 'nbar' or 'nbar0'")
    if p.v_x == 0:
        return 0.0
    d = p.g / p.omega
    if ncut is None:
        ncut = max(
            fock.min_ncut_for_displacement(d),
            int(np.ceil(abs(p.delta_E) / p.omega)) + 12,
            16,
        )
    fc = franck_condon(d, ncut)
    occupation = p.nbar if population_source == "nbar" else p.nbar0
    weights = _thermal_weights(occupation, ncut)
    n_idx = np.arange(ncut + 1)
    gaps = p.delta_E + (n_idx[:, None] - n_idx[None, :]) * p.omega
    lorentz = (p.gamma / (2.0 * np.pi)) / (gaps**2 + p.gamma**2 / 4.0)
    return float(2.0 * np.pi * p.v_x**2 * np.sum(weights[:, None] * fc.table * lorentz))


def two_state_rate(v_eff: float, nu: float, gamma: float) -> float:
    """Closed-form rate for one donor level feeding one decaying acceptor level.

    k = nu*gamma * (1 + x^2) / (1 + x^4/2) with x = nu*gamma / v_eff;
    saturates at nu*gamma when the vibronic coupling dominates.
    """
    if gamma <= 0 or nu <= 0:
        raise InvalidRate("two_state_rate requires nu > 0 and gamma > 0")
    if v_eff <= 0:
        raise InvalidRate("two_state_rate requires v_eff > 0")
    x = nu * gamma / v_eff
    return nu * gamma * (1.0 + x**2) / (1.0 + 0.5 * x**4)


def fit_exponential(traj: Trajectory) -> RateEstimate:
    """Least-squares fit of P_D(t) = P_inf + (1 - P_inf) exp(-k t)."""
    t = np.asarray(traj.times, dtype=float)
    pd = np.asarray(traj.p_donor, dtype=float)
    if len(t) < 8:
        raise InsufficientCoverage("exponential fit needs at least 8 samples")
    if abs(pd[0] - 1.0) > 0.1:
        warnings.warn(f"P_D(0) = {pd[0]:.3f}; exponential model assumes a donor start")

    def model_fn(tt, k, p_inf):
        return p_inf + (1.0 - p_inf) * np.exp(-k * tt)

    span = t[-1] - t[0]
    drop = max(pd[0] - pd[-1], 1e-3)
    p0 = [max(drop, 1e-3) / span, float(np.clip(pd[-1], 0.0, 1.0))]
    try:
        popt, pcov = curve_fit(
            model_fn, t, pd, p0=p0, bounds=([0.0, -0.2], [np.inf, 1.2]), maxfev=20000
        )
    except (RuntimeError, ValueError) as exc:
        raise FitDiverged(f"exponential fit failed: {exc}", {"p0": p0}) from exc
    k_fit, p_inf = popt
    residual = float(np.sqrt(np.mean((model_fn(t, *popt) - pd) ** 2)))
    stderr = float(np.sqrt(pcov[0, 0])) if np.isfinite(pcov[0, 0]) else np.inf
    return RateEstimate(
        k_t=float(k_fit),
        stderr=stderr,
        method=RateMethod.EXP_FIT,
        diagnostics={"p_inf": float(p_inf), "fit_residual": residual},
    )


def _lifetime_from_arrays(t: np.ndarray, pd: np.ndarray, t_sim: float):
    """Finite-window inverse lifetime with the 2/t_sim correction."""
    spline = CubicSpline(t, pd)
    fine = np.linspace(t[0], t_sim, 10 * len(t))
    values = spline(fine)
    int_p = np.trapezoid(values, fine)
    int_tp = np.trapezoid(fine * values, fine)
    raw = int_p / int_tp
    k0 = 2.0 / t_sim
    return raw - k0, raw, k0


def lifetime_rate(traj: Trajectory, t_sim: float) -> RateEstimate:
    """Inverse donor lifetime over [0, t_sim], corrected by k0 = 2/t_sim.

    The raw functional evaluates integral(P_D) / integral(t P_D) on a
    10x-refined grid through a piecewise-cubic interpolant; without the
    k0 subtraction it reads 2/t_sim even for a frozen donor. Negative
    results are clipped at zero (flagged in the diagnostics).
    """
    t = np.asarray(traj.times, dtype=float)
    pd = np.asarray(traj.p_donor, dtype=float)
    slack = 1e-9 * max(t_sim, 1.0)
    if t[0] > slack or t[-1] < t_sim - slack:
        raise InsufficientCoverage(
            f"trajectory covers [{t[0]:.3g}, {t[-1]:.3g}], need [0, {t_sim:.3g}]"
        )
    mask = t <= t_sim + slack
    t, pd = t[mask], pd[mask]
    tail = max(3, len(t) // 20)
    final_slope = float(np.polyfit(t[-tail:], pd[-tail:], 1)[0])
    if abs(final_slope) * t_sim > 0.05:
        warnings.warn(
            f"P_D still drifting at t_sim (slope*t_sim = {final_slope * t_sim:.3f}); "
            "the inverse-lifetime estimate is window-sensitive"
        )
    k_t, raw, k0 = _lifetime_from_arrays(t, pd, t_sim)
    clipped = k_t < 0.0
    return RateEstimate(
        k_t=max(k_t, 0.0),
        stderr=0.0,
        method=RateMethod.LIFETIME,
        diagnostics={
            "raw_ratio": raw,
            "k0": k0,
            "clipped": clipped,
            "final_slope": final_slope,
        },
    )


def bootstrap_error(
    traj: Trajectory,
    sigma,
    t_sim: float,
    n_resample: int = 200,
    seed: int = 0,
) -> RateEstimate:
    """Gaussian-resampling error bar for the inverse-lifetime rate.

    Each sample perturbs P_D(t_i) by N(0, sigma_i) with an independent
    generator keyed on (seed, resample index), so the result does not
    depend on execution order. The center value is the unperturbed
    lifetime rate; stderr is the SD over resamples.
    """
    if n_resample < 100:
        raise ValueError("n_resample must be >= 100")
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), traj.p_donor.shape)
    if np.any(sigma < 0):
        raise ValueError("sigma must be >= 0")
    center = lifetime_rate(traj, t_sim)
    t = np.asarray(traj.times, dtype=float)
    slack = 1e-9 * max(t_sim, 1.0)
    mask = t <= t_sim + slack
    t_w, pd_w, sig_w = t[mask], traj.p_donor[mask], sigma[mask]
    draws = np.empty(n_resample)
    for i in range(n_resample):
        rng = np.random.default_rng((seed, i))
        perturbed = pd_w + rng.normal(0.0, 1.0, size=pd_w.shape) * sig_w
        k_i, _, _ = _lifetime_from_arrays(t_w, perturbed, t_sim)
        draws[i] = max(k_i, 0.0)
    return RateEstimate(
        k_t=center.k_t,
        stderr=float(np.std(draws)),
        method=RateMethod.LIFETIME,
        diagnostics={**center.diagnostics, "n_resample": n_resample, "seed": seed},
    )
