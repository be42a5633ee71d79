"""Initial data for tau-periodic solutions and periodicity checks on trajectories."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InfeasibleHistoryError
from .integrate import Trajectory
from .model import FITTING_TOL, HistorySpec, ModelParams, fitted_a0

PERIODIC_RTOL = 1e-3
ACF_FLOOR = 0.3


@dataclass(frozen=True)
class PeriodicSetup:
    r0: float
    a_tau_0: float
    a_tau_minus_tau: float
    history: HistorySpec
    residuals: tuple[float, float]
    fitting_condition: bool


def periodic_a0(params: ModelParams, r0: float) -> float:
    """Required ``a_hist(0) = (A/p3) / (1 + p2 sqrt(p4 u / (1 - u)))`` with ``u = p6 r0 - p5``."""
    p = params
    u = p.p6 * r0 - p.p5
    return (p.A / p.p3) / (1.0 + p.p2 * math.sqrt(p.p4 * u / (1.0 - u)))


def _fitted_slope(params: ModelParams, a0: float, r0: float, o0: float) -> float:
    return params.A / (1.0 + params.p2 * o0 * r0) - params.p3 * a0


def _hermite_history(params: ModelParams, tau: float, a0: float, o0: float, r0: float) -> HistorySpec:
    """Three knots: flat at ``-tau``, flat at ``-delta``, fitted slope at 0.

    On ``[-delta, 0]`` the curve is ``a0 + d0 delta (s^3 - s^2)``, whose dip
    below ``a0`` is ``4 d0 delta / 27``; ``delta`` keeps it under ``a0 / 2``.
    """
    d0 = _fitted_slope(params, a0, r0, o0)
    delta = 0.5 * tau
    if d0 > 0.0:
        delta = min(delta, 0.5 * 27.0 / 4.0 * a0 / d0)
    return HistorySpec("hermite", {"t": (-tau, -delta, 0.0), "a": (o0, a0, a0), "da": (0.0, 0.0, d0)},
                       r0, o0)


def build_periodic_setup(params: ModelParams, r0: float, history_kind: str = "poly_exp",
                         o0: float | None = None, tau: float | None = None) -> PeriodicSetup:
    """History meeting ``a_hist(0) = a_tau_0``, ``a_hist(-tau) = o0`` and the fitting condition.

    ``poly_exp`` is tried first and the three-knot Hermite table is the
    fallback. ``o0`` defaults to ``a_tau_0``.
    """
    p = params
    tau = p.tau if tau is None else float(tau)
    if tau <= 0:
        raise DomainError("a periodic setup needs tau > 0")
    lo, hi = p.p5 / p.p6, (p.p5 + 1.0) / p.p6
    if not lo < r0 < hi:
        raise DomainError(f"r0 must lie strictly inside ({lo}, {hi})")
    a0 = periodic_a0(p, r0)
    o0 = a0 if o0 is None else float(o0)
    if not (o0 > 0.0 and math.isfinite(o0)):
        raise InfeasibleHistoryError("o0 = a_hist(-tau) must be positive")
    fits = abs(fitted_a0(p, r0, o0) - a0) <= FITTING_TOL

    hist = None
    if history_kind in ("poly_exp", "constant") and fits:
        if history_kind == "constant":
            if abs(o0 - a0) <= FITTING_TOL:
                hist = HistorySpec("constant", {"value": a0}, r0, o0)
        else:
            lam = (o0 - a0) / (tau * tau * math.exp(tau))
            hist = HistorySpec("poly_exp", {"a0": a0, "lam": lam}, r0, o0)
    if hist is None:
        if history_kind == "constant":
            raise InfeasibleHistoryError("a constant history cannot meet both endpoints and the fitting condition")
        hist = _hermite_history(p, tau, a0, o0, r0)
    hist.validate(tau)

    res1 = p.p3 * a0 / p.A - 1.0 / (1.0 + p.p2 * r0 * o0)
    res2 = (p.p5 + 1.0 - p.p6 * r0) / p.p4 - 1.0 / (p.p4 + (r0 * o0) ** 2)
    return PeriodicSetup(r0, a0, o0, hist, (res1, res2), True)


@dataclass(frozen=True)
class PeriodicityCheck:
    residual: float
    amplitude: float
    periodic: bool


def verify_periodicity(traj: Trajectory, period: float, t_start: float, samples: int = 2001,
                       rtol: float = PERIODIC_RTOL) -> PeriodicityCheck:
    """Compare ``state(t + period)`` with ``state(t)`` on ``[t_start, t_start + period]``.

    The residual adds the product channel ``o r``. The amplitude is the
    largest peak-to-peak range of ``a``, ``r``, ``o`` over
    ``[t_start, t_start + 2 period]``; periodic means
    ``residual <= rtol * amplitude`` (``<= 1e-12`` for a flat trajectory).
    """
    if period <= 0:
        raise DomainError("period must be positive")
    if t_start < traj.times[0] or t_start + 2.0 * period > traj.t_end + 1e-9:
        raise DomainError("trajectory does not cover [t_start, t_start + 2 period]")
    t = np.linspace(t_start, t_start + period, samples)
    y0 = traj(t)
    y1 = traj(np.minimum(t + period, traj.t_end))
    res = float(np.max(np.abs(y1 - y0)) + np.max(np.abs(y1[:, 1] * y1[:, 2] - y0[:, 1] * y0[:, 2])))
    window = traj(np.linspace(t_start, min(t_start + 2.0 * period, traj.t_end), 2 * samples))
    amp = float(np.max(np.ptp(window, axis=0)))
    periodic = res <= max(rtol * amp, 1e-12)
    return PeriodicityCheck(res, amp, bool(periodic))


def estimate_period(traj: Trajectory, t_start: float, channel: int = 0,
                    floor: float = ACF_FLOOR, min_cycles: int = 3) -> float | None:
    """Dominant period from the autocorrelation of one channel after ``t_start``.

    The first autocorrelation peak after the first zero crossing wins.
    Returns ``None`` when the signal is flat, the autocorrelation has no
    peak above ``floor``, or fewer than ``min_cycles`` periods fit.
    """
    mask = traj.times >= t_start
    if mask.sum() < 16:
        return None
    dt = float(np.median(np.diff(traj.times[mask])))
    t = np.arange(traj.times[mask][0], traj.t_end, dt)
    x = traj(t)[:, channel]
    x = x - x.mean()
    if np.std(x) <= 1e-12 * (1.0 + np.abs(traj(t)[:, channel]).mean()):
        return None
    n = x.size
    spec = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(spec * np.conj(spec))[:n]
    acf = acf / acf[0]
    # normalise for the shrinking overlap
    acf = acf * n / (n - np.arange(n))
    neg = np.flatnonzero(acf < 0.0)
    if neg.size == 0:
        return None
    start = neg[0]
    limit = n // min_cycles
    if start >= limit:
        return None
    seg = acf[start:limit + 1]
    peaks = np.flatnonzero((seg[1:-1] >= seg[:-2]) & (seg[1:-1] > seg[2:]) & (seg[1:-1] >= floor))
    if peaks.size == 0:
        return None
    # first peak; later ones sit at multiples of the period
    k = start + 1 + int(peaks[0])
    y0, y1, y2 = acf[k - 1], acf[k], acf[k + 1]
    den = y0 - 2.0 * y1 + y2
    shift = 0.5 * (y0 - y2) / den if den != 0.0 else 0.0
    return float((k + shift) * dt)


def lag_series(traj: Trajectory, tau: float, channel: int = 0):
    """``(t, x(t), x(t - tau), x'(t))`` for node times ``t >= tau``."""
    mask = traj.times >= traj.times[0] + tau
    t = traj.times[mask]
    x = traj.states[mask, channel]
    lagged = traj(t - tau)[:, channel]
    dx = traj.derivs[mask, channel]
    return t, x, lagged, dx
