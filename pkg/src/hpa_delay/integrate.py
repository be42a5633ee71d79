"""Fixed-step integration of the undelayed and delayed systems.

* :func:`integrate_ode` is classic RK4 for ``tau = 0``.
* :func:`integrate_dde` is the method of steps. The step divides ``tau`` so
  every delayed read lands on a stored step of the previous window. The
  cortisol channel is advanced with the exact variation-of-constants
  integral of the cubic Hermite interpolant of the delayed ACTH, and the
  ``(a, r)`` pair with RK4.
* :func:`picard_oracle` iterates the window-wise integral equations with
  trapezoidal quadrature and is used as an independent check.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.signal import lfilter

from .equilibria import blow_up_estimate  # noqa: F401  (re-exported)
from .errors import DomainError, InvalidInputError, NonConvergenceError, UnsupportedCaseError
from .model import HistorySpec, ModelParams, State, check_fitting_condition, hill

BLOW_UP_LEVEL = 1e12
BLOW_UP_BRACKET = 1e-6
NONNEG_TOL = 1e-12
DEFAULT_STEPS_PER_DELAY = 200


@dataclass
class Trajectory:
    """Node values and derivatives with cubic Hermite dense output.

    ``flags`` holds ``nonneg_violation``, ``bounds_entry_time``,
    ``blow_up_time`` (each a time or ``None``) and, for delayed runs,
    ``fitting_condition``.
    """

    times: np.ndarray
    states: np.ndarray
    derivs: np.ndarray
    flags: dict
    extras: dict = field(default_factory=dict)

    def __len__(self):
        return self.times.size

    @property
    def a(self):
        return self.states[:, 0]

    @property
    def r(self):
        return self.states[:, 1]

    @property
    def o(self):
        return self.states[:, 2]

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def state(self, i: int) -> State:
        return State.from_array(self.states[i])

    def __call__(self, t):
        """Interpolated states at ``t`` (scalar or array), shape ``(..., 3)``."""
        t = np.asarray(t, dtype=float)
        ts = self.times
        if np.any(t < ts[0] - 1e-12) or np.any(t > ts[-1] + 1e-12):
            raise DomainError(f"t outside [{ts[0]}, {ts[-1]}]")
        i = np.clip(np.searchsorted(ts, t, side="right") - 1, 0, ts.size - 2)
        t0, t1 = ts[i], ts[i + 1]
        h = (t1 - t0)[..., None]
        s = ((t - t0) / (t1 - t0))[..., None]
        y0, y1 = self.states[i], self.states[i + 1]
        m0, m1 = self.derivs[i], self.derivs[i + 1]
        h00 = 2 * s ** 3 - 3 * s ** 2 + 1
        h10 = s ** 3 - 2 * s ** 2 + s
        h01 = -2 * s ** 3 + 3 * s ** 2
        h11 = s ** 3 - s ** 2
        return h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1


def _scalar_rhs(params: ModelParams):
    A, p2, p3, p4, p5, p6 = params.A, params.p2, params.p3, params.p4, params.p5, params.p6

    def f_ar(a, r, o):
        x = o * r
        x2 = x * x
        den = p4 + x2
        hl = x2 / den if den > 0.0 else 0.0
        return A / (1.0 + p2 * x) - p3 * a, hl + p5 - p6 * r

    return f_ar


def _bad(y) -> bool:
    return any(not math.isfinite(v) or abs(v) > BLOW_UP_LEVEL for v in y)


def _bracket_blow_up(step: Callable[[float], tuple], t0: float, h: float) -> float:
    """Smallest sub-step of ``[0, h]`` whose result is non-finite or beyond the level."""
    lo, hi = 0.0, h
    while hi - lo > BLOW_UP_BRACKET:
        mid = 0.5 * (lo + hi)
        if _bad(step(mid)):
            hi = mid
        else:
            lo = mid
    return t0 + hi


def rk4_fixed(f: Callable, y0, t_end: float, dt: float):
    """Fixed-step RK4 for ``y' = f(y)`` (tuples of floats).

    The step is shrunk so the last node lands on ``t_end``. Returns
    ``(times, Y, dY, blow_up_time, h)``; integration stops at blow-up.
    """
    if not (dt > 0 and t_end > 0):
        raise InvalidInputError("dt and t_end must be positive")
    if dt > t_end:
        raise InvalidInputError("dt must not exceed t_end")
    n = int(round(t_end / dt))
    if abs(n * dt - t_end) > 1e-9 * t_end:
        n = math.ceil(t_end / dt)
    h = t_end / n
    y = tuple(float(v) for v in y0)
    d = tuple(f(y))

    def step(y, d, s):
        k1 = d
        k2 = f(tuple(yi + 0.5 * s * ki for yi, ki in zip(y, k1)))
        k3 = f(tuple(yi + 0.5 * s * ki for yi, ki in zip(y, k2)))
        k4 = f(tuple(yi + s * ki for yi, ki in zip(y, k3)))
        return tuple(yi + s / 6.0 * (a + 2 * b + 2 * c + e) for yi, a, b, c, e in zip(y, k1, k2, k3, k4))

    ts, Y, D = [0.0], [y], [d]
    blow = None
    for k in range(n):
        with np.errstate(all="ignore"):
            try:
                ynew = step(y, d, h)
            except (OverflowError, ZeroDivisionError):
                ynew = (math.inf,) * len(y)
        if _bad(ynew):
            yk, dk = y, d

            def sub(s):
                try:
                    return step(yk, dk, s)
                except (OverflowError, ZeroDivisionError):
                    return (math.inf,)

            blow = _bracket_blow_up(sub, k * h, h)
            break
        y = ynew
        d = tuple(f(y))
        ts.append((k + 1) * h)
        Y.append(y)
        D.append(d)
    return np.array(ts), np.array(Y), np.array(D), blow, h


def _nonneg_violation(times, states):
    scale = np.maximum(1.0, np.abs(states))
    bad = np.any(states < -NONNEG_TOL * scale, axis=1)
    return float(times[np.argmax(bad)]) if bad.any() else None


def theorem_box(params: ModelParams):
    """``(a_lo, a_hi, r_lo, r_hi)`` of the asymptotic box; ``None`` when undefined."""
    p = params
    if not (p.A > 0 and p.p3 > 0 and p.p6 > 0):
        return None
    a_lo = p.A * p.p6 / (p.p3 * p.p6 + p.A * p.p2 * (p.p5 + 1.0))
    return a_lo, p.A / p.p3, p.p5 / p.p6, (p.p5 + 1.0) / p.p6


def bounds_entry_time(params: ModelParams, times, states, rtol: float = 1e-9):
    """First node time after which every node lies in the asymptotic box."""
    box = theorem_box(params)
    if box is None or len(times) == 0:
        return None
    a_lo, a_hi, r_lo, r_hi = box
    ta, tr = rtol * max(1.0, a_hi), rtol * max(1.0, r_hi)
    a, r, o = states[:, 0], states[:, 1], states[:, 2]
    inside = ((a >= a_lo - ta) & (a <= a_hi + ta) & (o >= a_lo - ta) & (o <= a_hi + ta)
              & (r >= r_lo - tr) & (r <= r_hi + tr))
    if inside.all():
        return float(times[0])
    last_out = int(np.flatnonzero(~inside)[-1])
    if last_out == len(times) - 1:
        return None
    return float(times[last_out + 1])


def integrate_ode(params: ModelParams, initial: State, t_end: float, dt: float) -> Trajectory:
    """RK4 for the undelayed system ``o' = a - o``."""
    f_ar = _scalar_rhs(params)

    def f(y):
        a, r, o = y
        da, dr = f_ar(a, r, o)
        return da, dr, a - o

    ts, Y, D, blow, h = rk4_fixed(f, (initial.a, initial.r, initial.o), t_end, dt)
    flags = {
        "nonneg_violation": _nonneg_violation(ts, Y),
        "bounds_entry_time": None if blow is not None else bounds_entry_time(params, ts, Y),
        "blow_up_time": blow,
    }
    return Trajectory(ts, Y, D, flags, {"method": "rk4", "dt": h})


# --------------------------------------------------------------------------
# method of steps


def _hermite_coeffs(y0, y1, m0, m1, h):
    """Local cubic ``c0 + c1 s + c2 s^2 + c3 s^3`` on ``[0, h]``."""
    dy = (y1 - y0) / h
    return y0, m0, (3.0 * dy - 2.0 * m0 - m1) / h, (m0 + m1 - 2.0 * dy) / (h * h)


def _o_advance(o_start, c, s):
    """Exact ``o(s)`` for ``o' = p(s) - o`` with ``p`` the local cubic ``c``.

    ``o(s) = e^{-s} o_start + G(s) - e^{-s} G(0)`` where
    ``G = p - p' + p'' - p'''``; written with ``expm1`` to avoid cancellation.
    """
    c0, c1, c2, c3 = c
    g0 = c0 - c1 + 2.0 * c2 - 6.0 * c3
    dg = ((c1 - 2.0 * c2 + 6.0 * c3) + ((c2 - 3.0 * c3) + c3 * s) * s) * s
    e = math.exp(-s)
    return e * o_start + dg - math.expm1(-s) * g0


def integrate_dde(params: ModelParams, hist: HistorySpec, t_end: float,
                  steps_per_delay: int = DEFAULT_STEPS_PER_DELAY) -> Trajectory:
    """Method of steps for the delayed system on ``[0, t_end]``.

    The last node is the first grid point at or beyond ``t_end``.
    """
    tau = params.tau
    if tau <= 0.0:
        raise DomainError("tau = 0: use integrate_ode for the undelayed system")
    if steps_per_delay < 16:
        raise InvalidInputError("steps_per_delay must be at least 16")
    if not t_end > 0:
        raise InvalidInputError("t_end must be positive")
    hist.validate(tau)
    M = int(steps_per_delay)
    h = tau / M
    N = max(1, math.ceil(t_end / h - 1e-9))
    f_ar = _scalar_rhs(params)

    th = -tau + h * np.arange(M + 1)
    ah = [float(v) for v in hist(th)]
    dah = [float(v) for v in hist.derivative(th)]
    ah[-1] = float(hist(0.0))

    a, r, o = ah[-1], float(hist.r0), float(hist.o0)
    da, dr = f_ar(a, r, o)
    A_nodes, DA = [a], [da]
    ts, Y, D = [0.0], [(a, r, o)], [(da, dr, ah[0] - o)]
    blow = None

    def step(a, r, o, c, s, da, dr):
        oh = _o_advance(o, c, 0.5 * s)
        o1 = _o_advance(o, c, s)
        k1a, k1r = da, dr
        k2a, k2r = f_ar(a + 0.5 * s * k1a, r + 0.5 * s * k1r, oh)
        k3a, k3r = f_ar(a + 0.5 * s * k2a, r + 0.5 * s * k2r, oh)
        k4a, k4r = f_ar(a + s * k3a, r + s * k3r, o1)
        return (a + s / 6.0 * (k1a + 2 * k2a + 2 * k3a + k4a),
                r + s / 6.0 * (k1r + 2 * k2r + 2 * k3r + k4r), o1)

    for k in range(N):
        j = k - M
        if j < 0:
            y0, y1, m0, m1 = ah[k], ah[k + 1], dah[k], dah[k + 1]
        else:
            y0, y1, m0, m1 = A_nodes[j], A_nodes[j + 1], DA[j], DA[j + 1]
        c = _hermite_coeffs(y0, y1, m0, m1, h)
        try:
            new = step(a, r, o, c, h, da, dr)
        except (OverflowError, ZeroDivisionError):
            new = (math.inf,) * 3
        if _bad(new):
            args = (a, r, o, c)
            dd = (da, dr)

            def sub(s):
                try:
                    return step(*args, s, *dd)
                except (OverflowError, ZeroDivisionError):
                    return (math.inf,)

            blow = _bracket_blow_up(sub, k * h, h)
            break
        a, r, o = new
        da, dr = f_ar(a, r, o)
        A_nodes.append(a)
        DA.append(da)
        ts.append((k + 1) * h)
        Y.append(new)
        D.append((da, dr, y1 - o))

    ts, Y, D = np.array(ts), np.array(Y), np.array(D)
    flags = {
        "nonneg_violation": _nonneg_violation(ts, Y),
        "bounds_entry_time": None if blow is not None else bounds_entry_time(params, ts, Y),
        "blow_up_time": blow,
        "fitting_condition": bool(check_fitting_condition(params, hist)),
    }
    extras = {"method": "method_of_steps", "tau": tau, "steps_per_delay": M, "dt": h,
              "history": hist}
    return Trajectory(ts, Y, D, flags, extras)


# --------------------------------------------------------------------------
# Picard oracle


def _kernel_weights(c: float, h: float) -> tuple[float, float, float]:
    """``(E, w0, w1)`` with ``int_0^h exp(-c (h - s)) g(s) ds = w0 g(0) + w1 g(h)`` for linear ``g``."""
    z = c * h
    E = math.exp(-z)
    if abs(z) < 0.1:
        # 1 - E (1 + z) = sum_k (-1)^k (k - 1) z^k / k!, free of cancellation
        s = sum((-1) ** k * (k - 1) * z ** k / math.factorial(k) for k in range(2, 14))
        w0 = h * s / (z * z) if z != 0.0 else 0.5 * h
        total = h * (-math.expm1(-z) / z) if z != 0.0 else h
    else:
        w0 = h * (1.0 - E * (1.0 + z)) / (z * z)
        total = h * (1.0 - E) / z
    return E, w0, total - w0


def _weighted_cumtrapz(g, c, h):
    """``I_j = int_0^{t_j} exp(-c (t_j - s)) g(s) ds`` on a uniform grid.

    Product trapezoid rule: ``g`` is linear between nodes and the kernel is
    integrated exactly, so constants are reproduced to rounding.
    """
    E, w0, w1 = _kernel_weights(c, h)
    y = lfilter([w1, w0], [1.0, -E], g)
    return y - w1 * g[0] * E ** np.arange(g.size)


def picard_oracle(params: ModelParams, hist: HistorySpec, windows: int, iterations: int = 200,
                  nodes_per_window: int = 2000, tol: float = 1e-14) -> Trajectory:
    """Window-by-window Picard iteration of the integral equations.

    On window ``k`` the cortisol channel is explicit given the previous
    window's ACTH; ``(a, r)`` are iterated to a fixed point. Lower and upper
    envelopes of each channel are returned in ``extras["envelopes"]``.
    """
    if windows < 1:
        raise InvalidInputError("windows must be at least 1")
    tau = params.tau
    if tau <= 0.0:
        raise DomainError("the Picard construction needs tau > 0")
    hist.validate(tau)
    p = params
    n = int(nodes_per_window)
    h = tau / n
    s = h * np.arange(n + 1)
    prev_a = np.asarray(hist(s - tau), dtype=float)
    prev_a[-1] = float(hist(0.0))
    a0, r0, o0 = float(hist(0.0)), float(hist.r0), float(hist.o0)

    T, Y = [], []
    env = {k: [] for k in ("a_lo", "a_hi", "r_lo", "r_hi", "o_lo", "o_hi")}
    sweeps = []
    for k in range(1, windows + 1):
        t = (k - 1) * tau + s
        o = np.exp(-s) * o0 + _weighted_cumtrapz(prev_a, 1.0, h)
        a = np.full_like(s, a0)
        r = np.full_like(s, r0)
        res_hist = []
        growth = 0
        for it in range(iterations):
            x = o * r
            a_new = np.exp(-p.p3 * s) * a0 + _weighted_cumtrapz(p.A / (1.0 + p.p2 * x), p.p3, h)
            r_new = np.exp(-p.p6 * s) * r0 + _weighted_cumtrapz(hill(x, p.p4) + p.p5, p.p6, h)
            res = max(np.max(np.abs(a_new - a)), np.max(np.abs(r_new - r)))
            a, r = a_new, r_new
            if res_hist and res > res_hist[-1]:
                growth += 1
                if growth >= 5:
                    raise NonConvergenceError(f"Picard residual grew for 5 sweeps in window {k}")
            else:
                growth = 0
            res_hist.append(res)
            if res <= tol * max(1.0, np.max(np.abs(a)), np.max(np.abs(r))):
                break
        sweeps.append(len(res_hist))

        eo, e6, e3 = np.exp(-s), np.exp(-p.p6 * s), np.exp(-p.p3 * s)
        o_lo = eo * o0 + (1.0 - eo) * prev_a.min()
        o_hi = eo * o0 + (1.0 - eo) * prev_a.max()
        if p.p6 > 0:
            r_lo = e6 * r0 + p.p5 / p.p6 * (1.0 - e6)
            r_hi = e6 * r0 + (p.p5 + 1.0) / p.p6 * (1.0 - e6)
        else:
            r_lo = r0 + p.p5 * s
            r_hi = r0 + (p.p5 + 1.0) * s
        if p.p3 > 0:
            a_lo = e3 * a0 + p.A / (p.p3 * (1.0 + p.p2 * o_hi.max() * r_hi.max())) * (1.0 - e3)
            a_hi = e3 * a0 + p.A / p.p3 * (1.0 - e3)
        else:
            a_lo = a0 + p.A / (1.0 + p.p2 * o_hi.max() * r_hi.max()) * s
            a_hi = a0 + p.A * s
        for key, val in (("a_lo", a_lo), ("a_hi", a_hi), ("r_lo", r_lo), ("r_hi", r_hi),
                         ("o_lo", o_lo), ("o_hi", o_hi)):
            env[key].append(val if k == 1 else val[1:])

        T.append(t if k == 1 else t[1:])
        Y.append(np.column_stack([a, r, o]) if k == 1 else np.column_stack([a, r, o])[1:])
        prev_a = a.copy()
        a0, r0, o0 = float(a[-1]), float(r[-1]), float(o[-1])

    times = np.concatenate(T)
    states = np.vstack(Y)
    delayed = np.concatenate([np.asarray(hist(s - tau), dtype=float),
                              states[1:max(1, times.size - n), 0]])[: times.size]
    f_ar = _scalar_rhs(params)
    derivs = np.array([(*f_ar(ai, ri, oi), dl - oi)
                       for (ai, ri, oi), dl in zip(states, delayed)])
    envelopes = {k: np.concatenate(v) for k, v in env.items()}
    flags = {
        "nonneg_violation": _nonneg_violation(times, states),
        "bounds_entry_time": bounds_entry_time(params, times, states),
        "blow_up_time": None,
        "fitting_condition": bool(check_fitting_condition(params, hist)),
    }
    return Trajectory(times, states, derivs, flags,
                      {"method": "picard", "envelopes": envelopes, "sweeps": sweeps, "dt": h})


# --------------------------------------------------------------------------
# closed forms


def _decay_integral(t: float, p3: float) -> float:
    """``exp(-t) * int_0^t exp((1 - p3) s) ds``, including ``p3 = 1``."""
    d = 1.0 - p3
    if d == 0.0:
        return t * math.exp(-t)
    if d * t > 700.0:
        return (math.exp(-p3 * t) - math.exp(-t)) / d
    return math.exp(-t) * math.expm1(d * t) / d


def explicit_case_solution(params: ModelParams, initial: State, t: float) -> State:
    """Closed-form state of the undelayed system for ``p2 = p4 = 0`` or ``p5 = p6 = 0, r0 = 0``.

    For ``p2 = p4 = 0`` the receptor activation is taken as saturated
    (``o r > 0`` for ``t > 0``).
    """
    p = params
    if p.p3 <= 0:
        raise UnsupportedCaseError("closed forms need p3 > 0")
    c = p.A / p.p3
    a0, r0, o0 = initial.a, initial.r, initial.o
    a = (a0 - c) * math.exp(-p.p3 * t) + c
    o = (o0 - c) * math.exp(-t) + (a0 - c) * _decay_integral(t, p.p3) + c
    if p.p2 == 0.0 and p.p4 == 0.0 and p.p6 > 0.0:
        R = (1.0 + p.p5) / p.p6
        r = (r0 - R) * math.exp(-p.p6 * t) + R
        return State(a, r, o)
    if p.p5 == 0.0 and p.p6 == 0.0 and r0 == 0.0:
        return State(a, 0.0, o)
    raise UnsupportedCaseError("no closed form: need p2 = p4 = 0, or p5 = p6 = 0 with r0 = 0")


# --------------------------------------------------------------------------
# export


def _fmt(v) -> str:
    return "%.17g" % v


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """``t,a,r,o`` with flags as leading ``#`` comment rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for key in sorted(traj.flags):
            val = traj.flags[key]
            fh.write(f"# {key}={'' if val is None else (_fmt(val) if isinstance(val, float) else val)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "a", "r", "o"])
        for t, (a, r, o) in zip(traj.times, traj.states):
            w.writerow([_fmt(t), _fmt(a), _fmt(r), _fmt(o)])
