"""Lyapunov function of the undelayed system and its decay guarantee.

``W = 1/2 [(a - a*)^2 + (r - r*)^2 + (o - o*)^2 + (o r - o* r*)^2]`` obeys
``dW/dt <= -alpha W + beta W^{3/2} + gamma W^2`` under the lemma's
hypotheses, so ``W(0)`` below the positive root of the right-hand side
forces ``W -> 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .equilibria import Equilibrium
from .integrate import integrate_ode
from .model import ModelParams, State, rhs_array

GOLDEN_TOL = 1e-10


@dataclass(frozen=True)
class LyapunovReport:
    applicable: bool
    alpha: float
    beta: float
    gamma: float
    basin_radius_W: float
    A0: float
    p4_star: float
    p4_star_branch: str
    A1: float | None
    A2: float | None
    B: float
    m: float
    hypotheses: dict
    min_attained_at_p6: bool
    param_condition: bool
    param_bounds_dominate: bool
    A_min: float | None = None
    F_min: float | None = None


def lyapunov_value(eq: Equilibrium, state: State) -> float:
    a, r, o = state.a, state.r, state.o
    x = o * r - eq.o_star * eq.r_star
    return 0.5 * ((a - eq.a_star) ** 2 + (r - eq.r_star) ** 2 + (o - eq.o_star) ** 2 + x * x)


def lyapunov_values(eq: Equilibrium, states) -> np.ndarray:
    s = np.asarray(states, dtype=float)
    a, r, o = s[..., 0], s[..., 1], s[..., 2]
    x = o * r - eq.o_star * eq.r_star
    return 0.5 * ((a - eq.a_star) ** 2 + (r - eq.r_star) ** 2 + (o - eq.o_star) ** 2 + x * x)


def lyapunov_rate(params: ModelParams, eq: Equilibrium, states) -> np.ndarray:
    """``dW/dt`` along the undelayed flow, by the chain rule."""
    s = np.atleast_2d(np.asarray(states, dtype=float))
    a, r, o = s[:, 0], s[:, 1], s[:, 2]
    f = rhs_array(params, s.T, a)
    x = o * r - eq.o_star * eq.r_star
    return ((a - eq.a_star) * f[0] + ((r - eq.r_star) + x * o) * f[1]
            + ((o - eq.o_star) + x * r) * f[2])


def rate_bound(report: LyapunovReport, W) -> np.ndarray:
    """``-alpha W + beta W^{3/2} + gamma W^2``."""
    W = np.asarray(W, dtype=float)
    return -report.alpha * W + report.beta * W ** 1.5 + report.gamma * W * W


def basin_radius(alpha: float, beta: float, gamma: float) -> float:
    """Square of the positive root of ``gamma s^2 + beta s - alpha`` (``s = sqrt(W)``)."""
    if alpha <= 0.0:
        return 0.0
    disc = math.sqrt(beta * beta + 4.0 * alpha * gamma)
    return (2.0 * alpha / (disc + beta)) ** 2


def _F(params: ModelParams, A: float) -> float:
    p = params
    k = 4.0 * p.p2 * p.p5 / p.p6
    s = math.sqrt(1.0 + k * A)
    return (p.p6 + 1.0 + p.p2 * p.p3) / p.p3 * A + 8.0 * p.p2 * (s + 1.0) / (k * A)


def _small_p4_interval(params: ModelParams, B: float):
    """Minimum of ``F`` and the interval where ``F < B``."""
    p = params
    if not (p.p2 > 0 and p.p5 > 0 and p.p6 > 0 and p.p3 > 0):
        return None, None, None, None
    c = (p.p6 + 1.0 + p.p2 * p.p3) / p.p3
    k = 4.0 * p.p2 * p.p5 / p.p6
    mid = (4.0 * p.p2 / (c * math.sqrt(k))) ** (2.0 / 3.0)
    F = lambda A: _F(p, A)
    lo, hi = mid, mid
    for _ in range(200):
        lo *= 0.5
        if F(lo) > F(mid):
            break
    for _ in range(200):
        hi *= 2.0
        if F(hi) > F(mid):
            break
    res = minimize_scalar(F, bracket=(lo, mid, hi), method="golden", tol=GOLDEN_TOL)
    A_min, F_min = float(res.x), float(res.fun)
    if not F_min < B:
        return A_min, F_min, None, None
    a_lo = A_min
    while F(a_lo) < B:
        a_lo *= 0.5
    a_hi = A_min
    while F(a_hi) < B:
        a_hi *= 2.0
    g = lambda A: F(A) - B
    A1 = brentq(g, a_lo, A_min, xtol=1e-14, rtol=1e-12)
    A2 = brentq(g, A_min, a_hi, xtol=1e-14, rtol=1e-12)
    return A_min, F_min, float(A1), float(A2)


def lyapunov_constants(params: ModelParams, eq: Equilibrium, cap: float = 1.0) -> LyapunovReport:
    """Decay constants and the hypothesis chain evaluated at ``eq``.

    ``alpha``, ``beta``, ``gamma`` use the equilibrium values. The lemma's
    hypothesis ``p6 > 1 / min{p3 - 1/2, p6, 1}`` is evaluated as written.

    ``cap`` is the last entry of that minimum. The published value is 1, but
    bounding the cross term ``(a - a*)(o - o*)`` by half the squares leaves
    only ``-(o - o*)^2 / 2`` of the cortisol dissipation, so ``cap = 0.5`` is
    the value for which the rate inequality actually holds near ``eq``.
    """
    p = params
    m = min(p.p3 - 0.5, p.p6, cap)
    x = eq.o_star * eq.r_star
    q = 4.0 * x / (p.p4 + x * x) if (p.p4 + x * x) > 0 else 0.0
    alpha = 2.0 * (m - p.A * p.p2 - eq.r_star - (p.p6 + 1.0) * eq.a_star - q)
    beta = 2.0 ** 1.5 * (p.p6 + 1.0 + (3.0 * x / (p.p4 + x * x) if (p.p4 + x * x) > 0 else 0.0))
    gamma = q

    hyp = {
        "p3_gt_half": p.p3 > 0.5,
        "p6_gt_inverse_min": m > 0 and p.p6 > 1.0 / m,
        "p5_bound": 0.0 <= p.p5 < p.p6 * m - 1.0,
        "equilibrium_condition": 0.0 < eq.r_star + (p.p6 + 1.0) * eq.a_star + q < m - p.A * p.p2,
    }
    applicable = all(hyp.values()) and alpha > 0.0

    B = m - (p.p5 + 1.0) / p.p6 if p.p6 > 0 else -math.inf
    p4_star = 4.0 / (B * B) if B > 0 else math.inf
    branch = "large_p4" if p.p4 > p4_star else "small_p4"
    sq4 = math.sqrt(p.p4)
    first = (2.0 * p.p6 * sq4 / p.p5) * (1.0 + 2.0 * p.p2 * sq4) if p.p5 > 0 else math.inf
    second = (p.p3 / (p.p6 + 1.0 + p.p2 * p.p3)) * (B - 2.0 / sq4) if sq4 > 0 else -math.inf
    A0 = max(0.0, min(first, second))

    A_min = F_min = A1 = A2 = None
    if branch == "small_p4" and B > 0:
        A_min, F_min, A1, A2 = _small_p4_interval(p, B)
    if branch == "large_p4":
        param_condition = 0.0 <= p.A < A0
    else:
        param_condition = A1 is not None and A1 < p.A < A2

    # parameter-only upper bounds on beta and gamma
    k = 4.0 * p.p2 * p.p5 * p.A / p.p6 if p.p6 > 0 else 0.0
    cands = []
    if sq4 > 0:
        cands.append(1.0 / (2.0 * sq4))
    if k > 0:
        cands.append(2.0 * p.p2 * (math.sqrt(1.0 + k) + 1.0) / k)
    cap = min(cands) if cands else math.inf
    beta_bound = 2.0 ** 1.5 * (p.p6 + 1.0 + 3.0 * cap)
    gamma_bound = 4.0 * cap
    dominate = beta <= beta_bound * (1 + 1e-12) and gamma <= gamma_bound * (1 + 1e-12)

    return LyapunovReport(
        applicable=bool(applicable), alpha=alpha, beta=beta, gamma=gamma,
        basin_radius_W=basin_radius(alpha, beta, gamma), A0=A0, p4_star=p4_star,
        p4_star_branch=branch, A1=A1, A2=A2, B=B, m=m, hypotheses=hyp,
        min_attained_at_p6=(m == p.p6), param_condition=bool(param_condition),
        param_bounds_dominate=bool(dominate), A_min=A_min, F_min=F_min)


@dataclass(frozen=True)
class DecayRecord:
    times: np.ndarray
    w_series: np.ndarray
    converged: bool
    in_basin: bool
    max_bound_excess: float


def verify_decay(params: ModelParams, eq: Equilibrium, initial: State, horizon: float,
                 dt: float | None = None, samples: int = 1000, cap: float = 1.0) -> DecayRecord:
    """Simulate the undelayed system from ``initial`` and sample ``W``.

    ``converged`` means ``W(horizon) < 1e-6 W(0)``. ``in_basin`` reports
    whether the lemma covers the start. ``max_bound_excess`` is the largest
    amount by which ``dW/dt`` exceeds ``-alpha W + beta W^{3/2} + gamma W^2``
    at the sample times. ``cap`` is passed to :func:`lyapunov_constants`.
    """
    report = lyapunov_constants(params, eq, cap)
    if dt is None:
        dt = min(0.01, horizon / 1000.0)
    traj = integrate_ode(params.with_(tau=0.0), initial, horizon, dt)
    ts = np.linspace(0.0, traj.t_end, samples + 1)
    states = traj(ts)
    W = lyapunov_values(eq, states)
    W0 = W[0]
    converged = bool(W0 == 0.0 or W[-1] < 1e-6 * W0)
    excess = float(np.max(lyapunov_rate(params, eq, states) - rate_bound(report, W)))
    in_basin = bool(report.applicable and W0 < report.basin_radius_W)
    return DecayRecord(ts, W, converged, in_basin, excess)
