"""Delay-induced stability switches of the linearized delayed system.

The characteristic function is the quasi-polynomial

    C(lambda) = P(lambda) + Q(lambda) exp(-lambda tau),
    P(lambda) = (lambda + 1)(lambda + p3)(lambda + p6 - K2) + K3 (lambda + p6),
    Q(lambda) = K3 (lambda + p6).

Purely imaginary roots ``i v`` can only occur where
``F(y) = |P(iy)|^2 - |Q(iy)|^2`` vanishes, and ``F`` is a cubic in ``x = y^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._poly import cluster_roots, companion_roots, real_roots
from .equilibria import Equilibrium
from .errors import GuardViolationError
from .model import ModelParams

GUARD_TOL = 1e-12
ROOT_RESIDUAL = 1e-10
DEDUP_DIST = 1e-6
NEWTON_MAX_ITER = 100
NEWTON_MAX_HALVINGS = 40
SWITCH_RESIDUAL = 1e-6


@dataclass(frozen=True)
class QuasiCharacteristic:
    p_coeffs: tuple[float, float, float, float]
    q_coeffs: tuple[float, float]
    params_snapshot: tuple[float, float, float, float]
    p0_plus_q0: float
    conditions: dict = field(default_factory=dict)

    def P(self, lam):
        return np.polyval(self.p_coeffs, lam)

    def Q(self, lam):
        return np.polyval(self.q_coeffs, lam)

    def C(self, lam, tau):
        lam = np.asarray(lam, dtype=complex)
        with np.errstate(over="ignore", invalid="ignore"):
            return self.P(lam) + self.Q(lam) * np.exp(-lam * tau)

    def dC(self, lam, tau):
        lam = np.asarray(lam, dtype=complex)
        dP = np.polyval(np.polyder(self.p_coeffs), lam)
        with np.errstate(over="ignore", invalid="ignore"):
            return dP + (self.q_coeffs[0] - tau * self.Q(lam)) * np.exp(-lam * tau)

    def tau_zero_coeffs(self) -> np.ndarray:
        """Coefficients of ``P + Q``, the characteristic cubic of the delayed
        linearization at ``tau = 0`` (it carries ``2 K3``)."""
        c = np.array(self.p_coeffs, dtype=float)
        c[2:] += np.array(self.q_coeffs)
        return c


def quasi_characteristic(p3: float, p6: float, K2: float, K3: float) -> QuasiCharacteristic:
    """Build the quasi-polynomial directly from ``(p3, p6, K2, K3)``."""
    vals = [float(v) for v in (p3, p6, K2, K3)]
    if not all(math.isfinite(v) for v in vals):
        raise GuardViolationError("quasi-polynomial coefficients must be finite")
    p3, p6, K2, K3 = vals
    cubic = np.polymul(np.polymul([1.0, 1.0], [1.0, p3]), [1.0, p6 - K2])
    pc = cubic + np.array([0.0, 0.0, K3, K3 * p6])
    qc = np.array([K3, K3 * p6])
    p0q0 = float(pc[3] + qc[1])
    if abs(p0q0) <= GUARD_TOL:
        raise GuardViolationError(
            f"P(0) + Q(0) = p3 (p6 - K2) + 2 K3 p6 = {p0q0:.3e} vanishes; the switch theorem does not apply")

    # (i) no common zero of P and Q on the imaginary axis
    if K3 != 0.0:
        q_zeros = [complex(-p6)]
    else:
        q_zeros = list(companion_roots(pc))
    common = any(abs(z.real) < 1e-12 and abs(np.polyval(pc, z)) < 1e-10 for z in q_zeros)
    conditions = {
        "no_common_imaginary_zeros": not common,
        "conjugate_symmetric": True,  # real coefficients
        "p0_plus_q0_nonzero": True,
        "finitely_many_rhp_roots_at_tau0": True,  # a cubic
        "F_has_at_most_6_real_zeros": True,  # degree-6 polynomial, leading coefficient 1
    }
    return QuasiCharacteristic(tuple(float(c) for c in pc), tuple(float(c) for c in qc),
                               (p3, p6, K2, K3), p0q0, conditions)


def build_quasi_characteristic(params: ModelParams, eq: Equilibrium) -> QuasiCharacteristic:
    return quasi_characteristic(params.p3, params.p6, eq.K2, eq.K3)


# --------------------------------------------------------------------------
# F function


def f_function(qc: QuasiCharacteristic, y):
    """``|P(iy)|^2 - |Q(iy)|^2`` evaluated from complex moduli."""
    iy = 1j * np.asarray(y, dtype=float)
    return np.abs(qc.P(iy)) ** 2 - np.abs(qc.Q(iy)) ** 2


def f_cubic_coefficients(qc: QuasiCharacteristic) -> tuple[float, float, float]:
    """``(b1, b2, b3)`` of ``F = x^3 + b1 x^2 + b2 x + b3`` by interpolation at ``x = 0..3``."""
    xs = np.arange(4.0)
    vals = f_function(qc, np.sqrt(xs))
    coeffs = np.linalg.solve(np.vander(xs, 4), vals)
    return float(coeffs[1]), float(coeffs[2]), float(coeffs[3])


def printed_b_coefficients(p3: float, p6: float, K2: float, K3: float) -> tuple[float, float, float]:
    """The expansion as typeset next to the F cubic, with ``+-`` read as ``-``.

    Kept only for comparison with :func:`f_cubic_coefficients`.
    """
    b1 = p6 ** 2 - 2 * K2 * p6 + p3 ** 2 - 2 * K3 + K2 ** 2 + 1
    b2 = (K2 ** 2 - 2 * K2 * K3 + 2 * K3 * p3 - 2 * K2 * K3 * p3 + p3 ** 2 + K2 ** 2 * p3 ** 2
          - 2 * K2 * p6 + 2 * K2 * K3 * p6 - 2 * K2 * p3 ** 2 * p6 + p6 ** 2 - 2 * K3 * p6 ** 2
          + p3 ** 2 * p6 ** 2)
    b3 = (K2 ** 2 * p3 ** 2 - 2 * K2 * K3 * p3 * p6 - 2 * K2 * p3 ** 2 * p6
          + 2 * K3 * p3 * p6 ** 2 + p3 ** 2 * p6 ** 2)
    return b1, b2, b3


# --------------------------------------------------------------------------
# switch schedule


def crossing_terms(qc: QuasiCharacteristic, v: float) -> tuple[float, float, float, float]:
    """``(A1, A2, A3, A4)`` with ``C(iv) = A1 - A2 cos - A3 sin + i (A4 - A3 cos + A2 sin)``."""
    p3, p6, K2, K3 = qc.params_snapshot
    A1 = p3 * p6 - K2 * p3 + K3 * p6 - v * v * (p6 + p3 - K2 + 1.0)
    A2 = -K3 * p6
    A3 = -K3 * v
    A4 = v * (p3 - K2 - K2 * p3 + p6 + p3 * p6 + K3) - v ** 3
    return A1, A2, A3, A4


@dataclass(frozen=True)
class SwitchSchedule:
    f_cubic: tuple[float, float, float]
    delta0: float
    critical_points: tuple[float, ...]
    positive_roots_x: tuple[tuple[float, int], ...]
    frequencies_v: tuple[float, ...]
    tau_sequences: dict
    crossing_direction: dict
    tau_critical: float | None
    verdict: str
    first_destabilizing_tau: float | None = None
    rhp_count_tau0: int = 0
    events: tuple[tuple[float, int, int], ...] = ()
    proviso: dict = field(default_factory=dict)
    skipped: tuple[int, ...] = ()
    multiple_roots_excluded: bool = False
    max_residual: float = 0.0


def switch_schedule(qc: QuasiCharacteristic, n_max: int = 10) -> SwitchSchedule:
    """Crossing frequencies, delay sequences and the resulting stability verdict.

    ``tau_j^n = (theta_j + 2 pi n) / v_j`` with ``theta_j`` in ``[0, 2 pi)``
    recovered from both ``sin(v tau)`` and ``cos(v tau)``. The right
    half-plane root count is tracked through the merged, ordered crossing
    events; ``tau_critical`` is the last delay at which it leaves zero
    within the computed horizon.
    """
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    b1, b2, b3 = f_cubic_coefficients(qc)
    fc = np.array([1.0, b1, b2, b3])
    delta0 = b1 * b1 - 3.0 * b2
    crit = ()
    if delta0 > 0.0:
        s = math.sqrt(delta0)
        crit = ((-b1 + s) / 3.0, (-b1 - s) / 3.0)
    groups = [(x, m) for x, m in cluster_roots(real_roots(fc), tol=1e-7) if x > 0.0]
    dfc = np.polyder(fc)

    tau0_roots = companion_roots(qc.tau_zero_coeffs())
    rhp0 = int(sum(z.real > 0.0 for z in tau0_roots))

    freqs, seqs, dirs, proviso, skipped = [], {}, {}, {}, []
    max_res = 0.0
    multiple = any(m > 1 for _, m in groups)
    for j, (x, m) in enumerate(groups):
        v = math.sqrt(x)
        freqs.append(v)
        if m > 1:
            skipped.append(j)
            continue
        A1, A2, A3, A4 = crossing_terms(qc, v)
        D = A2 * A2 + A3 * A3
        sn = A1 * A3 - A2 * A4
        cs = A1 * A2 + A3 * A4
        literal_ok = max(abs(sn), abs(A1 * A2 - A3 * A4)) <= D * (1 + 1e-9)
        consistent_ok = max(abs(sn), abs(cs)) <= D * (1 + 1e-9)
        proviso[j] = {"literal": bool(literal_ok), "sign_consistent": bool(consistent_ok)}
        if D == 0.0 or not consistent_ok:
            skipped.append(j)
            continue
        theta = math.atan2(sn / D, cs / D) % (2.0 * math.pi)
        taus = [(theta + 2.0 * math.pi * n) / v for n in range(n_max + 1)]
        for t in taus:
            max_res = max(max_res, float(abs(qc.C(1j * v, t))))
        seqs[j] = taus
        slope = float(np.polyval(dfc, x))
        dirs[j] = "left_to_right" if slope > 0.0 else "right_to_left"

    events = sorted((t, j, 2 if dirs[j] == "left_to_right" else -2)
                    for j, taus in seqs.items() for t in taus)
    horizon = min((taus[-1] for taus in seqs.values()), default=math.inf)
    count = rhp0
    trace = []
    tau_crit = 0.0 if rhp0 > 0 else None
    first = None
    for t, j, d in events:
        if t > horizon + 1e-12:
            break
        before = count
        count += d
        trace.append((t, j, count))
        if before <= 0 < count:
            tau_crit = t
            if first is None:
                first = t
        elif count <= 0:
            tau_crit = None

    if not seqs:
        verdict = "stable_all_tau" if rhp0 == 0 else "unstable_all_tau_beyond_tc"
    elif all(d == "left_to_right" for d in dirs.values()):
        verdict = "unstable_all_tau_beyond_tc"
    else:
        verdict = "switches"
    return SwitchSchedule(
        f_cubic=(b1, b2, b3), delta0=delta0, critical_points=crit,
        positive_roots_x=tuple((float(x), int(m)) for x, m in groups),
        frequencies_v=tuple(freqs), tau_sequences=seqs, crossing_direction=dirs,
        tau_critical=tau_crit, verdict=verdict, first_destabilizing_tau=first,
        rhp_count_tau0=rhp0, events=tuple(trace), proviso=proviso,
        skipped=tuple(skipped), multiple_roots_excluded=multiple, max_residual=max_res)


def lemma_stable_all_tau(qc: QuasiCharacteristic) -> bool:
    """Sufficient test: ``F(0) > 0`` and ``Delta0 <= 0``."""
    b1, b2, b3 = f_cubic_coefficients(qc)
    return b3 > 0.0 and b1 * b1 - 3.0 * b2 <= 0.0


# --------------------------------------------------------------------------
# characteristic roots in a rectangle


def _grid(region, nx, ny):
    re0, re1, im0, im1 = map(float, region)
    xs = np.linspace(re0, re1, nx)
    ys = np.linspace(im0, im1, ny)
    return xs, ys


def locate_characteristic_roots(qc: QuasiCharacteristic, tau: float, region=(-2.0, 1.0, -2.0, 2.0),
                                grid: int = 40) -> list[complex]:
    """Roots of ``C`` inside ``region = (re0, re1, im0, im1)`` found by damped Newton from a seed grid."""
    if grid < 16:
        raise ValueError("grid must be at least 16")
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    xs, ys = _grid(region, grid, grid)
    lam = (xs[None, :] + 1j * ys[:, None]).ravel()
    res = np.abs(qc.C(lam, tau))
    active = np.ones(lam.size, dtype=bool)
    for _ in range(NEWTON_MAX_ITER):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        z = lam[idx]
        d = qc.dC(z, tau)
        with np.errstate(all="ignore"):
            step = qc.C(z, tau) / d
        bad = ~np.isfinite(step)
        step[bad] = 0.0
        r0 = res[idx]
        scale = np.ones(idx.size)
        trial = z - step
        rt = np.abs(qc.C(trial, tau))
        for _ in range(NEWTON_MAX_HALVINGS):
            worse = ~(rt < r0) & (r0 > 0)
            if not worse.any():
                break
            scale[worse] *= 0.5
            trial[worse] = z[worse] - scale[worse] * step[worse]
            rt[worse] = np.abs(qc.C(trial[worse], tau))
        improved = rt < r0
        lam[idx[improved]] = trial[improved]
        res[idx[improved]] = rt[improved]
        small = np.abs(scale * step) <= 1e-15 * (1.0 + np.abs(z))
        done = bad | ~improved | small | (res[idx] < 1e-15) | ~np.isfinite(lam[idx])
        active[idx[done]] = False

    re0, re1, im0, im1 = map(float, region)
    pad = 1e-9
    ok = (np.isfinite(lam) & (res < ROOT_RESIDUAL)
          & (lam.real >= re0 - pad) & (lam.real <= re1 + pad)
          & (lam.imag >= im0 - pad) & (lam.imag <= im1 + pad))
    found: list[complex] = []
    for z in sorted(lam[ok], key=lambda w: (w.real, w.imag)):
        if all(abs(z - w) >= DEDUP_DIST for w in found):
            found.append(complex(z))
    return found


def rhp_bound(qc: QuasiCharacteristic) -> float:
    """Modulus bound for right-half-plane roots (there ``|exp(-lambda tau)| <= 1``)."""
    pc = np.abs(np.array(qc.p_coeffs[1:]))
    qcoef = np.abs(np.array(qc.q_coeffs))
    return 1.0 + float(pc.sum() + qcoef.sum())


def count_rhp_roots(qc: QuasiCharacteristic, tau: float, grid: int = 60) -> int:
    """Number of characteristic roots with positive real part."""
    R = rhp_bound(qc)
    roots = locate_characteristic_roots(qc, tau, (-0.5, R, -R, R), grid=grid)
    return sum(1 for z in roots if z.real > 0.0)


def contour_field(qc: QuasiCharacteristic, tau: float, region=(-2.0, 1.0, -2.0, 2.0), resolution=200):
    """``(re, im, Re C, Im C)`` sampled on a rectangular grid (rows follow ``im``)."""
    nx, ny = (resolution, resolution) if np.isscalar(resolution) else resolution
    if nx < 2 or ny < 2:
        raise ValueError("resolution must be at least 2 per axis")
    xs, ys = _grid(region, int(nx), int(ny))
    lam = xs[None, :] + 1j * ys[:, None]
    c = qc.C(lam, tau)
    return xs, ys, c.real, c.imag
