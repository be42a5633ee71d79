"""Fixed points of the undelayed system, Jacobian magnitudes and the
degenerate-parameter case taxonomy."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._poly import cluster_roots, real_roots
from .errors import DomainError, InternalConsistencyError, UnsupportedCaseError
from .model import ModelParams, hill, rhs_array

BISECT_WIDTH = 1e-13
NEWTON_POLISH_STEPS = 3
HYPERBOLIC_BAND = 1e-10


@dataclass(frozen=True)
class Equilibrium:
    """Fixed point ``(a*, r*, o*)`` and the Jacobian magnitudes K1..K4.

    The Jacobian at the point is::

        [[-p3, -K1,      -K3],
         [  0, -p6 + K2,  K4],
         [  1,   0,      -1 ]]
    """

    a_star: float
    r_star: float
    o_star: float
    K1: float = math.nan
    K2: float = math.nan
    K3: float = math.nan
    K4: float = math.nan

    @property
    def state(self) -> np.ndarray:
        return np.array([self.a_star, self.r_star, self.o_star])

    @property
    def K(self) -> tuple[float, float, float, float]:
        return (self.K1, self.K2, self.K3, self.K4)


CASE_IDS = ("generic", "A_zero", "p2_zero", "p3_zero", "p4_zero", "p2_p4_zero",
            "p5_zero", "p6_p5_zero", "p6_zero")
CLASSIFICATIONS = ("stable_node", "saddle", "non_hyperbolic", "blow_up", "explicit_solution")

# Most degenerate first. Combined cases precede singletons; among singletons
# the ones without a finite attracting point (p6, p3) come first.
CASE_PRIORITY = (
    ("p6_p5_zero", ("p6", "p5")),
    ("p2_p4_zero", ("p2", "p4")),
    ("p6_zero", ("p6",)),
    ("p3_zero", ("p3",)),
    ("A_zero", ("A",)),
    ("p2_zero", ("p2",)),
    ("p4_zero", ("p4",)),
    ("p5_zero", ("p5",)),
)


@dataclass(frozen=True)
class CaseReport:
    case_id: str
    fixed_points: tuple[Equilibrium, ...]
    root_count: int
    classification: str
    point_classifications: tuple[str, ...] = ()
    eigenvalues: tuple[tuple[complex, ...], ...] = ()
    multiplicities: tuple[int, ...] = ()
    unbounded: bool = False
    blow_up_time: float | None = None
    predicted_root_count: int | None = None
    notes: tuple[str, ...] = field(default_factory=tuple)


# --------------------------------------------------------------------------
# generic case


def _require_generic(params: ModelParams):
    if not params.is_generic:
        zero = [k for k, v in params.positive().items() if not v and k != "tau"]
        raise UnsupportedCaseError(
            f"parameters {zero} vanish; use classify_case for degenerate cases")


def _a_of_r(params: ModelParams, r):
    """ACTH level on the first two nullclines, written without cancellation."""
    w = 4.0 * params.p2 * params.A * r / params.p3
    return (2.0 * params.A / params.p3) / (np.sqrt(1.0 + w) + 1.0)


def _g_u(params: ModelParams, u):
    """Sign-equivalent, pole-free form of ``f1(r) - f2(r)`` with ``u = p6 r - p5``."""
    r = (params.p5 + u) / params.p6
    x = _a_of_r(params, r) * r
    return x * x * (1.0 - u) - params.p4 * u


def _dg_u(params: ModelParams, u):
    p = params
    r = (p.p5 + u) / p.p6
    w = 4.0 * p.p2 * p.A * r / p.p3
    s = math.sqrt(1.0 + w)
    a = (2.0 * p.A / p.p3) / (s + 1.0)
    da_dr = -(2.0 * p.A / p.p3) / (s + 1.0) ** 2 * (2.0 * p.p2 * p.A / p.p3) / s
    x = a * r
    dx_du = (a + r * da_dr) / p.p6
    return 2.0 * x * dx_du * (1.0 - u) - x * x - p.p4


def _solve_bracket(p: ModelParams, lo: float, hi: float) -> Equilibrium:
    """Bisection on ``u`` in ``[lo, hi]`` (``g`` must change sign), Newton polish, closed-form check."""
    glo, ghi = _g_u(p, lo), _g_u(p, hi)
    if not (glo * ghi < 0.0):
        raise InternalConsistencyError(f"equilibrium bracket has no sign change: g({lo})={glo}, g({hi})={ghi}")
    up = glo > 0.0
    width = BISECT_WIDTH * p.p6
    a, b = lo, hi
    while b - a > width:
        mid = 0.5 * (a + b)
        if mid <= a or mid >= b:
            break
        gm = _g_u(p, mid)
        if gm == 0.0:
            a = b = mid
            break
        if (gm > 0.0) == up:
            a = mid
        else:
            b = mid
    u = 0.5 * (a + b)
    gbest = abs(_g_u(p, u))
    for _ in range(NEWTON_POLISH_STEPS):
        d = _dg_u(p, u)
        if d == 0.0 or gbest == 0.0:
            break
        cand = u - _g_u(p, u) / d
        if not (a <= cand <= b) or not (0.0 < cand < 1.0):
            break
        gc = abs(_g_u(p, cand))
        if gc <= gbest:
            u, gbest = cand, gc
        else:
            break
    r = (p.p5 + u) / p.p6
    a_nullcline = float(_a_of_r(p, r))
    a_receptor = math.sqrt(p.p4 * u / (1.0 - u)) / r
    # 1 - u cancels as u -> 1; allow for that conditioning
    rtol = 1e-9 + 64.0 * np.finfo(float).eps / (1.0 - u)
    if abs(a_nullcline - a_receptor) > rtol * max(a_nullcline, a_receptor) + 1e-300:
        raise InternalConsistencyError(
            f"closed forms for a* disagree: {a_nullcline!r} vs {a_receptor!r}")
    return with_coeffs(p, Equilibrium(a_nullcline, r, a_nullcline))


def solve_equilibrium(params: ModelParams) -> Equilibrium:
    """Fixed point for ``A > 0`` and all ``p_i > 0`` by bisection over the whole band.

    Bisection on ``u = p6 r - p5`` in ``(0, 1)`` to an ``r``-width of 1e-13,
    then three guarded Newton steps. ``a*`` is evaluated from both closed
    forms and the two must agree to 1e-9 relative.

    The fixed point is usually unique, but some parameter sets have three
    (stable, saddle, stable); bisection then returns one of them.
    :func:`all_equilibria` lists every one.
    """
    _require_generic(params)
    return _solve_bracket(params, 0.0, 1.0)


def all_equilibria(params: ModelParams) -> list[Equilibrium]:
    """Every fixed point in the generic case, ordered by ``r*``.

    The admissible quartic roots locate the fixed points; each is then
    isolated in a bracket bounded by the midpoints to its neighbours and
    refined by :func:`_solve_bracket`. A tangential (double) root shows no
    sign change and is kept at its quartic value after residual checks.
    """
    _require_generic(params)
    p = params
    us = sorted({min(max(p.p6 * r_from_z(p, z) - p.p5, 0.0), 1.0) for z in solve_equilibrium_quartic(p)})
    us = [u for u in us if 0.0 < u < 1.0]
    if not us:
        return [solve_equilibrium(p)]
    cuts = [0.0] + [0.5 * (x + y) for x, y in zip(us, us[1:])] + [1.0]
    out = []
    for lo, hi, u in zip(cuts, cuts[1:], us):
        if _g_u(p, lo) * _g_u(p, hi) < 0.0:
            out.append(_solve_bracket(p, lo, hi))
        else:
            r = (p.p5 + u) / p.p6
            a = float(_a_of_r(p, r))
            eq = Equilibrium(a, r, a)
            if fixed_point_residual(p, eq) <= 1e-8:
                out.append(with_coeffs(p, eq))
    return out


def quartic_coefficients(params: ModelParams) -> np.ndarray:
    """Coefficients of ``z^4 + 2 z^3 + C1 z^2 + C2 z - C3``."""
    A, p2, p3, p4, p5, p6 = params.A, params.p2, params.p3, params.p4, params.p5, params.p6
    C1 = 4.0 * p2 * (p2 * p3 * p4 * p6 - A * (p5 + 1.0)) / (p3 * p6)
    C2 = 8.0 * p2 * p2 * p4
    C3 = 16.0 * A * p2 ** 3 * p4 * p5 / (p3 * p6)
    return np.array([1.0, 2.0, C1, C2, -C3])


def solve_equilibrium_quartic(params: ModelParams) -> list[float]:
    """Nonnegative real roots ``z`` of the equilibrium quartic.

    ``r* = p3 z (z + 2) / (4 p2 A)`` for the admissible root; see
    :func:`r_from_z`.
    """
    coeffs = quartic_coefficients(params)
    roots = real_roots(coeffs, imag_tol=1e-9)
    scale = max(1.0, max(abs(c) for c in coeffs))
    return [max(z, 0.0) for z in roots if z >= -1e-12 * scale]


def r_from_z(params: ModelParams, z: float) -> float:
    return params.p3 * z * (z + 2.0) / (4.0 * params.p2 * params.A)


# --------------------------------------------------------------------------
# Jacobian


def _k_direct(params: ModelParams, a: float, r: float, o: float):
    """Partial-derivative magnitudes at any point (no equilibrium relation used)."""
    p = params
    x = o * r
    den1 = (1.0 + p.p2 * x) ** 2
    K1 = p.A * p.p2 * o / den1
    K3 = p.A * p.p2 * r / den1
    den2 = (p.p4 + x * x) ** 2
    if den2 > 0.0:
        K2 = 2.0 * p.p4 * r * o * o / den2
        K4 = 2.0 * p.p4 * o * r * r / den2
    else:
        K2 = K4 = 0.0
    return K1, K2, K3, K4


def _k_receptor_forms(params: ModelParams, r: float):
    """Equivalent forms written in ``r*`` alone (valid in the generic case)."""
    p = params
    u = p.p6 * r - p.p5
    v = 1.0 - u
    su, sv = math.sqrt(p.p4 * u), math.sqrt(v)
    D = p.p2 * su + sv
    K1 = p.p2 * p.p3 * p.p4 * u / (r * r * D * D) * (1.0 + p.p2 * su / sv)
    K2 = 2.0 * u * v / r
    K3 = p.p2 * p.p3 * su / D
    K4 = 2.0 * r * v ** 1.5 * math.sqrt(u) / math.sqrt(p.p4)
    return K1, K2, K3, K4


def _close(x, y, rtol=1e-8, atol=1e-15):
    return abs(x - y) <= rtol * max(abs(x), abs(y)) + atol


def fixed_point_residual(params: ModelParams, eq: Equilibrium) -> float:
    return float(np.max(np.abs(rhs_array(params, eq.state, eq.a_star))))


def linearization_coeffs(params: ModelParams, eq: Equilibrium) -> tuple[float, float, float, float]:
    """Jacobian magnitudes ``(K1, K2, K3, K4)`` at a fixed point.

    In the generic case the derivative forms are cross-checked against the
    forms written in ``r*`` alone (1e-8 relative).
    """
    if not all(map(math.isfinite, (eq.a_star, eq.r_star, eq.o_star))):
        raise DomainError("Jacobian is undefined at an unbounded fixed point")
    res = fixed_point_residual(params, eq)
    if res > 1e-8:
        raise DomainError(f"not a fixed point (residual {res:.3e})")
    K = _k_direct(params, eq.a_star, eq.r_star, eq.o_star)
    p = params
    u = p.p6 * eq.r_star - p.p5 if p.p6 > 0 else math.nan
    if params.is_generic and 0.0 < u < 1.0:
        Kr = _k_receptor_forms(params, eq.r_star)
        # u = p6 r* - p5 and 1 - u cancel near the band ends; allow for that conditioning
        cond = (p.p5 + 1.0 + p.p6 * eq.r_star) * (1.0 / u + 1.0 / (1.0 - u))
        rtol = 1e-8 + 64.0 * np.finfo(float).eps * cond
        for i, (x, y) in enumerate(zip(K, Kr), start=1):
            if not _close(x, y, rtol=rtol):
                raise InternalConsistencyError(f"K{i} forms disagree: {x!r} vs {y!r}")
    # same relative slack as the fixed-point residual gate
    slack = 1e-8
    k2_max = 2.0 * p.p6 * (math.sqrt(1.0 + p.p5) - math.sqrt(p.p5)) ** 2
    if p.p4 > 0 and K[1] > k2_max * (1 + slack) + 1e-15:
        raise InternalConsistencyError(f"K2={K[1]} exceeds its bound {k2_max}")
    if K[2] > p.p3 * (1 + slack) + 1e-15:
        raise InternalConsistencyError(f"K3={K[2]} exceeds p3={p.p3}")
    return K


def with_coeffs(params: ModelParams, eq: Equilibrium) -> Equilibrium:
    K1, K2, K3, K4 = (float(k) for k in linearization_coeffs(params, eq))
    return replace(eq, a_star=float(eq.a_star), r_star=float(eq.r_star), o_star=float(eq.o_star),
                   K1=K1, K2=K2, K3=K3, K4=K4)


def jacobian(params: ModelParams, eq: Equilibrium) -> np.ndarray:
    K1, K2, K3, K4 = eq.K
    return np.array([
        [-params.p3, -K1, -K3],
        [0.0, -params.p6 + K2, K4],
        [1.0, 0.0, -1.0],
    ])


def _point_class(eigs) -> str:
    m = max(e.real for e in eigs)
    if m < -HYPERBOLIC_BAND:
        return "stable_node"
    if m > HYPERBOLIC_BAND:
        return "saddle"
    return "non_hyperbolic"


# --------------------------------------------------------------------------
# case taxonomy


def case_id(params: ModelParams) -> str:
    pos = params.positive()
    for cid, names in CASE_PRIORITY:
        if all(not pos[n] for n in names):
            return cid
    return "generic"


def case2_cubic(params: ModelParams) -> np.ndarray:
    """Cubic in ``r`` for the fixed points when ``p2 = 0``."""
    p = params
    c2 = (p.A / p.p3) ** 2
    return np.array([p.p6 * c2, -(1.0 + p.p5) * c2, p.p6 * p.p4, -p.p5 * p.p4])


def case2_predicted_root_count(params: ModelParams, tol: float = 1e-12) -> int:
    """Root count of ``r (r - r1)(r - r2) = (p4 p5 / p6)(p3 / A)^2`` from its critical values.

    The cubic ``f(r) = r^3 - S r^2 + P r`` has a local maximum at
    ``(S - K)/3`` and a local minimum at ``(S + K)/3`` with
    ``K^2 = S^2 - 3P`` (``= r1^2 - r1 r2 + r2^2`` when ``r1, r2`` are real).
    """
    p = params
    c = p.A / p.p3
    S = (1.0 + p.p5) / p.p6
    P = p.p4 / (c * c)
    rhs_val = p.p4 * p.p5 / (p.p6 * c * c)
    disc = S * S - 3.0 * P
    if disc <= 0.0:
        return 1
    K = math.sqrt(disc)
    f = lambda r: r * r * r - S * r * r + P * r
    fmax, fmin = f((S - K) / 3.0), f((S + K) / 3.0)
    band = tol * max(1.0, abs(rhs_val))
    if fmin + band < rhs_val < fmax - band:
        return 3
    if abs(rhs_val - fmax) <= band or abs(rhs_val - fmin) <= band:
        return 2
    return 1


def case6_cubic(params: ModelParams) -> np.ndarray:
    """Cubic in ``a`` for the extra fixed points when ``p5 = 0``."""
    p = params
    c = p.A / p.p3
    B = p.p6 * (1.0 + p.p2 ** 2 * p.p4) / p.p2 - c
    return np.array([1.0, B, -2.0 * p.p6 * c / p.p2, p.p6 / p.p2 * c * c])


def case6_a12(params: ModelParams) -> tuple[float, float]:
    """Nonzero roots ``a1 < 0 < a2`` of ``f(a) = a (a - a1)(a - a2)``."""
    p = params
    c = p.A / p.p3
    B = p.p6 * (1.0 + p.p2 ** 2 * p.p4) / p.p2 - c
    s = math.sqrt(B * B + 8.0 * c * p.p6 / p.p2)
    return 0.5 * (-B - s), 0.5 * (-B + s)


def blow_up_estimate(params: ModelParams, r0: float) -> float:
    """Leading-order blow-up time ``(p4 / r0)(p3 / A)^2`` of the receptor channel."""
    if not (params.p6 == 0.0 and r0 > 0.0 and params.A > 0.0 and params.p4 > 0.0):
        raise UnsupportedCaseError("blow-up estimate needs p6 = 0, r0 > 0, A > 0 and p4 > 0")
    return params.p4 / r0 * (params.p3 / params.A) ** 2


def _report(cid, params, points, *, classification=None, multiplicities=None, **extra):
    pts = tuple(with_coeffs(params, e) for e in points)
    eigs = tuple(tuple(complex(z) for z in np.linalg.eigvals(jacobian(params, e))) for e in pts)
    classes = tuple(_point_class(ev) for ev in eigs)
    if classification is None:
        order = ("non_hyperbolic", "saddle", "stable_node")
        classification = next((c for c in order if c in classes), "stable_node")
    return CaseReport(
        case_id=cid, fixed_points=pts, root_count=len(pts),
        classification=classification, point_classifications=classes,
        eigenvalues=eigs,
        multiplicities=tuple(multiplicities) if multiplicities else (1,) * len(pts),
        **extra)


def classify_case(params: ModelParams, r0: float | None = None) -> CaseReport:
    """Identify the parameter case and return its fixed points and their type.

    ``r0`` matters only when ``p5 = p6 = 0``: with ``r0 = 0`` the solution is
    explicit, with ``r0 > 0`` the receptor channel grows without bound.
    """
    p = params
    cid = case_id(p)
    c = p.A / p.p3 if p.p3 > 0 else math.inf

    if cid == "generic":
        return _report(cid, p, all_equilibria(p))

    if cid == "A_zero":
        return _report(cid, p, [Equilibrium(0.0, p.p5 / p.p6, 0.0)])

    if cid == "p2_zero":
        coeffs = case2_cubic(p)
        groups = cluster_roots(real_roots(coeffs), tol=1e-7)
        lo, hi = p.p5 / p.p6, (p.p5 + 1.0) / p.p6
        pts, mult = [], []
        for r, m in groups:
            if lo - 1e-12 <= r <= hi + 1e-12:
                pts.append(Equilibrium(c, r, c))
                mult.append(m)
        return _report(cid, p, pts, multiplicities=mult,
                       predicted_root_count=case2_predicted_root_count(p))

    if cid == "p3_zero":
        r = (p.p5 + 1.0) / p.p6
        eq = Equilibrium(math.inf, r, math.inf, math.nan, 0.0, math.nan, 0.0)
        return CaseReport(cid, (eq,), 1, "non_hyperbolic", ("non_hyperbolic",),
                          ((0.0 + 0j, -1.0 + 0j, -p.p6 + 0j),), (1,), unbounded=True,
                          notes=("equilibrium at infinity; eigenvalues 0, -1, -p6",))

    if cid == "p4_zero":
        R = (p.p5 + 1.0) / p.p6
        w = 4.0 * p.A * p.p2 * R / p.p3
        a = (2.0 * p.A / p.p3) / (math.sqrt(1.0 + w) + 1.0)
        return _report(cid, p, [Equilibrium(a, R, a)])

    if cid == "p2_p4_zero":
        return _report(cid, p, [Equilibrium(c, (1.0 + p.p5) / p.p6, c)],
                       classification="explicit_solution")

    if cid == "p5_zero":
        pts = [Equilibrium(c, 0.0, c)]
        for a in real_roots(case6_cubic(p)):
            if 0.0 < a < c:
                r = (c / a - 1.0) / (p.p2 * a)
                pts.append(Equilibrium(a, r, a))
        notes = (f"p2^2 p4 {'>=' if p.p2 ** 2 * p.p4 >= 1 else '<'} 1",)
        return _report(cid, p, pts, notes=notes)

    if cid == "p6_zero":
        return CaseReport(cid, (), 0, "blow_up", unbounded=True,
                          notes=("r grows without bound since r' >= p5 > 0",))

    # p6 = p5 = 0
    eq = Equilibrium(c, 0.0, c)
    if r0 is None:
        return _report(cid, p, [eq], classification="non_hyperbolic")
    if r0 == 0.0:
        return _report(cid, p, [eq], classification="explicit_solution")
    T = blow_up_estimate(p, r0) if p.A > 0 and p.p4 > 0 else None
    return _report(cid, p, [eq], classification="blow_up", blow_up_time=T, unbounded=True)
