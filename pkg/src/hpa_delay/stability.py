"""Characteristic cubic at a fixed point and Routh-Hurwitz classification."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._poly import companion_roots
from .equilibria import Equilibrium
from .errors import UnsupportedCaseError
from .model import ModelParams

RH_BAND = 1e-10
VERDICTS = ("asymptotically_stable", "unstable", "inconclusive_non_hyperbolic")


@dataclass(frozen=True)
class CharCubic:
    """``lambda^3 + alpha1 lambda^2 + alpha2 lambda + alpha3`` with its discriminant and roots."""

    alpha1: float
    alpha2: float
    alpha3: float
    delta: float
    roots: tuple[complex, complex, complex]

    @property
    def coeffs(self) -> np.ndarray:
        return np.array([1.0, self.alpha1, self.alpha2, self.alpha3])

    @property
    def max_real_part(self) -> float:
        return max(z.real for z in self.roots)


@dataclass(frozen=True)
class StabilityVerdict:
    kind: str
    rh_checks: dict
    max_real_part: float


def cubic_discriminant(a1: float, a2: float, a3: float) -> float:
    return (18.0 * a1 * a2 * a3 - 4.0 * a1 ** 3 * a3 + a1 * a1 * a2 * a2
            - 4.0 * a2 ** 3 - 27.0 * a3 * a3)


def cubic_from_coefficients(a1: float, a2: float, a3: float) -> CharCubic:
    roots = companion_roots([1.0, a1, a2, a3])
    roots = tuple(sorted((complex(z) for z in roots), key=lambda z: (z.real, z.imag)))
    return CharCubic(float(a1), float(a2), float(a3), float(cubic_discriminant(a1, a2, a3)), roots)


def char_alphas(p3: float, p6: float, K2: float, K3: float) -> tuple[float, float, float]:
    a1 = p3 + p6 - K2 + 1.0
    a2 = p3 + p6 - K2 + p3 * (p6 - K2) + K3
    a3 = p3 * (p6 - K2) + p6 * K3
    return a1, a2, a3


def char_cubic(params: ModelParams, eq: Equilibrium) -> CharCubic:
    """Characteristic cubic of the Jacobian at ``eq`` (undelayed system)."""
    return cubic_from_coefficients(*char_alphas(params.p3, params.p6, eq.K2, eq.K3))


def routh_hurwitz(cubic: CharCubic) -> StabilityVerdict:
    """Classify by ``alpha1 > 0``, ``alpha3 > 0`` and ``alpha1 alpha2 > alpha3``.

    Margins within 1e-10 of zero count as equality.
    """
    a1, a2, a3 = cubic.alpha1, cubic.alpha2, cubic.alpha3
    margins = {"alpha1_positive": a1, "alpha3_positive": a3,
               "alpha1_alpha2_exceeds_alpha3": a1 * a2 - a3}
    checks = {k: bool(v > RH_BAND) for k, v in margins.items()}
    if all(checks.values()):
        kind = "asymptotically_stable"
    elif any(v < -RH_BAND for v in margins.values()):
        kind = "unstable"
    else:
        kind = "inconclusive_non_hyperbolic"
    return StabilityVerdict(kind, checks, cubic.max_real_part)


@dataclass(frozen=True)
class ChainReport:
    """Inequality chains evaluated at ``x = r*`` next to the direct coefficient tests.

    ``alpha3_chain`` is the chain as written, ``(x - x1)(x - x2) < ...``;
    on the band ``x1 <= x <= x2`` its left side is never positive so it
    always holds. ``alpha3_chain_corrected`` uses ``(x - x1)(x2 - x)``,
    which is what ``K2 < p6 (1 + K3/p3)`` reduces to.
    """

    alpha1_chain: bool
    alpha3_chain: bool
    alpha1_alpha2_chain: bool
    alpha3_chain_corrected: bool
    direct: dict
    radicand: float
    agrees_with_eigenvalues: bool


def verify_rh_always_stable(params: ModelParams, eq: Equilibrium) -> ChainReport:
    """Evaluate the reformulated Routh-Hurwitz inequalities at the generic fixed point."""
    if not params.is_generic:
        raise UnsupportedCaseError("the inequality chains assume A > 0 and all p_i > 0")
    p3, p6, p2, p4, p5 = params.p3, params.p6, params.p2, params.p4, params.p5
    x = eq.r_star
    x1, x2 = p5 / p6, (p5 + 1.0) / p6
    K2, K3 = eq.K2, eq.K3

    c1 = 2.0 * p6 ** 2 * x ** 2 + (p3 + 1.0 - p6 * (1.0 + 4.0 * p5)) * x + 2.0 * p5 * (p5 + 1.0) > 0.0

    s1 = p2 * math.sqrt(p4 * max(x - x1, 0.0))
    ratio = s1 / (math.sqrt(max(x2 - x, 0.0)) + s1)
    rhs3 = x / (2.0 * p6) * (1.0 + ratio)
    c3_literal = (x - x1) * (x - x2) < rhs3
    c3_corrected = (x - x1) * (x2 - x) < rhs3

    k = K3 / (1.0 + p3)
    rad = k * k - 2.0 * (1.0 - 2.0 * p6 / (1.0 + p3)) * K3 + (p3 - 1.0) ** 2
    if rad <= 0.0:
        c12 = True
    else:
        c12 = 0.0 <= K2 < p6 + 0.5 * (p3 + 1.0 + k - math.sqrt(rad))

    cubic = char_cubic(params, eq)
    verdict = routh_hurwitz(cubic)
    chains_say_stable = c1 and c3_literal and c12
    agrees = chains_say_stable == (cubic.max_real_part < 0.0)
    return ChainReport(bool(c1), bool(c3_literal), bool(c12), bool(c3_corrected),
                       dict(verdict.rh_checks), float(rad), bool(agrees))
