"""Parameters, state, history data and right-hand sides of the HPA-axis model.

The delayed system is::

    a' = A / (1 + p2 o r) - p3 a
    r' = (o r)^2 / (p4 + (o r)^2) + p5 - p6 r
    o' = a(t - tau) - o

with ``a`` (ACTH) prescribed on ``[-tau, 0]`` by a history function and
``r(0) = r0``, ``o(0) = o0``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import InvalidInputError

PARAM_NAMES = ("A", "p2", "p3", "p4", "p5", "p6")
FITTING_TOL = 1e-9


def _check_finite_nonneg(name, value):
    try:
        value = float(value)
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(f"{name} must be a real number, got {value!r}") from exc
    if not math.isfinite(value):
        raise InvalidInputError(f"{name} must be finite, got {value}")
    if value < 0.0:
        raise InvalidInputError(f"{name} must be >= 0, got {value}")
    return value


@dataclass(frozen=True)
class ModelParams:
    """Dimensionless model constants.

    ``A`` is the CRH drive; ``p2``..``p6`` are rate constants and ``tau`` is
    the adrenal response delay. All values must be finite and nonnegative.
    """

    A: float
    p2: float
    p3: float
    p4: float
    p5: float
    p6: float
    tau: float = 0.0

    def __post_init__(self):
        for name in PARAM_NAMES + ("tau",):
            object.__setattr__(self, name, _check_finite_nonneg(name, getattr(self, name)))

    def positive(self) -> dict[str, bool]:
        """Strict-positivity flag for every field."""
        return {name: getattr(self, name) > 0.0 for name in PARAM_NAMES + ("tau",)}

    @property
    def is_generic(self) -> bool:
        return all(getattr(self, name) > 0.0 for name in PARAM_NAMES)

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class State:
    """Point in phase space: ACTH ``a``, receptor density ``r``, cortisol ``o``."""

    a: float
    r: float
    o: float

    def __post_init__(self):
        for name in ("a", "r", "o"):
            object.__setattr__(self, name, _check_finite_nonneg(name, getattr(self, name)))

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.r, self.o])

    @classmethod
    def from_array(cls, y) -> "State":
        return cls(float(y[0]), float(y[1]), float(y[2]))


def hill(x, p4):
    """Saturating receptor term ``x^2 / (p4 + x^2)``, with ``0/0`` taken as 0."""
    x2 = x * x
    den = p4 + x2
    if np.ndim(den) == 0:
        return x2 / den if den > 0.0 else 0.0
    den = np.asarray(den, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den > 0.0, x2 / np.where(den > 0.0, den, 1.0), 0.0)
    return out


def rhs(params: ModelParams, state: State, a_delayed: float) -> tuple[float, float, float]:
    """Exact right-hand sides ``(f1, f2, f3)`` at ``state`` with delayed ACTH ``a_delayed``."""
    a_delayed = float(a_delayed)
    if not math.isfinite(a_delayed):
        raise InvalidInputError(f"a_delayed must be finite, got {a_delayed}")
    a, r, o = state.a, state.r, state.o
    x = o * r
    f1 = params.A / (1.0 + params.p2 * x) - params.p3 * a
    f2 = hill(x, params.p4) + params.p5 - params.p6 * r
    f3 = a_delayed - o
    return f1, f2, f3


def rhs_array(params: ModelParams, y, a_delayed) -> np.ndarray:
    """Array form of :func:`rhs` without validation (for integrators and Jacobians)."""
    a, r, o = y[0], y[1], y[2]
    x = o * r
    return np.array([
        params.A / (1.0 + params.p2 * x) - params.p3 * a,
        hill(x, params.p4) + params.p5 - params.p6 * r,
        a_delayed - o,
    ])


# --------------------------------------------------------------------------
# history catalog


def hermite_eval(t, t0, t1, y0, y1, m0, m1):
    """Cubic Hermite interpolant on ``[t0, t1]`` and its derivative at ``t``."""
    h = t1 - t0
    s = (t - t0) / h
    s2 = s * s
    s3 = s2 * s
    h00 = 2 * s3 - 3 * s2 + 1
    h10 = s3 - 2 * s2 + s
    h01 = -2 * s3 + 3 * s2
    h11 = s3 - s2
    val = h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1
    d00 = (6 * s2 - 6 * s) / h
    d10 = 3 * s2 - 4 * s + 1
    d01 = (-6 * s2 + 6 * s) / h
    d11 = 3 * s2 - 2 * s
    der = d00 * y0 + d10 * m0 + d01 * y1 + d11 * m1
    return val, der


HISTORY_KINDS = ("constant", "poly_exp", "hermite")


@dataclass(frozen=True)
class HistorySpec:
    """Initial data: ACTH history on ``[-tau, 0]`` plus ``r0`` and ``o0``.

    Supported ``kind`` values and their ``params``:

    * ``"constant"``: ``{"value": c}``
    * ``"poly_exp"``: ``{"a0": a0, "lam": lam}`` for ``a0 + lam * t**2 * exp(-t)``
    * ``"hermite"``: ``{"t": [...], "a": [...], "da": [...]}``, a piecewise cubic
      Hermite table whose last knot is 0. It is held constant to the left of
      the first knot.
    """

    kind: str
    params: Mapping[str, Any]
    r0: float
    o0: float

    def __post_init__(self):
        if self.kind not in HISTORY_KINDS:
            raise InvalidInputError(f"unknown history kind {self.kind!r}; expected one of {HISTORY_KINDS}")
        for name in ("r0", "o0"):
            v = _check_finite_nonneg(name, getattr(self, name))
            object.__setattr__(self, name, v)
        p = dict(self.params)
        if self.kind == "constant":
            p = {"value": _check_finite_nonneg("history.value", p.get("value"))}
        elif self.kind == "poly_exp":
            p = {"a0": _check_finite_nonneg("history.a0", p.get("a0")), "lam": float(p.get("lam", 0.0))}
            if not math.isfinite(p["lam"]):
                raise InvalidInputError("history.lam must be finite")
        else:
            ts = [float(v) for v in p.get("t", ())]
            av = [float(v) for v in p.get("a", ())]
            dv = [float(v) for v in p.get("da", ())]
            if not (len(ts) == len(av) == len(dv) >= 2):
                raise InvalidInputError("hermite history needs equal-length t, a, da with >= 2 knots")
            if any(b <= a for a, b in zip(ts, ts[1:])):
                raise InvalidInputError("hermite knots must be strictly increasing")
            if ts[-1] != 0.0:
                raise InvalidInputError("hermite history must end at t = 0")
            if not all(map(math.isfinite, ts + av + dv)):
                raise InvalidInputError("hermite table must be finite")
            p = {"t": tuple(ts), "a": tuple(av), "da": tuple(dv)}
        object.__setattr__(self, "params", p)

    # evaluation -----------------------------------------------------------

    def _eval(self, t):
        t = np.asarray(t, dtype=float)
        p = self.params
        if self.kind == "constant":
            return np.full_like(t, p["value"]), np.zeros_like(t)
        if self.kind == "poly_exp":
            e = np.exp(-t)
            val = p["a0"] + p["lam"] * t * t * e
            der = p["lam"] * (2 * t - t * t) * e
            return val, der
        knots = np.asarray(p["t"])
        av = np.asarray(p["a"])
        dv = np.asarray(p["da"])
        i = np.clip(np.searchsorted(knots, t, side="right") - 1, 0, knots.size - 2)
        val, der = hermite_eval(t, knots[i], knots[i + 1], av[i], av[i + 1], dv[i], dv[i + 1])
        left = t < knots[0]
        val = np.where(left, av[0], val)
        der = np.where(left, 0.0, der)
        return val, der

    def __call__(self, t):
        val, _ = self._eval(t)
        return float(val) if np.ndim(val) == 0 else val

    def derivative(self, t):
        _, der = self._eval(t)
        return float(der) if np.ndim(der) == 0 else der

    def validate(self, tau: float, samples: int = 257) -> None:
        """Check nonnegativity on ``[-tau, 0]`` and positivity of ``r0``, ``o0``."""
        if self.r0 <= 0.0 or self.o0 <= 0.0:
            raise InvalidInputError("r0 and o0 must be strictly positive")
        ts = np.linspace(-tau, 0.0, samples)
        vals = np.atleast_1d(self(ts))
        if not np.all(np.isfinite(vals)) or np.any(vals < 0.0):
            raise InvalidInputError("history a(t) must be finite and >= 0 on [-tau, 0]")

    def as_dict(self) -> dict[str, Any]:
        params = {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.params.items()}
        return {"kind": self.kind, "params": params, "r0": self.r0, "o0": self.o0}


def fitted_a0(params: ModelParams, r0: float, o0: float) -> float:
    """Value ``a0`` making ``a0 + lam t^2 e^{-t}`` satisfy the fitting condition."""
    return params.A / (params.p3 * (1.0 + params.p2 * o0 * r0))


def fitting_residual(params: ModelParams, hist: HistorySpec) -> float:
    """``a'(0) + p3 a(0) - A / (1 + p2 o0 r0)`` for the given history."""
    return (hist.derivative(0.0) + params.p3 * hist(0.0)
            - params.A / (1.0 + params.p2 * hist.o0 * hist.r0))


def check_fitting_condition(params: ModelParams, hist: HistorySpec, tol: float = FITTING_TOL) -> bool:
    """True when the history splices onto the ODE with matching slope at ``t = 0``."""
    return abs(fitting_residual(params, hist)) <= tol


# --------------------------------------------------------------------------
# configuration documents


def _flatten(doc: Mapping[str, Any], prefix="") -> dict[str, Any]:
    out = {}
    for k, v in doc.items():
        key = f"{prefix}{k}"
        if isinstance(v, Mapping) and key == "history":
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def params_from_mapping(doc: Mapping[str, Any]) -> ModelParams:
    flat = _flatten(doc)
    missing = [k for k in PARAM_NAMES if k not in flat]
    if missing:
        raise InvalidInputError(f"missing parameter(s): {', '.join(missing)}")
    return ModelParams(**{k: flat[k] for k in PARAM_NAMES}, tau=flat.get("tau", 0.0))


def history_from_mapping(doc: Mapping[str, Any], params: ModelParams | None = None) -> HistorySpec | None:
    """Build the history from ``history.kind``, ``history.params``, ``r0``, ``o0``.

    For ``poly_exp`` an omitted ``a0`` is filled in from the fitting condition,
    which needs ``params``.
    """
    flat = _flatten(doc)
    kind = flat.get("history.kind")
    if kind is None:
        return None
    if "r0" not in flat or "o0" not in flat:
        raise InvalidInputError("history needs r0 and o0")
    hp = dict(flat.get("history.params", {}))
    r0, o0 = float(flat["r0"]), float(flat["o0"])
    if kind == "poly_exp" and "a0" not in hp:
        if params is None:
            raise InvalidInputError("poly_exp history without a0 needs model parameters")
        hp["a0"] = fitted_a0(params, r0, o0)
    return HistorySpec(kind=kind, params=hp, r0=r0, o0=o0)


@dataclass
class Config:
    params: ModelParams
    history: HistorySpec | None
    raw: dict[str, Any] = field(default_factory=dict)


def load_config(path) -> Config:
    """Read a JSON configuration document."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise InvalidInputError("configuration must be a JSON object")
    params = params_from_mapping(raw)
    return Config(params=params, history=history_from_mapping(raw, params), raw=raw)
