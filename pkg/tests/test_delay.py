import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import assume, given, settings, strategies as st

from hpa_delay.delay import (build_quasi_characteristic, contour_field, count_rhp_roots, f_cubic_coefficients,
                             f_function, lemma_stable_all_tau, locate_characteristic_roots,
                             printed_b_coefficients, quasi_characteristic, switch_schedule)
from hpa_delay.equilibria import solve_equilibrium
from hpa_delay.errors import GuardViolationError
from hpa_delay.stability import char_alphas

from conftest import EX21, EX31

# frozen from companion eigenvalues of P + Q and the schedule of the example quasi-polynomial
EX31_TAU0 = (-0.94178177132252228, complex(-0.28410911433873887, 0.86899047247253447))
EX31_X = (0.069330449583221959, 0.50126816807326391)
EX31_TAU_RL = 10.535757317596039
EX31_TAU_LR = (2.0066016574737642, 10.881120279795921)

_lam, _y, _p3, _p6, _K2, _K3 = sp.symbols("lam y p3 p6 K2 K3", real=True)
_P = sp.expand((_lam + 1) * (_lam + _p3) * (_lam + _p6 - _K2) + _K3 * (_lam + _p6))
_Q = _K3 * (_lam + _p6)


def _sympy_b():
    Pi, Qi = _P.subs(_lam, sp.I * _y), _Q.subs(_lam, sp.I * _y)
    F = sp.expand(sp.re(Pi) ** 2 + sp.im(Pi) ** 2 - sp.re(Qi) ** 2 - sp.im(Qi) ** 2)
    poly = sp.Poly(F, _y)
    b = [poly.coeff_monomial(_y ** k) for k in (4, 2, 0)]
    assert poly.coeff_monomial(_y ** 6) == 1
    return sp.lambdify((_p3, _p6, _K2, _K3), b, "math")


SYM_B = _sympy_b()
quads = st.tuples(st.floats(0.01, 5), st.floats(0.01, 5), st.floats(0, 5), st.floats(0, 5))


def test_example_quasi_polynomial():
    qc = quasi_characteristic(**EX31)
    np.testing.assert_allclose(qc.p_coeffs, [1, 1.51, 0.961, 0.4141], rtol=1e-14)
    np.testing.assert_allclose(qc.q_coeffs, [0.41, 0.3731], rtol=1e-14)
    assert qc.p0_plus_q0 == pytest.approx(0.41 * 0.1 + 2 * 0.41 * 0.91, rel=1e-14)
    assert all(qc.conditions.values())


def test_guard_violation():
    with pytest.raises(GuardViolationError):
        quasi_characteristic(p3=1.0, p6=1.0, K2=3.0, K3=1.0)


def test_tau_zero_polynomial_doubles_K3():
    eq = solve_equilibrium(EX21)
    qc = build_quasi_characteristic(EX21, eq)
    expected = sp.Poly(sp.expand(_P + _Q), _lam).all_coeffs()
    subs = {_p3: EX21.p3, _p6: EX21.p6, _K2: eq.K2, _K3: eq.K3}
    np.testing.assert_allclose(qc.tau_zero_coeffs(), [float(c.subs(subs)) for c in expected], rtol=1e-13)
    np.testing.assert_allclose(qc.tau_zero_coeffs()[1:], char_alphas(EX21.p3, EX21.p6, eq.K2, 2 * eq.K3),
                               rtol=1e-13)


@given(quads)
@settings(max_examples=300)
def test_b_coefficients_match_symbolic_expansion(q):
    assume(abs(q[0] * (q[1] - q[2]) + 2 * q[3] * q[1]) > 1e-9)
    qc = quasi_characteristic(*q)
    ref = SYM_B(*q)
    got = f_cubic_coefficients(qc)
    scale = 1 + max(abs(v) for v in ref)
    np.testing.assert_allclose(got, ref, atol=1e-9 * scale)
    p3, p6, K2, K3 = q
    assert got[0] == pytest.approx((p6 - K2) ** 2 + p3 ** 2 + 1 - 2 * K3, abs=1e-9 * scale)
    # the typeset expansion, with "+-" read as "-", agrees as well
    np.testing.assert_allclose(printed_b_coefficients(*q), ref, atol=1e-9 * scale)


@given(quads, st.floats(-10, 10))
@settings(max_examples=300)
def test_F_moduli_equals_cubic(q, y):
    assume(abs(q[0] * (q[1] - q[2]) + 2 * q[3] * q[1]) > 1e-9)
    qc = quasi_characteristic(*q)
    b1, b2, b3 = f_cubic_coefficients(qc)
    x = y * y
    cubic = x ** 3 + b1 * x * x + b2 * x + b3
    direct = float(f_function(qc, y))
    scale = x ** 3 + abs(b1) * x * x + abs(b2) * x + abs(b3)
    assert abs(direct - cubic) <= 1e-9 * max(scale, 1.0)


def test_F_at_zero():
    qc = quasi_characteristic(**EX31)
    P0, Q0 = qc.p_coeffs[3], qc.q_coeffs[1]
    assert float(f_function(qc, 0.0)) == pytest.approx((P0 + Q0) * (P0 - Q0), rel=1e-14)


def test_example_3_1_schedule():
    qc = quasi_characteristic(**EX31)
    s = switch_schedule(qc, 10)
    np.testing.assert_allclose([x for x, _ in s.positive_roots_x], EX31_X, rtol=1e-12)
    assert [m for _, m in s.positive_roots_x] == [1, 1]
    np.testing.assert_allclose(s.frequencies_v, np.sqrt(EX31_X), rtol=1e-12)
    assert s.crossing_direction == {0: "right_to_left", 1: "left_to_right"}
    assert s.tau_sequences[0][0] == pytest.approx(EX31_TAU_RL, rel=1e-10)
    np.testing.assert_allclose(s.tau_sequences[1][:2], EX31_TAU_LR, rtol=1e-10)
    assert s.first_destabilizing_tau == pytest.approx(EX31_TAU_LR[0], rel=1e-10)
    assert s.tau_critical == pytest.approx(EX31_TAU_LR[1], rel=1e-10)
    assert s.verdict == "switches"
    assert s.rhp_count_tau0 == 0
    assert all(d["literal"] and d["sign_consistent"] for d in s.proviso.values())
    for j, taus in s.tau_sequences.items():
        v = s.frequencies_v[j]
        assert np.all(np.diff(taus) > 0)
        np.testing.assert_allclose(np.diff(taus), 2 * math.pi / v, rtol=1e-12)
        for t in taus:
            assert abs(qc.C(1j * v, t)) < 1e-6
    # F changes sign around the two crossing frequencies
    assert f_function(qc, 0.22) * f_function(qc, 0.28) < 0
    assert f_function(qc, 0.65) * f_function(qc, 0.75) < 0


def test_constructed_crossing_at_zero_delay():
    # (lam + 1)(lam^2 + 1) is P + Q, so lam = i solves C at tau = 0: sin = 0, cos = 1
    qc = quasi_characteristic(p3=1.0, p6=1.0, K2=2.0, K3=1.0)
    np.testing.assert_allclose(qc.tau_zero_coeffs(), [1, 1, 1, 1])
    s = switch_schedule(qc, 4)
    j = next(j for j, (x, _) in enumerate(s.positive_roots_x) if abs(x - 1.0) < 1e-9)
    taus = s.tau_sequences[j]
    assert taus[0] == pytest.approx(0.0, abs=1e-9) or taus[0] == pytest.approx(2 * math.pi, abs=1e-9)
    np.testing.assert_allclose(np.diff(taus), 2 * math.pi, rtol=1e-12)


def test_no_delay_coupling_is_stable_for_all_delays():
    qc = quasi_characteristic(p3=0.5, p6=2.0, K2=0.3, K3=0.0)
    s = switch_schedule(qc)
    assert s.positive_roots_x == () and s.verdict == "stable_all_tau"


@given(quads)
@settings(max_examples=300)
def test_lemma_implies_stable_verdict(q):
    assume(abs(q[0] * (q[1] - q[2]) + 2 * q[3] * q[1]) > 1e-6)
    qc = quasi_characteristic(*q)
    s = switch_schedule(qc, 3)
    if lemma_stable_all_tau(qc) and s.rhp_count_tau0 == 0:
        assert s.verdict == "stable_all_tau"


def test_tau_zero_roots():
    qc = quasi_characteristic(**EX31)
    roots = locate_characteristic_roots(qc, 0.0, (-2, 1, -2, 2))
    assert len(roots) == 3
    ref = sorted([EX31_TAU0[0], EX31_TAU0[1], EX31_TAU0[1].conjugate()], key=lambda z: (z.real, z.imag))
    np.testing.assert_allclose(np.array(roots), np.array(ref), atol=1e-9)
    np.testing.assert_allclose(sorted(np.roots(qc.tau_zero_coeffs()), key=lambda z: (z.real, z.imag)),
                               ref, atol=1e-12)


def test_roots_after_first_switch():
    qc = quasi_characteristic(**EX31)
    roots = locate_characteristic_roots(qc, 2.1, (-2, 1, -2, 2))
    pos = [z for z in roots if z.real > 0]
    assert len(pos) == 2
    for z in pos:
        assert 0 < z.real < 0.05
        assert abs(abs(z.imag) - 0.708) < 0.02
    for z in roots:
        assert abs(qc.C(z, 2.1)) < 1e-10
        if abs(z.imag) > 1e-8:
            assert any(abs(w - z.conjugate()) < 1e-8 for w in roots)


def test_rhp_count_changes_by_two_at_each_crossing():
    qc = quasi_characteristic(**EX31)
    s = switch_schedule(qc, 3)
    eps = 1e-3
    for t, j, _ in s.events[:5]:
        before, after = count_rhp_roots(qc, t - eps), count_rhp_roots(qc, t + eps)
        step = 2 if s.crossing_direction[j] == "left_to_right" else -2
        assert after - before == step, (t, j)


def test_contour_field():
    qc = quasi_characteristic(**EX31)
    xs, ys, re, im = contour_field(qc, 0.0, (-2, 1, -2, 2), 50)
    lam = xs[None, :] + 1j * ys[:, None]
    direct = np.polyval(qc.tau_zero_coeffs(), lam)
    np.testing.assert_allclose(re + 1j * im, direct, rtol=1e-13, atol=1e-13)
    xs, ys, re, im = contour_field(qc, 2.1, (-2, 1, -2, 2), 120)
    rng = np.random.default_rng(3)
    for _ in range(100):
        i, k = rng.integers(0, 120, 2)
        c = qc.C(xs[i] + 1j * ys[k], 2.1)
        assert re[k, i] == pytest.approx(c.real, abs=1e-12) and im[k, i] == pytest.approx(c.imag, abs=1e-12)
    xs, ys, re, im = contour_field(qc, 2.1, (-2, 1, -2, 2), 601)
    for z in locate_characteristic_roots(qc, 2.1, (-2, 1, -2, 2)):
        i = min(np.searchsorted(xs, z.real) - 1, xs.size - 2)
        k = min(np.searchsorted(ys, z.imag) - 1, ys.size - 2)
        s_ = (z.real - xs[i]) / (xs[i + 1] - xs[i])
        t_ = (z.imag - ys[k]) / (ys[k + 1] - ys[k])
        for f in (re, im):
            val = ((1 - s_) * (1 - t_) * f[k, i] + s_ * (1 - t_) * f[k, i + 1]
                   + (1 - s_) * t_ * f[k + 1, i] + s_ * t_ * f[k + 1, i + 1])
            assert abs(val) < 1e-3
