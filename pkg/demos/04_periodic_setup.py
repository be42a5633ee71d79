"""
Initial data aimed at tau-periodic solutions
============================================

Choosing r0 inside (p5/p6, (p5+1)/p6) fixes the ACTH value a_hist(0) that
a tau-periodic solution would need. We build a history meeting it,
integrate and ask whether the result repeats every tau.
"""

from hpa_delay.integrate import integrate_dde
from hpa_delay.model import ModelParams
from hpa_delay.periodic import build_periodic_setup, estimate_period, verify_periodicity

for p in (ModelParams(A=1.0, p2=11.0, p3=1.2, p4=0.05, p5=0.11, p6=2.9, tau=4.0),
          ModelParams(A=1.0, p2=7.0, p3=1.2, p4=0.05, p5=0.51, p6=3.1, tau=4.0)):
    r0 = 0.5 * (p.p5 / p.p6 + (p.p5 + 1.0) / p.p6)
    setup = build_periodic_setup(p, r0)
    traj = integrate_dde(p, setup.history, 20 * p.tau, 200)
    chk = verify_periodicity(traj, p.tau, 10 * p.tau)
    print(f"p2 = {p.p2}, p5 = {p.p5}: r0 = {r0:.4f}, a_hist(0) = {setup.a_tau_0:.4f}, "
          f"history {setup.history.kind}")
    print(f"  residuals of the algebraic conditions {setup.residuals[0]:+.3f}, {setup.residuals[1]:+.3f}")
    print(f"  period-tau residual {chk.residual:.2e} against amplitude {chk.amplitude:.2e}")
    print(f"  estimated period {estimate_period(traj, 10 * p.tau)}")
