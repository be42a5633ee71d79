"""
Fixed points and their linear stability
=======================================

The undelayed model has a fixed point wherever the ACTH and receptor
nullclines cross. We locate it, build the characteristic cubic and read
the verdict off the Routh-Hurwitz conditions.
"""

import numpy as np

from hpa_delay.equilibria import all_equilibria, classify_case, solve_equilibrium, with_coeffs
from hpa_delay.model import ModelParams
from hpa_delay.stability import char_cubic, routh_hurwitz

# strong feedback (p2 = 15) and a steep Hill threshold (p4 = 0.05)
p = ModelParams(A=1.0, p2=15.0, p3=7.2, p4=0.05, p5=0.11, p6=2.9)
eq = with_coeffs(p, solve_equilibrium(p))
print(f"fixed point  a* = o* = {eq.a_star:.6f}   r* = {eq.r_star:.6f}")

cubic = char_cubic(p, eq)
print(f"cubic        l^3 + {cubic.alpha1:.4f} l^2 + {cubic.alpha2:.4f} l + {cubic.alpha3:.4f}")
print(f"discriminant {cubic.delta:.2f}")
print("roots       ", np.round(cubic.roots, 5))
print("verdict     ", routh_hurwitz(cubic).kind)

# Without feedback (p2 = 0) the receptor equation decouples into a cubic
# and three fixed points can coexist.
p2zero = ModelParams(A=0.106, p2=0.0, p3=0.222, p4=0.464, p5=0.094, p6=0.418)
rep = classify_case(p2zero)
print(f"\ncase {rep.case_id}: {rep.root_count} fixed points")
for e, kind in zip(rep.fixed_points, rep.point_classifications):
    print(f"  r* = {e.r_star:.5f}  {kind}")

# Multistability is not confined to p2 = 0. This all-positive set has a
# saddle between two stable nodes.
three = ModelParams(A=1.3934800971840353, p2=0.12016236151422163, p3=5.559765170361437,
                    p4=0.378397096841923, p5=0.006065707619311299, p6=0.10796140223179483)
print("\nall-positive parameters:")
for e in all_equilibria(three):
    print(f"  r* = {e.r_star:.6f}  {routh_hurwitz(char_cubic(three, with_coeffs(three, e))).kind}")
