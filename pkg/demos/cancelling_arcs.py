"""
Two arcs that cancel on the circle
==================================

The height function ``cos`` on a circle has one maximum and one minimum.
Two flow lines run from the top to the bottom, one on each side, and their
signs cancel. The boundary map is zero and both Betti numbers are one.
"""
import math

from cornermorse import (Circle, Domain, build_complex, expected_homology,
                         find_critical_points, homology, make_problem)

pr = make_problem(Domain.product([Circle(2 * math.pi)]), "cos(x1)")

# %%
# Critical points
# ---------------
# Both points are stationary for the flow, so both are essential.
search = find_critical_points(pr)
for cp in search.essential:
    print(f"point {cp.id}: x = {cp.location[0]:.6f}, index {cp.index}, f = {cp.value:+.3f}")

# %%
# Connecting trajectories
# -----------------------
# The unstable sphere of the maximum is two points. Each one flows to the
# minimum, and each trajectory carries a sign.
mc = build_complex(pr, search)
for t in mc.trajectories:
    offset = (t.seed[0] + math.pi) % math.tau - math.pi
    print(f"{t.source} -> {t.target}: sign {t.sign:+d}, seed offset {offset:+.4f}")
print("boundary matrix d1 =", mc.boundary(1).tolist())

# %%
# Homology
# --------
# The Kunneth oracle for a single circle gives (1, 1).
print("Morse homology:", homology(mc).betti, " oracle:", expected_homology(pr.domain).betti)
