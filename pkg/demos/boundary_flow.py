"""
Flow along the boundary of a cylinder
=====================================

On the cylinder ``S^1 x [0, 1]`` the function ``cos(x1) - x2`` decreases
towards the top edge, so the gradient points out of the domain there. The
modified flow slides along the edge instead, and the essential critical
points of the complex sit on that boundary circle.
"""
import math

import numpy as np

from cornermorse import (Circle, Domain, Interval, build_complex, find_critical_points,
                         homology, integrate, make_problem)

pr = make_problem(Domain.product([Circle(2 * math.pi), Interval(0, 1)]), "cos(x1)-x2")

# %%
# One flow line
# -------------
# Start inside. The path rises to ``x2 = 1``, is captured by that edge and
# then follows it to the minimum of the boundary circle.
path = integrate(pr, (1.0, 0.2))
for ev in path.events:
    print(f"t = {ev.time:.4f}: {ev.kind} on constraint {pr.domain.ids[ev.constraint]!r}")
print("stops at", np.round(path.end, 6), "after t =", round(path.t_end, 3))

# %%
# Which points count
# ------------------
# The interior has no critical points. The bottom edge has two stratum-critical
# points, but the flow leaves them, so they are not essential.
search = find_critical_points(pr)
for cp in search.points:
    tag = "essential" if cp.essential else "not essential"
    print(f"{np.round(cp.location, 4)}  depth {cp.stratum.depth}  index {cp.index}  {tag}")

# %%
# The complex
# -----------
# Both connecting trajectories stay on the top circle, as on a bare circle.
mc = build_complex(pr, search)
for t in mc.trajectories:
    _, X = t.path.polyline()
    print(f"{t.source} -> {t.target}: sign {t.sign:+d}, max |x2 - 1| = {np.max(np.abs(X[:, 1] - 1)):.1e}")
print("Betti numbers:", homology(mc).betti)
