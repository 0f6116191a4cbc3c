"""
A dome on the square reproduces its cells
=========================================

A concave bump centred near the middle of the square has its maximum inside,
a saddle on each edge and a minimum at each corner. The Morse complex is then
the cellular complex of the square: four vertices, four edges and one face.
Changing the metric moves the flow lines but not the boundary maps.
"""
import numpy as np

from cornermorse import (Domain, Interval, build_complex, find_critical_points, homology,
                         make_problem, verify_chain)

square = Domain.product([Interval(0, 1), Interval(0, 1)])
f = "-(x1-0.5)^2-(x2-0.45)^2"

# %%
# Euclidean metric
# ----------------
pr = make_problem(square, f)
search = find_critical_points(pr)
mc = build_complex(pr, search)
loc = {cp.id: np.round(cp.location, 3).tolist() for cp in search.essential}
print("cells per dimension:", mc.counts())
for k in (1, 2):
    print(f"d{k} rows {[loc[i] for i in mc.generators[k - 1]]}")
    print(f"   cols {[loc[i] for i in mc.generators[k]]}")
    print("  ", mc.boundary(k).tolist())

# %%
# Every edge column has one +1 and one -1, at the two corners of that edge,
# and the face hits all four edges. Composition is zero and the homology is
# that of a point.
print("d1 d2 = 0:", verify_chain(mc), " Betti:", homology(mc).betti)

# %%
# A skewed metric
# ---------------
# With an off-diagonal Gram matrix the gradient tilts, yet the degrees agree.
skew = make_problem(square, f, [[1.0, 0.3], [0.3, 1.0]])
mc2 = build_complex(skew)
print("same boundary maps:",
      all(np.array_equal(np.abs(mc.boundary(k)), np.abs(mc2.boundary(k))) for k in (1, 2)))
print("Betti:", homology(mc2).betti)
