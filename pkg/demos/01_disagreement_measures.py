"""How far apart are the agents? Two measures that always agree up to a factor.

The projection Q keeps only the part of a state vector that is not common to
every agent. Its norm and the plain spread max(x) - min(x) bound each other,
so driving one to zero drives the other to zero.
"""
import math

import numpy as np

from etcoord.analysis import sandwich_holds
from etcoord.graph import diameter, q_matrix

rng = np.random.default_rng(1)

Q = q_matrix(4)
print("Q for four agents:\n", np.round(Q, 4))
print("Q @ ones =", Q @ np.ones(4))

print("\n  n   ||Qx||/sqrt(n)   diam(x)   sqrt(2)||Qx||")
for n in (2, 5, 10):
    x = rng.uniform(-1, 1, n)
    qn = np.linalg.norm(q_matrix(n) @ x)
    print(f"{n:3d}   {qn / math.sqrt(n):12.4f}   {diameter(x):7.4f}   {math.sqrt(2) * qn:11.4f}"
          f"   holds={sandwich_holds(x)}")

# adding a common offset changes neither measure
x = rng.uniform(-1, 1, 5)
print("\nshifted by 100:", np.linalg.norm(q_matrix(5) @ (x + 100)) - np.linalg.norm(q_matrix(5) @ x))
