"""How the point descriptor reacts to local shape.

A rod, an elongated plane patch and a sphere are described from the same
centre. The rod keeps only its dominant direction, the patch keeps all three
blocks (the third with zero norm) and the sphere is discarded because none
of its principal directions is well defined.

Run: python3 gallery/01_point_descriptor.py
"""

import numpy as np

from hopc import hopc_point, icosahedron_axes, spherical_support

rng = np.random.default_rng(0)
n = 400
ring = 2 * np.pi * np.arange(n) / 8
shapes = {
    "rod": np.c_[rng.uniform(-1, 1, n), 0.02 * np.cos(ring), 0.02 * np.sin(ring)],
    "patch": np.c_[rng.uniform(-1, 1, n), rng.uniform(-0.5, 0.5, n), np.zeros(n)],
    # dense, so sampling noise does not fake a dominant direction
    "sphere": rng.normal(size=(5000, 3)),
}
shapes["sphere"] /= np.linalg.norm(shapes["sphere"], axis=1)[:, None]

axes = icosahedron_axes()
print(f"{axes.m} axes, neighbour threshold {axes.psi:.6f}\n")
for name, pts in shapes.items():
    d = hopc_point(np.zeros(3), spherical_support(pts, np.zeros(3), 2.0))
    lam = d.eigensystem.lambdas
    print(f"{name:>6}: eigenvalues {np.round(lam, 4)}  discarded={d.discarded}")
    for j, blk in enumerate(d.blocks):
        state = "pruned" if d.block_mask[j] else f"norm {np.linalg.norm(blk):.4f}"
        top = np.argsort(-blk)[:2]
        print(f"        block {j + 1}: {state:>12}  strongest bins {top.tolist()}")
    print()
