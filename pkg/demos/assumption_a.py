"""Ellipticity constants and the largest admissible delta for three Lame media.

Run from the repository root:  python3 demos/assumption_a.py
"""

import math

from ewdecay.geometry import gen_annulus_mesh, gen_shell_mesh
from ewdecay.tensor import (ellipticity_bounds, exponential_profile, lame_tensor, max_delta,
                            quadratic_profile, scan_delta)

R1 = 2.0
for dim, mesh in ((2, gen_annulus_mesh(1.0, R1, 12, 96)), (3, gen_shell_mesh(1.0, R1, 3, 4))):
    pts = mesh.sample_points()
    media = {
        "constant mu": (lame_tensor(1.0, 1.0, dim), 1.0),
        "mu = 1 + r^2/4": (lame_tensor(1.0, quadratic_profile(1.0, 0.25), dim),
                           1.0 / (1.0 + 0.25 * R1**2)),
        # trace direction binds at r = R1: 1 + r mu / (n lambda + 2 mu)
        "mu = exp(-r)": (lame_tensor(1.0, exponential_profile(1.0, 1.0), dim),
                         1 + 2 * math.exp(-2) / (dim + 2 * math.exp(-2))),
    }
    print(f"dim = {dim}, {len(pts)} sample points")
    for name, (field, exact) in media.items():
        b = ellipticity_bounds(field, pts)
        res = max_delta(field, pts, extend=True)
        scan = scan_delta(field, pts, extend=True)
        ref = f"  closed form {exact:.6f}"
        print(f"  {name:16s} alpha = {b.alpha:.4f}  beta = {b.beta:.4f}  "
              f"delta_max = {res.delta_max:.6f}  grid scan = {scan:.3f}{ref}")
