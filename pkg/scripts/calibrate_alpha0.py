#!/usr/bin/env python3
"""Minimiser of kappa_1(M + alpha K) on the P2 scalar blocks, and the fitted exponent m in alpha = h^m."""
import argparse
import math

import numpy as np

from tsefem.assembly import assemble_forms
from tsefem.mesh import build_unit_square_mesh
from tsefem.solver import find_alpha0
from tsefem.spaces import build_taylor_hood


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--meshes", default="8,16,32")
    a = ap.parse_args()
    hs, alphas = [], []
    for n in (int(v) for v in a.meshes.split(",")):
        mesh = build_unit_square_mesh(n)
        forms = assemble_forms(build_taylor_hood(mesh))
        r = find_alpha0(forms.scalar_mass, forms.scalar_stiffness)
        h = float(mesh.cell_size.max())
        hs.append(h)
        alphas.append(r.alpha)
        print(f"n={n:3d} h={h:.4g} alpha0={r.alpha:.3e} kappa={r.kappa:.4g} "
              f"m=log(alpha)/log(h)={math.log(r.alpha) / math.log(h):.3f} evaluations={len(r.evaluations)}")
    if len(hs) > 1:
        print(f"fitted slope d log(alpha)/d log(h) = {np.polyfit(np.log(hs), np.log(alphas), 1)[0]:.3f}")


if __name__ == "__main__":
    main()
