"""Quadrature error of the collision operator on the BKW solution.

Prints sup |d/dt bkw - Q(bkw)| on the disk |v| <= 3 and the collision
moments for a range of node counts.

    python scripts/collision_check.py --vstar 8 16 32 --angles 8 16
"""
import argparse

import numpy as np

from conspinn.collocation import QuadGrid
from conspinn.kinetic import CollisionQuad, bkw, bkw_dt, collision_Q


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--vstar", type=int, nargs="+", default=[8, 16, 32])
    ap.add_argument("--angles", type=int, nargs="+", default=[8, 16])
    ap.add_argument("--times", type=float, nargs="+", default=[0.5, 1.0, 2.0])
    ap.add_argument("--V", type=float, default=5.0)
    args = ap.parse_args()

    g = np.linspace(-3, 3, 25)
    X, Y = np.meshgrid(g, g)
    inside = X**2 + Y**2 <= 9
    disk = np.stack([X[inside], Y[inside]], axis=1)
    outer = QuadGrid.build((24, 24), ((-args.V, args.V), (-args.V, args.V)))
    pts, w = outer.points(), outer.flat_weights()
    tests = (np.ones(len(pts)), pts[:, 0], pts[:, 1], (pts**2).sum(axis=1))

    print(f"{'n_vstar':>8} {'n_angle':>8} {'sup residual':>14} {'max |moment|':>14}")
    for nv in args.vstar:
        for na in args.angles:
            quad = CollisionQuad.build(args.V, nv, na)
            sup = max(np.abs(collision_Q(lambda a, b, t=t: bkw(t, a, b), disk, quad)
                             - bkw_dt(t, disk[:, 0], disk[:, 1])).max() for t in args.times)
            f = lambda a, b: bkw(args.times[0], a, b)
            Q = np.concatenate([collision_Q(f, pts[i:i + 96], quad) for i in range(0, len(pts), 96)])
            mom = max(abs(np.dot(w * m, Q)) for m in tests)
            print(f"{nv:>8d} {na:>8d} {sup:>14.3e} {mom:>14.3e}")


if __name__ == "__main__":
    main()
