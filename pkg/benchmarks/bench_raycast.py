"""Compiled vs numpy ray caster on full default-size frames.

    python3 benchmarks/bench_raycast.py [--repeat N]
"""

import argparse
import math
import timeit

import numpy as np

from depthnav import sim
from depthnav.kernels import _raycast_py

try:
    from depthnav.kernels import _raycast as compiled
except ImportError:
    compiled = None


def case(layout, h=360, w=640):
    scene = layout.world.scene
    cam = layout.world.camera(h, w)
    pose = layout.start
    boxes = np.array([[b.xmin, b.xmax, b.ymin, b.ymax, b.height] for b in scene.boxes]).reshape(-1, 5)
    cyls = np.array([[c.cx, c.cy, c.radius, c.height] for c in scene.cylinders]).reshape(-1, 4)
    rad = math.radians(pose.heading)
    return (
        np.arange(h, dtype=np.int64), np.arange(w, dtype=np.int64), h, w,
        pose.x, pose.y, cam.height, math.cos(rad), math.sin(rad), cam.focal,
        boxes, cyls, scene.far_limit,
    )


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    layouts = sim.corridor_suite(10)
    cases = [case(l) for l in layouts]
    impls = [("numpy", _raycast_py.raycast)]
    if compiled is not None:
        impls.insert(0, ("cython", compiled.raycast))
        for c in cases:
            assert np.array_equal(compiled.raycast(*c), _raycast_py.raycast(*c))
    else:
        print("compiled kernel not built; timing numpy only")
    results = {}
    for name, fn in impls:
        t = min(timeit.repeat(lambda: [fn(*c) for c in cases], number=1, repeat=args.repeat))
        results[name] = t / len(cases)
        print(f"{name:7s} {results[name] * 1e3:8.2f} ms / 360x640 frame")
    if len(results) == 2:
        print(f"speedup {results['numpy'] / results['cython']:.1f}x")


if __name__ == "__main__":
    main()
