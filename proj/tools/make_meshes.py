"""Writes the sample OFF meshes in data/meshes.

icosphere.off: subdivided icosahedron projected to the unit sphere.
genus2.off: marching-cubes surface of an implicit double torus.
"""
import sys
from pathlib import Path

import numpy as np
from skimage import measure


def write_off(path, verts, faces):
    with open(path, "w") as f:
        f.write("OFF\n%d %d 0\n" % (len(verts), len(faces)))
        for v in verts:
            f.write("%.17g %.17g %.17g\n" % tuple(v))
        for t in faces:
            f.write("3 %d %d %d\n" % tuple(t))


def icosphere(levels):
    p = (1 + 5 ** 0.5) / 2
    verts = [(-1, p, 0), (1, p, 0), (-1, -p, 0), (1, -p, 0), (0, -1, p), (0, 1, p),
             (0, -1, -p), (0, 1, -p), (p, 0, -1), (p, 0, 1), (-p, 0, -1), (-p, 0, 1)]
    verts = [np.array(v, float) / np.linalg.norm(v) for v in verts]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    for _ in range(levels):
        cache = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return np.array(verts), np.array(faces)


def double_torus(n):
    # level set of (x (x - 1)^2 (x - 2) + y^2)^2 + z^2 = 0.01 style double torus
    g = np.linspace(-1.6, 1.6, n)
    x, y, z = np.meshgrid(g * 1.4, g, g * 0.6, indexing="ij")
    xs = x + 1.0
    f = (xs * (xs - 1) ** 2 * (xs - 2) + y ** 2) ** 2 + z ** 2 - 0.04
    spacing = (g[1] - g[0]) * np.array([1.4, 1.0, 0.6])
    verts, faces, _, _ = measure.marching_cubes(f, 0.0, spacing=tuple(spacing))
    verts -= verts.mean(axis=0)
    return verts, faces


def euler(verts, faces):
    edges = set()
    for a, b, c in faces:
        for u, v in ((a, b), (b, c), (c, a)):
            edges.add((min(u, v), max(u, v)))
    return len(verts) - len(edges) + len(faces)


def main(out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    v, f = icosphere(2)
    write_off(out / "icosphere.off", v, f)
    print("icosphere", len(v), "vertices, chi =", euler(v, f))
    v, f = double_torus(34)
    write_off(out / "genus2.off", v, f)
    print("genus2", len(v), "vertices, chi =", euler(v, f))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/meshes")
