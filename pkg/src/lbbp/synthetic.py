"""Procedural test shapes: icospheres, hull spheres, and deformed pairs.

These generators provide closed genus-zero meshes with known structure,
used by the test suite and handy for demos. The deformed-pair builder
returns two meshes with identical connectivity, so the ground-truth
correspondence is the identity index map.
"""

import numpy as np
from scipy.spatial import ConvexHull

from .mesh import TriangleMesh


def icosphere(subdivisions=3, radius=1.0):
    """Unit icosahedron subdivided ``subdivisions`` times, projected to a sphere.

    Vertex counts by level: 12, 42, 162, 642, 2562, ...
    """
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    for _ in range(subdivisions):
        verts, faces = _subdivide(verts, faces)
        verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    return TriangleMesh(verts * radius, faces)


def _subdivide(verts, faces):
    cache = {}
    verts = list(verts)

    def midpoint(a, b):
        key = (min(a, b), max(a, b))
        if key not in cache:
            cache[key] = len(verts)
            verts.append((np.asarray(verts[a]) + np.asarray(verts[b])) / 2.0)
        return cache[key]

    out = []
    for a, b, c in faces:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        out.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]])
    return np.array(verts), np.array(out, dtype=np.int64)


def sphere_mesh(n, seed=0):
    """Sphere triangulated from ``n`` well-spread points via their convex hull.

    A Fibonacci lattice (jittered by ``seed`` rotation) gives an exact
    vertex count, unlike icosphere subdivision.
    """
    i = np.arange(n, dtype=np.float64)
    golden = (1.0 + np.sqrt(5.0)) / 2.0
    theta = 2.0 * np.pi * i / golden + 2.0 * np.pi * (seed % 97) / 97.0
    z = 1.0 - (2.0 * i + 1.0) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    pts = np.column_stack([r * np.cos(theta), r * np.sin(theta), z])
    hull = ConvexHull(pts)
    faces = hull.simplices.copy()
    # orient every face outward (hull simplices come unordered)
    p = pts[faces]
    normals = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    centroids = p.mean(axis=1)
    flip = np.einsum("ij,ij->i", normals, centroids) < 0
    faces[flip] = faces[flip][:, [0, 2, 1]]
    return TriangleMesh(pts, faces)


def radial_bump(points, amplitude=0.4, width=0.8, center=(0.0, 0.0, 1.0)):
    """Smooth radial scale field ``1 + amplitude * exp(-angle^2 / width^2)``.

    ``angle`` is the great-circle angle from ``center``; the field is 1 far
    from the bump and ``1 + amplitude`` at its apex.
    """
    unit = points / np.linalg.norm(points, axis=1, keepdims=True)
    c = np.asarray(center, dtype=np.float64)
    c /= np.linalg.norm(c)
    ang = np.arccos(np.clip(unit @ c, -1.0, 1.0))
    return 1.0 + amplitude * np.exp(-((ang / width) ** 2))


def deformed_sphere_pair(n=1500, amplitude=0.4, width=0.8, seed=0, subdivisions=None):
    """Source sphere plus a radially scaled copy with identical connectivity.

    Parameters
    ----------
    n : int
        Vertex count for the hull-triangulated sphere (ignored when
        ``subdivisions`` is given).
    amplitude, width : float
        Bump parameters for :func:`radial_bump`.
    seed : int
        Lattice rotation seed.
    subdivisions : int, optional
        Use an icosphere of this subdivision level instead of a hull sphere.

    Returns
    -------
    (TriangleMesh, TriangleMesh, np.ndarray)
        Source mesh, deformed target mesh, and the ground-truth
        correspondence (identity index map).
    """
    if subdivisions is not None:
        source = icosphere(subdivisions)
    else:
        source = sphere_mesh(n, seed=seed)
    scale = radial_bump(source.vertices, amplitude=amplitude, width=width)
    target = TriangleMesh(source.vertices * scale[:, None], source.faces)
    truth = np.arange(source.n_vertices, dtype=np.int64)
    return source, target, truth
