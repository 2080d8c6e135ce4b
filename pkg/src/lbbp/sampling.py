"""Farthest-point sampling and nested vertex hierarchies."""

from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import dijkstra

from .errors import InvalidLevelSpec
from .geodesics import distance_graph, nearest_source_partition


@dataclass(frozen=True)
class SampleHierarchy:
    """Nested vertex subsets with aggregated vertex masses.

    ``levels[0]`` is every vertex; each deeper level is a strict subset of
    the previous one, ordered by selection. ``masses[i][j]`` is the total
    vertex area of the region closest to ``levels[i][j]``; each level's
    masses sum to the full surface area.
    """

    levels: tuple
    masses: tuple

    def __post_init__(self):
        for a, b in zip(self.levels, self.levels[1:]):
            if not np.isin(b, a).all():
                raise InvalidLevelSpec("hierarchy levels are not nested")


def farthest_point_sample(mesh, counts, seed):
    """Greedy geodesic farthest-point sampling into a nested hierarchy.

    Parameters
    ----------
    mesh : TriangleMesh
        Connected mesh to sample.
    counts : sequence of int
        Strictly decreasing level sizes; ``counts[0]`` must equal the
        vertex count (level 0 keeps everything).
    seed : int
        Index of the seed vertex. The first retained point is the vertex
        farthest from the seed; subsequent points maximize the minimal
        distance to the points retained so far. Ties break toward the
        lowest index, so the result is fully deterministic.

    Returns
    -------
    SampleHierarchy
    """
    n = mesh.n_vertices
    counts = [int(c) for c in counts]
    if not counts or counts[0] != n:
        raise InvalidLevelSpec(f"counts[0] must equal n_vertices ({n})")
    if any(b >= a for a, b in zip(counts, counts[1:])):
        raise InvalidLevelSpec("counts must be strictly decreasing")
    if counts[-1] < 1:
        raise InvalidLevelSpec("levels must be nonempty")
    if not 0 <= int(seed) < n:
        raise InvalidLevelSpec(f"seed vertex {seed} out of range [0, {n})")

    areas = mesh.vertex_areas()
    levels = [np.arange(n, dtype=np.int64)]
    masses = [areas.copy()]
    if len(counts) > 1:
        order = _fps_order(mesh, counts[1], int(seed))
        for c in counts[1:]:
            lev = order[:c]
            _, assign = nearest_source_partition(mesh, lev)
            agg = np.bincount(assign, weights=areas, minlength=c)
            levels.append(lev)
            masses.append(agg)
    return SampleHierarchy(tuple(levels), tuple(masses))


def _fps_order(mesh, count, seed):
    g = distance_graph(mesh)
    d_seed = dijkstra(g, directed=False, indices=seed)
    if np.isinf(d_seed).any():
        from .errors import DisconnectedMesh

        raise DisconnectedMesh("mesh is not connected")
    order = [int(np.argmax(d_seed))]
    mind = dijkstra(g, directed=False, indices=order[0])
    while len(order) < count:
        nxt = int(np.argmax(mind))
        order.append(nxt)
        mind = np.minimum(mind, dijkstra(g, directed=False, indices=nxt))
    return np.array(order, dtype=np.int64)
