"""Triangle-mesh representation, validation, and ASCII file I/O.

The mesh is the geometric substrate for every operator in the package.
Instances are immutable after construction and safe to share across
threads; derived quantities (areas, adjacency, edge tables) are computed
once and cached.
"""

import logging
import os

import numpy as np

from .errors import IndexOutOfRange, ParseError, TopologyError

logger = logging.getLogger(__name__)

# faces with area below this fraction of bbox_diagonal^2 are degenerate
DEGENERATE_AREA_TOL = 1e-12


class TriangleMesh:
    """An oriented triangle mesh embedded in R^3.

    Parameters
    ----------
    vertices : array_like of shape (n, 3)
        Vertex coordinates.
    faces : array_like of shape (t, 3)
        Vertex-index triples, consistently oriented (counter-clockwise
        seen from outside for closed surfaces).
    allow_boundary : bool
        If False (default), edges incident to a single face raise
        :class:`TopologyError`. Closed genus-zero surfaces are the
        primary setting; boundaries are supported behind this flag.

    Raises
    ------
    IndexOutOfRange
        A face references a nonexistent vertex.
    TopologyError
        Degenerate face, non-manifold edge, inconsistent orientation, or
        (without ``allow_boundary``) a boundary edge.
    """

    def __init__(self, vertices, faces, allow_boundary=False):
        v = np.ascontiguousarray(vertices, dtype=np.float64)
        t = np.ascontiguousarray(faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ParseError(f"vertices must have shape (n, 3), got {v.shape}")
        if t.ndim != 2 or t.shape[1] != 3:
            raise ParseError(f"faces must have shape (t, 3), got {t.shape}")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise IndexOutOfRange(
                f"face index out of range [0, {len(v)}): "
                f"min {t.min()}, max {t.max()}"
            )
        self.vertices = v
        self.faces = t
        self.allow_boundary = bool(allow_boundary)
        self._validate_geometry()
        self._build_edges()
        self._build_rings()
        self.vertices.setflags(write=False)
        self.faces.setflags(write=False)

    # -- construction helpers -------------------------------------------------

    def _validate_geometry(self):
        p = self.vertices[self.faces]
        cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        self.face_areas = 0.5 * np.linalg.norm(cross, axis=1)
        bbox = self.vertices.max(axis=0) - self.vertices.min(axis=0)
        diag2 = float(bbox @ bbox)
        if diag2 == 0.0:
            raise TopologyError("mesh has zero spatial extent")
        bad = np.nonzero(self.face_areas < DEGENERATE_AREA_TOL * diag2)[0]
        if bad.size:
            raise TopologyError(
                f"{bad.size} degenerate face(s), first at index {bad[0]}"
            )
        self.face_areas.setflags(write=False)

    def _build_edges(self):
        t = self.faces
        # directed half-edges in face order; opposite vertex is the third one
        he = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        opp = np.concatenate([t[:, 2], t[:, 0], t[:, 1]])
        face_of = np.tile(np.arange(len(t)), 3)

        # orientation: every directed edge must be unique
        n = len(self.vertices)
        he_key = he[:, 0] * n + he[:, 1]
        if len(np.unique(he_key)) != len(he_key):
            raise TopologyError("inconsistent face orientation (repeated half-edge)")

        und = np.sort(he, axis=1)
        und_key = und[:, 0] * n + und[:, 1]
        order = np.argsort(und_key, kind="stable")
        key_sorted = und_key[order]
        uniq_key, start, counts = np.unique(
            key_sorted, return_index=True, return_counts=True
        )
        if counts.max(initial=0) > 2:
            raise TopologyError("non-manifold edge (shared by more than 2 faces)")
        boundary = counts == 1
        if boundary.any() and not self.allow_boundary:
            raise TopologyError(
                f"{int(boundary.sum())} boundary edge(s); "
                "pass allow_boundary=True to accept open meshes"
            )

        self.edges = np.column_stack([uniq_key // n, uniq_key % n])
        self.edge_is_boundary = boundary
        # per edge: incident faces and opposite vertices (second slot -1 on boundary)
        ef = np.full((len(uniq_key), 2), -1, dtype=np.int64)
        eo = np.full((len(uniq_key), 2), -1, dtype=np.int64)
        first = order[start]
        ef[:, 0] = face_of[first]
        eo[:, 0] = opp[first]
        second = order[np.minimum(start + 1, len(order) - 1)]
        interior = ~boundary
        ef[interior, 1] = face_of[second[interior]]
        eo[interior, 1] = opp[second[interior]]
        self.edge_faces = ef
        self.edge_opposites = eo
        for a in (self.edges, self.edge_is_boundary, ef, eo):
            a.setflags(write=False)

    def _build_rings(self):
        # one-ring face list per vertex, CSR-style
        t = self.faces
        vid = t.reshape(-1)
        fid = np.repeat(np.arange(len(t)), 3)
        order = np.argsort(vid, kind="stable")
        counts = np.bincount(vid, minlength=len(self.vertices))
        self._ring_offsets = np.concatenate([[0], np.cumsum(counts)])
        self._ring_faces = fid[order]
        self._ring_offsets.setflags(write=False)
        self._ring_faces.setflags(write=False)

    # -- basic queries ---------------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    @property
    def is_closed(self):
        return not bool(self.edge_is_boundary.any())

    @property
    def surface_area(self):
        return float(self.face_areas.sum())

    def vertex_face_ring(self, i):
        """Indices of the faces incident to vertex ``i``."""
        return self._ring_faces[self._ring_offsets[i] : self._ring_offsets[i + 1]]

    def vertex_areas(self):
        """Lumped vertex areas: one third of the incident face areas.

        Returns
        -------
        np.ndarray of shape (n,)
            Strictly positive; sums exactly to the total surface area.
        """
        out = np.zeros(self.n_vertices)
        np.add.at(out, self.faces.reshape(-1), np.repeat(self.face_areas / 3.0, 3))
        return out

    def first_ring_areas(self):
        """Total area of the one-ring (all incident faces) per vertex."""
        out = np.zeros(self.n_vertices)
        np.add.at(out, self.faces.reshape(-1), np.repeat(self.face_areas, 3))
        return out

    def edge_lengths(self):
        d = self.vertices[self.edges[:, 0]] - self.vertices[self.edges[:, 1]]
        return np.linalg.norm(d, axis=1)

    def log_non_delaunay(self):
        """Count edges violating the local Delaunay condition and log them.

        Non-Delaunay edges (opposite angles summing past pi) are legal
        input; they only degrade cotangent-weight positivity.
        """
        from .fem import _cotangents_per_face  # local import to avoid cycle

        cots = _cotangents_per_face(self)
        w = np.zeros(len(self.edges))
        eidx = self._edge_index_map()
        t = self.faces
        for c, (a, b) in zip(
            (cots[:, 2], cots[:, 0], cots[:, 1]),
            ((t[:, 0], t[:, 1]), (t[:, 1], t[:, 2]), (t[:, 2], t[:, 0])),
        ):
            np.add.at(w, eidx[np.minimum(a, b), np.maximum(a, b)], c)
        bad = int((w < 0).sum())
        if bad:
            logger.info("mesh has %d non-Delaunay edge(s) of %d", bad, len(w))
        return bad

    def _edge_index_map(self):
        import scipy.sparse as sp

        e = self.edges
        n = self.n_vertices
        return sp.csr_array(
            (np.arange(len(e)), (e[:, 0], e[:, 1])), shape=(n, n), dtype=np.int64
        )


# -- file I/O -------------------------------------------------------------------


def _data_lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if line:
                yield line


def load_mesh(path, fmt=None, allow_boundary=False):
    """Read a triangle mesh from an ASCII OFF, OBJ, or PLY file.

    Parameters
    ----------
    path : str or Path
        File to read.
    fmt : {"off", "obj", "ply", None}
        Explicit format; by default inferred from the file extension.
    allow_boundary : bool
        Forwarded to :class:`TriangleMesh`.

    Returns
    -------
    TriangleMesh
        Validated mesh with adjacency built.
    """
    if fmt is None:
        fmt = os.path.splitext(str(path))[1].lstrip(".").lower()
    fmt = fmt.lower()
    if fmt == "off":
        v, t = _read_off(path)
    elif fmt == "obj":
        v, t = _read_obj(path)
    elif fmt == "ply":
        v, t = _read_ply(path)
    else:
        raise ParseError(f"unsupported mesh format {fmt!r}")
    try:
        return TriangleMesh(v, t, allow_boundary=allow_boundary)
    except IndexOutOfRange as exc:
        raise ParseError(f"{path}: {exc}") from exc


def _read_off(path):
    lines = _data_lines(path)
    try:
        header = next(lines)
    except StopIteration:
        raise ParseError(f"{path}: empty file") from None
    tokens = []
    if header.upper().startswith("OFF"):
        rest = header[3:].split()
        tokens.extend(rest)
    else:
        tokens.extend(header.split())
    try:
        while len(tokens) < 3:
            tokens.extend(next(lines).split())
        nv, nf, _ = (int(x) for x in tokens[:3])
        vals = tokens[3:]
        while len(vals) < 3 * nv:
            vals.extend(next(lines).split())
        verts = np.array(vals[: 3 * nv], dtype=np.float64).reshape(nv, 3)
        vals = vals[3 * nv :]
        faces = []
        while len(faces) < nf:
            row = vals if vals else next(lines).split()
            vals = []
            cnt = int(row[0])
            if cnt != 3:
                raise ParseError(f"{path}: only triangular faces supported")
            if len(row) < 1 + cnt:
                raise ParseError(f"{path}: truncated face record")
            faces.append([int(x) for x in row[1 : 1 + cnt]])
    except (ValueError, StopIteration) as exc:
        raise ParseError(f"{path}: malformed OFF file ({exc})") from exc
    return verts, np.array(faces, dtype=np.int64).reshape(-1, 3)


def _read_obj(path):
    verts, faces = [], []
    try:
        for line in _data_lines(path):
            parts = line.split()
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                if len(parts) != 4:
                    raise ParseError(f"{path}: only triangular faces supported")
                # tokens may be v, v/vt, v/vt/vn; indices are 1-based
                faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    except (ValueError, IndexError) as exc:
        raise ParseError(f"{path}: malformed OBJ file ({exc})") from exc
    if not verts:
        raise ParseError(f"{path}: no vertices found")
    return np.array(verts, dtype=np.float64), np.array(faces, dtype=np.int64).reshape(
        -1, 3
    )


def _read_ply(path):
    with open(path, "r", encoding="utf-8") as fh:
        line = fh.readline().strip()
        if line != "ply":
            raise ParseError(f"{path}: missing ply magic")
        nv = nf = None
        fmt_ok = False
        props_before_xyz = 0
        counting_vertex_props = False
        vertex_props = []
        while True:
            line = fh.readline()
            if not line:
                raise ParseError(f"{path}: unterminated header")
            parts = line.split()
            if not parts or parts[0] == "comment":
                continue
            if parts[0] == "format":
                fmt_ok = parts[1] == "ascii"
            elif parts[0] == "element":
                counting_vertex_props = parts[1] == "vertex"
                if parts[1] == "vertex":
                    nv = int(parts[2])
                elif parts[1] == "face":
                    nf = int(parts[2])
            elif parts[0] == "property" and counting_vertex_props:
                if parts[1] != "list":
                    vertex_props.append(parts[2])
            elif parts[0] == "end_header":
                break
        if not fmt_ok:
            raise ParseError(f"{path}: only ascii PLY supported")
        if nv is None or nf is None:
            raise ParseError(f"{path}: missing vertex/face elements")
        try:
            ix, iy, iz = (vertex_props.index(c) for c in ("x", "y", "z"))
        except ValueError:
            raise ParseError(f"{path}: vertex element lacks x/y/z") from None
        verts = np.empty((nv, 3))
        try:
            for i in range(nv):
                row = fh.readline().split()
                verts[i] = (float(row[ix]), float(row[iy]), float(row[iz]))
            faces = []
            for _ in range(nf):
                row = fh.readline().split()
                cnt = int(row[0])
                if cnt != 3:
                    raise ParseError(f"{path}: only triangular faces supported")
                faces.append([int(x) for x in row[1:4]])
        except (ValueError, IndexError) as exc:
            raise ParseError(f"{path}: malformed PLY body ({exc})") from exc
    return verts, np.array(faces, dtype=np.int64).reshape(-1, 3)


def save_off(path, mesh):
    """Write a mesh to an ASCII OFF file (full float precision)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("OFF\n")
        fh.write(f"{mesh.n_vertices} {mesh.n_faces} 0\n")
        for p in mesh.vertices:
            fh.write(f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")
        for f in mesh.faces:
            fh.write(f"3 {f[0]} {f[1]} {f[2]}\n")


def load_landmarks(path):
    """Read landmark pairs: one ``src tgt`` 0-based pair per line.

    Lines starting with ``#`` (or trailing ``#`` comments) are ignored.

    Returns
    -------
    np.ndarray of shape (m, 2), dtype int64
    """
    pairs = []
    for line in _data_lines(path):
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"{path}: expected 'src tgt' pairs, got {line!r}")
        try:
            pairs.append((int(parts[0]), int(parts[1])))
        except ValueError as exc:
            raise ParseError(f"{path}: non-integer landmark ({line!r})") from exc
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def save_landmarks(path, pairs):
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    with open(path, "w", encoding="utf-8") as fh:
        for s, t in pairs:
            fh.write(f"{s} {t}\n")
