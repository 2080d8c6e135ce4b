"""Linear FEM operators on triangle meshes: lumped mass, cotangent stiffness,
and Crank-Nicolson heat stepping (optionally under a conformal weight)."""

import logging

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import LinearSolveFailure

logger = logging.getLogger(__name__)


def assemble_mass(mesh):
    """Lumped (diagonal) mass matrix: ``M_ii`` is one third of the one-ring area.

    Returns
    -------
    scipy.sparse.csr_array of shape (n, n)
        Diagonal, strictly positive; ``trace(M)`` equals the surface area.
    """
    return sp.csr_array(sp.diags_array(mesh.vertex_areas()))


def _cotangents_per_face(mesh):
    """Cotangent of the angle at each face corner, shape (t, 3)."""
    p = mesh.vertices[mesh.faces]
    cots = np.empty((len(mesh.faces), 3))
    for c in range(3):
        a = p[:, (c + 1) % 3] - p[:, c]
        b = p[:, (c + 2) % 3] - p[:, c]
        cots[:, c] = np.einsum("ij,ij->i", a, b) / (2.0 * mesh.face_areas)
    return cots


def assemble_stiffness(mesh):
    """Cotangent stiffness matrix (positive semidefinite, rows sum to zero).

    Off-diagonal entries on edges are ``-(cot a + cot b) / 2`` where the
    angles sit opposite the edge; diagonals make each row sum to zero.
    Obtuse triangles yield positive off-diagonal (negative-weight) entries
    and are kept as-is; a warning is logged if they dominate.

    Returns
    -------
    scipy.sparse.csr_array of shape (n, n)
    """
    t = mesh.faces
    cots = _cotangents_per_face(mesh)
    # edge (c+1, c+2) lies opposite corner c
    ii, jj, vv = [], [], []
    for c in range(3):
        a, b = t[:, (c + 1) % 3], t[:, (c + 2) % 3]
        w = -0.5 * cots[:, c]
        ii.extend([a, b])
        jj.extend([b, a])
        vv.extend([w, w])
    i = np.concatenate(ii)
    j = np.concatenate(jj)
    v = np.concatenate(vv)
    n = mesh.n_vertices
    s = sp.coo_array((v, (i, j)), shape=(n, n)).tocsr()
    s.sum_duplicates()
    diag = -np.asarray(s.sum(axis=1)).ravel()
    s = s + sp.csr_array(sp.diags_array(diag))

    offdiag = s.copy()
    offdiag.setdiag(0.0)
    neg_frac = float((offdiag.data > 1e-14).sum()) / max(offdiag.nnz, 1)
    if neg_frac > 0.2:
        logger.warning(
            "%.0f%% of cotangent edge weights are negative (obtuse-heavy mesh)",
            100 * neg_frac,
        )
    return s


def weighted_mass_diag(mass, weight=None):
    """Diagonal of ``diag(w^2) @ M`` as a vector; ``weight`` is the w^2 field."""
    m = mass.diagonal()
    if weight is None:
        return m
    weight = np.asarray(weight, dtype=np.float64)
    if weight.shape != m.shape:
        raise LinearSolveFailure(
            f"weight shape {weight.shape} does not match mesh size {m.shape}"
        )
    if (weight <= 0).any():
        raise LinearSolveFailure("heat-step weight must be strictly positive")
    return m * weight


class HeatStepper:
    """Prefactored Crank-Nicolson stepper for ``(M_w + dt/2 S) u+ = (M_w - dt/2 S) u``.

    ``M_w = diag(w^2) M`` recomputes diffusion under a conformal factor;
    with no weight this is plain heat flow. The implicit matrix is SPD, so
    one sparse factorization serves any number of steps.
    """

    def __init__(self, mass, stiffness, dt, weight=None):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.dt = float(dt)
        mw = weighted_mass_diag(mass, weight)
        s = stiffness.tocsr()
        half = 0.5 * self.dt
        lhs = sp.csc_matrix(sp.diags_array(mw) + half * s)
        self._rhs = sp.csr_array(sp.diags_array(mw) - half * s)
        try:
            self._solve = spla.factorized(lhs)
        except RuntimeError as exc:
            raise LinearSolveFailure(f"heat-step factorization failed: {exc}") from exc

    def step(self, u, n_steps=1):
        u = np.asarray(u, dtype=np.float64)
        for _ in range(n_steps):
            u = self._solve(self._rhs @ u)
            if not np.isfinite(u).all():
                raise LinearSolveFailure("heat step produced non-finite values")
        return u


def heat_step(mass, stiffness, u, dt, weight=None):
    """Single Crank-Nicolson heat step; see :class:`HeatStepper`.

    The scheme conserves the weighted mass ``1^T M_w u`` exactly (up to
    solver round-off) because stiffness rows sum to zero.
    """
    return HeatStepper(mass, stiffness, dt, weight=weight).step(u)


def save_matrix_market(path, matrix):
    """Export a sparse operator in MatrixMarket format (debugging aid)."""
    from scipy.io import mmwrite

    mmwrite(str(path), sp.coo_matrix(matrix))
