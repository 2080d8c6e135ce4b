"""Independent reference implementations used to freeze expected values.

Everything here is written the slow, obvious way (dense algebra, loops,
brute force) and deliberately avoids calling the code paths it checks.
"""

import numpy as np
import scipy.linalg as sla


def dense_energy(w, psibar, m1_diag, s2_dense, m2_diag, phi, f, g, area,
                 r1, r2, r3):
    """Energy breakdown computed from scratch with dense matrices."""
    n = len(m2_diag)
    k = phi.shape[1]
    l_mat = np.diag(np.sqrt(m2_diag))
    w_mat = np.diag(w)
    coeff_mat = f.T @ np.diag(m1_diag) @ phi - g.T @ w_mat @ l_mat @ psibar
    coeff = float(np.sum(coeff_mat**2))
    linv = np.linalg.inv(l_mat)
    winv = np.linalg.inv(w_mat)
    sbar = linv @ winv @ s2_dense @ winv @ linv
    eigen = float(np.trace(psibar.T @ sbar @ psibar))
    harmonic = float(w @ s2_dense @ w)
    area_residual = float(w @ np.diag(m2_diag) @ w) - area
    total = 0.5 * (r1 * coeff + r2 * eigen + r3 * harmonic)
    return dict(
        coeff=coeff, eigen=eigen, harmonic=harmonic,
        area_residual=area_residual, total=total,
    )


def central_difference_grad(fun, x, eps, directions):
    """Directional derivatives of ``fun`` by central differences."""
    out = []
    for d in directions:
        out.append((fun(x + eps * d) - fun(x - eps * d)) / (2.0 * eps))
    return np.array(out)


def dense_generalized_eigs(s_dense, b_diag, k):
    """First k eigenpairs of S v = lambda diag(b) v via dense factorization."""
    vals, vecs = sla.eigh(s_dense, np.diag(b_diag))
    return vals[:k], vecs[:, :k]


def brute_force_fps(dist_matrix, seed, count):
    """Greedy farthest-point order from a full pairwise distance matrix."""
    first = int(np.argmax(dist_matrix[seed]))
    order = [first]
    mind = dist_matrix[first].copy()
    while len(order) < count:
        nxt = int(np.argmax(mind))
        order.append(nxt)
        mind = np.minimum(mind, dist_matrix[nxt])
    return order


def dense_heat_expm(m_diag, s_dense, u0, t):
    """Exact heat solution ``exp(-t M^-1 S) u0`` via dense expm."""
    gen = -np.linalg.solve(np.diag(m_diag), s_dense)
    return sla.expm(t * gen) @ u0


def face_gradient_dirichlet(mesh, u):
    """Dirichlet energy from per-face linear gradients (independent of S).

    On each triangle the linear interpolant's gradient is
    ``sum_i u_i grad(e_i)`` with ``grad(e_i)`` the rotated opposite edge
    over twice the area; the energy is ``sum_faces |grad u|^2 area``.
    """
    total = 0.0
    v = mesh.vertices
    for (i, j, k), a in zip(mesh.faces, mesh.face_areas):
        pi, pj, pk = v[i], v[j], v[k]
        normal = np.cross(pj - pi, pk - pi)
        normal /= np.linalg.norm(normal)
        # grad of hat function at i: rotate opposite edge (k - j) by 90 deg
        gi = np.cross(normal, pk - pj) / (2.0 * a)
        gj = np.cross(normal, pi - pk) / (2.0 * a)
        gk = np.cross(normal, pj - pi) / (2.0 * a)
        grad = u[i] * gi + u[j] * gj + u[k] * gk
        total += float(grad @ grad) * a
    return total


def pairwise_nn(a, b):
    """O(n^2) nearest neighbor with explicit loops (ties to lowest index)."""
    out = np.empty(len(a), dtype=np.int64)
    for i, row in enumerate(a):
        d = np.sqrt(((b - row) ** 2).sum(axis=1))
        out[i] = int(np.argmin(d))
    return out
