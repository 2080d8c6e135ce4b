"""Smallest eigenpairs of ``S phi = lambda B phi`` with diagonal positive B.

B is either the lumped mass M or a conformally weighted ``diag(w^2) M``;
because it is diagonal, the generalized problem reduces exactly to a
standard symmetric one on ``B^-1/2 S B^-1/2`` and shift-invert Lanczos
(ARPACK) targets the low end of the spectrum.
"""

import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceFailure, DimensionMismatch, InvalidK
from .stiefel import CurvilinearParams, minimize_on_stiefel


@dataclass
class Eigensystem:
    """First ``k`` eigenpairs of a (possibly weighted) LB eigenproblem.

    Eigenvalues are ascending and nonnegative; eigenfunctions are
    B-orthonormal columns with a deterministic sign (the entry of largest
    magnitude in each column is nonnegative, first index winning ties).
    """

    values: np.ndarray
    functions: np.ndarray
    b_diag: np.ndarray = field(repr=False)

    @property
    def k(self):
        return len(self.values)

    @property
    def n(self):
        return self.functions.shape[0]


def _as_b_diag(b):
    if sp.issparse(b):
        d = b.diagonal()
        off = abs(b).sum() - abs(sp.csr_array(sp.diags_array(d))).sum()
        if off > 1e-12 * max(abs(d).sum(), 1.0):
            raise DimensionMismatch("B must be diagonal")
        return np.asarray(d, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if b.ndim == 2:
        return np.diag(b).copy()
    return b


def fix_signs(columns):
    """Flip column signs so the largest-magnitude entry is nonnegative."""
    cols = np.array(columns, dtype=np.float64)
    idx = np.argmax(np.abs(cols), axis=0)
    flip = cols[idx, np.arange(cols.shape[1])] < 0
    cols[:, flip] *= -1.0
    return cols


def solve_eigs(stiffness, b, k, tol=1e-8, maxiter_factor=50, residual_tol=1e-6):
    """First ``k`` eigenpairs of ``S phi = lambda B phi``.

    Parameters
    ----------
    stiffness : sparse matrix of shape (n, n)
        Positive semidefinite stiffness.
    b : sparse diagonal matrix or array
        Positive diagonal right-hand operator (mass or weighted mass).
    k : int
        Number of eigenpairs, ``1 <= k < n``.
    tol : float
        ARPACK relative tolerance.
    maxiter_factor : int
        ARPACK iteration cap is ``maxiter_factor * k`` restarts.
    residual_tol : float
        Per-column acceptance bound on ``||S phi - lambda B phi||``.

    Returns
    -------
    Eigensystem

    Raises
    ------
    InvalidK
        ``k`` out of range.
    ConvergenceFailure
        ARPACK failed or residuals exceed the bound.
    """
    d = _as_b_diag(b)
    n = len(d)
    k = int(k)
    if not 1 <= k < n:
        raise InvalidK(f"k must satisfy 1 <= k < n = {n}, got {k}")
    if (d <= 0).any():
        raise InvalidK("B must have strictly positive diagonal")

    rootinv = 1.0 / np.sqrt(d)
    s_hat = sp.csr_array(stiffness).multiply(rootinv[:, None]).multiply(rootinv[None, :])
    s_hat = sp.csc_matrix(0.5 * (s_hat + s_hat.T))
    scale = max(abs(s_hat.diagonal()).mean(), 1e-30)
    # deterministic start vector keeps repeated runs byte-identical
    v0 = np.random.default_rng(1234).standard_normal(n)
    try:
        vals, vecs = spla.eigsh(
            s_hat,
            k=k,
            sigma=-0.01 * scale,
            which="LM",
            v0=v0,
            tol=tol,
            maxiter=maxiter_factor * k,
        )
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceFailure(f"ARPACK did not converge: {exc}") from exc

    order = np.argsort(vals, kind="stable")
    vals = vals[order]
    vecs = vecs[:, order]
    # kernel eigenvalue comes out as round-off noise of either sign
    vals = np.where(np.abs(vals) <= 1e-8 * (1.0 + scale), np.maximum(vals, 0.0), vals)
    if (vals < 0).any():
        raise ConvergenceFailure(f"negative eigenvalue {vals.min()} beyond round-off")
    funcs = fix_signs(vecs * rootinv[:, None])

    resid = stiffness @ funcs - (d[:, None] * funcs) * vals[None, :]
    bound = residual_tol * (1.0 + abs(vals[-1]))
    worst = np.linalg.norm(resid, axis=0).max()
    if worst > bound:
        raise ConvergenceFailure(
            f"eigen residual {worst:.3e} exceeds bound {bound:.3e}"
        )
    return Eigensystem(values=vals, functions=funcs, b_diag=d)


def eig_via_stiefel(apply_op, k, warm_start, max_iters=2000, params=None):
    """Trace minimization ``min tr(X^T A X), X^T X = I`` by curvilinear search.

    This is the ambiguity-free eigensolver used for reinitialization:
    warm-starting at the current basis keeps the signs and the ordering
    already resolved by the outer optimization, which a black-box solver
    would scramble.

    Parameters
    ----------
    apply_op : callable
        Maps an (n, k) block to ``A @ block`` for the symmetric operator A.
    k : int
        Number of columns.
    warm_start : ndarray of shape (n, k)
        Orthonormal columns to start from.
    max_iters : int
        Cap on curvilinear iterations.
    params : CurvilinearParams, optional

    Returns
    -------
    (ndarray, list of float)
        Minimizing columns and the trace-energy history (non-increasing).
    """
    x0 = np.asarray(warm_start, dtype=np.float64)
    if x0.ndim != 2 or x0.shape[1] != k:
        raise InvalidK(f"warm start must be (n, {k}), got {x0.shape}")
    gram = x0.T @ x0
    if np.abs(gram - np.eye(k)).max() > 1e-8:
        raise InvalidK("warm start columns are not orthonormal")

    def fun_grad(x):
        ax = apply_op(x)
        return float(np.sum(x * ax)), 2.0 * ax

    params = params or CurvilinearParams(gtol=1e-12)
    x, history, _ = minimize_on_stiefel(
        fun_grad, x0, max_iters=max_iters, params=params, monotone=True
    )
    return x, history


# -- serialization ----------------------------------------------------------------

_MAGIC = b"LBBPEIG1"


def save_eigensystem(path, eigsys):
    """Binary layout: magic, int64 header (n, k), float64 values, column-major functions."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<qq", eigsys.n, eigsys.k))
        fh.write(np.ascontiguousarray(eigsys.values, dtype="<f8").tobytes())
        fh.write(np.asfortranarray(eigsys.functions.astype("<f8")).tobytes(order="F"))


def load_eigensystem(path, b_diag=None):
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise ConvergenceFailure(f"{path}: not an eigensystem file")
        n, k = struct.unpack("<qq", fh.read(16))
        vals = np.frombuffer(fh.read(8 * k), dtype="<f8").copy()
        funcs = np.frombuffer(fh.read(8 * n * k), dtype="<f8").reshape(
            (n, k), order="F"
        ).copy()
    if b_diag is None:
        b_diag = np.full(n, np.nan)
    return Eigensystem(values=vals, functions=funcs, b_diag=b_diag)


def export_eigensystem_csv(path, eigsys):
    """Debug CSV: first row eigenvalues, then one row per vertex."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(f"{v:.17g}" for v in eigsys.values) + "\n")
        for row in eigsys.functions:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
