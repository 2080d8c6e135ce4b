"""Dense point-to-point maps from aligned spectral bases."""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, ParseError


@dataclass
class Correspondence:
    """Per-source-vertex target indices with optional match distances."""

    index_map: np.ndarray
    method: str = "nn"
    distances: np.ndarray = None

    def __len__(self):
        return len(self.index_map)


def point_to_point(source_rows, target_rows, block_size=1024):
    """Match each source row to the Euclidean-nearest target row.

    The search is exact (brute force, blocked for memory); ties break to
    the lowest target index, so results are deterministic.

    Parameters
    ----------
    source_rows : ndarray of shape (n1, k)
        Spectral embedding of the source vertices (rows of the source
        basis).
    target_rows : ndarray of shape (n2, k)
        Rows of the aligned target basis.

    Returns
    -------
    Correspondence
    """
    a = np.asarray(source_rows, dtype=np.float64)
    b = np.asarray(target_rows, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DimensionMismatch(
            f"row sets must share the column count: {a.shape} vs {b.shape}"
        )
    bb = np.einsum("ij,ij->i", b, b)
    idx = np.empty(len(a), dtype=np.int64)
    dist = np.empty(len(a))
    for start in range(0, len(a), block_size):
        chunk = a[start : start + block_size]
        d2 = bb[None, :] - 2.0 * (chunk @ b.T)
        best = np.argmin(d2, axis=1)  # first minimum wins ties
        idx[start : start + block_size] = best
        aa = np.einsum("ij,ij->i", chunk, chunk)
        dist[start : start + block_size] = np.sqrt(
            np.maximum(d2[np.arange(len(chunk)), best] + aa, 0.0)
        )
    return Correspondence(index_map=idx, method="nn", distances=dist)


def functional_map_apply(h, phi, mass, psi_star):
    """Transfer a source function through the aligned bases.

    Computes ``psi_star @ (phi^T M1 h)``: the source function's spectral
    coefficients are re-expanded in the target basis.
    """
    h = np.asarray(h, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    m_diag = mass.diagonal() if hasattr(mass, "diagonal") else np.asarray(mass)
    if h.shape[0] != phi.shape[0] or psi_star.shape[1] != phi.shape[1]:
        raise DimensionMismatch(
            f"shapes disagree: h {h.shape}, phi {phi.shape}, psi {psi_star.shape}"
        )
    weighted = m_diag[:, None] * h[:, None] if h.ndim == 1 else m_diag[:, None] * h
    coeffs = phi.T @ weighted
    out = psi_star @ coeffs
    return out.ravel() if h.ndim == 1 else out


def save_correspondence(path, corr):
    """Write ``src tgt`` pairs, one per line (same format as landmarks)."""
    with open(path, "w", encoding="utf-8") as fh:
        for s, t in enumerate(corr.index_map):
            fh.write(f"{s} {t}\n")


def load_correspondence(path):
    from .mesh import load_landmarks

    pairs = load_landmarks(path)
    if len(pairs) == 0:
        raise ParseError(f"{path}: empty correspondence file")
    idx = np.full(int(pairs[:, 0].max()) + 1, -1, dtype=np.int64)
    idx[pairs[:, 0]] = pairs[:, 1]
    if (idx < 0).any():
        raise ParseError(f"{path}: missing source vertices in correspondence")
    return Correspondence(index_map=idx, method="file")
