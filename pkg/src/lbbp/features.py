"""Corresponding feature functions and the subsampling diffusion basis.

Feature columns on the source and target are aligned by landmark order:
column j of F and column j of G always come from the j-th landmark pair,
built with identical kind and snapshot times.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import (
    DuplicateLandmark,
    EmptyFeatureSet,
    IllConditionedGram,
    IndexOutOfRange,
)
from .fem import HeatStepper

logger = logging.getLogger(__name__)

KIND_INDICATOR = "indicator"
KIND_HEAT = "heat"


@dataclass
class FeatureSet:
    """Feature columns plus the provenance needed to regenerate them."""

    kind: str
    values: np.ndarray
    landmarks: np.ndarray
    times: tuple = ()
    dt: float = 0.0

    @property
    def n_features(self):
        return self.values.shape[1]


def _check_landmarks(n, landmarks):
    landmarks = np.asarray(landmarks, dtype=np.int64).ravel()
    if landmarks.size == 0:
        raise EmptyFeatureSet("no landmarks given")
    if landmarks.min() < 0 or landmarks.max() >= n:
        raise IndexOutOfRange(
            f"landmark index out of range [0, {n}): {landmarks.min()}..{landmarks.max()}"
        )
    if len(np.unique(landmarks)) != len(landmarks):
        raise DuplicateLandmark("landmark indices must be distinct")
    return landmarks


def indicator_features(mesh, landmarks):
    """One unit-indicator column per landmark vertex."""
    landmarks = _check_landmarks(mesh.n_vertices, landmarks)
    values = np.zeros((mesh.n_vertices, len(landmarks)))
    values[landmarks, np.arange(len(landmarks))] = 1.0
    return FeatureSet(kind=KIND_INDICATOR, values=values, landmarks=landmarks)


def heat_features(mesh, mass, stiffness, landmarks, times, dt, weight=None):
    """Multi-scale heat signatures: snapshots of diffused landmark deltas.

    Each landmark seeds a unit-mass delta (the indicator divided by its
    vertex area) which is evolved by Crank-Nicolson steps of size ``dt``;
    the solution is recorded at every requested time. Passing ``weight``
    (a per-vertex ``w^2`` field) diffuses on the conformally deformed
    metric instead, which is how features are refreshed after the
    deformation has moved.

    Parameters
    ----------
    times : sequence of float
        Strictly ascending positive multiples of ``dt``.

    Returns
    -------
    FeatureSet
        ``len(landmarks) * len(times)`` columns, landmark-major.
    """
    landmarks = _check_landmarks(mesh.n_vertices, landmarks)
    times = tuple(float(t) for t in times)
    if not times:
        raise EmptyFeatureSet("no snapshot times given")
    steps = []
    for t in times:
        m = t / dt
        if t <= 0 or abs(m - round(m)) > 1e-9:
            raise ValueError(f"time {t} is not a positive multiple of dt={dt}")
        steps.append(int(round(m)))
    if any(b <= a for a, b in zip(steps, steps[1:])):
        raise ValueError("times must be strictly ascending")

    areas = mass.diagonal()
    stepper = HeatStepper(mass, stiffness, dt, weight=weight)
    cols = np.empty((mesh.n_vertices, len(landmarks) * len(times)))
    for i, lm in enumerate(landmarks):
        u = np.zeros(mesh.n_vertices)
        u[lm] = 1.0 / areas[lm]
        done = 0
        for j, s in enumerate(steps):
            u = stepper.step(u, n_steps=s - done)
            done = s
            cols[:, i * len(times) + j] = u
    return FeatureSet(
        kind=KIND_HEAT, values=cols, landmarks=landmarks, times=times, dt=float(dt)
    )


@dataclass
class DiffusionBasis:
    """Heat-bump basis at subsample points with projection operators.

    ``proj`` maps a full function to bump coefficients through the
    mass-weighted normal equations ``(u^T M u)^-1 u^T M f``; ``recon``
    maps coefficients back to the bump span.
    """

    columns: np.ndarray
    samples: np.ndarray
    mass_diag: np.ndarray = field(repr=False)
    _gram_cho: tuple = field(repr=False, default=None)

    def proj(self, f):
        f2 = f if f.ndim > 1 else f[:, None]
        rhs = self.columns.T @ (self.mass_diag[:, None] * f2)
        out = cho_solve(self._gram_cho, rhs)
        return out if f.ndim > 1 else out.ravel()

    def recon(self, coeffs):
        return self.columns @ coeffs


def build_diffusion_basis(mesh, mass, stiffness, hierarchy, level, t, n_steps=10):
    """Heat-bump basis at one hierarchy level.

    Each sample vertex seeds a unit delta diffused for total time ``t``
    (``n_steps`` Crank-Nicolson steps); ``t = 0`` returns exact deltas, in
    which case projection and reconstruction are identities. Small
    negative undershoots of the scheme are clipped so columns stay
    nonnegative.

    Raises
    ------
    IllConditionedGram
        Gram condition number above 1e12.
    """
    samples = np.asarray(hierarchy.levels[level], dtype=np.int64)
    n = mesh.n_vertices
    u = np.zeros((n, len(samples)))
    u[samples, np.arange(len(samples))] = 1.0
    if t > 0:
        stepper = HeatStepper(mass, stiffness, t / n_steps)
        u = stepper.step(u, n_steps=n_steps)
        np.clip(u, 0.0, None, out=u)

    mdiag = mass.diagonal()
    gram = u.T @ (mdiag[:, None] * u)
    gram = 0.5 * (gram + gram.T)
    cond = np.linalg.cond(gram)
    logger.info("diffusion-basis Gram condition number: %.3e", cond)
    if not np.isfinite(cond) or cond > 1e12:
        raise IllConditionedGram(f"Gram condition {cond:.3e} exceeds 1e12")
    return DiffusionBasis(
        columns=u, samples=samples, mass_diag=mdiag, _gram_cho=cho_factor(gram)
    )
