"""Scikit-learn style front end for the registration pipeline.

``LBBasisPursuit`` packs the whole pipeline (operators, eigensystem,
features, warm start, joint solve, nearest-neighbor map) behind the usual
estimator surface: hyperparameters in ``__init__``, heavy work in
``fit``, fitted artifacts as trailing-underscore attributes, and
``get_params``/``set_params`` for composition with the wider ecosystem.
"""

import dataclasses

import numpy as np
from sklearn.base import BaseEstimator

from .correspondence import functional_map_apply, point_to_point
from .errors import DimensionMismatch, IndexOutOfRange
from .features import KIND_HEAT, KIND_INDICATOR, heat_features, indicator_features
from .fem import assemble_mass, assemble_stiffness
from .eigensolver import solve_eigs
from .mesh import TriangleMesh
from .solver import LbbpConfig, solve

_CONFIG_FIELDS = [f.name for f in dataclasses.fields(LbbpConfig)]


def check_mesh(mesh):
    """Validate that an object is a usable TriangleMesh."""
    if not isinstance(mesh, TriangleMesh):
        raise TypeError(f"expected TriangleMesh, got {type(mesh).__name__}")
    return mesh


def check_landmark_pairs(pairs, n_source, n_target):
    """Validate an (m, 2) array of source/target landmark indices."""
    pairs = np.asarray(pairs, dtype=np.int64)
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise DimensionMismatch(
            f"landmarks must have shape (m, 2), got {pairs.shape}"
        )
    if len(pairs) == 0:
        raise DimensionMismatch("at least one landmark pair is required")
    if pairs[:, 0].min() < 0 or pairs[:, 0].max() >= n_source:
        raise IndexOutOfRange("source landmark index out of range")
    if pairs[:, 1].min() < 0 or pairs[:, 1].max() >= n_target:
        raise IndexOutOfRange("target landmark index out of range")
    return pairs


class LBBasisPursuit(BaseEstimator):
    """Dense correspondence between two genus-zero meshes.

    Parameters mirror :class:`lbbp.solver.LbbpConfig` plus the feature
    construction switches. See ``fit`` for the pipeline.

    Attributes (after ``fit``)
    --------------------------
    w_ : ndarray of shape (n2,)
        Recovered conformal factor on the target (``w_**2`` scales the
        metric).
    psi_star_ : ndarray of shape (n2, k)
        Aligned target basis.
    phi_ : ndarray of shape (n1, k)
        Source eigenbasis used for matching.
    correspondence_ : Correspondence
        Per-source-vertex target indices.
    result_ : LbbpResult
        Full solver output (trace, termination, timings).
    """

    def __init__(
        self,
        k=100,
        r1=10.0,
        r2=10.0,
        r3=1.0,
        r4=0.01,
        eta=0.0,
        inner_alm_iters=1,
        max_outer_iters=1500,
        energy_tol=1e-6,
        area_tol=1e-4,
        reinit_tol=1e-4,
        max_reinits=5,
        warm_start=True,
        warm_start_size=0,
        warm_start_iters=250,
        feature_kind=KIND_INDICATOR,
        heat_times=(5.0, 10.0, 20.0),
        heat_dt=0.0,
        recovery="substitution",
        seed=0,
    ):
        self.k = k
        self.r1 = r1
        self.r2 = r2
        self.r3 = r3
        self.r4 = r4
        self.eta = eta
        self.inner_alm_iters = inner_alm_iters
        self.max_outer_iters = max_outer_iters
        self.energy_tol = energy_tol
        self.area_tol = area_tol
        self.reinit_tol = reinit_tol
        self.max_reinits = max_reinits
        self.warm_start = warm_start
        self.warm_start_size = warm_start_size
        self.warm_start_iters = warm_start_iters
        self.feature_kind = feature_kind
        self.heat_times = heat_times
        self.heat_dt = heat_dt
        self.recovery = recovery
        self.seed = seed

    def _config(self):
        kwargs = {
            name: getattr(self, name)
            for name in _CONFIG_FIELDS
            if hasattr(self, name)
        }
        return LbbpConfig(**kwargs)

    def _features(self, mesh, mass, stiffness, landmarks, dt):
        if self.feature_kind == KIND_INDICATOR:
            return indicator_features(mesh, landmarks), None
        if self.feature_kind == KIND_HEAT:
            times = tuple(t * dt for t in self.heat_times)

            def refresher_factory(w2):
                return heat_features(
                    mesh, mass, stiffness, landmarks, times, dt, weight=w2
                ).values

            return (
                heat_features(mesh, mass, stiffness, landmarks, times, dt),
                refresher_factory,
            )
        raise ValueError(f"unknown feature kind {self.feature_kind!r}")

    def fit(self, source_mesh, target_mesh, landmarks):
        """Register ``source_mesh`` onto ``target_mesh``.

        Parameters
        ----------
        source_mesh, target_mesh : TriangleMesh
        landmarks : array_like of shape (m, 2)
            Corresponding vertex indices ``(source, target)``.

        Returns
        -------
        self
        """
        source_mesh = check_mesh(source_mesh)
        target_mesh = check_mesh(target_mesh)
        pairs = check_landmark_pairs(
            landmarks, source_mesh.n_vertices, target_mesh.n_vertices
        )
        config = self._config()

        m1 = assemble_mass(source_mesh)
        s1 = assemble_stiffness(source_mesh)
        m2 = assemble_mass(target_mesh)
        s2 = assemble_stiffness(target_mesh)
        source_eigs = solve_eigs(s1, m1, config.k)

        dt = self.heat_dt or 1e-3 * float(m1.diagonal().sum())
        f, _ = self._features(source_mesh, m1, s1, pairs[:, 0], dt)
        g, refresher = self._features(target_mesh, m2, s2, pairs[:, 1], dt)

        result = solve(
            source_mesh,
            target_mesh,
            source_eigs,
            f,
            g,
            config,
            feature_refresher=refresher,
        )
        self.result_ = result
        self.w_ = result.w
        self.psi_star_ = result.psi_star
        self.phi_ = source_eigs.functions[:, : config.k]
        self.source_eigs_ = source_eigs
        self.mass1_ = m1
        self.correspondence_ = point_to_point(self.phi_, self.psi_star_)
        return self

    def predict(self):
        """Target vertex index for each source vertex."""
        self._check_fitted()
        return self.correspondence_.index_map.copy()

    def transform(self, h):
        """Transfer one or more source functions to the target."""
        self._check_fitted()
        return functional_map_apply(h, self.phi_, self.mass1_, self.psi_star_)

    def _check_fitted(self):
        if not hasattr(self, "correspondence_"):
            raise RuntimeError("call fit() before predict()/transform()")
