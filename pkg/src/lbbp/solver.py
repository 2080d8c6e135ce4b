"""Joint optimization of a conformal factor and a deformed orthonormal basis.

The model couples three ingredients on the target surface: a per-vertex
conformal factor ``w`` (``w^2`` scales the metric), an orthonormalized
basis ``Psibar = L diag(w) Psi`` living on the Stiefel manifold, and an
area constraint ``w^T M2 w = A`` tying the deformed target area to the
source area. The energy

    E(w, Psibar) = r1/2 ||C - G^T diag(w) L^T Psibar||_F^2
                 + r2/2 tr(Psibar^T Sbar(w) Psibar)
                 + r3/2 w^T S2 w,
    Sbar(w) = L^-1 diag(w)^-1 S2 diag(w)^-1 L^-1,
    C = F^T M1 Phi,

is minimized by proximal alternating minimization: a curvilinear
(Cayley) search updates Psibar on the Stiefel manifold, and limited-memory
BFGS updates ``w`` inside an augmented-Lagrangian treatment of the area
constraint. Each block carries a proximal penalty ``1/(2 eta) ||. - .||^2``
anchored at the previous outer iterate, which yields a non-increasing
proximal-augmented energy trace between restarts.

Sbar(w) is always applied as a composition of diagonal scalings and one
sparse product; the dense n x n operator is never formed.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize as _scipy_minimize

from .eigensolver import eig_via_stiefel, solve_eigs
from .errors import (
    InvalidLevelSpec,
    NonpositiveConformalFactor,
)
from .features import KIND_INDICATOR, FeatureSet, build_diffusion_basis
from .fem import assemble_mass, assemble_stiffness
from .sampling import farthest_point_sample
from .stiefel import CurvilinearParams, minimize_on_stiefel

logger = logging.getLogger(__name__)

RECOVERY_SUBSTITUTION = "substitution"
RECOVERY_DEFORMED = "deformed"


@dataclass
class LbbpConfig:
    """Solver configuration; defaults follow the reference experiment setup."""

    k: int = 100
    r1: float = 10.0
    r2: float = 10.0
    r3: float = 1.0
    r4: float = 0.01
    eta: float = 0.0  # 0 -> 10 / (r1 + r2 + r3)
    inner_alm_iters: int = 1
    max_outer_iters: int = 1500
    energy_tol: float = 1e-6
    area_tol: float = 1e-4
    # reinitialization
    reinit_tol: float = 1e-4
    max_reinits: int = 5
    reinit_cooldown: int = 5
    reinit_iters: int = 300
    # curvilinear search
    psibar_inner_iters: int = 5
    bb_init_dt: float = 1e-2
    ls_max_trials: int = 30
    ls_c1: float = 1e-4
    nonmonotone_window: int = 5
    # BFGS for w
    bfgs_memory: int = 10
    bfgs_max_iters: int = 25
    bfgs_gtol: float = 1e-10
    w_floor: float = 1e-3
    # warm start
    warm_start: bool = True
    warm_start_size: int = 0  # 0 -> min(n, max(4k, 300))
    warm_start_time: float = 0.0  # 0 -> area / n_samples
    warm_start_iters: int = 250
    diffusion_steps: int = 10
    # misc
    recovery: str = RECOVERY_SUBSTITUTION
    seed: int = 0
    project_area: bool = True
    enforce_descent: bool = True
    descent_slack: float = 1e-9

    def __post_init__(self):
        if min(self.r1, self.r2, self.r3, self.r4) <= 0:
            raise ValueError("penalty weights r1..r4 must be positive")
        if self.eta < 0:
            raise ValueError("eta must be positive (or 0 for the default)")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.recovery not in (RECOVERY_SUBSTITUTION, RECOVERY_DEFORMED):
            raise ValueError(f"unknown recovery mode {self.recovery!r}")

    @property
    def eta_value(self):
        return self.eta if self.eta > 0 else 10.0 / (self.r1 + self.r2 + self.r3)

    def curvilinear_params(self):
        return CurvilinearParams(
            init_dt=self.bb_init_dt,
            max_trials=self.ls_max_trials,
            c1=self.ls_c1,
            window=self.nonmonotone_window,
        )


@dataclass
class EnergyBreakdown:
    """Raw energy terms; ``total`` applies the r-weights (without ALM terms)."""

    coeff: float
    eigen: float
    harmonic: float
    area_residual: float
    total: float

    def lagrangian(self, r4, b):
        return self.total + 0.5 * r4 * (self.area_residual + b) ** 2


@dataclass
class LbbpProblem:
    """Immutable inputs of one registration instance (solver-ready)."""

    s2: sp.csr_array
    m2_diag: np.ndarray
    l_diag: np.ndarray
    phi: np.ndarray
    coeff_source: np.ndarray  # C = F^T M1 Phi, shape (l, k)
    g: np.ndarray  # target features, shape (n2, l)
    area: float  # A = source surface area

    @property
    def n(self):
        return len(self.m2_diag)

    @property
    def k(self):
        return self.phi.shape[1]

    @classmethod
    def from_operators(cls, m1_diag, s2, m2_diag, phi, f, g, k=None):
        k = phi.shape[1] if k is None else int(k)
        fv = solver_features(f, np.asarray(m1_diag))
        gv = solver_features(g, np.asarray(m2_diag))
        coeff_source = fv.T @ (np.asarray(m1_diag)[:, None] * phi[:, :k])
        m2_diag = np.asarray(m2_diag, dtype=np.float64)
        return cls(
            s2=sp.csr_array(s2),
            m2_diag=m2_diag,
            l_diag=np.sqrt(m2_diag),
            phi=np.asarray(phi[:, :k], dtype=np.float64),
            coeff_source=coeff_source,
            g=gv,
            area=float(np.sum(m1_diag)),
        )


def solver_features(features, mass_diag):
    """Solver-ready feature columns.

    Unit indicators are rescaled into discrete delta functions (divide by
    the landmark vertex mass, so each column integrates to 1); without
    this the coefficient-matching term would carry a vanishing mesh-size
    factor relative to the spectral terms. Heat features and raw arrays
    pass through unchanged.
    """
    if isinstance(features, FeatureSet):
        if features.kind == KIND_INDICATOR:
            return features.values / mass_diag[features.landmarks][None, :]
        return np.asarray(features.values, dtype=np.float64)
    return np.asarray(features, dtype=np.float64)


@dataclass
class LbbpState:
    """Mutable joint state of the alternating minimization."""

    w: np.ndarray
    psibar: np.ndarray
    b: float = 0.0
    w_prev: np.ndarray = None
    psibar_prev: np.ndarray = None

    def __post_init__(self):
        if self.w_prev is None:
            self.w_prev = self.w.copy()
        if self.psibar_prev is None:
            self.psibar_prev = self.psibar.copy()


# -- energy and gradients -----------------------------------------------------


def _check_w(w):
    if (w <= 0).any():
        raise NonpositiveConformalFactor(
            f"conformal factor must stay positive (min {w.min():.3e})"
        )


def _terms(w, psibar, problem):
    """Shared intermediates: residual R, recovered Z, and S2 Z."""
    _check_w(w)
    wl = w * problem.l_diag
    r = problem.coeff_source - (problem.g * wl[:, None]).T @ psibar
    z = psibar / wl[:, None]
    sz = problem.s2 @ z
    return wl, r, z, sz


def energy(state, problem, config):
    """Energy breakdown at the state's (w, Psibar).

    ``total = r1/2 coeff + r2/2 eigen + r3/2 harmonic``; the ALM penalty is
    available via :meth:`EnergyBreakdown.lagrangian`.
    """
    return _breakdown(state.w, state.psibar, problem, config)


def _breakdown(w, psibar, problem, config):
    _, r, z, sz = _terms(w, psibar, problem)
    coeff = float(np.sum(r * r))
    eigen = float(np.sum(z * sz))
    sw = problem.s2 @ w
    harmonic = float(w @ sw)
    area_residual = float(w @ (problem.m2_diag * w)) - problem.area
    total = 0.5 * (config.r1 * coeff + config.r2 * eigen + config.r3 * harmonic)
    return EnergyBreakdown(coeff, eigen, harmonic, area_residual, total)


def grad_psibar(state, problem, config):
    """Euclidean gradient of ``E + prox`` with respect to Psibar."""
    return _grad_psibar(
        state.w, state.psibar, problem, config, state.psibar_prev
    )


def _grad_psibar(w, psibar, problem, config, anchor):
    wl, r, z, sz = _terms(w, psibar, problem)
    grad = -config.r1 * ((problem.g * wl[:, None]) @ r)
    grad += config.r2 * (sz / wl[:, None])
    if anchor is not None:
        grad += (psibar - anchor) / config.eta_value
    return grad


def grad_w(state, problem, config):
    """Gradient of the augmented Lagrangian (plus prox) with respect to w."""
    return _grad_w(
        state.w, state.psibar, problem, config, state.b, state.w_prev
    )


def _grad_w(w, psibar, problem, config, b, anchor):
    wl, r, z, sz = _terms(w, psibar, problem)
    p = psibar / problem.l_diag[:, None]
    grad = -config.r1 * problem.l_diag * np.einsum(
        "ij,ij->i", psibar @ r.T, problem.g
    )
    grad -= config.r2 * np.einsum("ij,ij->i", p, sz) / (w * w)
    grad += config.r3 * (problem.s2 @ w)
    c = float(w @ (problem.m2_diag * w)) - problem.area
    grad += (2.0 * config.r4 * (c + b)) * (problem.m2_diag * w)
    if anchor is not None:
        grad += (w - anchor) / config.eta_value
    return grad


def _sbar_apply(problem, w, x):
    wl = w * problem.l_diag
    return (problem.s2 @ (x / wl[:, None])) / wl[:, None]


# -- block minimizers ----------------------------------------------------------


def bfgs_minimize_w(state, problem, config):
    """One limited-memory BFGS solve of the w subproblem.

    Minimizes ``L(w, Psibar; b) + 1/(2 eta) ||w - w_prev||^2`` from the
    current ``w`` under the positivity floor, and never returns a point
    above the starting value.

    Returns
    -------
    (np.ndarray, dict)
        Updated w and solver info (iterations, gradient norm).
    """
    return _minimize_w(
        state.w,
        state.psibar,
        problem,
        config,
        state.b,
        state.w_prev,
        value_grad=None,
    )


def _w_value_grad(w, psibar, problem, config, b, anchor):
    bd = _breakdown(w, psibar, problem, config)
    val = bd.lagrangian(config.r4, b)
    if anchor is not None:
        dw = w - anchor
        val += 0.5 / config.eta_value * float(dw @ dw)
    return val, _grad_w(w, psibar, problem, config, b, anchor)


def _minimize_w(w0, psibar, problem, config, b, anchor, value_grad=None):
    if value_grad is None:

        def value_grad(w):
            return _w_value_grad(w, psibar, problem, config, b, anchor)

    f0, _ = value_grad(w0)
    res = _scipy_minimize(
        value_grad,
        w0,
        jac=True,
        method="L-BFGS-B",
        bounds=[(config.w_floor, None)] * len(w0),
        options=dict(
            maxiter=config.bfgs_max_iters,
            maxcor=config.bfgs_memory,
            ftol=1e-16,
            gtol=config.bfgs_gtol,
        ),
    )
    w_new = np.asarray(res.x, dtype=np.float64)
    f_new, _ = value_grad(w_new)
    if not np.isfinite(f_new) or f_new > f0:
        w_new, f_new = w0.copy(), f0
    info = dict(iterations=int(res.nit), value=float(f_new))
    return w_new, info


# -- results -------------------------------------------------------------------

TRACE_COLUMNS = ("iter", "coeff", "eigen", "harmonic", "area_residual", "total")


@dataclass
class LbbpResult:
    """Converged (or best-effort) output of :func:`solve`."""

    state: LbbpState
    psi_star: np.ndarray
    trace: np.ndarray
    reinit_iters: list
    termination: str
    warning: bool
    iterations: int
    wall_time: float
    max_orth_drift: float
    config: LbbpConfig
    problem: LbbpProblem = field(repr=False, default=None)
    warm_start_info: dict = field(default_factory=dict)

    @property
    def w(self):
        return self.state.w

    @property
    def basis_spectrum(self):
        """Rayleigh quotients of the deformed basis (per-column trace energy)."""
        z = self.state.psibar / (self.w * self.problem.l_diag)[:, None]
        return np.einsum("ij,ij->j", z, self.problem.s2 @ z)

    def summary(self):
        return dict(
            termination=self.termination,
            warning=self.warning,
            iterations=self.iterations,
            reinit_count=len(self.reinit_iters),
            reinit_iters=[int(i) for i in self.reinit_iters],
            wall_time_s=self.wall_time,
            final_total=float(self.trace[-1, 5]),
            final_coeff=float(self.trace[-1, 1]),
            final_area_residual=float(self.trace[-1, 4]),
            max_orth_drift=self.max_orth_drift,
            warm_start=self.warm_start_info or None,
        )


def recover_basis(psibar, w, l_diag, mode=RECOVERY_SUBSTITUTION):
    """Map the orthogonalized variable back to a target basis.

    ``substitution`` inverts ``Psibar = L diag(w) Psi`` exactly; ``deformed``
    keeps one factor of ``w`` on each side (``diag(w) L^-1 Psibar``), i.e.
    the rows carry the deformed measure ``w^2``, matching the delta-feature
    coefficients.
    """
    if mode == RECOVERY_SUBSTITUTION:
        return psibar / (w * l_diag)[:, None]
    if mode == RECOVERY_DEFORMED:
        return psibar * (w / l_diag)[:, None]
    raise ValueError(f"unknown recovery mode {mode!r}")


def write_trace_csv(path, trace):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(TRACE_COLUMNS) + "\n")
        for row in trace:
            fh.write(
                f"{int(row[0])},"
                + ",".join(f"{v:.17g}" for v in row[1:])
                + "\n"
            )


def write_conformal_factor(path, w):
    with open(path, "w", encoding="utf-8") as fh:
        for v in w:
            fh.write(f"{v:.17g}\n")


# -- internal models (full and subsampled) --------------------------------------


class _FullModel:
    """Direct evaluation in the (w, Psibar) variables."""

    def __init__(self, problem, config):
        self.problem = problem
        self.config = config

    def breakdown(self, w, psibar):
        return _breakdown(w, psibar, self.problem, self.config)

    def area_residual(self, w):
        return float(w @ (self.problem.m2_diag * w)) - self.problem.area

    def project_area(self, w):
        scale = np.sqrt(self.problem.area / float(w @ (self.problem.m2_diag * w)))
        return w * scale

    def psibar_value_grad(self, w, psibar, anchor):
        bd = _breakdown(w, psibar, self.problem, self.config)
        d = psibar - anchor
        val = bd.total + 0.5 / self.config.eta_value * float(np.sum(d * d))
        return val, _grad_psibar(w, psibar, self.problem, self.config, anchor)

    def minimize_w(self, w, psibar, b, anchor):
        return _minimize_w(w, psibar, self.problem, self.config, b, anchor)

    def reinit_psibar(self, w, psibar):
        op = lambda x: _sbar_apply(self.problem, w, x)  # noqa: E731
        out, hist = eig_via_stiefel(
            op,
            psibar.shape[1],
            psibar,
            max_iters=self.config.reinit_iters,
            params=self.config.curvilinear_params(),
        )
        return out, hist

    def lift(self, w, psibar):
        return w, psibar


class _ReducedModel:
    """Chain-rule evaluation in diffusion-basis coordinates (D, C).

    ``w = u @ D`` uses the raw nonnegative bumps; ``Psibar = ubar @ C``
    uses their QR orthonormalization so the Stiefel constraint on C is the
    plain Euclidean one. Energies are those of the full model at the
    reconstructed point, so traces are directly comparable.
    """

    def __init__(self, problem, config, u, ubar):
        self.problem = problem
        self.config = config
        self.u = u
        self.ubar = ubar

    def breakdown(self, d, c):
        return _breakdown(self.u @ d, self.ubar @ c, self.problem, self.config)

    def area_residual(self, d):
        w = self.u @ d
        return float(w @ (self.problem.m2_diag * w)) - self.problem.area

    def project_area(self, d):
        w = self.u @ d
        scale = np.sqrt(self.problem.area / float(w @ (self.problem.m2_diag * w)))
        return d * scale

    def psibar_value_grad(self, d, c, anchor):
        w = self.u @ d
        psibar = self.ubar @ c
        bd = _breakdown(w, psibar, self.problem, self.config)
        dc = c - anchor
        val = bd.total + 0.5 / self.config.eta_value * float(np.sum(dc * dc))
        grad_full = _grad_psibar(w, psibar, self.problem, self.config, None)
        return val, self.ubar.T @ grad_full + dc / self.config.eta_value

    def minimize_w(self, d, c, b, anchor):
        psibar = self.ubar @ c
        floor = 0.5 * self.config.w_floor

        def value_grad(dvec):
            w = self.u @ dvec
            if (w <= floor).any():
                return np.inf, np.zeros_like(dvec)
            bd = _breakdown(w, psibar, self.problem, self.config)
            val = bd.lagrangian(self.config.r4, b)
            dd = dvec - anchor
            val += 0.5 / self.config.eta_value * float(dd @ dd)
            grad_full = _grad_w(w, psibar, self.problem, self.config, b, None)
            return val, self.u.T @ grad_full + dd / self.config.eta_value

        f0, _ = value_grad(d)
        res = _scipy_minimize(
            value_grad,
            d,
            jac=True,
            method="L-BFGS-B",
            options=dict(
                maxiter=self.config.bfgs_max_iters,
                maxcor=self.config.bfgs_memory,
                ftol=1e-16,
                gtol=self.config.bfgs_gtol,
            ),
        )
        d_new = np.asarray(res.x, dtype=np.float64)
        f_new, _ = value_grad(d_new)
        if not np.isfinite(f_new) or f_new > f0:
            d_new, f_new = d.copy(), f0
        return d_new, dict(iterations=int(res.nit), value=float(f_new))

    def reinit_psibar(self, d, c):
        raise NotImplementedError("reinitialization runs on the full model only")

    def lift(self, d, c):
        return self.u @ d, self.ubar @ c


def _reorthonormalize(x):
    q, r = np.linalg.qr(x)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs[None, :]


def _pam_loop(model, w0, psibar0, config, max_iters, allow_reinit=True,
              feature_refresher=None):
    """Shared PAM + ALM outer loop; works on full or reduced variables.

    Returns the final variables plus the trace in true-energy terms and
    bookkeeping used by :func:`solve`.
    """
    eta = config.eta_value
    w = np.asarray(w0, dtype=np.float64).copy()
    psibar = np.asarray(psibar0, dtype=np.float64).copy()
    if config.project_area:
        w = model.project_area(w)
    w_anchor, psibar_anchor = w, psibar
    b = 0.0
    bd = model.breakdown(w, psibar)
    trace = [(0, bd.coeff, bd.eigen, bd.harmonic, bd.area_residual, bd.total)]
    prev_total = bd.total
    reinit_iters = []
    last_reinit = -(10**9)
    max_drift = 0.0
    termination = "max_iterations"
    cparams = config.curvilinear_params()
    it = 0
    for it in range(1, max_iters + 1):
        w_anchor = w.copy()
        psibar_anchor = psibar.copy()
        e_prev = model.breakdown(w_anchor, psibar_anchor).total

        # Psibar block: curvilinear descent with proximal anchor
        fun_grad = lambda x: model.psibar_value_grad(w_anchor, x, psibar_anchor)  # noqa: E731
        psibar, _, _ = minimize_on_stiefel(
            fun_grad, psibar, max_iters=config.psibar_inner_iters, params=cparams
        )
        gram = psibar.T @ psibar
        drift = float(np.abs(gram - np.eye(gram.shape[0])).max())
        max_drift = max(max_drift, drift)
        if drift > 1e-10:
            psibar = _reorthonormalize(psibar)

        # w block: ALM iterations (BFGS + multiplier update)
        dpsi2 = float(np.sum((psibar - psibar_anchor) ** 2))
        for _ in range(config.inner_alm_iters):
            w_cand, _ = model.minimize_w(w, psibar, b, w_anchor)
            if config.project_area:
                # the PAM subproblem is constrained to the area sphere; the
                # scale direction is its exact normal, so projection is a
                # rescale (the BFGS/ALM pass handles the remaining shape)
                w_cand = model.project_area(w_cand)
            if config.enforce_descent:
                w_cand = _descent_guard(
                    model, w_cand, w_anchor, psibar, dpsi2, e_prev, eta,
                    config.descent_slack,
                    project=config.project_area,
                )
            b += model.area_residual(w_cand)
            w = w_cand

        bd = model.breakdown(w, psibar)
        trace.append((it, bd.coeff, bd.eigen, bd.harmonic, bd.area_residual, bd.total))
        rel_update = abs(bd.total - prev_total) / (1.0 + abs(bd.total))
        prev_total = bd.total

        can_reinit = (
            allow_reinit
            and len(reinit_iters) < config.max_reinits
            and it - last_reinit >= config.reinit_cooldown
            and it >= config.reinit_cooldown
        )
        if rel_update < config.reinit_tol and can_reinit:
            psibar, hist = model.reinit_psibar(w, psibar)
            psibar = _reorthonormalize(psibar)
            if feature_refresher is not None:
                feature_refresher(model, w)
            reinit_iters.append(it)
            last_reinit = it
            prev_total = model.breakdown(w, psibar).total
            logger.info(
                "reinitialized basis at iteration %d (trace %d steps, energy %.6g)",
                it, len(hist) - 1, prev_total,
            )
            continue
        if (
            rel_update < config.energy_tol
            and abs(bd.area_residual) <= config.area_tol * model.problem.area
        ):
            termination = "converged"
            break

    return dict(
        w=w,
        psibar=psibar,
        b=b,
        w_prev=w_anchor if it else w,
        psibar_prev=psibar_anchor if it else psibar,
        trace=np.array(trace, dtype=np.float64),
        reinit_iters=reinit_iters,
        termination=termination,
        iterations=it,
        max_orth_drift=max_drift,
    )


def _descent_guard(model, w_cand, w_anchor, psibar, dpsi2, e_prev, eta, slack,
                   project=False):
    """Shrink the w step until the proximal-augmented descent bound holds.

    The Psibar step already guarantees the bound at alpha=0, so the loop
    terminates; in practice the full step passes almost always and this
    only trims steps where the area-constraint pressure would push the
    energy uphill past the allowed slack.
    """
    alpha = 1.0
    for _ in range(60):
        w_try = w_anchor + alpha * (w_cand - w_anchor)
        if project:
            w_try = model.project_area(w_try)
        bd = model.breakdown(w_try, psibar)
        dw2 = float(np.sum((w_try - w_anchor) ** 2))
        if bd.total + 0.5 / eta * (dpsi2 + dw2) <= e_prev + slack:
            return w_try
        alpha *= 0.5
    return w_anchor.copy()


# -- top-level solve and warm start ---------------------------------------------


def warm_start(source_mesh, target_mesh, source_eigs, features_f, features_g,
               config, operators=None):
    """Initial (w, Psibar) from a subsampled solve in a heat-bump basis.

    Farthest-point samples of the target span a diffusion basis ``u``; the
    model is solved in those coordinates (far fewer variables) and the
    minimizer is reconstructed and re-orthonormalized as the full-problem
    start.

    Returns
    -------
    (np.ndarray, np.ndarray, dict)
        ``w0``, ``Psibar0``, and bookkeeping info.
    """
    problem, m2, s2, psi0 = _prepare(
        source_mesh, target_mesh, source_eigs, features_f, features_g, config,
        operators=operators,
    )
    return _warm_start_from_problem(problem, target_mesh, m2, s2, psi0, config)


def _warm_start_from_problem(problem, target_mesh, m2, s2, psi0, config):
    n = problem.n
    k = problem.k
    nbar = config.warm_start_size or min(n, max(4 * k, 300))
    if k > nbar:
        raise InvalidLevelSpec(f"warm-start size {nbar} is below k={k}")
    rng = np.random.default_rng(config.seed)
    seed_vertex = int(rng.integers(n))
    info = dict(n_samples=int(nbar), seed_vertex=seed_vertex)
    if nbar >= n:
        hierarchy = farthest_point_sample(target_mesh, [n], seed_vertex)
        level = 0
    else:
        hierarchy = farthest_point_sample(target_mesh, [n, nbar], seed_vertex)
        level = 1
    t = config.warm_start_time or problem.area / nbar
    basis = build_diffusion_basis(
        target_mesh, m2, s2, hierarchy, level, t, n_steps=config.diffusion_steps
    )
    u = basis.columns
    ubar = _reorthonormalize(u)

    psibar_full0 = (problem.l_diag * 1.0)[:, None] * psi0  # w = 1 at start
    c0 = _reorthonormalize(ubar.T @ psibar_full0)
    d0 = basis.proj(np.ones(n))

    model = _ReducedModel(problem, config, u, ubar)
    floor = 0.5 * config.w_floor
    if ((u @ d0) <= floor).any():
        d0 = np.linalg.lstsq(u, np.ones(n), rcond=None)[0]
    out = _pam_loop(
        model, d0, c0, config, max_iters=config.warm_start_iters, allow_reinit=False
    )
    w0 = np.maximum(u @ out["w"], config.w_floor)
    psibar0 = _reorthonormalize(ubar @ out["psibar"])
    info.update(
        iterations=out["iterations"],
        final_total=float(out["trace"][-1, 5]),
        diffusion_time=float(t),
    )
    return w0, psibar0, info


def _prepare(source_mesh, target_mesh, source_eigs, features_f, features_g,
             config, operators=None):
    """Assemble operators and the solver-ready problem."""
    if operators is None:
        m1 = assemble_mass(source_mesh).diagonal()
        s2 = assemble_stiffness(target_mesh)
        m2 = assemble_mass(target_mesh)
    else:
        m1, s2, m2 = operators
    problem = LbbpProblem.from_operators(
        m1_diag=m1,
        s2=s2,
        m2_diag=m2.diagonal(),
        phi=source_eigs.functions[:, : config.k],
        f=features_f,
        g=features_g,
        k=config.k,
    )
    target_eigs = solve_eigs(s2, m2, config.k)
    return problem, m2, s2, target_eigs.functions


def solve(source_mesh, target_mesh, source_eigs, features_f, features_g, config,
          feature_refresher=None):
    """Full registration solve (warm start, PAM loop, reinitialization).

    Parameters
    ----------
    source_mesh, target_mesh : TriangleMesh
    source_eigs : Eigensystem
        Eigensystem of the source (at least ``config.k`` columns).
    features_f, features_g : FeatureSet or ndarray
        Corresponding feature columns on source and target (same order).
        Unit indicators are delta-normalized internally.
    config : LbbpConfig
    feature_refresher : callable, optional
        Called as ``refresher(w_squared) -> ndarray`` after each
        reinitialization to rebuild geometry-dependent target features.

    Returns
    -------
    LbbpResult
        Best state reached; ``termination == "max_iterations"`` sets the
        ``warning`` flag instead of raising.
    """
    if source_eigs.functions.shape[1] < config.k:
        raise InvalidLevelSpec(
            f"source eigensystem has {source_eigs.functions.shape[1]} columns, "
            f"config.k = {config.k}"
        )
    t0 = time.perf_counter()
    problem, m2, s2, psi0 = _prepare(
        source_mesh, target_mesh, source_eigs, features_f, features_g, config
    )
    n = problem.n

    ws_info = {}
    if config.warm_start:
        w0, psibar0, ws_info = _warm_start_from_problem(
            problem, target_mesh, m2, s2, psi0, config
        )
    else:
        w0 = np.ones(n)
        psibar0 = _reorthonormalize(problem.l_diag[:, None] * psi0)

    model = _FullModel(problem, config)
    refresher = None
    if feature_refresher is not None:

        def refresher(mdl, w):
            mdl.problem.g = np.asarray(feature_refresher(w * w), dtype=np.float64)

    out = _pam_loop(
        model,
        w0,
        psibar0,
        config,
        max_iters=config.max_outer_iters,
        allow_reinit=config.max_reinits > 0,
        feature_refresher=refresher,
    )
    state = LbbpState(
        w=out["w"],
        psibar=out["psibar"],
        b=out["b"],
        w_prev=out["w_prev"],
        psibar_prev=out["psibar_prev"],
    )
    psi_star = recover_basis(
        out["psibar"], out["w"], problem.l_diag, mode=config.recovery
    )
    warning = out["termination"] != "converged"
    if warning:
        logger.warning(
            "solver stopped at max_outer_iters=%d without meeting tolerances",
            config.max_outer_iters,
        )
    return LbbpResult(
        state=state,
        psi_star=psi_star,
        trace=out["trace"],
        reinit_iters=out["reinit_iters"],
        termination=out["termination"],
        warning=warning,
        iterations=out["iterations"],
        wall_time=time.perf_counter() - t0,
        max_orth_drift=out["max_orth_drift"],
        config=config,
        problem=problem,
        warm_start_info=ws_info,
    )
