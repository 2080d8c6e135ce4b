"""Feasible optimization on the Stiefel manifold via Cayley curves.

Updates move along ``X(dt) = (I + dt/2 D)^-1 (I - dt/2 D) X`` with the
skew generator ``D = G X^T - X G^T`` built from the ambient gradient
``G``. Orthonormal columns are preserved exactly in arithmetic and to
round-off in floating point. The inverse is never formed at size n x n:
with ``U = [G, X]`` and ``V = [X, -G]`` the curve evaluates through a
2k x 2k solve (Sherman-Morrison-Woodbury form).

Step sizes follow alternating Barzilai-Borwein rules safeguarded by a
nonmonotone Armijo backtracking whose reference is the maximum over a
short window of past values; every accepted point therefore stays at or
below the entry value.
"""

from dataclasses import dataclass

import numpy as np

from .errors import LineSearchFailure


@dataclass
class CurvilinearParams:
    """Line-search and step-size knobs for the Cayley curve search."""

    init_dt: float = 1e-2
    max_trials: int = 30
    c1: float = 1e-4
    window: int = 5
    gtol: float = 1e-10
    dt_min: float = 1e-14
    dt_max: float = 1e6


def cayley_point(x, grad, dt):
    """Point reached after time ``dt`` along the Cayley curve at ``x``.

    Uses the Woodbury form, so the linear solve is 2k x 2k.
    """
    u = np.hstack([grad, x])
    v = np.hstack([x, -grad])
    k2 = u.shape[1]
    core = np.eye(k2) + (dt / 2.0) * (v.T @ u)
    return x - dt * (u @ np.linalg.solve(core, v.T @ x))


def _slope(x, grad):
    """Directional derivative along the curve at dt=0 (equals -||D||^2 / 2)."""
    xg = x.T @ grad
    return -(float(np.sum(grad * grad)) - float(np.sum(xg * xg.T)))


def curvilinear_step(x, grad, objective, dt0, params=None, ref_value=None):
    """One backtracked Cayley step.

    Parameters
    ----------
    x : ndarray of shape (n, k)
        Current point with orthonormal columns.
    grad : ndarray of shape (n, k)
        Ambient (Euclidean) gradient of the objective at ``x``.
    objective : callable
        Maps a candidate point to its objective value.
    dt0 : float
        Trial step, halved until the decrease condition holds.
    params : CurvilinearParams, optional
    ref_value : float, optional
        Reference value for the sufficient-decrease test; defaults to
        ``objective(x)`` (monotone step).

    Returns
    -------
    (ndarray, float, float)
        New point, its objective value, and the accepted dt.

    Raises
    ------
    LineSearchFailure
        No acceptable step within ``params.max_trials`` halvings.
    """
    params = params or CurvilinearParams()
    slope = _slope(x, grad)
    if ref_value is None:
        ref_value = float(objective(x))
    if slope >= 0.0:
        # gradient parallel to the manifold normal space: D = 0, no movement
        return x, ref_value, 0.0
    dt = float(np.clip(dt0, params.dt_min, params.dt_max))
    for _ in range(params.max_trials):
        cand = cayley_point(x, grad, dt)
        f_new = float(objective(cand))
        if np.isfinite(f_new) and f_new <= ref_value + params.c1 * dt * slope:
            return cand, f_new, dt
        dt *= 0.5
    raise LineSearchFailure(
        f"no acceptable Cayley step after {params.max_trials} halvings"
    )


def minimize_on_stiefel(fun_grad, x0, max_iters, params=None, monotone=False):
    """Barzilai-Borwein curvilinear descent on the Stiefel manifold.

    Parameters
    ----------
    fun_grad : callable
        Maps a point to ``(value, ambient_gradient)``.
    x0 : ndarray of shape (n, k)
        Feasible start (orthonormal columns).
    max_iters : int
        Iteration cap.
    params : CurvilinearParams, optional
    monotone : bool
        If True the Armijo reference is the current value; otherwise the
        maximum over the last ``params.window`` values (nonmonotone BB).

    Returns
    -------
    (ndarray, list of float, bool)
        Final point, value history (including the start), and whether the
        gradient tolerance was reached.
    """
    params = params or CurvilinearParams()
    x = x0
    f, g = fun_grad(x)
    f = float(f)
    history = [f]
    dt = params.init_dt
    x_prev = g_prev = None
    converged = False
    for it in range(max_iters):
        slope = _slope(x, g)
        if np.sqrt(max(-slope, 0.0)) <= params.gtol * (1.0 + abs(f)):
            converged = True
            break
        if x_prev is not None:
            dt = _bb_step(x - x_prev, g - g_prev, it, dt, params)
        ref = f if monotone else max(history[-params.window :])
        last = {}

        def obj(cand):
            val, grad_c = fun_grad(cand)
            last["x"], last["g"] = cand, grad_c
            return val

        try:
            x_new, f_new, dt_acc = curvilinear_step(
                x, g, obj, dt, params, ref_value=ref
            )
        except LineSearchFailure:
            converged = True  # only round-off descent left at this scale
            break
        if dt_acc == 0.0:
            converged = True
            break
        x_prev, g_prev = x, g
        x, f = x_new, f_new
        dt = dt_acc
        g = last["g"] if last.get("x") is x else fun_grad(x)[1]
        history.append(f)
        # Cayley drift is ~eps per step; repair before it accumulates
        if (it + 1) % 64 == 0:
            gram = x.T @ x
            if np.abs(gram - np.eye(gram.shape[0])).max() > 1e-12:
                x, _ = np.linalg.qr(x)
                f, g = fun_grad(x)
                f = float(f)
    return x, history, converged


def _bb_step(s, y, it, fallback, params):
    ss = float(np.sum(s * s))
    sy = float(np.sum(s * y))
    yy = float(np.sum(y * y))
    if sy <= 1e-300 or ss == 0.0 or yy == 0.0:
        return float(np.clip(fallback * 1.5, params.dt_min, params.dt_max))
    dt = ss / sy if it % 2 == 0 else sy / yy
    return float(np.clip(abs(dt), params.dt_min, params.dt_max))
