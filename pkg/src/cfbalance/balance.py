"""Simplex-constrained balancing weights.

For one treatment arm with feature matrix ``X`` (``n_g x d``) and target
moments ``X̄`` the weights solve::

    minimize    (1 - xi) * ||w||_2^2 + xi * ||X̄ - X^T w||_r^2
    subject to  w >= 0,  sum(w) = 1

for ``r`` in ``{2, inf}``. Both programs are strongly convex in ``w`` because
``xi < 1``, so the minimizer is unique even when ``n_g < d``.

The r=2 program is a smooth quadratic and is solved by accelerated projected
gradient (FISTA with adaptive restart). For r=inf the squared max-norm
``max_j v_j^2`` is replaced by ``mu * log(sum_j exp(v_j^2 / mu))``, an upper
bound within ``mu * log(d)`` that is exact when ``d = 1``; the smoothed
problem is solved by the same accelerated scheme for a decreasing sequence of
``mu`` with warm starts, keeping the best iterate under the true objective.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import TargetMoments
from .errors import DimensionMismatch, EmptyInput, NotConvergedWarning


class Norm(str, enum.Enum):
    L2 = "l2"
    LINF = "linf"


@dataclass(frozen=True)
class BalanceConfig:
    xi: float = 0.5
    norm: Norm = Norm.LINF
    max_iterations: int = 50000
    tolerance: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "norm", Norm(self.norm))
        if not 0.0 < self.xi < 1.0:
            raise ValueError(f"xi must lie in (0, 1), got {self.xi}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True)
class BalancingWeights:
    weights: np.ndarray
    achieved_imbalance: float
    objective_value: float
    iterations: int
    converged: bool
    # best-so-far true objective after every accepted step
    history: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    @property
    def n(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class BalanceReport:
    imbalance_before: np.ndarray
    imbalance_after: np.ndarray
    l2_before: float
    l2_after: float
    linf_before: float
    linf_after: float
    norm: Norm
    imbalance_rose: bool
    weight_cap: float | None
    exceeds_cap: bool

    @property
    def before(self) -> float:
        return self.l2_before if self.norm is Norm.L2 else self.linf_before

    @property
    def after(self) -> float:
        return self.l2_after if self.norm is Norm.L2 else self.linf_after


def simplex_project(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of ``v`` onto the probability simplex.

    Sort-based O(n log n) algorithm: find the largest ``k`` such that
    ``u_k - (sum_{i<=k} u_i - 1) / k > 0`` for ``u`` sorted descending, then
    shift and clip.
    """
    v = np.asarray(v, dtype=float).ravel()
    if v.size == 0:
        raise EmptyInput("cannot project an empty vector")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.count_nonzero(u - css / k > 0)
    theta = css[rho - 1] / rho
    w = np.maximum(v - theta, 0.0)
    # one renormalization pass removes cumsum rounding drift
    s = w.sum()
    if s != 1.0:
        w /= s
    return w


def _check(group_features, target) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(group_features, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    xbar = target.means if isinstance(target, TargetMoments) else np.asarray(target, dtype=float).ravel()
    if X.shape[0] == 0:
        raise EmptyInput("group has no rows")
    if X.shape[1] != xbar.shape[0]:
        raise DimensionMismatch(f"group has {X.shape[1]} columns, target has {xbar.shape[0]}")
    return X, xbar


def _norm(v: np.ndarray, norm: Norm) -> float:
    return float(np.sqrt(v @ v)) if norm is Norm.L2 else float(np.max(np.abs(v), initial=0.0))


def balance_objective(w, group_features, target, cfg: BalanceConfig) -> float:
    """``(1 - xi) ||w||^2 + xi ||X̄ - X^T w||_r^2``."""
    X, xbar = _check(group_features, target)
    w = np.asarray(w, dtype=float).ravel()
    if w.shape[0] != X.shape[0]:
        raise DimensionMismatch(f"{w.shape[0]} weights for {X.shape[0]} rows")
    v = xbar - X.T @ w
    return float((1.0 - cfg.xi) * (w @ w) + cfg.xi * _norm(v, cfg.norm) ** 2)


def balance_gradient(w, group_features, target, xi: float) -> np.ndarray:
    """Gradient of the r=2 balance objective."""
    X, xbar = _check(group_features, target)
    w = np.asarray(w, dtype=float).ravel()
    return 2.0 * (1.0 - xi) * w - 2.0 * xi * (X @ (xbar - X.T @ w))


def _smoothed_linf(X, xbar, xi, mu):
    """Objective/gradient pair with ``max_j v_j^2`` replaced by a soft max."""

    def f(w):
        v = xbar - X.T @ w
        s = v * v / mu
        m = s.max()
        return (1.0 - xi) * (w @ w) + xi * mu * (m + np.log(np.exp(s - m).sum()))

    def g(w):
        v = xbar - X.T @ w
        s = v * v / mu
        p = np.exp(s - s.max())
        p /= p.sum()
        return 2.0 * (1.0 - xi) * w - 2.0 * xi * (X @ (p * v))

    return f, g


def _fista(f, g, w0, L, max_iter, tol, true_obj, best, history, residual_tol=None, L_floor=None):
    """Monotone FISTA over the simplex with adaptive restart.

    With ``L_floor=None`` the step ``1/L`` is fixed (``L`` must be a valid
    Lipschitz constant); otherwise ``L`` is backtracked upward and relaxed
    toward ``L_floor`` between iterations. ``best`` is a two-element list
    ``[w, F(w)]`` updated in place with the best iterate under ``true_obj``.
    Returns ``(w, L, iterations, converged)``.
    """
    x = w0.copy()
    fx = f(x)
    y, t = x.copy(), 1.0
    small = 0
    for k in range(1, max_iter + 1):
        gy = g(y)
        fy = f(y)
        while True:
            z = simplex_project(y - gy / L)
            fz = f(z)
            if L_floor is None:
                break
            dz = z - y
            if fz <= fy + gy @ dz + 0.5 * L * (dz @ dz) + 1e-14 * abs(fy):
                break
            L *= 2.0
        # a fixed 1/L step cannot ascend in exact arithmetic, so only rounding is forgiven
        slack = 4e-16 * abs(fx) if L_floor is None else 0.0
        accept = fz <= fx + slack
        if accept:
            x_next, f_next = z, fz
        else:
            x_next, f_next = x, fx
        # restart momentum when the step fails to descend or turns against progress
        if not accept or gy @ (z - x) > 0:
            t_next = 1.0
            y = x_next.copy()
        else:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = x_next + ((t - 1.0) / t_next) * (x_next - x)
        decrease = max(fx - f_next, 0.0) / max(abs(fx), 1e-300)
        x, fx, t = x_next, f_next, t_next

        F = true_obj(x)
        if F < best[1]:
            best[0], best[1] = x.copy(), F
        history.append(best[1])

        small = small + 1 if decrease < tol else 0
        if small >= 10:
            if residual_tol is None:
                return x, L, k, True
            r = simplex_project(x - g(x) / L) - x
            if np.max(np.abs(r)) <= residual_tol:
                return x, L, k, True
        if L_floor is not None:
            L = max(0.95 * L, L_floor)
    return x, L, max_iter, False


def solve_weights(group_features, target, cfg: BalanceConfig | None = None) -> BalancingWeights:
    """Balancing weights for one arm against target moments."""
    cfg = cfg or BalanceConfig()
    X, xbar = _check(group_features, target)
    n_g = X.shape[0]

    def true_obj(w):
        v = xbar - X.T @ w
        return (1.0 - cfg.xi) * (w @ w) + cfg.xi * _norm(v, cfg.norm) ** 2

    w0 = np.full(n_g, 1.0 / n_g)
    if n_g == 1:
        F = true_obj(w0)
        return _finish(w0, X, xbar, cfg, F, 0, True, [F])

    spectral = np.linalg.norm(X, 2) ** 2 if X.size else 0.0
    L2 = 2.0 * (1.0 - cfg.xi) + 2.0 * cfg.xi * spectral
    best = [w0.copy(), true_obj(w0)]
    history = [best[1]]

    if cfg.norm is Norm.L2:
        f = true_obj

        def g(w):
            return 2.0 * (1.0 - cfg.xi) * w - 2.0 * cfg.xi * (X @ (xbar - X.T @ w))

        w, _, iters, converged = _fista(
            f, g, w0, L2, cfg.max_iterations, cfg.tolerance, true_obj, best, history, residual_tol=1e-9
        )
        if converged:
            # exact quadratic: the final iterate is the best one bar rounding
            best = [w, true_obj(w)] if true_obj(w) <= best[1] else best
        return _finish(best[0], X, xbar, cfg, best[1], iters, converged, history)

    v0 = xbar - X.T @ w0
    mu = float(np.max(v0 * v0))
    if mu == 0.0:
        # balance term vanishes at the ridge minimizer
        return _finish(w0, X, xbar, cfg, best[1], 0, True, history)
    mu_min = mu * 1e-7
    w, L = w0, L2
    iters, converged = 0, False
    while True:
        f, g = _smoothed_linf(X, xbar, cfg.xi, mu)
        budget = cfg.max_iterations - iters
        if budget <= 0:
            converged = False
            break
        w, L, k, stage_ok = _fista(
            f, g, w, max(L, L2), budget, cfg.tolerance, true_obj, best, history, L_floor=2.0 * (1.0 - cfg.xi)
        )
        iters += k
        if mu <= mu_min:
            converged = stage_ok
            break
        mu = max(mu * 0.1, mu_min)
    return _finish(best[0], X, xbar, cfg, best[1], iters, converged, history)


def _finish(w, X, xbar, cfg, F, iters, converged, history) -> BalancingWeights:
    w = np.maximum(np.asarray(w, dtype=float), 0.0)
    w /= w.sum()
    v = xbar - X.T @ w
    F = float((1.0 - cfg.xi) * (w @ w) + cfg.xi * _norm(v, cfg.norm) ** 2)
    if not converged:
        warnings.warn(
            f"balancing solver stopped after {iters} iterations without meeting tolerance",
            NotConvergedWarning,
            stacklevel=3,
        )
    h = np.minimum.accumulate(np.asarray(history, dtype=float)) if history else np.zeros(0)
    w.setflags(write=False)
    h.setflags(write=False)
    return BalancingWeights(
        weights=w,
        achieved_imbalance=_norm(v, cfg.norm),
        objective_value=F,
        iterations=int(iters),
        converged=bool(converged),
        history=h,
    )


def balance_report(
    w: BalancingWeights | np.ndarray,
    group_features,
    target,
    norm: Norm = Norm.LINF,
    weight_cap: float | None = None,
) -> BalanceReport:
    """Per-dimension imbalance before (uniform weights) and after balancing."""
    X, xbar = _check(group_features, target)
    weights = w.weights if isinstance(w, BalancingWeights) else np.asarray(w, dtype=float).ravel()
    if weights.shape[0] != X.shape[0]:
        raise DimensionMismatch(f"{weights.shape[0]} weights for {X.shape[0]} rows")
    norm = Norm(norm)
    before = xbar - X.T @ np.full(X.shape[0], 1.0 / X.shape[0])
    after = xbar - X.T @ weights
    rose = _norm(after, norm) > _norm(before, norm) + 1e-9
    return BalanceReport(
        imbalance_before=before,
        imbalance_after=after,
        l2_before=_norm(before, Norm.L2),
        l2_after=_norm(after, Norm.L2),
        linf_before=_norm(before, Norm.LINF),
        linf_after=_norm(after, Norm.LINF),
        norm=norm,
        imbalance_rose=bool(rose),
        weight_cap=weight_cap,
        exceeds_cap=bool(weight_cap is not None and np.any(weights > weight_cap)),
    )
