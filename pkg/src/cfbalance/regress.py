"""Weighted elastic-net and anchored-ridge regression.

All fits minimize a loss of the form ``(1/m) sum_i w_i (y_i - b - x_i beta)^2``
where the observation weights ``w`` are first rescaled to mean 1, so the
regularization strength means the same thing whatever the weights sum to. The
intercept ``b`` is never penalized; it is eliminated by weighted centering.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ._kernels import cd_gram
from .errors import (
    AllZeroWeights,
    DimensionMismatch,
    InsufficientData,
    NotConvergedWarning,
)

KKT_TOL = 1e-10
MAX_SWEEPS = 100_000
# held-out scoring only needs fold fits to validation precision
CV_KKT_TOL = 1e-7
CV_MAX_SWEEPS = 20_000


@dataclass(frozen=True)
class Coefficients:
    beta: np.ndarray
    intercept: float = 0.0
    lambda_used: float = 0.0
    alpha_used: float = 0.0
    converged: bool = True
    # objective after each coordinate-descent sweep (elastic-net fits only)
    history: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    def __post_init__(self):
        b = np.array(self.beta, dtype=float).ravel()
        if not (np.all(np.isfinite(b)) and np.isfinite(self.intercept)):
            raise ValueError("coefficients must be finite")
        b.setflags(write=False)
        object.__setattr__(self, "beta", b)
        object.__setattr__(self, "intercept", float(self.intercept))

    @property
    def d(self) -> int:
        return self.beta.shape[0]

    def to_raw(self, transform) -> "Coefficients":
        """Re-express coefficients fitted on ``transform.apply(X)`` in raw units."""
        beta = self.beta / transform.scale
        intercept = self.intercept - float(transform.center @ beta)
        return Coefficients(beta, intercept, self.lambda_used, self.alpha_used, self.converged)


@dataclass(frozen=True)
class CvResult:
    lambda_grid: np.ndarray
    cv_error: np.ndarray
    selected_lambda: float
    fold_count: int

    @property
    def selected_index(self) -> int:
        return int(np.flatnonzero(self.lambda_grid == self.selected_lambda)[0])


@dataclass(frozen=True)
class _Design:
    """Weighted-centered sufficient statistics of one fit."""

    G: np.ndarray  # Xc' W Xc / m
    c: np.ndarray  # Xc' W yc / m
    yy: float  # yc' W yc / m
    x_mean: np.ndarray
    y_mean: float


def _validate(X, y, obs_weights):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    y = np.asarray(y, dtype=float).ravel()
    m = X.shape[0]
    if y.shape[0] != m:
        raise DimensionMismatch(f"X has {m} rows, y has {y.shape[0]}")
    if obs_weights is None:
        w = np.ones(m)
    else:
        w = np.asarray(obs_weights, dtype=float).ravel()
        if w.shape[0] != m:
            raise DimensionMismatch(f"X has {m} rows, weights have {w.shape[0]}")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("observation weights must be finite and nonnegative")
    if m < 2:
        raise InsufficientData("need at least two observations")
    s = w.sum()
    if not s > 0:
        raise AllZeroWeights("all observation weights are zero")
    if np.all(w == w[0]):
        # constant weights are uniform; avoid rounding in the rescale
        return X, y, np.ones(m)
    return X, y, w * (m / s)


def _design(X, y, w, fit_intercept) -> _Design:
    m = X.shape[0]
    if fit_intercept:
        x_mean = (w @ X) / w.sum()
        y_mean = float(w @ y / w.sum())
    else:
        x_mean = np.zeros(X.shape[1])
        y_mean = 0.0
    Xc = X - x_mean
    yc = y - y_mean
    Xw = Xc * w[:, None]
    return _Design(Xw.T @ Xc / m, Xw.T @ yc / m, float(w @ (yc * yc)) / m, x_mean, y_mean)


def _kkt_violation(des: _Design, beta, l1, l2) -> float:
    g = des.G @ beta - des.c + l2 * beta
    v = np.where(beta > 0, np.abs(g + l1), np.where(beta < 0, np.abs(g - l1), np.maximum(np.abs(g) - l1, 0.0)))
    return float(v.max(initial=0.0))


def _polish(des: _Design, beta, l1, l2):
    """Exact solve on the current support and sign pattern, or None."""
    active = np.flatnonzero(beta)
    if active.size == 0:
        return None
    sign = np.sign(beta[active])
    A = des.G[np.ix_(active, active)] + l2 * np.eye(active.size)
    try:
        sol = np.linalg.solve(A, des.c[active] - l1 * sign)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.sign(sol) == sign):
        return None
    out = np.zeros_like(beta)
    out[active] = sol
    return out


def _objective(des: _Design, beta, l1, l2) -> float:
    return float(beta @ (des.G @ beta) - 2.0 * des.c @ beta + l2 * beta @ beta + 2.0 * l1 * np.abs(beta).sum())


def _solve_en(des: _Design, lam, alpha, beta0=None, kkt_tol=KKT_TOL, max_sweeps=MAX_SWEEPS, chunk=100):
    """Coordinate descent in chunks of sweeps, polishing between chunks.

    Returns ``(beta, objective history, converged)``; the history holds the
    full objective after every sweep and after every accepted polish.
    """
    d = des.c.shape[0]
    beta = np.zeros(d) if beta0 is None else np.array(beta0, dtype=float)
    l1, l2 = lam * alpha, lam * (1.0 - alpha)
    cmax = float(np.max(np.abs(des.c), initial=0.0))
    if alpha > 0 and l1 >= cmax * (1.0 - 1e-12):
        # at or above the threshold zero is optimal; skip rounding noise from CD
        return np.zeros(d), np.array([des.yy]), True
    tol = kkt_tol * max(1.0, cmax)
    parts = []
    done = 0
    ok = False
    while done < max_sweeps:
        hist = np.empty(min(chunk, max_sweeps - done))
        sweeps, viol = cd_gram(des.G, des.c, beta, l1, l2, hist.shape[0], tol, hist)
        parts.append(hist[:sweeps])
        done += sweeps
        if viol <= tol:
            ok = True
            break
        cand = _polish(des, beta, l1, l2)
        if cand is not None and _kkt_violation(des, cand, l1, l2) <= tol:
            f_cand = _objective(des, cand, l1, l2)
            if f_cand <= _objective(des, beta, l1, l2):
                beta = cand
                parts.append(np.array([f_cand]))
                ok = True
                break
    hist = np.concatenate(parts) if parts else np.zeros(0)
    return beta, hist + des.yy, ok


def lambda_max(X, y, obs_weights=None, alpha: float = 0.9, fit_intercept: bool = True) -> float:
    """Smallest penalty at which every penalized coefficient is zero.

    With the loss and penalty scaled as above the zero vector is optimal iff
    ``|(1/m) sum_i w_i x_ij (y_i - ȳ_w)| <= lambda * alpha`` for all ``j``.
    A ridge (``alpha == 0``) path has no such threshold, so the ``alpha=0.001``
    value is used instead.
    """
    X, y, w = _validate(X, y, obs_weights)
    des = _design(X, y, w, fit_intercept)
    return _lambda_max(des, alpha)


def _lambda_max(des: _Design, alpha: float) -> float:
    a = max(alpha, 1e-3)
    lm = float(np.max(np.abs(des.c), initial=0.0)) / a
    return lm if lm > 0 else 1e-12


def fit_weighted_elastic_net(
    X,
    y,
    obs_weights=None,
    lam: float = 0.0,
    alpha: float = 0.9,
    fit_intercept: bool = True,
    *,
    _warm: np.ndarray | None = None,
) -> Coefficients:
    """Minimize ``(1/m) sum w (y - b - X beta)^2 + lam ((1-alpha)||beta||^2 + 2 alpha ||beta||_1)``.

    Parameters
    ----------
    X : array, shape (m, d)
    y : array, shape (m,)
    obs_weights : array, shape (m,), optional
        Nonnegative weights, rescaled internally to mean 1. Uniform if omitted.
    lam : float
        Penalty strength, ``>= 0``.
    alpha : float
        Mixing parameter in ``[0, 1]``; 1 is the lasso, 0 is ridge.
    fit_intercept : bool
        Fit an unpenalized intercept.

    Returns
    -------
    Coefficients
        ``converged`` is False when the sweep cap was hit before the KKT
        conditions held to ``KKT_TOL``.
    """
    if lam < 0 or not 0.0 <= alpha <= 1.0:
        raise ValueError("need lam >= 0 and alpha in [0, 1]")
    X, y, w = _validate(X, y, obs_weights)
    des = _design(X, y, w, fit_intercept)
    beta, hist, ok = _solve_en(des, lam, alpha, _warm)
    if not ok:
        warnings.warn("elastic net hit the sweep cap before KKT tolerance", NotConvergedWarning, stacklevel=2)
    intercept = des.y_mean - float(des.x_mean @ beta) if fit_intercept else 0.0
    return Coefficients(beta, intercept, float(lam), float(alpha), ok, hist)


def elastic_net_objective(X, y, obs_weights, coef: Coefficients, lam: float, alpha: float) -> float:
    X, y, w = _validate(X, y, obs_weights)
    r = y - coef.intercept - X @ coef.beta
    b = coef.beta
    return float(w @ (r * r) / X.shape[0] + lam * ((1 - alpha) * (b @ b) + 2 * alpha * np.abs(b).sum()))


def elastic_net_smooth_gradient(X, y, obs_weights, beta, intercept, lam, alpha) -> np.ndarray:
    """Gradient in ``beta`` of the loss plus the ridge part of the penalty."""
    X, y, w = _validate(X, y, obs_weights)
    r = y - intercept - X @ beta
    return -2.0 * (X.T @ (w * r)) / X.shape[0] + 2.0 * lam * (1.0 - alpha) * np.asarray(beta)


def kkt_residual(X, y, obs_weights, coef: Coefficients) -> float:
    """Largest per-coordinate violation of the subgradient optimality conditions.

    Measured on half the loss gradient, ``(1/m) sum_i w_i x_ij r_i``.
    """
    X, y, w = _validate(X, y, obs_weights)
    lam, alpha = coef.lambda_used, coef.alpha_used
    r = y - coef.intercept - X @ coef.beta
    g = -(X.T @ (w * r)) / X.shape[0] + lam * (1 - alpha) * coef.beta
    b = coef.beta
    t = lam * alpha
    v = np.where(b > 0, np.abs(g + t), np.where(b < 0, np.abs(g - t), np.maximum(np.abs(g) - t, 0.0)))
    return float(v.max(initial=0.0))


def make_folds(m: int, folds: int, seed: int) -> list[np.ndarray]:
    perm = np.random.Generator(np.random.PCG64(seed)).permutation(m)
    return [np.sort(f) for f in np.array_split(perm, folds)]


def _fold_splits(X, y, w, folds, seed):
    m = X.shape[0]
    if folds < 2 or m < folds:
        raise InsufficientData(f"need folds >= 2 and at least {folds} observations, got m={m}")
    for val in make_folds(m, folds, seed):
        train = np.setdiff1d(np.arange(m), val, assume_unique=True)
        if train.size < 2 or w[train].sum() <= 0 or w[val].sum() <= 0:
            # a fold with no weighted mass on one side carries no evidence
            continue
        yield train, val


def cv_select_lambda(
    X,
    y,
    obs_weights=None,
    alpha: float = 0.9,
    folds: int = 10,
    grid_size: int = 100,
    seed: int = 0,
    fit_intercept: bool = True,
) -> CvResult:
    """K-fold selection of the elastic-net penalty on a log grid.

    The grid runs from ``lambda_max`` down to ``1e-4 * lambda_max``. Each
    fold fits the full path with warm starts and scores the weighted mean
    squared error on its held-out rows; ties go to the larger penalty.
    """
    X, y, w = _validate(X, y, obs_weights)
    if grid_size < 1:
        raise ValueError("grid_size must be at least 1")
    lmax = _lambda_max(_design(X, y, w, fit_intercept), alpha)
    grid = lmax * np.logspace(0.0, -4.0, grid_size) if grid_size > 1 else np.array([lmax])

    err = np.zeros(grid_size)
    used = 0
    for train, val in _fold_splits(X, y, w, folds, seed):
        wt = w[train] * (train.size / w[train].sum())
        des = _design(X[train], y[train], wt, fit_intercept)
        beta = np.zeros(X.shape[1])
        wv = w[val]
        for k, lam in enumerate(grid):
            beta, _, _ = _solve_en(des, lam, alpha, beta, CV_KKT_TOL, CV_MAX_SWEEPS)
            b0 = des.y_mean - float(des.x_mean @ beta) if fit_intercept else 0.0
            r = y[val] - b0 - X[val] @ beta
            err[k] += float(wv @ (r * r)) / wv.sum()
        used += 1
    if used == 0:
        raise InsufficientData("no fold has positive weight on both sides")
    err /= used
    k = int(np.argmin(err))
    return CvResult(grid, err, float(grid[k]), used)


def fit_cv_elastic_net(
    X, y, obs_weights=None, alpha=0.9, folds=10, grid_size=100, seed=0, fit_intercept=True
) -> tuple[Coefficients, CvResult]:
    cv = cv_select_lambda(X, y, obs_weights, alpha, folds, grid_size, seed, fit_intercept)
    return fit_weighted_elastic_net(X, y, obs_weights, cv.selected_lambda, alpha, fit_intercept), cv


def _anchored_solve(des: _Design, anchor_beta, lam_prime):
    d = des.c.shape[0]
    A = des.G + lam_prime * np.eye(d)
    rhs = des.c + lam_prime * anchor_beta
    if lam_prime > 0:
        return np.linalg.solve(A, rhs), True
    beta, _, rank, _ = np.linalg.lstsq(A, rhs, rcond=None)
    return beta, rank == d


def fit_anchored_ridge(
    X, y, obs_weights, anchor: Coefficients, lambda_prime: float, fit_intercept: bool = True
) -> Coefficients:
    """Minimize ``(1/m) sum w (y - b - X beta)^2 + lambda_prime ||beta - anchor.beta||^2``.

    Solved in closed form from ``(G + lambda_prime I) beta = c + lambda_prime anchor``
    on the weighted-centered design. At ``lambda_prime = 0`` a rank-deficient
    system yields the minimum-norm solution with ``converged=False``.
    """
    if lambda_prime < 0:
        raise ValueError("lambda_prime must be nonnegative")
    X, y, w = _validate(X, y, obs_weights)
    if anchor.d != X.shape[1]:
        raise DimensionMismatch(f"anchor has {anchor.d} coefficients, X has {X.shape[1]} columns")
    des = _design(X, y, w, fit_intercept)
    beta, ok = _anchored_solve(des, anchor.beta, lambda_prime)
    if not ok:
        warnings.warn("singular weighted design at lambda_prime=0; minimum-norm solution", NotConvergedWarning, stacklevel=2)
    intercept = des.y_mean - float(des.x_mean @ beta) if fit_intercept else 0.0
    return Coefficients(beta, intercept, float(lambda_prime), 0.0, ok)


def anchored_ridge_residual(X, y, obs_weights, anchor: Coefficients, coef: Coefficients, fit_intercept=True) -> float:
    """Max-abs residual of the anchored-ridge normal equations at ``coef``."""
    X, y, w = _validate(X, y, obs_weights)
    des = _design(X, y, w, fit_intercept)
    lp = coef.lambda_used
    r = (des.G + lp * np.eye(des.c.shape[0])) @ coef.beta - (des.c + lp * anchor.beta)
    return float(np.max(np.abs(r), initial=0.0))


def cv_select_anchored_lambda(
    X,
    y,
    obs_weights,
    anchor: Coefficients,
    folds: int = 10,
    grid_size: int = 100,
    seed: int = 0,
    fit_intercept: bool = True,
    refit_anchor: bool = True,
) -> CvResult:
    """K-fold choice of the anchoring strength.

    The grid is log-spaced over ``[1e-4, 1e4] * tr(G) / d`` where ``G`` is the
    weighted-centered Gram matrix over ``m``; held-out error is weighted like
    the training loss. With ``refit_anchor`` the anchor is refitted on each
    fold's training rows (unweighted, at its own ``lambda_used`` and
    ``alpha_used``) so that held-out rows never inform the anchor; otherwise
    the supplied anchor is reused in every fold.
    """
    X, y, w = _validate(X, y, obs_weights)
    des_full = _design(X, y, w, fit_intercept)
    d = X.shape[1]
    scale = float(np.trace(des_full.G)) / d
    if not scale > 0:
        scale = 1.0
    grid = scale * np.logspace(4.0, -4.0, grid_size) if grid_size > 1 else np.array([scale])

    err = np.zeros(grid.size)
    used = 0
    for train, val in _fold_splits(X, y, w, folds, seed):
        wt = w[train] * (train.size / w[train].sum())
        des = _design(X[train], y[train], wt, fit_intercept)
        evals, V = np.linalg.eigh(des.G)
        evals = np.maximum(evals, 0.0)
        Vc = V.T @ des.c
        if refit_anchor:
            ades = _design(X[train], y[train], np.ones(train.size), fit_intercept)
            ab, _, _ = _solve_en(
                ades, anchor.lambda_used, anchor.alpha_used, anchor.beta,
                kkt_tol=CV_KKT_TOL, max_sweeps=CV_MAX_SWEEPS,
            )
            Va = V.T @ ab
        else:
            Va = V.T @ anchor.beta
        Xv = X[val] @ V
        xm = des.x_mean @ V
        wv = w[val]
        for k, lp in enumerate(grid):
            z = (Vc + lp * Va) / (evals + lp)
            b0 = des.y_mean - float(xm @ z) if fit_intercept else 0.0
            r = y[val] - b0 - Xv @ z
            err[k] += float(wv @ (r * r)) / wv.sum()
        used += 1
    if used == 0:
        raise InsufficientData("no fold has positive weight on both sides")
    err /= used
    k = int(np.argmin(err))
    return CvResult(grid, err, float(grid[k]), used)


def predict(X, c: Coefficients) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1) if c.d == 1 else X.reshape(1, -1)
    if X.shape[1] != c.d:
        raise DimensionMismatch(f"X has {X.shape[1]} columns, coefficients have {c.d}")
    return X @ c.beta + c.intercept
