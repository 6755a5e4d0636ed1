"""ITE estimators built from balancing weights and per-arm regressions.

Three pipelines share one preprocessing step: features are standardized with
a single transform fitted on all training rows, and the balancing target is
the mean of the (standardized) targeted population.

``algo1``
    Counterfactual balancing. Solve balancing weights per arm, then fit a
    weighted elastic net per arm with cross-validated penalty.
``algo2``
    Factual-counterfactual balancing. Same weights; fit unweighted elastic
    nets per arm as anchors, then refit each arm by weighted ridge shrunk
    toward its anchor.
``olsr``
    Unweighted elastic net per arm.

The estimated effect is always ``predict(x, treated) - predict(x, control)``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field, replace
from typing import Any

import numpy as np

from .balance import BalanceConfig, BalancingWeights, Norm, solve_weights
from .data import (
    ObservationalDataset,
    StandardizationTransform,
    TargetMoments,
    fit_standardization,
    target_moments,
)
from .errors import DegenerateGroup, DimensionMismatch
from .regress import (
    Coefficients,
    CvResult,
    cv_select_anchored_lambda,
    fit_anchored_ridge,
    fit_cv_elastic_net,
    predict,
)

MODEL_FORMAT = "cfbalance-model/1"


class Method(str, enum.Enum):
    COUNTERFACTUAL_BALANCING = "algo1"
    FACTUAL_COUNTERFACTUAL_BALANCING = "algo2"
    OLS_REGULARIZED = "olsr"

    @property
    def uses_balancing(self) -> bool:
        return self is not Method.OLS_REGULARIZED


@dataclass(frozen=True)
class EstimatorConfig:
    method: Method = Method.FACTUAL_COUNTERFACTUAL_BALANCING
    balance: BalanceConfig = field(default_factory=BalanceConfig)
    alpha: float = 0.9
    folds: int = 10
    grid_size: int = 100
    seed: int = 0
    fit_intercept: bool = True
    # how the anchoring strength of the two-stage refit is chosen:
    # "cv" runs K-fold with per-fold anchor refits, "step3" reuses the anchor penalty
    anchor_rule: str = "cv"
    # fixes the anchoring strength, overriding anchor_rule
    lambda_prime: float | None = None
    # replaces solved balancing weights by uniform ones (diagnostic)
    uniform_weights: bool = False

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.folds < 2:
            raise ValueError("folds must be at least 2")
        if self.grid_size < 1:
            raise ValueError("grid_size must be at least 1")
        if self.anchor_rule not in ("step3", "cv"):
            raise ValueError(f"unknown anchor_rule {self.anchor_rule!r}")
        if self.lambda_prime is not None and self.lambda_prime < 0:
            raise ValueError("lambda_prime must be nonnegative")

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["method"] = self.method.value
        d["balance"]["norm"] = self.balance.norm.value
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EstimatorConfig":
        d = dict(d)
        d["balance"] = BalanceConfig(**d.get("balance", {}))
        return cls(**d)


@dataclass(frozen=True)
class IteModel:
    method: Method
    beta_treated: Coefficients
    beta_control: Coefficients
    target: TargetMoments
    standardization: StandardizationTransform
    weights_treated: BalancingWeights | None = None
    weights_control: BalancingWeights | None = None
    # unweighted step-3 fits of the two-stage method
    anchor_treated: Coefficients | None = None
    anchor_control: Coefficients | None = None
    config: EstimatorConfig = field(default_factory=EstimatorConfig)

    def __post_init__(self):
        if self.beta_treated.d != self.beta_control.d:
            raise DimensionMismatch("arm coefficient vectors differ in length")
        has_w = self.weights_treated is not None and self.weights_control is not None
        if has_w != Method(self.method).uses_balancing:
            raise ValueError("balancing weights must be present iff the method balances")

    @property
    def d(self) -> int:
        return self.beta_treated.d

    def raw_coefficients(self) -> tuple[Coefficients, Coefficients]:
        """Arm coefficients expressed on the original feature scale."""
        t = self.standardization
        return self.beta_treated.to_raw(t), self.beta_control.to_raw(t)


def _stage_seed(seed: int, stage: int) -> int:
    # arm-independent so that relabelling the arms reuses the same folds
    return int(np.random.SeedSequence([seed, stage]).generate_state(1)[0])


@dataclass
class _Prepared:
    Zt: np.ndarray
    yt: np.ndarray
    Zc: np.ndarray
    yc: np.ndarray
    target: TargetMoments
    transform: StandardizationTransform


def _prepare(train: ObservationalDataset, target_features=None) -> _Prepared:
    for label, count in (("treated", train.n_treated), ("control", train.n_control)):
        if count < 2:
            raise DegenerateGroup(f"{label} group has {count} units; at least 2 required")
    transform = fit_standardization(train.features)
    Z = transform.apply(train.features)
    if target_features is None:
        target = target_moments(Z)
    else:
        target = target_moments(transform.apply(np.asarray(target_features, dtype=float)))
    mask = train.treatment == 1
    return _Prepared(Z[mask], train.outcome[mask], Z[~mask], train.outcome[~mask], target, transform)


def _weights(Z, target, cfg: EstimatorConfig) -> BalancingWeights:
    if cfg.uniform_weights:
        n = Z.shape[0]
        w = np.full(n, 1.0 / n)
        v = target.means - Z.T @ w
        imb = float(np.sqrt(v @ v)) if cfg.balance.norm is Norm.L2 else float(np.abs(v).max(initial=0.0))
        obj = (1 - cfg.balance.xi) / n + cfg.balance.xi * imb**2
        return BalancingWeights(w, imb, obj, 0, True)
    return solve_weights(Z, target, cfg.balance)


def _en(Z, y, w, cfg: EstimatorConfig) -> tuple[Coefficients, CvResult]:
    folds = min(cfg.folds, Z.shape[0])
    return fit_cv_elastic_net(
        Z, y, w, cfg.alpha, folds, cfg.grid_size, _stage_seed(cfg.seed, 0), cfg.fit_intercept
    )


def fit_counterfactual_balancing(
    train: ObservationalDataset, cfg: EstimatorConfig | None = None, target_features=None
) -> IteModel:
    cfg = replace(cfg or EstimatorConfig(), method=Method.COUNTERFACTUAL_BALANCING)
    p = _prepare(train, target_features)
    eta = _weights(p.Zt, p.target, cfg)
    gamma = _weights(p.Zc, p.target, cfg)
    bt, _ = _en(p.Zt, p.yt, eta.weights, cfg)
    bc, _ = _en(p.Zc, p.yc, gamma.weights, cfg)
    return IteModel(cfg.method, bt, bc, p.target, p.transform, eta, gamma, config=cfg)


def fit_factual_counterfactual_balancing(
    train: ObservationalDataset, cfg: EstimatorConfig | None = None, target_features=None
) -> IteModel:
    cfg = replace(cfg or EstimatorConfig(), method=Method.FACTUAL_COUNTERFACTUAL_BALANCING)
    p = _prepare(train, target_features)
    eta = _weights(p.Zt, p.target, cfg)
    gamma = _weights(p.Zc, p.target, cfg)
    anchors, finals = [], []
    for Z, y, w in ((p.Zt, p.yt, eta.weights), (p.Zc, p.yc, gamma.weights)):
        anchor, _ = _en(Z, y, None, cfg)
        if cfg.lambda_prime is not None:
            lp = cfg.lambda_prime
        elif cfg.anchor_rule == "step3":
            lp = anchor.lambda_used
        else:
            cv = cv_select_anchored_lambda(
                Z, y, w, anchor, min(cfg.folds, Z.shape[0]), cfg.grid_size,
                _stage_seed(cfg.seed, 1), cfg.fit_intercept,
            )
            lp = cv.selected_lambda
        anchors.append(anchor)
        finals.append(fit_anchored_ridge(Z, y, w, anchor, lp, cfg.fit_intercept))
    return IteModel(
        cfg.method, finals[0], finals[1], p.target, p.transform, eta, gamma,
        anchor_treated=anchors[0], anchor_control=anchors[1], config=cfg,
    )


def fit_ols_regularized_baseline(
    train: ObservationalDataset, cfg: EstimatorConfig | None = None, target_features=None
) -> IteModel:
    cfg = replace(cfg or EstimatorConfig(), method=Method.OLS_REGULARIZED)
    p = _prepare(train, target_features)
    bt, _ = _en(p.Zt, p.yt, None, cfg)
    bc, _ = _en(p.Zc, p.yc, None, cfg)
    return IteModel(cfg.method, bt, bc, p.target, p.transform, config=cfg)


_FITTERS = {
    Method.COUNTERFACTUAL_BALANCING: fit_counterfactual_balancing,
    Method.FACTUAL_COUNTERFACTUAL_BALANCING: fit_factual_counterfactual_balancing,
    Method.OLS_REGULARIZED: fit_ols_regularized_baseline,
}


def fit(train: ObservationalDataset, cfg: EstimatorConfig | None = None, target_features=None) -> IteModel:
    """Dispatch on ``cfg.method``."""
    cfg = cfg or EstimatorConfig()
    return _FITTERS[cfg.method](train, cfg, target_features)


def estimate_ite(model: IteModel, X_new) -> np.ndarray:
    X = np.asarray(X_new, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != model.d:
        raise DimensionMismatch(f"model expects {model.d} features, got {X.shape[1]}")
    Z = model.standardization.apply(X)
    return predict(Z, model.beta_treated) - predict(Z, model.beta_control)


# -- serialization -----------------------------------------------------------


def _coef_dict(c: Coefficients | None) -> dict | None:
    if c is None:
        return None
    return {
        "beta": c.beta.tolist(),
        "intercept": c.intercept,
        "lambda_used": c.lambda_used,
        "alpha_used": c.alpha_used,
        "converged": c.converged,
    }


def _coef_from(d: dict | None) -> Coefficients | None:
    if d is None:
        return None
    return Coefficients(np.array(d["beta"], dtype=float), d["intercept"], d["lambda_used"], d["alpha_used"], d["converged"])


def _weights_dict(w: BalancingWeights | None) -> dict | None:
    if w is None:
        return None
    return {
        "weights": w.weights.tolist(),
        "achieved_imbalance": w.achieved_imbalance,
        "objective_value": w.objective_value,
        "iterations": w.iterations,
        "converged": w.converged,
    }


def _weights_from(d: dict | None) -> BalancingWeights | None:
    if d is None:
        return None
    return BalancingWeights(
        np.array(d["weights"], dtype=float), d["achieved_imbalance"], d["objective_value"], d["iterations"], d["converged"]
    )


def model_to_dict(model: IteModel) -> dict[str, Any]:
    raw_t, raw_c = model.raw_coefficients()
    return {
        "format": MODEL_FORMAT,
        "method": model.method.value,
        "d": model.d,
        "beta_treated": _coef_dict(model.beta_treated),
        "beta_control": _coef_dict(model.beta_control),
        "raw_beta_treated": raw_t.beta.tolist(),
        "raw_intercept_treated": raw_t.intercept,
        "raw_beta_control": raw_c.beta.tolist(),
        "raw_intercept_control": raw_c.intercept,
        "anchor_treated": _coef_dict(model.anchor_treated),
        "anchor_control": _coef_dict(model.anchor_control),
        "standardization": {"center": model.standardization.center.tolist(), "scale": model.standardization.scale.tolist()},
        "target": model.target.means.tolist(),
        "weights_treated": _weights_dict(model.weights_treated),
        "weights_control": _weights_dict(model.weights_control),
        "converged": {
            "balance_treated": None if model.weights_treated is None else model.weights_treated.converged,
            "balance_control": None if model.weights_control is None else model.weights_control.converged,
            "regress_treated": model.beta_treated.converged,
            "regress_control": model.beta_control.converged,
        },
        "config": model.config.to_dict(),
    }


def model_from_dict(d: dict[str, Any]) -> IteModel:
    if d.get("format") != MODEL_FORMAT:
        raise ValueError(f"unsupported model format {d.get('format')!r}")
    st = d["standardization"]
    return IteModel(
        method=Method(d["method"]),
        beta_treated=_coef_from(d["beta_treated"]),
        beta_control=_coef_from(d["beta_control"]),
        target=TargetMoments(np.array(d["target"], dtype=float)),
        standardization=StandardizationTransform(np.array(st["center"]), np.array(st["scale"])),
        weights_treated=_weights_from(d["weights_treated"]),
        weights_control=_weights_from(d["weights_control"]),
        anchor_treated=_coef_from(d["anchor_treated"]),
        anchor_control=_coef_from(d["anchor_control"]),
        config=EstimatorConfig.from_dict(d["config"]),
    )


def dumps_model(model: IteModel) -> str:
    return json.dumps(model_to_dict(model), indent=1)


def loads_model(text: str) -> IteModel:
    return model_from_dict(json.loads(text))
