"""Benchmark data generators with known potential outcomes.

Every generator draws from ``numpy.random.Generator(PCG64(seed))`` in a fixed
order, so a seed pins the dataset bit for bit.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.optimize import brentq

from .data import ObservationalDataset, save_dataset
from .errors import BadCovariateShape, InvalidDims

PRNG = "numpy.random.PCG64"

IHDP_N = 747
IHDP_TREATED = 139
IHDP_D = 25
_IHDP_POOL = 985
_IHDP_CONTINUOUS = 6


@dataclass(frozen=True)
class SimulatedDataset:
    dataset: ObservationalDataset
    y1: np.ndarray
    y0: np.ndarray
    true_ite: np.ndarray
    generator: str
    seed: int
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("y1", "y0", "true_ite"):
            a = np.array(getattr(self, name), dtype=float)
            if a.shape != (self.dataset.n,):
                raise ValueError(f"{name} must have length {self.dataset.n}")
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        observed = np.where(self.dataset.treatment == 1, self.y1, self.y0)
        if not np.array_equal(observed, self.dataset.outcome):
            raise ValueError("observed outcome must equal the selected potential outcome")

    @property
    def n(self) -> int:
        return self.dataset.n

    def take(self, idx) -> "SimulatedDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return SimulatedDataset(
            self.dataset.take(idx), self.y1[idx], self.y0[idx], self.true_ite[idx],
            self.generator, self.seed, self.params,
        )


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _assemble(X, W, y1, y0, tau, generator, seed, params) -> SimulatedDataset:
    y = np.where(W == 1, y1, y0)
    ds = ObservationalDataset(X, W.astype(np.int64), y)
    return SimulatedDataset(ds, y1, y0, tau, generator, seed, params)


def _check_dims(n, p):
    if n < 1:
        raise InvalidDims(f"n must be positive, got {n}")
    if p < 10:
        raise InvalidDims(f"p must be at least 10 (ten active propensity coefficients), got {p}")


def linear_propensity(score: np.ndarray) -> np.ndarray:
    """``1 - (1 + exp(s))^(-1.23)`` evaluated without overflow."""
    return -np.expm1(-1.23 * np.logaddexp(0.0, score))


def complex_effect(score: np.ndarray) -> np.ndarray:
    """``0.89 * log(1 + exp(-2 - 2 s))``; this is both the ITE and the log-odds driver."""
    return 0.89 * np.logaddexp(0.0, -2.0 - 2.0 * score)


def gen_linear_outcome(n: int = 1500, p: int = 100, seed: int = 0, noise: bool = True) -> SimulatedDataset:
    """Sparse linear outcome with constant effect 10 and a skewed logistic propensity.

    ``X ~ N(0, I_p)``, ``W ~ Bernoulli(1 - (1 + exp(X beta_W))^-1.23)`` with
    ``beta_W`` ten ones then zeros, ``Y = X beta + 10 W + eps`` and
    ``beta_j = 1 / j^2``. The noise draw is shared by both potential outcomes.
    """
    _check_dims(n, p)
    rng = _rng(seed)
    X = rng.standard_normal((n, p))
    theta = linear_propensity(X[:, :10].sum(axis=1))
    W = (rng.random(n) < theta).astype(np.int64)
    eps = rng.standard_normal(n) if noise else np.zeros(n)
    beta = 1.0 / np.arange(1, p + 1) ** 2
    y0 = X @ beta + eps
    y1 = y0 + 10.0
    return _assemble(X, W, y1, y0, np.full(n, 10.0), "linear", seed, {"n": n, "p": p, "noise": noise})


def gen_complex_outcome(n: int = 1500, p: int = 100, seed: int = 0, noise: bool = True) -> SimulatedDataset:
    """Dense outcome with heterogeneous effect ``theta_i``.

    ``theta_i = 0.89 log(1 + exp(-2 - 2 X_i beta_W))``,
    ``W ~ Bernoulli(1 - exp(-theta_i))``, ``beta_j = 1`` and
    ``Y = X beta + theta (2W - 1) / 2 + eps`` with shared noise.
    """
    _check_dims(n, p)
    rng = _rng(seed)
    X = rng.standard_normal((n, p))
    theta = complex_effect(X[:, :10].sum(axis=1))
    W = (rng.random(n) < -np.expm1(-theta)).astype(np.int64)
    eps = rng.standard_normal(n) if noise else np.zeros(n)
    base = X.sum(axis=1) + eps
    y1 = base + theta / 2.0
    y0 = base - theta / 2.0
    return _assemble(X, W, y1, y0, theta, "complex", seed, {"n": n, "p": p, "noise": noise})


def surrogate_ihdp_covariates(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Synthetic stand-in for the IHDP covariates and treatment.

    Draws a pool of 985 units with 6 standard-normal and 19 Bernoulli(0.5)
    columns, assigns treatment to about 25% of them through a logistic rule on
    the first column, keeps 608 random controls, and removes treated units
    with first covariate above its pool 60th percentile (random order) until
    139 remain. Returns ``(X, W)`` with 747 rows in pool order.
    """
    n_control = IHDP_N - IHDP_TREATED
    while True:
        cont = rng.standard_normal((_IHDP_POOL, _IHDP_CONTINUOUS))
        binary = (rng.random((_IHDP_POOL, IHDP_D - _IHDP_CONTINUOUS)) < 0.5).astype(float)
        X = np.hstack([cont, binary])
        x1 = X[:, 0]
        shift = brentq(lambda a: np.mean(1.0 / (1.0 + np.exp(-(a + x1)))) - 0.25, -20.0, 20.0)
        W = rng.random(_IHDP_POOL) < 1.0 / (1.0 + np.exp(-(shift + x1)))
        treated = np.flatnonzero(W)
        controls = np.flatnonzero(~W)
        if treated.size < IHDP_TREATED or controls.size < n_control:
            continue
        keep_c = rng.choice(controls, n_control, replace=False)
        cut = np.quantile(x1, 0.6)
        order = rng.permutation(treated)
        high = [i for i in order if x1[i] > cut]
        low = [i for i in order if x1[i] <= cut]
        excess = treated.size - IHDP_TREATED
        drop = high[:excess]
        if excess > len(high):
            drop = high + low[: excess - len(high)]
        keep_t = np.setdiff1d(treated, drop)
        rows = np.sort(np.concatenate([keep_c, keep_t]))
        return X[rows], W[rows].astype(np.int64)


def ihdp_response_means(design: np.ndarray, beta0: np.ndarray, beta1: np.ndarray, response: str = "setting_b"):
    """Noise-free potential outcomes on a design ``[1, X + 0.5]``.

    ``setting_b``: ``E Y(0) = sqrt(exp(D beta0))`` and ``E Y(1) = D beta1``.
    ``linear``: ``E Y(0) = D beta0`` so that the effect is linear in ``X``.
    """
    lin0 = design @ beta0
    mu0 = np.exp(0.5 * lin0) if response == "setting_b" else lin0
    return design @ beta1, mu0


def gen_ihdp_style(
    covariates: np.ndarray | None = None,
    seed: int = 0,
    treatment: np.ndarray | None = None,
    noise: bool = True,
    response: str = "setting_b",
) -> SimulatedDataset:
    """IHDP-shaped benchmark (747 units, 139 treated, 25 covariates).

    Supply the real covariates and treatment vector through ``covariates``
    and ``treatment``; otherwise a surrogate sample is drawn. Outcome
    coefficients: ``(beta0)_j`` is 0 w.p. 0.6 and each of 0.1..0.4 w.p. 0.1;
    ``(beta1)_j = 1 / j`` for ``j = 1..26``. Each arm gets its own noise draw.
    """
    if response not in ("setting_b", "linear"):
        raise ValueError(f"unknown response {response!r}")
    rng = _rng(seed)
    if covariates is None:
        X, W = surrogate_ihdp_covariates(rng)
        source = "surrogate"
    else:
        X = np.asarray(covariates, dtype=float)
        if X.shape != (IHDP_N, IHDP_D):
            raise BadCovariateShape(f"expected shape ({IHDP_N}, {IHDP_D}), got {X.shape}")
        if treatment is None:
            raise ValueError("treatment vector required with supplied covariates")
        W = np.asarray(treatment, dtype=np.int64)
        source = "supplied"
    k = IHDP_D + 1
    beta0 = rng.choice([0.0, 0.1, 0.2, 0.3, 0.4], size=k, p=[0.6, 0.1, 0.1, 0.1, 0.1])
    beta1 = 1.0 / np.arange(1, k + 1)
    D = np.hstack([np.ones((X.shape[0], 1)), X + 0.5])
    mu1, mu0 = ihdp_response_means(D, beta0, beta1, response)
    if noise:
        y0 = mu0 + rng.standard_normal(X.shape[0])
        y1 = mu1 + rng.standard_normal(X.shape[0])
    else:
        y0, y1 = mu0, mu1
    params = {"covariates": source, "noise": noise, "response": response, "beta0": beta0.tolist()}
    return _assemble(X, W, y1, y0, y1 - y0, "ihdp", seed, params)


def true_ite(sim: SimulatedDataset) -> np.ndarray:
    """Realized unit-level effects ``y1 - y0``."""
    return sim.y1 - sim.y0


GENERATORS = {
    "linear": gen_linear_outcome,
    "complex": gen_complex_outcome,
    "ihdp": gen_ihdp_style,
}


def generate(name: str, seed: int, n: int | None = None, p: int | None = None, **kw) -> SimulatedDataset:
    if name == "ihdp":
        return gen_ihdp_style(seed=seed, **kw)
    kwargs = {k: v for k, v in (("n", n), ("p", p)) if v is not None}
    return GENERATORS[name](seed=seed, **kwargs, **kw)


def metadata(sim: SimulatedDataset) -> dict[str, Any]:
    return {
        "generator": sim.generator,
        "seed": sim.seed,
        "params": sim.params,
        "prng": PRNG,
        "numpy": np.__version__,
        "n": sim.n,
        "d": sim.dataset.d,
    }


def save_simulated(sim: SimulatedDataset, out_dir: str | os.PathLike) -> list[str]:
    """Write ``data.csv``, ``potential_outcomes.csv`` and ``metadata.json``."""
    os.makedirs(out_dir, exist_ok=True)
    data_path = os.path.join(out_dir, "data.csv")
    po_path = os.path.join(out_dir, "potential_outcomes.csv")
    meta_path = os.path.join(out_dir, "metadata.json")
    save_dataset(sim.dataset, data_path)
    with open(po_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("y1,y0\n")
        for a, b in zip(sim.y1, sim.y0):
            fh.write(f"{float(a)!r},{float(b)!r}\n")
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(metadata(sim), fh, indent=1, sort_keys=True)
        fh.write("\n")
    return [data_path, po_path, meta_path]
