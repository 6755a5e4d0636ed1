"""PEHE scoring, replicated benchmark tables and error-bound diagnostics."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Mapping, Sequence, Union

import numpy as np

from .balance import Norm
from .data import ObservationalDataset, split_indices
from .errors import EmptyInput, DimensionMismatch, MissingAnchors, NonFiniteValue
from .estimator import EstimatorConfig, IteModel, Method, estimate_ite, fit
from .simulate import SimulatedDataset, generate

# name -> (method, balancing norm)
STANDARD_METHODS: dict[str, tuple[str, str]] = {
    "algo1-l2": ("algo1", "l2"),
    "algo1-linf": ("algo1", "linf"),
    "algo2-l2": ("algo2", "l2"),
    "algo2-linf": ("algo2", "linf"),
    "olsr": ("olsr", "linf"),
}

# suite -> (generator, test size)
SUITES: dict[str, tuple[str, int]] = {
    "data1": ("linear", 500),
    "data2": ("complex", 500),
    "data3": ("ihdp", 247),
}

# callable(train, test, seed) -> estimated effects on the test rows
MethodFn = Callable[[SimulatedDataset, SimulatedDataset, int], np.ndarray]
MethodSpec = Union[str, MethodFn]


def pehe(tau_hat, y1, y0) -> float:
    """Root-mean-square error between ``tau_hat`` and ``y1 - y0``."""
    tau_hat = np.asarray(tau_hat, dtype=float).ravel()
    y1 = np.asarray(y1, dtype=float).ravel()
    y0 = np.asarray(y0, dtype=float).ravel()
    if tau_hat.size == 0:
        raise EmptyInput("PEHE needs at least one unit")
    if not tau_hat.size == y1.size == y0.size:
        raise DimensionMismatch(f"lengths differ: {tau_hat.size}, {y1.size}, {y0.size}")
    for name, a in (("tau_hat", tau_hat), ("y1", y1), ("y0", y0)):
        if not np.all(np.isfinite(a)):
            raise NonFiniteValue(f"{name} contains non-finite values")
    e = tau_hat - (y1 - y0)
    return float(np.sqrt(np.mean(e * e)))


@dataclass(frozen=True)
class ReportRow:
    method: str
    dataset: str
    values: tuple[float, ...]
    seeds: tuple[int, ...]
    # (seed, error message) for replications that raised
    failures: tuple[tuple[int, str], ...] = ()

    def __post_init__(self):
        if len(self.values) != len(self.seeds):
            raise ValueError("one seed per value")
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError("replication values must be finite")

    @property
    def count(self) -> int:
        return len(self.values)

    @property
    def mean(self) -> float | None:
        return float(np.mean(self.values)) if self.values else None

    @property
    def sd(self) -> float | None:
        """Sample standard deviation; ``None`` below two replications."""
        return float(np.std(self.values, ddof=1)) if len(self.values) >= 2 else None

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "dataset": self.dataset,
            "mean_pehe": self.mean,
            "sd_pehe": self.sd,
            "R": self.count,
            "values": list(self.values),
            "seeds": list(self.seeds),
            "failures": [{"seed": s, "error": e} for s, e in self.failures],
        }


def _fmt(v: float | None) -> str:
    return "" if v is None else repr(float(v))


@dataclass(frozen=True)
class ReportTable:
    rows: tuple[ReportRow, ...]
    meta: Mapping[str, Any] = field(default_factory=dict)

    def row(self, method: str, dataset: str) -> ReportRow:
        for r in self.rows:
            if r.method == method and r.dataset == dataset:
                return r
        raise KeyError((method, dataset))

    def means(self, dataset: str) -> dict[str, float | None]:
        return {r.method: r.mean for r in self.rows if r.dataset == dataset}

    def merge(self, other: "ReportTable") -> "ReportTable":
        meta = dict(self.meta)
        meta.update(other.meta)
        return ReportTable(self.rows + other.rows, meta)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["method", "dataset", "mean_pehe", "sd_pehe", "R", "failed"])
        for r in self.rows:
            writer.writerow([r.method, r.dataset, _fmt(r.mean), _fmt(r.sd), r.count, len(r.failures)])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {"meta": dict(self.meta), "rows": [r.to_dict() for r in self.rows]}
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    def format(self) -> str:
        lines = []
        for r in self.rows:
            sd = "" if r.sd is None else f" +/- {r.sd:.3f}"
            mean = "failed" if r.mean is None else f"{r.mean:.3f}{sd}"
            lines.append(f"{r.dataset:6s} {r.method:11s} {mean}  (R={r.count})")
        return "\n".join(lines)


def standard_method(name: str, base: EstimatorConfig | None = None) -> MethodFn:
    """Wrap a named pipeline from ``STANDARD_METHODS`` as a benchmark method."""
    if name not in STANDARD_METHODS:
        raise ValueError(f"unknown method {name!r}; choose from {sorted(STANDARD_METHODS)}")
    return _StandardMethod(name, base or EstimatorConfig())


@dataclass(frozen=True)
class _StandardMethod:
    name: str
    base: EstimatorConfig

    def __call__(self, train: SimulatedDataset, test: SimulatedDataset, seed: int) -> np.ndarray:
        method, norm = STANDARD_METHODS[self.name]
        bal = replace(self.base.balance, norm=Norm(norm))
        cfg = replace(self.base, method=Method(method), seed=seed, balance=bal)
        return estimate_ite(fit(train.dataset, cfg), test.dataset.features)


def _resolve(methods: Sequence[MethodSpec] | Mapping[str, MethodSpec]) -> list[tuple[str, MethodFn]]:
    items = methods.items() if isinstance(methods, Mapping) else [(None, m) for m in methods]
    out = []
    for name, m in items:
        if isinstance(m, str):
            out.append((name or m, standard_method(m)))
        else:
            out.append((name or getattr(m, "__name__", repr(m)), m))
    return out


def _one_replication(generator, gen_kwargs, test_size, seed, resolved):
    sim = generate(generator, seed=seed, **gen_kwargs)
    train_idx, test_idx = split_indices(sim.n, test_size, seed)
    train, test = sim.take(train_idx), sim.take(test_idx)
    out = []
    for _, fn in resolved:
        try:
            tau = fn(train, test, seed)
            out.append((pehe(tau, test.y1, test.y0), None))
        except Exception as exc:  # recorded per replication, excluded from aggregates
            out.append((None, f"{type(exc).__name__}: {exc}"))
    return out


def replicate_experiment(
    generator: str,
    methods: Sequence[MethodSpec] | Mapping[str, MethodSpec] = tuple(STANDARD_METHODS),
    replications: int = 10,
    base_seed: int = 1000,
    test_size: int | None = None,
    dataset: str | None = None,
    gen_kwargs: Mapping[str, Any] | None = None,
    jobs: int = 1,
) -> ReportTable:
    """Score each method on ``replications`` independently generated datasets.

    Replication ``r`` (1-based) draws the data with seed ``base_seed + r``,
    splits it with the same seed into train and test, and passes that seed
    on to each method. A method that raises in one replication is logged in
    the row's ``failures`` and left out of its mean and standard deviation.

    Parameters
    ----------
    generator : str
        ``linear``, ``complex``, ``ihdp`` or a suite name ``data1``-``data3``.
    methods : sequence or mapping
        Names from ``STANDARD_METHODS`` or callables ``f(train, test, seed)``
        returning effects for the test rows.
    test_size : int, optional
        Defaults to the suite's size (500, 500, 247).
    jobs : int
        Worker processes; replications are independent, so the table does
        not depend on this value.
    """
    if replications < 1:
        raise ValueError("replications must be at least 1")
    if generator in SUITES:
        dataset = dataset or generator
        generator, default_test = SUITES[generator]
    else:
        default_test = {g: t for g, t in SUITES.values()}.get(generator)
        dataset = dataset or generator
    test_size = test_size if test_size is not None else default_test
    if test_size is None:
        raise ValueError(f"no default test size for generator {generator!r}")
    gen_kwargs = dict(gen_kwargs or {})
    resolved = _resolve(methods)
    seeds = [base_seed + r for r in range(1, replications + 1)]
    args = [(generator, gen_kwargs, test_size, s, resolved) for s in seeds]
    if jobs > 1 and replications > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, replications)) as pool:
            results = list(pool.map(_one_replication, *zip(*args)))
    else:
        results = [_one_replication(*a) for a in args]

    rows = []
    for k, (name, _) in enumerate(resolved):
        vals, used, fails = [], [], []
        for s, res in zip(seeds, results):
            v, err = res[k]
            if err is None:
                vals.append(v)
                used.append(s)
            else:
                fails.append((s, err))
        rows.append(ReportRow(name, dataset, tuple(vals), tuple(used), tuple(fails)))
    meta = {
        dataset: {
            "generator": generator,
            "replications": replications,
            "base_seed": base_seed,
            "test_size": test_size,
            "gen_kwargs": gen_kwargs,
        }
    }
    return ReportTable(tuple(rows), meta)


@dataclass(frozen=True)
class DeltaTerms:
    delta_S: float
    delta_R: float


def single_arm_deltas(
    n_w: int, tr_K: float, sigma_K: float, kappa: float, lam: float, nu: float,
    C: float, L: float, delta_prob: float,
) -> DeltaTerms:
    """Estimation and regularization terms of the single-arm bound.

    ``Delta_S = L^2 kappa^1.5 sigma^0.5 / (n lam) * sqrt(((C n)^2 + 1) / n) * (1 + sqrt(2 log(4/delta)))``
    and ``Delta_R = 4 C n L nu sqrt(tr K) / n + 6 C n L sqrt(log(4/delta) / (2 n))``.
    """
    n = float(n_w)
    Cn = C * n
    log_term = math.log(4.0 / delta_prob)
    dS = (L**2 * kappa**1.5 * math.sqrt(sigma_K) / (n * lam)) * math.sqrt((Cn**2 + 1) / n) * (
        1 + math.sqrt(2 * log_term)
    )
    dR = 4 * Cn * L * nu * math.sqrt(tr_K) / n + 6 * Cn * L * math.sqrt(log_term / (2 * n))
    return DeltaTerms(dS, dR)


def two_stage_deltas(
    n_w: int, tr_K: float, sigma_K: float, kappa: float, lam_prime: float, lam_q: float,
    nu: float, nu_q: float, anchor_norm: float, C: float, L: float, delta_prob: float,
) -> tuple[DeltaTerms, float]:
    """Terms of the anchored-refit bound; returns ``(DeltaTerms, nu_prime)``.

    Uses the arm's own ``n_w`` and anchor norm in the regularization term.
    """
    n = float(n_w)
    Cn = C * n
    log_term = math.log(6.0 / delta_prob)
    nu_prime = nu + math.sqrt(
        4 * L / lam_q * (2 * nu_q * math.sqrt(tr_K) / n + 3 * math.sqrt(log_term / (2 * n)))
    )
    dS = (L**2 * kappa**1.5 * math.sqrt(sigma_K) / (n * lam_prime)) * math.sqrt((Cn**2 + 1) / n) * (
        1 + math.sqrt(2 * log_term)
    )
    dR = (
        4 * Cn * L * nu_prime * math.sqrt(tr_K) / n
        + 6 * Cn * L * math.sqrt(log_term / (2 * n))
        + C * L * anchor_norm
    )
    return DeltaTerms(dS, dR), nu_prime


def gram_condition(X_w: np.ndarray) -> float:
    """Largest over smallest nonzero singular value of ``X_w X_w^T``."""
    s = np.linalg.svd(np.asarray(X_w, dtype=float), compute_uv=False) ** 2
    if s.size == 0 or s[0] == 0:
        return 1.0
    nz = s[s > s[0] * max(X_w.shape) * np.finfo(float).eps]
    return float(nz[0] / nz[-1])


@dataclass(frozen=True)
class ArmBounds:
    n: int
    tr_K: float
    sigma_K: float
    # plug-in: ||beta_hat||^2 of the final arm fit
    nu_p: float
    lam: float
    # single-stage terms; absent for two-stage models
    delta_S: float | None = None
    delta_R: float | None = None
    # two-stage refit only; plug-ins use the stored anchor
    nu: float | None = None
    nu_q: float | None = None
    nu_prime: float | None = None
    lam_prime: float | None = None
    delta_Sf: float | None = None
    delta_Rf: float | None = None


@dataclass(frozen=True)
class BoundReport:
    """Plug-in evaluation of the error-bound terms; not a certified bound."""

    treated: ArmBounds
    control: ArmBounds
    kappa: float
    C: float
    L: float
    delta_prob: float
    plug_ins: tuple[str, ...] = ()

    def __post_init__(self):
        for arm in (self.treated, self.control):
            for k, v in arm.__dict__.items():
                if v is not None and not (math.isfinite(v) and v >= 0):
                    raise ValueError(f"bound quantity {k}={v} is not finite and nonnegative")

    def total(self) -> float:
        """``2 * (sum of both arms' Delta terms)`` as in the ITE-level bound."""
        if self.treated.delta_Sf is not None:
            parts = [a.delta_Sf + a.delta_Rf for a in (self.treated, self.control)]
        else:
            parts = [a.delta_S + a.delta_R for a in (self.treated, self.control)]
        return 2.0 * sum(parts)

    def to_dict(self) -> dict[str, Any]:
        return {
            "treated": dict(self.treated.__dict__),
            "control": dict(self.control.__dict__),
            "kappa": self.kappa,
            "C": self.C,
            "L": self.L,
            "delta_prob": self.delta_prob,
            "plug_ins": list(self.plug_ins),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"


def bound_diagnostics(
    train: ObservationalDataset,
    model: IteModel,
    C: float = 1.0,
    L: float = 1.0,
    delta_prob: float = 0.1,
    anchors: bool | None = None,
) -> BoundReport:
    """Evaluate the bound terms with fitted quantities plugged in.

    Features are taken on the model's standardized scale, which is the scale
    of its coefficients. ``anchors`` requests the two-stage terms; by default
    they are computed whenever the model carries anchors.
    """
    if not (C > 0 and L > 0 and 0 < delta_prob < 1):
        raise ValueError("need C > 0, L > 0 and delta_prob in (0, 1)")
    has_anchors = model.anchor_treated is not None and model.anchor_control is not None
    if anchors is None:
        anchors = has_anchors
    if anchors and not has_anchors:
        raise MissingAnchors("two-stage diagnostics need a model fitted with anchors")
    Z = model.standardization.apply(train.features)
    kappa = float(np.max(np.linalg.norm(Z, axis=1)))
    arms = []
    for treated, coef, anchor in (
        (True, model.beta_treated, model.anchor_treated),
        (False, model.beta_control, model.anchor_control),
    ):
        Zw = Z[train.treatment == (1 if treated else 0)]
        n = Zw.shape[0]
        tr_K = float(np.sum(Zw * Zw))
        sigma = gram_condition(Zw)
        nu_p = float(coef.beta @ coef.beta)
        lam = coef.lambda_used
        if not lam > 0:
            raise ValueError("bound terms need a positive penalty")
        extra: dict[str, float] = {}
        if not anchors:
            d1 = single_arm_deltas(n, tr_K, sigma, kappa, lam, nu_p, C, L, delta_prob)
            extra = dict(delta_S=d1.delta_S, delta_R=d1.delta_R)
        else:
            diff = coef.beta - anchor.beta
            nu = float(diff @ diff)
            nu_q = float(anchor.beta @ anchor.beta)
            d2, nu_prime = two_stage_deltas(
                n, tr_K, sigma, kappa, coef.lambda_used, anchor.lambda_used, nu, nu_q,
                float(np.sqrt(nu_q)), C, L, delta_prob,
            )
            extra = dict(nu=nu, nu_q=nu_q, nu_prime=nu_prime, lam_prime=coef.lambda_used,
                         delta_Sf=d2.delta_S, delta_Rf=d2.delta_R)
        arms.append(ArmBounds(n, tr_K, sigma, nu_p, lam, **extra))
    plug = ["nu_p = ||beta_hat||^2"]
    if anchors:
        plug += ["nu = ||beta_final - beta_anchor||^2", "nu_q = ||beta_anchor||^2"]
    return BoundReport(arms[0], arms[1], kappa, C, L, delta_prob, tuple(plug))
