"""Synthetic proportional-hazards cohorts with known ground truth.

Event times follow a Weibull baseline scaled by exp(x . beta): with
U ~ Uniform(0,1), T = scale * (-log U / exp(eta))**(1/shape). Censoring is
an independent exponential whose rate is tuned by bisection so the
expected censored fraction matches the requested target. Missingness is
MAR: per-column logistic rules driven by always-observed columns (and an
optional per-center shift), with the intercept solved so the expected
missing rate hits the rule's target.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ComputationError, ConfigError
from .metrics import concordance_index
from .tabular import ColumnSpec, SurvivalDataset


@dataclass
class CovariateSpec:
    """One generated covariate.

    kind "continuous": params (mean, sd). kind "binary": params p. kind
    "categorical": params is a {level: probability} mapping in declared
    order.
    """

    name: str
    kind: str
    params: object

    def levels(self):
        return list(self.params.keys()) if self.kind == "categorical" else None


@dataclass
class MissingRule:
    """MAR mask for one column: logistic in standardized driver columns."""

    column: str
    target_rate: float
    drivers: list = field(default_factory=list)
    weights: list = field(default_factory=list)
    center_shifts: list = None


@dataclass
class GeneratorSpec:
    n: int
    covariates: list
    beta: dict  # encoded column name -> coefficient
    shape: float = 1.0
    scale: float = 1.0
    censoring_fraction: float = 0.0
    missing_rules: list = field(default_factory=list)
    n_centers: int = 1
    center_probs: list = None


@dataclass
class GroundTruth:
    beta: dict
    eta: np.ndarray
    oracle_c: float
    censoring_rate: float
    event_fraction: float
    median_followup: float
    seed: int
    encoded_names: list

    def to_json(self, path):
        doc = {
            "beta": self.beta,
            "oracle_c": self.oracle_c,
            "censoring_rate": self.censoring_rate,
            "event_fraction": self.event_fraction,
            "median_followup": self.median_followup,
            "seed": self.seed,
            "encoded_names": self.encoded_names,
            "eta": [float(v) for v in self.eta],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True)
            fh.write("\n")


def _validate_spec(spec):
    if spec.n < 2:
        raise ConfigError("n must be >= 2")
    if spec.shape <= 0 or spec.scale <= 0:
        raise ConfigError("shape and scale must be positive")
    if not 0.0 <= spec.censoring_fraction < 1.0:
        raise ConfigError("censoring_fraction must be in [0, 1)")
    names = [c.name for c in spec.covariates]
    if len(set(names)) != len(names):
        raise ConfigError("duplicate covariate names")
    masked = {r.column for r in spec.missing_rules}
    unknown = masked - set(names)
    if unknown:
        raise ConfigError(f"missing rules name unknown columns: {sorted(unknown)}")
    for rule in spec.missing_rules:
        if not 0.0 <= rule.target_rate < 1.0:
            raise ConfigError(f"rule for {rule.column!r}: bad target rate")
        if len(rule.drivers) != len(rule.weights):
            raise ConfigError(f"rule for {rule.column!r}: drivers/weights length mismatch")
        overlap = set(rule.drivers) & masked
        if overlap:
            raise ConfigError(
                f"rule for {rule.column!r} conditions on masked columns {sorted(overlap)}; "
                "MAR drivers must stay fully observed"
            )
        for d in rule.drivers:
            if d not in names:
                raise ConfigError(f"rule for {rule.column!r}: unknown driver {d!r}")
        if rule.center_shifts is not None and len(rule.center_shifts) != spec.n_centers:
            raise ConfigError(f"rule for {rule.column!r}: need one shift per center")


def _encoded_names(spec):
    out = []
    for cov in spec.covariates:
        if cov.kind == "categorical":
            levels = cov.levels()
            out.extend(f"{cov.name}={lv}" for lv in levels[1:])
        else:
            out.append(cov.name)
    return out


def _solve_logit_intercept(lin, target):
    """Bisection for b0 with mean(sigmoid(b0 + lin)) = target."""
    lo, hi = -40.0, 40.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.mean(1.0 / (1.0 + np.exp(-(mid + lin)))) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _solve_censor_rate(t_event, target):
    """Bisection for r with mean(1 - exp(-r * T)) = target."""
    if target <= 0:
        return 0.0
    lo, hi = 1e-12, 1.0
    while np.mean(1.0 - np.exp(-hi * t_event)) < target:
        hi *= 2.0
        if hi > 1e12:
            raise ComputationError("cannot reach the requested censoring fraction")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.mean(1.0 - np.exp(-mid * t_event)) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def generate(spec, seed=0):
    """Draw one cohort; returns (dataset, ground truth).

    Deterministic in (spec, seed). The dataset carries id, time, event and
    center columns plus the declared covariates; the ground truth records
    the true encoded coefficients, each row's linear predictor, and the
    oracle concordance of that predictor on the generated outcomes.
    """
    _validate_spec(spec)
    rng = np.random.default_rng(seed)
    n = spec.n

    raw = {}
    encoded = {}
    for cov in spec.covariates:
        if cov.kind == "continuous":
            mean, sd = cov.params
            vals = rng.normal(mean, sd, size=n)
            raw[cov.name] = vals
            encoded[cov.name] = vals
        elif cov.kind == "binary":
            vals = (rng.random(n) < float(cov.params)).astype(float)
            raw[cov.name] = vals
            encoded[cov.name] = vals
        elif cov.kind == "categorical":
            levels = cov.levels()
            probs = np.array([cov.params[lv] for lv in levels], dtype=float)
            if abs(probs.sum() - 1.0) > 1e-9 or (probs < 0).any():
                raise ConfigError(f"{cov.name!r}: level probabilities must sum to 1")
            codes = rng.choice(len(levels), size=n, p=probs)
            raw[cov.name] = codes.astype(float)
            for j, lv in enumerate(levels[1:], start=1):
                encoded[f"{cov.name}={lv}"] = (codes == j).astype(float)
        else:
            raise ConfigError(f"{cov.name!r}: unknown kind {cov.kind!r}")

    enc_names = _encoded_names(spec)
    unknown_beta = set(spec.beta) - set(enc_names)
    if unknown_beta:
        raise ConfigError(f"beta names unknown encoded columns: {sorted(unknown_beta)}")
    eta = np.zeros(n)
    for name, b in spec.beta.items():
        eta += float(b) * encoded[name]

    u = rng.random(n)
    t_event = spec.scale * (-np.log(u) / np.exp(eta)) ** (1.0 / spec.shape)

    censor_rate = _solve_censor_rate(t_event, spec.censoring_fraction)
    if censor_rate > 0:
        c = rng.exponential(1.0 / censor_rate, size=n)
        time = np.minimum(t_event, c)
        event = (t_event <= c).astype(float)
    else:
        time = t_event
        event = np.ones(n)

    if spec.n_centers > 1:
        probs = spec.center_probs or [1.0 / spec.n_centers] * spec.n_centers
        center = rng.choice(spec.n_centers, size=n, p=np.asarray(probs, dtype=float))
    else:
        center = np.zeros(n, dtype=int)

    # MAR masks on the raw columns
    mask = {name: np.zeros(n, dtype=bool) for name in raw}
    for rule in spec.missing_rules:
        lin = np.zeros(n)
        for d, w in zip(rule.drivers, rule.weights):
            vals = raw[d]
            sd = vals.std()
            z = (vals - vals.mean()) / sd if sd > 0 else np.zeros(n)
            lin += float(w) * z
        if rule.center_shifts is not None:
            lin += np.asarray(rule.center_shifts, dtype=float)[center]
        b0 = _solve_logit_intercept(lin, rule.target_rate)
        p_miss = 1.0 / (1.0 + np.exp(-(b0 + lin)))
        mask[rule.column] = rng.random(n) < p_miss

    columns = [
        ColumnSpec("id", "continuous", role="id"),
        ColumnSpec("time", "continuous", role="time"),
        ColumnSpec("event", "binary", role="event"),
    ]
    data_cols = [np.arange(n, dtype=float), time, event]
    mask_cols = [np.zeros(n, dtype=bool)] * 3
    if spec.n_centers > 1:
        columns.append(
            ColumnSpec(
                "center",
                "categorical",
                role="center",
                levels=[f"c{i}" for i in range(spec.n_centers)],
            )
        )
        data_cols.append(center.astype(float))
        mask_cols.append(np.zeros(n, dtype=bool))
    for cov in spec.covariates:
        columns.append(ColumnSpec(cov.name, cov.kind, role="covariate", levels=cov.levels()))
        vals = raw[cov.name].copy()
        m = mask[cov.name]
        vals[m] = np.nan
        data_cols.append(vals)
        mask_cols.append(m)

    ds = SurvivalDataset(
        columns=columns,
        values=np.column_stack(data_cols),
        missing_mask=np.column_stack(mask_cols),
    )
    truth = GroundTruth(
        beta={name: float(spec.beta.get(name, 0.0)) for name in enc_names},
        eta=eta,
        oracle_c=float(concordance_index(time, event, eta)),
        censoring_rate=float(censor_rate),
        event_fraction=float(event.mean()),
        median_followup=float(np.median(time)),
        seed=seed,
        encoded_names=enc_names,
    )
    return ds, truth


def spec_from_dict(doc):
    """Build a GeneratorSpec from a JSON-style dict (see README schema)."""
    covs = []
    for c in doc.get("covariates", []):
        kind = c.get("kind")
        if kind == "continuous":
            params = (float(c.get("mean", 0.0)), float(c.get("sd", 1.0)))
        elif kind == "binary":
            params = float(c.get("p", 0.5))
        elif kind == "categorical":
            params = {str(k): float(v) for k, v in c.get("levels", {}).items()}
        else:
            raise ConfigError(f"covariate {c.get('name')!r}: unknown kind {kind!r}")
        covs.append(CovariateSpec(name=str(c["name"]), kind=kind, params=params))
    rules = [
        MissingRule(
            column=str(r["column"]),
            target_rate=float(r["target_rate"]),
            drivers=[str(d) for d in r.get("drivers", [])],
            weights=[float(w) for w in r.get("weights", [])],
            center_shifts=r.get("center_shifts"),
        )
        for r in doc.get("missing_rules", [])
    ]
    return GeneratorSpec(
        n=int(doc["n"]),
        covariates=covs,
        beta={str(k): float(v) for k, v in doc.get("beta", {}).items()},
        shape=float(doc.get("shape", 1.0)),
        scale=float(doc.get("scale", 1.0)),
        censoring_fraction=float(doc.get("censoring_fraction", 0.0)),
        missing_rules=rules,
        n_centers=int(doc.get("n_centers", 1)),
        center_probs=doc.get("center_probs"),
    )


def ensure_like(seed=0):
    """A cohort shaped like a two-outcome gastric cancer registry table:
    ~3900 rows, 34 encoded covariates, ~59% events, median follow-up near
    30 months, oracle concordance near 0.75, moderate MAR missingness.

    Returns (dataset, ground truth, spec).
    """
    continuous = [CovariateSpec(f"x{i:02d}", "continuous", (0.0, 1.0)) for i in range(1, 23)]
    binaries = [
        CovariateSpec("b1", "binary", 0.35),
        CovariateSpec("b2", "binary", 0.5),
        CovariateSpec("b3", "binary", 0.2),
        CovariateSpec("b4", "binary", 0.6),
    ]
    cats = [
        CovariateSpec(
            "grade", "categorical", {"g1": 0.4, "g2": 0.3, "g3": 0.2, "g4": 0.1}
        ),
        CovariateSpec(
            "stage", "categorical", {"s1": 0.35, "s2": 0.3, "s3": 0.25, "s4": 0.1}
        ),
        CovariateSpec("site", "categorical", {"antrum": 0.5, "body": 0.3, "cardia": 0.2}),
    ]
    covs = continuous + binaries + cats

    # 22 + 4 + 3 + 3 + 2 = 34 encoded columns; coefficient scale tuned so the
    # oracle concordance of the true linear predictor lands near 0.75
    # (measured mean 0.749, range 0.742-0.757 over seeds 0-7)
    beta = {
        "x01": 0.378, "x02": -0.342, "x03": 0.297, "x04": -0.252, "x05": 0.216,
        "x06": -0.189, "x07": 0.162, "x08": -0.135, "x09": 0.108, "x10": -0.09,
        "x11": 0.27, "x12": -0.234, "x13": 0.198, "x14": -0.162, "x15": 0.126,
        "x16": -0.108, "x17": 0.081, "x18": -0.063, "x19": 0.045, "x20": -0.036,
        "x21": 0.315, "x22": -0.279,
        "b1": 0.36, "b2": -0.27, "b3": 0.225, "b4": -0.18,
        "grade=g2": 0.18, "grade=g3": 0.405, "grade=g4": 0.63,
        "stage=s2": 0.27, "stage=s3": 0.54, "stage=s4": 0.855,
        "site=body": 0.135, "site=cardia": -0.18,
    }

    rules = [
        MissingRule("x03", 0.08, drivers=["x01"], weights=[0.8]),
        MissingRule("x07", 0.12, drivers=["x02", "b1"], weights=[0.6, -0.4]),
        MissingRule("x11", 0.05, drivers=["x01"], weights=[-0.5],
                    center_shifts=[0.0, 0.4, -0.4, 0.2, -0.2]),
        MissingRule("x15", 0.18, drivers=["x04"], weights=[0.7]),
        MissingRule("b2", 0.06, drivers=["x02"], weights=[0.5]),
        MissingRule("grade", 0.10, drivers=["x01", "x02"], weights=[0.4, 0.3]),
        MissingRule("x19", 0.15, drivers=["b1"], weights=[0.6],
                    center_shifts=[0.3, 0.0, -0.3, 0.1, -0.1]),
        MissingRule("x21", 0.04, drivers=["x04"], weights=[-0.6]),
    ]

    spec = GeneratorSpec(
        n=3921,
        covariates=covs,
        beta=beta,
        shape=1.1,
        scale=117.0,
        censoring_fraction=0.4114,
        missing_rules=rules,
        n_centers=5,
        center_probs=[0.3, 0.25, 0.2, 0.15, 0.1],
    )
    ds, truth = generate(spec, seed=seed)
    return ds, truth, spec
