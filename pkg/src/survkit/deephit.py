"""Discrete-time survival with a softmax head over quantile time bins.

The network outputs one logit per bin; softmax gives a probability mass
function over event bins. Training minimizes a likelihood term (events:
mass in the true bin; censored: mass beyond the censoring bin) plus a
ranking term that pushes earlier-event subjects toward higher cumulative
incidence at their own event bin. Predicted curves interpolate the
per-bin survival linearly, i.e. constant density within each bin.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .curves import SurvivalCurve
from .errors import DataError
from .nnet import (
    MlpModel,
    adam_step,
    backward,
    epoch_batches,
    forward,
    init_mlp,
    init_optimizer,
    model_from_dict,
    model_to_dict,
)

LOG_FLOOR = 1e-12


@dataclass
class TimeGrid:
    """Right-closed time bins (c_{k-1}, c_k] with c_0 = 0."""

    cuts: np.ndarray

    def __post_init__(self):
        self.cuts = np.asarray(self.cuts, dtype=float)
        if len(self.cuts) == 0 or np.any(np.diff(self.cuts) <= 0) or self.cuts[0] <= 0:
            raise DataError("cuts must be positive and strictly increasing")

    @property
    def n_bins(self):
        return len(self.cuts)

    def bin_index(self, times):
        """Bin label per time; times beyond the last cut clamp to the last bin."""
        t = np.asarray(times, dtype=float)
        idx = np.searchsorted(self.cuts, t, side="left")
        return np.minimum(idx, self.n_bins - 1).astype(np.int64)


def make_time_grid(times, n_bins):
    """Equidistant-quantile cuts over the observed times.

    Duplicate quantiles collapse (with a warning), so heavily tied data can
    yield fewer bins than requested. The final cut is the maximum observed
    time, so every training time maps to a valid bin.
    """
    t = np.asarray(times, dtype=float)
    if len(t) == 0 or np.isnan(t).any():
        raise DataError("times must be non-empty and complete")
    if n_bins < 1:
        raise DataError("n_bins must be >= 1")
    qs = np.arange(1, n_bins + 1) / n_bins
    cuts = np.quantile(t, qs)
    cuts[-1] = t.max()
    cuts = np.unique(cuts)
    cuts = cuts[cuts > 0]
    if len(cuts) < n_bins:
        warnings.warn(f"duplicate quantiles: grid has {len(cuts)} bins, not {n_bins}")
    if len(cuts) == 0:
        raise DataError("all observed times are zero; cannot build a grid")
    return TimeGrid(cuts=cuts)


def deephit_loss(pmf, bin_labels, events, alpha=0.2, sigma=0.1):
    """Likelihood + alpha * ranking loss; gradient is wrt pre-softmax logits.

    Likelihood (mean per subject): events lose -log pmf[k]; censored lose
    -log sum_{j>k} pmf[j]. Both logs are floored at 1e-12 and floored terms
    contribute zero gradient. Ranking (mean per valid pair): for each pair
    with an event in an earlier bin, exp(-(F_i(k_i) - F_j(k_i)) / sigma).
    """
    p = np.asarray(pmf, dtype=float)
    k = np.asarray(bin_labels, dtype=np.int64)
    e = np.asarray(events, dtype=float)
    n, n_bins = p.shape
    if k.shape != (n,) or e.shape != (n,):
        raise DataError("bin_labels and events must match the pmf row count")
    if np.any(k < 0) or np.any(k >= n_bins):
        raise DataError("bin label out of range")
    if sigma <= 0:
        raise DataError("sigma must be positive")

    rows = np.arange(n)
    is_event = e == 1.0

    # likelihood term
    f_cum = np.cumsum(p, axis=1)
    own = p[rows, k]
    beyond = p.sum(axis=1) - f_cum[rows, k]  # sum of bins strictly after k
    like = np.where(is_event, own, beyond)
    like_floored = np.maximum(like, LOG_FLOOR)
    l_like = float(-np.log(like_floored).mean())

    grad_z = np.zeros_like(p)
    active = like > LOG_FLOOR  # floored subjects are constant wrt logits
    ev_act = is_event & active
    if ev_act.any():
        grad_z[ev_act] = p[ev_act]
        grad_z[rows[ev_act], k[ev_act]] -= 1.0
    cen_act = ~is_event & active
    if cen_act.any():
        after = np.arange(n_bins)[None, :] > k[cen_act, None]
        pc = p[cen_act]
        grad_z[cen_act] = pc - pc * after / beyond[cen_act, None]
    grad_z /= n

    # ranking term
    l_rank = 0.0
    if alpha != 0.0:
        valid = is_event[:, None] & (k[:, None] < k[None, :])
        n_pairs = int(valid.sum())
        if n_pairs > 0:
            f_at_own = f_cum[rows, k]
            f_other = f_cum[:, k].T  # [i, j] = F_j(k_i)
            terms = np.exp(-(f_at_own[:, None] - f_other) / sigma) * valid
            l_rank = float(terms.sum() / n_pairs)

            g_f = np.zeros_like(p)  # d L_rank / d F_s(col)
            scale = 1.0 / (sigma * n_pairs)
            for i in np.flatnonzero(valid.any(axis=1)):
                row = terms[i]
                g_f[i, k[i]] -= row.sum() * scale
                np.add.at(g_f[:, k[i]], np.flatnonzero(valid[i]), row[valid[i]] * scale)
            # dF_s(c)/dz_sm = p_sm (1[m <= c] - F_s(c))
            tail = np.cumsum(g_f[:, ::-1], axis=1)[:, ::-1]
            grad_z += alpha * p * (tail - (g_f * f_cum).sum(axis=1, keepdims=True))

    return l_like + alpha * l_rank, grad_z


@dataclass
class DeepHitParams:
    hidden: list
    n_bins: int = 60
    dropout: float = 0.0
    epochs: int = 25
    batch_size: int = 64
    lr: float = 0.005
    lr_decay: float = 0.7
    weight_decay: float = 0.0
    alpha: float = 0.2
    sigma: float = 0.1
    n_interp: int = 50


@dataclass
class DeepHitModel:
    net: MlpModel
    grid: TimeGrid
    params: DeepHitParams
    seed: int
    epoch_losses: list = field(default_factory=list, repr=False)


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=1, keepdims=True)


def fit_deephit(x, times, events, params, seed):
    """Train the discrete-time model; deterministic in (seed, data order)."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(times, dtype=float)
    e = np.asarray(events, dtype=float)
    n = len(t)
    if x.ndim != 2 or x.shape[0] != n or t.shape != e.shape:
        raise DataError("x must be (n, p) with times and events of length n")
    if not np.any(e == 1.0):
        raise DataError("no events in the training data")

    grid = make_time_grid(t, params.n_bins)
    labels = grid.bin_index(t)
    net = init_mlp([x.shape[1], *params.hidden, grid.n_bins], params.dropout, seed)
    state = init_optimizer(net, params.lr, params.lr_decay, params.weight_decay)

    epoch_losses = []
    for epoch in range(params.epochs):
        state = replace(state, epoch=epoch)
        rng = np.random.default_rng([seed, 7, epoch])
        total = 0.0
        n_batches = 0
        for b, idx in enumerate(epoch_batches(n, params.batch_size, rng)):
            z, cache = forward(net, x[idx], mode="train", seed=[seed, epoch, b])
            value, g_z = deephit_loss(
                _softmax(z), labels[idx], e[idx], params.alpha, params.sigma
            )
            grads = backward(net, cache, g_z)
            net, state = adam_step(net, grads, state)
            total += value
            n_batches += 1
        epoch_losses.append(float(total / max(n_batches, 1)))

    return DeepHitModel(net=net, grid=grid, params=params, seed=seed, epoch_losses=epoch_losses)


def predict_pmf(model, x):
    """Per-row event-bin probabilities (rows sum to 1 up to float error)."""
    z, _ = forward(model.net, np.asarray(x, dtype=float), mode="eval")
    return _softmax(z)


def predict_survival(model, x, n_points=None):
    """Per-row survival curves on an equidistant grid over [0, last cut].

    Survival steps down by each bin's mass at the bin's right edge and is
    linearly interpolated inside bins (constant event density). S(0) = 1
    and the terminal value is 1 - sum(pmf) ~ 0.
    """
    if n_points is None:
        n_points = model.params.n_interp
    if n_points < 2:
        raise DataError("need at least 2 interpolation points")
    pmf = predict_pmf(model, x)
    cuts = model.grid.cuts
    knot_times = np.r_[0.0, cuts]
    surv_at_cuts = np.clip(1.0 - np.cumsum(pmf, axis=1), 0.0, 1.0)
    grid_t = np.linspace(0.0, cuts[-1], n_points)
    curves = []
    for row in surv_at_cuts:
        knots = np.r_[1.0, row]
        vals = np.interp(grid_t, knot_times, np.minimum.accumulate(knots))
        curves.append(SurvivalCurve(times=grid_t, values=vals, kind="linear"))
    return curves


def predict_risk(model, x):
    """Scalar risk per row: negative mean of the survival curve values."""
    curves = predict_survival(model, x)
    return np.array([-c.values.mean() for c in curves])


def save_checkpoint(model, path):
    doc = {
        "net": model_to_dict(model.net),
        "cuts": model.grid.cuts.tolist(),
        "params": {
            "hidden": list(model.params.hidden),
            "n_bins": model.params.n_bins,
            "dropout": model.params.dropout,
            "epochs": model.params.epochs,
            "batch_size": model.params.batch_size,
            "lr": model.params.lr,
            "lr_decay": model.params.lr_decay,
            "weight_decay": model.params.weight_decay,
            "alpha": model.params.alpha,
            "sigma": model.params.sigma,
            "n_interp": model.params.n_interp,
        },
        "seed": model.seed,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return DeepHitModel(
        net=model_from_dict(doc["net"]),
        grid=TimeGrid(cuts=np.asarray(doc["cuts"], dtype=float)),
        params=DeepHitParams(**doc["params"]),
        seed=int(doc["seed"]),
    )
