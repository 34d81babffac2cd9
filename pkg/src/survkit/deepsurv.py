"""Nonlinear proportional hazards: a dense network as the log-risk score.

The hazard is h0(t) * exp(f(x)) with f a small MLP trained by minimizing
the within-batch Efron partial likelihood of its scores. After training,
the baseline cumulative hazard is the Breslow estimate on the full
training data at the final scores, so predicted curves compose exactly
like the linear model's.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from ._kernels import efron_loss_grad
from .coxph import breslow_from_scores
from .curves import CumHazardFn, SurvivalCurve
from .errors import DataError
from .nnet import (
    MlpModel,
    adam_step,
    epoch_batches,
    forward,
    init_mlp,
    init_optimizer,
    model_from_dict,
    model_to_dict,
)


@dataclass
class DeepSurvParams:
    hidden: list
    dropout: float = 0.0
    epochs: int = 50
    batch_size: int = 64
    lr: float = 0.1
    lr_decay: float = 0.7
    weight_decay: float = 0.0


@dataclass
class DeepSurvModel:
    net: MlpModel
    baseline: CumHazardFn
    params: DeepSurvParams
    seed: int
    epoch_losses: list = field(default_factory=list, repr=False)
    skipped_batches: int = 0


def deepsurv_loss(scores, times, events):
    """Within-batch Efron partial likelihood of network scores.

    Same value and gradient as the linear model's likelihood with the
    scores in place of x . beta; shift-invariant in the scores. Undefined
    for batches without events (the trainer skips those).
    """
    e = np.asarray(events, dtype=float)
    if not np.any(e == 1.0):
        raise DataError("partial likelihood needs at least one event in the batch")
    return efron_loss_grad(times, e, scores)


def fit_deepsurv(x, times, events, params, seed):
    """Train the score network; returns the model with its Breslow baseline.

    Batches are reshuffled every epoch from a seeded generator, drawn in
    order with the final short batch kept. Event-free batches are skipped
    and counted. The learning rate is lr * lr_decay**epoch; weight decay is
    decoupled. The whole trajectory is a deterministic function of (seed,
    data order).
    """
    x = np.asarray(x, dtype=float)
    t = np.asarray(times, dtype=float)
    e = np.asarray(events, dtype=float)
    n = len(t)
    if x.ndim != 2 or x.shape[0] != n or t.shape != e.shape:
        raise DataError("x must be (n, p) with times and events of length n")
    if not np.any(e == 1.0):
        raise DataError("no events in the training data")

    net = init_mlp([x.shape[1], *params.hidden, 1], params.dropout, seed)
    state = init_optimizer(net, params.lr, params.lr_decay, params.weight_decay)
    skipped = 0
    epoch_losses = []
    for epoch in range(params.epochs):
        state = replace(state, epoch=epoch)
        rng = np.random.default_rng([seed, 7, epoch])
        total = 0.0
        for b, idx in enumerate(epoch_batches(n, params.batch_size, rng)):
            if not np.any(e[idx] == 1.0):
                skipped += 1
                continue
            out, cache = forward(net, x[idx], mode="train", seed=[seed, epoch, b])
            value, g_eta = deepsurv_loss(out[:, 0], t[idx], e[idx])
            grads = backward_through(net, cache, g_eta)
            net, state = adam_step(net, grads, state)
            total += value
        epoch_losses.append(float(total))
    if skipped:
        warnings.warn(f"skipped {skipped} event-free batches during training")

    scores = predict_risk_net(net, x)
    baseline = breslow_from_scores(t, e, scores)
    return DeepSurvModel(
        net=net,
        baseline=baseline,
        params=params,
        seed=seed,
        epoch_losses=epoch_losses,
        skipped_batches=skipped,
    )


def backward_through(net, cache, g_eta):
    """Backprop the per-row score gradient through the single-output net."""
    from .nnet import backward

    return backward(net, cache, np.asarray(g_eta, dtype=float)[:, None])


def predict_risk_net(net, x):
    out, _ = forward(net, np.asarray(x, dtype=float), mode="eval")
    return out[:, 0]


def predict_risk(model, x):
    """Per-row log-risk score f(x) in eval mode (no dropout)."""
    return predict_risk_net(model.net, x)


def predict_survival(model, x, times):
    """Per-row curves S(t|x) = exp(-H0(t) * exp(f(x))); times sorted."""
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0):
        raise DataError("times must be sorted ascending")
    h0 = model.baseline(times)
    risk = np.exp(predict_risk(model, x))
    return [SurvivalCurve(times=times, values=np.exp(-h0 * r), kind="step") for r in risk]


def save_checkpoint(model, path):
    doc = {
        "net": model_to_dict(model.net),
        "baseline": {
            "knots": model.baseline.knots.tolist(),
            "values": model.baseline.values.tolist(),
        },
        "params": {
            "hidden": list(model.params.hidden),
            "dropout": model.params.dropout,
            "epochs": model.params.epochs,
            "batch_size": model.params.batch_size,
            "lr": model.params.lr,
            "lr_decay": model.params.lr_decay,
            "weight_decay": model.params.weight_decay,
        },
        "seed": model.seed,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return DeepSurvModel(
        net=model_from_dict(doc["net"]),
        baseline=CumHazardFn(
            knots=np.asarray(doc["baseline"]["knots"], dtype=float),
            values=np.asarray(doc["baseline"]["values"], dtype=float),
        ),
        params=DeepSurvParams(**doc["params"]),
        seed=int(doc["seed"]),
    )
