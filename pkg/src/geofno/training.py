"""Loss functions, the training loop, and evaluation.

Training follows the fixed protocol: Adam on the mean per-sample relative
L2 error, initial learning rate halved every lr_halving_period epochs, the
test metric computed every epoch without gradient recording.  Runs are
bit-reproducible for a given seed and support exact mid-training resume.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, asdict

import numpy as np

from . import tensor as T
from .data import config_hash, save_checkpoint
from .errors import (ConfigurationError, DegenerateTargetError, DimensionError,
                     DivergenceError)
from .tensor import AdamState, Tape, Tensor


@dataclass
class TrainConfig:
    epochs: int = 500
    initial_lr: float = 1e-3
    lr_halving_period: int = 100
    batch_size: int = 20
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    divergence_factor: float = 1e3

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")

    def lr_at(self, epoch):
        return self.initial_lr * 0.5 ** (epoch // self.lr_halving_period)

    def hash(self):
        return config_hash({k: str(v) for k, v in asdict(self).items()})


class TrainReport:
    """Per-epoch history plus final metrics."""

    def __init__(self, cfg_hash):
        self.config_hash = cfg_hash
        self.train_err = []
        self.test_err = []
        self.lr = []
        self.wall_time = []

    @property
    def final_train(self):
        return self.train_err[-1] if self.train_err else float("nan")

    @property
    def final_test(self):
        return self.test_err[-1] if self.test_err else float("nan")

    def history(self):
        return {"train_err": self.train_err, "test_err": self.test_err,
                "lr": self.lr, "wall_time": self.wall_time}

    def to_text(self):
        lines = ["# epoch train_err test_err lr"]
        for e, (a, b, l) in enumerate(zip(self.train_err, self.test_err, self.lr)):
            lines.append(f"{e} {a:.10e} {b:.10e} {l:.10e}")
        lines.append("# summary")
        lines.append(f"config_hash={self.config_hash}")
        lines.append(f"epochs={len(self.train_err)}")
        lines.append(f"final_train={self.final_train:.10e}")
        lines.append(f"final_test={self.final_test:.10e}")
        total = self.wall_time[-1] if self.wall_time else 0.0
        lines.append(f"wall_seconds={total:.3f}")
        return "\n".join(lines) + "\n"


# ------------------------------------------------------------------- losses

def relative_l2(pred, truth, mask=None):
    """||pred - truth|| / ||truth|| over the (optionally masked) entries."""
    pred = T.as_tensor(pred)
    truth = T.as_tensor(truth)
    if pred.shape != truth.shape:
        raise DimensionError(f"prediction {pred.shape} vs target {truth.shape}")
    loss, _ = _batched_relative_l2(
        T.reshape(pred, (1,) + pred.shape), truth.data[None],
        None if mask is None else np.asarray(mask, bool)[None])
    return loss


def masked_loss(pred, truth, mask):
    """relative_l2 restricted to mask; gradients vanish off the mask."""
    if mask is None:
        raise DegenerateTargetError("masked_loss requires a mask")
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise DegenerateTargetError("mask selects no points")
    return relative_l2(pred, truth, mask=mask)


def _batched_relative_l2(pred, truth_data, mask_data):
    """Mean over the batch of per-sample relative L2 errors.

    pred: (B, ..., c) tensor; truth/mask: matching arrays.  Returns
    (scalar tensor, per-sample float vector).
    """
    axes = tuple(range(1, pred.ndim))
    if mask_data is not None:
        m = mask_data.astype(np.float64)
        while m.ndim < pred.ndim:
            m = m[..., None]
        truth_data = truth_data * m
        diff = T.mul(T.sub(pred, Tensor(truth_data)), Tensor(m))
    else:
        diff = T.sub(pred, Tensor(truth_data))
    den = np.sqrt((truth_data ** 2).sum(axis=axes))
    if (den <= 0).any():
        raise DegenerateTargetError("target has zero norm on the masked points")
    num = T.sqrt(T.sum_(T.mul(diff, diff), axis=axes))
    per = T.mul(num, Tensor(1.0 / den))
    return T.mean(per), per.data / 1.0


# -------------------------------------------------------------- data stacking

def stack_bundle(bundle):
    """Stack a homogeneous bundle into dense arrays for batched passes."""
    if len(bundle) == 0:
        raise ConfigurationError("dataset is empty")
    recs = bundle.records
    shape0 = recs[0].geometry.points.shape
    if any(r.geometry.points.shape != shape0 for r in recs):
        raise ConfigurationError("batched training requires samples of one shape")
    out = {
        "io_mode": bundle.io_mode,
        "points": np.stack([r.geometry.points.data for r in recs]),
        "inputs": np.stack([r.inputs for r in recs]),
        "outputs": np.stack([r.outputs for r in recs]),
    }
    if recs[0].mask is not None:
        out["masks"] = np.stack([r.mask for r in recs])
    else:
        out["masks"] = None
    if recs[0].geometry.design_params is not None:
        out["design"] = np.stack([r.geometry.design_params.data for r in recs])
    else:
        out["design"] = None
    return out


def _forward_stacked(model, stacked, sel):
    pts = Tensor(stacked["points"][sel])
    fin = Tensor(stacked["inputs"][sel])
    if stacked["io_mode"] == "point_cloud":
        design = None if stacked["design"] is None else Tensor(stacked["design"][sel])
        return model.forward_cloud_arrays(pts, fin, design=design)
    return model.forward_grid_arrays(pts, fin)


def _check_compat(model, stacked):
    want = model.config.io_mode
    if stacked["io_mode"] != want:
        raise ConfigurationError(
            f"dataset io_mode {stacked['io_mode']!r} does not match model {want!r}")
    cin = stacked["inputs"].shape[-1]
    if cin != model.config.in_channels:
        raise ConfigurationError(
            f"dataset has {cin} input channels, model expects {model.config.in_channels}")


# ------------------------------------------------------------------ training

def train(model, train_set, test_set, cfg, resume=None, log=None,
          checkpoint_path=None, checkpoint_every=0):
    """Train in place and return (model, TrainReport).

    resume: extras dict from data.load_checkpoint for exact continuation.
    checkpoint_path/checkpoint_every: write a resumable checkpoint every k
    epochs (and always at the end when a path is given).
    """
    tr = stack_bundle(train_set)
    te = stack_bundle(test_set)
    _check_compat(model, tr)
    _check_compat(model, te)
    n = len(train_set.records)

    params = model.param_list()
    state = AdamState(params)
    rng = np.random.default_rng(cfg.seed)
    report = TrainReport(cfg.hash())
    start_epoch = 0
    if resume:
        if resume.get("optimizer_state") is not None:
            state = resume["optimizer_state"]
        if resume.get("rng_state") is not None:
            rng.bit_generator.state = resume["rng_state"]
        if resume.get("epoch") is not None:
            start_epoch = int(resume["epoch"])
        hist = resume.get("history") or {}
        for key in ("train_err", "test_err", "lr", "wall_time"):
            if key in hist:
                getattr(report, key).extend(float(x) for x in hist[key])

    t0 = time.perf_counter()
    wall_base = report.wall_time[-1] if report.wall_time else 0.0
    first_loss = None
    for epoch in range(start_epoch, cfg.epochs):
        lr = cfg.lr_at(epoch)
        perm = rng.permutation(n)
        err_sum = 0.0
        for lo in range(0, n, cfg.batch_size):
            sel = perm[lo:lo + cfg.batch_size]
            with Tape() as tape:
                pred = _forward_stacked(model, tr, sel)
                loss, per = _batched_relative_l2(
                    pred, tr["outputs"][sel],
                    None if tr["masks"] is None else tr["masks"][sel])
            val = float(loss.data)
            if first_loss is None:
                first_loss = val
            if not np.isfinite(val) or val > cfg.divergence_factor * max(first_loss, 1e-30):
                raise DivergenceError(f"training diverged at epoch {epoch} (loss {val})")
            tape.backward(loss)
            grads = [p.grad for p in params]
            params, state = T.adam_step(params, grads, state, lr,
                                        cfg.beta1, cfg.beta2, cfg.eps)
            model.load_params(params)
            err_sum += float(per.sum())
        train_err = err_sum / n
        test_err = _eval_err(model, te, cfg.batch_size)
        report.train_err.append(train_err)
        report.test_err.append(test_err)
        report.lr.append(lr)
        report.wall_time.append(wall_base + time.perf_counter() - t0)
        if log is not None:
            log(epoch, train_err, test_err, lr)
        if checkpoint_path and checkpoint_every and (epoch + 1) % checkpoint_every == 0:
            save_checkpoint(model, checkpoint_path, optimizer_state=state,
                            rng_state=rng.bit_generator.state, epoch=epoch + 1,
                            history=report.history())
    if checkpoint_path:
        save_checkpoint(model, checkpoint_path, optimizer_state=state,
                        rng_state=rng.bit_generator.state, epoch=cfg.epochs,
                        history=report.history())
    return model, report


def _eval_err(model, stacked, batch_size):
    errs = _per_sample_errors(model, stacked, batch_size)
    return float(errs.mean())


def _per_sample_errors(model, stacked, batch_size):
    n = stacked["inputs"].shape[0]
    out = np.empty(n)
    for lo in range(0, n, batch_size):
        sel = np.arange(lo, min(lo + batch_size, n))
        pred = _forward_stacked(model, stacked, sel)
        _, per = _batched_relative_l2(
            pred, stacked["outputs"][sel],
            None if stacked["masks"] is None else stacked["masks"][sel])
        out[sel] = per
    return out


class EvalResult:
    def __init__(self, per_sample, seconds_per_instance):
        self.per_sample = np.asarray(per_sample)
        self.seconds_per_instance = seconds_per_instance

    @property
    def mean(self):
        return float(self.per_sample.mean())

    @property
    def median(self):
        return float(np.median(self.per_sample))

    @property
    def max(self):
        return float(self.per_sample.max())


def evaluate(model, dataset, batch_size=50):
    """Mean/median/max relative L2 plus mean forward seconds per instance."""
    stacked = stack_bundle(dataset)
    _check_compat(model, stacked)
    n = stacked["inputs"].shape[0]
    preds = []
    t_fwd = 0.0
    for lo in range(0, n, batch_size):
        sel = np.arange(lo, min(lo + batch_size, n))
        t0 = time.perf_counter()
        pred = _forward_stacked(model, stacked, sel)
        t_fwd += time.perf_counter() - t0
        preds.append(pred.data)
    pred_all = np.concatenate(preds, axis=0)
    _, per = _batched_relative_l2(Tensor(pred_all), stacked["outputs"],
                                  stacked["masks"])
    return EvalResult(per, t_fwd / n)
