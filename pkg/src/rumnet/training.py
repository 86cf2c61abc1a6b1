"""ERM fitting: minibatch Adam on the tolerance-renormalized cross-entropy,
early stopping with best-weight restoration, metrics, splits, repeated CV.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import csv
import numpy as np

from .data import ChoiceDataset
from .models import ChoiceModel, masked_softmax, softmax_mean_backward


class TrainingDivergenceError(RuntimeError):
    """Raised when the training loss stops being finite."""


@dataclass
class TrainConfig:
    """Optimizer and stopping hyperparameters (defaults: the synthetic recipe)."""

    epochs: int = 500
    batch_size: int = 32
    learning_rate: float = 0.001
    patience: int = 50
    tolerance: float = 0.0001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.tolerance < 0:
            raise ValueError("tolerance must be >= 0")
        if not 1 <= self.patience <= self.epochs:
            raise ValueError("patience must be in [1, epochs]")

    _INT_FIELDS = ("epochs", "batch_size", "patience", "seed")

    @classmethod
    def from_file(cls, path, **overrides) -> "TrainConfig":
        """Read key=value lines ('#' comments allowed); overrides win."""
        values = {}
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{line_no}: expected key=value, got {line!r}")
                key, raw = (s.strip() for s in line.split("=", 1))
                if key not in cls.__dataclass_fields__:
                    raise ValueError(f"{path}:{line_no}: unknown config key {key!r}")
                values[key] = int(raw) if key in cls._INT_FIELDS else float(raw)
        values.update({k: v for k, v in overrides.items() if v is not None})
        if "patience" not in values and "epochs" in values:
            default = cls.__dataclass_fields__["patience"].default
            values["patience"] = min(default, values["epochs"])
        return cls(**values)


@dataclass
class FitReport:
    """Per-epoch loss history plus final (post-restoration) metrics."""

    train_history: list[float]
    val_history: list[float]
    best_epoch: int
    final: dict = field(default_factory=dict)

    def write_history_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "train_loss", "val_loss"])
            for e, (tr, va) in enumerate(zip(self.train_history, self.val_history)):
                writer.writerow([e, repr(tr), repr(va)])

    def write_summary_csv(self, path):
        keys = ["train_loss", "val_loss", "test_loss", "train_acc", "val_acc", "test_acc"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["best_epoch", "epochs_run"] + keys)
            writer.writerow([self.best_epoch, len(self.train_history)]
                            + [("" if self.final.get(k) is None else repr(self.final[k]))
                               for k in keys])


def event_loss(probs: np.ndarray, chosen: int, available: np.ndarray,
               tolerance: float) -> float:
    """-ln of the tolerance-renormalized chosen probability.

    q_i = (p_i + tol) / (1 + kappa * tol) over the kappa available
    alternatives, which keeps the loss finite for any simplex input.
    """
    available = np.asarray(available, dtype=bool)
    if not available[chosen]:
        raise ValueError(f"chosen alternative {chosen} is unavailable")
    kappa = int(available.sum())
    q = (float(probs[chosen]) + tolerance) / (1.0 + kappa * tolerance)
    return float(-np.log(q))


def _batched_mean_probs(model, X, Z, avail):
    U, _ = model.forward_batch(X, Z)
    return masked_softmax(U, avail[:, None, :]).mean(axis=1)


def evaluate(model: ChoiceModel, dataset: ChoiceDataset, tolerance: float,
             chunk: int | None = None) -> tuple[float, float]:
    """(mean loss, accuracy) over a dataset, batched by assortment size."""
    if chunk is None:
        # keep the stacked sample-pair buffer modest for large S
        chunk = max(256, 8192 // getattr(model, "n_samples", 1))
    total = 0.0
    hits = 0
    for idx, X, Z, avail, chosen in dataset.grouped():
        kappa = avail.sum(axis=1)
        for a in range(0, len(idx), chunk):
            sl = slice(a, a + chunk)
            pbar = _batched_mean_probs(model, X[sl], Z[sl], avail[sl])
            rows = np.arange(pbar.shape[0])
            q = (pbar[rows, chosen[sl]] + tolerance) / (1.0 + kappa[sl] * tolerance)
            total += float(-np.log(q).sum())
            pred = np.argmax(np.where(avail[sl], pbar, -np.inf), axis=1)
            hits += int((pred == chosen[sl]).sum())
    return total / len(dataset), hits / len(dataset)


def dataset_loss(model: ChoiceModel, dataset: ChoiceDataset, tolerance: float = 0.0) -> float:
    return evaluate(model, dataset, tolerance)[0]


def accuracy(model: ChoiceModel, dataset: ChoiceDataset) -> float:
    """Fraction of events whose probability argmax (ties -> lowest index,
    unavailable excluded) equals the observed choice."""
    return evaluate(model, dataset, 0.0)[1]


class Adam:
    """Standard Adam with bias correction, acting in place on live arrays."""

    def __init__(self, params: list[np.ndarray], learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


class EarlyStopper:
    """Best-so-far tracking: stop after `patience` non-improving epochs.

    Non-improvement means val_loss >= best - 1e-12.
    """

    def __init__(self, patience: int):
        self.patience = patience
        self.best = np.inf
        self.best_epoch = -1
        self.stale = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        """Record this epoch's val loss; return True when training should stop."""
        if val_loss < self.best - 1e-12:
            self.best = val_loss
            self.best_epoch = epoch
            self.stale = 0
        else:
            self.stale += 1
        return self.stale >= self.patience


def fit(model: ChoiceModel, train: ChoiceDataset, val: ChoiceDataset,
        cfg: TrainConfig, test: ChoiceDataset | None = None) -> FitReport:
    """Minibatch Adam on the renormalized cross-entropy with early stopping.

    Batches are reshuffled each epoch with a (seed, epoch)-derived stream;
    the weights from the best-validation epoch are restored before the final
    metrics are computed. Deterministic given cfg.seed.
    """
    groups = train.grouped()
    T = len(train)
    # map global event index -> (group, row within group)
    loc_g = np.empty(T, dtype=np.intp)
    loc_r = np.empty(T, dtype=np.intp)
    for g, (idx, *_rest) in enumerate(groups):
        loc_g[idx] = g
        loc_r[idx] = np.arange(len(idx))

    params = model.param_arrays()
    grads = model.new_grads()
    opt = Adam(params, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    stopper = EarlyStopper(cfg.patience)
    best_snapshot = model.snapshot()
    train_history: list[float] = []
    val_history: list[float] = []

    for epoch in range(cfg.epochs):
        perm = np.random.default_rng([cfg.seed, epoch]).permutation(T)
        epoch_loss = 0.0
        for b, a in enumerate(range(0, T, cfg.batch_size)):
            sel = perm[a:a + cfg.batch_size]
            batch_loss = _train_step(model, groups, loc_g[sel], loc_r[sel],
                                     cfg.tolerance, grads)
            if not np.isfinite(batch_loss):
                raise TrainingDivergenceError(
                    f"non-finite training loss at epoch {epoch}, batch {b}")
            epoch_loss += batch_loss
            for g in grads:
                g /= len(sel)
            opt.step(grads)
            for g in grads:
                g.fill(0.0)
        train_history.append(epoch_loss / T)
        val_loss, _ = evaluate(model, val, cfg.tolerance)
        val_history.append(val_loss)
        if val_loss < stopper.best - 1e-12:
            best_snapshot = model.snapshot()
        if stopper.update(epoch, val_loss):
            break

    model.restore(best_snapshot)
    final = {}
    for name, ds in (("train", train), ("val", val), ("test", test)):
        if ds is None:
            final[f"{name}_loss"] = None
            final[f"{name}_acc"] = None
        else:
            loss, acc = evaluate(model, ds, cfg.tolerance)
            final[f"{name}_loss"] = loss
            final[f"{name}_acc"] = acc
    return FitReport(train_history, val_history, stopper.best_epoch, final)


def _train_step(model, groups, sel_g, sel_r, tolerance, grads) -> float:
    """Forward/backward one minibatch; returns the summed event loss."""
    scale = 1.0  # grads are divided by the batch size afterwards
    total = 0.0
    for g in np.unique(sel_g):
        rows = sel_r[sel_g == g]
        _idx, X, Z, avail, chosen = groups[g]
        Xb, Zb, ab, cb = X[rows], Z[rows], avail[rows], chosen[rows]
        U, cache = model.forward_batch(Xb, Zb, want_cache=True)
        P = masked_softmax(U, ab[:, None, :])
        pbar = P.mean(axis=1)
        m = np.arange(len(rows))
        kappa = ab.sum(axis=1)
        q = (pbar[m, cb] + tolerance) / (1.0 + kappa * tolerance)
        total += float(-np.log(q).sum())
        upstream = np.zeros_like(pbar)
        upstream[m, cb] = -scale / (pbar[m, cb] + tolerance)
        dU = softmax_mean_backward(P, upstream)
        model.backward_batch(cache, dU, grads)
    return total


def split_703015(dataset: ChoiceDataset, seed) -> tuple[ChoiceDataset, ChoiceDataset, ChoiceDataset]:
    """Disjoint random 70/15/15 partition; rounding remainder goes to train."""
    n = len(dataset)
    if n < 10:
        raise ValueError(f"dataset too small to split: {n} < 10 events")
    n_val = int(0.15 * n)
    n_test = int(0.15 * n)
    perm = np.random.default_rng(seed).permutation(n)
    n_train = n - n_val - n_test
    return (dataset.subset(perm[:n_train]),
            dataset.subset(perm[n_train:n_train + n_val]),
            dataset.subset(perm[n_train + n_val:]))


def kfold(dataset: ChoiceDataset, k: int = 10, seed: int = 0):
    """k independently seeded 70/15/15 resamplings (repeated random splits)."""
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    return [split_703015(dataset, seed=[seed, fold]) for fold in range(k)]


def aggregate(reports: list[FitReport]) -> dict:
    """Per-metric mean and population std over the folds' final metrics."""
    if not reports:
        raise ValueError("no reports to aggregate")
    out = {}
    for key in reports[0].final:
        vals = [r.final[key] for r in reports]
        if any(v is None for v in vals):
            continue
        arr = np.asarray(vals, dtype=np.float64)
        out[key] = {"mean": float(arr.mean()), "std": float(arr.std())}
    return out
