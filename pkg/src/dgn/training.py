"""Full-batch Adam training with softmax cross-entropy and per-epoch metrics.

One optimiser step per epoch over the whole training set (batch size equals
the training-set size). Train loss/accuracy for an epoch come from the step's
own forward pass (parameters entering the epoch); test accuracy is evaluated
after the update, so the last row describes the returned model. Everything is
deterministic given the model's init seed.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff
from .autodiff import Tape, backward

__all__ = [
    "AdamState",
    "TrainRecord",
    "TrainingDiverged",
    "accuracy_from_logits",
    "adam_init",
    "adam_step",
    "cross_entropy",
    "evaluate",
    "load_records_csv",
    "train",
    "write_records_csv",
]


class TrainingDiverged(RuntimeError):
    """Raised when the training loss becomes NaN/Inf."""

    def __init__(self, epoch):
        super().__init__(f"training loss is not finite at epoch {epoch}")
        self.epoch = epoch


def cross_entropy(logits, labels):
    """Mean over graphs of -log softmax(logits)[label] (max-shift stable)."""
    return autodiff.softmax_cross_entropy(logits, labels)


@dataclass
class AdamState:
    """First/second moment estimates per parameter plus the step counter."""

    m: list
    v: list
    t: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
    tensors = [t for _, t in params]
    return AdamState(
        m=[np.zeros_like(t.data) for t in tensors],
        v=[np.zeros_like(t.data) for t in tensors],
        lr=lr,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
    )


def adam_step(state, params, grads):
    """Bias-corrected Adam update, in place on the parameter tensors."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    for i, (_, tensor) in enumerate(params):
        g = grads[tensor]
        if g.shape != tensor.data.shape:
            raise ValueError(
                f"gradient shape {g.shape} does not match parameter shape {tensor.data.shape}"
            )
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        m_hat = state.m[i] / (1.0 - b1**state.t)
        v_hat = state.v[i] / (1.0 - b2**state.t)
        tensor.data = tensor.data - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def accuracy_from_logits(logits, labels):
    """Fraction of argmax hits; ties resolve to the lowest class index."""
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def evaluate(model, dataset):
    """Test accuracy of a model on labelled graphs (side-effect free)."""
    prepared = model.prepare(dataset)
    logits = model.forward(prepared)
    return accuracy_from_logits(logits.data, prepared.labels)


@dataclass
class TrainRecord:
    """Per-epoch metrics for one run.

    ``test_acc`` maps eval-set name -> per-epoch accuracies; single-set runs
    use the name "test".
    """

    seed: int
    config_id: str
    epochs: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    test_acc: dict = field(default_factory=dict)

    def final_test_acc(self, name="test"):
        series = self.test_acc[name]
        return series[-1] if series else None


def train(model, train_set, test_set=None, epochs=500, seed=None, lr=0.001):
    """Train in place for ``epochs`` full-batch Adam steps; returns a TrainRecord.

    ``test_set`` may be a list of labelled graphs or a dict of named eval
    sets; each is evaluated every epoch. Raises TrainingDiverged (with the
    epoch index) if the loss stops being finite.
    """
    train_list = list(train_set)
    if not train_list:
        raise ValueError("training set is empty")
    prepared = model.prepare(train_list)
    if prepared.labels is None:
        raise ValueError("training graphs must carry labels")
    eval_sets = {}
    if test_set is not None:
        named = test_set if isinstance(test_set, dict) else {"test": test_set}
        eval_sets = {name: model.prepare(ds) for name, ds in named.items()}

    params = model.parameters()
    state = adam_init(params, lr=lr)
    record = TrainRecord(
        seed=model.seed if seed is None else seed,
        config_id=model.config_id(),
        test_acc={name: [] for name in eval_sets},
    )
    for epoch in range(1, epochs + 1):
        with Tape():
            logits = model.forward(prepared)
            loss = cross_entropy(logits, prepared.labels)
        if not np.isfinite(loss.data):
            raise TrainingDiverged(epoch)
        grads = backward(loss, [t for _, t in params])
        record.epochs.append(epoch)
        record.train_loss.append(loss.item())
        record.train_acc.append(accuracy_from_logits(logits.data, prepared.labels))
        adam_step(state, params, grads)
        for name, ep in eval_sets.items():
            acc = accuracy_from_logits(model.forward(ep).data, ep.labels)
            record.test_acc[name].append(acc)
    return record


def write_records_csv(record, path, test_name="test"):
    """Emit ``epoch,train_loss,train_acc,test_acc`` rows (round-trip floats)."""
    series = record.test_acc.get(test_name, [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "train_acc", "test_acc"])
        for i, epoch in enumerate(record.epochs):
            test = repr(series[i]) if i < len(series) else ""
            writer.writerow(
                [epoch, repr(record.train_loss[i]), repr(record.train_acc[i]), test]
            )


def write_record_sidecar(record, path, config, wall_time=None):
    doc = {
        "config": config,
        "config_id": record.config_id,
        "seed": record.seed,
        "wall_time_seconds": wall_time,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_records_csv(path):
    """Read a records CSV back into column arrays."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    return {
        "epoch": np.array([int(r["epoch"]) for r in rows]),
        "train_loss": np.array([float(r["train_loss"]) for r in rows]),
        "train_acc": np.array([float(r["train_acc"]) for r in rows]),
        "test_acc": np.array([float(r["test_acc"]) for r in rows if r["test_acc"] != ""]),
    }
