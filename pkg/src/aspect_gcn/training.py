"""Optimization, the training loop, metrics, and significance testing."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import CLASS_NAMES, Example, make_batches
from .models import ModelConfig, ParameterStore, forward


class TrainingError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# loss


def loss(logits: Tensor, labels, store: ParameterStore, l2_lambda: float, include_embedding: bool = True) -> Tensor:
    """Mean negative log-likelihood plus l2_lambda * sum of squared parameters."""
    labels = np.asarray(labels, dtype=np.int64)
    batch, num_classes = logits.shape
    if labels.shape != (batch,):
        raise ValueError(f"labels shape {labels.shape} does not match logits {logits.shape}")
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ValueError("label index out of range")
    one_hot = np.zeros((batch, num_classes))
    one_hot[np.arange(batch), labels] = 1.0
    log_probs = ad.log_softmax(logits)
    nll = ad.scale(ad.reduce_sum(ad.mul(log_probs, ad.constant(one_hot))), -1.0 / batch)
    if l2_lambda == 0.0:
        return nll
    penalty = None
    for path, tensor in store.items():
        if not include_embedding and path == "embed.weight":
            continue
        term = ad.reduce_sum(ad.mul(tensor, tensor))
        penalty = term if penalty is None else ad.add(penalty, term)
    return ad.add(nll, ad.scale(penalty, l2_lambda))


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(store: ParameterStore, state: AdamState) -> None:
    """Bias-corrected Adam update; clears gradients afterwards.

    A parameter with no gradient this step keeps its value while its
    moments decay.
    """
    state.step_count += 1
    t = state.step_count
    bias1 = 1.0 - state.beta1**t
    bias2 = 1.0 - state.beta2**t
    for path, tensor in store.items():
        grad = tensor.grad
        if grad is not None and np.isnan(grad).any():
            raise TrainingError(f"NaN gradient in parameter {path}")
        if grad is None:
            grad = np.zeros_like(tensor.data)
        m = state.first_moment.get(path)
        v = state.second_moment.get(path)
        if m is None:
            m = np.zeros_like(tensor.data)
            v = np.zeros_like(tensor.data)
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.first_moment[path] = m
        state.second_moment[path] = v
        tensor.data -= state.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + state.epsilon)
        tensor.zero_grad()


# ---------------------------------------------------------------------------
# metrics


@dataclass
class EvalReport:
    accuracy: float
    macro_f1: float
    precision: list[float]
    recall: list[float]
    f1: list[float]
    confusion: list[list[int]]  # rows gold, columns predicted
    correct: list[int]  # per-example 0/1 in dataset order

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, record: dict) -> "EvalReport":
        return cls(**record)

    def format_table(self) -> str:
        lines = [
            f"accuracy  {self.accuracy:.4f}",
            f"macro-F1  {self.macro_f1:.4f}",
            "class      precision  recall  f1",
        ]
        for i, name in enumerate(CLASS_NAMES):
            lines.append(f"{name:<10} {self.precision[i]:9.4f} {self.recall[i]:7.4f} {self.f1[i]:5.4f}")
        lines.append("confusion (rows gold, cols predicted):")
        for row in self.confusion:
            lines.append("  " + " ".join(f"{v:5d}" for v in row))
        return "\n".join(lines)


def report_from_predictions(gold, predicted, num_classes: int = 3) -> EvalReport:
    """Accuracy, per-class precision/recall/F1, unweighted macro F1.

    A class with neither gold instances nor predictions contributes an F1
    of zero to the macro average.
    """
    gold = np.asarray(gold, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if gold.shape != predicted.shape:
        raise ValueError("gold and predicted lengths differ")
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    for g, p in zip(gold, predicted):
        confusion[g, p] += 1
    correct = (gold == predicted).astype(int)
    accuracy = float(np.trace(confusion) / confusion.sum())
    precision, recall, f1 = [], [], []
    for c in range(num_classes):
        tp = confusion[c, c]
        pred_c = confusion[:, c].sum()
        gold_c = confusion[c, :].sum()
        p = float(tp / pred_c) if pred_c else 0.0
        r = float(tp / gold_c) if gold_c else 0.0
        f = 2.0 * p * r / (p + r) if (p + r) else 0.0
        precision.append(p)
        recall.append(r)
        f1.append(f)
    return EvalReport(
        accuracy=accuracy,
        macro_f1=float(np.mean(f1)),
        precision=precision,
        recall=recall,
        f1=f1,
        confusion=confusion.tolist(),
        correct=correct.tolist(),
    )


def evaluate(store: ParameterStore, cfg: ModelConfig, dataset: Sequence[Example]) -> EvalReport:
    """Deterministic full-dataset evaluation in dataset order."""
    if not dataset:
        raise ValueError("cannot evaluate an empty dataset")
    predictions = np.zeros(len(dataset), dtype=np.int64)
    gold = np.array([example.label for example in dataset], dtype=np.int64)
    flavor = cfg.adjacency_flavor()
    position = 0
    for batch in make_batches(dataset, cfg.batch_size, shuffle_seed=None, flavor=flavor):
        logits, _ = forward(store, cfg, batch, training=False)
        predictions[position : position + batch.size] = np.argmax(logits.data, axis=1)
        position += batch.size
    return report_from_predictions(gold, predictions, cfg.num_classes)


# ---------------------------------------------------------------------------
# training loop


@dataclass
class HistoryEntry:
    epoch: int
    train_loss: float
    eval_accuracy: float
    eval_macro_f1: float
    wall_seconds: float


@dataclass
class TrainResult:
    store: ParameterStore
    history: list[HistoryEntry]
    best_epoch: int
    best_accuracy: float
    best_report: EvalReport


def train(
    cfg: ModelConfig,
    train_set: Sequence[Example],
    eval_set: Sequence[Example],
    vocab_size: int,
    pretrained: np.ndarray | None = None,
    max_epochs: int = 100,
    patience: int = 5,
) -> TrainResult:
    """Train with Adam and early stopping on evaluation accuracy.

    Parameters at the best evaluation accuracy are retained. Training is
    fully deterministic under cfg.seed apart from the wall_seconds field
    of the history.
    """
    if not train_set or not eval_set:
        raise ValueError("training and evaluation sets must be nonempty")
    from .models import build_model  # local import keeps module load cheap

    store = build_model(cfg, vocab_size, pretrained)
    adam = AdamState(learning_rate=cfg.learning_rate)
    flavor = cfg.adjacency_flavor()
    dropout_rng = np.random.default_rng(cfg.seed + 7919)

    best_values = store.snapshot()
    best_accuracy = -1.0
    best_epoch = 0
    best_report: EvalReport | None = None
    epochs_without_improvement = 0
    history: list[HistoryEntry] = []

    for epoch in range(1, max_epochs + 1):
        start = time.perf_counter()
        batches = make_batches(train_set, cfg.batch_size, shuffle_seed=cfg.seed * 100_003 + epoch, flavor=flavor)
        epoch_loss = 0.0
        for batch_index, batch in enumerate(batches):
            logits, _ = forward(store, cfg, batch, training=True, dropout_rng=dropout_rng)
            objective = loss(logits, batch.labels, store, cfg.l2_lambda, cfg.l2_include_embedding)
            value = objective.item()
            if math.isnan(value):
                raise TrainingError(f"loss diverged to NaN at epoch {epoch}, batch {batch_index}")
            epoch_loss += value * batch.size
            objective.backward()
            adam_step(store, adam)
        report = evaluate(store, cfg, eval_set)
        history.append(
            HistoryEntry(
                epoch=epoch,
                train_loss=epoch_loss / len(train_set),
                eval_accuracy=report.accuracy,
                eval_macro_f1=report.macro_f1,
                wall_seconds=time.perf_counter() - start,
            )
        )
        if report.accuracy > best_accuracy:
            best_accuracy = report.accuracy
            best_epoch = epoch
            best_values = store.snapshot()
            best_report = report
            epochs_without_improvement = 0
        else:
            epochs_without_improvement += 1
            if epochs_without_improvement > patience:
                break

    store.restore(best_values)
    assert best_report is not None
    return TrainResult(store=store, history=history, best_epoch=best_epoch, best_accuracy=best_accuracy, best_report=best_report)


def write_history(path, history: Sequence[HistoryEntry]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for entry in history:
            handle.write(json.dumps(asdict(entry), sort_keys=True) + "\n")


def read_history(path) -> list[HistoryEntry]:
    entries = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                entries.append(HistoryEntry(**json.loads(line)))
    return entries


# ---------------------------------------------------------------------------
# multi-run aggregation


@dataclass
class RunAggregate:
    mean_accuracy: float
    mean_macro_f1: float
    accuracies: list[float]
    macro_f1s: list[float]

    def to_dict(self) -> dict:
        return asdict(self)


def aggregate_runs(reports: Sequence[EvalReport]) -> RunAggregate:
    if not reports:
        raise ValueError("need at least one report to aggregate")
    accuracies = [r.accuracy for r in reports]
    macro_f1s = [r.macro_f1 for r in reports]
    return RunAggregate(
        mean_accuracy=float(np.mean(accuracies)),
        mean_macro_f1=float(np.mean(macro_f1s)),
        accuracies=accuracies,
        macro_f1s=macro_f1s,
    )


# ---------------------------------------------------------------------------
# paired t-test


def _log_beta(a: float, b: float) -> float:
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    # Lentz's method for the continued fraction of the regularized
    # incomplete beta function; converges quickly for x < (a+1)/(a+b+2).
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        numerator = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + numerator * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + numerator / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        numerator = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + numerator * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + numerator / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-12:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must be in [0, 1], got {x}")
    if x in (0.0, 1.0):
        return x
    front = math.exp(a * math.log(x) + b * math.log(1.0 - x) - _log_beta(a, b))
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def student_t_two_sided_p(t_statistic: float, dof: int) -> float:
    """P(|T| >= |t|) for a Student-t variable with dof degrees of freedom."""
    if dof < 1:
        raise ValueError("degrees of freedom must be >= 1")
    x = dof / (dof + t_statistic * t_statistic)
    return regularized_incomplete_beta(dof / 2.0, 0.5, x)


@dataclass
class TTestResult:
    t_statistic: float
    p_value: float
    dof: int


def paired_t_test(a, b) -> TTestResult:
    """Two-sided paired t-test on per-example (or per-run) paired values."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired t-test requires two equal-length vectors")
    n = a.shape[0]
    if n < 2:
        raise ValueError("paired t-test requires at least 2 pairs")
    differences = a - b
    sd = differences.std(ddof=1)
    if sd == 0.0:
        raise ValueError("paired differences have zero variance; t statistic undefined")
    t = float(differences.mean() / (sd / math.sqrt(n)))
    return TTestResult(t_statistic=t, p_value=student_t_two_sided_p(t, n - 1), dof=n - 1)
