"""Accuracy metrics, parameter-space distance and trial statistics."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .core import ArgumentError, ClassifierParams, DimensionError, LabeledDataset, SctError, stack_params


@dataclass(frozen=True, eq=False)
class TrialReport:
    classes: tuple
    per_class: dict
    overall: float
    confusion: np.ndarray  # rows: truth, columns: prediction
    seed: Optional[int] = None


def confusion_and_accuracy(pred, truth, classes: Optional[Sequence[int]] = None,
                           seed: Optional[int] = None) -> TrialReport:
    pred = np.asarray(pred, dtype=np.int64).reshape(-1)
    truth = np.asarray(truth, dtype=np.int64).reshape(-1)
    if pred.size != truth.size:
        raise DimensionError(f"{pred.size} predictions for {truth.size} labels")
    if pred.size == 0:
        raise ArgumentError("need at least one prediction")
    if classes is None:
        classes = np.union1d(pred, truth)
    classes = tuple(int(c) for c in classes)
    index = {c: i for i, c in enumerate(classes)}
    K = len(classes)
    conf = np.zeros((K, K), dtype=np.int64)
    for t, p in zip(truth, pred):
        conf[index[int(t)], index[int(p)]] += 1
    rows = conf.sum(axis=1)
    per_class = {
        c: (float(conf[i, i] / rows[i]) if rows[i] else float("nan"))
        for i, c in enumerate(classes)
    }
    overall = float(np.trace(conf) / conf.sum())
    return TrialReport(classes, per_class, overall, conf, seed)


def param_distance(a: ClassifierParams, b: ClassifierParams) -> float:
    """Euclidean distance between stacked parameter vectors."""
    if a.m != b.m:
        raise DimensionError(f"dimension mismatch: {a.m} vs {b.m}")
    return float(np.linalg.norm(stack_params(a) - stack_params(b)))


@dataclass(frozen=True)
class Correlation:
    value: float
    degenerate: bool
    n: int


def feature_date_correlation(datasets: Sequence[LabeledDataset], class_id: int,
                             feature: int) -> Correlation:
    """Pearson correlation between one feature and the sensing date.

    Samples of ``class_id`` are pooled over all datasets, each sample paired
    with its dataset's date. Zero variance on either side gives 0 with
    ``degenerate=True``.
    """
    vals, dates = [], []
    for d in datasets:
        rows = d.labels == class_id
        if rows.any():
            vals.append(d.features[rows, feature])
            dates.append(np.full(int(rows.sum()), float(d.date)))
    if not vals:
        raise SctError(f"class {class_id} is absent from every dataset")
    x = np.concatenate(vals)
    t = np.concatenate(dates)
    xc, tc = x - x.mean(), t - t.mean()
    sx, st = np.sqrt(xc @ xc), np.sqrt(tc @ tc)
    if sx <= 1e-12 * (1.0 + np.abs(x).max()) or st == 0.0:
        return Correlation(0.0, True, x.size)
    r = float(np.clip((xc @ tc) / (sx * st), -1.0, 1.0))
    return Correlation(r, False, x.size)


@dataclass(frozen=True)
class TrialStats:
    mean: float
    std: float
    values: tuple


def summarize(values: Sequence[float]) -> TrialStats:
    v = np.asarray(values, dtype=float)
    std = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
    return TrialStats(float(np.mean(v)), std, tuple(float(x) for x in v))


def repeated_trials(run: Callable[[int], Mapping[str, float]], trials: int, base_seed: int = 0,
                    jobs: int = 1) -> dict:
    """Run ``run(seed)`` for seeds ``base_seed .. base_seed + trials - 1``.

    Returns ``{metric: TrialStats}`` with the sample (n - 1) standard
    deviation. Results are ordered by seed, so ``jobs > 1`` does not change
    the aggregate.
    """
    if trials < 1:
        raise ArgumentError("trials must be >= 1")
    seeds = [base_seed + i for i in range(trials)]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            outputs = list(ex.map(run, seeds))
    else:
        outputs = [run(s) for s in seeds]
    metrics = list(outputs[0])
    return {k: summarize([o[k] for o in outputs]) for k in metrics}
