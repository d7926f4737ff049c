"""Sequential training over a dated image stream, one-against-one.

For every class pair the history of earlier classifiers is extrapolated to
the incoming date, the prediction is fine-tuned on ``nt`` samples per class
from the incoming image, and the result joins the history (the oldest entry
leaves once the window is full).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from . import tasvm, trend
from .core import (
    ArgumentError,
    ClassifierParams,
    ClassMissingError,
    DimensionError,
    LabeledDataset,
    PairHistory,
    TimedClassifier,
    canonical_pair,
    make_binary_view,
)
from .linsvm import SvmConfig, fit_soft_margin
from .qpsolve import QpConfig

OrderPolicy = Union[int, Mapping[tuple, int], str]


@dataclass(frozen=True)
class PipelineConfig:
    window: int = 4
    order: OrderPolicy = 1
    default_order: int = 1  # used for pairs missing from a per-pair map
    candidate_orders: tuple = (1, 2)
    C: float = 50.0
    F: float = 20.0
    grid_search: bool = False
    nt: int = 5
    seed: int = 0
    bootstrap_C: float = 50.0  # same scale as the fine-tuning C
    qp: QpConfig = QpConfig()

    def __post_init__(self):
        if self.window < 2:
            raise ArgumentError("window must be >= 2 for prediction")
        if self.nt < 1:
            raise ArgumentError("nt must be >= 1")
        if isinstance(self.order, str) and self.order != "auto":
            raise ArgumentError(f"order must be an int, a per-pair map or 'auto', got {self.order!r}")


@dataclass(frozen=True)
class MulticlassModel:
    classes: tuple
    classifiers: dict  # canonical pair -> ClassifierParams

    def __post_init__(self):
        classes = tuple(sorted(int(c) for c in self.classes))
        expected = set(itertools.combinations(classes, 2))
        if set(self.classifiers) != expected:
            raise ArgumentError(
                f"one-against-one model over {len(classes)} classes needs "
                f"{len(expected)} pairs, got {len(self.classifiers)}"
            )
        object.__setattr__(self, "classes", classes)


@dataclass(frozen=True)
class PairStep:
    order: Optional[int]
    predicted: ClassifierParams
    params: ClassifierParams
    carried_forward: bool = False
    bias_fallback: bool = False
    F: Optional[float] = None
    C: Optional[float] = None


@dataclass(frozen=True)
class StepReport:
    date: int
    train_rows: np.ndarray
    pairs: dict = field(default_factory=dict)
    short_classes: tuple = ()
    missing_classes: tuple = ()


def votes(model: MulticlassModel, X) -> np.ndarray:
    """n x K vote counts, columns in ``model.classes`` order."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    index = {c: i for i, c in enumerate(model.classes)}
    V = np.zeros((X.shape[0], len(model.classes)), dtype=np.int64)
    for (pos, neg), c in model.classifiers.items():
        if X.shape[1] != c.m:
            raise DimensionError(f"model has m={c.m}, input has {X.shape[1]} features")
        f = X @ c.w + c.b
        pos_wins = f >= 0.0
        V[pos_wins, index[pos]] += 1
        V[~pos_wins, index[neg]] += 1
    return V


def classify_multiclass(model: MulticlassModel, x):
    """Majority vote over all pairs; ties go to the smallest class id."""
    x = np.asarray(x, dtype=float)
    V = votes(model, x)
    labels = np.asarray(model.classes)[np.argmax(V, axis=1)]
    return int(labels[0]) if x.ndim == 1 else labels


def sample_training_rows(labels, nt: int, rng: np.random.Generator):
    """Up to ``nt`` rows per class, uniform without replacement.

    Returns ``(sorted rows, classes that had fewer than nt rows)``.
    """
    labels = np.asarray(labels)
    picked, short = [], []
    for c in np.unique(labels):
        rows = np.flatnonzero(labels == c)
        if rows.size <= nt:
            if rows.size < nt:
                short.append(int(c))
            picked.append(rows)
        else:
            picked.append(np.sort(rng.choice(rows, size=nt, replace=False)))
    return np.sort(np.concatenate(picked)), tuple(short)


def resolve_order(h: PairHistory, cfg: PipelineConfig, target_date: int) -> int:
    N = len(h)
    if cfg.order == "auto":
        cands = [r for r in cfg.candidate_orders if N >= r + 2]
        if cands:
            return trend.select_order(h, cands, target_date)
        return min(1, N - 1)
    if isinstance(cfg.order, Mapping):
        r = int(cfg.order.get(h.pair, cfg.default_order))
    else:
        r = int(cfg.order)
    return min(r, N - 1)


def step(histories: Mapping[tuple, PairHistory], incoming: LabeledDataset, cfg: PipelineConfig,
         train_rows: Optional[np.ndarray] = None):
    """One predict / fine-tune / update round for every pair.

    ``train_rows`` overrides the seeded per-class sampler. Returns
    ``(MulticlassModel, updated histories, StepReport)``.
    """
    if train_rows is None:
        rng = np.random.default_rng(cfg.seed)
        train_rows, short = sample_training_rows(incoming.labels, cfg.nt, rng)
    else:
        train_rows = np.sort(np.asarray(train_rows, dtype=np.int64))
        short = ()
    train = incoming.subset(train_rows)
    present = set(train.classes())
    classes = sorted({c for pair in histories for c in pair})
    missing = tuple(c for c in classes if c not in present)
    ft_cfg = tasvm.FineTuneConfig(C=cfg.C, F=cfg.F)

    updated, model_params, infos = {}, {}, {}
    for pair in sorted(histories):
        h = histories[pair]
        if len(h) < 2:
            raise ArgumentError(f"history for {pair} needs >= 2 entries, has {len(h)}")
        if h.m != incoming.m:
            raise DimensionError(f"history {pair} has m={h.m}, incoming data has m={incoming.m}")
        r = resolve_order(h, cfg, incoming.date)
        predicted, _ = trend.predict_classifier(h, r, incoming.date)
        view = make_binary_view(train, *pair)
        if not view.has_both_labels():
            updated[pair] = h
            model_params[pair] = predicted
            infos[pair] = PairStep(r, predicted, predicted, carried_forward=True)
            continue
        C, F = cfg.C, cfg.F
        if cfg.grid_search:
            F, C, _ = tasvm.grid_search_fc(predicted, view, seed=cfg.seed, qp=cfg.qp)
            ft_cfg = tasvm.FineTuneConfig(C=C, F=F)
        res = tasvm.fine_tune(predicted, view, ft_cfg, cfg.qp)
        updated[pair] = h.append(TimedClassifier(res.params, incoming.date))
        model_params[pair] = res.params
        infos[pair] = PairStep(r, predicted, res.params, bias_fallback=res.bias_fallback, F=F, C=C)
    model = MulticlassModel(tuple(classes), model_params)
    report = StepReport(incoming.date, train_rows, infos, short, missing)
    return model, updated, report


def bootstrap_histories(datasets: Sequence[LabeledDataset], cfg: PipelineConfig) -> dict:
    """Train a standard SVM per pair and date on all rows of each dataset."""
    if len(datasets) < 2:
        raise ArgumentError("bootstrapping needs at least two dated datasets")
    dates = [d.date for d in datasets]
    if any(b <= a for a, b in zip(dates, dates[1:])):
        raise ArgumentError(f"dataset dates must increase: {dates}")
    classes = sorted({c for d in datasets for c in d.classes()})
    svm_cfg = SvmConfig(C=cfg.bootstrap_C)
    histories = {}
    for pair in itertools.combinations(classes, 2):
        h = PairHistory(*pair, window=cfg.window)
        for d in datasets:
            view = make_binary_view(d, *pair)
            fit = fit_soft_margin(view, svm_cfg, cfg.qp)
            f = view.features @ fit.params.w + fit.params.b
            acc = float(np.mean(np.where(f >= 0, 1.0, -1.0) == view.y))
            h = h.append(TimedClassifier(fit.params, d.date, acc))
        histories[pair] = h
    return histories


def train_direct(train: LabeledDataset, C: float, qp: QpConfig = QpConfig()) -> MulticlassModel:
    """One-against-one standard SVMs on ``train`` only (no prior information)."""
    classes = train.classes()
    params = {}
    for pair in itertools.combinations(classes, 2):
        view = make_binary_view(train, *pair)
        if not view.has_both_labels():
            raise ClassMissingError(f"pair {pair} lacks samples")
        params[pair] = fit_soft_margin(view, SvmConfig(C=C), qp).params
    return MulticlassModel(tuple(classes), params)


def model_from_histories(histories: Mapping[tuple, PairHistory]) -> MulticlassModel:
    """Model made of the newest entry of each history."""
    params = {pair: h.entries[-1].params for pair, h in histories.items()}
    classes = sorted({c for pair in histories for c in pair})
    return MulticlassModel(tuple(classes), params)


def canonical_histories(histories: Mapping) -> dict:
    return {canonical_pair(*pair): h for pair, h in histories.items()}
