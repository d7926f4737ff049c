"""Experiment protocols: sequential training against direct training,
parameter sweeps, and robustness to inaccurate earlier classifiers."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from . import scenario as scn
from . import tasvm, trend
from .core import LabeledDataset, PairHistory, TimedClassifier, make_binary_view
from .evaluation import TrialReport, confusion_and_accuracy, summarize
from .linsvm import SvmConfig, train_soft_margin
from .pipeline import (
    PipelineConfig,
    bootstrap_histories,
    classify_multiclass,
    sample_training_rows,
    step,
    train_direct,
)

VEGETATION = (1, 2)


def vegetation_orders(classes: Sequence[int], vegetative=VEGETATION, curved: int = 2, flat: int = 1) -> dict:
    """Per-pair orders: ``curved`` when a pair involves a vegetative class."""
    return {
        pair: (curved if set(pair) & set(vegetative) else flat)
        for pair in itertools.combinations(sorted(classes), 2)
    }


def evaluate(model, data: LabeledDataset, rows, seed=None) -> TrialReport:
    pred = classify_multiclass(model, data.features[rows])
    return confusion_and_accuracy(pred, data.labels[rows], classes=model.classes, seed=seed)


def compare_trial(histories, target: LabeledDataset, cfg: PipelineConfig, seed: int,
                  methods=("sct", "dir")) -> dict:
    """Draw ``cfg.nt`` samples per class with ``seed``, train each method on
    them and score on the remaining rows of ``target``."""
    rng = np.random.default_rng(seed)
    rows, _ = sample_training_rows(target.labels, cfg.nt, rng)
    test = np.setdiff1d(np.arange(target.n), rows)
    out = {}
    if "sct" in methods:
        model, _, _ = step(histories, target, replace(cfg, seed=seed), train_rows=rows)
        out["sct"] = evaluate(model, target, test, seed)
    if "dir" in methods:
        model = train_direct(target.subset(rows), cfg.C, cfg.qp)
        out["dir"] = evaluate(model, target, test, seed)
    return out


@dataclass(frozen=True)
class Stream:
    previous: tuple
    target: LabeledDataset
    histories: dict


def prepare_stream(datasets: Sequence[LabeledDataset], cfg: PipelineConfig) -> Stream:
    """Last dataset is the target; the ``cfg.window`` before it bootstrap the histories."""
    prev = tuple(datasets[-1 - cfg.window:-1])
    return Stream(prev, datasets[-1], bootstrap_histories(prev, cfg))


@lru_cache(maxsize=8)
def fixture_stream(name: str = "paper_like", seed: int = 0, window: int = 4, bootstrap_C: float = 50.0) -> Stream:
    data = scn.generate(scn.FIXTURES[name](seed))
    return prepare_stream(data, PipelineConfig(window=window, bootstrap_C=bootstrap_C))


def sct_vs_dir(stream: Stream, cfg: PipelineConfig, trials: int, base_seed: int = 0) -> dict:
    """Mean/std overall accuracy of both methods over seeded trials."""
    sct, direct = [], []
    for i in range(trials):
        res = compare_trial(stream.histories, stream.target, cfg, base_seed + i)
        sct.append(res["sct"].overall)
        direct.append(res["dir"].overall)
    return {"sct": summarize(sct), "dir": summarize(direct)}


BENCH_COLUMNS = ("method", "nt", "F", "C", "order", "trial", "overall_acc")


def benchmark_rows(stream: Stream, cfg: PipelineConfig, nt_list, F_list, C_list, order_list,
                   trials: int, base_seed: int = 0) -> list:
    """Long-format rows; Dir-SVM ignores ``F`` and ``order`` so those cells are blank."""
    classes = sorted({c for pair in stream.histories for c in pair})
    rows = []

    def row(method, nt, F, C, order, trial, rep: TrialReport):
        r = {"method": method, "nt": nt, "F": F, "C": C, "order": order, "trial": trial,
             "overall_acc": rep.overall}
        for c in classes:
            r[f"acc_{c}"] = rep.per_class[c]
        return r

    for nt, C in itertools.product(nt_list, C_list):
        for t in range(trials):
            seed = base_seed + t
            base = replace(cfg, nt=nt, C=C)
            rep = compare_trial(stream.histories, stream.target, base, seed, methods=("dir",))["dir"]
            rows.append(row("dir-svm", nt, "", C, "", t, rep))
            for F, order in itertools.product(F_list, order_list):
                run_cfg = replace(base, F=F, order=order)
                rep = compare_trial(stream.histories, stream.target, run_cfg, seed, methods=("sct",))["sct"]
                rows.append(row("sct-svm", nt, F, C, _order_label(order), t, rep))
    return rows


def _order_label(order) -> str:
    if isinstance(order, dict):
        return "per-pair"
    return str(order)


# --- robustness to inaccurate earlier classifiers (two-class streams) ---

def optimal_classifiers(datasets: Sequence[LabeledDataset], pair, C: float) -> list:
    """Standard SVM on every full dataset; the best available classifier per date."""
    return [train_soft_margin(make_binary_view(d, *pair), SvmConfig(C=C)) for d in datasets]


def _perturbed(datasets, optimal, idx, band, seed, pair):
    view = make_binary_view(datasets[idx], *pair)
    return scn.perturb_to_band(optimal[idx], view, band, noise_scale=0.1, seed=seed,
                               max_attempts=500, date=datasets[idx].date)


def _fine_tune_target(history: PairHistory, target: LabeledDataset, pair, order, nt, C, F, seed):
    rng = np.random.default_rng(seed)
    rows, _ = sample_training_rows(target.labels, nt, rng)
    test = np.setdiff1d(np.arange(target.n), rows)
    predicted, _ = trend.predict_classifier(history, min(order, len(history) - 1), target.date)
    res = tasvm.fine_tune(predicted, make_binary_view(target.subset(rows), *pair), tasvm.FineTuneConfig(C=C, F=F))
    test_view = make_binary_view(target.subset(test), *pair)
    return predicted, res.params, scn.binary_accuracy(predicted, test_view), scn.binary_accuracy(res.params, test_view)


def derive_seed(base, *parts) -> int:
    """Independent child seed for one (repetition, date, role) cell."""
    return int(np.random.SeedSequence([base, *parts]).generate_state(1)[0])


def error_analysis_single(datasets, n_prev: int = 4, nt: int = 50, band=(0.6, 0.7), reps: int = 100,
                          base_seed: int = 0, C: float = 50.0, F: float = 20.0, order: int = 1,
                          svm_C: float = 50.0, pair=(1, 2)) -> dict:
    """Earlier classifiers are perturbed into ``band``; one predict and
    fine-tune step per target date (every date with ``n_prev`` predecessors).

    Returns mean accuracies over repetitions and targets.
    """
    optimal = optimal_classifiers(datasets, pair, svm_C)
    pred_acc, ft_acc, prev_acc = [], [], []
    for rep in range(reps):
        for t in range(n_prev, len(datasets)):
            entries = [_perturbed(datasets, optimal, i, band, derive_seed(base_seed, rep, i, 1), pair)
                       for i in range(t - n_prev, t)]
            h = PairHistory(*pair, tuple(entries), window=n_prev)
            _, _, pa, fa = _fine_tune_target(h, datasets[t], pair, order, nt, C, F, derive_seed(base_seed, rep, t, 2))
            pred_acc.append(pa)
            ft_acc.append(fa)
            prev_acc.extend(e.accuracy for e in entries)
    return {"prediction": summarize(pred_acc), "fine_tuned": summarize(ft_acc), "previous": summarize(prev_acc)}


def error_analysis_sequential(datasets, n_init: int = 4, nt: int = 50, band=(0.6, 0.7), reps: int = 100,
                              base_seed: int = 0, C: float = 50.0, F: float = 20.0, order: int = 1,
                              window: Optional[int] = None, svm_C: float = 50.0, pair=(1, 2)) -> dict:
    """Start from ``n_init`` perturbed classifiers and train every later date
    in turn, each fine-tuned classifier joining the history.

    Returns ``{date: {"prediction": TrialStats, "fine_tuned": TrialStats}}``.
    """
    window = window or n_init
    optimal = optimal_classifiers(datasets, pair, svm_C)
    per_date = {d.date: ([], []) for d in datasets[n_init:]}
    for rep in range(reps):
        entries = [_perturbed(datasets, optimal, i, band, derive_seed(base_seed, rep, i, 1), pair) for i in range(n_init)]
        h = PairHistory(*pair, tuple(entries)[-window:], window=window)
        for t in range(n_init, len(datasets)):
            _, params, pa, fa = _fine_tune_target(h, datasets[t], pair, order, nt, C, F, derive_seed(base_seed, rep, t, 2))
            per_date[datasets[t].date][0].append(pa)
            per_date[datasets[t].date][1].append(fa)
            h = h.append(TimedClassifier(params, datasets[t].date, fa))
    return {d: {"prediction": summarize(p), "fine_tuned": summarize(f)} for d, (p, f) in per_date.items()}
