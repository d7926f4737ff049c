import numpy as np
import pytest

from sctsvm.core import ArgumentError, ClassifierParams, DimensionError, LabeledDataset, SctError
from sctsvm.evaluation import (
    confusion_and_accuracy,
    feature_date_correlation,
    param_distance,
    repeated_trials,
    summarize,
)


def test_perfect_prediction():
    r = confusion_and_accuracy([1, 2, 3, 1], [1, 2, 3, 1])
    assert r.overall == 1.0
    assert np.array_equal(r.confusion, np.diag([2, 1, 1]))


def test_all_wrong():
    assert confusion_and_accuracy([2, 2, 1, 1], [1, 1, 2, 2]).overall == 0.0


def test_hand_counted_fixture():
    truth = [1, 1, 1, 1, 2, 2, 2, 3, 3, 3]
    pred = [1, 1, 2, 3, 2, 2, 1, 3, 3, 2]
    r = confusion_and_accuracy(pred, truth, seed=4)
    assert r.confusion.tolist() == [[2, 1, 1], [1, 2, 0], [0, 1, 2]]
    assert r.per_class == {1: 0.5, 2: pytest.approx(2 / 3), 3: pytest.approx(2 / 3)}
    assert r.overall == 0.6
    assert r.confusion.sum(axis=1).tolist() == [4, 3, 3]
    assert r.seed == 4


def test_absent_class_gets_nan():
    r = confusion_and_accuracy([1, 1], [1, 1], classes=(1, 2))
    assert np.isnan(r.per_class[2]) and r.overall == 1.0


def test_confusion_errors():
    with pytest.raises(DimensionError):
        confusion_and_accuracy([1, 2], [1])
    with pytest.raises(ArgumentError):
        confusion_and_accuracy([], [])


def test_param_distance():
    a = ClassifierParams([0.0, 0.0], 0.0)
    assert param_distance(a, a) == 0.0
    assert param_distance(a, ClassifierParams([3.0, 4.0], 0.0)) == 5.0
    with pytest.raises(DimensionError):
        param_distance(a, ClassifierParams([1.0], 0.0))


def test_param_distance_metric_axioms():
    rng = np.random.default_rng(0)
    for _ in range(100):
        a, b, c = (ClassifierParams(rng.normal(size=3), rng.normal()) for _ in range(3))
        assert param_distance(a, b) == param_distance(b, a)
        assert param_distance(a, c) <= param_distance(a, b) + param_distance(b, c) + 1e-12


def dated(values_by_date, cls=1):
    return [LabeledDataset(np.asarray(v, dtype=float)[:, None], [cls] * len(v), d) for d, v in values_by_date]


def test_correlation_signs_and_degenerate():
    assert feature_date_correlation(dated([(0, [0, 0]), (5, [5, 5]), (9, [9, 9])]), 1, 0).value == pytest.approx(1.0)
    assert feature_date_correlation(dated([(0, [0]), (5, [-5]), (9, [-9])]), 1, 0).value == pytest.approx(-1.0)
    flat = feature_date_correlation(dated([(0, [2, 2]), (5, [2, 2])]), 1, 0)
    assert flat.value == 0.0 and flat.degenerate and flat.n == 4


def test_correlation_pools_samples_and_stays_in_range():
    rng = np.random.default_rng(1)
    data = dated([(d, rng.normal(size=20) + 0.1 * d) for d in (0, 10, 20)])
    c = feature_date_correlation(data, 1, 0)
    x = np.concatenate([d.features[:, 0] for d in data])
    t = np.repeat([0, 10, 20], 20)
    assert c.value == pytest.approx(np.corrcoef(x, t)[0, 1], abs=1e-12)
    assert -1.0 <= c.value <= 1.0
    with pytest.raises(SctError):
        feature_date_correlation(data, 7, 0)


def test_repeated_trials_arithmetic():
    stats = repeated_trials(lambda seed: {"acc": [0.8, 0.9][seed]}, trials=2)
    assert stats["acc"].mean == pytest.approx(0.85)
    assert stats["acc"].std == pytest.approx(0.0707107, abs=1e-6)


def test_repeated_trials_deterministic_and_parallel():
    run = lambda seed: {"acc": float(np.random.default_rng(seed).random())}
    serial = repeated_trials(run, 10, base_seed=3)
    threaded = repeated_trials(run, 10, base_seed=3, jobs=4)
    assert serial["acc"] == threaded["acc"]
    assert repeated_trials(lambda s: {"x": 1.0}, 5)["x"].std == 0.0
    with pytest.raises(ArgumentError):
        repeated_trials(run, 0)


def test_summary_matches_recomputation():
    vals = [0.81, 0.77, 0.9, 0.85, 0.79, 0.88, 0.83, 0.8, 0.86, 0.84]
    s = summarize(vals)
    mean = sum(vals) / len(vals)
    std = (sum((v - mean) ** 2 for v in vals) / (len(vals) - 1)) ** 0.5
    assert s.mean == pytest.approx(mean, abs=1e-15) and s.std == pytest.approx(std, abs=1e-15)
