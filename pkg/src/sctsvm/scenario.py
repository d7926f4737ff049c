"""Synthetic multitemporal datasets and classifier perturbation.

Each class is a Gaussian whose mean follows a polynomial in the date::

    mean(d) = mean0 + drift[0] * d + drift[1] * d**2

(``drift`` empty means a static class). Features are in the generator's
native units and are never rescaled per date.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import (
    ArgumentError,
    BinaryView,
    ClassifierParams,
    DimensionError,
    LabeledDataset,
    SctError,
    TimedClassifier,
    stack_params,
    unstack_params,
)


class BandUnreachableError(SctError):
    def __init__(self, message, best: Optional[TimedClassifier] = None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True, eq=False)
class ClassDriftSpec:
    class_id: int
    mean0: np.ndarray
    covariance: np.ndarray
    drift: tuple = ()
    samples: int = 200

    def __post_init__(self):
        mean0 = np.asarray(self.mean0, dtype=float).reshape(-1)
        m = mean0.size
        cov = np.asarray(self.covariance, dtype=float)
        if cov.shape != (m, m):
            raise DimensionError(f"covariance must be {m}x{m}, got {cov.shape}")
        scale = max(1.0, float(np.max(np.abs(cov))))
        if not np.allclose(cov, cov.T, atol=1e-12 * scale):
            raise ArgumentError(f"class {self.class_id}: covariance is not symmetric")
        if np.linalg.eigvalsh(cov)[0] < -1e-10 * scale:
            raise ArgumentError(f"class {self.class_id}: covariance is not positive semidefinite")
        drift = tuple(np.asarray(v, dtype=float).reshape(-1) for v in self.drift)
        if len(drift) > 2:
            raise ArgumentError("drift supports at most linear and quadratic terms")
        if any(v.size != m for v in drift):
            raise DimensionError("drift vectors must match the mean dimension")
        if int(self.samples) < 1:
            raise ArgumentError("samples per date must be >= 1")
        object.__setattr__(self, "class_id", int(self.class_id))
        object.__setattr__(self, "mean0", mean0)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "drift", drift)
        object.__setattr__(self, "samples", int(self.samples))

    @property
    def kind(self) -> str:
        return ("none", "linear", "quadratic")[len(self.drift)]

    def mean_at(self, date: float) -> np.ndarray:
        out = self.mean0.copy()
        for power, v in enumerate(self.drift, start=1):
            out += v * float(date) ** power
        return out


@dataclass(frozen=True)
class ScenarioConfig:
    classes: tuple
    dates: tuple
    seed: int = 0
    reference_date: str = "2017-01-01"

    def __post_init__(self):
        classes = tuple(self.classes)
        dates = tuple(int(d) for d in self.dates)
        if len(classes) < 2:
            raise ArgumentError("a scenario needs at least two classes")
        if len(dates) < 2:
            raise ArgumentError("a scenario needs at least two dates")
        if any(b <= a for a, b in zip(dates, dates[1:])):
            raise ArgumentError(f"dates must increase: {dates}")
        if len({c.class_id for c in classes}) != len(classes):
            raise ArgumentError("class ids must be unique")
        if len({c.mean0.size for c in classes}) != 1:
            raise DimensionError("all classes must share the feature dimension")
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "dates", dates)

    @property
    def m(self) -> int:
        return self.classes[0].mean0.size


def _sqrt_cov(cov: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(cov)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def generate(cfg: ScenarioConfig) -> list:
    """One LabeledDataset per date; a pure function of ``cfg``."""
    rng = np.random.default_rng(cfg.seed)
    roots = [_sqrt_cov(c.covariance) for c in cfg.classes]
    out = []
    for date in cfg.dates:
        feats, labels = [], []
        for spec, root in zip(cfg.classes, roots):
            noise = rng.standard_normal((spec.samples, spec.mean0.size))
            feats.append(spec.mean_at(date) + noise @ root.T)
            labels.append(np.full(spec.samples, spec.class_id))
        out.append(LabeledDataset(np.vstack(feats), np.concatenate(labels), date))
    return out


def binary_accuracy(c: ClassifierParams, view: BinaryView) -> float:
    f = view.features @ c.w + c.b
    return float(np.mean(np.where(f >= 0.0, 1.0, -1.0) == view.y))


def perturb_to_band(optimal: ClassifierParams, eval_set: BinaryView, band: Sequence[float],
                    noise_scale: float, seed: int, max_attempts: int = 200,
                    date: int = 0) -> TimedClassifier:
    """Add isotropic Gaussian noise to the stacked parameters until the
    accuracy on ``eval_set`` falls inside ``band``.

    The noise scale doubles after an attempt that is too accurate and halves
    after one that is not accurate enough. A zero starting scale is lifted
    to 1% of the parameter norm once noise is needed.
    """
    lo, hi = float(band[0]), float(band[1])
    if not 0.0 <= lo <= hi <= 1.0:
        raise ArgumentError(f"band must satisfy 0 <= lo <= hi <= 1, got {band}")
    if eval_set.n == 0:
        raise ArgumentError("evaluation set is empty")
    rng = np.random.default_rng(seed)
    p0 = stack_params(optimal)
    scale = float(noise_scale)
    best, best_gap = None, np.inf
    for _ in range(int(max_attempts)):
        cand = unstack_params(p0 + scale * rng.standard_normal(p0.size)) if scale > 0 else optimal
        acc = binary_accuracy(cand, eval_set)
        if lo <= acc <= hi:
            return TimedClassifier(cand, date, acc)
        gap = lo - acc if acc < lo else acc - hi
        if gap < best_gap:
            best, best_gap = TimedClassifier(cand, date, acc), gap
        if acc > hi:
            scale = scale * 2.0 if scale > 0 else 0.01 * float(np.linalg.norm(p0)) + 1e-12
        else:
            scale *= 0.5
    raise BandUnreachableError(
        f"no perturbation reached accuracy band [{lo}, {hi}] in {max_attempts} attempts "
        f"(closest: {best.accuracy:.4f})", best)


def _rotation_cov(stds, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((len(stds), len(stds))))
    q = q * np.sign(np.diag(r))
    return q @ np.diag(np.square(stds)) @ q.T


PERCENT = 0.01  # fixtures are written in reflectance percent and generated as fractions


def _class(class_id, mean_pct, stds_pct, rotation_seed, samples, path_pct=None, lin=0.0, quad=0.0):
    path = None if path_pct is None else PERCENT * np.asarray(path_pct, dtype=float)
    drift = () if path is None else (lin * path, quad * path)
    return ClassDriftSpec(
        class_id,
        mean0=PERCENT * np.asarray(mean_pct, dtype=float),
        covariance=_rotation_cov(PERCENT * np.asarray(stds_pct, dtype=float), rotation_seed),
        drift=drift,
        samples=samples,
    )


def paper_like_scenario(seed: int = 0, samples: int = 200) -> ScenarioConfig:
    """Five classes over five dates 10 days apart, six reflectance bands.

    Crops (1) and forests (2) move along one curved path each (the mean at
    date ``d`` is offset by ``0.1 d + 0.006 d^2`` times a fixed direction,
    forests by a smaller amount); water (3), soil (4) and buildings (5) are
    static. Soil and buildings overlap, as do crops and forests.
    """
    crop_path = [0.1, 0.05, 0.1, -1.0, -0.5, 0.1]
    forest_path = [0.05, 0.03, 0.05, -0.6, -0.3, 0.05]
    classes = (
        _class(1, [6, 8, 5, 32, 24, 14], [6.6, 4.8, 3.6, 3.0, 2.4, 1.8], 11, samples, crop_path, 0.1, 0.006),
        _class(2, [4, 6, 4, 24, 18, 10], [6.0, 4.5, 3.6, 3.0, 2.4, 1.8], 12, samples, forest_path, 0.1, 0.006),
        _class(3, [8, 6, 4, 3, 2, 1], [5.4, 3.9, 3.0, 2.4, 1.8, 1.5], 13, samples),
        _class(4, [12, 14, 16, 20, 26, 24], [7.2, 5.4, 4.2, 3.3, 2.7, 2.1], 14, samples),
        _class(5, [16, 16, 17, 20, 21, 20], [7.8, 6.0, 4.5, 3.6, 2.7, 2.1], 15, samples),
    )
    return ScenarioConfig(classes, (0, 10, 20, 30, 40), seed, "2017-01-28")


def landsat_like_scenario(seed: int = 0, samples: int = 200) -> ScenarioConfig:
    """Rice (class 1) against other crops (class 2) over ten dates 16 days
    apart, seven reflectance bands.

    Both classes follow a curved path (rising then flattening in the near
    infrared); the other crops move 80% as far as rice, so the gap between
    them widens slowly.
    """
    classes = (
        _class(1, [4, 5, 7, 6, 30, 18, 10], [7.5, 5.4, 4.2, 3.6, 3.0, 2.4, 1.8], 21, samples,
               [0.01, 0.01, 0.02, 0.03, 0.2, -0.05, -0.03], 1.0, -0.005),
        _class(2, [5, 6, 8, 8, 26, 22, 14], [7.5, 5.4, 4.2, 3.6, 3.0, 2.4, 1.8], 22, samples,
               [0.008, 0.008, 0.016, 0.024, 0.16, -0.04, -0.024], 1.0, -0.005),
    )
    return ScenarioConfig(classes, tuple(range(0, 160, 16)), seed, "2016-12-12")


FIXTURES = {
    "paper_like": paper_like_scenario,
    "landsat_like": landsat_like_scenario,
}
