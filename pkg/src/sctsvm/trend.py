"""Predict a classifier for a new date from the trajectory of earlier ones.

The stacked parameter vectors of a pair history are mean-centred, rotated
onto their principal axes, and the first-axis score is regressed on the
sensing date with a low-order polynomial. The prediction keeps only the
extrapolated first score and maps it back to parameter space.

Dates are shifted so that the target date is day 0, which makes the
extrapolated score equal to the constant coefficient of the fit.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import (
    ArgumentError,
    ClassifierParams,
    InsufficientPointsError,
    PairHistory,
    unstack_params,
)


@dataclass(frozen=True, eq=False)
class TrendModel:
    mean_p: np.ndarray
    G: np.ndarray
    coeffs: np.ndarray  # a_0..a_r in days relative to target_date
    order: int
    dates: np.ndarray
    scores: np.ndarray
    target_date: int = 0

    def as_dict(self) -> dict:
        return {
            "mean_p": self.mean_p.tolist(),
            "G": self.G.tolist(),
            "coeffs": self.coeffs.tolist(),
            "order": self.order,
            "dates": [int(d) for d in self.dates],
            "scores": self.scores.tolist(),
            "target_date": int(self.target_date),
        }


def center_history(h: PairHistory | np.ndarray):
    """Return ``(mean_p, centered)`` for the stacked history rows."""
    P = h.stacked() if isinstance(h, PairHistory) else np.atleast_2d(np.asarray(h, dtype=float))
    if P.shape[0] == 0:
        raise InsufficientPointsError("cannot centre an empty history")
    mean_p = P.mean(axis=0)
    return mean_p, P - mean_p


def _fix_signs(G: np.ndarray) -> np.ndarray:
    G = G.copy()
    for j in range(G.shape[1]):
        col = G[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            G[:, j] = -col
    return G


def fit_pca(centered) -> np.ndarray:
    """Orthogonal matrix whose columns are the principal axes, strongest first.

    Each column is oriented so its largest-magnitude entry is positive. An
    all-zero input yields the identity.
    """
    Pc = np.atleast_2d(np.asarray(centered, dtype=float))
    dim = Pc.shape[1]
    if not np.any(Pc):
        return np.eye(dim)
    _, _, Vt = np.linalg.svd(Pc, full_matrices=True)
    return _fix_signs(Vt.T)


def _vander(d: np.ndarray, r: int) -> np.ndarray:
    return np.vander(d, r + 1, increasing=True)


def fit_trend(scores: Sequence[float], dates: Sequence[int], r: int) -> np.ndarray:
    """Least-squares polynomial ``a_0 + a_1 d + ... + a_r d^r``.

    Dates are rescaled internally for conditioning; the returned
    coefficients are in the units of ``dates``.
    """
    q = np.asarray(scores, dtype=float)
    d = np.asarray(dates, dtype=float)
    r = int(r)
    if r < 0:
        raise ArgumentError("polynomial order must be >= 0")
    if q.shape != d.shape or q.ndim != 1:
        raise ArgumentError("scores and dates must be equal-length sequences")
    if np.unique(d).size != d.size:
        raise ArgumentError(f"dates must be distinct, got {d.tolist()}")
    if d.size < r + 1:
        raise InsufficientPointsError(f"order {r} needs at least {r + 1} points, got {d.size}")
    s = max(1.0, float(np.max(np.abs(d))))
    V = _vander(d / s, r)
    a_scaled = np.linalg.lstsq(V, q, rcond=None)[0]
    return a_scaled / s ** np.arange(r + 1)


def eval_poly(coeffs, d) -> np.ndarray | float:
    return np.polynomial.polynomial.polyval(d, np.asarray(coeffs, dtype=float))


def _scores(centered: np.ndarray, G: np.ndarray) -> np.ndarray:
    return centered @ G[:, 0]


def predict_classifier(h: PairHistory, r: int, target_date: int):
    """Extrapolate ``h`` to ``target_date`` with an order-``r`` trend.

    Returns ``(ClassifierParams, TrendModel)``.
    """
    if len(h) == 0:
        raise InsufficientPointsError("empty history")
    mean_p, centered = center_history(h)
    G = fit_pca(centered)
    scores = _scores(centered, G)
    dates = h.dates()
    rel = (dates - int(target_date)).astype(float)
    coeffs = fit_trend(scores, rel, r)
    q1 = coeffs[0]
    p = mean_p + q1 * G[:, 0]
    model = TrendModel(mean_p, G, coeffs, int(r), dates, scores, int(target_date))
    return unstack_params(p), model


def loo_error(scores, dates, r: int) -> float:
    """Sum of squared leave-one-out prediction errors of an order-``r`` fit."""
    q = np.asarray(scores, dtype=float)
    d = np.asarray(dates, dtype=float)
    total = 0.0
    for i in range(q.size):
        keep = np.arange(q.size) != i
        a = fit_trend(q[keep], d[keep], r)
        total += (eval_poly(a, d[i]) - q[i]) ** 2
    return float(total)


def select_order(h: PairHistory, candidate_orders: Iterable[int], target_date: int) -> int:
    """Candidate order with the smallest leave-one-out score error.

    Every candidate must leave at least ``r + 1`` points after removing one,
    i.e. ``N >= r + 2``. Near-ties (relative 1e-9) go to the lower order.
    """
    cands = sorted({int(r) for r in candidate_orders})
    N = len(h)
    if not cands:
        raise ArgumentError("no candidate orders given")
    bad = [r for r in cands if N < r + 2]
    if bad:
        raise InsufficientPointsError(f"orders {bad} need N >= r + 2 history entries, have {N}")
    _, centered = center_history(h)
    G = fit_pca(centered)
    scores = _scores(centered, G)
    rel = (h.dates() - int(target_date)).astype(float)
    scale = float(np.sum(scores ** 2)) + 1e-300
    best_r, best = cands[0], None
    for r in cands:
        err = loo_error(scores, rel, r)
        if best is None or err < best - 1e-9 * max(best, scale * 1e-3):
            best_r, best = r, err
    return best_r
