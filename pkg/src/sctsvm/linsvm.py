"""Standard soft-margin linear SVM trained through its dual."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import BinaryView, ClassifierParams, ClassMissingError, DimensionError, ArgumentError
from .qpsolve import QpConfig, QpFailure, QpProblem, solve_qp


@dataclass(frozen=True)
class SvmConfig:
    C: float = 1.0
    sv_tol: Optional[float] = None  # None -> 1e-6 * C

    def __post_init__(self):
        if not self.C > 0:
            raise ArgumentError(f"C must be positive, got {self.C}")
        if self.sv_tol is not None and not 0 < self.sv_tol < self.C / 2:
            raise ArgumentError("sv_tol must lie in (0, C/2)")

    @property
    def tol(self) -> float:
        return self.sv_tol if self.sv_tol is not None else 1e-6 * self.C


@dataclass(frozen=True, eq=False)
class SvmFit:
    """Trained classifier plus the dual solution it came from."""

    params: ClassifierParams
    alphas: np.ndarray
    primal: float
    dual: float
    kkt_residual: float
    bias_fallback: bool

    @property
    def duality_gap(self) -> float:
        return self.primal - self.dual


def decision_value(c: ClassifierParams, x) -> np.ndarray | float:
    """``w.x + b`` for one sample or a row-stacked batch."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != c.m:
        raise DimensionError(f"classifier has m={c.m}, input has {x.shape[-1]} features")
    out = x @ c.w + c.b
    return float(out) if np.ndim(out) == 0 else out


def classify_binary(c: ClassifierParams, x):
    """+1 / -1 labels; a decision value of exactly 0 maps to +1."""
    f = decision_value(c, x)
    return np.where(np.asarray(f) >= 0.0, 1, -1) if np.ndim(f) else (1 if f >= 0.0 else -1)


def hinge_primal(w, b, X, y, C) -> float:
    margins = y * (X @ w + b)
    return float(0.5 * w @ w + C * np.maximum(0.0, 1.0 - margins).sum())


def kkt_interval_bias(w, X, y, alphas, C, tol):
    """Midpoint of the bias interval allowed by the bound-constrained samples."""
    fx = X @ w
    lo, hi = -np.inf, np.inf
    at_zero = alphas <= tol
    at_c = alphas >= C - tol
    # alpha = 0 -> y f >= 1 ; alpha = C -> y f <= 1
    for mask, sign in ((at_zero, 1.0), (at_c, -1.0)):
        pos = mask & (y > 0)
        neg = mask & (y < 0)
        if sign > 0:
            if pos.any():
                lo = max(lo, np.max(1.0 - fx[pos]))
            if neg.any():
                hi = min(hi, np.min(-1.0 - fx[neg]))
        else:
            if pos.any():
                hi = min(hi, np.min(1.0 - fx[pos]))
            if neg.any():
                lo = max(lo, np.max(-1.0 - fx[neg]))
    if np.isfinite(lo) and np.isfinite(hi):
        return 0.5 * (lo + hi)
    if np.isfinite(lo):
        return lo
    if np.isfinite(hi):
        return hi
    return 0.0


def fit_soft_margin(v: BinaryView, cfg: SvmConfig = SvmConfig(), qp: QpConfig = QpConfig()) -> SvmFit:
    X, y = np.asarray(v.features, dtype=float), np.asarray(v.y, dtype=float)
    n = X.shape[0]
    if n < 2 or not v.has_both_labels():
        raise ClassMissingError(f"pair {v.pair} needs samples of both classes")
    C = float(cfg.C)
    Z = y[:, None] * X
    prob = QpProblem(
        Q=Z @ Z.T, c=-np.ones(n),
        A_eq=y[None, :], b_eq=[0.0],
        lower=np.zeros(n), upper=np.full(n, C),
    )
    sol = solve_qp(prob, qp)
    if not sol.ok:
        raise QpFailure(f"SVM dual for pair {v.pair} did not converge ({sol.status})", sol)
    alpha = sol.z
    w = Z.T @ alpha
    tol = cfg.tol
    free = (alpha > tol) & (alpha < C - tol)
    if free.any():
        b = float(np.mean(y[free] - X[free] @ w))
        fallback = False
    else:
        b = kkt_interval_bias(w, X, y, alpha, C, tol)
        fallback = True
    return SvmFit(
        params=ClassifierParams(w, b),
        alphas=alpha,
        primal=hinge_primal(w, b, X, y, C),
        dual=-sol.objective,
        kkt_residual=sol.kkt_residual,
        bias_fallback=fallback,
    )


def train_soft_margin(v: BinaryView, cfg: SvmConfig = SvmConfig(), qp: QpConfig = QpConfig()) -> ClassifierParams:
    return fit_soft_margin(v, cfg, qp).params
