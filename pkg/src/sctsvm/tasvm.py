"""Fine-tuning of a predicted linear classifier with a few labelled samples.

Problem solved (primal form)::

    min  0.5 |w|^2 + C sum(xi) + F sum(mu)
    s.t. y_i (w.x_i + b) >= 1 - xi_i,  xi_i >= 0
         |w_j - w*_j| <= mu_j,         mu_j >= 0

``w*`` is the predicted weight vector. The bias is not tied to the
prediction. The dual over ``(alpha, gamma, delta)`` is what ``fine_tune``
solves by default::

    min  0.5 |Z'alpha - gamma + delta|^2 - sum(alpha) + w*.(gamma - delta)
    s.t. 0 <= alpha <= C,  gamma, delta >= 0,  gamma + delta <= F,
         y.alpha = 0

with ``Z = diag(y) X``; the weights are recovered as
``w = Z'alpha - gamma + delta``.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .core import (
    ArgumentError,
    BinaryView,
    ClassifierParams,
    ClassMissingError,
    DimensionError,
    stack_params,
)
from .qpsolve import QpConfig, QpFailure, QpProblem, solve_qp

logger = logging.getLogger(__name__)

DEFAULT_GRID = (0.01, 0.1, 1.0, 10.0, 100.0, 1000.0)


@dataclass(frozen=True)
class FineTuneConfig:
    C: float = 50.0
    F: float = 20.0
    sv_tol: Optional[float] = None  # None -> 1e-6 * C
    solve_form: str = "dual"
    diagnostic: bool = False

    def __post_init__(self):
        if self.solve_form not in ("dual", "primal"):
            raise ArgumentError(f"solve_form must be 'dual' or 'primal', got {self.solve_form!r}")
        if self.diagnostic:
            if self.C < 0 or self.F < 0:
                raise ArgumentError("C and F must be non-negative")
        elif not (self.C > 0 and self.F > 0):
            raise ArgumentError("C and F must be positive (C = 0 or F = 0 needs diagnostic=True)")

    @property
    def tol(self) -> float:
        return self.sv_tol if self.sv_tol is not None else 1e-6 * self.C


@dataclass(frozen=True, eq=False)
class FineTuneResult:
    params: ClassifierParams
    alphas: np.ndarray
    gammas: np.ndarray
    deltas: np.ndarray
    primal: float
    dual: float
    kkt_residual: float
    bias_fallback: bool = False
    solve_form: str = "dual"

    @property
    def duality_gap(self) -> float:
        return self.primal - self.dual


def primal_objective(p, xi, mu, cfg: FineTuneConfig) -> float:
    """``0.5 |w|^2 + C sum(xi) + F sum(mu)``; ``p`` is stacked ``(w, b)``."""
    p = stack_params(p) if isinstance(p, ClassifierParams) else np.asarray(p, dtype=float)
    w = p[:-1]
    return float(0.5 * w @ w + cfg.C * np.sum(xi) + cfg.F * np.sum(mu))


def minimal_slacks(params: ClassifierParams, predicted: ClassifierParams, X, y):
    """Smallest ``xi`` and ``mu`` that make ``params`` feasible."""
    xi = np.maximum(0.0, 1.0 - y * (X @ params.w + params.b))
    mu = np.abs(params.w - predicted.w)
    return xi, mu


def dual_objective(alphas, gammas, deltas, predicted: ClassifierParams, X, y) -> float:
    u = (y[:, None] * X).T @ alphas - gammas + deltas
    return float(-0.5 * u @ u + np.sum(alphas) - predicted.w @ (gammas - deltas))


def hinge_bias(w, X, y) -> float:
    """Bias minimising the summed hinge loss, by scanning the breakpoints.

    The minimisers form an interval whose ends are breakpoints; its midpoint
    is returned, the same choice the standard SVM makes from its bound
    constraints.
    """
    if X.shape[0] == 0:
        return 0.0
    fx = X @ w
    cands = np.unique(y - fx)
    loss = np.maximum(0.0, 1.0 - y[None, :] * (fx[None, :] + cands[:, None])).sum(axis=1)
    best = cands[loss <= loss.min() + 1e-12 * (1.0 + loss.min())]
    return float(0.5 * (best.min() + best.max()))


def _check_inputs(predicted: ClassifierParams, v: BinaryView, cfg: FineTuneConfig):
    X = np.asarray(v.features, dtype=float).reshape(-1, predicted.m) if v.n else np.zeros((0, predicted.m))
    if v.n and v.m != predicted.m:
        raise DimensionError(f"predicted classifier has m={predicted.m}, samples have m={v.m}")
    y = np.asarray(v.y, dtype=float)
    if cfg.C > 0 and not v.has_both_labels():
        raise ClassMissingError(f"pair {v.pair} needs samples of both classes")
    return X, y


def _solve_dual(predicted, X, y, cfg, qp):
    n, m = X.shape
    Z = y[:, None] * X
    M = np.hstack([Z.T, -np.eye(m), np.eye(m)])
    ws = predicted.w
    k = n + 2 * m
    prob = QpProblem(
        Q=M.T @ M,
        c=np.concatenate([-np.ones(n), ws, -ws]),
        A_eq=np.concatenate([y, np.zeros(2 * m)])[None, :] if n else None,
        b_eq=[0.0] if n else None,
        A_in=np.hstack([np.zeros((m, n)), np.eye(m), np.eye(m)]),
        b_in=np.full(m, float(cfg.F)),
        lower=np.zeros(k),
        upper=np.concatenate([np.full(n, float(cfg.C)), np.full(2 * m, float(cfg.F))]),
    )
    sol = solve_qp(prob, qp)
    if not sol.ok:
        raise QpFailure(f"fine-tuning dual did not converge ({sol.status})", sol)
    return sol.z[:n], sol.z[n:n + m], sol.z[n + m:], sol.kkt_residual


def _solve_primal(predicted, X, y, cfg, qp):
    n, m = X.shape
    k = m + 1 + n + m
    Q = np.zeros((k, k))
    Q[np.arange(m), np.arange(m)] = 1.0
    c = np.concatenate([np.zeros(m + 1), np.full(n, float(cfg.C)), np.full(m, float(cfg.F))])
    A_margin = np.hstack([-(y[:, None] * X), -y[:, None], -np.eye(n), np.zeros((n, m))])
    A_up = np.hstack([np.eye(m), np.zeros((m, 1 + n)), -np.eye(m)])
    A_dn = np.hstack([-np.eye(m), np.zeros((m, 1 + n)), -np.eye(m)])
    ws = predicted.w
    prob = QpProblem(
        Q=Q, c=c,
        A_in=np.vstack([A_margin, A_up, A_dn]),
        b_in=np.concatenate([-np.ones(n), ws, -ws]),
        lower=np.concatenate([np.full(m + 1, -np.inf), np.zeros(n + m)]),
        upper=np.full(k, np.inf),
    )
    xi0 = np.maximum(0.0, 1.0 - y * (X @ ws + predicted.b))
    z0 = np.concatenate([ws, [predicted.b], xi0, np.zeros(m)])
    sol = solve_qp(prob, qp, z0=z0)
    if not sol.ok:
        raise QpFailure(f"fine-tuning primal did not converge ({sol.status})", sol)
    w, b = sol.z[:m], sol.z[m]
    lam = sol.in_multipliers
    return w, float(b), lam[:n], lam[n:n + m], lam[n + m:], sol.kkt_residual


def fine_tune(predicted: ClassifierParams, v: BinaryView, cfg: FineTuneConfig = FineTuneConfig(),
              qp: QpConfig = QpConfig()) -> FineTuneResult:
    """Move ``predicted`` towards the samples in ``v``; see the module docstring."""
    X, y = _check_inputs(predicted, v, cfg)
    fallback = False
    if cfg.solve_form == "dual":
        alphas, gammas, deltas, kkt = _solve_dual(predicted, X, y, cfg, qp)
        w = (y[:, None] * X).T @ alphas - gammas + deltas
        tol = cfg.tol
        free = (alphas > tol) & (alphas < cfg.C - tol)
        if free.any():
            b = float(np.mean(y[free] - X[free] @ w))
        else:
            b = hinge_bias(w, X, y)
            fallback = True
            logger.debug("pair %s: no free support vectors, bias from hinge scan", v.pair)
    else:
        w, b, alphas, gammas, deltas, kkt = _solve_primal(predicted, X, y, cfg, qp)
    params = ClassifierParams(w, b)
    xi, mu = minimal_slacks(params, predicted, X, y)
    return FineTuneResult(
        params=params,
        alphas=alphas,
        gammas=gammas,
        deltas=deltas,
        primal=primal_objective(params, xi, mu, cfg),
        dual=dual_objective(alphas, gammas, deltas, predicted, X, y),
        kkt_residual=kkt,
        bias_fallback=fallback,
        solve_form=cfg.solve_form,
    )


def kkt_report(result: FineTuneResult, predicted: ClassifierParams, v: BinaryView,
               cfg: FineTuneConfig) -> dict:
    """Largest residuals of the optimality conditions at ``result``.

    ``stationarity`` covers the weight and bias derivatives, ``feasibility``
    the sign and box conditions on the multipliers (with the implied
    ``beta = C - alpha`` and ``eps = F - gamma - delta``), and
    ``complementarity`` the products of multipliers and slacks.
    """
    X = np.asarray(v.features, dtype=float).reshape(-1, predicted.m)
    y = np.asarray(v.y, dtype=float)
    a, g, d = result.alphas, result.gammas, result.deltas
    w, b = result.params.w, result.params.b
    station = max(
        float(np.max(np.abs(w - (y[:, None] * X).T @ a + g - d), initial=0.0)),
        abs(float(a @ y)),
    )
    beta = cfg.C - a
    eps = cfg.F - g - d
    feas = max(
        0.0,  # listed first so an all-zero residual reads 0.0, never -0.0
        float(np.max(-a, initial=0.0)), float(np.max(-beta, initial=0.0)),
        float(np.max(-g, initial=0.0)), float(np.max(-d, initial=0.0)),
        float(np.max(-eps, initial=0.0)),
    )
    yf = y * (X @ w + b)
    dev = w - predicted.w
    comp = max(
        float(np.max(np.abs(a * np.maximum(0.0, yf - 1.0)), initial=0.0)),
        float(np.max(np.abs(beta * np.maximum(0.0, 1.0 - yf)), initial=0.0)),
        float(np.max(np.abs(g * (np.abs(dev) - dev)), initial=0.0)),
        float(np.max(np.abs(d * (np.abs(dev) + dev)), initial=0.0)),
        float(np.max(np.abs(eps * np.abs(dev)), initial=0.0)),
    )
    return {"stationarity": station, "feasibility": feas, "complementarity": comp}


def _folds(n: int, seed: int):
    order = np.random.default_rng(seed).permutation(n)
    k = 5 if n >= 10 else n
    return [np.sort(part) for part in np.array_split(order, k)]


def grid_search_fc(predicted: ClassifierParams, v: BinaryView,
                   F_grid: Sequence[float] = DEFAULT_GRID, C_grid: Sequence[float] = DEFAULT_GRID,
                   seed: int = 0, qp: QpConfig = QpConfig()):
    """Cross-validated choice of ``(F, C)``.

    5 folds when ``n >= 10``, otherwise leave-one-out. Folds whose training
    part lacks a class are skipped. Ties keep the first grid point in
    ``F``-major order. Returns ``(F, C, {(F, C): mean accuracy})``.
    """
    folds = _folds(v.n, seed)
    table = {}
    for F, C in itertools.product(F_grid, C_grid):
        cfg = FineTuneConfig(C=C, F=F)
        accs = []
        for held in folds:
            train = np.setdiff1d(np.arange(v.n), held)
            tv = BinaryView(v.features[train], v.y[train], v.pair, train)
            if not tv.has_both_labels():
                continue
            res = fine_tune(predicted, tv, cfg, qp)
            pred = np.where(v.features[held] @ res.params.w + res.params.b >= 0, 1.0, -1.0)
            accs.append(float(np.mean(pred == v.y[held])))
        table[(F, C)] = float(np.mean(accs)) if accs else float("nan")
    best = max(table, key=lambda key: (np.nan_to_num(table[key], nan=-1.0), -list(table).index(key)))
    return best[0], best[1], table


def with_alphas(result: FineTuneResult, alphas) -> FineTuneResult:
    """Copy of ``result`` with replaced ``alphas`` (for residual diagnostics)."""
    return replace(result, alphas=np.asarray(alphas, dtype=float))
