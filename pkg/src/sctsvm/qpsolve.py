"""Dense convex QP solver (primal active-set).

Solves::

    min  0.5 z'Qz + c'z
    s.t. A_eq z  = b_eq
         A_in z <= b_in
         lower <= z <= upper

A ``Q`` that is singular (or nearly so) gets ``REG_EPS * I`` added so the
inner linear systems stay solvable; a few warm-started proximal passes then
remove the bias this would leave in the answer.

The iteration kernel exists twice: a compiled extension (``_qpcore``) and a
NumPy fallback (``_qpcore_py``). The compiled one is used when it imports,
unless ``SCTSVM_PURE_PYTHON`` is set in the environment.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
from scipy.optimize import linprog

from . import _qpcore_py
from .core import DimensionError, SctError

logger = logging.getLogger(__name__)

try:
    if os.environ.get("SCTSVM_PURE_PYTHON"):
        raise ImportError("pure-python backend forced")
    from . import _qpcore as _qpcore_ext
except ImportError:
    _qpcore_ext = None

BACKEND = "cython" if _qpcore_ext is not None else "python"

REG_EPS = 1e-10
REG_THRESHOLD = 1e-12
REFINE_PASSES = 3

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
ITERATION_LIMIT = "iteration_limit"


class QpFailure(SctError, RuntimeError):
    """Raised by callers that need an optimal solution and did not get one."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


@dataclass(frozen=True)
class QpConfig:
    feas_tol: float = 1e-8
    kkt_tol: float = 1e-8
    max_iter: Optional[int] = None  # None -> 50 * k


@dataclass(frozen=True, eq=False)
class QpProblem:
    Q: np.ndarray
    c: np.ndarray
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    A_in: Optional[np.ndarray] = None
    b_in: Optional[np.ndarray] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        k = Q.shape[0]
        if Q.shape != (k, k):
            raise DimensionError(f"Q must be square, got {Q.shape}")
        if not np.allclose(Q, Q.T, rtol=0.0, atol=1e-10 * max(1.0, np.max(np.abs(Q), initial=0.0))):
            raise DimensionError("Q must be symmetric")
        c = np.asarray(self.c, dtype=float).reshape(-1)
        if c.size != k:
            raise DimensionError(f"c has length {c.size}, expected {k}")

        def rows(A, bvec, name):
            if A is None or np.size(A) == 0:
                return np.zeros((0, k)), np.zeros(0)
            A = np.atleast_2d(np.asarray(A, dtype=float))
            bvec = np.asarray(bvec, dtype=float).reshape(-1)
            if A.shape[1] != k or A.shape[0] != bvec.size:
                raise DimensionError(f"{name} shapes {A.shape} / {bvec.shape} do not match k={k}")
            return A, bvec

        A_eq, b_eq = rows(self.A_eq, self.b_eq, "equality")
        A_in, b_in = rows(self.A_in, self.b_in, "inequality")
        lower = np.full(k, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float).reshape(-1)
        upper = np.full(k, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).reshape(-1)
        if lower.size != k or upper.size != k:
            raise DimensionError("bounds must have length k")
        if np.any(lower > upper):
            raise DimensionError("lower bound exceeds upper bound")
        for name, val in (("Q", Q), ("c", c), ("A_eq", A_eq), ("b_eq", b_eq), ("A_in", A_in), ("b_in", b_in)):
            object.__setattr__(self, name, val)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def k(self) -> int:
        return self.c.size

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ (self.Q @ z) + self.c @ z)

    def infeasibility(self, z) -> float:
        """Largest constraint violation of ``z``."""
        z = np.asarray(z, dtype=float)
        parts = [0.0]
        if self.A_eq.shape[0]:
            parts.append(np.max(np.abs(self.A_eq @ z - self.b_eq)))
        if self.A_in.shape[0]:
            parts.append(np.max(self.A_in @ z - self.b_in))
        parts.append(np.max(self.lower - z, initial=0.0))
        parts.append(np.max(z - self.upper, initial=0.0))
        return float(max(parts))


@dataclass(frozen=True, eq=False)
class QpSolution:
    z: np.ndarray
    objective: float
    status: str
    kkt_residual: float
    iterations: int
    regularized: bool = False
    eq_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    in_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    bound_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    backend: str = BACKEND

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def _independent_rows(A: np.ndarray, b: np.ndarray, tol: float):
    """Drop linearly dependent equality rows; None if they are inconsistent."""
    if A.shape[0] == 0:
        return A, b
    _, R, piv = scipy.linalg.qr(A.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > tol * max(1.0, diag[0] if diag.size else 1.0)))
    if rank == A.shape[0]:
        return A, b
    keep = np.sort(piv[:rank])
    A2, b2 = A[keep], b[keep]
    # the dropped rows must be implied by the kept ones
    coef = np.linalg.lstsq(A2.T, A.T, rcond=None)[0]
    if np.max(np.abs(coef.T @ b2 - b), initial=0.0) > 1e-8 * (1.0 + np.max(np.abs(b))):
        return None
    return A2, b2


def _phase_one(p: QpProblem, A_eq, b_eq, z0, feas_tol):
    k = p.k
    candidates = []
    if z0 is not None:
        candidates.append(np.clip(np.asarray(z0, dtype=float), p.lower, p.upper))
    candidates.append(np.clip(np.zeros(k), p.lower, p.upper))
    for z in candidates:
        if p.infeasibility(z) <= feas_tol:
            return z
    bounds = [(None if not np.isfinite(lo) else lo, None if not np.isfinite(up) else up)
              for lo, up in zip(p.lower, p.upper)]
    res = linprog(
        np.zeros(k),
        A_ub=p.A_in if p.A_in.shape[0] else None,
        b_ub=p.b_in if p.A_in.shape[0] else None,
        A_eq=A_eq if A_eq.shape[0] else None,
        b_eq=b_eq if A_eq.shape[0] else None,
        bounds=bounds,
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        return None
    z = np.clip(res.x, p.lower, p.upper)
    return z


def _initial_working_set(z, A_eq, A_in, b_in, lower, upper, tol):
    """Active bounds and rows at ``z`` whose normals are independent of the
    equality rows and of each other, taken in index order.

    Bounds are unit vectors, so a bound is dependent only when removing its
    column would leave the equality rows rank deficient. A column basis of
    the equality rows is kept and swapped when a bound claims one of its
    columns; rows are then checked on the columns still free.
    """
    k = z.size
    n_eq = A_eq.shape[0]
    bstate = np.zeros(k, dtype=np.int8)
    fixed = lower == upper
    bstate[fixed] = 2
    # fixed variables are eliminated from every KKT system unconditionally
    open_cols = ~fixed
    basis = np.zeros(0, dtype=np.int64)
    if n_eq and open_cols.any():
        cols = np.flatnonzero(open_cols)
        _, _, piv = scipy.linalg.qr(A_eq[:, cols], mode="economic", pivoting=True)
        basis = cols[piv[:n_eq]]
        binv = np.linalg.pinv(A_eq[:, basis])

    for i in range(k):
        if fixed[i]:
            continue
        scale = tol * (1.0 + abs(z[i]))
        if np.isfinite(lower[i]) and z[i] - lower[i] <= scale:
            side, z[i] = -1, lower[i]
        elif np.isfinite(upper[i]) and upper[i] - z[i] <= scale:
            side, z[i] = 1, upper[i]
        else:
            continue
        pos = np.flatnonzero(basis == i)
        if pos.size:
            cand = open_cols.copy()
            cand[basis] = False
            cand = np.flatnonzero(cand)
            pivots = binv[pos[0]] @ A_eq[:, cand]
            if cand.size == 0 or np.max(np.abs(pivots)) <= 1e-8:
                continue
            basis[pos[0]] = cand[int(np.argmax(np.abs(pivots)))]
            binv = np.linalg.pinv(A_eq[:, basis])
        open_cols[i] = False
        bstate[i] = side

    wrow_in = np.zeros(A_in.shape[0], dtype=np.int8)
    if A_in.shape[0]:
        cols = np.flatnonzero(open_cols)
        span = np.zeros((min(cols.size, n_eq + A_in.shape[0]), cols.size))
        count = 0
        if n_eq and cols.size:
            q, _ = np.linalg.qr(A_eq[:, cols].T)
            count = min(q.shape[1], span.shape[0])
            span[:count] = q.T[:count]
        slack = b_in - A_in @ z
        for j in range(A_in.shape[0]):
            if slack[j] > tol * (1.0 + abs(b_in[j])) or not np.any(A_in[j]):
                continue
            v = A_in[j, cols]
            nv0 = np.linalg.norm(v)
            if nv0 == 0.0 or count >= span.shape[0]:
                continue
            v = v / nv0
            for _ in range(2):
                v = v - span[:count].T @ (span[:count] @ v)
            nv = np.linalg.norm(v)
            if nv > 1e-8:
                span[count] = v / nv
                count += 1
                wrow_in[j] = 1
    return bstate, wrow_in


def _kkt_residual(H, c, A_eq, A_in, b_in, lower, upper, z, nu_eq, nu_in, kappa, bstate):
    g = H @ z + c
    # size of the terms summed into the gradient, so roundoff stays below the tolerance
    scale = 1.0 + np.max(np.abs(H) @ np.abs(z), initial=0.0) + np.max(np.abs(c), initial=0.0)
    grad = g + A_eq.T @ nu_eq + A_in.T @ nu_in
    signed = np.where(bstate == 1, -kappa, kappa)
    held = (bstate == -1) | (bstate == 1) | (bstate == 2)
    station = grad.copy()
    station[held & (bstate != 2)] -= signed[held & (bstate != 2)]
    station[bstate == 2] = 0.0
    stat = np.max(np.abs(station), initial=0.0) / scale
    dual = max(np.max(-nu_in, initial=0.0), np.max(-kappa, initial=0.0)) / scale
    comp = 0.0
    if A_in.shape[0]:
        comp = np.max(np.abs(nu_in * (b_in - A_in @ z)), initial=0.0)
    gap_lo = np.where(bstate == -1, z - lower, 0.0)
    gap_up = np.where(bstate == 1, upper - z, 0.0)
    comp = max(comp, np.max(np.abs(kappa * (gap_lo + gap_up)), initial=0.0))
    comp /= scale * (1.0 + np.max(np.abs(z)))
    return float(max(stat, dual, comp))


def solve_qp(p: QpProblem, cfg: QpConfig = QpConfig(), z0=None, backend: Optional[str] = None) -> QpSolution:
    """Minimize ``p`` with a primal active-set method.

    ``z0`` is an optional starting point; it is used when feasible, otherwise
    a feasible point is found with an LP. ``kkt_residual`` is scale-relative
    (stationarity and complementarity divided by the magnitude of the
    terms that make up the gradient).
    ``backend`` forces ``"cython"`` or ``"python"`` for the iteration kernel.
    """
    k = p.k
    max_iter = cfg.max_iter if cfg.max_iter is not None else 50 * k
    A_eq, b_eq = p.A_eq, p.b_eq
    reduced = _independent_rows(A_eq, b_eq, 1e-12)
    if reduced is None:
        return QpSolution(np.zeros(k), np.nan, INFEASIBLE, np.inf, 0)
    A_eq, b_eq = reduced

    H = np.array(p.Q, dtype=float, copy=True)
    regularized = False
    if k:
        # Cholesky of H - threshold*I fails exactly when the smallest eigenvalue is below it
        try:
            np.linalg.cholesky(H - REG_THRESHOLD * np.eye(k))
        except np.linalg.LinAlgError:
            H[np.diag_indices(k)] += REG_EPS
            regularized = True

    z = _phase_one(p, A_eq, b_eq, z0, cfg.feas_tol)
    if z is None:
        return QpSolution(np.zeros(k), np.nan, INFEASIBLE, np.inf, 0, regularized)
    z = np.ascontiguousarray(z, dtype=float)
    bstate, wrow_in = _initial_working_set(z, A_eq, p.A_in, p.b_in, p.lower, p.upper, 1e-12)

    n_eq = A_eq.shape[0]
    A = np.ascontiguousarray(np.vstack([A_eq, p.A_in]))
    b = np.concatenate([b_eq, p.b_in])
    wrow = np.concatenate([np.ones(n_eq, dtype=np.int8), wrow_in])
    c = np.ascontiguousarray(p.c, dtype=float)
    args = dict(step_tol=1e-14, dec_tol=1e-15, dual_tol=1e-12 * (1.0 + np.max(np.abs(H @ z + c), initial=0.0)))

    use = backend or BACKEND
    if use == "cython" and _qpcore_ext is None:
        raise SctError("compiled QP kernel is not available")

    def run(lin, budget):
        if use == "cython":
            status, iters, nu, kappa = _qpcore_ext.active_set_loop(
                H, lin, A, b, n_eq, p.lower, p.upper, z, bstate, wrow, budget, **args)
            if status == _qpcore_py.SINGULAR:
                logger.debug("compiled kernel hit a singular KKT system; continuing in python")
                status, more, nu, kappa = _qpcore_py.active_set_loop(
                    H, lin, A, b, n_eq, p.lower, p.upper, z, bstate, wrow, budget - iters, **args)
                iters += more
            return status, iters, nu, kappa
        return _qpcore_py.active_set_loop(H, lin, A, b, n_eq, p.lower, p.upper, z, bstate, wrow, budget, **args)

    status, iters, nu, kappa = run(c, max_iter)
    if regularized:
        # proximal refinement: minimizing 0.5 z'(Q + eps I)z + (c - eps z_prev)'z from the
        # previous answer has the unregularized optimum as its fixed point
        for _ in range(REFINE_PASSES):
            if status != _qpcore_py.OPTIMAL or iters >= max_iter:
                break
            z_prev = z.copy()
            status, more, nu, kappa = run(np.ascontiguousarray(c - REG_EPS * z_prev), max_iter - iters)
            iters += more
            if np.max(np.abs(z - z_prev), initial=0.0) <= 1e-15 * (1.0 + np.max(np.abs(z), initial=0.0)):
                break

    nu_eq, nu_in = nu[:n_eq], nu[n_eq:]
    kkt = _kkt_residual(p.Q, c, A_eq, p.A_in, p.b_in, p.lower, p.upper, z, nu_eq, nu_in, kappa, bstate)
    feas = p.infeasibility(z)
    if status == _qpcore_py.OPTIMAL and feas <= cfg.feas_tol and kkt <= cfg.kkt_tol:
        st = OPTIMAL
    else:
        st = ITERATION_LIMIT
        logger.debug("qp not converged: status=%s feas=%.3g kkt=%.3g", status, feas, kkt)
    return QpSolution(
        z=z, objective=p.objective(z), status=st, kkt_residual=kkt, iterations=int(iters),
        regularized=regularized, eq_multipliers=nu_eq, in_multipliers=nu_in,
        bound_multipliers=kappa, backend=use,
    )
