"""Pure-Python active-set iteration; mirrors ``_qpcore.pyx`` step for step."""
import numpy as np

OPTIMAL = 0
ITERATION_LIMIT = 1
SINGULAR = 3
REFRESH = 64  # incremental gradient updates between full recomputations
DEPENDENT_TOL = 1e-9


def _dependent(A, rows, free, hit, k):
    """True when the normal of blocking constraint ``hit`` lies in the span of
    the working rows over the free variables. Such a constraint cannot block
    an exact step; only rounding noise in ``p`` makes it look like it does."""
    if rows.size == 0:
        return False
    if hit < k:
        a = (free == hit).astype(float)
    else:
        a = A[hit - k, free]
    na = np.linalg.norm(a)
    if na == 0.0:
        return True
    M = A[np.ix_(rows, free)]
    lam = np.linalg.lstsq(M.T, a, rcond=None)[0]
    return np.linalg.norm(a - M.T @ lam) <= DEPENDENT_TOL * na


def _solve_kkt(K, rhs):
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    if not np.all(np.isfinite(sol)):
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol


def active_set_loop(H, c, A, b, n_eq, lower, upper, z, bstate, wrow,
                    max_iter, step_tol, dec_tol, dual_tol):
    """Primal active-set iterations from a feasible ``z``.

    ``bstate[i]`` is 0 (free), -1 (held at lower), +1 (held at upper) or 2
    (fixed, lower == upper). ``wrow[j]`` flags general rows in the working
    set; the first ``n_eq`` rows are equalities and never leave it.
    ``z``, ``bstate`` and ``wrow`` are updated in place.

    Returns ``(status, iterations, nu, kappa)`` with ``nu`` the row
    multipliers and ``kappa`` the bound multipliers (both >= 0 for active
    inequalities at optimality).
    """
    k = z.shape[0]
    r = A.shape[0]
    nu = np.zeros(r)
    kappa = np.zeros(k)
    it = 0
    settled = False  # last move was a full step, so the subspace minimum is reached
    since = None  # steps since the gradient was recomputed from scratch
    while it < max_iter:
        it += 1
        if since is None or since >= REFRESH:
            g = H @ z + c
            since = 0
        free = np.flatnonzero(bstate == 0)
        rows = np.flatnonzero(wrow)
        nf, nw = free.size, rows.size
        K = np.zeros((nf + nw, nf + nw))
        K[:nf, :nf] = H[np.ix_(free, free)]
        AW = A[np.ix_(rows, free)]
        K[nf:, :nf] = AW
        K[:nf, nf:] = AW.T
        rhs = np.zeros(nf + nw)
        rhs[:nf] = -g[free]
        sol = _solve_kkt(K, rhs)
        p = np.zeros(k)
        p[free] = sol[:nf]
        nu[:] = 0.0
        nu[rows] = sol[nf:]
        Hp = H[:, free] @ p[free]
        zscale = 1.0 + np.max(np.abs(z))
        fval = 0.5 * z @ (g + c)
        decrease = -(g @ p + 0.5 * p @ Hp)
        small = settled or np.max(np.abs(p), initial=0.0) <= step_tol * zscale
        hit, alpha = -1, 1.0
        if not small:
            pnorm = np.max(np.abs(p))
            with np.errstate(divide="ignore", invalid="ignore"):
                down = (bstate == 0) & (p < -1e-14 * pnorm) & np.isfinite(lower)
                up = (bstate == 0) & (p > 1e-14 * pnorm) & np.isfinite(upper)
                tb = np.full(k, np.inf)
                tb[down] = (lower[down] - z[down]) / p[down]
                tb[up] = (upper[up] - z[up]) / p[up]
                Ap = A @ p
                cand_rows = (np.arange(r) >= n_eq) & (wrow == 0)
                cand_rows &= Ap > 1e-14 * pnorm * np.max(np.abs(A), axis=1, initial=0.0)
                tr = np.full(r, np.inf)
                tr[cand_rows] = (b[cand_rows] - A[cand_rows] @ z) / Ap[cand_rows]
            t_all = np.maximum(np.concatenate([tb, tr]), 0.0)
            while True:
                hit = int(np.argmin(t_all)) if t_all.size else -1
                if hit < 0 or not t_all[hit] < 1.0:
                    hit, alpha = -1, 1.0
                    break
                if not _dependent(A, rows, free, hit, k):
                    alpha = t_all[hit]
                    break
                t_all[hit] = np.inf
        # a tiny-decrease step is still taken when it is an unblocked Newton step
        if small or (hit >= 0 and decrease <= dec_tol * (1.0 + abs(fval))):
            resid = g + Hp + A[rows].T @ nu[rows]
            kappa[:] = 0.0
            lo_mask = bstate == -1
            up_mask = bstate == 1
            kappa[lo_mask] = resid[lo_mask]
            kappa[up_mask] = -resid[up_mask]
            cand = np.concatenate([
                np.where((bstate == -1) | (bstate == 1), kappa, np.inf),
                np.where(np.arange(r) >= n_eq, np.where(wrow == 1, nu, np.inf), np.inf),
            ])
            drop = int(np.argmin(cand)) if cand.size else -1
            if drop >= 0 and not cand[drop] < -dual_tol:
                drop = -1
            if drop < 0:
                if since > 0:
                    since = None  # confirm optimality on an exact gradient
                    continue
                return OPTIMAL, it, nu, kappa
            if drop < k:
                bstate[drop] = 0
                kappa[drop] = 0.0
            else:
                wrow[drop - k] = 0
                nu[drop - k] = 0.0
            settled = False
            continue

        z += alpha * p
        g += alpha * Hp
        since += 1
        settled = hit < 0
        if 0 <= hit < k:
            if p[hit] < 0:
                z[hit] = lower[hit]
                bstate[hit] = -1
            else:
                z[hit] = upper[hit]
                bstate[hit] = 1
        elif hit >= k:
            wrow[hit - k] = 1
    return ITERATION_LIMIT, it, nu, kappa
