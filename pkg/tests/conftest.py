"""Shared oracles and data builders for the test suite."""
import numpy as np
import pytest

from sctsvm import qpsolve
from sctsvm.core import BinaryView, LabeledDataset


BACKENDS = ["python"] + (["cython"] if qpsolve.BACKEND == "cython" else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def random_view(rng, n, m, shift=1.5, pair=(1, 2)) -> BinaryView:
    """Two Gaussian blobs with both labels guaranteed."""
    y = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    rng.shuffle(y)
    X = rng.normal(size=(n, m)) + shift * y[:, None] * rng.normal(size=m)
    return BinaryView(X, y, pair, np.arange(n))


def blob_dataset(rng, means, n_per, date=0, sd=0.3) -> LabeledDataset:
    feats, labels = [], []
    for cid, mu in means.items():
        feats.append(np.asarray(mu, dtype=float) + sd * rng.normal(size=(n_per, len(mu))))
        labels.append(np.full(n_per, cid))
    return LabeledDataset(np.vstack(feats), np.concatenate(labels), date)


def project_box_hyperplane(v, lower, upper, a=None, b=0.0):
    """Euclidean projection onto {lower <= z <= upper, a.z = b} by bisection
    on the hyperplane multiplier (a = None means box only)."""
    if a is None:
        return np.clip(v, lower, upper)

    def at(t):
        return np.clip(v - t * a, lower, upper)

    lo, hi = -1.0, 1.0
    while a @ at(lo) < b:
        lo *= 2.0
    while a @ at(hi) > b:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if a @ at(mid) > b:
            lo = mid
        else:
            hi = mid
    return at(0.5 * (lo + hi))


def projected_gradient(Q, c, lower, upper, a=None, b=0.0, tol=1e-8, max_iter=200000):
    """Accelerated projected gradient with adaptive restart; stops when the
    fixed-point residual falls below ``tol``."""
    L = max(np.linalg.eigvalsh(Q)[-1], 1e-12)
    proj = lambda v: project_box_hyperplane(v, lower, upper, a, b)
    z = proj(np.zeros_like(c))
    yk, t = z.copy(), 1.0
    for _ in range(max_iter):
        z_new = proj(yk - (Q @ yk + c) / L)
        if np.max(np.abs(z_new - proj(z_new - (Q @ z_new + c) / L))) <= tol:
            return z_new
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        mom = (t - 1.0) / t_new
        if (z_new - z) @ (yk - z_new) > 0:  # restart when momentum goes uphill
            t_new, mom = 1.0, 0.0
        yk = z_new + mom * (z_new - z)
        z, t = z_new, t_new
    return z


def random_box_qp(rng, k, with_equality=False):
    B = rng.normal(size=(k, k))
    Q = B @ B.T + 0.01 * np.eye(k)
    c = rng.normal(size=k) * 3.0
    lower = -rng.uniform(0.2, 2.0, size=k)
    upper = rng.uniform(0.2, 2.0, size=k)
    if with_equality:
        a = rng.normal(size=k)
        z_in = rng.uniform(lower, upper)
        return Q, c, lower, upper, a, float(a @ z_in)
    return Q, c, lower, upper, None, 0.0


# --- acceptance reporting: one line per criterion at the end of the run ---

ACCEPTANCE: dict = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(ok), detail)
    assert ok, f"criterion {number}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
