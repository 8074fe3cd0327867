"""Small shared helpers: callback sampling and capped worker pools."""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import DataError


def max_threads() -> int:
    """Worker cap from DMPCUT_THREADS (default 1 = serial)."""
    raw = os.environ.get("DMPCUT_THREADS", "1")
    try:
        value = int(raw)
    except ValueError:
        return 1
    return max(1, value)


def parallel_map(fn, items):
    """Map `fn` over `items`, preserving order so reductions stay deterministic.

    Uses a thread pool only when DMPCUT_THREADS > 1; results are always
    returned in input order regardless of completion order.
    """
    items = list(items)
    workers = max_threads()
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def sample_scalar(fn, xy, name="function"):
    """Evaluate a scalar callback f(x, y) at points xy (N, 2), vectorized when possible."""
    xy = np.atleast_2d(xy)
    n = xy.shape[0]
    try:
        out = np.asarray(fn(xy[:, 0], xy[:, 1]), dtype=float)
        if out.ndim == 0:
            out = np.full(n, float(out))
        if out.shape != (n,):
            raise ValueError
    except (TypeError, ValueError):
        out = np.array([float(fn(x, y)) for x, y in xy])
    if not np.all(np.isfinite(out)):
        bad = xy[~np.isfinite(out)][0]
        raise DataError(f"{name} returned a non-finite value at ({bad[0]:.6g}, {bad[1]:.6g})")
    return out


def sample_vector(fn, xy, m, name="function"):
    """Evaluate an m-component callback at points xy (N, 2) -> (N, m)."""
    xy = np.atleast_2d(xy)
    n = xy.shape[0]
    try:
        out = np.asarray(fn(xy[:, 0], xy[:, 1]), dtype=float)
        if out.shape == (m, n):
            out = out.T
        elif out.shape == (m,):
            out = np.tile(out, (n, 1))
        if out.shape != (n, m):
            raise ValueError
    except (TypeError, ValueError):
        out = np.array([np.asarray(fn(x, y), dtype=float).reshape(m) for x, y in xy])
    if not np.all(np.isfinite(out)):
        bad = xy[np.any(~np.isfinite(out), axis=1)][0]
        raise DataError(f"{name} returned a non-finite value at ({bad[0]:.6g}, {bad[1]:.6g})")
    return out


def fmt17(x: float) -> str:
    """Shortest decimal form that round-trips a float64 (at most 17 significant digits)."""
    return repr(float(x))
