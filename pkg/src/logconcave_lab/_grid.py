"""Low-level tensor-grid helpers: trapezoid weights, multilinear lookup,
row-wise CDF tables and their generalized inverses, cloud-in-cell deposit.

Everything here works on plain arrays so the public modules can share it.
"""
import numpy as np


def trapezoid_weights(m, h):
    w = np.full(m, h, dtype=float)
    w[0] = w[-1] = 0.5 * h
    return w


def locate(grid, p):
    """Cell index and fractional offset of `p` in a uniform `grid`.

    Points outside the grid are clamped to the nearest end cell, so the
    fraction always lies in [0, 1].
    """
    m = grid.shape[0]
    h = (grid[-1] - grid[0]) / (m - 1)
    s = (np.asarray(p, dtype=float) - grid[0]) / h
    idx = np.clip(np.floor(s).astype(np.int64), 0, m - 2)
    frac = np.clip(s - idx, 0.0, 1.0)
    return idx, frac


def interp_rows(table, grids, points):
    """Multilinear interpolation of `table` over its leading axes.

    Parameters
    ----------
    table : ndarray, shape (m_1, ..., m_k, *rest)
    grids : sequence of k uniform 1D node arrays
    points : ndarray, shape (B, k)

    Returns
    -------
    ndarray, shape (B, *rest)
        Corners carrying zero interpolation weight never contribute, so NaN
        entries only propagate when they are actually touched.
    """
    k = len(grids)
    points = np.asarray(points, dtype=float).reshape(-1, k) if k else np.zeros((len(points), 0))
    B = points.shape[0]
    if k == 0:
        return np.broadcast_to(table, (B,) + table.shape).copy()
    rest = table.shape[k:]
    locs = [locate(g, points[:, j]) for j, g in enumerate(grids)]
    out = np.zeros((B,) + rest)
    for corner in range(1 << k):
        idx = []
        weight = np.ones(B)
        for j, (ix, fr) in enumerate(locs):
            bit = (corner >> j) & 1
            idx.append(ix + bit)
            weight = weight * (fr if bit else 1.0 - fr)
        vals = table[tuple(idx)]
        wb = weight.reshape((B,) + (1,) * len(rest))
        out += np.where(wb > 0, wb * vals, 0.0)
    return out


def cumulative_rows(rows, h):
    """Left and right cumulative trapezoid tables for each row.

    Returns ``(left, right, total)`` with left[:, 0] == 0 and
    right[:, -1] == 0; both are normalized by the row total (rows with zero
    total are left unnormalized and flagged by ``total == 0``).
    """
    rows = np.asarray(rows, dtype=float)
    cells = 0.5 * h * (rows[:, 1:] + rows[:, :-1])
    B, m = rows.shape
    left = np.zeros((B, m))
    left[:, 1:] = np.cumsum(cells, axis=1)
    right = np.zeros((B, m))
    right[:, :-1] = np.cumsum(cells[:, ::-1], axis=1)[:, ::-1]
    total = left[:, -1].copy()
    safe = np.where(total > 0, total, 1.0)[:, None]
    return left / safe, right / safe, total


def _count_below(table, rows, values, strict_greater=False):
    """Per query, the number of entries of ``table[row]`` below ``value``
    (above it when ``strict_greater``), by a vectorized bisection.

    Rows are monotone (nondecreasing, or nonincreasing for the greater
    variant), so the count is the first index where the comparison fails.
    """
    m = table.shape[1]
    lo = np.zeros(values.shape, dtype=np.int64)
    hi = np.full(values.shape, m, dtype=np.int64)
    while True:
        active = lo < hi
        if not np.any(active):
            return lo
        mid = (lo + hi) // 2
        midc = np.minimum(mid, m - 1)
        t = table[rows, midc]
        go_right = (t > values) if strict_greater else (t < values)
        go_right &= active
        lo = np.where(go_right, mid + 1, lo)
        hi = np.where(active & ~go_right, mid, hi)


def inverse_cdf_rows(left, right, grid, p, q=None, rows=None):
    """Generalized inverse inf{x in grid box : F(x) >= p} row by row.

    The CDF is piecewise linear between nodes.  When ``p > 1/2`` the
    inversion runs on the right tail with ``q = 1 - p`` so that deep upper
    quantiles keep full relative precision.  ``rows`` maps each query to a
    row of the tables (default: query j uses row j).
    """
    p = np.asarray(p, dtype=float).ravel()
    q = 1.0 - p if q is None else np.asarray(q, dtype=float).ravel()
    m = left.shape[1]
    rows = np.arange(p.size) if rows is None else np.asarray(rows).ravel()
    h = (grid[-1] - grid[0]) / (m - 1)
    out = np.empty(p.size)
    lo_branch = p <= 0.5

    if np.any(lo_branch):
        rr = rows[lo_branch]
        pp = p[lo_branch]
        k = np.minimum(_count_below(left, rr, pp), m - 1)
        res = np.full(pp.shape, grid[0])
        inner = k > 0
        kk = k[inner]
        ri = rr[inner]
        c0 = left[ri, kk - 1]
        c1 = left[ri, kk]
        gap = np.where(c1 > c0, c1 - c0, 1.0)
        res[inner] = grid[kk - 1] + h * np.minimum((pp[inner] - c0) / gap, 1.0)
        out[lo_branch] = res

    hi_branch = ~lo_branch
    if np.any(hi_branch):
        rr = rows[hi_branch]
        qq = q[hi_branch]
        k = np.minimum(_count_below(right, rr, qq, strict_greater=True), m - 1)
        res = np.full(qq.shape, grid[0])
        inner = k > 0
        kk = k[inner]
        ri = rr[inner]
        s0 = right[ri, kk - 1]
        s1 = right[ri, kk]
        res[inner] = grid[kk - 1] + h * (s0 - qq[inner]) / (s0 - s1)
        out[hi_branch] = res
    return np.clip(out, grid[0], grid[-1])


def linear_eval_rows(rows, grid, x):
    """Evaluate each row (a piecewise-linear function on `grid`) at x[b]."""
    idx, frac = locate(grid, x)
    b = np.arange(rows.shape[0])
    return (1.0 - frac) * rows[b, idx] + frac * rows[b, idx + 1]


def deposit(points, masses, grids):
    """Cloud-in-cell deposit of point masses onto a tensor grid.

    Each mass is split over the 2^n surrounding nodes with multilinear
    weights: total mass and first moments are conserved exactly for points
    inside the grid box.
    """
    points = np.asarray(points, dtype=float)
    n = len(grids)
    shape = tuple(len(g) for g in grids)
    out = np.zeros(int(np.prod(shape)))
    locs = [locate(g, points[:, j]) for j, g in enumerate(grids)]
    strides = np.array([int(np.prod(shape[j + 1:])) for j in range(n)], dtype=np.int64)
    for corner in range(1 << n):
        flat = np.zeros(points.shape[0], dtype=np.int64)
        weight = np.asarray(masses, dtype=float).copy()
        for j, (ix, fr) in enumerate(locs):
            bit = (corner >> j) & 1
            flat += (ix + bit) * strides[j]
            weight *= fr if bit else 1.0 - fr
        out += np.bincount(flat, weights=weight, minlength=out.size)
    return out.reshape(shape)
