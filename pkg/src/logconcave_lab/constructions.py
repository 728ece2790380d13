"""Generators for the standard test classes (Gaussians, Laplace products,
uniform laws on cubes and planar convex bodies, tilts), Steiner
symmetrization of planar bodies, the embedding-and-sum construction of
martingale-increment laws and the martingale-increment test.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from . import _grid
from .density import Box, GridDensity, Potential, SampleSet, sample
from .errors import ComponentNotMartingale, DegenerateHull, NotBarycentered, NotPositiveDefinite
from .report import VerificationReport, digest_of

MIN_EIGENVALUE = 1e-6
HULL_TOL = 1e-12
GRID_MARTINGALE_TOL = 5e-3


def make_gaussian(n, covariance=None, box_radius=8.0, mean=None) -> Potential:
    """``V(x) = (x - m) . Sigma^{-1} (x - m) / 2`` on ``[-R, R]^n``.

    Raises
    ------
    NotPositiveDefinite
        Smallest eigenvalue of the covariance below 1e-6.
    """
    cov = np.eye(n) if covariance is None else np.asarray(covariance, dtype=float)
    if cov.shape != (n, n) or not np.allclose(cov, cov.T, atol=1e-12):
        raise ValueError("covariance must be a symmetric n x n matrix")
    eig = np.linalg.eigvalsh(cov)
    if eig[0] < MIN_EIGENVALUE:
        raise NotPositiveDefinite(f"smallest covariance eigenvalue {eig[0]:.3g} is below {MIN_EIGENVALUE}")
    prec = np.linalg.inv(cov)
    m = np.zeros(n) if mean is None else np.asarray(mean, dtype=float)

    def V(x):
        d = x - m
        return 0.5 * np.einsum("...i,ij,...j->...", d, prec, d)

    return Potential(Box.cube(box_radius, n), V, "C1", np.zeros(n),
                     {"kind": "gaussian", "covariance": cov.tolist(), "mean": m.tolist()})


def make_laplace(n, box_radius=20.0, scale=1.0) -> Potential:
    """Product of symmetric exponential laws, ``V(x) = sum |x_i| / scale``."""
    return Potential(Box.cube(box_radius, n), lambda x: np.sum(np.abs(x), axis=-1) / scale, "nonsmooth",
                     np.zeros(n), {"kind": "laplace", "scale": scale})


def make_uniform_cube(n, radius=1.0) -> Potential:
    return Potential(Box.cube(radius, n), lambda x: np.zeros(x.shape[:-1]), "C1", np.zeros(n),
                     {"kind": "uniform_cube", "radius": radius})


def tilt(potential: Potential, theta) -> Potential:
    """Exponential tilt: density proportional to ``e^{theta . x}`` times the original."""
    theta = np.asarray(theta, dtype=float)
    base = potential.func
    info = dict(potential.info, tilt=theta.tolist())
    return Potential(potential.domain, lambda x: base(x) - x @ theta, potential.smoothness_hint,
                     potential.interior_point, info)


def make_convex_body_2d(vertices, box_pad=0.0) -> Potential:
    """Uniform law on the convex hull of planar points (V = 0 inside, +inf outside).

    ``info`` carries the hull vertices (counter-clockwise), area and
    barycenter.

    Raises
    ------
    DegenerateHull
        Fewer than three points or a hull of zero area.
    """
    pts = np.asarray(vertices, dtype=float).reshape(-1, 2)
    if pts.shape[0] < 3:
        raise DegenerateHull("need at least three vertices")
    try:
        hull = ConvexHull(pts)
    except QhullError as exc:
        raise DegenerateHull(f"convex hull is degenerate: {exc}") from None
    span = float(np.max(np.ptp(pts, axis=0)))
    if hull.volume <= HULL_TOL * max(span, 1.0) ** 2:
        raise DegenerateHull("convex hull has zero area")
    ring = pts[hull.vertices]
    x, y = ring[:, 0], ring[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * np.sum(cross)
    bary = np.array([np.sum((x + xn) * cross), np.sum((y + yn) * cross)]) / (6.0 * area)
    eqs = hull.equations.copy()
    tol = HULL_TOL * max(span, 1.0)

    def V(p):
        p = np.asarray(p, dtype=float)
        s = p @ eqs[:, :2].T + eqs[:, 2]
        return np.where(np.all(s <= tol, axis=-1), 0.0, np.inf)

    lo = ring.min(axis=0) - box_pad
    hi = ring.max(axis=0) + box_pad
    return Potential(Box(lo, hi), V, "nonsmooth", bary.copy(),
                     {"kind": "convex_body_2d", "vertices": ring.tolist(), "area": float(area),
                      "barycenter": bary.tolist()})


def translate_body(body: Potential, shift) -> Potential:
    """Convex body translated by ``shift`` (e.g. minus its barycenter)."""
    shift = np.asarray(shift, dtype=float)
    verts = np.asarray(body.info["vertices"]) + shift
    return make_convex_body_2d(verts)


def barycentered(body: Potential) -> Potential:
    return translate_body(body, -np.asarray(body.info["barycenter"]))


def _section(ring, x1):
    """Lowest and highest x2 of the polygon on the vertical line through x1."""
    ys = []
    n = len(ring)
    for k in range(n):
        (ax, ay), (bx, by) = ring[k], ring[(k + 1) % n]
        if ax == bx:
            if abs(ax - x1) <= 1e-15 * max(1.0, abs(x1)):
                ys += [ay, by]
            continue
        lo, hi = min(ax, bx), max(ax, bx)
        if lo - 1e-15 <= x1 <= hi + 1e-15:
            s = (x1 - ax) / (bx - ax)
            ys.append(ay + s * (by - ay))
    return min(ys), max(ys)


def steiner_symmetrize_2d(body: Potential, tol=1e-9) -> Potential:
    """Steiner symmetrization about the axis ``{x2 = 0}``.

    Each vertical section ``[a(x1), b(x1)]`` becomes ``[-(b-a)/2, (b-a)/2]``.
    The section length is concave and piecewise linear with kinks only
    above vertices, so the symmetral is the hull of ``(x1, +-(b-a)/2)``
    over the vertex abscissas.

    Raises
    ------
    NotBarycentered
        The body's barycenter is not at the origin.
    """
    ring = np.asarray(body.info["vertices"], dtype=float)
    bary = np.asarray(body.info["barycenter"], dtype=float)
    span = float(np.max(np.ptp(ring, axis=0)))
    if np.max(np.abs(bary)) > tol * max(span, 1.0):
        raise NotBarycentered(f"barycenter {bary.tolist()} is not at the origin")
    pts = []
    for x1 in np.unique(ring[:, 0]):
        a, b = _section(ring, x1)
        half = 0.5 * (b - a)
        pts += [(x1, half), (x1, -half)]
    pts = np.unique(np.round(np.array(pts), 15), axis=0)
    return make_convex_body_2d(pts)


# -- martingale increments --------------------------------------------------

def _sig(t):
    return 0.5 * (1.0 + np.tanh(0.5 * t))


def _prefix_functions():
    """Twenty fixed test functions of a prefix z with shape (B, k), k >= 1 (version 1)."""
    first = lambda z: z[:, 0]
    last = lambda z: z[:, -1]
    tot = lambda z: z.sum(axis=1)
    return [
        ("one", lambda z: np.ones(z.shape[0])),
        ("z_first", first),
        ("z_last", last),
        ("z_sum", tot),
        ("z_first_sq", lambda z: first(z) ** 2),
        ("z_last_sq", lambda z: last(z) ** 2),
        ("z_first_z_last", lambda z: first(z) * last(z)),
        ("norm_sq", lambda z: np.sum(z ** 2, axis=1)),
        ("sum_sq", lambda z: tot(z) ** 2),
        ("clip_first_1", lambda z: np.clip(first(z), -1.0, 1.0)),
        ("clip_last_half", lambda z: np.clip(last(z), -0.5, 0.5)),
        ("clip_sum_1", lambda z: np.clip(tot(z), -1.0, 1.0)),
        ("clip_first_shift", lambda z: np.clip(first(z) - 0.3, -0.5, 1.0)),
        ("sig_first", lambda z: _sig(first(z))),
        ("sig_last_2", lambda z: _sig(2.0 * last(z))),
        ("sig_first_sig_neg_last", lambda z: _sig(first(z)) * _sig(-last(z))),
        ("sig_sum_shift", lambda z: _sig(tot(z) - 0.5)),
        ("sig_first_sig_last_shift", lambda z: _sig(3.0 * first(z)) * _sig(last(z) + 1.0)),
        ("sig_diff", lambda z: _sig(2.0 * (first(z) - last(z)))),
        ("sig_sq", lambda z: _sig(first(z) ** 2 - 1.0)),
    ]


PREFIX_FUNCTIONS = _prefix_functions()


def _weighted_points(law):
    if isinstance(law, GridDensity):
        live = law.masses > 0
        x = np.stack([np.broadcast_to(law.coordinate(i), law.shape)[live] for i in range(law.dim)], axis=-1)
        w = law.masses[live]
        return x, w / w.sum(), True
    if isinstance(law, SampleSet):
        return law.points, law.weights / law.weights.sum(), False
    raise TypeError("expected a GridDensity or a SampleSet")


def martingale_increment_check(law, tol=None, label="") -> VerificationReport:
    """Test ``E[X_i g(X_<i)] = 0`` for the fixed prefix family g (and ``E X_1 = 0``).

    Each correlation is normalized by ``sqrt(E X_i^2 E g^2)``; ``lhs`` is
    the worst normalized value and ``rhs`` the tolerance (5e-3 on grids,
    ``5 / sqrt(count)`` for sample sets, unless given).
    """
    x, w, grid = _weighted_points(law)
    if tol is None:
        tol = GRID_MARTINGALE_TOL if grid else 5.0 / np.sqrt(len(w))
    n = x.shape[1]
    worst = 0.0
    where = ""
    table = {}
    for i in range(n):
        xi = x[:, i]
        sx = np.sqrt(np.sum(w * xi ** 2))
        tests = PREFIX_FUNCTIONS[:1] if i == 0 else PREFIX_FUNCTIONS
        for name, g in tests:
            gv = g(x[:, :i]) if i else np.ones(len(w))
            sg = np.sqrt(np.sum(w * gv ** 2))
            if sx == 0 or sg == 0:
                val = 0.0
            else:
                val = abs(float(np.sum(w * xi * gv))) / (sx * sg)
            table[f"x{i + 1}|{name}"] = val
            if val > worst:
                worst, where = val, f"x{i + 1}|{name}"
    return VerificationReport(
        inequality_id="martingale_increments",
        lhs=worst,
        rhs=float(tol),
        constant_used=float(tol),
        best_constant_estimate=worst,
        tolerance=0.0,
        inputs_digest=digest_of(law.digest(), "prefix-family-v1"),
        label=label,
        details={"worst_test": where, "correlations": table},
    )


# -- embedding and sums -----------------------------------------------------

def _embed(points, slot):
    return np.insert(points, slot, 0.0, axis=1)


def embed_sum_construction(components, mode="sample", count=20000, seed=0, shape=None, check=True, tol=None):
    """Law of ``Y = sum_j X^j_(j)`` where ``X^j_(j)`` inserts a zero at slot j.

    ``components`` lists k+1 laws of dimension k (GridDensity or
    SampleSet); ``None`` stands for the zero vector.  In sample mode
    independent draws are summed.  In grid mode (k+1 <= 3) the embedded
    components are convolved by re-binning pairwise sums of node masses
    onto a grid of the given shape covering the summed supports.

    Raises
    ------
    ComponentNotMartingale
        A component fails :func:`martingale_increment_check` at ``tol``
        (when ``check``).
    """
    comps = list(components)
    k1 = len(comps)
    k = k1 - 1
    dims = {c.dim for c in comps if c is not None}
    if dims and dims != {k}:
        raise ValueError(f"{k1} components need dimension {k}, got {sorted(dims)}")
    if check:
        for j, c in enumerate(comps):
            if c is not None:
                rep = martingale_increment_check(c, tol=tol)
                if not rep.passed:
                    raise ComponentNotMartingale(f"component {j} fails the martingale test ({rep.lhs:.3g})")
    if mode == "sample":
        rng = np.random.default_rng(seed)
        total = np.zeros((count, k1))
        for j, c in enumerate(comps):
            if c is None:
                continue
            sub_seed = int(rng.integers(0, 2 ** 31 - 1))
            if isinstance(c, GridDensity):
                pts = sample(c, count, sub_seed).points
            else:
                idx = np.random.default_rng(sub_seed).choice(c.count, size=count, p=c.weights)
                pts = c.points[idx]
            total += _embed(pts, j)
        return SampleSet.uniform(total, seed)
    if mode != "grid":
        raise ValueError(f"unknown mode {mode!r}")
    if k1 > 3:
        raise ValueError("grid convolution is limited to dimension <= 3")
    shape = tuple(shape or (64,) * k1)
    parts = []
    for j, c in enumerate(comps):
        if c is None:
            continue
        if not isinstance(c, GridDensity):
            raise TypeError("grid mode needs grid densities")
        x, w, _ = _weighted_points(c)
        keep = w > 1e-16 * w.max()
        parts.append((_embed(x[keep], j), w[keep] / w[keep].sum()))
    if not parts:
        raise ValueError("at least one nonzero component is needed")
    lo = sum(p.min(axis=0) for p, _ in parts)
    hi = sum(p.max(axis=0) for p, _ in parts)
    span = np.maximum(hi - lo, 1e-9)
    pad = span / (np.asarray(shape) - 1)
    box = Box(lo - pad, hi + pad)
    grids = [np.linspace(box.lo[i], box.hi[i], shape[i]) for i in range(k1)]
    acc_pts, acc_w = parts[0]
    for pts, w in parts[1:]:
        acc_pts, acc_w = _convolve(acc_pts, acc_w, pts, w, grids)
    masses = _grid.deposit(acc_pts, acc_w, grids)
    return GridDensity.from_masses(box, masses)


def _convolve(pa, wa, pb, wb, grids, chunk=2 ** 22):
    """Re-bin all pairwise sums onto the grid; returns the occupied nodes and masses."""
    shape = tuple(len(g) for g in grids)
    acc = np.zeros(shape)
    step = max(1, chunk // max(len(pb), 1))
    for s in range(0, len(pa), step):
        sums = (pa[s:s + step, None, :] + pb[None, :, :]).reshape(-1, pa.shape[1])
        ws = (wa[s:s + step, None] * wb[None, :]).reshape(-1)
        acc += _grid.deposit(sums, ws, grids)
    nz = acc > 0
    mesh = np.stack(np.meshgrid(*grids, indexing="ij"), axis=-1)
    return mesh[nz], acc[nz]


def total_variation(a: GridDensity, b: GridDensity) -> float:
    """Half the l1 distance between the node masses of two laws on one grid."""
    if a.box != b.box or a.shape != b.shape:
        raise ValueError("laws must live on the same grid")
    return 0.5 * float(np.sum(np.abs(a.masses - b.masses)))


def steiner_tv_check(body: Potential, shape, tol=1e-2, label="") -> VerificationReport:
    """Distance between the recentered uniform law on a barycentered planar
    body and the uniform law on its Steiner symmetral, on the symmetral's grid.
    """
    from .density import build_grid_density
    from .recentering import recentered_law

    sym = steiner_symmetrize_2d(body)
    mu = build_grid_density(body, shape, audit=False)
    target = build_grid_density(sym, shape, audit=False)
    law = recentered_law(mu, target_box=target.box, target_shape=target.shape)
    tv = total_variation(law, target)
    return VerificationReport(
        inequality_id="steiner_recentering_tv",
        lhs=tv,
        rhs=tol,
        constant_used=tol,
        best_constant_estimate=tv,
        tolerance=0.0,
        inputs_digest=digest_of(mu.digest(), target.digest()),
        label=label,
        details={"symmetral_vertices": sym.info["vertices"]},
    )
