"""Knothe-Rosenblatt rearrangement between grid densities, its diagonal
Jacobian, and the change-of-variables entropy lower bound.
"""
from __future__ import annotations

import threading

import numpy as np

from . import _grid
from .density import GridDensity
from .errors import AbsoluteContinuityViolated, DegenerateJacobian, DimMismatch, ZeroMassSlice
from .transport1d import MonotoneMap1D, quantile_transport_rows

# relative level under which a conditional density counts as zero
SUPPORT_THRESHOLD = 1e-300
# relative level under which the density-ratio Jacobian is replaced by differences
RATIO_THRESHOLD = 1e-12


class TriangularMap:
    """Map whose i-th component depends only on the first i+1 coordinates.

    Subclasses implement :meth:`component`; evaluation of the full map
    stacks the components.  Points where the map is undefined evaluate to
    NaN (the out-of-support marker).
    """

    dim: int

    def component(self, i, points):
        raise NotImplementedError

    def __call__(self, points):
        points = np.asarray(points, dtype=float)
        single = points.ndim == 1
        pts = points.reshape(-1, self.dim)
        out = np.stack([self.component(i, pts) for i in range(self.dim)], axis=-1)
        return out[0] if single else out


def phi(t):
    """``t - 1 - log t`` without cancellation near t = 1."""
    t = np.asarray(t, dtype=float)
    d = t - 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = d - np.log(t)
    series = d * d * (0.5 - d * (1.0 / 3.0 - d * (0.25 - d / 5.0)))
    return np.where(np.abs(d) < 1e-3, series, direct)


class KnotheMap(TriangularMap):
    """Knothe map pushing ``mu`` onto ``nu``, tabulated on the nodes of ``mu``.

    Level i holds ``T_i`` on the prefix grid of axes 0..i.  Levels are built
    lazily and cached; the cache is insert-once under a lock so concurrent
    readers never see a partially built level.
    """

    def __init__(self, mu: GridDensity, nu: GridDensity):
        if mu.dim != nu.dim:
            raise DimMismatch(f"mu has dim {mu.dim} but nu has dim {nu.dim}")
        self.mu = mu
        self.nu = nu
        self.dim = mu.dim
        self._levels = {}
        self._lock = threading.RLock()

    def _level(self, i):
        lev = self._levels.get(i)
        if lev is not None:
            return lev
        with self._lock:
            lev = self._levels.get(i)
            if lev is None:
                lev = self._build_level(i)
                self._levels[i] = lev
        return lev

    def _build_level(self, i):
        mu, nu = self.mu, self.nu
        src_rows, src_mass = mu.conditional_rows(i)
        P = src_rows.shape[0]
        if i == 0:
            image_prefix = np.zeros((P, 0))
        else:
            cols = []
            for k in range(i):
                tk = self.table(k)
                tk = tk.reshape(tk.shape + (1,) * (i - 1 - k))
                cols.append(np.broadcast_to(tk, mu.shape[:i]).reshape(-1))
            image_prefix = np.stack(cols, axis=-1)
        live = src_mass > 0
        tgt_rows = np.zeros((P, nu.shape[i]))
        if np.any(live):
            tgt_rows[live] = _grid.interp_rows(nu.prefix_marginal(i + 1), nu.grids[:i], image_prefix[live])
        tgt_mass = tgt_rows @ nu.axis_weights[i]
        dead = live & ~(tgt_mass > 0)
        if np.any(dead):
            bad = image_prefix[np.argmax(dead)]
            raise ZeroMassSlice(f"target conditional of axis {i} is empty at image prefix {bad.tolist()}")
        tgt_rows[live] /= tgt_mass[live, None]
        table = quantile_transport_rows(src_rows, mu.grids[i], tgt_rows, nu.grids[i])
        table[~live] = np.nan
        src_dens = np.zeros_like(src_rows)
        src_dens[live] = src_rows[live] / src_mass[live, None]
        # nodes where the source conditional vanishes are outside the support
        rowmax = np.max(src_dens, axis=1, keepdims=True)
        table[src_dens <= SUPPORT_THRESHOLD * rowmax] = np.nan
        table.flags.writeable = False
        return {
            "table": table.reshape(mu.shape[: i + 1]),
            "src_dens": src_dens,
            "tgt_dens": tgt_rows,
            "live": live,
        }

    def table(self, i):
        """``T_i`` at the source nodes, shape ``mu.shape[:i+1]`` (NaN off support)."""
        return self._level(i)["table"]

    def build_all(self):
        for i in range(self.dim):
            self._level(i)
        return self

    def slice_map(self, prefix_index):
        """The 1D monotone map in x_i at a prefix node given by grid indices."""
        i = len(prefix_index)
        return MonotoneMap1D(self.mu.grids[i], self.table(i)[tuple(prefix_index)])

    def component(self, i, points):
        points = np.asarray(points, dtype=float).reshape(-1, self.dim)
        vals = _grid.interp_rows(self.table(i), self.mu.grids[: i + 1], points[:, : i + 1])
        inside = self.mu.box.contains(points, tol=1e-12)
        return np.where(inside, vals, np.nan)

    def jacobian_table(self, i):
        """``d T_i / d x_i`` at the source nodes by the density-ratio identity.

        Where the target conditional density at the image is negligible the
        value falls back to central differences of the tabulated map.
        """
        lev = self._level(i)
        key = "jac"
        if key in lev:
            return lev[key]
        nu = self.nu
        table = lev["table"].reshape(-1, self.mu.shape[i])
        src = lev["src_dens"]
        tgt = lev["tgt_dens"]
        P, m = table.shape
        idx, frac = _grid.locate(nu.grids[i], np.nan_to_num(table, nan=nu.grids[i][0]))
        rows = np.arange(P)[:, None]
        tgt_at = (1.0 - frac) * tgt[rows, idx] + frac * tgt[rows, idx + 1]
        tgt_max = np.max(tgt, axis=1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            jac = src / tgt_at
        weak = tgt_at <= RATIO_THRESHOLD * tgt_max
        if np.any(weak):
            fd = np.gradient(table, self.mu.spacing[i], axis=1, edge_order=1)
            # deep tails squeezed into the last target cell flatten the table
            # below float resolution; keep the (tiny, positive) ratio there
            usable = np.isfinite(fd) & (fd > 0) | ~(np.isfinite(jac) & (jac > 0))
            jac = np.where(weak & usable, fd, jac)
        jac = np.where(np.isnan(table), np.nan, jac)
        jac = jac.reshape(self.mu.shape[: i + 1])
        jac.flags.writeable = False
        with self._lock:
            lev.setdefault(key, jac)
        return lev[key]

    def pushforward_moments(self):
        """Mean vector and covariance of ``T # mu`` by quadrature on mu's grid."""
        mu = self.mu
        masses = mu.masses
        comps = [self._broadcast(self.table(i)) for i in range(self.dim)]
        comps = [np.where(masses > 0, c, 0.0) for c in comps]
        mean = np.array([np.sum(masses * c) for c in comps])
        cov = np.array([[np.sum(masses * (a - ma) * (b - mb)) for b, mb in zip(comps, mean)]
                        for a, ma in zip(comps, mean)])
        return mean, cov

    def _broadcast(self, arr):
        arr = np.asarray(arr)
        return np.broadcast_to(arr.reshape(arr.shape + (1,) * (self.dim - arr.ndim)), self.mu.shape)


def build_knothe(mu: GridDensity, nu: GridDensity, eager=True) -> KnotheMap:
    """Knothe-Rosenblatt map from ``mu`` to ``nu``.

    T_1 is the monotone map between first marginals; for i > 1,
    ``T_i(x_1..x_{i-1}, .)`` is the monotone map from the conditional of mu
    given ``x_{<i}`` to the conditional of nu given ``T_{<i}(x)``.  Target
    conditionals at off-grid image prefixes come from multilinear
    interpolation of nu's prefix marginal.

    Raises
    ------
    DimMismatch
    ZeroMassSlice
        A reached target conditional carries no mass.
    """
    T = KnotheMap(mu, nu)
    return T.build_all() if eager else T


def diag_jacobian(tmap: KnotheMap, point):
    """Diagonal entries ``d_i T_i`` at an arbitrary point inside the source box.

    Uses the ratio of source and target conditional densities; falls back
    to a central difference where the target density is negligible.

    Raises
    ------
    DegenerateJacobian
        Some entry is not a positive finite number.
    """
    mu, nu = tmap.mu, tmap.nu
    x = np.asarray(point, dtype=float).reshape(-1, tmap.dim)
    if not np.all(mu.box.contains(x)):
        raise ValueError("point outside the source box")
    image = tmap(x)
    out = np.empty_like(x)
    for i in range(tmap.dim):
        srows = _grid.interp_rows(mu.prefix_marginal(i + 1), mu.grids[:i], x[:, :i])
        smass = srows @ mu.axis_weights[i]
        if np.any(smass <= 0):
            raise ValueError("source density vanishes on this prefix")
        sd = _grid.linear_eval_rows(srows / smass[:, None], mu.grids[i], x[:, i])
        trows = _grid.interp_rows(nu.prefix_marginal(i + 1), nu.grids[:i], image[:, :i])
        tmass = trows @ nu.axis_weights[i]
        td = _grid.linear_eval_rows(trows / tmass[:, None], nu.grids[i], image[:, i])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = sd / td
        weak = td <= RATIO_THRESHOLD * np.max(trows / tmass[:, None], axis=1)
        if np.any(weak):
            h = mu.spacing[i]
            up = x.copy()
            dn = x.copy()
            up[:, i] = np.minimum(x[:, i] + h, mu.box.hi[i])
            dn[:, i] = np.maximum(x[:, i] - h, mu.box.lo[i])
            fd = (tmap.component(i, up) - tmap.component(i, dn)) / (up[:, i] - dn[:, i])
            ratio = np.where(weak, fd, ratio)
        out[:, i] = ratio
    if not np.all(np.isfinite(out)) or np.any(out <= np.finfo(float).tiny):
        raise DegenerateJacobian(f"diagonal Jacobian not positive and finite: {out.tolist()}")
    return out[0] if np.ndim(point) == 1 else out


def entropy_lower_bound(mu: GridDensity, nu: GridDensity, tmap: KnotheMap = None):
    """Both sides of ``D(nu||mu) >= int sum_i (d_iT_i - 1 - log d_iT_i) dmu``.

    Returns
    -------
    (bound, entropy, margin)
        ``margin = entropy - bound``.

    Raises
    ------
    AbsoluteContinuityViolated
        nu charges a node where mu vanishes.
    """
    from .costs import relative_entropy

    entropy = relative_entropy(nu, mu)
    if not np.isfinite(entropy):
        raise AbsoluteContinuityViolated("nu is not absolutely continuous with respect to mu on the grid")
    tmap = tmap or build_knothe(mu, nu)
    masses = mu.masses
    integrand = lower_bound_integrand(tmap)
    bound = float(np.sum(np.where(masses > 0, masses * integrand, 0.0)))
    return bound, entropy, entropy - bound


def lower_bound_integrand(tmap: KnotheMap):
    """Pointwise ``sum_i phi(d_iT_i)`` on the source grid (NaN off support)."""
    total = np.zeros(tmap.mu.shape)
    for i in range(tmap.dim):
        total = total + tmap._broadcast(phi(tmap.jacobian_table(i)))
    return total
