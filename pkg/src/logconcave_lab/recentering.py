"""Conditional means and variances along the coordinate order, the
recentering map R (X -> X bar), its inverse S, and the laws of X bar and of
the reduced vector X'.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import _grid
from .density import Box, GridDensity, SampleSet, sample
from .errors import UndefinedPrefix
from .knothe import TriangularMap


class ConditionalMoments:
    """Tables of ``m_i``, ``Var(X_i | X_<i)`` and ``lambda_i^2 = 1/(3 Var)``.

    Level i is indexed by the prefix grid of axes 0..i-1; level 0 is a
    scalar.  Prefixes of zero marginal mass are NaN (undefined) and only
    raise when a lookup actually touches them.
    """

    def __init__(self, density: GridDensity):
        self.density = density
        self.dim = density.dim
        self.grids = density.grids
        self.mean_tables = []
        self.var_tables = []
        self.mass_tables = []
        for i in range(self.dim):
            rows, mass = density.conditional_rows(i)
            w = density.axis_weights[i]
            u = density.grids[i]
            ok = mass > 0
            safe = np.where(ok, mass, 1.0)
            mean = (rows @ (w * u)) / safe
            var = ((rows * (u[None, :] - mean[:, None]) ** 2) @ w) / safe
            var = np.maximum(var, 0.0)
            mean[~ok] = np.nan
            var[~ok] = np.nan
            shape = density.shape[:i]
            for arr, store in ((mean, self.mean_tables), (var, self.var_tables), (mass, self.mass_tables)):
                arr = arr.reshape(shape)
                arr.flags.writeable = False
                store.append(arr)

    @property
    def lambda_sq_tables(self):
        return [lambda_sq_from_var(v) for v in self.var_tables]

    def _lookup(self, tables, i, prefix_points):
        prefix_points = np.asarray(prefix_points, dtype=float).reshape(-1, i) if i else np.zeros((len(prefix_points), 0))
        out = _grid.interp_rows(tables[i], self.grids[:i], prefix_points)
        if np.any(np.isnan(out)):
            raise UndefinedPrefix(f"conditional moments of axis {i} undefined at some queried prefix")
        return out

    def mean(self, i, prefix_points):
        """``m_i`` at off-grid prefixes (multilinear interpolation)."""
        return self._lookup(self.mean_tables, i, prefix_points)

    def var(self, i, prefix_points):
        return self._lookup(self.var_tables, i, prefix_points)

    def lambda_sq(self, i, prefix_points):
        return lambda_sq_from_var(self.var(i, prefix_points))

    def on_grid(self, table_list, i):
        """Level-i table broadcast against the full grid of the density."""
        t = table_list[i]
        return np.broadcast_to(t.reshape(t.shape + (1,) * (self.dim - i)), self.density.shape)

    def to_csv(self, path):
        """One row per populated prefix node: axis, prefix coordinates, mean, variance, lambda_sq."""
        from .report import fmt_num

        header = ["axis"] + [f"x{k + 1}" for k in range(self.dim - 1)] + ["mean", "variance", "lambda_sq"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for i in range(self.dim):
                means = self.mean_tables[i]
                vars_ = self.var_tables[i]
                lam = lambda_sq_from_var(vars_)
                for idx in np.ndindex(*means.shape):
                    if np.isnan(means[idx]):
                        continue
                    coords = [fmt_num(self.grids[k][j]) for k, j in enumerate(idx)]
                    coords += [""] * (self.dim - 1 - len(coords))
                    w.writerow([i + 1] + coords + [fmt_num(means[idx]), fmt_num(vars_[idx]), fmt_num(lam[idx])])


def lambda_sq_from_var(var):
    var = np.asarray(var, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(var > 0, 1.0 / (3.0 * np.where(var > 0, var, 1.0)), np.where(np.isnan(var), np.nan, np.inf))


def conditional_moments(mu: GridDensity) -> ConditionalMoments:
    """Conditional mean, variance and Cheeger weight tables of ``mu``."""
    return ConditionalMoments(mu)


class RecenteringMap(TriangularMap):
    """``R_i(x) = x_i - m_i(x_<i)``."""

    def __init__(self, cm: ConditionalMoments):
        self.cm = cm
        self.dim = cm.dim

    def component(self, i, points):
        points = np.asarray(points, dtype=float).reshape(-1, self.dim)
        return points[:, i] - self.cm.mean(i, points[:, :i])

    def on_grid(self):
        """R at every node of the base grid, exact (no interpolation)."""
        d = self.cm.density
        return [d.coordinate(i) - self.cm.on_grid(self.cm.mean_tables, i) for i in range(self.dim)]


class InverseRecenteringMap(TriangularMap):
    """``S = R^{-1}`` by forward substitution: ``S_i = xbar_i + m_i(S_<i)``."""

    def __init__(self, cm: ConditionalMoments):
        self.cm = cm
        self.dim = cm.dim

    def __call__(self, points):
        points = np.asarray(points, dtype=float)
        single = points.ndim == 1
        xb = points.reshape(-1, self.dim)
        out = np.empty_like(xb)
        for i in range(self.dim):
            out[:, i] = xb[:, i] + self.cm.mean(i, out[:, :i])
        return out[0] if single else out

    def component(self, i, points):
        return self(points)[:, i]


@dataclass
class RecenteringPair:
    R: RecenteringMap
    S: InverseRecenteringMap
    moments: ConditionalMoments


def build_recentering(mu: GridDensity, cm: ConditionalMoments = None) -> RecenteringPair:
    cm = cm or conditional_moments(mu)
    return RecenteringPair(RecenteringMap(cm), InverseRecenteringMap(cm), cm)


def reduced_on_grid(cm: ConditionalMoments):
    """Components of the reduced vector ``X'_i = m_i(X_<i)`` at every node."""
    return [cm.on_grid(cm.mean_tables, i) for i in range(cm.dim)]


def _pushforward_grid(mu, images, target_box=None, target_shape=None):
    masses = mu.masses
    live = masses > 0
    pts = np.stack([np.broadcast_to(c, mu.shape)[live] for c in images], axis=-1)
    w = masses[live]
    if target_box is None:
        pad = np.max(mu.spacing)
        lo = pts.min(axis=0) - pad
        hi = pts.max(axis=0) + pad
        target_box = Box(lo, hi)
    shape = tuple(target_shape or mu.shape)
    grids = [np.linspace(target_box.lo[k], target_box.hi[k], shape[k]) for k in range(mu.dim)]
    dep = _grid.deposit(pts, w, grids)
    return GridDensity.from_masses(target_box, dep)


def _law(mu, image_fn, mode, count, seed, target_box, target_shape, cm):
    cm = cm or conditional_moments(mu)
    if mode == "grid_pushforward":
        if mu.dim > 3:
            raise ValueError("grid pushforward is limited to dim <= 3")
        return _pushforward_grid(mu, image_fn(cm, None), target_box, target_shape)
    if mode == "sample":
        if count is None:
            raise ValueError("sample mode needs a count")
        s = sample(mu, count, seed)
        return SampleSet.uniform(image_fn(cm, s.points), seed, source=mu)
    raise ValueError(f"unknown mode {mode!r}")


def recentered_law(mu: GridDensity, mode="grid_pushforward", count=None, seed=0,
                   target_box=None, target_shape=None, cm=None):
    """Law of ``X bar = R(X)``, ``X ~ mu``.

    In grid mode the R-images of the nodes are re-binned onto a target grid
    (default: bounding box of the images, padded by one cell, same shape)
    with multilinear mass splitting, which conserves mass and first moments.
    In sample mode samples of mu are pushed through R.
    """
    def images(cm, pts):
        if pts is None:
            return RecenteringMap(cm).on_grid()
        return RecenteringMap(cm)(pts)

    return _law(mu, images, mode, count, seed, target_box, target_shape, cm)


def reduced_vector_law(mu: GridDensity, mode="grid_pushforward", count=None, seed=0,
                       target_box=None, target_shape=None, cm=None):
    """Law of the reduced vector ``X' = (m_1, m_2(X_1), ..., m_n(X_<n))``."""
    def images(cm, pts):
        if pts is None:
            return reduced_on_grid(cm)
        return np.stack([cm.mean(i, pts[:, :i]) for i in range(cm.dim)], axis=-1)

    law = None
    if mode == "grid_pushforward" and target_box is None:
        cm = cm or conditional_moments(mu)
        comps = reduced_on_grid(cm)
        live = mu.masses > 0
        lo = np.array([np.min(c[live]) for c in comps])
        hi = np.array([np.max(c[live]) for c in comps])
        pad = np.maximum(np.max(mu.spacing), 1e-9 * (1 + np.abs(hi)))
        target_box = Box(lo - pad, hi + pad)
    law = _law(mu, images, mode, count, seed, target_box, target_shape, cm)
    return law
