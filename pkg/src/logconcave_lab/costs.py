"""The cost N, the transport costs c_mu and c~_mu, relative entropy, the
Knothe coupling cost and quadratic Wasserstein estimates.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .density import Box, GridDensity, SampleSet, resample
from .recentering import ConditionalMoments, RecenteringPair, build_recentering


def n_cost(t):
    """``N(t) = |t| - log(1 + |t|)``, accurate for small |t| and equal to inf at inf."""
    a = np.abs(np.asarray(t, dtype=float))
    with np.errstate(invalid="ignore"):
        direct = a - np.log1p(a)
    series = a * a * (0.5 - a * (1.0 / 3.0 - a * (0.25 - a / 5.0)))
    out = np.where(a < 1e-3, series, direct)
    out = np.where(np.isinf(a), np.inf, out)
    return out if out.ndim else float(out)


def n_cost_inverse(y):
    """The nonnegative root of ``N(t) = y``."""
    y = float(y)
    if y < 0:
        raise ValueError("N takes only nonnegative values")
    if y == 0:
        return 0.0
    if np.isinf(y):
        return np.inf
    # N(2y + 3) > y for every y >= 0
    return optimize.brentq(lambda t: n_cost(t) - y, 0.0, 2.0 * y + 3.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def n_quadratic_floor(limit=2.0 / np.sqrt(6.0), probes=4001):
    """Largest c with ``N(u) >= c u^2`` for ``|u| <= limit`` (over a probe grid)."""
    u = np.linspace(limit / probes, limit, probes)
    return float(np.min(n_cost(u) / u ** 2))


def _times(lam, d):
    """``lam * d`` with 0 x inf = 0 and a x inf = sign(a) inf."""
    with np.errstate(invalid="ignore"):
        out = lam * d
    return np.where(d == 0, 0.0, out)


@dataclass
class CostSpec:
    """Cost built from the Cheeger weights of a base measure.

    ``sum_form`` is ``(1/16) sum_i N(lambda_i(S(x)) (x_i - y_i))`` and
    ``norm_form`` is ``(1/16) N(sqrt(sum_i lambda_i(S(x))^2 (x_i - y_i)^2))``.
    """

    recentering: RecenteringPair
    variant: str = "sum_form"

    def __post_init__(self):
        if self.variant not in ("sum_form", "norm_form"):
            raise ValueError(f"unknown cost variant {self.variant!r}")

    @property
    def moments(self) -> ConditionalMoments:
        return self.recentering.moments

    @classmethod
    def for_measure(cls, mu: GridDensity, variant="sum_form"):
        return cls(build_recentering(mu), variant)


def _combine(lam_sq, disp, variant):
    """Cost from per-coordinate weights lambda_i^2 and displacements, shape (B, n)."""
    lam = np.sqrt(lam_sq)
    if variant == "sum_form":
        return np.sum(n_cost(_times(lam, disp)), axis=-1) / 16.0
    sq = np.sum(_times(lam_sq, disp ** 2), axis=-1)
    return n_cost(np.sqrt(sq)) / 16.0


def cost_eval(spec: CostSpec, x, y):
    """``c_mu(x, y)`` or ``c~_mu(x, y)`` for points x in recentered coordinates.

    Raises
    ------
    UndefinedPrefix
        S(x) reaches a prefix where the conditional moments are undefined.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    single = x.ndim == 1 and y.ndim == 1
    cm = spec.moments
    xs, ys = np.broadcast_arrays(x.reshape(-1, cm.dim), y.reshape(-1, cm.dim))
    sx = spec.recentering.S(xs)
    lam_sq = np.stack([cm.lambda_sq(i, sx[:, :i]) for i in range(cm.dim)], axis=-1)
    out = _combine(lam_sq, xs - ys, spec.variant)
    return float(out[0]) if single else out


def _log_density(d: GridDensity):
    """Normalized log density at the nodes, without underflow."""
    k = np.unravel_index(np.argmax(d.log_values), d.shape)
    return d.log_values + (np.log(d.values[k]) - d.log_values[k])


def _common_grid(a: GridDensity, b: GridDensity):
    if a.box == b.box and a.shape == b.shape:
        return a, b
    box = Box(np.minimum(a.box.lo, b.box.lo), np.maximum(a.box.hi, b.box.hi))
    h = np.minimum(a.spacing, b.spacing)
    shape = tuple(int(np.ceil((box.hi[i] - box.lo[i]) / h[i] - 1e-9)) + 1 for i in range(a.dim))
    return resample(a, box, shape), resample(b, box, shape)


def relative_entropy(nu: GridDensity, mu: GridDensity) -> float:
    """``D(nu || mu)`` by trapezoid quadrature on a common grid.

    Returns inf when nu charges a node where mu vanishes.  Densities on
    different grids are first resampled onto a grid covering both boxes
    at the finer spacing.
    """
    if nu.dim != mu.dim:
        raise ValueError("densities have different dimensions")
    nu, mu = _common_grid(nu, mu)
    charged = nu.values > 0
    if np.any(charged & (mu.values == 0) & np.isneginf(mu.log_values)):
        return np.inf
    lp = _log_density(nu)
    lq = _log_density(mu)
    w = nu.cell_weights
    terms = np.where(charged, nu.values * (np.where(charged, lp, 0.0) - np.where(charged, lq, 0.0)), 0.0)
    # quadrature can dip a hair below zero when nu and mu nearly agree
    return max(float(np.sum(w * terms)), 0.0)


@dataclass
class KnotheCoupling:
    """The coupling ``(X bar, Y bar)`` on the nodes of mu.

    ``ybar_i = T_i(X) - E[T_i(X) | X_<i]``; ``lambda_sq`` holds
    ``lambda_i(X)^2 = lambda_i(S(X bar))^2``.  Arrays have mu's grid shape;
    ``masses`` are the quadrature masses of mu.
    """

    xbar: list
    ybar: list
    lambda_sq: list
    masses: np.ndarray

    def live(self):
        return self.masses > 0

    def stacked(self):
        """(xbar, ybar, lambda_sq, masses) restricted to charged nodes, as (K, n) arrays."""
        live = self.live()
        pick = lambda comps: np.stack([np.broadcast_to(c, live.shape)[live] for c in comps], axis=-1)
        return pick(self.xbar), pick(self.ybar), pick(self.lambda_sq), self.masses[live]


def knothe_coupling(mu: GridDensity, nu: GridDensity, tmap=None, cm: ConditionalMoments = None) -> KnotheCoupling:
    from .knothe import build_knothe

    tmap = tmap or build_knothe(mu, nu)
    cm = cm or ConditionalMoments(mu)
    xbar, ybar, lam = [], [], []
    for i in range(mu.dim):
        rows, mass = mu.conditional_rows(i)
        t = tmap.table(i).reshape(rows.shape)
        t0 = np.where(rows > 0, np.nan_to_num(t, nan=0.0), 0.0)
        safe = np.where(mass > 0, mass, 1.0)
        cond_mean = ((rows * t0) @ mu.axis_weights[i]) / safe
        yb = (t - cond_mean[:, None]).reshape(mu.shape[: i + 1])
        ybar.append(tmap._broadcast(yb))
        xbar.append(mu.coordinate(i) - cm.on_grid(cm.mean_tables, i))
        lam.append(cm.on_grid(cm.lambda_sq_tables, i))
    return KnotheCoupling(xbar, ybar, lam, mu.masses)


def knothe_coupling_cost(mu: GridDensity, nu: GridDensity, spec: CostSpec = None, variant="sum_form",
                         tmap=None) -> float:
    """``E[c_mu(X bar, Y bar)]`` along the Knothe coupling of mu and nu.

    This upper-bounds the optimal cost between the recentered laws; it is
    exactly zero when nu = mu.
    """
    if spec is not None:
        variant = spec.variant
        cm = spec.moments
    else:
        cm = None
    coup = knothe_coupling(mu, nu, tmap, cm)
    xb, yb, lam_sq, m = coup.stacked()
    cost = _combine(lam_sq, yb - xb, variant)
    return float(np.sum(m * cost))


def w2_upper_bound(mu_bar, nu_bar) -> float:
    """W_2 between two laws: exact in dimension 1, an upper bound otherwise.

    Grid densities use the quantile coupling (dim 1) or the Knothe coupling
    (dim >= 2).  Equal-size uniform sample sets are paired after a
    lexicographic sort, which is the optimal pairing in dimension 1.
    """
    if mu_bar.dim != nu_bar.dim:
        raise ValueError("laws have different dimensions")
    if isinstance(mu_bar, SampleSet) and isinstance(nu_bar, SampleSet):
        if mu_bar.count != nu_bar.count:
            raise ValueError("sample sets must have the same size")
        a = mu_bar.points[np.lexsort(mu_bar.points.T[::-1])]
        b = nu_bar.points[np.lexsort(nu_bar.points.T[::-1])]
        return float(np.sqrt(np.mean(np.sum((a - b) ** 2, axis=1))))
    if mu_bar.dim == 1:
        from .transport1d import w2_1d

        return w2_1d(mu_bar, nu_bar)
    from .knothe import build_knothe

    T = build_knothe(mu_bar, nu_bar)
    m = mu_bar.masses
    live = m > 0
    sq = np.zeros(mu_bar.shape)
    for i in range(mu_bar.dim):
        d = T._broadcast(T.table(i)) - mu_bar.coordinate(i)
        sq = sq + np.where(live, np.nan_to_num(d, nan=0.0), 0.0) ** 2
    return float(np.sqrt(np.sum(m * sq)))
