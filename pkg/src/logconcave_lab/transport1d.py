"""One-dimensional monotone transport, Cheeger constants and the 1D
functional inequalities (Cheeger with a median, the N-cost form with a mean).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _grid
from .density import GridDensity
from .errors import NonLipschitzOnGrid
from .report import VerificationReport


@dataclass(frozen=True, eq=False)
class MonotoneMap1D:
    """Nondecreasing map tabulated at source nodes (linear in between)."""

    source_grid: np.ndarray
    values: np.ndarray
    left_continuous: bool = True

    def __post_init__(self):
        g = np.array(self.source_grid, dtype=float)
        v = np.array(self.values, dtype=float)
        if g.shape != v.shape or g.ndim != 1:
            raise ValueError("source_grid and values must be 1D arrays of equal length")
        finite = np.isfinite(v)
        if np.any(np.diff(v[finite]) < 0):
            raise ValueError("monotone map values must be nondecreasing")
        g.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "source_grid", g)
        object.__setattr__(self, "values", v)

    def __call__(self, x):
        return np.interp(x, self.source_grid, self.values)

    def to_text(self):
        return "".join(f"{a:.17g} {b:.17g}\n" for a, b in zip(self.source_grid, self.values))

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path):
        data = np.loadtxt(path, ndmin=2)
        return cls(data[:, 0], data[:, 1])


def quantile_transport_rows(src_rows, src_grid, tgt_rows, tgt_grid):
    """Row-wise monotone map ``F_tgt^{-1} o F_src`` at the source nodes.

    Both row tables are unnormalized densities on uniform grids.  Source
    CDF values come from the left cumulative table and their complements
    from the right one, so both tails are inverted at full precision.
    Rows whose target has no mass are returned as NaN.
    """
    hs = src_grid[1] - src_grid[0]
    ht = tgt_grid[1] - tgt_grid[0]
    sl, sr, stot = _grid.cumulative_rows(src_rows, hs)
    tl, tr, ttot = _grid.cumulative_rows(tgt_rows, ht)
    B, m = sl.shape
    out = np.full((B, m), np.nan)
    ok = (stot > 0) & (ttot > 0)
    if not np.any(ok):
        return out
    p = sl[ok].ravel()
    q = sr[ok].ravel()
    rep = np.repeat(np.nonzero(ok)[0], m)
    res = _grid.inverse_cdf_rows(tl, tr, tgt_grid, p, q, rows=rep)
    out[ok] = res.reshape(-1, m)
    # enforce monotonicity exactly against rounding in the two-branch inversion
    out[ok] = np.maximum.accumulate(out[ok], axis=1)
    return out


def monotone_map(mu: GridDensity, nu: GridDensity) -> MonotoneMap1D:
    """Monotone rearrangement ``T = F_nu^{-1} o F_mu`` at the nodes of ``mu``.

    The generalized inverse ``inf{x : F(x) >= t}`` is taken inside the
    target box, so T stays finite on the whole source grid.
    """
    if mu.dim != 1 or nu.dim != 1:
        raise ValueError("monotone_map works on one-dimensional densities")
    vals = quantile_transport_rows(mu.values[None, :], mu.grids[0], nu.values[None, :], nu.grids[0])[0]
    return MonotoneMap1D(mu.grids[0], vals)


def variance(gamma: GridDensity) -> float:
    x = gamma.grids[0]
    m = gamma.expect(x)
    return gamma.expect((x - m) ** 2)


def cheeger_constant(gamma: GridDensity):
    """Working Cheeger value ``lambda^2 = 1 / (3 Var)`` and the variance.

    This is the lower end of Bobkov's sandwich for log-concave laws; the
    true optimal constant is never claimed.  Zero variance gives +inf.
    """
    var = variance(gamma)
    lam_sq = np.inf if var <= 0 else 1.0 / (3.0 * var)
    return lam_sq, var


def weighted_median(values, masses):
    """Lower median of the pushforward law; ties broken by node order."""
    order = np.argsort(values, kind="stable")
    cum = np.cumsum(masses[order])
    k = int(np.searchsorted(cum, 0.5 * cum[-1], side="left"))
    return float(values[order][min(k, len(order) - 1)])


def grid_derivative(f_values, h):
    """Central differences inside, one-sided differences at the two ends."""
    return np.gradient(f_values, h, edge_order=1)


def _check_lipschitz(f, grid, levels=3, growth=1.5):
    maxima = []
    for r in range(levels):
        x = np.linspace(grid[0], grid[-1], (grid.size - 1) * 4 ** r + 1)
        q = np.abs(np.diff(np.asarray(f(x), dtype=float))) / (x[1] - x[0])
        maxima.append(float(np.max(q)))
    if maxima[0] > 0 and all(b > growth * a for a, b in zip(maxima, maxima[1:])):
        raise NonLipschitzOnGrid(f"difference quotients keep growing under refinement: {maxima}")


def verify_one_dim_functional(gamma: GridDensity, f, mode="cheeger_median") -> VerificationReport:
    """Check a one-dimensional Cheeger-type inequality for ``f`` under ``gamma``.

    ``cheeger_median``:  lam * int |f - med f| dgamma <= int |f'| dgamma
    ``cheeger_gamma_N``: (1/16) int N(lam (f - mean f)) dgamma <= int N(f') dgamma

    with ``lam = sqrt(1 / (3 Var))``.
    """
    from .costs import n_cost

    if gamma.dim != 1:
        raise ValueError("gamma must be one-dimensional")
    x = gamma.grids[0]
    _check_lipschitz(f, x)
    fv = np.asarray(f(x), dtype=float)
    df = grid_derivative(fv, gamma.spacing[0])
    masses = gamma.masses
    lam_sq, var = cheeger_constant(gamma)
    lam = np.sqrt(lam_sq)
    if mode == "cheeger_median":
        med = weighted_median(fv, masses)
        raw = float(np.sum(masses * np.abs(fv - med)))
        lhs = lam * raw
        rhs = float(np.sum(masses * np.abs(df)))
        const = lam
    elif mode == "cheeger_gamma_N":
        mean = float(np.sum(masses * fv))
        lhs = float(np.sum(masses * n_cost(lam * (fv - mean)))) / 16.0
        rhs = float(np.sum(masses * n_cost(df)))
        raw = 16.0 * lhs
        const = 1.0 / 16.0
    else:
        raise ValueError(f"unknown mode {mode!r}")
    tol = 1e-9 * max(1.0, abs(lhs), abs(rhs))
    best = raw / rhs if rhs > 0 else (0.0 if raw == 0 else np.inf)
    return VerificationReport(
        inequality_id=f"one_dim_{mode}",
        lhs=lhs,
        rhs=rhs,
        constant_used=const,
        best_constant_estimate=best,
        tolerance=tol,
        inputs_digest=gamma.digest(),
        details={"variance": var, "lambda": lam},
    )


def cheeger_test_family(gamma: GridDensity, count=50):
    """Fixed family of smooth step-like functions centred at quantiles of gamma."""
    x = gamma.grids[0]
    cdf = np.cumsum(gamma.masses)
    sd = np.sqrt(variance(gamma))
    fams = []
    levels = np.linspace(0.1, 0.9, count // 5)
    for lev in levels:
        c = float(np.interp(lev, cdf, x))
        for width in (0.02, 0.05, 0.1, 0.3, 1.0):
            s = width * sd
            fams.append(lambda t, c=c, s=s: np.tanh((t - c) / s))
    return fams[:count]


def cheeger_estimate(gamma: GridDensity, count=50):
    """Smallest ratio int|f'| / int|f - med f| over the fixed test family.

    This is an upper estimate of the optimal Cheeger constant.
    """
    x = gamma.grids[0]
    masses = gamma.masses
    best = np.inf
    for f in cheeger_test_family(gamma, count):
        fv = f(x)
        med = weighted_median(fv, masses)
        lhs = float(np.sum(masses * np.abs(fv - med)))
        rhs = float(np.sum(masses * np.abs(grid_derivative(fv, gamma.spacing[0]))))
        if lhs > 0:
            best = min(best, rhs / lhs)
    return best


def w2_1d(mu: GridDensity, nu: GridDensity) -> float:
    """Exact quadratic Wasserstein distance by the quantile coupling."""
    T = monotone_map(mu, nu)
    return float(np.sqrt(np.sum(mu.masses * (T.values - mu.grids[0]) ** 2)))
