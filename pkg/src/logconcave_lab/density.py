"""Log-concave densities on boxes: tensor-grid carrier, trapezoid quadrature,
prefix conditioning, moments, sampling and Moreau smoothing of potentials.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize

from . import _grid
from .errors import (
    ConvexityAuditFailed,
    MassUnderflow,
    NonConvergence,
    ZeroMassSlice,
)

MAX_GRID_POINTS = 2 ** 26
MIN_POINTS_PER_AXIS = 8
MASS_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned box ``[lo_1, hi_1] x ... x [lo_n, hi_n]``."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float)).copy()
        if lo.shape != hi.shape or lo.ndim != 1 or lo.size == 0:
            raise ValueError("lo and hi must be nonempty vectors of equal length")
        if not np.all(lo < hi):
            raise ValueError(f"degenerate box: lo={lo}, hi={hi}")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, radius, dim):
        return cls(np.full(dim, -float(radius)), np.full(dim, float(radius)))

    @property
    def dim(self):
        return self.lo.size

    def contains(self, points, tol=0.0):
        points = np.asarray(points, dtype=float)
        return np.all((points >= self.lo - tol) & (points <= self.hi + tol), axis=-1)

    def __eq__(self, other):
        return (
            isinstance(other, Box)
            and np.array_equal(self.lo, other.lo)
            and np.array_equal(self.hi, other.hi)
        )

    def __hash__(self):
        return hash((self.lo.tobytes(), self.hi.tobytes()))

    def __repr__(self):
        return f"Box(lo={self.lo.tolist()}, hi={self.hi.tolist()})"


@dataclass(frozen=True, eq=False)
class Potential:
    """Convex potential ``V`` on a box; the density is proportional to exp(-V).

    ``func`` maps an array of points with shape (..., dim) to values with
    shape (...).  It may return +inf outside a convex subdomain.
    """

    domain: Box
    func: Callable[[np.ndarray], np.ndarray]
    smoothness_hint: str = "C1"
    interior_point: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.smoothness_hint not in ("C1", "nonsmooth"):
            raise ValueError("smoothness_hint must be 'C1' or 'nonsmooth'")

    @property
    def dim(self):
        return self.domain.dim

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.asarray(self.func(x), dtype=float)


def audit_convexity(potential, n_pairs=1000, tol=1e-9, seed=0):
    """Randomized midpoint-convexity test on pairs drawn uniformly in the box.

    Raises
    ------
    ConvexityAuditFailed
        If ``V((x+y)/2) > (V(x)+V(y))/2 + tol * (1 + |.|)`` for some pair.
    """
    rng = np.random.default_rng(seed)
    box = potential.domain
    x = box.lo + (box.hi - box.lo) * rng.random((n_pairs, box.dim))
    y = box.lo + (box.hi - box.lo) * rng.random((n_pairs, box.dim))
    vx, vy, vm = potential(x), potential(y), potential(0.5 * (x + y))
    with np.errstate(invalid="ignore"):
        avg = 0.5 * (vx + vy)
        bad = vm > avg + tol * (1.0 + np.abs(avg))
    bad &= np.isfinite(avg)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise ConvexityAuditFailed(
            f"midpoint convexity fails at x={x[k].tolist()}, y={y[k].tolist()}: "
            f"V(mid)={vm[k]!r} > {avg[k]!r}"
        )


class GridDensity:
    """Normalized density sampled on a uniform tensor grid over a box.

    Quadrature is the tensor trapezoid rule; ``values`` integrate to one
    under it.  ``log_values`` keeps the unnormalized log density (for a
    potential, ``-V`` at the nodes).  Instances are immutable.
    """

    cell_quadrature = "trapezoid"

    def __init__(self, box: Box, log_values, *, check_shape=True):
        log_values = np.array(log_values, dtype=float)
        if log_values.ndim != box.dim:
            raise ValueError(f"grid has {log_values.ndim} axes but box has dim {box.dim}")
        if check_shape and min(log_values.shape) < MIN_POINTS_PER_AXIS:
            raise ValueError(f"need at least {MIN_POINTS_PER_AXIS} points per axis, got {log_values.shape}")
        if np.any(np.isnan(log_values)) or np.any(log_values == np.inf):
            raise ValueError("log density must be finite or -inf")
        self.box = box
        self.shape = log_values.shape
        self.grids = [np.linspace(box.lo[i], box.hi[i], self.shape[i]) for i in range(box.dim)]
        self.spacing = (box.hi - box.lo) / (np.asarray(self.shape) - 1)
        self.axis_weights = [_grid.trapezoid_weights(m, h) for m, h in zip(self.shape, self.spacing)]
        for g in self.grids:
            g.flags.writeable = False

        top = np.max(log_values)
        if top == -np.inf or top < np.log(np.finfo(float).tiny):
            raise MassUnderflow("density underflows on every grid node; check the box against the potential")
        raw = np.exp(log_values - top)
        z = float(np.sum(raw * self.cell_weights))
        values = raw / z
        log_values.flags.writeable = False
        values.flags.writeable = False
        self.log_values = log_values
        self.values = values

    @classmethod
    def from_values(cls, box, values, **kw):
        values = np.asarray(values, dtype=float)
        if np.any(values < 0):
            raise ValueError("density values must be nonnegative")
        with np.errstate(divide="ignore"):
            return cls(box, np.log(values), **kw)

    @classmethod
    def from_masses(cls, box, masses, **kw):
        """Build from per-node masses (mass / trapezoid weight = density)."""
        masses = np.asarray(masses, dtype=float)
        ws = [
            _grid.trapezoid_weights(m, (box.hi[i] - box.lo[i]) / (m - 1))
            for i, m in enumerate(masses.shape)
        ]
        w = ws[0]
        for extra in ws[1:]:
            w = np.multiply.outer(w, extra)
        return cls.from_values(box, masses / w, **kw)

    @property
    def dim(self):
        return self.box.dim

    @property
    def cell_weights(self):
        w = self.axis_weights[0]
        for extra in self.axis_weights[1:]:
            w = np.multiply.outer(w, extra)
        return w

    @property
    def masses(self):
        return self.values * self.cell_weights

    def mass(self):
        return float(np.sum(self.masses))

    def nodes(self):
        """All grid nodes as an (N, dim) array in row-major order."""
        mesh = np.meshgrid(*self.grids, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def coordinate(self, i):
        """Broadcastable array holding coordinate i at every node."""
        sh = [1] * self.dim
        sh[i] = self.shape[i]
        return self.grids[i].reshape(sh)

    def expect(self, g):
        """Quadrature of ``g`` (array broadcastable to the grid) against the density."""
        return float(np.sum(self.masses * g))

    def prefix_marginal(self, k):
        """Density of (X_1, ..., X_k) on the first k axes (k = 0 gives 1.0)."""
        out = self.values
        for axis in range(self.dim - 1, k - 1, -1):
            out = np.tensordot(out, self.axis_weights[axis], axes=([axis], [0]))
        return out

    def conditional_rows(self, i):
        """Unnormalized conditional rows of axis i over all prefix nodes.

        Returns ``(rows, row_mass)`` with rows of shape (P, m_i), where P is
        the number of nodes of the prefix grid (axes 0..i-1, row-major).
        """
        table = self.prefix_marginal(i + 1)
        rows = table.reshape(-1, self.shape[i])
        row_mass = rows @ self.axis_weights[i]
        return rows, row_mass

    def digest(self):
        h = hashlib.sha256()
        h.update(np.asarray(self.shape, dtype=np.int64).tobytes())
        h.update(self.box.lo.tobytes())
        h.update(self.box.hi.tobytes())
        h.update(np.ascontiguousarray(self.values).tobytes())
        return h.hexdigest()[:16]

    def __repr__(self):
        return f"GridDensity(box={self.box!r}, shape={self.shape})"


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Weighted point cloud; ``source`` is the grid density it was drawn from, if any."""

    dim: int
    points: np.ndarray
    weights: np.ndarray
    seed: int
    source: Optional[GridDensity] = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, self.dim)
        w = np.array(self.weights, dtype=float)
        if w.shape != (pts.shape[0],) or np.any(w < 0):
            raise ValueError("weights must be one nonnegative entry per point")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, expected 1")
        pts.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, points, seed, source=None):
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        n = points.shape[0]
        return cls(points.shape[1], points, np.full(n, 1.0 / n), seed, source)

    @property
    def count(self):
        return self.points.shape[0]

    def expect(self, g):
        return float(np.sum(self.weights * g))

    def digest(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.points).tobytes())
        h.update(self.weights.tobytes())
        return h.hexdigest()[:16]


def build_grid_density(potential: Potential, shape: Sequence[int], audit=True) -> GridDensity:
    """Evaluate exp(-V) on the tensor grid of the potential's box and normalize.

    Parameters
    ----------
    potential : Potential
    shape : sequence of int
        Points per axis, each at least 8; their product may not exceed 2**26.
    audit : bool
        Run the randomized midpoint-convexity audit first.

    Raises
    ------
    ConvexityAuditFailed, MassUnderflow
    """
    shape = tuple(int(s) for s in shape)
    if len(shape) != potential.dim:
        raise ValueError(f"shape {shape} does not match potential dim {potential.dim}")
    if int(np.prod(shape)) > MAX_GRID_POINTS:
        raise ValueError(f"grid of {int(np.prod(shape))} points exceeds the 2^26 budget")
    if audit:
        audit_convexity(potential)
    box = potential.domain
    grids = [np.linspace(box.lo[i], box.hi[i], shape[i]) for i in range(box.dim)]
    mesh = np.meshgrid(*grids, indexing="ij")
    pts = np.stack(mesh, axis=-1)
    v = potential(pts)
    return GridDensity(box, -v)


def _snap_to_node(grid, value, axis):
    h = grid[1] - grid[0]
    k = int(round((value - grid[0]) / h))
    if k < 0 or k >= grid.size or abs(grid[k] - value) > 1e-9 * max(h, abs(value)):
        raise ValueError(f"value {value!r} is not a grid node of axis {axis}")
    return k


def conditional_slice(density: GridDensity, fixed) -> GridDensity:
    """Conditional law of X_i given a fixed prefix (X_0..X_{i-1}) at grid nodes.

    ``fixed`` is a list of ``(axis, value)`` pairs whose axes must be
    exactly ``0, ..., i-1`` (axes are zero-based).  Returns the normalized
    1D conditional density on axis ``i``.
    """
    fixed = sorted(fixed, key=lambda av: av[0])
    axes = [a for a, _ in fixed]
    if axes != list(range(len(axes))):
        raise ValueError(f"conditioning must be on a coordinate prefix, got axes {axes}")
    i = len(axes)
    if i >= density.dim:
        raise ValueError("nothing left to condition on")
    idx = tuple(_snap_to_node(density.grids[a], v, a) for a, v in fixed)
    row = density.prefix_marginal(i + 1)[idx]
    mass = float(row @ density.axis_weights[i])
    if not mass > 0:
        raise ZeroMassSlice(f"prefix {[v for _, v in fixed]} carries no mass")
    box = Box(density.box.lo[i:i + 1], density.box.hi[i:i + 1])
    return GridDensity.from_values(box, row / mass, check_shape=False)


def moments(density, powers) -> float:
    """Mixed moment E[prod_i X_i^{p_i}] by quadrature (or sample average)."""
    powers = [int(p) for p in powers]
    if len(powers) != density.dim:
        raise ValueError("need one power per coordinate")
    if isinstance(density, SampleSet):
        return density.expect(np.prod(density.points ** np.asarray(powers), axis=1))
    g = 1.0
    for i, p in enumerate(powers):
        if p:
            g = g * density.coordinate(i) ** p
    return density.expect(g)


def mean_and_covariance(density):
    """First and second moments as (mean vector, covariance matrix)."""
    n = density.dim
    mean = np.array([moments(density, np.eye(n, dtype=int)[i]) for i in range(n)])
    cov = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            p = np.zeros(n, dtype=int)
            p[i] += 1
            p[j] += 1
            cov[i, j] = cov[j, i] = moments(density, p) - mean[i] * mean[j]
    return mean, cov


def moreau_smooth(potential: Potential, s: float, probe_budget: int = 200, xtol=1e-10) -> Potential:
    """Infimal convolution ``V_s(x) = inf_y V(y) + |x - y|^2 / s``.

    The inner minimization runs Powell's direction-set line searches inside
    the box, started from ``x`` (or from the potential's interior point when
    V(x) is infinite).  The result is convex, lies below V and increases to
    V as s decreases.

    Raises
    ------
    NonConvergence
        Evaluation raises if the inner search has not converged within
        ``probe_budget`` iterations.
    """
    if not s > 0:
        raise ValueError("s must be positive")
    box = potential.domain
    bounds = list(zip(box.lo, box.hi))

    def _one(x):
        def obj(y):
            v = float(potential(y))
            return v + float(np.sum((x - y) ** 2)) / s

        start = np.clip(x, box.lo, box.hi)
        if not np.isfinite(potential(start)):
            if potential.interior_point is None:
                raise NonConvergence("V is infinite at the probe and no interior point is known")
            start = np.asarray(potential.interior_point, dtype=float)
        res = optimize.minimize(
            obj, start, method="Powell", bounds=bounds,
            options={"maxiter": int(probe_budget), "xtol": xtol, "ftol": 1e-14},
        )
        if not res.success or not np.isfinite(res.fun):
            raise NonConvergence(f"inner minimization at x={x.tolist()} failed: {res.message}")
        # the start point is always admissible
        return min(float(res.fun), obj(start))

    def func(x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, box.dim)
        out = np.array([_one(p) for p in flat])
        return out.reshape(x.shape[:-1])

    return Potential(
        box, func, smoothness_hint="C1",
        interior_point=potential.interior_point,
        info={**potential.info, "moreau_s": float(s)},
    )


def sample(density: GridDensity, count: int, seed: int, chunk=4096) -> SampleSet:
    """Draw ``count`` points by sequential conditional inverse-CDF sampling.

    Each coordinate is obtained from a uniform variate through the
    conditional quantile function given the coordinates already drawn, so
    the sampler is the Knothe map from the uniform cube.  Deterministic in
    ``seed``.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    u = rng.random((count, density.dim))
    pts = np.empty((count, density.dim))
    for i in range(density.dim):
        table = density.prefix_marginal(i + 1)
        for start in range(0, count, chunk):
            sl = slice(start, start + chunk)
            rows = _grid.interp_rows(table, density.grids[:i], pts[sl, :i])
            left, right, total = _grid.cumulative_rows(rows, density.spacing[i])
            if np.any(total <= 0):
                raise ZeroMassSlice("sampled prefix landed on a zero-mass slice")
            pts[sl, i] = _grid.inverse_cdf_rows(left, right, density.grids[i], u[sl, i])
    return SampleSet.uniform(pts, seed, source=density)


def resample(density: GridDensity, box: Box, shape) -> GridDensity:
    """Multilinear re-evaluation of a density on another grid, renormalized."""
    grids = [np.linspace(box.lo[i], box.hi[i], shape[i]) for i in range(box.dim)]
    mesh = np.stack(np.meshgrid(*grids, indexing="ij"), axis=-1).reshape(-1, box.dim)
    inside = density.box.contains(mesh, tol=1e-12)
    vals = _grid.interp_rows(density.values, density.grids, mesh)
    vals = np.where(inside, vals, 0.0).reshape(tuple(shape))
    return GridDensity.from_values(box, vals)


# -- serialization ---------------------------------------------------------

_TEXT_MAGIC = "# logconcave_lab grid density v1"
_BIN_MAGIC = b"LCLABGD1"


def _header_lines(density):
    return [
        _TEXT_MAGIC,
        f"dim {density.dim}",
        "shape " + " ".join(str(s) for s in density.shape),
        "lo " + " ".join(f"{v:.17g}" for v in density.box.lo),
        "hi " + " ".join(f"{v:.17g}" for v in density.box.hi),
    ]


def save_density(density: GridDensity, path, fmt="text"):
    """Write a density: header (dim, shape, box bounds) then row-major values.

    The text format prints 17 significant digits, so values round-trip
    bit-exactly.  The binary format stores the same header as text followed
    by little-endian float64 values.
    """
    if fmt == "text":
        lines = _header_lines(density) + ["values"]
        lines += [f"{v:.17g}" for v in density.values.ravel()]
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    elif fmt == "binary":
        header = "\n".join(_header_lines(density)[1:]) + "\n"
        with open(path, "wb") as fh:
            fh.write(_BIN_MAGIC)
            fh.write(len(header.encode()).to_bytes(8, "little"))
            fh.write(header.encode())
            fh.write(density.values.astype("<f8").tobytes())
    else:
        raise ValueError(f"unknown format {fmt!r}")


def _parse_header(lines):
    fields = {}
    for line in lines:
        key, *rest = line.split()
        fields[key] = rest
    dim = int(fields["dim"][0])
    shape = tuple(int(s) for s in fields["shape"])
    box = Box([float(v) for v in fields["lo"]], [float(v) for v in fields["hi"]])
    if len(shape) != dim or box.dim != dim:
        raise ValueError("inconsistent density header")
    return box, shape


def load_density(path) -> GridDensity:
    with open(path, "rb") as fh:
        head = fh.read(len(_BIN_MAGIC))
        if head == _BIN_MAGIC:
            n = int.from_bytes(fh.read(8), "little")
            box, shape = _parse_header(fh.read(n).decode().splitlines())
            values = np.frombuffer(fh.read(), dtype="<f8").astype(float)
        else:
            fh.seek(0)
            text = fh.read().decode().splitlines()
            if text[0] != _TEXT_MAGIC:
                raise ValueError(f"{path}: not a grid density file")
            cut = text.index("values")
            box, shape = _parse_header(text[1:cut])
            values = np.array([float(v) for v in text[cut + 1:] if v.strip()])
    if values.size != int(np.prod(shape)):
        raise ValueError(f"{path}: expected {int(np.prod(shape))} values, found {values.size}")
    return _exact_density(box, values.reshape(shape))


def _exact_density(box, values):
    # keep stored values verbatim; from_values would renormalize them
    d = GridDensity.from_values(box, values, check_shape=False)
    vals = np.array(values, dtype=float)
    vals.flags.writeable = False
    d.values = vals
    return d
