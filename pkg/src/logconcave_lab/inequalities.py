"""Numerical checks of the weighted Poincare inequality for recentered
log-concave vectors, the transport-entropy inequality, the W2 bound on
cubes and the sup-convolution (Hamilton-Jacobi) bound.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import optimize

from .costs import knothe_coupling, knothe_coupling_cost, n_cost, n_cost_inverse, relative_entropy
from .density import GridDensity
from .errors import IntegrabilityFailed
from .recentering import ConditionalMoments, RecenteringPair, build_recentering
from .report import VerificationReport, digest_of

# constant produced by the linearization argument
A_WEIGHTED_POINCARE = (4.0 * np.sqrt(3.0) + 1.0) ** 2
HJ_CONSTANT = 8.0
DEFAULT_T_SEQUENCE = (1e-2, 1e-3, 1e-4)
FD_STEP = 1e-5


@dataclass(frozen=True)
class TestFunction:
    """A test function with optional analytic gradient and known bounds.

    ``func`` and ``grad`` act on (B, n) arrays and return (B,) and (B, n).
    ``sup`` bounds |f| and ``lipschitz`` bounds |grad f| on the working
    region (None when unbounded or unknown).
    """

    __test__ = False

    label: str
    func: Callable
    grad: Optional[Callable] = None
    lipschitz: Optional[float] = None
    sup: Optional[float] = None

    def __call__(self, x):
        return self.func(np.asarray(x, dtype=float))

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        if self.grad is not None:
            return self.grad(x)
        return fd_gradient(self.func, x)


def fd_gradient(func, x, step=FD_STEP):
    """Central-difference gradient of ``func`` at the rows of x."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for i in range(x.shape[1]):
        up = x.copy()
        dn = x.copy()
        up[:, i] += step
        dn[:, i] -= step
        out[:, i] = (func(up) - func(dn)) / (2 * step)
    return out


class TestFunctionFamily:
    """Ordered collection of :class:`TestFunction`."""

    __test__ = False

    def __init__(self, functions):
        self.functions = list(functions)
        labels = [f.label for f in self.functions]
        if len(set(labels)) != len(labels):
            raise ValueError("test function labels must be unique")

    @property
    def labels(self):
        return [f.label for f in self.functions]

    def __iter__(self):
        return iter(self.functions)

    def __len__(self):
        return len(self.functions)

    def __getitem__(self, label):
        for f in self.functions:
            if f.label == label:
                return f
        raise KeyError(label)

    def max_gradient_discrepancy(self, points):
        """Largest |analytic - central difference| over members with gradients."""
        worst = 0.0
        for f in self.functions:
            if f.grad is None:
                continue
            diff = np.abs(f.grad(points) - fd_gradient(f.func, points))
            worst = max(worst, float(np.max(diff)))
        return worst


def _unit(n, seed=1):
    v = np.random.default_rng(seed).normal(size=n)
    return v / np.linalg.norm(v)


def standard_family(dim) -> TestFunctionFamily:
    """Twelve smooth test functions: coordinates, |x|^2, products, bumps, ridges."""
    n = dim
    last = n - 1
    theta = _unit(n, seed=7)
    phi = _unit(n, seed=11)
    c = np.full(n, 0.5)
    e = lambda i: np.eye(n)[i]

    def lin(i):
        return TestFunction(f"x{i + 1}", lambda x: x[:, i], lambda x: np.broadcast_to(e(i), x.shape).copy(), 1.0)

    fams = [lin(0)]
    if n > 1:
        fams.append(lin(last))
    fams += [
        TestFunction("sum_x", lambda x: x.sum(axis=1), lambda x: np.ones_like(x), np.sqrt(n)),
        TestFunction("norm_sq", lambda x: np.sum(x ** 2, axis=1), lambda x: 2 * x),
        TestFunction(
            f"x1*x{last + 1}",
            lambda x: x[:, 0] * x[:, last],
            lambda x: x[:, 0:1] * e(last) + x[:, last:last + 1] * e(0),
        ),
        TestFunction(
            "bump_centered",
            lambda x: np.exp(-np.sum(x ** 2, axis=1)),
            lambda x: -2 * x * np.exp(-np.sum(x ** 2, axis=1))[:, None],
            np.sqrt(2 / np.e), 1.0,
        ),
        TestFunction(
            "bump_offset",
            lambda x: np.exp(-0.5 * np.sum((x - c) ** 2, axis=1)),
            lambda x: -(x - c) * np.exp(-0.5 * np.sum((x - c) ** 2, axis=1))[:, None],
            np.exp(-0.5), 1.0,
        ),
        TestFunction(
            "ridge_tanh",
            lambda x: np.tanh(x @ theta),
            lambda x: (1 - np.tanh(x @ theta) ** 2)[:, None] * theta,
            1.0, 1.0,
        ),
        TestFunction(
            "ridge_softabs",
            lambda x: np.sqrt(1 + (x @ phi) ** 2),
            lambda x: ((x @ phi) / np.sqrt(1 + (x @ phi) ** 2))[:, None] * phi,
            1.0,
        ),
        TestFunction(
            "ridge_sin",
            lambda x: np.sin(x @ theta),
            lambda x: np.cos(x @ theta)[:, None] * theta,
            1.0, 1.0,
        ),
        TestFunction(
            "cubic_x1",
            lambda x: x[:, 0] ** 3 - x[:, 0],
            lambda x: (3 * x[:, 0:1] ** 2 - 1) * e(0),
        ),
        TestFunction(
            "log_norm",
            lambda x: np.log1p(np.sum(x ** 2, axis=1)),
            lambda x: 2 * x / (1 + np.sum(x ** 2, axis=1))[:, None],
            1.0,
        ),
    ]
    return TestFunctionFamily(fams)


def _scale(*vals):
    return max([1.0] + [abs(float(v)) for v in vals if np.isfinite(v)])


# -- weighted Poincare --------------------------------------------------------


def _weighted_poincare_sides(points, weights, masses, f):
    fv = f(points)
    mean = float(np.sum(masses * fv))
    lhs = float(np.sum(masses * (fv - mean) ** 2))
    g = f.gradient(points)
    rhs_sum = float(np.sum(masses * np.sum(weights * g ** 2, axis=1)))
    return lhs, rhs_sum


def verify_weighted_poincare(mu: GridDensity, family: TestFunctionFamily = None, a=A_WEIGHTED_POINCARE,
                             cm: ConditionalMoments = None, martingale_tol=1e-6):
    """``Var f(X bar) <= a sum_i E[E[X bar_i^2 | X bar_<i] (d_i f)(X bar)^2]`` for each f.

    The conditional second moments of X bar are read from the conditional
    variance tables of mu through ``E[X bar_i^2 | X bar_<i = xbar_<i] =
    Var(X_i | X_<i = S(xbar)_<i)``, so both sides are exact quadratures on
    mu's grid with no re-binning.  When every conditional mean vanishes
    (martingale increments) an extra report per f covers X itself.
    """
    cm = cm or ConditionalMoments(mu)
    family = family or standard_family(mu.dim)
    live = mu.masses > 0
    masses = mu.masses[live]
    xbar = np.stack([(mu.coordinate(i) - cm.on_grid(cm.mean_tables, i))[live] for i in range(mu.dim)], axis=-1)
    var = np.stack([cm.on_grid(cm.var_tables, i)[live] for i in range(mu.dim)], axis=-1)
    means = np.stack([cm.on_grid(cm.mean_tables, i)[live] for i in range(mu.dim)], axis=-1)
    sd = np.sqrt(np.max(var)) if var.size else 1.0
    martingale = bool(np.max(np.abs(means)) <= martingale_tol * max(sd, 1.0))
    reports = []
    for f in family:
        lhs, rhs_sum = _weighted_poincare_sides(xbar, var, masses, f)
        reports.append(_wp_report("weighted_poincare", f.label, lhs, rhs_sum, a, mu))
        if martingale:
            x = np.stack([np.broadcast_to(mu.coordinate(i), mu.shape)[live] for i in range(mu.dim)], axis=-1)
            lhs2, rhs2 = _weighted_poincare_sides(x, var + means ** 2, masses, f)
            reports.append(_wp_report("weighted_poincare_martingale", f.label, lhs2, rhs2, a, mu))
    return reports


def _wp_report(ident, label, lhs, rhs_sum, a, mu):
    if rhs_sum > 0:
        best = lhs / rhs_sum
    else:
        best = 0.0 if lhs <= 0 else np.inf
    return VerificationReport(
        inequality_id=ident,
        lhs=lhs,
        rhs=a * rhs_sum,
        constant_used=a,
        best_constant_estimate=best,
        tolerance=1e-6 * _scale(lhs, rhs_sum),
        inputs_digest=digest_of(mu.digest(), label),
        label=label,
        details={"rhs_without_constant": rhs_sum},
    )


# -- transport-entropy and W2 on cubes ----------------------------------------


def verify_transport_entropy(mu: GridDensity, nu: GridDensity, variant="sum_form", tmap=None,
                             tol=1e-6, label="") -> VerificationReport:
    """Coupling cost of the recentered Knothe coupling against ``D(nu || mu)``.

    The coupling cost is an upper bound on the optimal transport cost, so
    passing here is stronger than the inequality between optimal cost and
    entropy.
    """
    from .knothe import build_knothe

    tmap = tmap or build_knothe(mu, nu)
    lhs = knothe_coupling_cost(mu, nu, variant=variant, tmap=tmap)
    rhs = relative_entropy(nu, mu)
    best = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else np.inf)
    return VerificationReport(
        inequality_id="transport_entropy",
        lhs=lhs,
        rhs=rhs,
        constant_used=1.0,
        best_constant_estimate=best,
        tolerance=tol,
        inputs_digest=digest_of(mu.digest(), nu.digest(), variant),
        label=label,
        details={"variant": variant, "lhs_meaning": "coupling upper bound on the optimal cost"},
    )


def weight_floor(mu: GridDensity, R, cm: ConditionalMoments = None):
    """Smallest ``6 R^2 lambda_i^2`` over populated prefix nodes (>= 1 on [-R, R]^n)."""
    cm = cm or ConditionalMoments(mu)
    worst = np.inf
    for i in range(mu.dim):
        var = cm.var_tables[i]
        pop = cm.mass_tables[i] > 0
        if np.any(pop):
            vmax = float(np.max(np.asarray(var)[pop]))
            worst = min(worst, np.inf if vmax == 0 else 6 * R * R / (3 * vmax))
    return worst


def verify_t2_cube(mu: GridDensity, nu: GridDensity, R, tmap=None, tol=1e-6, label="") -> VerificationReport:
    """Ratio ``W2(mu bar, nu bar)^2 / (R^2 D(nu || mu))`` for laws on ``[-R, R]^n``.

    W2^2 is bounded above by ``E|X bar - Y bar|^2`` along the recentered
    Knothe coupling.  No universal constant is asserted; the report is
    empirical and fails only when the weight floor ``lambda_i^2 >=
    1/(6 R^2)`` is violated at some populated prefix node.
    """
    for d in (mu, nu):
        if np.any(d.box.lo < -R - 1e-12) or np.any(d.box.hi > R + 1e-12):
            live = d.masses > 0
            pts = [np.broadcast_to(d.coordinate(i), d.shape)[live] for i in range(d.dim)]
            if any(np.max(np.abs(p)) > R + 1e-12 for p in pts):
                raise ValueError(f"support leaves the cube [-{R}, {R}]^n")
    cm = ConditionalMoments(mu)
    floor = weight_floor(mu, R, cm)
    coup = knothe_coupling(mu, nu, tmap, cm)
    xb, yb, _, m = coup.stacked()
    lhs = float(np.sum(m * np.sum((xb - yb) ** 2, axis=1)))
    ent = relative_entropy(nu, mu)
    rhs = R * R * ent
    ratio = lhs / rhs if rhs > 0 else (np.nan if lhs == 0 else np.inf)
    return VerificationReport(
        inequality_id="t2_cube",
        lhs=lhs,
        rhs=rhs,
        constant_used=np.nan,
        best_constant_estimate=ratio,
        tolerance=tol,
        inputs_digest=digest_of(mu.digest(), nu.digest(), R),
        kind="empirical",
        label=label,
        details={"R": R, "entropy": ent, "weight_floor_6R2_lambda_sq": floor,
                 "lhs_meaning": "coupling upper bound on W2^2"},
        checks={"weight_floor": bool(floor >= 1 - tol)},
    )


# -- sup-convolution ------------------------------------------------------------


def fatou_constant():
    """``a = 4 sup_{0 < v <= N^{-1}(1)} v^2 / N(v)`` by bounded 1D maximization."""
    top = n_cost_inverse(1.0)
    res = optimize.minimize_scalar(lambda v: -v * v / n_cost(v), bounds=(1e-6, top), method="bounded",
                                   options={"xatol": 1e-12})
    # the ratio may peak at the bound; compare with the endpoint
    best = max(-res.fun, top * top / n_cost(top))
    return 4.0 * best


def _context(ctx):
    if isinstance(ctx, RecenteringPair):
        return ctx
    if isinstance(ctx, ConditionalMoments):
        return build_recentering(ctx.density, ctx)
    if hasattr(ctx, "recentering"):
        return ctx.recentering
    raise TypeError("context must be a RecenteringPair, ConditionalMoments or CostSpec")


def _weights_at(pair: RecenteringPair, x):
    """``lambda_i(S(x))^2`` at the rows of x."""
    sx = pair.S(x)
    return np.stack([pair.moments.lambda_sq(i, sx[:, :i]) for i in range(pair.moments.dim)], axis=-1)


def _stencil(n, k):
    ax = np.linspace(-1.0, 1.0, k)
    pts = np.stack(np.meshgrid(*([ax] * n), indexing="ij"), axis=-1).reshape(-1, n)
    return pts[np.sum(pts ** 2, axis=1) <= 1.0 + 1e-12]


def _neighbours(n):
    pts = np.stack(np.meshgrid(*([np.array([-1.0, 0.0, 1.0])] * n), indexing="ij"), axis=-1).reshape(-1, n)
    return pts[np.any(pts != 0, axis=1)]


def sup_convolution(ctx, f, t, x, M=None, stencil_points=9, iterations=60, starts=2):
    """``P_t f(x) = sup_y { f(y) - c~_mu(x, y) / t }`` at the rows of x.

    The search runs over ``v = lambda(S(x)) * (y - x)`` in the ball
    ``|v| <= N^{-1}(48 M t)``, where the supremum is attained for
    ``M = 1 + sup|f|``: a stencil over the ball picks the best ``starts``
    points (plus v = 0), each refined by a shrinking pattern search.
    Coordinates with infinite weight stay frozen.  The result never falls
    below f(x).
    """
    pair = _context(ctx)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = x.reshape(-1, pair.moments.dim)
    B, n = x.shape
    if M is None:
        sup = getattr(f, "sup", None)
        if sup is None:
            raise ValueError("pass M or a function with a known sup bound")
        M = 1.0 + sup
    r = n_cost_inverse(48.0 * M * t)
    lam = np.sqrt(_weights_at(pair, x))
    free = np.isfinite(lam) & (lam > 0)
    inv = np.where(free, 1.0 / np.where(free, lam, 1.0), 0.0)
    fx = f(x)

    def objective(v):
        # v has shape (B, K, n)
        y = x[:, None, :] + v * inv[:, None, :]
        vals = f(y.reshape(-1, n)).reshape(v.shape[:2])
        norm = np.sqrt(np.sum(v ** 2, axis=-1))
        out = vals - n_cost(norm) / (16.0 * t)
        return np.where(norm <= r * (1 + 1e-12), out, -np.inf)

    sten = r * _stencil(n, stencil_points)
    cand = np.broadcast_to(sten, (B,) + sten.shape) * free[:, None, :]
    vals = objective(cand)
    order = np.argsort(-vals, axis=1, kind="stable")[:, :starts]
    rows = np.arange(B)[:, None]
    centres = np.concatenate([cand[rows, order], np.zeros((B, 1, n))], axis=1)
    best_val = np.concatenate([vals[rows, order], fx[:, None]], axis=1)
    nb = _neighbours(n)
    step = np.full(centres.shape[:2], 2.0 * r / (stencil_points - 1))
    for _ in range(iterations):
        trial = centres[:, :, None, :] + step[:, :, None, None] * nb[None, None, :, :] * free[:, None, None, :]
        S = centres.shape[1]
        tv = objective(trial.reshape(B, -1, n)).reshape(B, S, -1)
        k = np.argmax(tv, axis=2)
        top = np.take_along_axis(tv, k[:, :, None], axis=2)[:, :, 0]
        better = top > best_val
        centres = np.where(better[:, :, None], np.take_along_axis(trial, k[:, :, None, None], axis=2)[:, :, 0], centres)
        best_val = np.where(better, top, best_val)
        step = np.where(better, step, 0.5 * step)
    out = np.maximum(np.max(best_val, axis=1), fx)
    return float(out[0]) if single else out


def hj_rhs_density(pair: RecenteringPair, f, x):
    """Pointwise ``8 sum_i lambda_i(S(x))^{-2} (d_i f)(x)^2`` (infinite weights contribute 0)."""
    lam_sq = _weights_at(pair, x)
    inv = np.where(np.isinf(lam_sq), 0.0, 1.0 / lam_sq)
    return HJ_CONSTANT * np.sum(inv * f.gradient(x) ** 2, axis=1), inv


def verify_hj_bound(mu: GridDensity, nu_weights: GridDensity, f: TestFunction, t_sequence=DEFAULT_T_SEQUENCE,
                    pair: RecenteringPair = None, label="", tol_rel=1e-2, **search):
    """Difference quotients ``(1/t) int (P_t f - f) dnu`` against ``8 int sum_i lambda_i^{-2} (d_i f)^2 dnu``.

    The limit is only certified at the smallest t of ``t_sequence``.  Every
    quotient is also checked pointwise against the uniform bound
    ``a L^2 / lambda_*^2`` (for t <= 1/(48 M)), with the constant a from
    :func:`fatou_constant`.

    Raises
    ------
    IntegrabilityFailed
        Some ``int lambda_i^{-2}(S) dnu`` is not finite.
    """
    pair = pair or build_recentering(mu)
    t_sequence = sorted(t_sequence, reverse=True)
    live = nu_weights.masses > 0
    x = np.stack([np.broadcast_to(nu_weights.coordinate(i), nu_weights.shape)[live] for i in range(nu_weights.dim)],
                 axis=-1)
    w = nu_weights.masses[live]
    rhs_pt, inv = hj_rhs_density(pair, f, x)
    integrals = w @ inv
    if not np.all(np.isfinite(integrals)):
        raise IntegrabilityFailed(f"int lambda_i^-2 dnu is not finite: {integrals.tolist()}")
    rhs = float(np.sum(w * rhs_pt))
    M = 1.0 + f.sup if f.sup is not None else None
    if M is None or f.lipschitz is None:
        raise ValueError("the test function needs sup and Lipschitz bounds")
    a = fatou_constant()
    star_inv = np.max(inv, axis=1)  # 1 / lambda_*^2
    fatou_cap = a * f.lipschitz ** 2 * star_inv
    fx = f(x)
    quotients = []
    fatou_ok = True
    worst_fatou = 0.0
    for t in t_sequence:
        pt = sup_convolution(pair, f, t, x, M=M, **search)
        q_pt = (pt - fx) / t
        quotients.append(float(np.sum(w * q_pt)))
        if t <= 1.0 / (48.0 * M):
            slack = q_pt - fatou_cap
            fatou_ok &= bool(np.all(slack <= 1e-9 * np.maximum(1.0, fatou_cap)))
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(fatou_cap > 0, q_pt / fatou_cap, 0.0)
            worst_fatou = max(worst_fatou, float(np.max(ratio)))
    lhs = quotients[-1]
    best = lhs / (rhs / HJ_CONSTANT) if rhs > 0 else (0.0 if lhs <= 0 else np.inf)
    return VerificationReport(
        inequality_id="hj_bound",
        lhs=lhs,
        rhs=rhs,
        constant_used=HJ_CONSTANT,
        best_constant_estimate=best,
        tolerance=tol_rel * _scale(rhs),
        inputs_digest=digest_of(mu.digest(), nu_weights.digest(), f.label, tuple(t_sequence)),
        label=label or f.label,
        details={
            "t_sequence": list(t_sequence),
            "quotients": quotients,
            "fatou_constant": a,
            "fatou_worst_ratio": worst_fatou,
            "caveat": "limsup certified only at the smallest t",
        },
        checks={"fatou_uniform_bound": fatou_ok},
    )


def verify_entropy_lower_bound(mu: GridDensity, nu: GridDensity, tmap=None, tol=1e-6, label="") -> VerificationReport:
    """``D(nu || mu) >= int sum_i (d_iT_i - 1 - log d_iT_i) dmu`` along the Knothe map."""
    from .knothe import entropy_lower_bound

    bound, entropy, _ = entropy_lower_bound(mu, nu, tmap)
    return VerificationReport(
        inequality_id="entropy_lower_bound",
        lhs=bound,
        rhs=entropy,
        constant_used=1.0,
        best_constant_estimate=bound / entropy if entropy > 0 else (0.0 if bound <= 0 else np.inf),
        tolerance=tol,
        inputs_digest=digest_of(mu.digest(), nu.digest()),
        label=label,
    )
