"""Variance estimates for |X bar|^2, the orthogonal decomposition
X = X bar + X', quadratic variation of log-concave martingale increments
and thin-shell tails.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .density import GridDensity, SampleSet
from .errors import NotIsotropic, NotMartingaleIncrements
from .inequalities import A_WEIGHTED_POINCARE
from .recentering import ConditionalMoments
from .report import VerificationReport, digest_of, fmt_num


@dataclass
class Decomposition:
    """X, X bar and X' at weighted points (rows), with weights summing to one."""

    x: np.ndarray
    xbar: np.ndarray
    xprime: np.ndarray
    weights: np.ndarray
    digest: str
    grid: bool

    @property
    def dim(self):
        return self.x.shape[1]

    def mean(self, values):
        return float(np.sum(self.weights * values))

    def var(self, values):
        m = self.mean(values)
        return self.mean((values - m) ** 2)


def decompose(law, cm: ConditionalMoments = None) -> Decomposition:
    """Split a grid density or a sample set into X bar and X'.

    Sample sets need ``source`` (the grid density they were drawn from) for
    the conditional means; sample weights are uniform.
    """
    if isinstance(law, GridDensity):
        cm = cm or ConditionalMoments(law)
        live = law.masses > 0
        x = np.stack([np.broadcast_to(law.coordinate(i), law.shape)[live] for i in range(law.dim)], axis=-1)
        xp = np.stack([cm.on_grid(cm.mean_tables, i)[live] for i in range(law.dim)], axis=-1)
        w = law.masses[live]
        return Decomposition(x, x - xp, xp, w / w.sum(), law.digest(), True)
    if isinstance(law, SampleSet):
        if law.source is None and cm is None:
            raise ValueError("sample sets need a source density for the conditional means")
        cm = cm or ConditionalMoments(law.source)
        x = law.points
        xp = np.stack([cm.mean(i, x[:, :i]) for i in range(law.dim)], axis=-1)
        return Decomposition(x, x - xp, xp, law.weights / law.weights.sum(), law.digest(), False)
    raise TypeError("expected a GridDensity or a SampleSet")


def _conditional_borell(mu: GridDensity, cm: ConditionalMoments):
    """Largest centered ratio E[Y^4] / E[Y^2]^2 over the 1D conditionals of each axis."""
    out = []
    for i in range(mu.dim):
        rows, mass = mu.conditional_rows(i)
        ok = mass > 0
        u = mu.grids[i]
        w = mu.axis_weights[i]
        m = np.asarray(cm.mean_tables[i]).reshape(-1)[ok]
        d = u[None, :] - m[:, None]
        r = rows[ok] / mass[ok, None]
        m2 = (r * d ** 2) @ w
        m4 = (r * d ** 4) @ w
        good = m2 > 0
        out.append(float(np.max(m4[good] / m2[good] ** 2)) if np.any(good) else np.nan)
    return out


def check_variance_bounds(mu, a=A_WEIGHTED_POINCARE, cm: ConditionalMoments = None) -> VerificationReport:
    """``Var(|X bar|^2) <= 4a sum E[X bar_i^4]`` and the chain down to Borell's ratio.

    Checks ``E[X bar_i^4] <= 16 E[X_i^4]`` per coordinate and the chained
    bound ``Var(|X bar|^2) <= 64 a a' sum_i E[X_i^2]^2`` with a' the
    largest empirical Borell ratio of the coordinates.
    """
    if isinstance(mu, GridDensity):
        cm = cm or ConditionalMoments(mu)
    dec = decompose(mu, cm)
    n = dec.dim
    xb2 = np.sum(dec.xbar ** 2, axis=1)
    x2 = np.sum(dec.x ** 2, axis=1)
    var_xbar = dec.var(xb2)
    var_x = dec.var(x2)
    xbar4 = np.array([dec.mean(dec.xbar[:, i] ** 4) for i in range(n)])
    x4 = np.array([dec.mean(dec.x[:, i] ** 4) for i in range(n)])
    x2m = np.array([dec.mean(dec.x[:, i] ** 2) for i in range(n)])
    centred = dec.x - np.array([dec.mean(dec.x[:, i]) for i in range(n)])
    c2 = np.array([dec.mean(centred[:, i] ** 2) for i in range(n)])
    c4 = np.array([dec.mean(centred[:, i] ** 4) for i in range(n)])
    borell = np.where(c2 > 0, c4 / np.where(c2 > 0, c2, 1.0) ** 2, np.nan)
    a_prime = float(np.nanmax(np.r_[borell, 0.0]))
    # a' for the raw (uncentred) moments used in the chain
    raw_ratio = np.where(x2m > 0, x4 / np.where(x2m > 0, x2m, 1.0) ** 2, 0.0)
    a_chain = max(a_prime, float(np.max(raw_ratio)))
    chained = 64.0 * a * a_chain * float(np.sum(x2m ** 2))
    tol = 1e-9 * max(1.0, float(np.sum(x4)))
    sum_xbar4 = float(np.sum(xbar4))
    details = {
        "var_norm_sq_xbar": var_xbar,
        "var_norm_sq_x": var_x,
        "sum_E_xbar4": sum_xbar4,
        "sum_E_x4": float(np.sum(x4)),
        "E_xbar4": xbar4.tolist(),
        "E_x4": x4.tolist(),
        "borell_ratio": borell.tolist(),
        "empirical_a_prime": a_prime,
        "chained_bound": chained,
        "ratio_to_sum_x4": var_xbar / float(np.sum(x4)) if np.sum(x4) > 0 else np.nan,
    }
    if isinstance(mu, GridDensity):
        details["borell_ratio_conditional_max"] = _conditional_borell(mu, cm)
    return VerificationReport(
        inequality_id="variance_bound",
        lhs=var_xbar,
        rhs=4.0 * a * sum_xbar4,
        constant_used=4.0 * a,
        best_constant_estimate=var_xbar / sum_xbar4 if sum_xbar4 > 0 else np.nan,
        tolerance=tol,
        inputs_digest=digest_of(dec.digest, a),
        details=details,
        checks={
            "fourth_moment_chain": bool(np.all(xbar4 <= 16.0 * x4 + tol)),
            "chained_bound": bool(var_xbar <= chained + tol),
        },
    )


def variance_identity(mu, cm: ConditionalMoments = None, a_prime=None) -> VerificationReport:
    """The six-term decomposition of ``Var(|X|^2)`` through ``X = X bar + X'``.

    ``lhs`` is the absolute residual between ``Var(|X|^2)`` and the sum of
    the six terms, checked against ``1e-6 E|X|^4``.  Orthogonality
    ``E[X bar_i X'_i] = 0`` and the cross-term bound ``E[(X bar . X')^2] <=
    sum E[X_i^4]`` are side checks; the two-sided comparison constants
    between ``Var|X|^2`` and ``Var|X'|^2`` are reported.
    """
    dec = decompose(mu, cm)
    n = dec.dim
    nx = np.sum(dec.x ** 2, axis=1)
    nb = np.sum(dec.xbar ** 2, axis=1)
    npr = np.sum(dec.xprime ** 2, axis=1)
    dot = np.sum(dec.xbar * dec.xprime, axis=1)
    var_x = dec.var(nx)
    var_b = dec.var(nb)
    var_p = dec.var(npr)
    cov = dec.mean((nb - dec.mean(nb)) * (npr - dec.mean(npr)))
    terms = {
        "var_norm_sq_xbar": var_b,
        "var_norm_sq_xprime": var_p,
        "2cov": 2.0 * cov,
        "4E_dot_sq": 4.0 * dec.mean(dot ** 2),
        "4E_normbar_dot": 4.0 * dec.mean(nb * dot),
        "4E_normprime_dot": 4.0 * dec.mean(npr * dot),
    }
    total = sum(terms.values())
    residual = abs(var_x - total)
    ex4 = dec.mean(nx ** 2)
    scale2 = max(dec.mean(nx), 1e-300)
    ortho = [dec.mean(dec.xbar[:, i] * dec.xprime[:, i]) for i in range(n)]
    x4 = np.array([dec.mean(dec.x[:, i] ** 4) for i in range(n)])
    cross = dec.mean(dot ** 2)
    ortho_tol = 1e-8 * scale2 if dec.grid else 5.0 * scale2 / np.sqrt(len(dec.weights))
    if a_prime is None:
        c = dec.x - np.array([dec.mean(dec.x[:, i]) for i in range(n)])
        m2 = np.array([dec.mean(c[:, i] ** 2) for i in range(n)])
        m4 = np.array([dec.mean(c[:, i] ** 4) for i in range(n)])
        a_prime = float(np.max(m4 / m2 ** 2))
    vprime_cap = np.sqrt(var_b) + 2 * np.sqrt(a_prime * n) + np.sqrt(4 * a_prime * n + var_x)
    tol = 1e-6 * ex4
    if not dec.grid:
        # the six terms assume E[X bar . X'] = 0; a sample only meets that up
        # to the orthogonality tolerance, which shifts the sum by
        # 4 e (e + E|X bar|^2 + E|X'|^2) with |E[X bar . X']| <= e
        e = n * ortho_tol
        tol += 4.0 * e * (e + dec.mean(nb) + dec.mean(npr))
    return VerificationReport(
        inequality_id="variance_identity",
        lhs=residual,
        rhs=0.0,
        constant_used=1.0,
        best_constant_estimate=residual / ex4 if ex4 > 0 else 0.0,
        tolerance=tol,
        inputs_digest=digest_of(dec.digest),
        details={
            "var_norm_sq_x": var_x,
            "terms": terms,
            "sum_of_terms": total,
            "E_norm4": ex4,
            "orthogonality": ortho,
            "cross_term": cross,
            "sum_E_x4": float(np.sum(x4)),
            "upper_comparison_constant": var_x / (n + var_p),
            "lower_comparison_constant": var_p / (n + var_x),
            "sqrt_var_xprime": float(np.sqrt(var_p)),
            "sqrt_var_xprime_cap": float(vprime_cap),
        },
        checks={
            "orthogonality": bool(max(abs(o) for o in ortho) <= ortho_tol),
            "cross_term_bound": bool(cross <= float(np.sum(x4)) + tol),
        },
    )


def quadratic_variation_check(increment_law, tol=None) -> VerificationReport:
    """Empirical constant in ``Var([M]_k) <= c sum_{i<=k} E[Delta_i^4]``.

    Raises
    ------
    NotMartingaleIncrements
        The law fails the martingale-increment test.
    """
    from .constructions import martingale_increment_check

    res = martingale_increment_check(increment_law, tol=tol)
    if not res.passed:
        raise NotMartingaleIncrements(
            f"normalized prefix correlation {res.lhs:.3g} exceeds tolerance {res.rhs:.3g}")
    if isinstance(increment_law, GridDensity):
        live = increment_law.masses > 0
        x = np.stack([np.broadcast_to(increment_law.coordinate(i), increment_law.shape)[live]
                      for i in range(increment_law.dim)], axis=-1)
        w = increment_law.masses[live]
    else:
        x = increment_law.points
        w = increment_law.weights
    w = w / w.sum()
    n = x.shape[1]
    qv = np.cumsum(x ** 2, axis=1)
    ratios, lhs_k, rhs_k = [], [], []
    for k in range(n):
        q = qv[:, k]
        v = float(np.sum(w * (q - np.sum(w * q)) ** 2))
        s = float(np.sum(w * np.sum(x[:, : k + 1] ** 4, axis=1)))
        lhs_k.append(v)
        rhs_k.append(s)
        ratios.append(v / s if s > 0 else np.nan)
    return VerificationReport(
        inequality_id="quadratic_variation",
        lhs=lhs_k[-1],
        rhs=rhs_k[-1],
        constant_used=np.nan,
        best_constant_estimate=float(np.nanmax(ratios)) if not np.all(np.isnan(ratios)) else np.nan,
        tolerance=0.0,
        inputs_digest=increment_law.digest(),
        kind="empirical",
        details={"var_qv": lhs_k, "sum_E_increment4": rhs_k, "ratios": ratios},
    )


@dataclass
class ThinShellTable:
    """Empirical ``P(||X| - sqrt n| >= t sqrt n)`` with Wilson intervals."""

    rows: list = field(default_factory=list)
    count: int = 0

    @property
    def nonincreasing(self):
        p = [r["probability"] for r in self.rows]
        return all(b <= a for a, b in zip(p, p[1:]))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "probability", "ci_low", "ci_high", "hits", "count"])
            for r in self.rows:
                w.writerow([fmt_num(r["t"]), fmt_num(r["probability"]), fmt_num(r["ci_low"]),
                            fmt_num(r["ci_high"]), r["hits"], self.count])


def isotropy_defect(samples: SampleSet):
    """Largest deviation of the mean from 0 and of the covariance from I."""
    x = samples.points
    w = samples.weights / samples.weights.sum()
    mean = w @ x
    cov = (x * w[:, None]).T @ x
    return float(max(np.max(np.abs(mean)), np.max(np.abs(cov - np.eye(x.shape[1])))))


def thin_shell_tail(samples: SampleSet, isotropy_checked=False, t_values=(0.1, 0.2, 0.5, 1.0),
                    tol=0.02, confidence=0.95) -> ThinShellTable:
    """Thin-shell tail table; no constant is asserted.

    Raises
    ------
    NotIsotropic
        Mean or covariance off by more than ``tol`` (unless the caller has
        already checked isotropy).
    """
    if not isotropy_checked:
        d = isotropy_defect(samples)
        if d > tol:
            raise NotIsotropic(f"isotropy defect {d:.3g} exceeds {tol}")
    n = samples.dim
    r = np.linalg.norm(samples.points, axis=1)
    dev = np.abs(r - np.sqrt(n))
    table = ThinShellTable(count=samples.count)
    for t in t_values:
        hits = int(np.sum(dev >= t * np.sqrt(n)))
        ci = stats.binomtest(hits, samples.count).proportion_ci(confidence_level=confidence, method="wilson")
        table.rows.append({"t": float(t), "probability": hits / samples.count, "ci_low": float(ci.low),
                           "ci_high": float(ci.high), "hits": hits})
    return table


def report_terms_csv(report: VerificationReport, path):
    """Term table of a variance report: term name, value, tolerance, status."""
    rows = []
    d = report.details
    for k, v in d.get("terms", {}).items():
        rows.append((k, v))
    for k, v in d.items():
        if k != "terms" and np.isscalar(v) and not isinstance(v, str):
            rows.append((k, v))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["term", "value", "tolerance", "status"])
        for k, v in rows:
            w.writerow([k, fmt_num(v), fmt_num(report.tolerance), report.status])
