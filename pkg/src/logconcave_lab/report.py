"""Verification reports and their CSV / JSON emission."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

CSV_COLUMNS = (
    "inequality_id",
    "lhs",
    "rhs",
    "constant_used",
    "margin",
    "best_constant_estimate",
    "tolerance",
    "status",
    "inputs_digest",
)


@dataclass
class VerificationReport:
    """Outcome of one inequality check.

    ``rhs`` is the full right-hand side, constant included, so that
    ``margin = rhs - lhs``.  ``best_constant_estimate`` is the ratio of the
    left side to the right side taken without its constant.  Reports of kind
    ``"pinned"`` (constants fixed by the theory, or exact identities) pass
    when ``margin >= -tolerance``; ``"empirical"`` ones only record the
    ratio.  Either kind fails when one of its named ``checks`` is False.
    """

    inequality_id: str
    lhs: float
    rhs: float
    constant_used: float
    best_constant_estimate: float
    tolerance: float
    inputs_digest: str
    kind: str = "pinned"
    label: str = ""
    details: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    @property
    def margin(self):
        return float(self.rhs) - float(self.lhs)

    @property
    def status(self):
        # side conditions (named booleans) can fail a report on their own
        if not all(self.checks.values()):
            return "FAIL"
        if self.kind == "empirical":
            return "SKIP" if math.isnan(float(self.best_constant_estimate)) else "PASS"
        m = self.margin
        if math.isnan(m):
            return "SKIP"
        return "PASS" if m >= -self.tolerance else "FAIL"

    @property
    def passed(self):
        return self.status != "FAIL"

    def as_dict(self):
        return {
            "inequality_id": self.inequality_id,
            "label": self.label,
            "kind": self.kind,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "constant_used": self.constant_used,
            "margin": self.margin,
            "best_constant_estimate": self.best_constant_estimate,
            "tolerance": self.tolerance,
            "status": self.status,
            "inputs_digest": self.inputs_digest,
            "checks": self.checks,
            "details": self.details,
        }


def digest_of(*parts):
    """Short stable hash of strings / digests / numbers."""
    h = hashlib.sha256()
    for p in parts:
        h.update(repr(p).encode())
        h.update(b"\0")
    return h.hexdigest()[:16]


def fmt_num(x):
    """17-significant-digit decimal text; non-finite values spelled out."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def _json(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_json(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [f"{pad}{_json(v, indent, level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float) or hasattr(obj, "__float__") and not isinstance(obj, str):
        x = float(obj)
        return fmt_num(x) if math.isfinite(x) else json.dumps(fmt_num(x))
    return json.dumps(str(obj))


def reports_to_json(reports):
    return _json([r.as_dict() for r in reports], 2, 0) + "\n"


def reports_to_csv(reports):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        w.writerow([
            r.inequality_id if not r.label else f"{r.inequality_id}[{r.label}]",
            fmt_num(r.lhs),
            fmt_num(r.rhs),
            fmt_num(r.constant_used),
            fmt_num(r.margin),
            fmt_num(r.best_constant_estimate),
            fmt_num(r.tolerance),
            r.status,
            r.inputs_digest,
        ])
    return buf.getvalue()


def emit_report(reports, fmt, path):
    """Write reports as ``csv`` or ``json``; rows keep the given order.

    Raises
    ------
    OSError
        When the destination cannot be written.
    """
    path = Path(path)
    if fmt == "csv":
        text = reports_to_csv(reports)
    elif fmt == "json":
        text = reports_to_json(reports)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path
