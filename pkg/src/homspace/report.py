"""Small shared report structure with deterministic text/CSV rendering."""

from __future__ import annotations

import math
from dataclasses import dataclass, field


def fmt(x):
    """17-significant-digit rendering, stable across runs."""
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int,)):
        return str(x)
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    return str(x)


@dataclass
class Row:
    name: str
    kind: str                      # "exact" | "band" | "value"
    passed: bool | None = None
    value: float | None = None
    details: dict = field(default_factory=dict)


@dataclass
class SuiteReport:
    title: str
    rows: list[Row] = field(default_factory=list)

    def add(self, name, kind, passed=None, value=None, **details):
        self.rows.append(Row(name=name, kind=kind, passed=passed, value=value,
                             details=details))

    @property
    def passed(self):
        return all(r.passed is not False for r in self.rows)

    def to_text(self):
        lines = [f"# {self.title}"]
        for r in self.rows:
            status = {True: "PASS", False: "FAIL", None: "INFO"}[r.passed]
            extra = " ".join(f"{k}={fmt(v)}" for k, v in sorted(r.details.items()))
            lines.append(f"{status} [{r.kind}] {r.name}"
                         + (f" value={fmt(r.value)}" if r.value is not None else "")
                         + (f" {extra}" if extra else ""))
        lines.append(f"# overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"

    def to_csv(self):
        keys = sorted({k for r in self.rows for k in r.details})
        head = ["name", "kind", "passed", "value"] + keys
        lines = [",".join(head)]
        for r in self.rows:
            cells = [r.name, r.kind, fmt(r.passed), fmt(r.value)]
            cells += [fmt(r.details.get(k)) for k in keys]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"
