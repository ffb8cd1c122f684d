"""Plain tables rendered as aligned text, CSV or JSON."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

FORMATS = ("table", "csv", "json")


def fmt_number(value: Any, digits: int = 6) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return f"{value:.{digits}g}"
    return str(value)


def _json_value(value: Any, digits: int):
    if isinstance(value, float) and math.isfinite(value):
        return float(f"{value:.{digits}g}")
    if isinstance(value, float):
        return fmt_number(value)
    return value


@dataclass
class Table:
    title: str
    columns: Sequence[str]
    rows: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def add(self, *values) -> None:
        if len(values) != len(self.columns):
            raise ValueError(f"row has {len(values)} values, table {self.title!r} has {len(self.columns)} columns")
        self.rows.append(tuple(values))

    def render(self, fmt: str = "table", digits: int = 6) -> str:
        if fmt == "csv":
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(self.columns)
            for r in self.rows:
                w.writerow([fmt_number(v, digits) for v in r])
            return buf.getvalue()
        if fmt == "json":
            doc = {
                "title": self.title,
                "columns": list(self.columns),
                "rows": [{c: _json_value(v, digits) for c, v in zip(self.columns, r)} for r in self.rows],
            }
            if self.notes:
                doc["notes"] = list(self.notes)
            return json.dumps(doc, indent=2) + "\n"
        if fmt != "table":
            raise ValueError(f"unknown format {fmt!r}")
        cells = [list(self.columns)] + [[fmt_number(v, digits) for v in r] for r in self.rows]
        widths = [max(len(row[i]) for row in cells) for i in range(len(self.columns))]
        lines = [self.title, "=" * len(self.title)]
        for j, row in enumerate(cells):
            lines.append("  ".join(c.rjust(w) if j else c.ljust(w) for c, w in zip(row, widths)).rstrip())
            if j == 0:
                lines.append("  ".join("-" * w for w in widths))
        lines.extend(self.notes)
        return "\n".join(lines) + "\n"


def render_all(tables: Sequence[Table], fmt: str = "table", digits: int = 6) -> str:
    if fmt == "json" and len(tables) > 1:
        docs = [json.loads(t.render("json", digits)) for t in tables]
        return json.dumps(docs, indent=2) + "\n"
    sep = "\n" if fmt == "table" else ""
    return sep.join(t.render(fmt, digits) for t in tables)
