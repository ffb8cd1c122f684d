"""CSV ingestion of traffic statistics and field-test event logs.

Traffic statistics: header ``M_km_per_year,A_events_per_year,source``.
Event logs: header ``distance_km,event`` with an optional ``pm_value`` column;
distances are cumulative and strictly increasing, ``event`` is 0 or 1.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

from .core import EventLog, TrafficStatistic
from .errors import IngestionError, ValidationError

TRAFFIC_COLUMNS = ("M_km_per_year", "A_events_per_year", "source")
LOG_COLUMNS = ("distance_km", "event")
PM_COLUMN = "pm_value"


def _read(path) -> tuple[list[str], list[tuple[int, list[str]]]]:
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IngestionError(f"{path}: cannot open ({exc.strerror})") from None
    with fh:
        reader = csv.reader(fh)
        header = None
        rows = []
        for rec in reader:
            if not rec or all(not c.strip() for c in rec):
                continue
            if header is None:
                header = [c.strip() for c in rec]
            else:
                rows.append((reader.line_num, [c.strip() for c in rec]))
    if header is None:
        raise IngestionError(f"{path}: file is empty")
    return header, rows


def _number(path, line: int, column: str, text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise IngestionError(f"{path}:{line}: column {column!r} is not a number: {text!r}") from None
    if not math.isfinite(value):
        raise IngestionError(f"{path}:{line}: column {column!r} must be finite, got {text!r}")
    return value


def ingest_traffic_csv(path) -> TrafficStatistic:
    """Worst-case traffic statistic from one or more published rows.

    With several rows the largest M and the smallest A are combined, each
    traced back to its row in the provenance string.
    """
    header, rows = _read(path)
    missing = [c for c in TRAFFIC_COLUMNS if c not in header]
    if missing:
        raise IngestionError(f"{path}:1: missing column(s) {', '.join(missing)}; expected header {','.join(TRAFFIC_COLUMNS)}")
    if not rows:
        raise IngestionError(f"{path}: no data rows")
    idx = {c: header.index(c) for c in TRAFFIC_COLUMNS}
    parsed = []
    for line, rec in rows:
        if len(rec) != len(header):
            raise IngestionError(
                f"{path}:{line}: expected {len(header)} fields, got {len(rec)} (no thousands separators)"
            )
        m = _number(path, line, "M_km_per_year", rec[idx["M_km_per_year"]])
        a = _number(path, line, "A_events_per_year", rec[idx["A_events_per_year"]])
        for col, v in (("M_km_per_year", m), ("A_events_per_year", a)):
            if v <= 0:
                raise IngestionError(f"{path}:{line}: column {col!r} must be > 0, got {v!r}")
        parsed.append((line, m, a, rec[idx["source"]]))
    m_line, m, _, m_src = max(parsed, key=lambda r: (r[1], -r[0]))
    a_line, _, a, a_src = min(parsed, key=lambda r: (r[2], r[0]))
    if m_line == a_line:
        source = f"{path}:{m_line} ({m_src})"
    else:
        source = f"{path}: M from line {m_line} ({m_src}), A from line {a_line} ({a_src})"
    try:
        return TrafficStatistic(m, a, source)
    except ValidationError as exc:
        raise IngestionError(f"{path}: {exc}") from None


def ingest_event_log_csv(path) -> EventLog:
    header, rows = _read(path)
    if tuple(header[:2]) != LOG_COLUMNS or (len(header) == 3 and header[2] != PM_COLUMN) or len(header) > 3:
        raise IngestionError(
            f"{path}:1: header must be 'distance_km,event' or 'distance_km,event,pm_value', got {','.join(header)!r}"
        )
    if not rows:
        raise IngestionError(f"{path}: no data rows")
    has_pm = len(header) == 3
    events, pm = [], []
    prev = None
    for line, rec in rows:
        if len(rec) < 2 or len(rec) > len(header):
            raise IngestionError(f"{path}:{line}: expected {len(header)} fields, got {len(rec)}")
        d = _number(path, line, "distance_km", rec[0])
        if d < 0:
            raise IngestionError(f"{path}:{line}: distance must be >= 0, got {d!r}")
        if prev is not None and d <= prev:
            raise IngestionError(f"{path}:{line}: distance {d!r} does not increase (previous {prev!r})")
        prev = d
        flag = rec[1]
        if flag not in ("0", "1"):
            raise IngestionError(f"{path}:{line}: column 'event' must be 0 or 1, got {flag!r}")
        if flag == "1":
            events.append(d)
        if has_pm and len(rec) == 3 and rec[2] != "":
            pm.append((d, _number(path, line, PM_COLUMN, rec[2])))
    try:
        return EventLog(prev, events, pm if has_pm else None)
    except ValidationError as exc:
        raise IngestionError(f"{path}: {exc}") from None
