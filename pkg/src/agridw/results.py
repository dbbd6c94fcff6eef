"""Query result container, deterministic ordering, and renderers."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import datetime as dt

from .schema import GeoPoint, GeoPolygon


@dataclass
class ResultTable:
    headers: list[str]
    rows: list[tuple]
    ordered: bool = False
    # (output column index, descending) pairs, set when the query had ORDER BY
    order_spec: list[tuple[int, bool]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)


def _canonical_cell(value):
    if value is None:
        return (0, "")
    if isinstance(value, bool):
        return (1, int(value))
    if isinstance(value, (int, float)):
        return (2, value)
    if isinstance(value, dt.date):
        return (3, value.toordinal())
    if isinstance(value, str):
        return (4, value)
    return (5, str(value))


def canonical_sort(rows: list[tuple]) -> list[tuple]:
    """Total deterministic order over result rows (None first, geo by text)."""
    return sorted(rows, key=lambda r: tuple(_canonical_cell(v) for v in r))


def apply_order_and_limit(rows: list[tuple], order_spec: list[tuple[int, bool]],
                          limit: int | None) -> list[tuple]:
    """Deterministic ORDER BY + LIMIT.

    Rows are first put in a canonical full-row order so that ties under the
    declared keys (and the LIMIT cut) resolve identically on every engine,
    then stably sorted by the declared keys from last to first.  Nulls sort
    first ascending, last descending.
    """
    out = canonical_sort(rows)
    for idx, desc in reversed(order_spec):
        out.sort(key=lambda r: (0,) if r[idx] is None else (1, r[idx]),
                 reverse=desc)
    if limit is not None:
        out = out[:limit]
    return out


def union_distinct(parts: list[list[tuple]]) -> list[tuple]:
    """Set union of row multisets, keeping first-appearance order."""
    seen: dict[tuple, None] = {}
    for rows in parts:
        for row in rows:
            seen.setdefault(row, None)
    return list(seen)


def format_value(value) -> str:
    if value is None:
        return "NULL"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, dt.date):
        return value.isoformat()
    return str(value)


def render_text(result: ResultTable) -> str:
    """Aligned text table."""
    cells = [[format_value(v) for v in row] for row in result.rows]
    widths = [len(h) for h in result.headers]
    for row in cells:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = [
        " | ".join(h.ljust(w) for h, w in zip(result.headers, widths)).rstrip(),
        "-+-".join("-" * w for w in widths),
    ]
    for row in cells:
        lines.append(" | ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    lines.append(f"({len(result.rows)} row{'s' if len(result.rows) != 1 else ''})")
    return "\n".join(lines)


def render_csv(result: ResultTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(result.headers)
    for row in result.rows:
        writer.writerow(["" if v is None else format_value(v) for v in row])
    return buf.getvalue()


def render_json(result: ResultTable) -> str:
    def enc(v):
        if isinstance(v, dt.date):
            return v.isoformat()
        if isinstance(v, (GeoPoint, GeoPolygon)):
            return str(v)
        return v

    return json.dumps({
        "headers": result.headers,
        "ordered": result.ordered,
        "rows": [[enc(v) for v in row] for row in result.rows],
    }, indent=2)


# ---------------------------------------------------------------------------
# Comparison helpers (differential testing and acceptance checks)
# ---------------------------------------------------------------------------

def _close(a, b, rel=1e-9) -> bool:
    if a is None or b is None:
        return a is b
    if isinstance(a, float) or isinstance(b, float):
        if isinstance(a, (int, float)) and isinstance(b, (int, float)):
            return math.isclose(a, b, rel_tol=rel, abs_tol=1e-12)
        return False
    return a == b


def _rows_close(a: tuple, b: tuple, rel=1e-9) -> bool:
    return len(a) == len(b) and all(_close(x, y, rel) for x, y in zip(a, b))


def multisets_equal(left: list[tuple], right: list[tuple], rel=1e-9) -> bool:
    """Exact multiset equality, falling back to per-row float tolerance."""
    if len(left) != len(right):
        return False
    from collections import Counter
    if Counter(left) == Counter(right):
        return True
    ls, rs = canonical_sort(left), canonical_sort(right)
    return all(_rows_close(a, b, rel) for a, b in zip(ls, rs))


def _order_key_groups(rows: list[tuple], order_spec) -> list[list[tuple]]:
    groups: list[list[tuple]] = []
    prev = object()
    for row in rows:
        key = tuple(row[i] for i, _ in order_spec)
        if key != prev:
            groups.append([])
            prev = key
        groups[-1].append(row)
    return groups


def results_equivalent(expected: ResultTable, actual: ResultTable,
                       rel=1e-9) -> bool:
    """Multiset equality; for ordered results, sequence equality up to
    reordering within equal-order-key tie groups."""
    if expected.headers != actual.headers:
        return False
    if not multisets_equal(expected.rows, actual.rows, rel):
        return False
    if expected.ordered and expected.order_spec:
        ga = _order_key_groups(expected.rows, expected.order_spec)
        gb = _order_key_groups(actual.rows, expected.order_spec)
        if len(ga) != len(gb):
            return False
        return all(multisets_equal(a, b, rel) for a, b in zip(ga, gb))
    return True
