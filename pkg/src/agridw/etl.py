"""Extract / cleanse / transform / load pipeline.

Raw CSVs are staged untyped, pushed through four cleansing checks
(duplicate, missing, inconsistent, wrong), typed against the catalog,
enriched with derived columns, and loaded into both storage engines.
All defective rows are rejected (never corrected) in this version; the
report keeps a rejected/corrected split so a correcting cleanser can be
added without changing the report format.

Cleansing semantics:

* duplicate     -- all cells identical to an earlier row (first one wins),
                   or a repeated primary key with differing cells
* missing       -- empty cell in a non-nullable column
* inconsistent  -- untypeable cell, negative value in a quantity column,
                   or a date outside the accepted warehouse window
* wrong         -- foreign key referencing no surviving row; checked in a
                   whole-dataset pass (iterated to a fixpoint) after all
                   tables are typed
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .datagen import DEFECT_CLASSES
from .schema import (
    ConstellationSchema,
    GeoPoint,
    GeoPolygon,
    TableDef,
    VALID_DATE_MAX,
    VALID_DATE_MIN,
    is_non_negative_column,
)
from .storage import Relation, StorageError


class EtlError(Exception):
    pass


class ExtractError(EtlError):
    pass


class LoadError(EtlError):
    pass


@dataclass
class StagingBatch:
    """Untyped rows for one table, straight from the source file."""

    table: str
    header: list[str]
    rows: list[list[str]]
    source: str
    ordinals: list[int]  # 0-based data-row index in the source file


@dataclass
class ClassReport:
    detected: int = 0
    rejected: int = 0
    corrected: int = 0
    ordinals: list[int] = field(default_factory=list)

    def add_rejected(self, ordinal: int):
        self.detected += 1
        self.rejected += 1
        self.ordinals.append(ordinal)


@dataclass
class CleansingReport:
    """Per-table, per-class cleansing outcome; merges deterministically."""

    tables: dict[str, dict[str, ClassReport]] = field(default_factory=dict)

    def table(self, name: str) -> dict[str, ClassReport]:
        if name not in self.tables:
            self.tables[name] = {c: ClassReport() for c in DEFECT_CLASSES}
        return self.tables[name]

    def detected(self, table: str, defect_class: str) -> int:
        return self.tables.get(table, {}).get(defect_class, ClassReport()).detected

    def total_rejected(self, table: str) -> int:
        return sum(r.rejected for r in self.tables.get(table, {}).values())

    def merge(self, other: "CleansingReport") -> "CleansingReport":
        merged = CleansingReport()
        for name in sorted(set(self.tables) | set(other.tables)):
            target = merged.table(name)
            for src in (self, other):
                for cls, rep in src.tables.get(name, {}).items():
                    target[cls].detected += rep.detected
                    target[cls].rejected += rep.rejected
                    target[cls].corrected += rep.corrected
                    target[cls].ordinals.extend(rep.ordinals)
            for cls in DEFECT_CLASSES:
                target[cls].ordinals.sort()
        return merged

    def to_json(self) -> str:
        payload = {
            name: {
                cls: {
                    "detected": rep.detected,
                    "rejected": rep.rejected,
                    "corrected": rep.corrected,
                    "ordinals": sorted(rep.ordinals),
                }
                for cls, rep in classes.items()
            }
            for name, classes in sorted(self.tables.items())
        }
        return json.dumps({"cleansing": payload}, indent=2)


def extract(source: str | Path | dict[str, Path],
            schema: ConstellationSchema) -> list[StagingBatch]:
    """Read one CSV per catalog table into untyped staging batches.

    ``source`` is either a directory containing ``<Table>.csv`` files or an
    explicit table->path mapping.  Headers may be in any order but must
    exactly cover the catalog columns.
    """
    if isinstance(source, (str, Path)):
        base = Path(source)
        files = {name: base / f"{name}.csv" for name in schema.tables}
    else:
        files = {name: Path(p) for name, p in source.items()}

    batches = []
    for name in sorted(schema.tables):
        table = schema.table(name)
        path = files.get(name)
        if path is None or not path.exists():
            raise ExtractError(f"missing source file for table {name}: {path}")
        with open(path, "r", newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ExtractError(f"{path}: empty file (no header row)") from None
            known = {c.name.lower(): c.name for c in table.columns}
            seen = set()
            for col in header:
                if col.lower() not in known:
                    raise ExtractError(f"{path}: unknown column {col!r}")
                if col.lower() in seen:
                    raise ExtractError(f"{path}: duplicate column {col!r}")
                seen.add(col.lower())
            if len(seen) != len(table.columns):
                missing = sorted(set(known) - seen)
                raise ExtractError(f"{path}: header missing columns {missing}")
            rows = []
            ordinals = []
            for i, cells in enumerate(reader):
                if len(cells) != len(header):
                    raise ExtractError(
                        f"{path}: line {i + 2}: expected {len(header)} cells, "
                        f"got {len(cells)}")
                rows.append(cells)
                ordinals.append(i)
        batches.append(StagingBatch(name, header, rows, str(path), ordinals))
    return batches


def _parse_cell(text: str, dtype: str):
    """Typed value for a raw cell; raises ValueError when untypeable."""
    if dtype == "int64":
        return int(text)
    if dtype == "float64":
        value = float(text)
        if not math.isfinite(value):
            raise ValueError(f"non-finite number {text!r}")
        return value
    if dtype == "date":
        return dt.date.fromisoformat(text)
    if dtype == "bool":
        low = text.lower()
        if low == "true":
            return True
        if low == "false":
            return False
        raise ValueError(f"not a bool: {text!r}")
    if dtype == "geo-point":
        return GeoPoint.parse(text)
    if dtype == "geo-polygon":
        poly = GeoPolygon.parse(text)
        if not poly.points:
            raise ValueError("empty polygon")
        return poly
    return text


def cleanse(batch: StagingBatch, schema: ConstellationSchema
            ) -> tuple[Relation, CleansingReport]:
    """Type one staging batch, rejecting duplicate/missing/inconsistent rows.

    Dangling foreign keys (the "wrong" class) are a cross-table property and
    are handled afterwards by resolve_foreign_keys.
    """
    table = schema.table(batch.table)
    report = CleansingReport()
    classes = report.table(table.name)

    order = [table.column_index(h) for h in batch.header]
    ncols = len(table.columns)
    pk_idx = table.pk_index()

    seen_rows: set[tuple] = set()
    seen_pks: set = set()
    typed_rows: list[tuple] = []
    kept_ordinals: list[int] = []

    for ordinal, cells in zip(batch.ordinals, batch.rows):
        raw = [None] * ncols
        for src, dst in enumerate(order):
            raw[dst] = cells[src]
        key = tuple(raw)
        if key in seen_rows:
            classes["duplicate"].add_rejected(ordinal)
            continue
        seen_rows.add(key)

        problem = None
        typed = [None] * ncols
        for i, col in enumerate(table.columns):
            text = raw[i]
            if text == "":
                if not col.nullable:
                    problem = "missing"
                    break
                continue
            try:
                value = _parse_cell(text, col.dtype)
            except (ValueError, TypeError):
                problem = "inconsistent"
                break
            if col.dtype == "date" and not (VALID_DATE_MIN <= value <= VALID_DATE_MAX):
                problem = "inconsistent"
                break
            if value is not None and isinstance(value, (int, float)) \
                    and not isinstance(value, bool) \
                    and value < 0 and is_non_negative_column(table, col):
                problem = "inconsistent"
                break
            typed[i] = value

        if problem is None and typed[pk_idx] in seen_pks:
            # repeated key with differing cells: unusable record
            problem = "inconsistent"
        if problem is not None:
            classes[problem].add_rejected(ordinal)
            continue
        seen_pks.add(typed[pk_idx])
        typed_rows.append(tuple(typed))
        kept_ordinals.append(ordinal)

    return Relation(table, typed_rows, kept_ordinals), report


def resolve_foreign_keys(relations: dict[str, Relation],
                         schema: ConstellationSchema,
                         report: CleansingReport) -> dict[str, Relation]:
    """Reject rows whose foreign keys reference no surviving row.

    Iterates to a fixpoint: rejecting a referenced row may orphan rows that
    were clean on the previous pass.
    """
    surviving = dict(relations)
    while True:
        pk_sets = {
            name: {row[rel.table.pk_index()] for row in rel.rows}
            for name, rel in surviving.items()
        }
        changed = False
        for name in sorted(surviving):
            rel = surviving[name]
            if not rel.table.foreign_keys:
                continue
            fk_checks = []
            for fk in rel.table.foreign_keys:
                if not schema.has_table(fk.ref_table):
                    raise EtlError(f"{name}: foreign key target {fk.ref_table} unknown")
                fk_checks.append((rel.table.column_index(fk.column),
                                  pk_sets.get(schema.table(fk.ref_table).name, set())))
            kept = []
            kept_ordinals = []
            ordinals = rel.ordinals or list(range(len(rel.rows)))
            for pos, row in enumerate(rel.rows):
                ok = True
                for idx, keys in fk_checks:
                    value = row[idx]
                    if value is not None and value not in keys:
                        ok = False
                        break
                if ok:
                    kept.append(row)
                    kept_ordinals.append(ordinals[pos])
                else:
                    report.table(name)["wrong"].add_rejected(ordinals[pos])
                    changed = True
            if len(kept) != len(rel.rows):
                surviving[name] = Relation(rel.table, kept, kept_ordinals)
        if not changed:
            return surviving


_SEASON_BY_MONTH = {12: "Winter", 1: "Winter", 2: "Winter",
                    3: "Spring", 4: "Spring", 5: "Spring",
                    6: "Summer", 7: "Summer", 8: "Summer",
                    9: "Autumn", 10: "Autumn", 11: "Autumn"}

# (table, derived column, source date column) populated during transform
_DERIVED_SEASONS = (("OperationTime", "Season", "StartDate"),
                    ("TransTime", "Season", "OrderDate"))
_DERIVED_YEARS = (("Nutrient", "Year", "Date"),)


def season_of(date: dt.date) -> str:
    return _SEASON_BY_MONTH[date.month]


def transform(relations: dict[str, Relation],
              schema: ConstellationSchema) -> dict[str, Relation]:
    """Populate derived columns; idempotent on already-transformed input.

    Dates and surrogate keys are already normalised by the typed cleanse
    (ISO dates become date objects, numeric key text becomes int64), so the
    remaining work is the derived Season and Year columns.
    """
    out = dict(relations)
    for table_name, derived_col, source_col in _DERIVED_SEASONS + _DERIVED_YEARS:
        rel = out.get(table_name)
        if rel is None or not rel.table.has_column(derived_col):
            continue
        d_idx = rel.table.column_index(derived_col)
        s_idx = rel.table.column_index(source_col)
        is_year = derived_col.lower() == "year"
        rows = []
        for row in rel.rows:
            source = row[s_idx]
            if source is None:
                value = None
            elif is_year:
                value = source.year
            else:
                value = season_of(source)
            if row[d_idx] != value:
                row = row[:d_idx] + (value,) + row[d_idx + 1:]
            rows.append(row)
        out[table_name] = Relation(rel.table, rows, rel.ordinals)
    return out


def load(relations: dict[str, Relation], targets: list) -> dict[str, dict[str, int]]:
    """Insert every relation into every target engine.

    Returns {table: {engine kind: rows}}.  Refuses to double-load: target
    tables must be empty (use engine.reset() first to reload).
    """
    summary: dict[str, dict[str, int]] = {}
    for name in sorted(relations):
        rel = relations[name]
        summary[name] = {}
        for engine in targets:
            if engine.row_count(name) != 0:
                raise LoadError(f"table not empty: {name} in {type(engine).__name__}")
            try:
                count = engine.insert_batch(rel)
            except StorageError as exc:
                raise LoadError(str(exc)) from exc
            summary[name][engine.kind] = count
    return summary


def run_pipeline(source: str | Path | dict[str, Path],
                 schema: ConstellationSchema,
                 targets: list,
                 ) -> tuple[dict[str, Relation], CleansingReport, dict]:
    """extract -> cleanse -> foreign-key pass -> transform -> load."""
    batches = extract(source, schema)
    relations: dict[str, Relation] = {}
    report = CleansingReport()
    for batch in batches:
        rel, batch_report = cleanse(batch, schema)
        relations[rel.name] = rel
        report = report.merge(batch_report)
    relations = resolve_foreign_keys(relations, schema, report)
    relations = transform(relations, schema)
    summary = load(relations, targets) if targets else {}
    return relations, report, summary
