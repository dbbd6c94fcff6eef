"""Two scan-compatible in-memory storage engines.

``RowStore`` is the deliberately naive baseline: rows are Python tuples,
scans walk full rows one at a time, and the only index is a primary-key hash.
``ColumnStore`` keeps one typed segment (value vector + null bitmap) per
column and only touches the segments a scan actually needs; a per-segment
access counter makes that observable.

Both engines honour a per-table readers-writer contract (many concurrent
readers or one writer) and can spill to a single snapshot file:

    magic "ADWSNAP1" | kind byte (R/C) | schema hash (32 raw bytes)
    | table count u32 | per table:
        name (u16 len + utf-8) | row count u64 | column count u16
        | per column: name | dtype code u8 | packed null bitmap
                      | data block (fixed-width raw or length-prefixed text)

Integers, floats and bools are raw little-endian arrays; dates are int64
days-since-epoch; text and geo values are length-prefixed UTF-8 strings in
their canonical CSV rendering.
"""

from __future__ import annotations

import datetime as dt
import struct
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .like import like_match
from .schema import ConstellationSchema, GeoPoint, GeoPolygon, TableDef

_EPOCH = dt.date(1970, 1, 1)

_DTYPE_CODES = {"int64": 1, "float64": 2, "text": 3, "date": 4, "bool": 5,
                "geo-point": 6, "geo-polygon": 7}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}

_MAGIC = b"ADWSNAP1"


class StorageError(Exception):
    pass


class SnapshotError(StorageError):
    pass


@dataclass
class Relation:
    """A named, typed, ordered batch of rows (the ETL/storage exchange unit).

    ``ordinals`` optionally carries each row's 0-based position in the file
    it was extracted from, so cleansing reports can reference source rows.
    """

    table: TableDef
    rows: list[tuple]
    ordinals: list[int] | None = None

    @property
    def name(self) -> str:
        return self.table.name

    def __len__(self) -> int:
        return len(self.rows)


_PY_TYPES = {
    "int64": int,
    "float64": float,
    "text": str,
    "date": dt.date,
    "bool": bool,
    "geo-point": GeoPoint,
    "geo-polygon": GeoPolygon,
}


def check_row_types(table: TableDef, row: Sequence) -> str | None:
    """Returns a description of the first type violation, or None."""
    if len(row) != len(table.columns):
        return f"{table.name}: row has {len(row)} cells, expected {len(table.columns)}"
    for value, col in zip(row, table.columns):
        if value is None:
            if not col.nullable:
                return f"{table.name}.{col.name}: null in non-nullable column"
            continue
        expected = _PY_TYPES[col.dtype]
        if expected is int:
            if isinstance(value, bool) or not isinstance(value, int):
                return f"{table.name}.{col.name}: {value!r} is not int64"
        elif expected is float:
            if not isinstance(value, float):
                return f"{table.name}.{col.name}: {value!r} is not float64"
        elif not isinstance(value, expected):
            return f"{table.name}.{col.name}: {value!r} is not {col.dtype}"
    return None


class _RWLock:
    """Many readers or one writer; writers wait for readers to drain."""

    def __init__(self):
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False

    def acquire_read(self):
        with self._cond:
            while self._writer:
                self._cond.wait()
            self._readers += 1

    def release_read(self):
        with self._cond:
            self._readers -= 1
            if self._readers == 0:
                self._cond.notify_all()

    def acquire_write(self):
        with self._cond:
            while self._writer or self._readers:
                self._cond.wait()
            self._writer = True

    def release_write(self):
        with self._cond:
            self._writer = False
            self._cond.notify_all()


ScanCondition = tuple[str, str, object]
"""(column, op, value); op in {=, <>, <, <=, >, >=, like, in}.

Conditions are AND-ed.  Nulls never satisfy any condition.
"""


def _condition_holds(value, op: str, operand) -> bool:
    if value is None:
        return False
    if op == "=":
        return value == operand
    if op == "<>":
        return value != operand
    if op == "<":
        return value < operand
    if op == "<=":
        return value <= operand
    if op == ">":
        return value > operand
    if op == ">=":
        return value >= operand
    if op == "like":
        return like_match(value, operand)
    if op == "in":
        return value in operand
    raise StorageError(f"unknown scan operator {op!r}")


class _EngineBase:
    kind = "?"

    def __init__(self, schema: ConstellationSchema):
        self.schema = schema
        self._locks = {name: _RWLock() for name in schema.tables}

    def _table(self, name: str) -> TableDef:
        return self.schema.table(name)

    def _check_columns(self, table: TableDef, columns: Iterable[str] | None) -> list[str]:
        if columns is None:
            return table.column_names()
        out = []
        for c in columns:
            if not table.has_column(c):
                raise StorageError(f"unknown column {table.name}.{c}")
            out.append(table.column(c).name)
        return out

    def row_count(self, name: str) -> int:
        raise NotImplementedError

    def reset(self, name: str | None = None):
        raise NotImplementedError

    def insert_batch(self, rel: Relation) -> int:
        raise NotImplementedError

    def scan(self, name: str, columns: Sequence[str] | None = None,
             conditions: Sequence[ScanCondition] | None = None) -> list[tuple]:
        raise NotImplementedError

    def lookup_pk(self, name: str, key):
        raise NotImplementedError


class RowStore(_EngineBase):
    """Naive row-oriented engine: full-row scans, PK hash index only."""

    kind = "R"

    def __init__(self, schema: ConstellationSchema):
        super().__init__(schema)
        self._rows: dict[str, list[tuple]] = {t: [] for t in schema.tables}
        self._pk: dict[str, dict] = {t: {} for t in schema.tables}

    def row_count(self, name: str) -> int:
        return len(self._rows[self._table(name).name])

    def reset(self, name: str | None = None):
        names = [self._table(name).name] if name else list(self._rows)
        for n in names:
            lock = self._locks[n]
            lock.acquire_write()
            try:
                self._rows[n] = []
                self._pk[n] = {}
            finally:
                lock.release_write()

    def insert_batch(self, rel: Relation) -> int:
        table = self._table(rel.name)
        lock = self._locks[table.name]
        lock.acquire_write()
        try:
            pk_idx = table.pk_index()
            pk_map = self._pk[table.name]
            rows = self._rows[table.name]
            for row in rel.rows:
                problem = check_row_types(table, row)
                if problem:
                    raise StorageError(problem)
                key = row[pk_idx]
                if key in pk_map:
                    raise StorageError(
                        f"{table.name}: primary key collision on {key!r}")
                pk_map[key] = len(rows)
                rows.append(tuple(row))
            return len(rel.rows)
        finally:
            lock.release_write()

    def rows(self, name: str) -> list[tuple]:
        """Direct handle to the stored rows (callers must not mutate)."""
        return self._rows[self._table(name).name]

    def pk_map(self, name: str) -> dict:
        return self._pk[self._table(name).name]

    def scan(self, name: str, columns: Sequence[str] | None = None,
             conditions: Sequence[ScanCondition] | None = None) -> list[tuple]:
        table = self._table(name)
        col_names = self._check_columns(table, columns)
        idxs = [table.column_index(c) for c in col_names]
        cond = []
        for col, op, operand in conditions or ():
            cond.append((table.column_index(col), op, operand))
        lock = self._locks[table.name]
        lock.acquire_read()
        try:
            out = []
            for row in self._rows[table.name]:
                ok = True
                for ci, op, operand in cond:
                    if not _condition_holds(row[ci], op, operand):
                        ok = False
                        break
                if ok:
                    out.append(tuple(row[i] for i in idxs))
            return out
        finally:
            lock.release_read()

    def lookup_pk(self, name: str, key):
        table = self._table(name)
        pos = self._pk[table.name].get(key)
        if pos is None:
            return None
        return self._rows[table.name][pos]


@dataclass
class ColumnSegment:
    name: str
    dtype: str
    values: np.ndarray
    nulls: np.ndarray  # bool mask, True where the row is null

    def __len__(self) -> int:
        return len(self.values)

    def materialize(self, positions: np.ndarray | None = None) -> list:
        """Python values (None where null), optionally gathered by position."""
        if positions is None:
            vals = self.values
            nulls = self.nulls
        else:
            vals = self.values[positions]
            nulls = self.nulls[positions]
        out = vals.tolist()
        if nulls.any():
            for i in np.flatnonzero(nulls):
                out[i] = None
        return out


def _empty_segment(name: str, dtype: str) -> ColumnSegment:
    if dtype == "int64":
        vals = np.empty(0, dtype=np.int64)
    elif dtype == "float64":
        vals = np.empty(0, dtype=np.float64)
    elif dtype == "bool":
        vals = np.empty(0, dtype=np.bool_)
    elif dtype == "date":
        vals = np.empty(0, dtype="datetime64[D]")
    else:
        vals = np.empty(0, dtype=object)
    return ColumnSegment(name, dtype, vals, np.empty(0, dtype=np.bool_))


def _encode_column(dtype: str, cells: list) -> tuple[np.ndarray, np.ndarray]:
    nulls = np.fromiter((c is None for c in cells), dtype=np.bool_, count=len(cells))
    if dtype == "int64":
        vals = np.fromiter((0 if c is None else c for c in cells),
                           dtype=np.int64, count=len(cells))
    elif dtype == "float64":
        vals = np.fromiter((np.nan if c is None else c for c in cells),
                           dtype=np.float64, count=len(cells))
    elif dtype == "bool":
        vals = np.fromiter((False if c is None else c for c in cells),
                           dtype=np.bool_, count=len(cells))
    elif dtype == "date":
        days = np.fromiter(
            (0 if c is None else (c - _EPOCH).days for c in cells),
            dtype=np.int64, count=len(cells))
        vals = days.view("datetime64[D]")
    else:
        vals = np.empty(len(cells), dtype=object)
        vals[:] = cells
    return vals, nulls


class ColumnStore(_EngineBase):
    """Columnar engine; scans touch only requested/predicated segments."""

    kind = "C"

    def __init__(self, schema: ConstellationSchema):
        super().__init__(schema)
        self._segments: dict[str, dict[str, ColumnSegment]] = {
            t.name: {c.name: _empty_segment(c.name, c.dtype) for c in t.columns}
            for t in schema.tables.values()
        }
        self._counts: dict[str, int] = {t: 0 for t in schema.tables}
        self._pk: dict[str, dict] = {t: {} for t in schema.tables}
        self.segment_reads: dict[tuple[str, str], int] = {}

    def row_count(self, name: str) -> int:
        return self._counts[self._table(name).name]

    def reset(self, name: str | None = None):
        names = [self._table(name).name] if name else list(self._segments)
        for n in names:
            lock = self._locks[n]
            lock.acquire_write()
            try:
                t = self._table(n)
                self._segments[n] = {
                    c.name: _empty_segment(c.name, c.dtype) for c in t.columns}
                self._counts[n] = 0
                self._pk[n] = {}
            finally:
                lock.release_write()

    def insert_batch(self, rel: Relation) -> int:
        table = self._table(rel.name)
        lock = self._locks[table.name]
        lock.acquire_write()
        try:
            for row in rel.rows:
                problem = check_row_types(table, row)
                if problem:
                    raise StorageError(problem)
            pk_idx = table.pk_index()
            pk_map = self._pk[table.name]
            base = self._counts[table.name]
            for i, row in enumerate(rel.rows):
                key = row[pk_idx]
                if key in pk_map:
                    raise StorageError(
                        f"{table.name}: primary key collision on {key!r}")
                pk_map[key] = base + i
            if rel.rows:
                segs = self._segments[table.name]
                for ci, col in enumerate(table.columns):
                    cells = [row[ci] for row in rel.rows]
                    vals, nulls = _encode_column(col.dtype, cells)
                    seg = segs[col.name]
                    if len(seg) == 0:
                        segs[col.name] = ColumnSegment(col.name, col.dtype, vals, nulls)
                    else:
                        segs[col.name] = ColumnSegment(
                            col.name, col.dtype,
                            np.concatenate([seg.values, vals]),
                            np.concatenate([seg.nulls, nulls]))
                self._counts[table.name] = base + len(rel.rows)
            return len(rel.rows)
        finally:
            lock.release_write()

    def segment(self, name: str, column: str) -> ColumnSegment:
        """Access one column segment (counted, used by the ROLAP executor)."""
        table = self._table(name)
        col = table.column(column)
        key = (table.name, col.name)
        self.segment_reads[key] = self.segment_reads.get(key, 0) + 1
        return self._segments[table.name][col.name]

    def pk_map(self, name: str) -> dict:
        return self._pk[self._table(name).name]

    def scan(self, name: str, columns: Sequence[str] | None = None,
             conditions: Sequence[ScanCondition] | None = None) -> list[tuple]:
        table = self._table(name)
        col_names = self._check_columns(table, columns)
        lock = self._locks[table.name]
        lock.acquire_read()
        try:
            n = self._counts[table.name]
            mask = np.ones(n, dtype=np.bool_)
            for col, op, operand in conditions or ():
                seg = self.segment(table.name, col)
                mask &= _vector_condition(seg, op, operand)
            positions = np.flatnonzero(mask)
            cols = [self.segment(table.name, c).materialize(positions)
                    for c in col_names]
            return list(zip(*cols)) if cols else []
        finally:
            lock.release_read()

    def lookup_pk(self, name: str, key):
        table = self._table(name)
        pos = self._pk[table.name].get(key)
        if pos is None:
            return None
        segs = self._segments[table.name]
        row = []
        for col in table.columns:
            seg = segs[col.name]
            row.append(None if seg.nulls[pos] else seg.values[pos:pos + 1].tolist()[0])
        return tuple(row)


def _vector_condition(seg: ColumnSegment, op: str, operand) -> np.ndarray:
    """Vectorized condition over one segment; null rows never qualify."""
    n = len(seg)
    if op in ("like", "in") or seg.dtype in ("text", "geo-point", "geo-polygon"):
        if op == "like":
            fn: Callable = lambda v: like_match(v, operand)
        elif op == "in":
            fn = lambda v: v is not None and v in operand
        else:
            fn = lambda v: v is not None and _condition_holds(v, op, operand)
        vals = seg.values
        nulls = seg.nulls
        return np.fromiter(
            (not nulls[i] and fn(vals[i]) for i in range(n)),
            dtype=np.bool_, count=n)
    if seg.dtype == "date" and isinstance(operand, dt.date):
        operand = np.datetime64(operand, "D")
    vals = seg.values
    if op == "=":
        out = vals == operand
    elif op == "<>":
        out = vals != operand
    elif op == "<":
        out = vals < operand
    elif op == "<=":
        out = vals <= operand
    elif op == ">":
        out = vals > operand
    elif op == ">=":
        out = vals >= operand
    else:
        raise StorageError(f"unknown scan operator {op!r}")
    return out & ~seg.nulls


# ---------------------------------------------------------------------------
# Snapshots
# ---------------------------------------------------------------------------

def _write_str(fh, s: str):
    raw = s.encode("utf-8")
    fh.write(struct.pack("<H", len(raw)))
    fh.write(raw)


def _read_str(fh) -> str:
    (n,) = struct.unpack("<H", fh.read(2))
    return fh.read(n).decode("utf-8")


def _column_cells(engine: _EngineBase, name: str, col: str) -> list:
    if isinstance(engine, ColumnStore):
        return engine._segments[name][col].materialize()
    table = engine.schema.table(name)
    idx = table.column_index(col)
    return [row[idx] for row in engine.rows(name)]


def save_snapshot(engine: RowStore | ColumnStore, path: str | Path):
    """Spill the engine's full logical content to a single snapshot file."""
    schema = engine.schema
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(engine.kind.encode("ascii"))
        fh.write(bytes.fromhex(schema.content_hash()))
        fh.write(struct.pack("<I", len(schema.tables)))
        for name, table in schema.tables.items():
            _write_str(fh, name)
            fh.write(struct.pack("<Q", engine.row_count(name)))
            fh.write(struct.pack("<H", len(table.columns)))
            for col in table.columns:
                cells = _column_cells(engine, name, col.name)
                _write_str(fh, col.name)
                fh.write(struct.pack("<B", _DTYPE_CODES[col.dtype]))
                nulls = np.fromiter((c is None for c in cells), dtype=np.bool_,
                                    count=len(cells))
                packed = np.packbits(nulls).tobytes()
                fh.write(struct.pack("<I", len(packed)))
                fh.write(packed)
                _write_data_block(fh, col.dtype, cells)


def _write_data_block(fh, dtype: str, cells: list):
    if dtype in ("int64", "float64", "bool", "date"):
        if dtype == "int64":
            arr = np.fromiter((0 if c is None else c for c in cells),
                              dtype="<i8", count=len(cells))
        elif dtype == "float64":
            arr = np.fromiter((0.0 if c is None else c for c in cells),
                              dtype="<f8", count=len(cells))
        elif dtype == "bool":
            arr = np.fromiter((bool(c) for c in cells), dtype=np.bool_,
                              count=len(cells))
        else:
            arr = np.fromiter((0 if c is None else (c - _EPOCH).days for c in cells),
                              dtype="<i8", count=len(cells))
        raw = arr.tobytes()
        fh.write(struct.pack("<Q", len(raw)))
        fh.write(raw)
    else:
        chunks = []
        for c in cells:
            raw = b"" if c is None else str(c).encode("utf-8")
            chunks.append(struct.pack("<I", len(raw)))
            chunks.append(raw)
        raw = b"".join(chunks)
        fh.write(struct.pack("<Q", len(raw)))
        fh.write(raw)


def _read_data_block(fh, dtype: str, count: int, nulls: np.ndarray) -> list:
    (nbytes,) = struct.unpack("<Q", fh.read(8))
    raw = fh.read(nbytes)
    if dtype in ("int64", "float64", "bool", "date"):
        if dtype == "int64":
            cells = np.frombuffer(raw, dtype="<i8").tolist()
        elif dtype == "float64":
            cells = np.frombuffer(raw, dtype="<f8").tolist()
        elif dtype == "bool":
            cells = np.frombuffer(raw, dtype=np.bool_).tolist()
        else:
            days = np.frombuffer(raw, dtype="<i8")
            cells = days.view("datetime64[D]").tolist()
    else:
        cells = []
        pos = 0
        for _ in range(count):
            (n,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            text = raw[pos:pos + n].decode("utf-8")
            pos += n
            if dtype == "geo-point":
                cells.append(GeoPoint.parse(text) if text else None)
            elif dtype == "geo-polygon":
                cells.append(GeoPolygon.parse(text) if text else None)
            else:
                cells.append(text)
    return [None if nulls[i] else cells[i] for i in range(count)]


def load_snapshot(schema: ConstellationSchema, path: str | Path,
                  engine_cls=None) -> RowStore | ColumnStore:
    """Rebuild an engine from a snapshot; engine_cls overrides the stored kind."""
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise SnapshotError(f"{path}: not a snapshot file (bad magic)")
        kind = fh.read(1).decode("ascii")
        stored_hash = fh.read(32).hex()
        if stored_hash != schema.content_hash():
            raise SnapshotError(f"{path}: snapshot schema hash does not match catalog")
        if engine_cls is None:
            engine_cls = RowStore if kind == "R" else ColumnStore
        engine = engine_cls(schema)
        (ntables,) = struct.unpack("<I", fh.read(4))
        for _ in range(ntables):
            name = _read_str(fh)
            (nrows,) = struct.unpack("<Q", fh.read(8))
            table = schema.table(name)
            (ncols,) = struct.unpack("<H", fh.read(2))
            if ncols != len(table.columns):
                raise SnapshotError(f"{path}: column count mismatch for {name}")
            columns = {}
            for _ in range(ncols):
                col_name = _read_str(fh)
                (code,) = struct.unpack("<B", fh.read(1))
                dtype = _CODE_DTYPES[code]
                (packed_len,) = struct.unpack("<I", fh.read(4))
                packed = np.frombuffer(fh.read(packed_len), dtype=np.uint8)
                nulls = np.unpackbits(packed, count=nrows).astype(np.bool_) \
                    if nrows else np.empty(0, dtype=np.bool_)
                columns[col_name] = _read_data_block(fh, dtype, nrows, nulls)
            rows = [tuple(columns[c.name][i] for c in table.columns)
                    for i in range(nrows)]
            if rows:
                engine.insert_batch(Relation(table, rows))
        return engine
