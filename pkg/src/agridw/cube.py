"""MOLAP engine: materialized data cubes with roll-up, drill-down, slice,
dice, and pivot.

Cubes are sparse hash maps from dimension-coordinate tuples to measure
vectors (agronomy dimensions are far too sparse for array storage).  Each
dimension follows a hierarchy whose levels are either derived from the
finer value (date -> month -> year) or read from another column of the same
dimension row (field -> site); every hierarchy implicitly ends in a single
'ALL' member.  Functional dependency between adjacent levels is verified
during the build, and the value mappings observed there are retained so
roll-ups never have to touch the base data again.  Null dimension values
map to the 'UNKNOWN' member, keeping conservation totals over all rows.
Float measures accumulate through math.fsum, so cell sums are exactly
rounded regardless of row order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

from .results import _canonical_cell
from .schema import ConstellationSchema

ALL_LEVEL = "ALL"
ALL_MEMBER = "ALL"
UNKNOWN = "UNKNOWN"


class CubeError(Exception):
    pass


@dataclass(frozen=True)
class Level:
    """One hierarchy level above the base.

    ``column`` levels read another column of the same dimension row;
    ``mapper`` levels derive the member from the next-finer member value.
    """

    name: str
    column: str | None = None
    mapper: object | None = None  # Callable[[member], member]

    def __post_init__(self):
        if (self.column is None) == (self.mapper is None):
            raise CubeError(f"level {self.name!r} needs a column or a mapper")


@dataclass(frozen=True)
class DimensionHierarchy:
    """Ordered levels for one cube dimension, finest first.

    The base member comes either straight from a fact column
    (``fact_column``) or from a dimension table reached by a fact foreign
    key (``via = (fk column, dimension table, dimension column)``).
    Column-sourced levels are only available on ``via`` hierarchies.
    """

    name: str
    base_level: str
    fact_column: str | None = None
    via: tuple[str, str, str] | None = None
    levels: tuple[Level, ...] = ()

    def __post_init__(self):
        if (self.fact_column is None) == (self.via is None):
            raise CubeError(
                f"hierarchy {self.name!r} needs fact_column or via, not both")
        if self.fact_column is not None and any(
                lv.column is not None for lv in self.levels):
            raise CubeError(
                f"hierarchy {self.name!r}: column levels need a via table")

    def level_names(self) -> list[str]:
        return [self.base_level] + [lv.name for lv in self.levels] + [ALL_LEVEL]

    def level_index(self, name: str) -> int:
        names = [n.lower() for n in self.level_names()]
        try:
            return names.index(name.lower())
        except ValueError:
            raise CubeError(
                f"hierarchy {self.name!r} has no level {name!r} "
                f"(levels: {', '.join(self.level_names())})") from None


@dataclass(frozen=True)
class CubeDimension:
    hierarchy: DimensionHierarchy
    level: str  # chosen (built) level


@dataclass(frozen=True)
class CubeMeasure:
    column: str | None  # fact column; None counts rows
    agg: str            # sum | count | max

    def label(self) -> str:
        return f"{self.agg}({self.column or '*'})"


@dataclass(frozen=True)
class CubeDef:
    name: str
    fact: str
    dimensions: tuple[CubeDimension, ...]
    measures: tuple[CubeMeasure, ...]


@dataclass
class DataCube:
    spec: CubeDef
    levels: tuple[str, ...]            # current level per dimension
    cells: dict[tuple, tuple]          # coordinates -> measure values
    ancestors: list[dict[str, dict]]   # per dim: level name -> member map
    restrictions: list[tuple[int, frozenset]] = field(default_factory=list)
    source_rows: int = 0

    def dimension_names(self) -> list[str]:
        return [d.hierarchy.name for d in self.spec.dimensions]

    def dim_index(self, name: str) -> int:
        for i, d in enumerate(self.spec.dimensions):
            if d.hierarchy.name.lower() == name.lower():
                return i
        raise CubeError(f"cube {self.spec.name!r} has no dimension {name!r}")

    def measure_total(self, index: int):
        """Sum of one sum/count measure over all cells (None values skipped)."""
        values = [c[index] for c in self.cells.values() if c[index] is not None]
        if not values:
            return 0
        if self.spec.measures[index].agg == "max":
            raise CubeError("measure_total is undefined for max measures")
        if any(isinstance(v, float) for v in values):
            return math.fsum(values)
        return sum(values)

    def to_json(self) -> str:
        coords = sorted(self.cells,
                        key=lambda c: tuple(_canonical_cell(v) for v in c))

        def enc(v):
            return v if isinstance(v, (int, float, str, type(None))) else str(v)

        return json.dumps({
            "name": self.spec.name,
            "fact": self.spec.fact,
            "dimensions": [
                {"name": d.hierarchy.name, "level": lv}
                for d, lv in zip(self.spec.dimensions, self.levels)
            ],
            "measures": [m.label() for m in self.spec.measures],
            "source_rows": self.source_rows,
            "cells": [
                {"coords": [enc(v) for v in c],
                 "values": [enc(v) for v in self.cells[c]]}
                for c in coords
            ],
        }, indent=2)


def validate_cube_def(spec: CubeDef, schema: ConstellationSchema) -> list[str]:
    problems = []
    if not schema.has_table(spec.fact):
        return [f"unknown fact table {spec.fact!r}"]
    fact = schema.table(spec.fact)
    if fact.kind != "fact":
        problems.append(f"{spec.fact} is not a fact table")
    seen = set()
    for dim in spec.dimensions:
        h = dim.hierarchy
        if h.name.lower() in seen:
            problems.append(f"duplicate dimension {h.name!r}")
        seen.add(h.name.lower())
        h.level_index(dim.level)
        if h.fact_column is not None and not fact.has_column(h.fact_column):
            problems.append(f"{spec.fact} has no column {h.fact_column!r}")
        if h.via is not None:
            fk_col, table, column = h.via
            if not fact.has_column(fk_col):
                problems.append(f"{spec.fact} has no column {fk_col!r}")
            if not schema.has_table(table):
                problems.append(f"unknown dimension table {table!r}")
            elif not schema.table(table).has_column(column):
                problems.append(f"{table} has no column {column!r}")
    for measure in spec.measures:
        if measure.agg not in ("sum", "count", "max"):
            problems.append(f"unknown aggregator {measure.agg!r}")
        if measure.column is None:
            if measure.agg != "count":
                problems.append(f"{measure.agg}(*) is not a measure")
            continue
        if not fact.has_column(measure.column):
            problems.append(f"{spec.fact} has no column {measure.column!r}")
        elif measure.agg != "count" and \
                schema.table(spec.fact).column(measure.column).dtype not in \
                ("int64", "float64"):
            problems.append(
                f"measure {measure.label()} needs a numeric fact column")
    return problems


class _DimensionReader:
    """Computes the member value at every level for one fact row."""

    def __init__(self, dim: CubeDimension, fact_table, engine):
        self.hierarchy = dim.hierarchy
        h = dim.hierarchy
        self.level_names = h.level_names()
        self.built_index = h.level_index(dim.level)
        if h.fact_column is not None:
            self.fact_idx = fact_table.column_index(h.fact_column)
            self.dim_rows = None
        else:
            fk_col, table_name, column = h.via
            self.fact_idx = fact_table.column_index(fk_col)
            table = engine.schema.table(table_name)
            self.dim_table = table
            self.base_idx = table.column_index(column)
            self.dim_rows = {row[table.pk_index()]: row
                             for row in engine.scan(table_name)}

    def members(self, fact_row) -> list:
        """Member value per level (base up to ALL) for one fact row."""
        raw = fact_row[self.fact_idx]
        dim_row = None
        if self.dim_rows is None:
            base = UNKNOWN if raw is None else raw
        else:
            dim_row = self.dim_rows.get(raw) if raw is not None else None
            if dim_row is None:
                base = UNKNOWN
            else:
                base = dim_row[self.base_idx]
                if base is None:
                    base = UNKNOWN
        values = [base]
        current = base
        for level in self.hierarchy.levels:
            if current == UNKNOWN:
                value = UNKNOWN
            elif level.column is not None:
                value = dim_row[self.dim_table.column_index(level.column)] \
                    if dim_row is not None else UNKNOWN
                if value is None:
                    value = UNKNOWN
            else:
                value = level.mapper(current)
            values.append(value)
            current = value
        values.append(ALL_MEMBER)
        return values


def build_cube(engine, spec: CubeDef,
               restrictions: list[tuple[int, frozenset]] | None = None
               ) -> DataCube:
    """Materialize a cube from a loaded fact table.

    ``restrictions`` (dimension index, allowed built-level members) replays
    slice/dice filters during drill-down rebuilds.
    """
    schema: ConstellationSchema = engine.schema
    problems = validate_cube_def(spec, schema)
    if problems:
        raise CubeError("; ".join(problems))
    fact_table = schema.table(spec.fact)
    readers = [_DimensionReader(d, fact_table, engine) for d in spec.dimensions]
    measure_idx = [
        None if m.column is None else fact_table.column_index(m.column)
        for m in spec.measures
    ]
    restrictions = list(restrictions or [])

    # fd_maps[d] holds finer->coarser witnesses for every adjacent level pair
    fd_maps: list[list[dict]] = [
        [{} for _ in range(len(r.level_names) - 1)] for r in readers
    ]
    ancestors: list[dict[str, dict]] = [{} for _ in readers]

    cells: dict[tuple, list] = {}
    source_rows = 0
    for fact_row in engine.scan(spec.fact):
        coords = []
        keep = True
        per_dim_members = []
        for di, reader in enumerate(readers):
            members = reader.members(fact_row)
            per_dim_members.append(members)
            for li in range(len(members) - 1):
                finer, coarser = members[li], members[li + 1]
                seen = fd_maps[di][li].get(finer)
                if seen is None:
                    fd_maps[di][li][finer] = coarser
                elif seen != coarser:
                    raise CubeError(
                        f"hierarchy {reader.hierarchy.name!r}: level "
                        f"{reader.level_names[li]!r} value {finer!r} maps to "
                        f"both {seen!r} and {coarser!r} "
                        f"(witness fact row {fact_row[fact_table.pk_index()]!r})")
            coords.append(members[reader.built_index])
        for di, allowed in restrictions:
            if coords[di] not in allowed:
                keep = False
                break
        if not keep:
            continue
        source_rows += 1
        key = tuple(coords)
        state = cells.get(key)
        if state is None:
            state = [_new_measure_state(m) for m in spec.measures]
            cells[key] = state
        for mi, m in enumerate(spec.measures):
            if m.column is None:
                state[mi][0] += 1
                continue
            value = fact_row[measure_idx[mi]]
            if m.agg == "count":
                if value is not None:
                    state[mi][0] += 1
            elif m.agg == "sum":
                if value is not None:
                    state[mi].append(value)
            else:
                if value is not None and (state[mi][0] is None
                                          or value > state[mi][0]):
                    state[mi][0] = value

    # record built-level -> coarser-level maps for roll_up
    for di, reader in enumerate(readers):
        bi = reader.built_index
        names = reader.level_names
        for target in range(bi + 1, len(names)):
            mapping = {}
            for coords_members in _iterate_built_members(fd_maps[di], bi):
                pass  # placeholder: maps are composed below
            ancestors[di][names[target]] = _compose_maps(fd_maps[di], bi, target)

    finished = {
        key: tuple(_finish_measure(m, s)
                   for m, s in zip(spec.measures, state))
        for key, state in cells.items()
    }
    return DataCube(
        spec=spec,
        levels=tuple(d.level for d in spec.dimensions),
        cells=finished,
        ancestors=ancestors,
        restrictions=restrictions,
        source_rows=source_rows,
    )


def _iterate_built_members(maps, built_index):
    return ()


def _compose_maps(pair_maps: list[dict], start: int, target: int) -> dict:
    """Map from level ``start`` members to level ``target`` members."""
    members = set(pair_maps[start].keys()) if start < len(pair_maps) else set()
    out = {}
    for member in members:
        value = member
        for li in range(start, target):
            value = pair_maps[li][value]
        out[member] = value
    return out


def _new_measure_state(measure: CubeMeasure):
    if measure.agg == "count":
        return [0]
    if measure.agg == "sum":
        return []
    return [None]


def _finish_measure(measure: CubeMeasure, state):
    if measure.agg == "count":
        return state[0]
    if measure.agg == "sum":
        if not state:
            return None
        if all(isinstance(v, int) for v in state):
            return sum(state)
        return math.fsum(state)
    return state[0]


def _merge_measure(measure: CubeMeasure, a, b):
    if a is None:
        return b
    if b is None:
        return a
    if measure.agg in ("count", "sum"):
        if isinstance(a, float) or isinstance(b, float):
            return math.fsum((a, b))
        return a + b
    return max(a, b)


def roll_up(cube: DataCube, dimension: str, coarser_level: str) -> DataCube:
    """Re-key one dimension at a coarser level, merging cells."""
    di = cube.dim_index(dimension)
    hierarchy = cube.spec.dimensions[di].hierarchy
    current_idx = hierarchy.level_index(cube.levels[di])
    target_idx = hierarchy.level_index(coarser_level)
    if target_idx <= current_idx:
        raise CubeError(
            f"level {coarser_level!r} is not coarser than {cube.levels[di]!r}")
    target_name = hierarchy.level_names()[target_idx]
    if target_name == ALL_LEVEL:
        mapping = None  # every member folds into ALL
    else:
        mapping = cube.ancestors[di].get(target_name)
        if mapping is None:
            raise CubeError(f"no recorded mapping to level {target_name!r}")

    merged: dict[tuple, list] = {}
    for coords, values in cube.cells.items():
        member = ALL_MEMBER if mapping is None else mapping[coords[di]]
        key = coords[:di] + (member,) + coords[di + 1:]
        state = merged.get(key)
        if state is None:
            merged[key] = list(values)
        else:
            for mi, m in enumerate(cube.spec.measures):
                state[mi] = _merge_measure(m, state[mi], values[mi])

    # re-express ancestor maps relative to the new level
    new_ancestors = dict_rebase(cube.ancestors[di], hierarchy, target_idx)
    ancestors = list(cube.ancestors)
    ancestors[di] = new_ancestors
    levels = list(cube.levels)
    levels[di] = target_name
    return DataCube(
        spec=cube.spec,
        levels=tuple(levels),
        cells={k: tuple(v) for k, v in merged.items()},
        ancestors=ancestors,
        restrictions=list(cube.restrictions),
        source_rows=cube.source_rows,
    )


def dict_rebase(old_ancestors: dict[str, dict], hierarchy: DimensionHierarchy,
                new_level_idx: int) -> dict[str, dict]:
    """Ancestor maps keyed by the new (coarser) level's members."""
    names = hierarchy.level_names()
    new_name = names[new_level_idx]
    if new_name == ALL_LEVEL:
        return {}
    to_new = old_ancestors[new_name]
    out: dict[str, dict] = {}
    for target in range(new_level_idx + 1, len(names)):
        target_name = names[target]
        if target_name == ALL_LEVEL:
            continue
        to_target = old_ancestors[target_name]
        out[target_name] = {
            to_new[member]: to_target[member] for member in to_new
        }
    return out


def drill_down(cube: DataCube, dimension: str, finer_level: str,
               engine) -> DataCube:
    """Rebuild at a finer level from base facts, replaying restrictions."""
    di = cube.dim_index(dimension)
    hierarchy = cube.spec.dimensions[di].hierarchy
    current_idx = hierarchy.level_index(cube.levels[di])
    target_idx = hierarchy.level_index(finer_level)
    if target_idx >= current_idx:
        raise CubeError(
            f"level {finer_level!r} is not finer than {cube.levels[di]!r}")
    dims = list(cube.spec.dimensions)
    new_dims = []
    for i, (d, lv) in enumerate(zip(dims, cube.levels)):
        new_dims.append(CubeDimension(
            d.hierarchy, finer_level if i == di else lv))
    new_spec = replace(cube.spec, dimensions=tuple(new_dims))
    return build_cube(engine, new_spec, restrictions=cube.restrictions)


def slice_cube(cube: DataCube, dimension: str, value) -> DataCube:
    """Fix one dimension to a member and drop that dimension."""
    di = cube.dim_index(dimension)
    cells = {
        coords[:di] + coords[di + 1:]: values
        for coords, values in cube.cells.items()
        if coords[di] == value
    }
    dims = tuple(d for i, d in enumerate(cube.spec.dimensions) if i != di)
    levels = tuple(lv for i, lv in enumerate(cube.levels) if i != di)
    ancestors = [a for i, a in enumerate(cube.ancestors) if i != di]
    restrictions = [(i if i < di else i - 1, allowed)
                    for i, allowed in cube.restrictions if i != di]
    # the fixed member is itself a restriction against the original layout;
    # drill-down re-applies it through the rebuilt spec, so keep it encoded
    # on the surviving dimensions only (sliced-away dims cannot come back)
    return DataCube(
        spec=replace(cube.spec, dimensions=dims),
        levels=levels,
        cells=cells,
        ancestors=ancestors,
        restrictions=restrictions,
        source_rows=cube.source_rows,
    )


def dice(cube: DataCube, allowed: dict[str, frozenset | set]) -> DataCube:
    """Keep cells whose coordinates fall in the given per-dimension sets."""
    indexed = [(cube.dim_index(name), frozenset(values))
               for name, values in allowed.items()]
    cells = {
        coords: values
        for coords, values in cube.cells.items()
        if all(coords[di] in keep for di, keep in indexed)
    }
    return DataCube(
        spec=cube.spec,
        levels=cube.levels,
        cells=cells,
        ancestors=list(cube.ancestors),
        restrictions=list(cube.restrictions) + indexed,
        source_rows=cube.source_rows,
    )


@dataclass
class PivotView:
    row_dims: list[str]
    col_dims: list[str]
    row_headers: list[tuple]
    col_headers: list[tuple]
    cells: list[list[tuple | None]]  # measure vectors


def pivot(cube: DataCube, row_dims: list[str], col_dims: list[str]) -> PivotView:
    """Arrange the cube as a 2-D table of measure vectors."""
    names = [d.hierarchy.name.lower() for d in cube.spec.dimensions]
    chosen = [d.lower() for d in row_dims] + [d.lower() for d in col_dims]
    if sorted(chosen) != sorted(names) or len(set(chosen)) != len(chosen):
        raise CubeError(
            "row and column dimensions must partition the cube dimensions")
    r_idx = [names.index(d.lower()) for d in row_dims]
    c_idx = [names.index(d.lower()) for d in col_dims]

    def sort_key(t):
        return tuple(_canonical_cell(v) for v in t)

    row_headers = sorted({tuple(c[i] for i in r_idx) for c in cube.cells},
                         key=sort_key)
    col_headers = sorted({tuple(c[i] for i in c_idx) for c in cube.cells},
                         key=sort_key)
    row_pos = {h: i for i, h in enumerate(row_headers)}
    col_pos = {h: i for i, h in enumerate(col_headers)}
    grid: list[list[tuple | None]] = [
        [None] * len(col_headers) for _ in row_headers]
    for coords, values in cube.cells.items():
        r = row_pos[tuple(coords[i] for i in r_idx)]
        c = col_pos[tuple(coords[i] for i in c_idx)]
        grid[r][c] = values
    return PivotView(list(row_dims), list(col_dims), row_headers, col_headers,
                     grid)


# ---------------------------------------------------------------------------
# Stock hierarchies for the built-in catalog
# ---------------------------------------------------------------------------

def month_of(d) -> str:
    return f"{d.year:04d}-{d.month:02d}"


def year_of_month(month: str) -> int:
    return int(month[:4])


def builtin_hierarchies() -> dict[str, DimensionHierarchy]:
    """Ready-made hierarchies over the built-in warehouse catalog."""
    date_levels = (Level("Month", mapper=month_of),
                   Level("Year", mapper=year_of_month))
    return {
        "CropName": DimensionHierarchy(
            "CropName", "CropName", via=("CropID", "Crop", "CropName")),
        "PestName": DimensionHierarchy(
            "PestName", "CommonName", via=("PestID", "Pest", "CommonName")),
        "FertiliserName": DimensionHierarchy(
            "FertiliserName", "FertiliserName",
            via=("FertiliserID", "Fertiliser", "FertiliserName")),
        "NutrientName": DimensionHierarchy(
            "NutrientName", "NutrientName",
            via=("NutrientID", "Nutrient", "NutrientName")),
        "SprayProduct": DimensionHierarchy(
            "SprayProduct", "SprayProductName",
            via=("SprayID", "Spray", "SprayProductName")),
        "TreatmentName": DimensionHierarchy(
            "TreatmentName", "TreatmentName",
            via=("TreatmentID", "Treatment", "TreatmentName")),
        "SoilPH": DimensionHierarchy(
            "SoilPH", "PH", via=("SoildID", "Soil", "PH")),
        "Field": DimensionHierarchy(
            "Field", "FieldName", via=("FieldID", "Field", "FieldName"),
            levels=(Level("Site", column="SiteID"),)),
        "OperationDate": DimensionHierarchy(
            "OperationDate", "Date",
            via=("OperationTimeID", "OperationTime", "StartDate"),
            levels=date_levels),
        "OperationSeason": DimensionHierarchy(
            "OperationSeason", "Season",
            via=("OperationTimeID", "OperationTime", "Season")),
        "SprayQuantity": DimensionHierarchy(
            "SprayQuantity", "SprayQuantity", fact_column="SprayQuantity"),
        "PestNumber": DimensionHierarchy(
            "PestNumber", "PestNumber", fact_column="PestNumber"),
        "SaleDate": DimensionHierarchy(
            "SaleDate", "Date", fact_column="SaleDate", levels=date_levels),
        "SaleCrop": DimensionHierarchy(
            "SaleCrop", "CropName", via=("CropID", "Crop", "CropName")),
        "Business": DimensionHierarchy(
            "Business", "BusinessName",
            via=("BusinessID", "Business", "BusinessName")),
        "ProductName": DimensionHierarchy(
            "ProductName", "ProductName",
            via=("ProductID", "Product", "ProductName")),
        "OrderQuantity": DimensionHierarchy(
            "OrderQuantity", "Quantity", fact_column="Quantity"),
    }
