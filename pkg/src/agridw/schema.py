"""Constellation schema catalog: table/column definitions, validation, and the
built-in agricultural warehouse (ADW) schema.

A catalog is a set of fact and dimension table definitions plus foreign-key
links.  Catalogs are immutable after construction and safe to share across
threads.  A plain-text definition format is supported for loading external
catalogs (see :func:`load_schema` for the grammar).
"""

from __future__ import annotations

import datetime as dt
import hashlib
from dataclasses import dataclass, field

DTYPES = ("int64", "float64", "text", "date", "bool", "geo-point", "geo-polygon")

# Dates outside this window are treated as inconsistent by the ETL cleanser.
VALID_DATE_MIN = dt.date(1990, 1, 1)
VALID_DATE_MAX = dt.date(2030, 12, 31)

# Numeric columns that may legitimately be negative.  Every other numeric,
# non-key column is treated as a quantity and must be >= 0.
SIGNED_COLUMNS = {
    ("WeatherReading", "AirTemperature"),
    ("WeatherReading", "SoilTemperature"),
    ("Spray", "ConfTemp"),
    ("WeatherStation", "Latitude"),
    ("WeatherStation", "Longitude"),
}


class SchemaError(Exception):
    """Base class for catalog problems."""


class SchemaParseError(SchemaError):
    """Raised on malformed schema-definition text; carries line/column."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class SchemaValidationError(SchemaError):
    """Raised when a parsed catalog violates structural invariants."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


@dataclass(frozen=True)
class GeoPoint:
    """A WGS84 point, degrees latitude/longitude."""

    lat: float
    lon: float

    def __str__(self) -> str:
        return f"{self.lat!r},{self.lon!r}"

    @classmethod
    def parse(cls, text: str) -> "GeoPoint":
        lat, _, lon = text.partition(",")
        return cls(float(lat), float(lon))


@dataclass(frozen=True)
class GeoPolygon:
    """An ordered ring of points describing a field outline."""

    points: tuple[GeoPoint, ...]

    def __str__(self) -> str:
        return ";".join(str(p) for p in self.points)

    @classmethod
    def parse(cls, text: str) -> "GeoPolygon":
        return cls(tuple(GeoPoint.parse(part) for part in text.split(";") if part))


@dataclass(frozen=True)
class ColumnDef:
    name: str
    dtype: str
    nullable: bool = False

    def __post_init__(self):
        if self.dtype not in DTYPES:
            raise SchemaError(f"column {self.name!r}: unknown dtype {self.dtype!r}")


@dataclass(frozen=True)
class ForeignKey:
    column: str
    ref_table: str
    ref_column: str


@dataclass(frozen=True)
class TableDef:
    name: str
    kind: str  # "fact" | "dimension"
    columns: tuple[ColumnDef, ...]
    primary_key: str
    foreign_keys: tuple[ForeignKey, ...] = ()

    def __post_init__(self):
        if self.kind not in ("fact", "dimension"):
            raise SchemaError(f"table {self.name!r}: kind must be fact or dimension")
        object.__setattr__(
            self, "_index", {c.name.lower(): i for i, c in enumerate(self.columns)}
        )

    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def has_column(self, name: str) -> bool:
        return name.lower() in self._index

    def column(self, name: str) -> ColumnDef:
        try:
            return self.columns[self._index[name.lower()]]
        except KeyError:
            raise SchemaError(f"table {self.name!r} has no column {name!r}") from None

    def column_index(self, name: str) -> int:
        try:
            return self._index[name.lower()]
        except KeyError:
            raise SchemaError(f"table {self.name!r} has no column {name!r}") from None

    def pk_index(self) -> int:
        return self.column_index(self.primary_key)


@dataclass(frozen=True)
class ConstellationSchema:
    """Catalog of fact/dimension tables keyed by name; immutable once built."""

    tables: dict[str, TableDef] = field(default_factory=dict)
    version: str = "1"

    def __post_init__(self):
        object.__setattr__(
            self, "_by_lower", {name.lower(): t for name, t in self.tables.items()}
        )

    def has_table(self, name: str) -> bool:
        return name.lower() in self._by_lower

    def table(self, name: str) -> TableDef:
        try:
            return self._by_lower[name.lower()]
        except KeyError:
            raise SchemaError(f"no table named {name!r} in catalog") from None

    def fact_tables(self) -> list[TableDef]:
        return [t for t in self.tables.values() if t.kind == "fact"]

    def dimension_tables(self) -> list[TableDef]:
        return [t for t in self.tables.values() if t.kind == "dimension"]

    def table_names(self) -> list[str]:
        return list(self.tables.keys())

    def content_hash(self) -> str:
        """SHA-256 over the canonical serialized form (used by snapshots)."""
        return hashlib.sha256(serialize_schema(self).encode("utf-8")).hexdigest()


def is_non_negative_column(table: TableDef, column: ColumnDef) -> bool:
    """True when a numeric column carries a quantity that must be >= 0."""
    if column.dtype not in ("int64", "float64"):
        return False
    if column.name == table.primary_key:
        return False
    if any(fk.column.lower() == column.name.lower() for fk in table.foreign_keys):
        return False
    return (table.name, column.name) not in SIGNED_COLUMNS


def validate_schema(schema: ConstellationSchema) -> list[str]:
    """Check all catalog invariants; returns one message per violation."""
    violations: list[str] = []
    for t in schema.tables.values():
        seen: set[str] = set()
        for c in t.columns:
            low = c.name.lower()
            if low in seen:
                violations.append(f"{t.name}: duplicate column name {c.name!r}")
            seen.add(low)
            if c.dtype not in DTYPES:
                violations.append(f"{t.name}.{c.name}: unknown dtype {c.dtype!r}")
        if not t.has_column(t.primary_key):
            violations.append(f"{t.name}: primary key {t.primary_key!r} is not a column")
        elif t.column(t.primary_key).nullable:
            violations.append(f"{t.name}: primary key {t.primary_key!r} is nullable")
        for fk in t.foreign_keys:
            if not t.has_column(fk.column):
                violations.append(
                    f"{t.name}: foreign key column {fk.column!r} does not exist"
                )
            if not schema.has_table(fk.ref_table):
                violations.append(
                    f"{t.name}: foreign key {fk.column}->{fk.ref_table}.{fk.ref_column} "
                    f"references missing table"
                )
            elif not schema.table(fk.ref_table).has_column(fk.ref_column):
                violations.append(
                    f"{t.name}: foreign key {fk.column}->{fk.ref_table}.{fk.ref_column} "
                    f"references missing column"
                )
        if t.kind == "fact" and not t.foreign_keys:
            violations.append(f"{t.name}: fact table has no foreign keys")

    facts = schema.fact_tables()
    if not facts:
        violations.append("catalog: no fact table")
    else:
        shared = _dimensions_shared_by_facts(schema)
        if not shared and len(facts) >= 2:
            violations.append(
                "catalog: no dimension table is referenced by two or more fact tables "
                "(constellation property)"
            )
        if len(facts) == 1:
            # single-fact catalogs cannot share dimensions; still a violation,
            # a constellation needs several facts around common dimensions
            violations.append("catalog: constellation requires at least two fact tables")
    return violations


def _dimensions_shared_by_facts(schema: ConstellationSchema) -> set[str]:
    refs: dict[str, set[str]] = {}
    for t in schema.fact_tables():
        for fk in t.foreign_keys:
            if schema.has_table(fk.ref_table):
                target = schema.table(fk.ref_table)
                if target.kind == "dimension":
                    refs.setdefault(target.name, set()).add(t.name)
    return {dim for dim, facts in refs.items() if len(facts) >= 2}


# ---------------------------------------------------------------------------
# Built-in ADW catalog
# ---------------------------------------------------------------------------

def _col(name: str, dtype: str, nullable: bool = False) -> ColumnDef:
    return ColumnDef(name, dtype, nullable)


def _contact_columns() -> list[ColumnDef]:
    return [
        _col("Address", "text", True),
        _col("Phone", "text", True),
        _col("Mobile", "text", True),
        _col("Email", "text", True),
    ]


def builtin_adw_schema() -> ConstellationSchema:
    """The built-in agricultural data warehouse catalog.

    Three fact tables (FieldFact, OrderFact, SaleFact) and 21 dimension
    tables.  Column naming quirks of the reference query corpus are kept
    verbatim so the corpus binds unmodified: ``SoildID`` and ``WaterVolumn``
    on FieldFact, ``FertiliserGroupName`` on Fertiliser.  Generic ``Name``
    attributes are qualified with their table name (``FarmerName``,
    ``BusinessName``, ``SupplierName``, ``FertiliserName``) for the same
    reason.  ``Nutrient.Year`` is derived from ``Nutrient.Date`` during ETL;
    ``Season`` on OperationTime/TransTime is likewise ETL-derived.
    """
    tables: list[TableDef] = []

    tables.append(TableDef(
        name="FieldFact",
        kind="fact",
        columns=(
            _col("FieldFactID", "int64"),
            _col("FieldID", "int64"),
            _col("CropID", "int64"),
            _col("SoildID", "int64"),
            _col("PestID", "int64"),
            _col("FertiliserID", "int64"),
            _col("NutrientID", "int64"),
            _col("SprayID", "int64"),
            _col("TreatmentID", "int64"),
            _col("OperationTimeID", "int64"),
            _col("Yield", "float64"),
            _col("WaterVolumn", "float64"),
            _col("FertiliserQuantity", "float64"),
            _col("NutrientQuantity", "float64"),
            _col("SprayQuantity", "float64"),
            _col("PestNumber", "int64"),
        ),
        primary_key="FieldFactID",
        foreign_keys=(
            ForeignKey("FieldID", "Field", "FieldID"),
            ForeignKey("CropID", "Crop", "CropID"),
            ForeignKey("SoildID", "Soil", "SoilID"),
            ForeignKey("PestID", "Pest", "PestID"),
            ForeignKey("FertiliserID", "Fertiliser", "FertiliserID"),
            ForeignKey("NutrientID", "Nutrient", "NutrientID"),
            ForeignKey("SprayID", "Spray", "SprayID"),
            ForeignKey("TreatmentID", "Treatment", "TreatmentID"),
            ForeignKey("OperationTimeID", "OperationTime", "OperationTimeID"),
        ),
    ))

    tables.append(TableDef(
        name="OrderFact",
        kind="fact",
        columns=(
            _col("OrderID", "int64"),
            _col("FarmerID", "int64"),
            _col("SupplierID", "int64"),
            _col("ProductID", "int64"),
            _col("TransTimeID", "int64"),
            _col("Quantity", "float64"),
            _col("Price", "float64"),
        ),
        primary_key="OrderID",
        foreign_keys=(
            ForeignKey("FarmerID", "Farmer", "FarmerID"),
            ForeignKey("SupplierID", "Supplier", "SupplierID"),
            ForeignKey("ProductID", "Product", "ProductID"),
            ForeignKey("TransTimeID", "TransTime", "TransTimeID"),
        ),
    ))

    tables.append(TableDef(
        name="SaleFact",
        kind="fact",
        columns=(
            _col("SaleID", "int64"),
            _col("FarmerID", "int64"),
            _col("BusinessID", "int64"),
            _col("CropID", "int64"),
            _col("SaleDate", "date"),
            _col("Unit", "text"),
            _col("Quantity", "float64"),
            _col("Price", "float64"),
        ),
        primary_key="SaleID",
        foreign_keys=(
            ForeignKey("FarmerID", "Farmer", "FarmerID"),
            ForeignKey("BusinessID", "Business", "BusinessID"),
            ForeignKey("CropID", "Crop", "CropID"),
        ),
    ))

    tables.append(TableDef(
        name="Field",
        kind="dimension",
        columns=(
            _col("FieldID", "int64"),
            _col("FieldName", "text"),
            _col("Area", "float64"),
            _col("FieldGPS", "geo-point"),
            _col("Geometric", "geo-polygon"),
            _col("SiteID", "int64"),
        ),
        primary_key="FieldID",
        foreign_keys=(ForeignKey("SiteID", "Site", "SiteID"),),
    ))

    tables.append(TableDef(
        name="Crop",
        kind="dimension",
        columns=(
            _col("CropID", "int64"),
            _col("CropName", "text"),
            _col("EstYield", "float64"),
            _col("BbchScale", "int64"),
            _col("HarvestEquipment", "text", True),
            _col("HarvestEquipmentWeight", "float64", True),
        ),
        primary_key="CropID",
    ))

    tables.append(TableDef(
        name="Soil",
        kind="dimension",
        columns=(
            _col("SoilID", "int64"),
            _col("PH", "float64"),
            _col("Nitrogen", "float64"),
            _col("Phosphorus", "float64"),
            _col("Potassium", "float64"),
            _col("Magnesium", "float64"),
            _col("Calcium", "float64"),
            _col("TextureLabel", "text"),
            _col("Silt", "float64"),
            _col("Clay", "float64"),
            _col("Sand", "float64"),
            _col("CEC", "float64", True),
            _col("OrganicMatter", "float64", True),
            _col("RecommendedNutrient", "text", True),
            _col("TestDate", "date"),
        ),
        primary_key="SoilID",
    ))

    tables.append(TableDef(
        name="Pest",
        kind="dimension",
        columns=(
            _col("PestID", "int64"),
            _col("CommonName", "text"),
            _col("Description", "text", True),
            _col("Type", "text"),
            _col("Density", "float64", True),
            _col("Coverage", "float64", True),
            _col("DetectedDate", "date"),
        ),
        primary_key="PestID",
    ))

    tables.append(TableDef(
        name="Business",
        kind="dimension",
        columns=tuple([_col("BusinessID", "int64"), _col("BusinessName", "text")]
                      + _contact_columns()),
        primary_key="BusinessID",
    ))

    tables.append(TableDef(
        name="CropState",
        kind="dimension",
        columns=(
            _col("CropStateID", "int64"),
            _col("CropID", "int64"),
            _col("StageScale", "text", True),
            _col("Height", "float64", True),
            _col("MajorStage", "text", True),
            _col("MinStage", "text", True),
            _col("MaxStage", "text", True),
            _col("Diameter", "float64", True),
            _col("MinHeight", "float64", True),
            _col("MaxHeight", "float64", True),
            _col("CropCoveragePercent", "float64", True),
        ),
        primary_key="CropStateID",
        foreign_keys=(ForeignKey("CropID", "Crop", "CropID"),),
    ))

    tables.append(TableDef(
        name="Farmer",
        kind="dimension",
        columns=tuple([_col("FarmerID", "int64"), _col("FarmerName", "text")]
                      + _contact_columns()),
        primary_key="FarmerID",
    ))

    tables.append(TableDef(
        name="Fertiliser",
        kind="dimension",
        columns=(
            _col("FertiliserID", "int64"),
            _col("FertiliserName", "text"),
            _col("Unit", "text", True),
            _col("Status", "text", True),
            _col("Description", "text", True),
            _col("FertiliserGroupName", "text"),
        ),
        primary_key="FertiliserID",
    ))

    tables.append(TableDef(
        name="Inspection",
        kind="dimension",
        columns=(
            _col("InspectionID", "int64"),
            _col("CropID", "int64"),
            _col("Description", "text"),
            _col("ProblemType", "text", True),
            _col("Severity", "text", True),
            _col("ProblemNotes", "text", True),
            _col("AreaValue", "float64", True),
            _col("AreaUnit", "text", True),
            _col("Order", "int64", True),
            _col("Date", "date"),
            _col("Notes", "text", True),
            _col("GrowthStage", "text", True),
        ),
        primary_key="InspectionID",
        foreign_keys=(ForeignKey("CropID", "Crop", "CropID"),),
    ))

    tables.append(TableDef(
        name="Nutrient",
        kind="dimension",
        columns=(
            _col("NutrientID", "int64"),
            _col("NutrientName", "text"),
            _col("Date", "date"),
            _col("Quantity", "float64"),
            _col("Year", "int64", True),
        ),
        primary_key="NutrientID",
    ))

    tables.append(TableDef(
        name="OperationTime",
        kind="dimension",
        columns=(
            _col("OperationTimeID", "int64"),
            _col("StartDate", "date"),
            _col("EndDate", "date"),
            _col("Season", "text", True),
        ),
        primary_key="OperationTimeID",
    ))

    tables.append(TableDef(
        name="Plan",
        kind="dimension",
        columns=(
            _col("PlanID", "int64"),
            _col("PName", "text"),
            _col("RegisNo", "text", True),
            _col("ProductName", "text", True),
            _col("ProductRate", "float64", True),
            _col("Date", "date", True),
            _col("WaterVolume", "float64", True),
        ),
        primary_key="PlanID",
    ))

    tables.append(TableDef(
        name="Product",
        kind="dimension",
        columns=(
            _col("ProductID", "int64"),
            _col("ProductName", "text"),
            _col("GroupName", "text", True),
        ),
        primary_key="ProductID",
    ))

    tables.append(TableDef(
        name="Site",
        kind="dimension",
        columns=(
            _col("SiteID", "int64"),
            _col("FarmerID", "int64"),
            _col("SiteName", "text"),
            _col("Reference", "text", True),
            _col("Country", "text", True),
            _col("Address", "text", True),
            _col("GPS", "geo-point", True),
            _col("CreatedBy", "text", True),
        ),
        primary_key="SiteID",
        foreign_keys=(ForeignKey("FarmerID", "Farmer", "FarmerID"),),
    ))

    tables.append(TableDef(
        name="Spray",
        kind="dimension",
        columns=(
            _col("SprayID", "int64"),
            _col("SprayProductName", "text"),
            _col("ProductRate", "float64", True),
            _col("Area", "float64", True),
            _col("Date", "date", True),
            _col("WaterVol", "float64", True),
            _col("ConfDuration", "float64", True),
            _col("ConfWindSPeed", "float64", True),
            _col("ConfDirection", "text", True),
            _col("ConfHumidity", "float64", True),
            _col("ConfTemp", "float64", True),
            _col("ActivityType", "text", True),
        ),
        primary_key="SprayID",
    ))

    tables.append(TableDef(
        name="Supplier",
        kind="dimension",
        columns=tuple([
            _col("SupplierID", "int64"),
            _col("SupplierName", "text"),
            _col("ContactName", "text", True),
        ] + _contact_columns()),
        primary_key="SupplierID",
    ))

    tables.append(TableDef(
        name="Task",
        kind="dimension",
        columns=(
            _col("TaskID", "int64"),
            _col("Desc", "text"),
            _col("Status", "text", True),
            _col("TaskDate", "date", True),
            _col("TaskInterval", "text", True),
            _col("CompDate", "date", True),
            _col("AppCode", "text", True),
        ),
        primary_key="TaskID",
    ))

    tables.append(TableDef(
        name="TransTime",
        kind="dimension",
        columns=(
            _col("TransTimeID", "int64"),
            _col("OrderDate", "date"),
            _col("DeliverDate", "date", True),
            _col("ReceivedDate", "date", True),
            _col("Season", "text", True),
        ),
        primary_key="TransTimeID",
    ))

    tables.append(TableDef(
        name="Treatment",
        kind="dimension",
        columns=(
            _col("TreatmentID", "int64"),
            _col("TreatmentName", "text"),
            _col("FormType", "text", True),
            _col("LotCode", "text", True),
            _col("Rate", "float64", True),
            _col("ApplCode", "text", True),
            _col("LevlNo", "int64", True),
            _col("Type", "text", True),
            _col("Description", "text", True),
            _col("ApplDesc", "text", True),
            _col("TreatmentComment", "text", True),
        ),
        primary_key="TreatmentID",
    ))

    tables.append(TableDef(
        name="WeatherReading",
        kind="dimension",
        columns=(
            _col("WeatherReadingID", "int64"),
            _col("WeatherStationID", "int64"),
            _col("ReadingDate", "date"),
            _col("ReadingTime", "text", True),
            _col("AirTemperature", "float64", True),
            _col("Rainfall", "float64", True),
            _col("SPLite", "float64", True),
            _col("RelativeHumidity", "float64", True),
            _col("WindSpeed", "float64", True),
            _col("WindDirection", "text", True),
            _col("SoilTemperature", "float64", True),
            _col("LeafWetness", "float64", True),
        ),
        primary_key="WeatherReadingID",
        foreign_keys=(ForeignKey("WeatherStationID", "WeatherStation", "WeatherStationID"),),
    ))

    tables.append(TableDef(
        name="WeatherStation",
        kind="dimension",
        columns=(
            _col("WeatherStationID", "int64"),
            _col("StationName", "text"),
            _col("Latitude", "float64", True),
            _col("Longitude", "float64", True),
            _col("Region", "text", True),
        ),
        primary_key="WeatherStationID",
    ))

    return ConstellationSchema(tables={t.name: t for t in tables}, version="ADW-1.0")


# ---------------------------------------------------------------------------
# Schema-definition text format
# ---------------------------------------------------------------------------
#
#   schema  := (table)*
#   table   := ("fact" | "dimension") NAME "(" entry ("," entry)* ")"
#   entry   := NAME ":" TYPE ["?"]          -- column, "?" marks nullable
#            | "pk" "=" NAME                -- primary key (exactly one)
#            | "fk" "=" NAME "->" NAME "." NAME   -- foreign key (any number)
#   TYPE    := int64 | float64 | text | date | bool | geo-point | geo-polygon
#
# "#" starts a comment running to end of line.  An optional first line
# "version <text>" sets the catalog version.

def serialize_schema(schema: ConstellationSchema) -> str:
    """Render a catalog in the definition format accepted by load_schema."""
    out = [f"version {schema.version}"]
    for t in schema.tables.values():
        entries = [f"{c.name}:{c.dtype}{'?' if c.nullable else ''}" for c in t.columns]
        entries.append(f"pk={t.primary_key}")
        entries.extend(
            f"fk={fk.column}->{fk.ref_table}.{fk.ref_column}" for fk in t.foreign_keys
        )
        body = ",\n  ".join(entries)
        out.append(f"{t.kind} {t.name} (\n  {body}\n)")
    return "\n\n".join(out) + "\n"


class _SchemaScanner:
    """Tokenizer for the schema-definition grammar, tracking line/column."""

    _PUNCT = ("->", "(", ")", ",", ":", "?", "=", ".")

    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.line = 1
        self.col = 1

    def error(self, message: str) -> SchemaParseError:
        return SchemaParseError(message, self.line, self.col)

    def _advance(self, n: int):
        for ch in self.text[self.pos:self.pos + n]:
            if ch == "\n":
                self.line += 1
                self.col = 1
            else:
                self.col += 1
        self.pos += n

    def _skip_ws(self):
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch == "#":
                end = self.text.find("\n", self.pos)
                self._advance((end if end != -1 else len(self.text)) - self.pos)
            elif ch.isspace():
                self._advance(1)
            else:
                break

    def peek(self) -> str | None:
        self._skip_ws()
        if self.pos >= len(self.text):
            return None
        for p in self._PUNCT:
            if self.text.startswith(p, self.pos):
                return p
        ch = self.text[self.pos]
        if ch.isalnum() or ch in "_-":
            end = self.pos
            while end < len(self.text) and (self.text[end].isalnum() or self.text[end] in "_-"):
                if self.text.startswith("->", end):  # arrow, not a hyphen
                    break
                end += 1
            return self.text[self.pos:end]
        return ch

    def take(self) -> str | None:
        tok = self.peek()
        if tok is not None:
            self._advance(len(tok))
        return tok

    def expect(self, token: str) -> str:
        got = self.take()
        if got != token:
            raise self.error(f"expected {token!r}, found {got!r}")
        return got


_WORD_CHARS = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_")


def _require_identifier(scanner: _SchemaScanner, what: str) -> str:
    tok = scanner.take()
    if tok is None or not tok or tok[0].isdigit() or not set(tok) <= _WORD_CHARS:
        raise scanner.error(f"expected {what}, found {tok!r}")
    return tok


def load_schema(document: str) -> ConstellationSchema:
    """Parse schema-definition text into a validated catalog.

    Raises SchemaParseError on malformed text and SchemaValidationError
    (listing every violation) when the parsed catalog breaks an invariant.
    """
    scanner = _SchemaScanner(document)
    tables: dict[str, TableDef] = {}
    version = "1"

    first = scanner.peek()
    if first == "version":
        scanner.take()
        end = scanner.text.find("\n", scanner.pos)
        raw = scanner.text[scanner.pos:end if end != -1 else len(scanner.text)]
        version = raw.strip()
        scanner._advance(len(raw))

    while True:
        tok = scanner.take()
        if tok is None:
            break
        if tok not in ("fact", "dimension"):
            raise scanner.error(f"expected 'fact' or 'dimension', found {tok!r}")
        kind = tok
        name = _require_identifier(scanner, "table name")
        if name.lower() in {k.lower() for k in tables}:
            raise scanner.error(f"duplicate table {name!r}")
        scanner.expect("(")

        columns: list[ColumnDef] = []
        pk: str | None = None
        fks: list[ForeignKey] = []
        while True:
            entry = _require_identifier(scanner, "column, pk or fk entry")
            if entry == "pk":
                scanner.expect("=")
                if pk is not None:
                    raise scanner.error("duplicate pk entry")
                pk = _require_identifier(scanner, "primary key column")
            elif entry == "fk":
                scanner.expect("=")
                local = _require_identifier(scanner, "foreign key column")
                scanner.expect("->")
                ref_table = _require_identifier(scanner, "referenced table")
                scanner.expect(".")
                ref_col = _require_identifier(scanner, "referenced column")
                fks.append(ForeignKey(local, ref_table, ref_col))
            else:
                scanner.expect(":")
                dtype = scanner.take()
                if dtype not in DTYPES:
                    raise scanner.error(f"unknown column type {dtype!r}")
                nullable = False
                if scanner.peek() == "?":
                    scanner.take()
                    nullable = True
                columns.append(ColumnDef(entry, dtype, nullable))
            nxt = scanner.take()
            if nxt == ")":
                break
            if nxt != ",":
                raise scanner.error(f"expected ',' or ')', found {nxt!r}")
        if pk is None:
            raise scanner.error(f"table {name!r} has no pk entry")
        tables[name] = TableDef(name, kind, tuple(columns), pk, tuple(fks))

    schema = ConstellationSchema(tables=tables, version=version)
    violations = validate_schema(schema)
    if violations:
        raise SchemaValidationError(violations)
    return schema
