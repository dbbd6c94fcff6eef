"""agridw: an embedded agricultural data warehouse.

Constellation-schema catalog, deterministic source-data generator, ETL
cleansing pipeline, row/columnar storage engines, MOLAP cube operations,
a SQL-subset query engine with baseline / ROLAP / HOLAP execution paths,
and a benchmark harness comparing the two storage engines.
"""

from .schema import (
    ColumnDef,
    ConstellationSchema,
    ForeignKey,
    GeoPoint,
    GeoPolygon,
    SchemaError,
    SchemaParseError,
    SchemaValidationError,
    TableDef,
    builtin_adw_schema,
    load_schema,
    serialize_schema,
    validate_schema,
)
from .datagen import DefectLedger, GenConfig, GenerationError, generate, vocabularies
from .etl import CleansingReport, StagingBatch, cleanse, extract, load, run_pipeline, transform
from .storage import ColumnStore, Relation, RowStore, StorageError, load_snapshot, save_snapshot

__version__ = "0.1.0"

__all__ = [
    "ColumnDef", "ConstellationSchema", "ForeignKey", "GeoPoint", "GeoPolygon",
    "SchemaError", "SchemaParseError", "SchemaValidationError", "TableDef",
    "builtin_adw_schema", "load_schema", "serialize_schema", "validate_schema",
    "DefectLedger", "GenConfig", "GenerationError", "generate", "vocabularies",
    "CleansingReport", "StagingBatch", "cleanse", "extract", "load",
    "run_pipeline", "transform",
    "ColumnStore", "Relation", "RowStore", "StorageError",
    "load_snapshot", "save_snapshot",
    "__version__",
]
