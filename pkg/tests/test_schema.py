import pytest

from agridw.schema import (
    ColumnDef,
    ConstellationSchema,
    ForeignKey,
    SchemaParseError,
    SchemaValidationError,
    TableDef,
    builtin_adw_schema,
    load_schema,
    serialize_schema,
    validate_schema,
)

# Golden attribute lists for the built-in catalog.  Generic "Name" columns
# are qualified with their table (FarmerName, BusinessName, SupplierName,
# FertiliserName); SoildID / WaterVolumn / FertiliserGroupName keep the
# reference corpus spellings; Nutrient.Year and the Season columns are
# ETL-derived additions.
GOLDEN_COLUMNS = {
    "FieldFact": ["FieldFactID", "FieldID", "CropID", "SoildID", "PestID",
                  "FertiliserID", "NutrientID", "SprayID", "TreatmentID",
                  "OperationTimeID", "Yield", "WaterVolumn",
                  "FertiliserQuantity", "NutrientQuantity", "SprayQuantity",
                  "PestNumber"],
    "OrderFact": ["OrderID", "FarmerID", "SupplierID", "ProductID",
                  "TransTimeID", "Quantity", "Price"],
    "SaleFact": ["SaleID", "FarmerID", "BusinessID", "CropID", "SaleDate",
                 "Unit", "Quantity", "Price"],
    "Field": ["FieldID", "FieldName", "Area", "FieldGPS", "Geometric", "SiteID"],
    "Crop": ["CropID", "CropName", "EstYield", "BbchScale",
             "HarvestEquipment", "HarvestEquipmentWeight"],
    "Soil": ["SoilID", "PH", "Nitrogen", "Phosphorus", "Potassium",
             "Magnesium", "Calcium", "TextureLabel", "Silt", "Clay", "Sand",
             "CEC", "OrganicMatter", "RecommendedNutrient", "TestDate"],
    "Pest": ["PestID", "CommonName", "Description", "Type", "Density",
             "Coverage", "DetectedDate"],
    "Business": ["BusinessID", "BusinessName", "Address", "Phone", "Mobile",
                 "Email"],
    "CropState": ["CropStateID", "CropID", "StageScale", "Height",
                  "MajorStage", "MinStage", "MaxStage", "Diameter",
                  "MinHeight", "MaxHeight", "CropCoveragePercent"],
    "Farmer": ["FarmerID", "FarmerName", "Address", "Phone", "Mobile", "Email"],
    "Fertiliser": ["FertiliserID", "FertiliserName", "Unit", "Status",
                   "Description", "FertiliserGroupName"],
    "Inspection": ["InspectionID", "CropID", "Description", "ProblemType",
                   "Severity", "ProblemNotes", "AreaValue", "AreaUnit",
                   "Order", "Date", "Notes", "GrowthStage"],
    "Nutrient": ["NutrientID", "NutrientName", "Date", "Quantity", "Year"],
    "OperationTime": ["OperationTimeID", "StartDate", "EndDate", "Season"],
    "Plan": ["PlanID", "PName", "RegisNo", "ProductName", "ProductRate",
             "Date", "WaterVolume"],
    "Product": ["ProductID", "ProductName", "GroupName"],
    "Site": ["SiteID", "FarmerID", "SiteName", "Reference", "Country",
             "Address", "GPS", "CreatedBy"],
    "Spray": ["SprayID", "SprayProductName", "ProductRate", "Area", "Date",
              "WaterVol", "ConfDuration", "ConfWindSPeed", "ConfDirection",
              "ConfHumidity", "ConfTemp", "ActivityType"],
    "Supplier": ["SupplierID", "SupplierName", "ContactName", "Address",
                 "Phone", "Mobile", "Email"],
    "Task": ["TaskID", "Desc", "Status", "TaskDate", "TaskInterval",
             "CompDate", "AppCode"],
    "TransTime": ["TransTimeID", "OrderDate", "DeliverDate", "ReceivedDate",
                  "Season"],
    "Treatment": ["TreatmentID", "TreatmentName", "FormType", "LotCode",
                  "Rate", "ApplCode", "LevlNo", "Type", "Description",
                  "ApplDesc", "TreatmentComment"],
    "WeatherReading": ["WeatherReadingID", "WeatherStationID", "ReadingDate",
                       "ReadingTime", "AirTemperature", "Rainfall", "SPLite",
                       "RelativeHumidity", "WindSpeed", "WindDirection",
                       "SoilTemperature", "LeafWetness"],
    "WeatherStation": ["WeatherStationID", "StationName", "Latitude",
                       "Longitude", "Region"],
}


@pytest.fixture(scope="module")
def schema():
    return builtin_adw_schema()


def test_builtin_shape(schema):
    assert len(schema.fact_tables()) == 3
    assert len(schema.dimension_tables()) == 21
    assert set(schema.tables) == set(GOLDEN_COLUMNS)


def test_builtin_attribute_golden(schema):
    for name, expected in GOLDEN_COLUMNS.items():
        assert schema.table(name).column_names() == expected, name


def test_builtin_validates_clean(schema):
    assert validate_schema(schema) == []


def test_fieldfact_foreign_keys(schema):
    fks = {(fk.column, fk.ref_table, fk.ref_column)
           for fk in schema.table("FieldFact").foreign_keys}
    assert fks == {
        ("CropID", "Crop", "CropID"),
        ("FieldID", "Field", "FieldID"),
        ("PestID", "Pest", "PestID"),
        ("FertiliserID", "Fertiliser", "FertiliserID"),
        ("SoildID", "Soil", "SoilID"),
        ("OperationTimeID", "OperationTime", "OperationTimeID"),
        ("TreatmentID", "Treatment", "TreatmentID"),
        ("NutrientID", "Nutrient", "NutrientID"),
        ("SprayID", "Spray", "SprayID"),
    }


def test_crop_shared_by_two_facts(schema):
    referencing = {
        t.name
        for t in schema.fact_tables()
        if any(fk.ref_table == "Crop" for fk in t.foreign_keys)
    }
    assert {"FieldFact", "SaleFact"} <= referencing


def test_support_dimensions_without_fact_link(schema):
    fact_targets = {
        fk.ref_table for t in schema.fact_tables() for fk in t.foreign_keys}
    for support in ("CropState", "Inspection", "Site", "WeatherReading"):
        assert support not in fact_targets


def test_serialize_roundtrip(schema):
    reloaded = load_schema(serialize_schema(schema))
    assert reloaded == schema


def test_load_schema_fk_to_missing_table():
    doc = """
    fact F (FID:int64, XID:int64, V:float64, pk=FID, fk=XID->Missing.XID)
    fact G (GID:int64, XID:int64, pk=GID, fk=XID->Missing.XID)
    """
    with pytest.raises(SchemaValidationError) as exc:
        load_schema(doc)
    assert any("Missing" in v for v in exc.value.violations)


def test_load_schema_dimensions_only():
    doc = "dimension D (DID:int64, Name:text, pk=DID)"
    with pytest.raises(SchemaValidationError) as exc:
        load_schema(doc)
    assert any("no fact table" in v for v in exc.value.violations)


def test_load_schema_parse_error_position():
    with pytest.raises(SchemaParseError) as exc:
        load_schema("fact F (FID:int64\npk=FID)")
    assert exc.value.line >= 1 and exc.value.column >= 1


def test_validate_nullable_primary_key():
    t = TableDef("D", "dimension",
                 (ColumnDef("DID", "int64", nullable=True),), "DID")
    f = TableDef("F", "fact",
                 (ColumnDef("FID", "int64"), ColumnDef("DID", "int64")),
                 "FID", (ForeignKey("DID", "D", "DID"),))
    g = TableDef("G", "fact",
                 (ColumnDef("GID", "int64"), ColumnDef("DID", "int64")),
                 "GID", (ForeignKey("DID", "D", "DID"),))
    schema = ConstellationSchema(tables={"D": t, "F": f, "G": g})
    violations = validate_schema(schema)
    assert len(violations) == 1
    assert "nullable" in violations[0]


def test_validate_unshared_dimensions():
    d1 = TableDef("D1", "dimension", (ColumnDef("D1ID", "int64"),), "D1ID")
    d2 = TableDef("D2", "dimension", (ColumnDef("D2ID", "int64"),), "D2ID")
    f = TableDef("F", "fact",
                 (ColumnDef("FID", "int64"), ColumnDef("D1ID", "int64")),
                 "FID", (ForeignKey("D1ID", "D1", "D1ID"),))
    g = TableDef("G", "fact",
                 (ColumnDef("GID", "int64"), ColumnDef("D2ID", "int64")),
                 "GID", (ForeignKey("D2ID", "D2", "D2ID"),))
    schema = ConstellationSchema(tables={"D1": d1, "D2": d2, "F": f, "G": g})
    violations = validate_schema(schema)
    assert len(violations) == 1
    assert "constellation" in violations[0]
