import datetime as dt

import pytest

from agridw.datagen import DEFECT_CLASSES, GenConfig, generate
from agridw.etl import (
    CleansingReport,
    ExtractError,
    LoadError,
    StagingBatch,
    cleanse,
    extract,
    load,
    resolve_foreign_keys,
    run_pipeline,
    season_of,
    transform,
)
from agridw.schema import builtin_adw_schema
from agridw.storage import ColumnStore, Relation, RowStore

DIRTY_RATES = {"duplicate": 0.02, "missing": 0.01, "inconsistent": 0.01, "wrong": 0.01}


@pytest.fixture(scope="module")
def schema():
    return builtin_adw_schema()


@pytest.fixture(scope="module")
def dirty_dataset(schema, tmp_path_factory):
    out = tmp_path_factory.mktemp("dirty")
    paths, ledger = generate(schema, GenConfig(seed=42, scale=1000,
                                               defect_rates=DIRTY_RATES), out)
    return out, ledger


def test_extract_batch_count(schema, tmp_path):
    generate(schema, GenConfig(seed=1, scale=100), tmp_path)
    batches = extract(tmp_path, schema)
    # one batch per catalog table: 3 facts + 21 dimensions
    assert len(batches) == 24
    assert {b.table for b in batches} == set(schema.tables)


def test_extract_missing_file(schema, tmp_path):
    generate(schema, GenConfig(seed=1, scale=100), tmp_path)
    (tmp_path / "Crop.csv").unlink()
    with pytest.raises(ExtractError, match="Crop"):
        extract(tmp_path, schema)


def test_extract_header_only_file(schema, tmp_path):
    generate(schema, GenConfig(seed=1, scale=100), tmp_path)
    crop = schema.table("Crop")
    (tmp_path / "Crop.csv").write_text(",".join(crop.column_names()) + "\r\n")
    batches = extract(tmp_path, schema)
    crop_batch = next(b for b in batches if b.table == "Crop")
    assert crop_batch.rows == []


def test_extract_wrong_cell_count(schema, tmp_path):
    generate(schema, GenConfig(seed=1, scale=100), tmp_path)
    path = tmp_path / "Product.csv"
    path.write_text(path.read_text() + "5,too-few\r\n")
    with pytest.raises(ExtractError, match="line"):
        extract(tmp_path, schema)


def test_extract_unknown_column(schema, tmp_path):
    generate(schema, GenConfig(seed=1, scale=100), tmp_path)
    (tmp_path / "Product.csv").write_text("ProductID,Mystery,GroupName\r\n")
    with pytest.raises(ExtractError, match="Mystery"):
        extract(tmp_path, schema)


def test_cleanse_detects_ledger_defects_exactly(schema, dirty_dataset):
    out, ledger = dirty_dataset
    batches = extract(out, schema)
    relations = {}
    report = CleansingReport()
    for batch in batches:
        rel, rep = cleanse(batch, schema)
        relations[rel.name] = rel
        report = report.merge(rep)
    relations = resolve_foreign_keys(relations, schema, report)
    for table in schema.tables:
        for cls in DEFECT_CLASSES:
            assert report.detected(table, cls) == ledger.count(table, cls), \
                (table, cls)
            assert sorted(report.tables[table][cls].ordinals) == \
                ledger.ordinals(table, cls), (table, cls)


def test_cleanse_zero_defects_preserves_rows(schema, tmp_path):
    generate(schema, GenConfig(seed=9, scale=300), tmp_path)
    batches = extract(tmp_path, schema)
    for batch in batches:
        rel, rep = cleanse(batch, schema)
        assert len(rel.rows) == len(batch.rows)
        assert all(c.detected == 0 for c in rep.tables[batch.table].values())


def test_cleanse_conservation(schema, dirty_dataset):
    out, _ = dirty_dataset
    batches = extract(out, schema)
    for batch in batches:
        rel, rep = cleanse(batch, schema)
        rejected = sum(c.rejected for c in rep.tables[batch.table].values())
        assert len(batch.rows) == len(rel.rows) + rejected


def test_cleanse_untypeable_cell(schema):
    soil = schema.table("Soil")
    header = soil.column_names()
    good = ["1", "6.5", "10", "10", "10", "10", "10", "Loam", "30", "30",
            "40", "20", "5", "Nitrogen", "2015-06-01"]
    bad = list(good)
    bad[0] = "2"
    bad[header.index("PH")] = "abc"
    batch = StagingBatch("Soil", header, [good, bad], "test", [0, 1])
    rel, rep = cleanse(batch, schema)
    assert len(rel.rows) == 1
    assert rep.detected("Soil", "inconsistent") == 1
    assert rep.tables["Soil"]["inconsistent"].ordinals == [1]


def test_cleanse_negative_quantity_rejected(schema):
    crop = schema.table("Crop")
    header = crop.column_names()
    row = ["1", "Winter Wheat", "-3.0", "55", "Baler", "4.2"]
    rel, rep = cleanse(StagingBatch("Crop", header, [row], "t", [0]), schema)
    assert len(rel.rows) == 0
    assert rep.detected("Crop", "inconsistent") == 1


def test_cleanse_out_of_window_date(schema):
    pest = schema.table("Pest")
    header = pest.column_names()
    row = ["1", "Aphid", "note", "insect", "5.0", "5.0", "1900-06-01"]
    rel, rep = cleanse(StagingBatch("Pest", header, [row], "t", [0]), schema)
    assert rep.detected("Pest", "inconsistent") == 1


def test_cleanse_duplicate_keeps_first(schema):
    product = schema.table("Product")
    header = product.column_names()
    rows = [["1", "Seed Dressing", "seed"],
            ["1", "Seed Dressing", "seed"],
            ["2", "Crop Cover", "protection"]]
    rel, rep = cleanse(StagingBatch("Product", header, rows, "t", [0, 1, 2]), schema)
    assert [r[0] for r in rel.rows] == [1, 2]
    assert rep.detected("Product", "duplicate") == 1
    assert rep.tables["Product"]["duplicate"].ordinals == [1]


def test_transform_season_rule(schema):
    ot = schema.table("OperationTime")
    rel = Relation(ot, [
        (1, dt.date(2016, 4, 10), dt.date(2016, 5, 1), None),
        (2, dt.date(2016, 12, 20), dt.date(2017, 1, 5), None),
        (3, dt.date(2016, 7, 1), dt.date(2016, 7, 20), None),
        (4, dt.date(2016, 10, 3), dt.date(2016, 11, 1), None),
    ])
    out = transform({"OperationTime": rel}, schema)["OperationTime"]
    assert [r[3] for r in out.rows] == ["Spring", "Winter", "Summer", "Autumn"]


def test_transform_idempotent(schema):
    ot = schema.table("OperationTime")
    nut = schema.table("Nutrient")
    rels = {
        "OperationTime": Relation(ot, [(1, dt.date(2016, 4, 10),
                                        dt.date(2016, 5, 1), None)]),
        "Nutrient": Relation(nut, [(1, "Nitrogen", dt.date(2015, 3, 2),
                                    4.0, None)]),
    }
    once = transform(rels, schema)
    twice = transform(once, schema)
    assert {k: v.rows for k, v in once.items()} == {k: v.rows for k, v in twice.items()}
    assert once["Nutrient"].rows[0][4] == 2015


def test_season_of_month_rule():
    assert season_of(dt.date(2016, 12, 1)) == "Winter"
    assert season_of(dt.date(2016, 2, 28)) == "Winter"
    assert season_of(dt.date(2016, 3, 1)) == "Spring"
    assert season_of(dt.date(2016, 8, 31)) == "Summer"
    assert season_of(dt.date(2016, 9, 1)) == "Autumn"


def test_load_counts_match_scan(schema, tmp_path):
    generate(schema, GenConfig(seed=4, scale=200), tmp_path)
    rs, cs = RowStore(schema), ColumnStore(schema)
    relations, _, summary = run_pipeline(tmp_path, schema, [rs, cs])
    for name, rel in relations.items():
        assert summary[name]["R"] == len(rel.rows)
        assert summary[name]["C"] == len(rel.rows)
        assert rs.row_count(name) == len(rel.rows)
        assert cs.row_count(name) == len(rel.rows)


def test_double_load_rejected(schema, tmp_path):
    generate(schema, GenConfig(seed=4, scale=100), tmp_path)
    rs = RowStore(schema)
    run_pipeline(tmp_path, schema, [rs])
    batches = extract(tmp_path, schema)
    rel, _ = cleanse(batches[0], schema)
    with pytest.raises(LoadError, match="not empty"):
        load({rel.name: rel}, [rs])


def test_load_zero_row_relation(schema):
    rs = RowStore(schema)
    rel = Relation(schema.table("Crop"), [])
    summary = load({"Crop": rel}, [rs])
    assert summary["Crop"]["R"] == 0
    assert rs.row_count("Crop") == 0


def test_rejected_pk_absent_from_store(schema, dirty_dataset):
    out, ledger = dirty_dataset
    rs = RowStore(schema)
    run_pipeline(out, schema, [rs])
    # map rejected FieldFact ordinals back to their PKs via the raw file
    lines = (out / "FieldFact.csv").read_text().splitlines()[1:]
    for cls in ("missing", "inconsistent", "wrong"):
        for ordinal in ledger.ordinals("FieldFact", cls):
            pk = int(lines[ordinal].split(",")[0])
            assert rs.lookup_pk("FieldFact", pk) is None


def test_report_json_structure(schema, dirty_dataset):
    out, _ = dirty_dataset
    _, report, _ = run_pipeline(out, schema, [])
    import json
    payload = json.loads(report.to_json())
    assert "cleansing" in payload
    ff = payload["cleansing"]["FieldFact"]
    assert set(ff) == set(DEFECT_CLASSES)
    for cls in DEFECT_CLASSES:
        entry = ff[cls]
        assert entry["detected"] == entry["rejected"] + entry["corrected"]
