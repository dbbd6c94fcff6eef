import datetime as dt
import threading

import pytest

from agridw.datagen import GenConfig, generate
from agridw.etl import run_pipeline
from agridw.schema import builtin_adw_schema
from agridw.storage import (
    ColumnStore,
    Relation,
    RowStore,
    SnapshotError,
    StorageError,
    load_snapshot,
    save_snapshot,
)


@pytest.fixture(scope="module")
def schema():
    return builtin_adw_schema()


@pytest.fixture(scope="module")
def loaded(schema, tmp_path_factory):
    out = tmp_path_factory.mktemp("seeded")
    generate(schema, GenConfig(seed=21, scale=500), out)
    rs, cs = RowStore(schema), ColumnStore(schema)
    run_pipeline(out, schema, [rs, cs])
    return rs, cs


def _crop_relation(schema, n=5):
    table = schema.table("Crop")
    rows = [(i, f"Crop {i}", 5.0, 50, "Baler", 3.0) for i in range(1, n + 1)]
    return Relation(table, rows)


def test_insert_then_count(schema):
    rs = RowStore(schema)
    assert rs.insert_batch(_crop_relation(schema, 5)) == 5
    assert len(rs.scan("Crop")) == 5


def test_insert_pk_collision(schema):
    for engine_cls in (RowStore, ColumnStore):
        engine = engine_cls(schema)
        engine.insert_batch(_crop_relation(schema, 3))
        with pytest.raises(StorageError, match="collision"):
            engine.insert_batch(_crop_relation(schema, 1))


def test_insert_empty_relation(schema):
    cs = ColumnStore(schema)
    assert cs.insert_batch(Relation(schema.table("Crop"), [])) == 0
    assert cs.row_count("Crop") == 0


def test_insert_type_mismatch(schema):
    rs = RowStore(schema)
    bad = Relation(schema.table("Crop"),
                   [(1, "Crop", "not-a-float", 50, "Baler", 3.0)])
    with pytest.raises(StorageError, match="float64"):
        rs.insert_batch(bad)


def test_insert_null_in_non_nullable(schema):
    cs = ColumnStore(schema)
    bad = Relation(schema.table("Crop"), [(1, None, 5.0, 50, "Baler", 3.0)])
    with pytest.raises(StorageError, match="non-nullable"):
        cs.insert_batch(bad)


def test_scan_false_predicate_empty(loaded):
    rs, cs = loaded
    for engine in (rs, cs):
        rows = engine.scan("Crop", conditions=[("CropID", "<", 0)])
        assert rows == []


def test_scan_full_equals_inserted(schema):
    rel = _crop_relation(schema, 7)
    for engine_cls in (RowStore, ColumnStore):
        engine = engine_cls(schema)
        engine.insert_batch(rel)
        assert sorted(engine.scan("Crop")) == sorted(rel.rows)


@pytest.mark.parametrize("conditions", [
    [],
    [("Yield", ">", 8.0)],
    [("Yield", ">=", 5.0), ("SprayQuantity", "=", 2.0)],
    [("PestNumber", "<=", 10)],
    [("WaterVolumn", "<>", 0.0)],
])
def test_cross_engine_scan_equivalence(loaded, conditions):
    rs, cs = loaded
    rows_r = rs.scan("FieldFact", conditions=conditions)
    rows_c = cs.scan("FieldFact", conditions=conditions)
    assert sorted(rows_r) == sorted(rows_c)


def test_cross_engine_like_and_in(loaded):
    rs, cs = loaded
    for conditions in ([("CropName", "like", "W%")],
                       [("CropName", "in", {"Potato", "Rye"})],
                       [("CropName", "like", "%e_t%")]):
        assert sorted(rs.scan("Crop", conditions=conditions)) == \
            sorted(cs.scan("Crop", conditions=conditions))


def test_cross_engine_date_predicate(loaded):
    rs, cs = loaded
    cond = [("SaleDate", ">=", dt.date(2016, 1, 1))]
    assert sorted(rs.scan("SaleFact", conditions=cond)) == \
        sorted(cs.scan("SaleFact", conditions=cond))


def test_column_store_reads_only_needed_segments(schema):
    cs = ColumnStore(schema)
    cs.insert_batch(_crop_relation(schema, 10))
    cs.segment_reads.clear()
    cs.scan("Crop", columns=["CropName"], conditions=[("EstYield", ">", 1.0)])
    touched = {col for (_, col) in cs.segment_reads}
    assert touched == {"CropName", "EstYield"}


def test_scan_unknown_column(loaded):
    rs, cs = loaded
    for engine in (rs, cs):
        with pytest.raises(StorageError):
            engine.scan("Crop", columns=["Nope"])


def test_lookup_pk(schema):
    for engine_cls in (RowStore, ColumnStore):
        engine = engine_cls(schema)
        engine.insert_batch(_crop_relation(schema, 3))
        assert engine.lookup_pk("Crop", 2)[1] == "Crop 2"
        assert engine.lookup_pk("Crop", 99) is None


def test_nulls_never_match_predicates(schema):
    table = builtin_adw_schema().table("Pest")
    rows = [(1, "Aphid", None, "insect", None, 1.0, dt.date(2015, 1, 1)),
            (2, "Slug", "bad", "mollusc", 2.0, 2.0, dt.date(2015, 1, 2))]
    for engine_cls in (RowStore, ColumnStore):
        engine = engine_cls(builtin_adw_schema())
        engine.insert_batch(Relation(table, rows))
        for op, operand in (("=", "bad"), ("<>", "bad"), ("like", "%")):
            got = engine.scan("Pest", columns=["PestID"],
                              conditions=[("Description", op, operand)])
            assert got == [(2,)] if op != "<>" else [(2,)]
        got = engine.scan("Pest", columns=["PestID"],
                          conditions=[("Density", ">", 0.0)])
        assert got == [(2,)]


def test_snapshot_roundtrip(schema, loaded, tmp_path):
    rs, cs = loaded
    for engine in (rs, cs):
        path = tmp_path / f"snap_{engine.kind}.bin"
        save_snapshot(engine, path)
        restored = load_snapshot(schema, path)
        assert type(restored) is type(engine)
        for table in ("FieldFact", "Crop", "Site", "Field"):
            assert sorted(restored.scan(table)) == sorted(engine.scan(table))


def test_snapshot_bad_magic(schema, tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOTASNAP" + b"\x00" * 64)
    with pytest.raises(SnapshotError, match="magic"):
        load_snapshot(schema, path)


def test_snapshot_schema_hash_mismatch(schema, tmp_path):
    rs = RowStore(schema)
    rs.insert_batch(_crop_relation(schema, 2))
    path = tmp_path / "snap.bin"
    save_snapshot(rs, path)
    other = builtin_adw_schema()
    object.__setattr__(other, "version", "other-version")
    with pytest.raises(SnapshotError, match="hash"):
        load_snapshot(other, path)


def test_concurrent_readers(schema):
    rs = RowStore(schema)
    rs.insert_batch(_crop_relation(schema, 50))
    results = []

    def read():
        results.append(len(rs.scan("Crop")))

    threads = [threading.Thread(target=read) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert results == [50] * 8


def test_reset_allows_reload(schema):
    cs = ColumnStore(schema)
    cs.insert_batch(_crop_relation(schema, 3))
    cs.reset("Crop")
    assert cs.row_count("Crop") == 0
    cs.insert_batch(_crop_relation(schema, 3))
    assert cs.row_count("Crop") == 3
