import datetime as dt
from pathlib import Path

import pytest

from agridw.datagen import (
    DEFECT_CLASSES,
    DefectLedger,
    GenConfig,
    GenerationError,
    generate,
    table_cardinality,
    vocabularies,
)
from agridw.schema import builtin_adw_schema


@pytest.fixture(scope="module")
def schema():
    return builtin_adw_schema()


def _read_bytes(paths):
    return {name: Path(p).read_bytes() for name, p in paths.items()}


def test_zero_defect_scale_1000(schema, tmp_path):
    cfg = GenConfig(seed=7, scale=1000)
    paths, ledger = generate(schema, cfg, tmp_path)
    assert ledger.total() == 0
    fieldfact = (tmp_path / "FieldFact.csv").read_text().splitlines()
    assert len(fieldfact) == 1001  # header + scale rows


def test_duplicate_rate_exact(schema, tmp_path):
    cfg = GenConfig(seed=7, scale=1000, defect_rates={"duplicate": 0.02})
    _, ledger = generate(schema, cfg, tmp_path)
    assert ledger.count("FieldFact", "duplicate") == 20


def test_defect_counts_floor_rule(schema, tmp_path):
    rates = {"duplicate": 0.02, "missing": 0.01, "inconsistent": 0.01, "wrong": 0.01}
    cfg = GenConfig(seed=11, scale=500, defect_rates=rates)
    _, ledger = generate(schema, cfg, tmp_path)
    for table in schema.tables.values():
        rows = table_cardinality(table.name, 500)
        assert ledger.count(table.name, "duplicate") == int(0.02 * rows)
        if table.foreign_keys:
            assert ledger.count(table.name, "wrong") == int(0.01 * rows)
        else:
            assert ledger.count(table.name, "wrong") == 0


def test_determinism_byte_identical(schema, tmp_path):
    rates = {"duplicate": 0.03, "missing": 0.02, "inconsistent": 0.01, "wrong": 0.02}
    cfg = GenConfig(seed=99, scale=300, defect_rates=rates)
    a, ledger_a = generate(schema, cfg, tmp_path / "a")
    b, ledger_b = generate(schema, cfg, tmp_path / "b")
    assert ledger_a.entries == ledger_b.entries
    bytes_a, bytes_b = _read_bytes(a), _read_bytes(b)
    assert bytes_a == bytes_b


def test_different_seed_differs(schema, tmp_path):
    a, _ = generate(schema, GenConfig(seed=1, scale=200), tmp_path / "a")
    b, _ = generate(schema, GenConfig(seed=2, scale=200), tmp_path / "b")
    assert _read_bytes(a) != _read_bytes(b)


def test_vocabulary_anchors():
    pools = vocabularies()
    assert "Black twitch" in pools["pest_names"]
    assert "Yellow Rust" in pools["inspection_descriptions"]
    assert "Brown Rust" in pools["inspection_descriptions"]
    assert set(pools["seasons"]) == {"Spring", "Summer", "Autumn", "Winter"}
    assert "Ori Agro" in pools["business_names"]
    assert {"urea", "SO3", "P2O5"} <= set(pools["fertiliser_names"])
    assert {"Winter Wheat", "Spring Barley"} <= set(pools["crop_names"])


def test_generated_names_come_from_pools(schema, tmp_path):
    paths, _ = generate(schema, GenConfig(seed=5, scale=2000), tmp_path)
    crop_lines = (tmp_path / "Crop.csv").read_text().splitlines()[1:]
    names = {line.split(",")[1] for line in crop_lines}
    assert "Winter Wheat" in names
    fert_lines = (tmp_path / "Fertiliser.csv").read_text().splitlines()[1:]
    fert_names = {line.split(",")[1] for line in fert_lines}
    assert {"urea", "SO3", "P2O5"} <= fert_names


def test_ledger_json_roundtrip(schema, tmp_path):
    rates = {"duplicate": 0.02, "missing": 0.01, "inconsistent": 0.01, "wrong": 0.01}
    _, ledger = generate(schema, GenConfig(seed=3, scale=400, defect_rates=rates),
                         tmp_path)
    loaded = DefectLedger.from_json((tmp_path / "ledger.json").read_text())
    for table in schema.tables:
        for cls in DEFECT_CLASSES:
            assert loaded.ordinals(table, cls) == ledger.ordinals(table, cls)


def test_config_validation():
    with pytest.raises(GenerationError):
        GenConfig(scale=0)
    with pytest.raises(GenerationError):
        GenConfig(defect_rates={"duplicate": 1.5})
    with pytest.raises(GenerationError):
        GenConfig(defect_rates={"duplicate": 0.3, "missing": 0.3})
    with pytest.raises(GenerationError):
        GenConfig(defect_rates={"bogus": 0.1})
    with pytest.raises(GenerationError):
        GenConfig(date_range=(dt.date(2020, 1, 1), dt.date(2019, 1, 1)))


def test_referential_soundness_minus_defects(schema, tmp_path):
    """Dropping exactly the ledger rows leaves no dangling FK and no null
    in a non-nullable column."""
    rates = {"duplicate": 0.02, "missing": 0.02, "inconsistent": 0.02, "wrong": 0.02}
    paths, ledger = generate(schema, GenConfig(seed=13, scale=800, defect_rates=rates),
                             tmp_path)
    surviving: dict[str, list[list[str]]] = {}
    for name, path in paths.items():
        lines = Path(path).read_text().splitlines()
        header = lines[0].split(",")
        drop = {o for cls in DEFECT_CLASSES for o in ledger.ordinals(name, cls)}
        import csv as _csv
        rows = list(_csv.reader(lines[1:]))
        surviving[name] = (header, [r for i, r in enumerate(rows) if i not in drop])

    pks = {}
    for name, (header, rows) in surviving.items():
        table = schema.table(name)
        pk_pos = header.index(table.primary_key)
        pks[name] = {r[pk_pos] for r in rows}
    for name, (header, rows) in surviving.items():
        table = schema.table(name)
        null_ok = {c.name for c in table.columns if c.nullable}
        for row in rows:
            for col_name, cell in zip(header, row):
                if cell == "":
                    assert col_name in null_ok, (name, col_name)
        for fk in table.foreign_keys:
            pos = header.index(fk.column)
            target_keys = pks[fk.ref_table]
            for row in rows:
                assert row[pos] in target_keys, (name, fk.column, row[pos])
