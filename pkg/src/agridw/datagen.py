"""Deterministic synthetic source-data generator.

Emits one CSV per catalog table plus a defect ledger recording every injected
data-quality fault, so the ETL cleanser can be tested against exact ground
truth.  Two runs with the same config produce byte-identical output; each
table draws from its own seeded stream, so per-table generation order (or
concurrency) cannot change the result.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from random import Random

from .schema import (
    ConstellationSchema,
    GeoPoint,
    GeoPolygon,
    TableDef,
    is_non_negative_column,
)

DEFECT_CLASSES = ("duplicate", "missing", "inconsistent", "wrong")

# Rows per table as a fraction of cfg.scale: table -> (divisor, minimum).
# FieldFact is pinned to the scale itself.
CARDINALITY_RATIOS: dict[str, tuple[int, int]] = {
    "FieldFact": (1, 1),
    "OrderFact": (2, 50),
    "SaleFact": (2, 50),
    "Field": (10, 20),
    "Crop": (100, 15),
    "Soil": (50, 12),
    "Pest": (200, 8),
    "Fertiliser": (200, 10),
    "Nutrient": (200, 9),
    "Spray": (200, 6),
    "Treatment": (200, 6),
    "OperationTime": (20, 24),
    "Farmer": (100, 12),
    "Site": (100, 10),
    "Business": (500, 5),
    "Supplier": (500, 6),
    "Product": (200, 8),
    "TransTime": (20, 24),
    "Plan": (500, 5),
    "Task": (500, 5),
    "CropState": (100, 10),
    "Inspection": (50, 24),
    "WeatherStation": (1000, 4),
    "WeatherReading": (10, 40),
}

_VOCABULARIES: dict[str, tuple[str, ...]] = {
    "crop_names": (
        "Winter Wheat", "Spring Barley", "Winter Barley", "Spring Wheat",
        "Potato", "Pea", "Perennial Ryegrass", "Rye", "Rapeseed", "Red Clover",
        "Grass", "Green Bean", "Oat", "Maize", "Sugar Beet",
    ),
    "fertiliser_names": (
        "urea", "SO3", "P2O5", "K2O", "MgO", "NPK 20-10-10",
        "Ammonium Nitrate", "CAN", "Superphosphate", "Potash",
    ),
    "fertiliser_groups": ("Nitrogen", "Phosphate", "Potash", "Compound", "Trace Element"),
    "pest_names": (
        "Black twitch", "Aphid", "Wireworm", "Leatherjacket", "Slug",
        "Cabbage Stem Flea Beetle", "Wild Oat", "Couch Grass",
    ),
    "pest_types": ("weed", "insect", "mollusc", "fungus"),
    "inspection_descriptions": (
        "Yellow Rust", "Brown Rust", "Septoria", "Mildew", "Eyespot",
        "Fusarium", "Take-All", "Rhynchosporium",
    ),
    "seasons": ("Spring", "Summer", "Autumn", "Winter"),
    "business_names": (
        "Ori Agro", "GreenFields Ltd", "AgriTrade Co", "Harvest Partners",
        "CropChain plc",
    ),
    "nutrient_names": (
        "Nitrogen", "Phosphate", "Potash", "Magnesium", "Calcium",
        "Sulphur", "Zinc", "Manganese", "Boron",
    ),
    "spray_product_names": (
        "RustGuard", "AphidClear", "FungiStop", "WeedOut Pro",
        "Glyphosate Max", "CanopyShield",
    ),
    "product_names": (
        "Winter Wheat Seed", "NPK 20-10-10", "Urea Prills", "Seed Dressing",
        "Crop Cover", "Boom Sprayer", "Soil Conditioner", "Lime Pellets",
    ),
    "treatment_names": (
        "Herbicide A", "Fungicide B", "Insecticide C", "Growth Regulator",
        "Seed Treatment", "Lime Application",
    ),
    "soil_textures": ("Clay Loam", "Sandy Loam", "Silty Clay", "Loam",
                      "Sandy Clay Loam", "Peat"),
    "units": ("kg", "t", "l", "kg/ha", "t/ha"),
    "regions": ("Leinster", "Munster", "Connacht", "Ulster", "Midlands", "South East"),
    "countries": ("Ireland", "United Kingdom", "France", "Germany", "Poland",
                  "Netherlands"),
    "first_names": ("Aoife", "Sean", "Niamh", "Liam", "Clara", "Padraig",
                    "Maeve", "Tomas", "Orla", "Brendan"),
    "surnames": ("Byrne", "Murphy", "Kelly", "O'Brien", "Ryan", "Walsh",
                 "McCarthy", "Doyle", "Kennedy", "Lynch", "Brennan", "Nolan"),
    "harvest_equipment": ("Combine Harvester", "Forage Harvester",
                          "Potato Harvester", "Beet Harvester", "Baler"),
    "problem_types": ("disease", "pest", "nutrient deficiency", "weather damage"),
    "severities": ("low", "moderate", "high", "severe"),
    "activity_types": ("pre-emergence", "post-emergence", "foliar", "desiccation"),
    "form_types": ("liquid", "granule", "powder", "pellet"),
    "statuses": ("active", "inactive", "trial"),
    "wind_directions": ("N", "NE", "E", "SE", "S", "SW", "W", "NW"),
    "pest_notes": ("severe infestation", "light infestation", "patchy presence",
                   "widespread", "isolated outbreak"),
    "task_kinds": ("Drilling", "Spraying", "Harvest", "Soil sampling", "Scouting"),
    "product_groups": ("seed", "fertiliser", "equipment", "protection"),
}


def vocabularies() -> dict[str, tuple[str, ...]]:
    """Fixed value pools for every categorical column (stable across runs)."""
    return dict(_VOCABULARIES)


class GenerationError(Exception):
    """Raised for unsatisfiable generator configs."""


@dataclass(frozen=True)
class GenConfig:
    seed: int = 42
    scale: int = 1000
    defect_rates: dict[str, float] = field(
        default_factory=lambda: {c: 0.0 for c in DEFECT_CLASSES}
    )
    date_range: tuple[dt.date, dt.date] = (dt.date(2014, 1, 1), dt.date(2017, 12, 31))

    def __post_init__(self):
        if self.scale < 1:
            raise GenerationError(f"scale must be >= 1, got {self.scale}")
        if self.seed < 0:
            raise GenerationError("seed must be a non-negative integer")
        rates = {c: 0.0 for c in DEFECT_CLASSES}
        for name, rate in self.defect_rates.items():
            if name not in DEFECT_CLASSES:
                raise GenerationError(f"unknown defect class {name!r}")
            if not 0.0 <= rate <= 1.0:
                raise GenerationError(f"defect rate {name}={rate} outside [0, 1]")
            rates[name] = float(rate)
        if sum(rates.values()) > 0.5:
            raise GenerationError("sum of defect rates exceeds 0.5")
        object.__setattr__(self, "defect_rates", rates)
        start, end = self.date_range
        if start > end:
            raise GenerationError("date_range start is after end")


@dataclass
class DefectLedger:
    """Ground truth of injected defects: table -> class -> row ordinals.

    Ordinals are 0-based data-row indices in the emitted CSV (header
    excluded).
    """

    entries: dict[str, dict[str, list[int]]] = field(default_factory=dict)

    def record(self, table: str, defect_class: str, ordinal: int):
        self.entries.setdefault(table, {c: [] for c in DEFECT_CLASSES})
        self.entries[table][defect_class].append(ordinal)

    def count(self, table: str, defect_class: str) -> int:
        return len(self.entries.get(table, {}).get(defect_class, ()))

    def ordinals(self, table: str, defect_class: str) -> list[int]:
        return sorted(self.entries.get(table, {}).get(defect_class, ()))

    def total(self, defect_class: str | None = None) -> int:
        if defect_class is None:
            return sum(self.total(c) for c in DEFECT_CLASSES)
        return sum(len(t.get(defect_class, ())) for t in self.entries.values())

    def to_json(self) -> str:
        payload = {
            table: {c: sorted(rows) for c, rows in classes.items()}
            for table, classes in sorted(self.entries.items())
        }
        return json.dumps({"defects": payload}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "DefectLedger":
        data = json.loads(text)["defects"]
        return cls(entries={
            table: {c: list(map(int, rows)) for c, rows in classes.items()}
            for table, classes in data.items()
        })


def table_cardinality(table: str, scale: int) -> int:
    try:
        divisor, minimum = CARDINALITY_RATIOS[table]
    except KeyError:
        # tables outside the built-in catalog scale like a mid-size dimension
        divisor, minimum = 100, 10
    return max(minimum, scale // divisor)


def _table_rng(seed: int, table: str) -> Random:
    return Random(f"agridw-datagen:{seed}:{table}")


def _rand_date(rng: Random, start: dt.date, end: dt.date) -> dt.date:
    return start + dt.timedelta(days=rng.randint(0, (end - start).days))


def _gps(rng: Random) -> GeoPoint:
    return GeoPoint(round(rng.uniform(51.4, 55.4), 5), round(rng.uniform(-10.5, -5.5), 5))


def _polygon(rng: Random) -> GeoPolygon:
    center = _gps(rng)
    pts = []
    for _ in range(4):
        pts.append(GeoPoint(round(center.lat + rng.uniform(-0.01, 0.01), 5),
                            round(center.lon + rng.uniform(-0.01, 0.01), 5)))
    return GeoPolygon(tuple(pts))


def _pool(name: str) -> tuple[str, ...]:
    return _VOCABULARIES[name]


def _phone(rng: Random) -> str:
    return f"+353-{rng.randint(10, 99)}-{rng.randint(1000000, 9999999)}"


def _email(rng: Random, name: str, pk: int) -> str:
    slug = name.lower().replace(" ", ".").replace("'", "")
    return f"{slug}.{pk}@example.ie"


def _person(rng: Random) -> str:
    return f"{rng.choice(_pool('first_names'))} {rng.choice(_pool('surnames'))}"


class _RowFactory:
    """Produces the base row for (table, pk); one rng stream per table."""

    def __init__(self, schema: ConstellationSchema, cfg: GenConfig,
                 fk_limits: dict[str, int]):
        self.schema = schema
        self.cfg = cfg
        self.fk_limits = fk_limits
        self.start, self.end = cfg.date_range

    def fk(self, rng: Random, target: str) -> int:
        return rng.randint(1, self.fk_limits[target])

    def date(self, rng: Random) -> dt.date:
        return _rand_date(rng, self.start, self.end)

    def row(self, table: str, pk: int, rng: Random) -> list:
        fn = getattr(self, f"_row_{table.lower()}", None)
        if fn is None:
            raise GenerationError(f"no generator for table {table!r}")
        return fn(pk, rng)

    def _row_fieldfact(self, pk, rng):
        return [
            pk,
            self.fk(rng, "Field"), self.fk(rng, "Crop"), self.fk(rng, "Soil"),
            self.fk(rng, "Pest"), self.fk(rng, "Fertiliser"), self.fk(rng, "Nutrient"),
            self.fk(rng, "Spray"), self.fk(rng, "Treatment"), self.fk(rng, "OperationTime"),
            round(rng.uniform(1.0, 15.0), 2),       # Yield t/ha
            float(rng.randint(0, 50)),              # WaterVolumn
            float(rng.randint(0, 20)),              # FertiliserQuantity
            float(rng.randint(0, 10)),              # NutrientQuantity
            float(rng.randint(0, 12)),              # SprayQuantity
            rng.randint(0, 30),                     # PestNumber
        ]

    def _row_orderfact(self, pk, rng):
        return [
            pk, self.fk(rng, "Farmer"), self.fk(rng, "Supplier"),
            self.fk(rng, "Product"), self.fk(rng, "TransTime"),
            float(rng.randint(1, 10)), round(rng.uniform(5.0, 500.0), 2),
        ]

    def _row_salefact(self, pk, rng):
        return [
            pk, self.fk(rng, "Farmer"), self.fk(rng, "Business"), self.fk(rng, "Crop"),
            self.date(rng), rng.choice(_pool("units")),
            float(rng.randint(1, 50)), round(rng.uniform(50.0, 2000.0), 2),
        ]

    def _row_field(self, pk, rng):
        return [pk, f"Field {pk}", round(rng.uniform(1.0, 80.0), 2),
                _gps(rng), _polygon(rng), self.fk(rng, "Site")]

    def _row_crop(self, pk, rng):
        pool = _pool("crop_names")
        return [pk, pool[(pk - 1) % len(pool)], round(rng.uniform(0.0, 12.0), 2),
                rng.randint(0, 99), rng.choice(_pool("harvest_equipment")),
                round(rng.uniform(0.5, 30.0), 2)]

    def _row_soil(self, pk, rng):
        return [pk, round(rng.uniform(4.5, 8.5), 2),
                round(rng.uniform(0.0, 200.0), 1), round(rng.uniform(0.0, 120.0), 1),
                round(rng.uniform(0.0, 300.0), 1), round(rng.uniform(0.0, 150.0), 1),
                round(rng.uniform(0.0, 2500.0), 1),
                rng.choice(_pool("soil_textures")),
                round(rng.uniform(0.0, 100.0), 1), round(rng.uniform(0.0, 100.0), 1),
                round(rng.uniform(0.0, 100.0), 1), round(rng.uniform(5.0, 40.0), 1),
                round(rng.uniform(1.0, 10.0), 1),
                rng.choice(_pool("nutrient_names")), self.date(rng)]

    def _row_pest(self, pk, rng):
        return [pk, rng.choice(_pool("pest_names")), rng.choice(_pool("pest_notes")),
                rng.choice(_pool("pest_types")), round(rng.uniform(0.0, 100.0), 1),
                round(rng.uniform(0.0, 100.0), 1), self.date(rng)]

    def _row_business(self, pk, rng):
        pool = _pool("business_names")
        name = pool[(pk - 1) % len(pool)]
        return [pk, name, f"{rng.randint(1, 200)} Main Street", _phone(rng),
                _phone(rng), _email(rng, name, pk)]

    def _row_cropstate(self, pk, rng):
        return [pk, self.fk(rng, "Crop"), f"BBCH {rng.randint(0, 99)}",
                round(rng.uniform(5.0, 180.0), 1), f"BBCH {rng.randint(50, 99)}",
                f"BBCH {rng.randint(0, 49)}", f"BBCH {rng.randint(50, 99)}",
                round(rng.uniform(0.5, 25.0), 1), round(rng.uniform(5.0, 90.0), 1),
                round(rng.uniform(90.0, 180.0), 1), round(rng.uniform(0.0, 100.0), 1)]

    def _row_farmer(self, pk, rng):
        name = _person(rng)
        return [pk, name, f"{rng.randint(1, 200)} Farm Lane", _phone(rng),
                _phone(rng), _email(rng, name, pk)]

    def _row_fertiliser(self, pk, rng):
        pool = _pool("fertiliser_names")
        return [pk, pool[(pk - 1) % len(pool)], rng.choice(("kg", "l")),
                rng.choice(_pool("statuses")), f"batch {rng.randint(100, 999)}",
                rng.choice(_pool("fertiliser_groups"))]

    def _row_inspection(self, pk, rng):
        pool = _pool("inspection_descriptions")
        return [pk, self.fk(rng, "Crop"), pool[(pk - 1) % len(pool)],
                rng.choice(_pool("problem_types")), rng.choice(_pool("severities")),
                f"note {rng.randint(1, 500)}", round(rng.uniform(0.1, 40.0), 2),
                "ha", rng.randint(1, 5), self.date(rng),
                f"inspection {pk}", f"BBCH {rng.randint(0, 99)}"]

    def _row_nutrient(self, pk, rng):
        pool = _pool("nutrient_names")
        return [pk, pool[(pk - 1) % len(pool)], self.date(rng),
                float(rng.randint(1, 40)), None]  # Year filled by ETL transform

    def _row_operationtime(self, pk, rng):
        start = self.date(rng)
        end = start + dt.timedelta(days=rng.randint(0, 90))
        return [pk, start, end, None]  # Season filled by ETL transform

    def _row_plan(self, pk, rng):
        return [pk, f"Plan {pk}", f"R-{rng.randint(1000, 9999)}",
                rng.choice(_pool("product_names")), round(rng.uniform(0.5, 10.0), 2),
                self.date(rng), round(rng.uniform(50.0, 400.0), 1)]

    def _row_product(self, pk, rng):
        pool = _pool("product_names")
        return [pk, pool[(pk - 1) % len(pool)], rng.choice(_pool("product_groups"))]

    def _row_site(self, pk, rng):
        return [pk, self.fk(rng, "Farmer"), f"Site {pk}", f"S-{pk:04d}",
                rng.choice(_pool("countries")), f"{rng.randint(1, 200)} Townland Road",
                _gps(rng), _person(rng)]

    def _row_spray(self, pk, rng):
        pool = _pool("spray_product_names")
        return [pk, pool[(pk - 1) % len(pool)], round(rng.uniform(0.5, 8.0), 2),
                round(rng.uniform(0.5, 50.0), 1), self.date(rng),
                round(rng.uniform(50.0, 400.0), 1), round(rng.uniform(0.5, 8.0), 1),
                round(rng.uniform(0.0, 25.0), 1), rng.choice(_pool("wind_directions")),
                round(rng.uniform(20.0, 100.0), 1), round(rng.uniform(-5.0, 35.0), 1),
                rng.choice(_pool("activity_types"))]

    def _row_supplier(self, pk, rng):
        name = f"{rng.choice(_pool('surnames'))} Supplies"
        return [pk, name, _person(rng), f"{rng.randint(1, 200)} Depot Road",
                _phone(rng), _phone(rng), _email(rng, name, pk)]

    def _row_task(self, pk, rng):
        task_date = self.date(rng)
        return [pk, rng.choice(_pool("task_kinds")), rng.choice(_pool("statuses")),
                task_date, rng.choice(("weekly", "fortnightly", "monthly")),
                task_date + dt.timedelta(days=rng.randint(0, 30)),
                f"T{rng.randint(100, 999)}"]

    def _row_transtime(self, pk, rng):
        order = self.date(rng)
        deliver = order + dt.timedelta(days=rng.randint(1, 14))
        received = deliver + dt.timedelta(days=rng.randint(0, 7))
        return [pk, order, deliver, received, None]  # Season filled by ETL transform

    def _row_treatment(self, pk, rng):
        pool = _pool("treatment_names")
        return [pk, pool[(pk - 1) % len(pool)], rng.choice(_pool("form_types")),
                f"L{rng.randint(1000, 9999)}", round(rng.uniform(0.1, 5.0), 2),
                f"A{rng.randint(10, 99)}", rng.randint(1, 5),
                rng.choice(("chemical", "biological", "mechanical")),
                f"treatment {pk}", f"application {rng.randint(1, 9)}",
                rng.choice(("effective", "partial", "monitor", "repeat needed"))]

    def _row_weatherreading(self, pk, rng):
        return [pk, self.fk(rng, "WeatherStation"), self.date(rng),
                f"{rng.randint(0, 23):02d}:{rng.randint(0, 59):02d}",
                round(rng.uniform(-10.0, 35.0), 1), round(rng.uniform(0.0, 30.0), 1),
                round(rng.uniform(0.0, 1000.0), 1), round(rng.uniform(20.0, 100.0), 1),
                round(rng.uniform(0.0, 30.0), 1), rng.choice(_pool("wind_directions")),
                round(rng.uniform(-5.0, 25.0), 1), round(rng.uniform(0.0, 100.0), 1)]

    def _row_weatherstation(self, pk, rng):
        return [pk, f"Station {pk}", round(rng.uniform(51.4, 55.4), 4),
                round(rng.uniform(-10.5, -5.5), 4), rng.choice(_pool("regions"))]


def format_cell(value) -> str:
    """Canonical CSV cell rendering (inverse of the ETL cell parser)."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, dt.date):
        return value.isoformat()
    return str(value)


def _defect_counts(cfg: GenConfig, table: TableDef, rows: int) -> dict[str, int]:
    counts = {}
    for cls in DEFECT_CLASSES:
        n = math.floor(cfg.defect_rates[cls] * rows)
        if cls == "wrong" and not table.foreign_keys:
            n = 0
        if cls == "inconsistent" and not _inconsistent_columns(table):
            n = 0
        if cls == "missing" and not _missing_columns(table):
            n = 0
        counts[cls] = n
    return counts


def _missing_columns(table: TableDef) -> list[int]:
    return [i for i, c in enumerate(table.columns)
            if not c.nullable and c.name != table.primary_key]


def _inconsistent_columns(table: TableDef) -> list[int]:
    out = []
    for i, c in enumerate(table.columns):
        if c.dtype == "date":
            out.append(i)
        elif c.dtype in ("int64", "float64") and is_non_negative_column(table, c):
            out.append(i)
    return out


def generate(schema: ConstellationSchema, cfg: GenConfig,
             out_dir: str | Path) -> tuple[dict[str, Path], DefectLedger]:
    """Write one CSV per table plus ledger.json; returns (paths, ledger).

    Referential integrity holds for every row that is not in the ledger:
    foreign keys are drawn only from the "clean head" of each referenced
    table, and row-destroying defects (missing/inconsistent/wrong) target
    only unreferenced tail rows, so rejecting a defective dimension row can
    never orphan a clean fact row.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    cards = {t: table_cardinality(t, cfg.scale) for t in schema.tables}
    destructive: dict[str, dict[str, int]] = {}
    fk_limits: dict[str, int] = {}
    for name, table in schema.tables.items():
        counts = _defect_counts(cfg, table, cards[name])
        destructive[name] = counts
        tail = counts["missing"] + counts["inconsistent"] + counts["wrong"]
        limit = cards[name] - tail
        if limit < 1:
            raise GenerationError(
                f"unsatisfiable config: table {name} has {cards[name]} rows but "
                f"{tail} destructive defects requested"
            )
        if counts["duplicate"] > limit:
            raise GenerationError(
                f"unsatisfiable config: table {name} needs {counts['duplicate']} "
                f"duplicate sources but only {limit} clean rows"
            )
        fk_limits[name] = limit

    factory = _RowFactory(schema, cfg, fk_limits)
    ledger = DefectLedger()
    paths: dict[str, Path] = {}

    for name in sorted(schema.tables):
        table = schema.table(name)
        card = cards[name]
        counts = destructive[name]
        limit = fk_limits[name]
        rng = _table_rng(cfg.seed, name)

        # plan defect placement before generating any data so the value
        # stream is not perturbed by defect bookkeeping
        plan_rng = Random(f"agridw-defects:{cfg.seed}:{name}")
        tail = list(range(limit, card))
        plan_rng.shuffle(tail)
        targets: dict[int, str] = {}
        cursor = 0
        for cls in ("missing", "inconsistent", "wrong"):
            for ordinal in tail[cursor:cursor + counts[cls]]:
                targets[ordinal] = cls
            cursor += counts[cls]
        dup_sources = sorted(plan_rng.sample(range(limit), counts["duplicate"])) \
            if counts["duplicate"] else []
        dup_source_set = set(dup_sources)

        missing_cols = _missing_columns(table)
        incons_cols = _inconsistent_columns(table)
        fk_cols = [table.column_index(fk.column) for fk in table.foreign_keys]

        path = out_dir / f"{name}.csv"
        paths[name] = path
        kept_for_dup: dict[int, list] = {}
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(table.column_names())
            for ordinal in range(card):
                row = factory.row(name, ordinal + 1, rng)
                cls = targets.get(ordinal)
                if cls == "missing":
                    col = plan_rng.choice(missing_cols)
                    row[col] = None
                    ledger.record(name, "missing", ordinal)
                elif cls == "inconsistent":
                    col = plan_rng.choice(incons_cols)
                    if table.columns[col].dtype == "date":
                        row[col] = dt.date(1900, 1, 1) + dt.timedelta(
                            days=plan_rng.randint(0, 365))
                    else:
                        base = row[col] if row[col] is not None else 0
                        row[col] = -(abs(base) + plan_rng.randint(1, 50))
                        if table.columns[col].dtype == "float64":
                            row[col] = float(row[col])
                    ledger.record(name, "inconsistent", ordinal)
                elif cls == "wrong":
                    col = plan_rng.choice(fk_cols)
                    row[col] = 10 ** 9 + ordinal
                    ledger.record(name, "wrong", ordinal)
                if ordinal in dup_source_set:
                    kept_for_dup[ordinal] = row
                writer.writerow([format_cell(v) for v in row])
            for i, source in enumerate(dup_sources):
                writer.writerow([format_cell(v) for v in kept_for_dup[source]])
                ledger.record(name, "duplicate", card + i)

    ledger_path = out_dir / "ledger.json"
    ledger_path.write_text(ledger.to_json(), encoding="utf-8")
    return paths, ledger
