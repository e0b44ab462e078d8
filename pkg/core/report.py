# core/report.py
import csv
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field

from utils.config import REPORT_SCHEMA, TOLERANCE_NOTE

# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')

KS_CSV_HEADER = ("coord", "time", "D", "nA", "nB")


@dataclass
class KsEntry:
    coord: int
    time: float
    D: float
    nA: int
    nB: int
    mean_a: float = 0.0
    var_a: float = 0.0
    mean_b: float = 0.0
    var_b: float = 0.0
    p_value: float = 1.0
    passed: bool = True


@dataclass
class ComparisonReport:
    """Everything one experiment measured, in the order it is written out."""

    experiment: str
    params: dict = field(default_factory=dict)
    regime: dict = field(default_factory=dict)
    ks: list = field(default_factory=list)
    lln: dict = field(default_factory=dict)
    martingale: dict = field(default_factory=dict)
    barrier: dict = field(default_factory=dict)
    trend: list = field(default_factory=list)
    criteria: dict = field(default_factory=dict)
    notes: str = TOLERANCE_NOTE

    @property
    def passed(self):
        return all(self.criteria.values())

    def to_dict(self):
        data = asdict(self)
        data["schema"] = REPORT_SCHEMA
        data["passed"] = self.passed
        return _plain(data)


def _plain(value):
    """JSON-safe copy: non-finite floats become strings, tuples become lists."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if hasattr(value, "item") and not isinstance(value, (str, bytes)):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    return value


def emit_report(report, path):
    """Write `<path>.json` (full report) and `<path>.csv` (KS table); returns both paths."""
    stem = path[:-5] if path.endswith(".json") else path
    json_path, csv_path = stem + ".json", stem + ".csv"
    directory = os.path.dirname(stem)
    try:
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(json_path, 'w', newline="\n") as f:
            json.dump(report.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
        with open(csv_path, 'w', newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(KS_CSV_HEADER)
            for entry in report.ks:
                writer.writerow((entry.coord, f"{entry.time:.12g}", f"{entry.D:.12g}", entry.nA, entry.nB))
    except OSError as e:
        logging.error(f"Error writing report to {stem}: {e}")
        raise OSError(f"could not write report {stem}: {e}") from e
    logging.info(f"Report written to {json_path} and {csv_path}")
    return json_path, csv_path


def load_report(path):
    """Read a report JSON back as a plain dict."""
    try:
        with open(path, 'r') as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        logging.error(f"Error loading report {path}: {e}")
        raise
    if data.get("schema") != REPORT_SCHEMA:
        raise ValueError(f"{path} has schema {data.get('schema')!r}, expected {REPORT_SCHEMA!r}")
    return data
