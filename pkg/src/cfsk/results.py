"""Result documents (JSON) and CSV tables emitted by the command-line tool."""

from __future__ import annotations

import csv
import io
import json
import subprocess
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from cfsk import __version__

SCHEMA_VERSION = "1.0"

# Frozen per schema version: columns emitted by each command (in order).
CSV_COLUMNS = {
    "bounds": ["kind", "M", "nbar", "dwt", "dtheta", "hb", "hb_method", "sql", "sql_ci"],
    "ser": ["kind", "M", "nbar", "dwt", "dtheta", "visibility", "efficiency", "transmittance",
            "errors", "trials", "ser", "ser_lo", "ser_hi", "hb"],
    "sweep": ["dwt", "dtheta", "value", "sigma"],
    "ratio-map": ["nbar", "M", "value"],
}


def build_id() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _plain(obj):
    """Convert numpy scalars/arrays and enums into JSON-native values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if hasattr(obj, "value") and type(obj).__module__.startswith("cfsk"):
        return obj.value
    return obj


@dataclass
class ResultDocument:
    command: str
    config: dict
    results: dict
    duration_s: float = 0.0
    build: str = field(default_factory=build_id)
    schema_version: str = SCHEMA_VERSION

    def to_json(self) -> str:
        return json.dumps(_plain(asdict(self)), indent=2, sort_keys=False)

    def payload_json(self) -> str:
        return json.dumps(_plain(self.results), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ResultDocument":
        data = json.loads(text)
        if "schema_version" not in data:
            raise ValueError("not a result document: schema_version missing")
        return cls(**data)


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.16e}"
    if value is None:
        return ""
    return str(getattr(value, "value", value))


def _parse(cell: str):
    if cell == "":
        return None
    for conv in (int, float):
        try:
            return conv(cell)
        except ValueError:
            continue
    return cell


def write_csv(rows: list[dict], columns: list[str] | None = None) -> str:
    if columns is None:
        columns = list(rows[0]) if rows else []
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def read_csv(text: str) -> list[dict]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    return [dict(zip(header, map(_parse, line))) for line in reader]


def map_rows(smap) -> list[dict]:
    """Long-format rows (one per cell) of a SweepMap."""
    a0, a1 = smap.grid.axes
    rows = []
    for i, x in enumerate(a0.values):
        for j, y in enumerate(a1.values):
            row = {a0.name: float(x), a1.name: float(y), "value": float(smap.values[i, j])}
            if smap.sigma is not None:
                row["sigma"] = float(smap.sigma[i, j])
            rows.append(row)
    return rows


def map_payload(smap) -> dict:
    return {
        "axes": {a.name: a.values.tolist() for a in smap.grid.axes},
        "values": smap.values.tolist(),
        "sigma": None if smap.sigma is None else smap.sigma.tolist(),
        "metadata": _plain(smap.metadata),
    }
