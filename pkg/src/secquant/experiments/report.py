"""CSV and JSON emission with fixed column schemas."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Iterable, Mapping

SCHEMAS: dict[str, tuple[str, ...]] = {
    "nmse": ("scheme", "scales", "mode", "d", "n", "trials", "nmse_mean", "nmse_stderr"),
    "train": ("arm", "round", "accuracy", "loss", "attackers_selected", "attackers_excluded"),
    "cost": (
        "protocol",
        "mode",
        "n",
        "m_bits",
        "BitA_pre",
        "Mult_pre",
        "BitA_on",
        "Mult_on",
        "offline_mib",
        "online_mib",
        "total_mib",
    ),
}
SCHEMAS["defense"] = SCHEMAS["train"]
FORMATS = ("csv", "json")


def _check(schema: str, rows: list[Mapping]) -> tuple[str, ...]:
    if schema not in SCHEMAS:
        raise ValueError(f"unknown schema {schema!r}")
    columns = SCHEMAS[schema]
    for row in rows:
        missing = set(columns) - set(row)
        if missing:
            raise ValueError(f"row lacks columns {sorted(missing)}")
    return columns


def render(rows: Iterable[Mapping], schema: str, fmt: str = "csv") -> str:
    rows = list(rows)
    columns = _check(schema, rows)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        return buf.getvalue()
    if fmt == "json":
        payload = {
            "schema": schema,
            "columns": list(columns),
            "rows": [{c: row[c] for c in columns} for row in rows],
        }
        return json.dumps(payload, indent=2) + "\n"
    raise ValueError(f"format must be one of {FORMATS}")


def emit_report(rows: Iterable[Mapping], path: str | Path, schema: str, fmt: str = "csv") -> Path:
    path = Path(path)
    path.write_text(render(rows, schema, fmt))
    return path


def read_report(path: str | Path, fmt: str | None = None) -> list[dict]:
    """Parse a report back; CSV values come back as strings."""
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".")
    text = path.read_text()
    if fmt == "json":
        return json.loads(text)["rows"]
    if fmt == "csv":
        return list(csv.DictReader(io.StringIO(text)))
    raise ValueError(f"format must be one of {FORMATS}")
