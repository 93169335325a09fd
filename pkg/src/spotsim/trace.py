"""Event trace persistence: one JSON object per line.

The trace is the system of record: the report builder consumes only trace
records, so a persisted trace rebuilds the exact same report.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable


def write_trace(path: str | Path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, sort_keys=True, separators=(",", ":")))
            handle.write("\n")


def read_trace(path: str | Path) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records
