"""Report documents and their table / JSON / CSV renderings."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

from fleetmeter.footprint import round_display

SCHEMA_VERSION = "1.0"
FORMATS = ("table", "json", "csv")


@dataclass
class ReportDocument:
    command: str
    rows: list[dict]
    window: dict | None = None
    factors_used: dict | None = None
    summary: dict = field(default_factory=dict)
    columns: list[str] | None = None
    schema_version: str = SCHEMA_VERSION

    def as_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "command": self.command,
            "window": self.window,
            "rows": self.rows,
            "summary": self.summary,
            "factors_used": self.factors_used,
        }

    def render(self, fmt: str) -> str:
        if fmt == "json":
            return to_json(self.as_dict())
        if fmt == "csv":
            return to_csv(self.rows, self.columns)
        if fmt == "table":
            return to_table(self)
        raise ValueError(f"unknown format {fmt!r}")


def to_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _flat(row: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in row.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flat(v, key + "."))
        elif isinstance(v, (list, tuple)):
            out[key] = ";".join(str(x) for x in v)
        else:
            out[key] = v
    return out


def _columns(rows: list[dict], columns: list[str] | None) -> list[str]:
    if columns:
        return columns
    seen: dict[str, None] = {}
    for r in rows:
        for k in r:
            seen.setdefault(k, None)
    return list(seen)


def to_csv(rows: list[dict], columns: list[str] | None = None) -> str:
    flat = [_flat({k: v for k, v in r.items() if k != "display"}) for r in rows]
    cols = _columns(flat, [c for c in columns or [] if not c.startswith("display")] or None)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for r in flat:
        writer.writerow({k: ("" if r.get(k) is None else _csv_value(r.get(k))) for k in cols})
    return buf.getvalue()


def _csv_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return v


def _cell(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return round_display(v)
    return str(v)


def to_table(doc: ReportDocument) -> str:
    lines = [f"{doc.command}" + (f"  {doc.window['from']} .. {doc.window['to']}" if doc.window else "")]
    if doc.rows:
        flat = [_flat({k: v for k, v in r.items() if k != "display"}) for r in doc.rows]
        cols = [c for c in _columns(flat, doc.columns) if not c.startswith("display")]
        cells = [[_cell(r.get(c)) for c in cols] for r in flat]
        widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
        lines.append("  ".join(c.ljust(w) for c, w in zip(cols, widths)).rstrip())
        lines.append("  ".join("-" * w for w in widths))
        for row in cells:
            lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip())
    for k, v in doc.summary.items():
        if isinstance(v, (dict, list)):
            continue
        lines.append(f"{k}: {_cell(v)}")
    return "\n".join(lines) + "\n"


def display(values: dict, places: int = 2) -> dict:
    """Rounded string twins of the float entries of ``values``."""
    return {k: round_display(v, places) for k, v in values.items() if isinstance(v, float)}
