"""Comma-separated result tables with a schema comment line.

Every file starts with ``# schema: risframe-<kind>/v<version>`` followed by
the column header. Floats are written with ``repr`` so that parsing an
emitted table gives back exactly the same values.
"""

from __future__ import annotations

import csv
import dataclasses
import io
from pathlib import Path
from typing import Any, Sequence

SCHEMA_VERSION = 1
SCHEMA_PREFIX = "# schema: "


class OutputError(OSError):
    pass


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(value: str, kind: type):
    if kind is bool:
        if value not in ("true", "false"):
            raise ValueError(f"not a boolean: {value!r}")
        return value == "true"
    if kind is int:
        return int(value)
    if kind is float:
        return float(value)
    return value


def schema_line(kind: str, version: int = SCHEMA_VERSION) -> str:
    return f"{SCHEMA_PREFIX}risframe-{kind}/v{version}"


def emit_table(kind: str, columns: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    """Render a table; an empty ``rows`` gives a header-only file."""
    buf = io.StringIO()
    buf.write(schema_line(kind) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} values for {len(columns)} columns")
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def parse_table(text: str, types: Sequence[type] | None = None) -> tuple[str, list[str], list[list[Any]]]:
    """Inverse of ``emit_table``: returns ``(kind, columns, rows)``.

    Without ``types`` every value stays a string.
    """
    lines = text.splitlines()
    if not lines or not lines[0].startswith(SCHEMA_PREFIX):
        raise ValueError("missing schema line")
    tag = lines[0][len(SCHEMA_PREFIX):].strip()
    name, _, version = tag.rpartition("/v")
    if not name.startswith("risframe-") or not version.isdigit():
        raise ValueError(f"bad schema tag {tag!r}")
    if int(version) != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema version {version}")
    reader = csv.reader(lines[1:])
    try:
        columns = next(reader)
    except StopIteration:
        raise ValueError("missing header row") from None
    rows = []
    for raw in reader:
        if len(raw) != len(columns):
            raise ValueError(f"row has {len(raw)} values for {len(columns)} columns")
        rows.append([_parse(v, t) for v, t in zip(raw, types)] if types else list(raw))
    return name[len("risframe-"):], columns, rows


def emit_records(kind: str, records: Sequence[Any], record_type: type) -> str:
    """Table of dataclass instances, one column per field."""
    names = [f.name for f in dataclasses.fields(record_type)]
    return emit_table(kind, names, [[getattr(r, n) for n in names] for r in records])


def parse_records(text: str, record_type: type) -> list[Any]:
    hints = {f.name: f.type for f in dataclasses.fields(record_type)}
    lookup = {"int": int, "float": float, "bool": bool, "str": str, int: int, float: float, bool: bool, str: str}
    kind_types = [lookup[hints[n]] for n in hints]
    _, columns, rows = parse_table(text, kind_types)
    if columns != list(hints):
        raise ValueError(f"columns {columns} do not match {list(hints)}")
    return [record_type(*row) for row in rows]


def write_text(path: str | Path, text: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return path


def table_body(text: str) -> str:
    """The table without its schema line, for byte comparisons across runs."""
    return text.split("\n", 1)[1] if "\n" in text else ""

