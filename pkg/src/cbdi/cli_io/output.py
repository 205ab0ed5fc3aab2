"""Result serialisation: versioned CSV, a JSON run record, gnuplot data blocks.

Floats are written with repr, which round-trips exactly, so identical inputs
give byte-identical files.
"""

import csv
import io
import json
import math
import os

SCHEMA_PREFIX = "# schema: cbdi."


def format_value(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if hasattr(value, "item"):  # numpy scalars
        return format_value(value.item())
    return str(value)


def csv_text(schema, version, columns, rows):
    """Schema line, header row, then one line per row; rows are sequences in column order."""
    buffer = io.StringIO()
    buffer.write(f"{SCHEMA_PREFIX}{schema} v{version}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} fields, schema {schema} has {len(columns)}")
        writer.writerow([format_value(v) for v in row])
    return buffer.getvalue()


def read_csv(text):
    """(schema line, header, rows of strings) from csv_text output."""
    lines = text.splitlines()
    if not lines or not lines[0].startswith(SCHEMA_PREFIX):
        raise ValueError("missing schema line")
    reader = list(csv.reader(lines[1:]))
    return lines[0], reader[0], reader[1:]


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return format_value(value)
    if hasattr(value, "item"):
        return _jsonable(value.item())
    return value


def record_text(record):
    """Compact, key-sorted JSON; non-finite floats become strings."""
    return json.dumps(_jsonable(record), sort_keys=True, separators=(",", ":")) + "\n"


def gnuplot_blocks(columns, rows, group_by):
    """Whitespace-separated data, one block per value of column group_by, blocks split by two blank lines."""
    key = columns.index(group_by)
    lines = ["# " + " ".join(columns)]
    for i, row in enumerate(rows):
        if i and row[key] != rows[i - 1][key]:
            lines.extend(["", ""])
        lines.append(" ".join(format_value(v).replace(" ", "_") or "-" for v in row))
    return "\n".join(lines) + "\n"


def write_outputs(out_dir, files):
    """Write {name: text} under out_dir; returns the paths written."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for name in sorted(files):
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8", newline="") as handle:
            handle.write(files[name])
        paths.append(path)
    return paths


def table_text(columns, rows):
    """Fixed-width plain-text table for the terminal."""
    cells = [[str(c) for c in columns]] + [[format_value(v) for v in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(columns))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
