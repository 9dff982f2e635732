"""Constellation interchange files.

CSV layout::

    #gs4d-constellation v1,N=4,M=16,name=PM-QPSK
    0,0.7071067811865476,0.7071067811865476,...

Rows may appear in any order; labels must cover ``0..M-1`` exactly once.
A JSON mirror ``{"n_dims": N, "points": [[...], ...], "name": tag}`` with
rows in label order is accepted on load.
"""

import json
import re
from pathlib import Path

import numpy as np

from .constellation import LabeledConstellation
from .errors import DimensionMismatch, DuplicateLabel, InvalidConstellation, ParseError

HEADER_RE = re.compile(r"^#gs4d-constellation v1,N=(\d+),M=(\d+),name=(.*)$")


def format_float(x):
    return repr(float(x))


def constellation_to_csv(c):
    lines = [f"#gs4d-constellation v1,N={c.n_dims},M={c.n_points},name={c.name}"]
    for label, row in enumerate(c.points):
        lines.append(",".join([str(label)] + [format_float(v) for v in row]))
    return "\n".join(lines) + "\n"


def save_constellation(c, path):
    path = Path(path)
    if path.suffix.lower() == ".json":
        text = json.dumps({"n_dims": c.n_dims, "points": c.points.tolist(), "name": c.name})
        path.write_text(text + "\n")
    else:
        path.write_text(constellation_to_csv(c))


def load_constellation(path):
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        return parse_json(text)
    return parse_csv(text)


def parse_json(text):
    try:
        obj = json.loads(text)
        n_dims = int(obj["n_dims"])
        rows = obj["points"]
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"bad constellation JSON: {exc}") from exc
    for r, row in enumerate(rows, start=1):
        if len(row) != n_dims:
            raise DimensionMismatch(f"point {r} has {len(row)} coordinates, expected {n_dims}")
    try:
        return LabeledConstellation(np.array(rows, dtype=float), str(obj.get("name", "custom")))
    except InvalidConstellation as exc:
        raise ParseError(str(exc)) from exc


def parse_csv(text):
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty file", row=1)
    head = HEADER_RE.match(lines[0].strip())
    if head is None:
        raise ParseError("missing '#gs4d-constellation v1,N=..,M=..,name=..' header", row=1)
    n_dims, n_points, name = int(head.group(1)), int(head.group(2)), head.group(3)
    if n_points < 2 or n_points & (n_points - 1):
        raise ParseError(f"M={n_points} is not a power of two", row=1)
    body = [(i, ln) for i, ln in enumerate(lines[1:], start=2) if ln.strip()]
    if len(body) != n_points:
        raise ParseError(f"header declares M={n_points} but file has {len(body)} rows", row=1)
    points = np.full((n_points, n_dims), np.nan)
    seen = {}
    for line_no, line in body:
        cells = line.split(",")
        if len(cells) != n_dims + 1:
            raise DimensionMismatch(
                f"row {line_no}: {len(cells) - 1} coordinates, expected N={n_dims}"
            )
        try:
            label = int(cells[0])
        except ValueError:
            raise ParseError(f"label {cells[0]!r} is not an integer", row=line_no, column=1)
        if not 0 <= label < n_points:
            raise ParseError(f"label {label} outside 0..{n_points - 1}", row=line_no, column=1)
        if label in seen:
            raise DuplicateLabel(f"row {line_no}: label {label} already used on row {seen[label]}")
        seen[label] = line_no
        for col, cell in enumerate(cells[1:], start=2):
            try:
                points[label, col - 2] = float(cell)
            except ValueError:
                raise ParseError(f"{cell!r} is not a number", row=line_no, column=col)
    try:
        return LabeledConstellation(points, name)
    except InvalidConstellation as exc:
        raise ParseError(str(exc)) from exc
