"""Plain-text grid files.

::

    MSG1 <rows> <cols> <h> <kind>
    <rows-1 lines of cols-1 weights>          (ConformalWeight)
    AREA <factor>                             (NormField, one norm for every cell)
    BALL x1 y1 x2 y2 ...

Floats are written with ``repr`` so that a save/load cycle is exact.  Lines
starting with ``#`` are comments; ``# meta {...}`` carries the generator
metadata as JSON.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from . import norms
from .errors import GridError
from .grid import Kind, MetricGrid, make_uniform_norm, make_weighted

MAGIC = "MSG1"


def dumps(grid: MetricGrid) -> str:
    lines = [f"{MAGIC} {grid.rows} {grid.cols} {float(grid.h)!r} {grid.kind.value}"]
    if grid.meta:
        lines.append("# meta " + json.dumps(grid.meta, sort_keys=True, default=str))
    if grid.kind is Kind.CONFORMAL_WEIGHT:
        for row in grid.weight:
            lines.append(" ".join(repr(float(w)) for w in row))
    else:
        if len(np.unique(grid.ball_index)) != 1:
            raise GridError("the grid file format stores a single norm; this field varies by cell")
        ball = grid.balls[int(grid.ball_index[0, 0])]
        lines.append(f"AREA {float(grid.area_factor[0, 0])!r}")
        lines.append("BALL " + " ".join(repr(float(x)) for x in np.asarray(ball).ravel()))
    return "\n".join(lines) + "\n"


def loads(text: str) -> MetricGrid:
    lines, meta = [], {}
    for ln in text.splitlines():
        if ln.startswith("# meta "):
            try:
                meta = json.loads(ln[len("# meta "):])
            except json.JSONDecodeError as exc:
                raise GridError(f"bad meta line: {exc}") from None
        elif ln.strip() and not ln.lstrip().startswith("#"):
            lines.append(ln)
    if not lines:
        raise GridError("empty grid file")
    head = lines[0].split()
    if len(head) != 5 or head[0] != MAGIC:
        raise GridError(f"bad header {lines[0]!r}")
    try:
        rows, cols, h = int(head[1]), int(head[2]), float(head[3])
        kind = Kind(head[4])
    except ValueError as exc:
        raise GridError(f"bad header {lines[0]!r}: {exc}") from None
    if rows < 2 or cols < 2 or not (h > 0 and math.isfinite(h)):
        raise GridError(f"bad dimensions in header {lines[0]!r}")
    body = lines[1:]
    if kind is Kind.CONFORMAL_WEIGHT:
        if len(body) != rows - 1:
            raise GridError(f"expected {rows - 1} weight rows, found {len(body)}")
        try:
            w = np.array([[float(x) for x in ln.split()] for ln in body])
        except ValueError as exc:
            raise GridError(f"bad weight value: {exc}") from None
        if w.shape != (rows - 1, cols - 1):
            raise GridError(f"weight rows must hold {cols - 1} values each")
        return make_weighted(w, h, meta)
    fields = {ln.split()[0]: ln.split()[1:] for ln in body}
    if set(fields) != {"AREA", "BALL"}:
        raise GridError("NormField files need exactly one AREA and one BALL line")
    try:
        area = float(fields["AREA"][0])
        ball = np.array([float(x) for x in fields["BALL"]]).reshape(-1, 2)
    except (ValueError, IndexError) as exc:
        raise GridError(f"bad norm description: {exc}") from None
    grid = make_uniform_norm(rows, cols, h, ball, meta or None)
    if not math.isclose(area, norms.area_factor(norms.as_symmetric_polygon(ball)), rel_tol=1e-12):
        raise GridError(f"AREA {area!r} does not match the ball's area factor")
    return grid


def save_grid(grid: MetricGrid, path) -> None:
    Path(path).write_text(dumps(grid))


def load_grid(path) -> MetricGrid:
    return loads(Path(path).read_text())
