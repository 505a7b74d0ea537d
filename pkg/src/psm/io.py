"""Text formats: .xyz point clouds, PSGRID occupancy grids, JSON shape specs.

All writers emit the shortest decimal representation that round-trips to the
same float64 (with a trailing ".0" dropped), so write then read is exact and
files stay human-readable. All parsers report 1-based line numbers.
"""

import json

import numpy as np

from .core import validate
from .errors import DimensionMismatch, ParseError
from .meanshape import spec_from_dict
from .voxel import OccupancyGrid

GRID_HEADER = "PSGRID 1"


def fmt_float(x):
    """Shortest exact decimal for a float64; integral values lose the '.0'."""
    s = repr(float(x))
    if s.endswith(".0"):
        s = s[:-2]
    return s


def _parse_floats(tokens, lineno):
    out = []
    for tok in tokens:
        try:
            v = float(tok)
        except ValueError:
            raise ParseError(lineno, f"bad number {tok!r}") from None
        if not np.isfinite(v):
            raise ParseError(lineno, "non-finite coordinate")
        out.append(v)
    return out


def read_xyz(path):
    """Read a point set: one `x y z` line per point.

    Blank lines and lines starting with '#' are skipped.
    """
    points = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.split()
            if len(tokens) != 3:
                raise ParseError(lineno, "expected 3 tokens")
            points.append(_parse_floats(tokens, lineno))
    if not points:
        return np.empty((0, 3))
    return np.array(points)


def write_xyz(ps, path):
    pts = validate(ps)
    with open(path, "w", newline="\n") as fh:
        for p in pts:
            fh.write(f"{fmt_float(p[0])} {fmt_float(p[1])} {fmt_float(p[2])}\n")


def read_grid(path):
    """Read a PSGRID 1 occupancy grid.

    Format: header line `PSGRID 1`, dims line `D D D` (cubic), origin line
    `ox oy oz`, cell-size line `h`, then D^3 whitespace-separated values in
    [0, 1], z fastest and x slowest.
    """
    with open(path) as fh:
        lines = fh.read().split("\n")
    if not lines or lines[0] != GRID_HEADER:
        raise ParseError(1, f"expected header {GRID_HEADER!r}")
    if len(lines) < 4:
        raise ParseError(len(lines), "truncated grid file")
    dim_tokens = lines[1].split()
    if len(dim_tokens) != 3:
        raise ParseError(2, "expected 3 dims")
    try:
        dx, dy, dz = (int(t) for t in dim_tokens)
    except ValueError:
        raise ParseError(2, "dims must be integers") from None
    if not dx == dy == dz:
        raise DimensionMismatch(f"grid must be cubic, got {dx} {dy} {dz}")
    if dx < 1:
        raise ParseError(2, "dims must be >= 1")
    origin_tokens = lines[2].split()
    if len(origin_tokens) != 3:
        raise ParseError(3, "expected 3 origin coordinates")
    origin = _parse_floats(origin_tokens, 3)
    size_tokens = lines[3].split()
    if len(size_tokens) != 1:
        raise ParseError(4, "expected a single cell size")
    h = _parse_floats(size_tokens, 4)[0]
    if not h > 0:
        raise ParseError(4, "cell size must be > 0")
    values = []
    for lineno, line in enumerate(lines[4:], start=5):
        for v in _parse_floats(line.split(), lineno):
            if not 0.0 <= v <= 1.0:
                raise ParseError(lineno, f"value {v!r} outside [0, 1]")
            values.append(v)
    expected = dx ** 3
    if len(values) != expected:
        raise DimensionMismatch(f"expected {expected} values, got {len(values)}")
    grid = np.array(values).reshape(dx, dx, dx)
    return OccupancyGrid(dx, origin, h, grid)


def write_grid(g, path):
    d = g.dims
    if (g.values < 0.0).any() or (g.values > 1.0).any():
        raise ValueError("grid values outside [0, 1]; saturate or binarize first")
    with open(path, "w", newline="\n") as fh:
        fh.write(GRID_HEADER + "\n")
        fh.write(f"{d} {d} {d}\n")
        fh.write(" ".join(fmt_float(c) for c in g.origin) + "\n")
        fh.write(fmt_float(g.cell_size) + "\n")
        flat = g.values.reshape(d * d, d)  # one z-run per line
        for row in flat:
            fh.write(" ".join(fmt_float(v) for v in row) + "\n")


def read_distribution_spec(path):
    """Read and validate a JSON shape-distribution spec, filling defaults."""
    with open(path) as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(e.lineno, e.msg) from None
    if not isinstance(data, dict):
        raise ParseError(1, "expected a JSON object")
    return spec_from_dict(data)
