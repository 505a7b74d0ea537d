"""Mean shapes of random shape distributions under either metric.

Minimizes E_{s ~ S}[d(x, s)] over the coordinates of a free point set x by
plain stochastic gradient descent, for four families of random planar shapes
(all embedded at z = 0 on a roughly unit-square canvas):

  circle_radius  a circle whose radius varies per draw
  spiky_arc      a crown-shaped arc translated along the main diagonal
  corner_square  a bar with a square attached at a random corner
  bar_disk       a bar with a disk beside it, present with probability p

Every drawn shape is n_points samples placed uniformly by arclength along
the shape's outline curves. The geometry constants below are defaults of
this implementation, chosen to fit the canvas; all are overridable through
ShapeDistributionSpec parameters.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .chamfer import chamfer_distance
from .core import RandomSource, coerce_rng, ordered_map, resolve_threads, validate
from .emd import emd
from .errors import (DivergenceDetected, EmptySet, InvalidParameter,
                     SizeMismatch, UnknownFamily)

FAMILY_DEFAULTS = {
    "circle_radius": {
        "center": [0.5, 0.5],
        "r_min": 0.2,
        "r_max": 0.4,
    },
    "spiky_arc": {
        "center": [0.35, 0.25],
        "radius": 0.18,
        "theta_start_deg": 210.0,
        "theta_end_deg": 330.0,
        "n_spikes": 7,
        "spike_height": 0.05,
        "travel": 0.4,
    },
    "corner_square": {
        "center": [0.5, 0.5],
        "bar_width": 0.6,
        "bar_height": 0.1,
        "square_size": 0.1,
    },
    "bar_disk": {
        "center": [0.5, 0.5],
        "bar_width": 0.6,
        "bar_height": 0.1,
        "disk_center": [0.88, 0.5],
        "disk_radius": 0.08,
        "p_disk": 0.5,
    },
}


def _require(cond, message):
    if not cond:
        raise InvalidParameter(message)


def _check_xy(params, key):
    v = params[key]
    _require(isinstance(v, (list, tuple)) and len(v) == 2,
             f"{key} must be a 2-element [x, y] list")
    params[key] = [float(v[0]), float(v[1])]


def _validate_params(family, params):
    if family == "circle_radius":
        _check_xy(params, "center")
        _require(params["r_min"] > 0, "r_min must be > 0")
        _require(params["r_max"] >= params["r_min"], "need r_min <= r_max")
    elif family == "spiky_arc":
        _check_xy(params, "center")
        _require(params["radius"] > 0, "radius must be > 0")
        _require(params["theta_end_deg"] > params["theta_start_deg"],
                 "need theta_start_deg < theta_end_deg")
        _require(int(params["n_spikes"]) >= 1, "n_spikes must be >= 1")
        params["n_spikes"] = int(params["n_spikes"])
        _require(params["spike_height"] >= 0, "spike_height must be >= 0")
        _require(params["travel"] >= 0, "travel must be >= 0")
    elif family == "corner_square":
        _check_xy(params, "center")
        for key in ("bar_width", "bar_height", "square_size"):
            _require(params[key] > 0, f"{key} must be > 0")
    elif family == "bar_disk":
        _check_xy(params, "center")
        _check_xy(params, "disk_center")
        for key in ("bar_width", "bar_height", "disk_radius"):
            _require(params[key] > 0, f"{key} must be > 0")
        _require(0.0 <= params["p_disk"] <= 1.0, "p_disk must lie in [0, 1]")


@dataclass
class ShapeDistributionSpec:
    """One shape family plus its geometry parameters and sampling controls.

    params holds family-specific keys; omitted keys take the documented
    defaults. seed drives auxiliary draws (e.g. plot silhouettes), not the
    optimizer, which carries its own seed in SgdConfig.
    """

    family: str
    n_points: int = 256
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILY_DEFAULTS:
            raise UnknownFamily(self.family, FAMILY_DEFAULTS)
        defaults = FAMILY_DEFAULTS[self.family]
        unknown = set(self.params) - set(defaults)
        if unknown:
            raise InvalidParameter(
                f"unknown parameter {sorted(unknown)[0]!r} for family {self.family}")
        merged = {**defaults, **self.params}
        _validate_params(self.family, merged)
        self.params = merged
        self.n_points = int(self.n_points)
        if self.n_points < 1:
            raise InvalidParameter("n_points must be >= 1")
        self.seed = int(self.seed)


def spec_from_dict(data):
    """Build a spec from a flat mapping (the JSON schema)."""
    d = dict(data)
    if "family" not in d:
        raise InvalidParameter("missing required key 'family'")
    family = d.pop("family")
    n_points = d.pop("n_points", 256)
    seed = d.pop("seed", 0)
    return ShapeDistributionSpec(family, n_points, seed, d)


def _rect(cx, cy, w, h):
    x0, x1 = cx - w / 2, cx + w / 2
    y0, y1 = cy - h / 2, cy + h / 2
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])


def _sample_pieces(pieces, n):
    """n points uniform by arclength over a mix of polylines and circles.

    pieces: ('poly', vertices, closed) or ('circle', center, radius).
    Placement is deterministic: positions (i + 1/2) / n of the total
    arclength. All randomness in a drawn shape comes from its hidden
    variables (radius, corner, travel, disk presence), so a family with
    those pinned is a genuinely degenerate distribution.
    """
    seg_a = []
    seg_b = []
    circles = []
    for piece in pieces:
        if piece[0] == "poly":
            verts = np.asarray(piece[1], dtype=np.float64)
            closed = piece[2]
            a = verts
            b = np.roll(verts, -1, axis=0) if closed else verts[1:]
            if not closed:
                a = verts[:-1]
            seg_a.append(a)
            seg_b.append(b)
        else:
            circles.append((np.asarray(piece[1], dtype=np.float64), float(piece[2])))
    if seg_a:
        seg_a = np.concatenate(seg_a)
        seg_b = np.concatenate(seg_b)
        seg_len = np.linalg.norm(seg_b - seg_a, axis=1)
    else:
        seg_a = np.empty((0, 2))
        seg_b = np.empty((0, 2))
        seg_len = np.empty(0)
    circ_len = np.array([2.0 * math.pi * r for _, r in circles])
    lengths = np.concatenate([seg_len, circ_len])
    total = lengths.sum()
    _require(total > 0, "shape outline has zero length")
    cum = np.cumsum(lengths)
    t = (np.arange(n) + 0.5) * (total / n)
    piece_idx = np.minimum(np.searchsorted(cum, t, side="right"), len(lengths) - 1)
    local = t - (cum[piece_idx] - lengths[piece_idx])
    out = np.empty((n, 2))
    on_seg = piece_idx < len(seg_len)
    if on_seg.any():
        i = piece_idx[on_seg]
        frac = local[on_seg] / seg_len[i]
        out[on_seg] = seg_a[i] + frac[:, None] * (seg_b[i] - seg_a[i])
    for k, (c, r) in enumerate(circles):
        mask = piece_idx == len(seg_len) + k
        if mask.any():
            ang = local[mask] / r
            out[mask] = c + r * np.column_stack([np.cos(ang), np.sin(ang)])
    return out


def _crown_vertices(center, radius, t0_deg, t1_deg, n_spikes, spike_height):
    # open zigzag polyline: valley vertices at the base radius, spike tips
    # halfway between them at radius + spike_height
    k = 2 * n_spikes
    theta = np.radians(np.linspace(t0_deg, t1_deg, k + 1))
    r = np.full(k + 1, radius)
    r[1::2] += spike_height
    return center + r[:, None] * np.column_stack([np.cos(theta), np.sin(theta)])


def corner_regions(spec):
    """The four square-attachment boxes of corner_square, as (x0, y0, x1, y1).

    Order: (+x, +y), (-x, +y), (-x, -y), (+x, -y) relative to the bar.
    """
    p = spec.params
    cx, cy = p["center"]
    x0, x1 = cx - p["bar_width"] / 2, cx + p["bar_width"] / 2
    y0, y1 = cy - p["bar_height"] / 2, cy + p["bar_height"] / 2
    s = p["square_size"]
    return [
        (x1, y1, x1 + s, y1 + s),
        (x0 - s, y1, x0, y1 + s),
        (x0 - s, y0 - s, x0, y0),
        (x1, y0 - s, x1 + s, y0),
    ]


def draw_shape(spec, rng):
    """One i.i.d. sample from the shape distribution: (n_points, 3) at z=0.

    The stream drives only the hidden variables; point placement along the
    resulting outline is the deterministic equal-arclength grid.
    """
    gen = coerce_rng(rng)
    p = spec.params
    if spec.family == "circle_radius":
        r = gen.uniform(p["r_min"], p["r_max"])
        pieces = [("circle", p["center"], r)]
    elif spec.family == "spiky_arc":
        t = gen.uniform(0.0, p["travel"])
        center = np.asarray(p["center"]) + t
        verts = _crown_vertices(center, p["radius"], p["theta_start_deg"],
                                p["theta_end_deg"], p["n_spikes"], p["spike_height"])
        pieces = [("poly", verts, False)]
    elif spec.family == "corner_square":
        corner = int(gen.integers(4))
        box = corner_regions(spec)[corner]
        cx, cy = p["center"]
        pieces = [
            ("poly", _rect(cx, cy, p["bar_width"], p["bar_height"]), True),
            ("poly", _rect((box[0] + box[2]) / 2, (box[1] + box[3]) / 2,
                           box[2] - box[0], box[3] - box[1]), True),
        ]
    elif spec.family == "bar_disk":
        cx, cy = p["center"]
        pieces = [("poly", _rect(cx, cy, p["bar_width"], p["bar_height"]), True)]
        if gen.random() < p["p_disk"]:
            pieces.append(("circle", p["disk_center"], p["disk_radius"]))
    else:
        raise UnknownFamily(spec.family, FAMILY_DEFAULTS)
    xy = _sample_pieces(pieces, spec.n_points)
    return np.column_stack([xy, np.zeros(len(xy))])


@dataclass
class SgdConfig:
    """Optimizer settings. Defaults complete in minutes at n_points=256.

    The step size decays as lr0 / (1 + t / t_half). m is the number of free
    points (None: match spec.n_points, which the assignment metric requires).
    """

    metric: str = "cd"
    steps: int = 2000
    batch: int = 8
    lr0: float = 0.5
    t_half: float = 100.0
    init: str = "uniform"
    m: int | None = None
    seed: int = 0

    def check(self):
        if self.metric not in ("cd", "emd"):
            raise ValueError(f"unknown metric {self.metric!r}; expected 'cd' or 'emd'")
        if self.steps < 1 or self.batch < 1:
            raise ValueError("steps and batch must be >= 1")
        if not self.lr0 > 0 or not self.t_half > 0:
            raise ValueError("lr0 and t_half must be > 0")
        if self.init != "uniform":
            raise ValueError(f"unknown init policy {self.init!r}")


def _loss_and_grad(x, shape, metric):
    if metric == "cd":
        res = chamfer_distance(x, shape, want_grad=True, backend="brute")
    else:
        res = emd(x, shape, want_grad=True)
    return res.value, res.grad_a


def optimize_mean_shape(spec, cfg, threads=None):
    """SGD over point coordinates. Returns (x_final, loss_trace).

    Each step draws a minibatch of shapes, averages the gradient of the
    metric with respect to x over the batch, and steps downhill. The trace
    records the minibatch mean distance per step. Divergence past 1e6 times
    the initial loss aborts.

    Per-shape gradient evaluations may run on a thread pool, but shapes are
    drawn serially and the batch sum is reduced in draw order, so the
    trajectory does not depend on the worker count.
    """
    cfg.check()
    m = spec.n_points if cfg.m is None else int(cfg.m)
    if cfg.metric == "emd" and m != spec.n_points:
        raise SizeMismatch(m, spec.n_points)
    if m < 1:
        raise InvalidParameter("m must be >= 1")
    nworkers = resolve_threads(threads)
    init_rng, draw_rng = RandomSource(cfg.seed).split(2)
    x = np.column_stack([init_rng.uniform(0.0, 1.0, (m, 2)), np.zeros(m)])
    trace = np.empty(cfg.steps)
    for t in range(cfg.steps):
        lr = cfg.lr0 / (1.0 + t / cfg.t_half)
        shapes = [draw_shape(spec, draw_rng) for _ in range(cfg.batch)]
        cur = x
        results = ordered_map(lambda s: _loss_and_grad(cur, s, cfg.metric),
                              shapes, threads=nworkers)
        loss = 0.0
        grad = np.zeros_like(x)
        for value, g in results:
            loss += value
            grad += g
        loss /= cfg.batch
        trace[t] = loss
        if t > 0 and loss > 1e6 * max(trace[0], 1e-30):
            raise DivergenceDetected(t, loss, trace[0])
        x = x - (lr / cfg.batch) * grad
    return x, trace


def emit_plot(x, spec, path):
    """Write a deterministic SVG: 20 silhouette draws in gray, x in red.

    The viewBox is computed from the plotted data with a margin, so every
    marker center lies inside it by construction.
    """
    x = validate(x)
    if len(x) == 0:
        raise EmptySet()
    sil_rng = RandomSource(spec.seed)
    silhouettes = [draw_shape(spec, sil_rng) for _ in range(20)]
    pts = np.concatenate(silhouettes + [x])[:, :2]
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    extent = float(max((hi - lo).max(), 1e-9))
    pad = 0.05 * extent
    scale = 380.0 / (extent + 2 * pad)
    span = (hi - lo + 2 * pad) * scale
    off = (np.array([400.0, 400.0]) - span) / 2.0

    def to_px(p):
        q = (p[:, :2] - lo + pad) * scale + off
        return np.column_stack([q[:, 0], 400.0 - q[:, 1]])  # flip y for SVG

    parts = ['<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 400 400">',
             '<rect width="400" height="400" fill="white"/>']
    for s in silhouettes:
        for px, py in to_px(s):
            parts.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="1.2" '
                         'fill="#bbbbbb" fill-opacity="0.6"/>')
    for px, py in to_px(x):
        parts.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="2.4" fill="#cc2222"/>')
    parts.append("</svg>")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")
