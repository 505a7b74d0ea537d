"""Built-in invariant suite, runnable from the installed binary.

Each check re-derives its expectation independently (linear scans, explicit
enumeration, hand examples) rather than trusting the module under test.
Kept fast enough for routine use; the pytest suite covers the same ground
at larger sizes.
"""

import itertools
import json
import os
import tempfile

import numpy as np

from . import io as psio
from .chamfer import build_kdtree, chamfer_distance
from .core import RandomSource, bounding_box
from .emd import AuctionParams, emd, emd_auction, emd_exact
from .errors import KOutOfRange, ParseError, UnknownFamily
from .losses import CandidateBundle, batch_loss, mon_loss
from .meanshape import (SgdConfig, ShapeDistributionSpec, corner_regions,
                        draw_shape, optimize_mean_shape)
from .sampling import farthest_point_sample, random_subsample
from .voxel import OccupancyGrid, binarize, grid_unit_scale, iou, splat


def _nn_scan(q, pts):
    d2 = ((q[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1), d2.min(axis=1)


def check_core_bounding_box():
    rng = RandomSource(11)
    for _ in range(20):
        pts = rng.gen.normal(size=(rng.gen.integers(1, 50), 3))
        lo, hi = bounding_box(pts)
        assert (pts >= lo).all() and (pts <= hi).all()
    lo, hi = bounding_box([(-1, 0, 2), (3, -2, 1)])
    assert lo.tolist() == [-1, -2, 1] and hi.tolist() == [3, 0, 2]


def check_core_random_reproducible():
    a = RandomSource(42).random(100)
    b = RandomSource(42).random(100)
    assert np.array_equal(a, b)
    kids1 = [r.random(10) for r in RandomSource(7).split(3)]
    kids2 = [r.random(10) for r in RandomSource(7).split(3)]
    for x, y in zip(kids1, kids2):
        assert np.array_equal(x, y)


def check_io_roundtrips():
    rng = RandomSource(3)
    pts = rng.gen.normal(size=(200, 3)) * 10.0 ** rng.gen.integers(-8, 8, (200, 1))
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "t.xyz")
        psio.write_xyz(pts, path)
        back = psio.read_xyz(path)
        assert np.array_equal(pts, back)
        gpath = os.path.join(d, "t.grid")
        grid = OccupancyGrid(5, [0.5, -1.0, 2.0], 0.25,
                             rng.gen.random((5, 5, 5)))
        psio.write_grid(grid, gpath)
        gback = psio.read_grid(gpath)
        assert np.array_equal(grid.values, gback.values)
        assert np.array_equal(grid.origin, gback.origin)
        assert grid.cell_size == gback.cell_size
        spath = os.path.join(d, "s.json")
        with open(spath, "w") as fh:
            json.dump({"family": "circle_radius", "r_min": 0.5, "r_max": 1.5,
                       "n_points": 64}, fh)
        spec = psio.read_distribution_spec(spath)
        assert spec.params["r_min"] == 0.5 and spec.n_points == 64
        with open(spath, "w") as fh:
            json.dump({"family": "torus"}, fh)
        try:
            psio.read_distribution_spec(spath)
            raise AssertionError("UnknownFamily not raised")
        except UnknownFamily:
            pass
        with open(path, "w") as fh:
            fh.write("0 0\n")
        try:
            psio.read_xyz(path)
            raise AssertionError("ParseError not raised")
        except ParseError as e:
            assert e.line == 1


def check_chamfer_hand_values():
    res = chamfer_distance([(0, 0, 0), (1, 1, 1)], [(0, 0, 0), (1, 1, 1)],
                           want_grad=True)
    assert res.value == 0.0
    assert np.all(res.grad_a == 0) and np.all(res.grad_b == 0)
    res = chamfer_distance([(0, 0, 0)], [(1, 0, 0)], want_grad=True)
    assert abs(res.value - 2.0) < 1e-15
    assert np.allclose(res.grad_a, [[-4.0, 0.0, 0.0]])
    res = chamfer_distance([(0, 0, 0), (10, 0, 0)], [(1, 0, 0)])
    assert abs(res.value - 83.0) < 1e-12


def check_chamfer_invariances():
    rng = RandomSource(5)
    for _ in range(10):
        a = rng.gen.random((30, 3))
        b = rng.gen.random((40, 3))
        v = chamfer_distance(a, b).value
        assert v >= 0
        assert abs(chamfer_distance(b, a).value - v) < 1e-12 * max(v, 1)
        p = rng.gen.permutation(len(a))
        assert abs(chamfer_distance(a[p], b).value - v) < 1e-12 * max(v, 1)
        t = rng.gen.normal(size=3)
        assert abs(chamfer_distance(a + t, b + t).value - v) < 1e-9 * max(v, 1)
    sh = RandomSource(6).gen.permutation(20)
    a = RandomSource(9).gen.random((20, 3))
    assert chamfer_distance(a, a[sh]).value == 0.0


def check_chamfer_backends_and_tree():
    rng = RandomSource(8)
    for n in (1, 2, 17, 128, 512):
        a = rng.gen.random((n, 3))
        b = rng.gen.random((max(1, n // 2), 3))
        vb = chamfer_distance(a, b, backend="brute").value
        vk = chamfer_distance(a, b, backend="kdtree").value
        assert abs(vb - vk) <= 1e-12 * max(vb, 1e-30)
    pts = rng.gen.random((500, 3))
    pts[100:200] = pts[0]  # duplicates
    pts[:, 2] = 0.25  # planar degeneracy
    tree = build_kdtree(pts)
    q = rng.gen.random((100, 3))
    ti, td2 = tree.query(q)
    si, sd2 = _nn_scan(q, pts)
    assert np.array_equal(td2, sd2) and np.array_equal(ti, si)


def check_chamfer_gradient_fd():
    rng = RandomSource(12)
    a = rng.gen.random((8, 3))
    b = rng.gen.random((9, 3)) + 2.0  # offset keeps margins comfortable
    res = chamfer_distance(a, b, want_grad=True)
    h = 1e-5
    for i in (0, 3):
        for c in range(3):
            ap = a.copy(); ap[i, c] += h
            am = a.copy(); am[i, c] -= h
            fd = (chamfer_distance(ap, b).value
                  - chamfer_distance(am, b).value) / (2 * h)
            an = res.grad_a[i, c]
            assert abs(fd - an) <= 1e-4 * max(abs(an), 1e-3)


def check_emd_exact_vs_enumeration():
    rng = RandomSource(21)
    for _ in range(30):
        s = int(rng.integers(1, 7))
        a = rng.gen.random((s, 3))
        b = rng.gen.random((s, 3))
        cost = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
        best = min(cost[range(s), p].sum()
                   for p in itertools.permutations(range(s)))
        res, asg = emd_exact(a, b)
        assert abs(res.value - best) <= 1e-10 * max(best, 1e-30)
        assert sorted(asg.perm.tolist()) == list(range(s))


def check_emd_metric_properties():
    rng = RandomSource(22)
    for _ in range(15):
        s = int(rng.integers(1, 6))
        a = rng.gen.random((s, 3))
        b = rng.gen.random((s, 3))
        c = rng.gen.random((s, 3))
        ab = emd_exact(a, b)[0].value
        ba = emd_exact(b, a)[0].value
        assert abs(ab - ba) <= 1e-10 * max(ab, 1e-30)
        ac = emd_exact(a, c)[0].value
        cb = emd_exact(c, b)[0].value
        assert ab <= ac + cb + 1e-9
        assert emd_exact(a, a[rng.gen.permutation(s)])[0].value <= 1e-12


def check_emd_auction_sound():
    rng = RandomSource(23)
    for s in (32, 64):
        for _ in range(5):
            a = rng.gen.random((s, 3))
            b = rng.gen.random((s, 3))
            exact = emd_exact(a, b)[0].value
            res, _, achieved = emd_auction(a, b)
            assert res.value >= exact - 1e-9
            assert res.value <= (1 + achieved) * exact + 1e-9
    a = rng.gen.random((50, 3))
    res, _, achieved = emd_auction(a, a.copy())
    assert res.value == 0.0 and achieved == 0.0


def check_emd_dispatcher():
    rng = RandomSource(24)
    a = rng.gen.random((10, 3))
    b = rng.gen.random((10, 3))
    assert emd(a, b).backend == "exact"
    a = rng.gen.random((300, 3))
    b = rng.gen.random((300, 3))
    res = emd(a, b)
    assert res.backend == "auction" and res.achieved_eps is not None


def check_sampling_fps():
    line = np.array([[float(i), 0.0, 0.0] for i in range(11)])
    out = farthest_point_sample(line, 3, start_index=0)
    assert out[:, 0].tolist() == [0.0, 10.0, 5.0]
    rng = RandomSource(31)
    pts = rng.gen.random((60, 3))
    sel = farthest_point_sample(pts, 12, seed=4)
    # greedy property, recomputed from scratch
    for i in range(1, 12):
        chosen = sel[:i]
        d2 = ((pts[:, None, :] - chosen[None, :, :]) ** 2).sum(axis=2).min(axis=1)
        best = d2.max()
        picked = ((sel[i] - pts) ** 2).sum(axis=1).min()
        taken = ((chosen - sel[i]) ** 2).sum(axis=1).min()
        assert abs(taken - best) < 1e-12 and picked < 1e-12
    perm = farthest_point_sample(pts, len(pts), seed=0)
    assert np.array_equal(np.sort(perm, axis=0), np.sort(pts, axis=0))


def check_sampling_subsample():
    rng = RandomSource(32)
    pts = rng.gen.random((40, 3))
    s1 = random_subsample(pts, 15, seed=9)
    s2 = random_subsample(pts, 15, seed=9)
    assert np.array_equal(s1, s2)
    rows = {tuple(p) for p in pts}
    assert all(tuple(p) in rows for p in s1)
    try:
        random_subsample(pts, 0, seed=1)
        raise AssertionError("KOutOfRange not raised")
    except KOutOfRange:
        pass


def check_voxel_splat_cases():
    origin = [0.0, 0.0, 0.0]
    g = splat([[1.5, 2.5, 3.5]], 8, origin, 1.0)
    assert g.values[1, 2, 3] == 1.0 and g.values.sum() == 1.0
    g = splat([[2.0, 2.5, 2.5]], 8, origin, 1.0)
    assert g.values[1, 2, 2] == 0.5 and g.values[2, 2, 2] == 0.5
    g = splat([[3.0, 3.0, 3.0]], 8, origin, 1.0)
    block = g.values[2:4, 2:4, 2:4]
    assert np.all(block == 0.125) and g.values.sum() == 1.0
    rng = RandomSource(41)
    pts = 1.0 + 5.0 * rng.gen.random((20, 3))  # interior of an 8^3 grid
    raw = splat(pts, 8, origin, 1.0, saturate=False)
    assert abs(raw.values.sum() - 20.0) < 1e-12
    shifted = splat(pts + [1.0, 0.0, 0.0], 8, origin, 1.0, saturate=False)
    assert np.allclose(shifted.values[1:, :, :], raw.values[:-1, :, :], atol=1e-12)


def check_voxel_iou_and_scale():
    v1 = np.zeros((4, 4, 4)); v1[0, 0, 0] = 1; v1[1, 1, 1] = 1
    v2 = v1.copy(); v2[2, 2, 2] = 1; v2[3, 3, 3] = 1
    g1 = OccupancyGrid(4, [0, 0, 0], 1.0, v1)
    g2 = OccupancyGrid(4, [0, 0, 0], 1.0, v2)
    assert iou(g1, g1) == 1.0
    assert iou(g1, g2) == 0.5 and iou(g2, g1) == 0.5
    g3 = OccupancyGrid(4, [0, 0, 0], 1.0, np.zeros((4, 4, 4)))
    assert iou(g3, g3) == 1.0
    disj = OccupancyGrid(4, [0, 0, 0], 1.0, np.zeros((4, 4, 4)))
    disj.values[3, 0, 0] = 1
    assert iou(g1, disj) == 0.0
    assert grid_unit_scale(32, 1.0) == 3.2
    frac = OccupancyGrid(2, [0, 0, 0], 1.0, np.full((2, 2, 2), 0.4))
    bin1 = binarize(frac, 0.25)
    assert np.array_equal(binarize(bin1, 0.25).values, bin1.values)


def check_losses_mon():
    rng = RandomSource(51)
    for _ in range(10):
        gt = rng.gen.random((12, 3))
        cands = [rng.gen.random((12, 3)) for _ in range(4)]
        single = mon_loss(CandidateBundle(cands[:1], gt, "cd"))
        assert single[0] == chamfer_distance(cands[0], gt).value
        assert single[1] == 0
        prev = single[0]
        for n in range(2, 5):
            value, _ = mon_loss(CandidateBundle(cands[:n], gt, "cd"))
            assert value <= prev + 1e-15
            prev = value
    pairs = [(rng.gen.random((8, 3)), rng.gen.random((8, 3))) for _ in range(6)]
    v1 = batch_loss(pairs, "cd")
    v2 = batch_loss(list(reversed(pairs)), "cd")
    assert abs(v1 - v2) <= 1e-10 * max(v1, 1)


def check_meanshape_draws():
    rng = RandomSource(61)
    for family in ("circle_radius", "spiky_arc", "corner_square", "bar_disk"):
        spec = ShapeDistributionSpec(family, n_points=64)
        s = draw_shape(spec, rng)
        assert s.shape == (64, 3) and np.all(s[:, 2] == 0.0)
    spec = ShapeDistributionSpec("circle_radius", n_points=128,
                                 params={"r_min": 1.0, "r_max": 1.0})
    s = draw_shape(spec, rng)
    r = np.linalg.norm(s[:, :2] - [0.5, 0.5], axis=1)
    assert np.allclose(r, 1.0, atol=1e-12)
    spec = ShapeDistributionSpec("bar_disk", n_points=64, params={"p_disk": 0.0})
    for _ in range(5):
        s = draw_shape(spec, rng)
        assert np.all(np.abs(s[:, 1] - 0.5) <= 0.0500001)  # bar outline only
    spec = ShapeDistributionSpec("corner_square", n_points=32)
    counts = np.zeros(4)
    boxes = corner_regions(spec)
    for _ in range(2000):
        s = draw_shape(spec, rng)
        for k, (x0, y0, x1, y1) in enumerate(boxes):
            if np.any((s[:, 0] >= x0) & (s[:, 0] <= x1)
                      & (s[:, 1] >= y0) & (s[:, 1] <= y1)):
                counts[k] += 1
    freq = counts / 2000
    assert np.all(np.abs(freq - 0.25) < 0.04), freq


def check_meanshape_descends():
    # Degenerate distribution (fixed radius): every draw is the same point
    # set, so the optimum is an exact overlay and the loss should collapse.
    spec = ShapeDistributionSpec("circle_radius", n_points=32,
                                 params={"r_min": 0.3, "r_max": 0.3})
    cfg = SgdConfig(metric="cd", steps=600, batch=2, lr0=0.4, t_half=40.0,
                    m=64, seed=3)
    x, trace = optimize_mean_shape(spec, cfg)
    assert trace[-1] < 1e-3 * trace[0], ("cd", trace[0], trace[-1])

    # Matching-based variant needs m == n and a schedule whose final step
    # size is tiny: its gradients are unit vectors, so points orbit their
    # targets at roughly the current learning rate until it decays away.
    spec = ShapeDistributionSpec("circle_radius", n_points=16,
                                 params={"r_min": 0.3, "r_max": 0.3})
    cfg = SgdConfig(metric="emd", steps=3000, batch=1, lr0=0.3, t_half=4.0,
                    seed=3)
    x, trace = optimize_mean_shape(spec, cfg)
    assert trace[-1] < 1e-3 * trace[0], ("emd", trace[0], trace[-1])


def check_auction_params_surface():
    p = AuctionParams()
    p.check()
    try:
        AuctionParams(scaling_factor=1.5).check()
        raise AssertionError("bad scaling_factor accepted")
    except ValueError:
        pass


CHECKS = [
    ("core.bounding_box", check_core_bounding_box),
    ("core.random_source", check_core_random_reproducible),
    ("io.roundtrips", check_io_roundtrips),
    ("chamfer.hand_values", check_chamfer_hand_values),
    ("chamfer.invariances", check_chamfer_invariances),
    ("chamfer.backends", check_chamfer_backends_and_tree),
    ("chamfer.gradient_fd", check_chamfer_gradient_fd),
    ("emd.exact_vs_enumeration", check_emd_exact_vs_enumeration),
    ("emd.metric_properties", check_emd_metric_properties),
    ("emd.auction_soundness", check_emd_auction_sound),
    ("emd.dispatcher", check_emd_dispatcher),
    ("emd.params_validation", check_auction_params_surface),
    ("sampling.fps", check_sampling_fps),
    ("sampling.subsample", check_sampling_subsample),
    ("voxel.splat_cases", check_voxel_splat_cases),
    ("voxel.iou_scale", check_voxel_iou_and_scale),
    ("losses.mon", check_losses_mon),
    ("meanshape.draws", check_meanshape_draws),
    ("meanshape.descends", check_meanshape_descends),
]


def run_selftest(json_mode=False):
    failures = []
    results = []
    for name, fn in CHECKS:
        try:
            fn()
            results.append({"check": name, "ok": True})
            if not json_mode:
                print(f"ok   {name}")
        except Exception as e:  # report every failure, keep going
            failures.append(name)
            results.append({"check": name, "ok": False, "detail": str(e)})
            if not json_mode:
                print(f"FAIL {name}: {e}")
    if json_mode:
        print(json.dumps({"command": "selftest", "failures": len(failures),
                          "results": results}))
    elif failures:
        print(f"{len(failures)} of {len(CHECKS)} checks failed")
    else:
        print(f"all {len(CHECKS)} checks passed")
    return failures
