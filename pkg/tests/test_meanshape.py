"""Shape distributions and the SGD mean-shape optimizer."""

import xml.etree.ElementTree as ET

import numpy as np
import pytest

from psm.core import RandomSource
from psm.errors import (DivergenceDetected, EmptySet, InvalidParameter,
                        SizeMismatch, UnknownFamily)
from psm.meanshape import (FAMILY_DEFAULTS, SgdConfig, ShapeDistributionSpec,
                           corner_regions, draw_shape, emit_plot,
                           optimize_mean_shape, spec_from_dict)


def ema(xs, window=50):
    alpha = 2.0 / (window + 1.0)
    acc = xs[0]
    out = []
    for v in xs:
        acc = alpha * v + (1 - alpha) * acc
        out.append(acc)
    return out


def radial_rms_dev(x, center):
    r = np.linalg.norm(x[:, :2] - np.asarray(center), axis=1)
    return float(np.sqrt(np.mean((r - r.mean()) ** 2)))


# ------------------------------------------------------------------- specs

def test_spec_defaults_and_overrides():
    spec = ShapeDistributionSpec("circle_radius")
    assert spec.params == FAMILY_DEFAULTS["circle_radius"]
    spec = ShapeDistributionSpec("circle_radius", params={"r_min": 0.3})
    assert spec.params["r_min"] == 0.3
    assert spec.params["r_max"] == FAMILY_DEFAULTS["circle_radius"]["r_max"]


def test_spec_rejects_bad_input():
    with pytest.raises(UnknownFamily):
        ShapeDistributionSpec("torus")
    with pytest.raises(InvalidParameter):
        ShapeDistributionSpec("circle_radius", params={"wobble": 1})
    with pytest.raises(InvalidParameter):
        ShapeDistributionSpec("circle_radius", params={"r_min": -1.0})
    with pytest.raises(InvalidParameter):
        ShapeDistributionSpec("circle_radius", params={"r_min": 0.5, "r_max": 0.2})
    with pytest.raises(InvalidParameter):
        ShapeDistributionSpec("bar_disk", params={"p_disk": 1.5})
    with pytest.raises(InvalidParameter):
        ShapeDistributionSpec("circle_radius", n_points=0)


def test_spec_from_dict_flat_schema():
    spec = spec_from_dict({"family": "spiky_arc", "n_points": 32, "seed": 5,
                           "travel": 0.2})
    assert spec.family == "spiky_arc"
    assert spec.n_points == 32 and spec.seed == 5
    assert spec.params["travel"] == 0.2
    with pytest.raises(InvalidParameter):
        spec_from_dict({"n_points": 32})


# ------------------------------------------------------------------- draws

def test_draw_counts_and_plane():
    rng = RandomSource(1)
    for family in FAMILY_DEFAULTS:
        spec = ShapeDistributionSpec(family, n_points=37)
        s = draw_shape(spec, rng)
        assert s.shape == (37, 3)
        assert not s[:, 2].any()  # embedded at z = 0


def test_degenerate_circle_radius():
    spec = ShapeDistributionSpec(
        "circle_radius", n_points=50,
        params={"center": [0.5, 0.5], "r_min": 1.0, "r_max": 1.0})
    s = draw_shape(spec, RandomSource(2))
    r = np.linalg.norm(s[:, :2] - [0.5, 0.5], axis=1)
    assert np.allclose(r, 1.0, atol=1e-12)


def test_circle_radius_within_range():
    spec = ShapeDistributionSpec("circle_radius", n_points=20)
    rng = RandomSource(3)
    for _ in range(50):
        s = draw_shape(spec, rng)
        r = np.linalg.norm(s[:, :2] - [0.5, 0.5], axis=1)
        assert (r >= spec.params["r_min"] - 1e-12).all()
        assert (r <= spec.params["r_max"] + 1e-12).all()


def test_draw_stream_deterministic():
    spec = ShapeDistributionSpec("bar_disk", n_points=31)
    d1 = [draw_shape(spec, RandomSource(11)) for _ in range(1)]
    a = [draw_shape(spec, rng) for rng in [RandomSource(8)] for _ in range(5)]
    b = [draw_shape(spec, rng) for rng in [RandomSource(8)] for _ in range(5)]
    for s1, s2 in zip(a, b):
        assert np.array_equal(s1, s2)
    assert d1[0].shape == (31, 3)


def test_corner_choice_frequency():
    spec = ShapeDistributionSpec("corner_square", n_points=64)
    boxes = corner_regions(spec)
    rng = RandomSource(13)
    counts = np.zeros(4, dtype=int)
    for _ in range(10_000):
        s = draw_shape(spec, rng)
        per_box = [np.count_nonzero(
            (s[:, 0] >= x0) & (s[:, 0] <= x1) & (s[:, 1] >= y0) & (s[:, 1] <= y1))
            for x0, y0, x1, y1 in boxes]
        counts[int(np.argmax(per_box))] += 1
    freq = counts / counts.sum()
    assert np.all(np.abs(freq - 0.25) <= 0.02)


def test_corner_regions_geometry():
    spec = ShapeDistributionSpec("corner_square")
    p = spec.params
    s = p["square_size"]
    for x0, y0, x1, y1 in corner_regions(spec):
        assert x1 - x0 == pytest.approx(s) and y1 - y0 == pytest.approx(s)
    # first region sits on the bar's upper-right corner
    x0, y0, _, _ = corner_regions(spec)[0]
    assert x0 == pytest.approx(p["center"][0] + p["bar_width"] / 2)
    assert y0 == pytest.approx(p["center"][1] + p["bar_height"] / 2)


def test_bar_disk_presence():
    never = ShapeDistributionSpec("bar_disk", n_points=64, params={"p_disk": 0.0})
    rng = RandomSource(4)
    draws = [draw_shape(never, rng) for _ in range(20)]
    for s in draws:
        assert np.array_equal(s, draws[0])  # no hidden variable left
        assert s[:, 0].max() <= 0.8 + 1e-12  # bar only

    always = ShapeDistributionSpec("bar_disk", n_points=64, params={"p_disk": 1.0})
    for _ in range(20):
        s = draw_shape(always, rng)
        assert s[:, 0].max() > 0.85  # disk points reach past the bar

    half = ShapeDistributionSpec("bar_disk", n_points=64)
    hits = sum(draw_shape(half, rng)[:, 0].max() > 0.85 for _ in range(2000))
    assert abs(hits / 2000 - 0.5) < 0.05


# --------------------------------------------------------------- optimizer

def test_config_validation():
    SgdConfig().check()
    bad = [dict(metric="hausdorff"), dict(steps=0), dict(batch=0),
           dict(lr0=0.0), dict(t_half=0.0), dict(init="gaussian")]
    for kwargs in bad:
        with pytest.raises(ValueError):
            SgdConfig(**kwargs).check()


def test_emd_requires_matching_cardinality():
    spec = ShapeDistributionSpec("circle_radius", n_points=16)
    with pytest.raises(SizeMismatch):
        optimize_mean_shape(spec, SgdConfig(metric="emd", steps=1, m=8))


def test_seed_determinism_bitwise():
    spec = ShapeDistributionSpec("circle_radius", n_points=24)
    cfg = SgdConfig(metric="cd", steps=40, batch=2, seed=5)
    x1, t1 = optimize_mean_shape(spec, cfg)
    x2, t2 = optimize_mean_shape(spec, cfg)
    assert np.array_equal(x1, x2)
    assert np.array_equal(t1, t2)


def test_trajectory_independent_of_thread_count():
    spec = ShapeDistributionSpec("circle_radius", n_points=24)
    cfg = SgdConfig(metric="emd", steps=8, batch=4, seed=6)
    x1, t1 = optimize_mean_shape(spec, cfg, threads=1)
    x2, t2 = optimize_mean_shape(spec, cfg, threads=3)
    assert np.array_equal(x1, x2)
    assert np.array_equal(t1, t2)


def test_degenerate_distribution_converges_cd():
    spec = ShapeDistributionSpec("circle_radius", n_points=32,
                                 params={"r_min": 0.3, "r_max": 0.3})
    cfg = SgdConfig(metric="cd", steps=600, batch=2, lr0=0.4, t_half=40.0,
                    m=64, seed=3)
    _, trace = optimize_mean_shape(spec, cfg)
    assert trace[-1] < 1e-3 * trace[0]


def test_degenerate_distribution_converges_emd():
    spec = ShapeDistributionSpec("circle_radius", n_points=16,
                                 params={"r_min": 0.3, "r_max": 0.3})
    cfg = SgdConfig(metric="emd", steps=3000, batch=1, lr0=0.3, t_half=4.0,
                    seed=3)
    _, trace = optimize_mean_shape(spec, cfg)
    assert trace[-1] < 1e-3 * trace[0]


def test_wide_circle_annulus_and_cd_contrast():
    # radius range deliberately wider than the default canvas
    spec = ShapeDistributionSpec("circle_radius", n_points=64,
                                 params={"r_min": 0.5, "r_max": 1.5})
    radial_std = (1.5 - 0.5) / np.sqrt(12.0)
    x_emd, _ = optimize_mean_shape(spec, SgdConfig(metric="emd", seed=7))
    dev_emd = radial_rms_dev(x_emd, spec.params["center"])
    assert dev_emd < 0.25 * radial_std
    x_cd, _ = optimize_mean_shape(spec, SgdConfig(metric="cd", seed=7))
    assert radial_rms_dev(x_cd, spec.params["center"]) > dev_emd


def test_loss_trend_all_families_default_config():
    for family in FAMILY_DEFAULTS:
        spec = ShapeDistributionSpec(family)
        _, trace = optimize_mean_shape(spec, SgdConfig())
        smooth = ema(trace)
        assert smooth[-1] < smooth[50], family


def test_single_step_descends_fixed_shape():
    # line-search flavor: one step against one fixed shape lowers that
    # shape's loss at small learning rates, for both metrics
    from psm.chamfer import chamfer_distance
    from psm.emd import emd

    spec = ShapeDistributionSpec("corner_square", n_points=20)
    shape = draw_shape(spec, RandomSource(21))
    rng = np.random.default_rng(22)
    x = np.column_stack([rng.random((20, 2)), np.zeros(20)])
    for lr in (1e-3, 1e-4):
        res = chamfer_distance(x, shape, want_grad=True)
        assert chamfer_distance(x - lr * res.grad_a, shape).value < res.value
        res = emd(x, shape, want_grad=True)
        assert emd(x - lr * res.grad_a, shape).value < res.value


def test_divergence_detected():
    spec = ShapeDistributionSpec("circle_radius", n_points=12)
    cfg = SgdConfig(metric="cd", steps=20, batch=1, lr0=1e7, seed=0)
    with pytest.raises(DivergenceDetected):
        optimize_mean_shape(spec, cfg)


# -------------------------------------------------------------------- plot

def test_emit_plot_rejects_empty(tmp_path):
    spec = ShapeDistributionSpec("circle_radius", n_points=8)
    with pytest.raises(EmptySet):
        emit_plot(np.empty((0, 3)), spec, tmp_path / "x.svg")


def test_emit_plot_deterministic_bytes(tmp_path):
    spec = ShapeDistributionSpec("bar_disk", n_points=16, seed=9)
    x, _ = optimize_mean_shape(spec, SgdConfig(steps=3, batch=1, seed=1))
    emit_plot(x, spec, tmp_path / "a.svg")
    emit_plot(x, spec, tmp_path / "b.svg")
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()


def test_emit_plot_markers_inside_viewbox(tmp_path):
    spec = ShapeDistributionSpec("spiky_arc", n_points=16, seed=2)
    rng = np.random.default_rng(23)
    x = np.column_stack([rng.random((10, 2)) * 3 - 1, np.zeros(10)])
    path = tmp_path / "x.svg"
    emit_plot(x, spec, path)
    root = ET.parse(path).getroot()
    assert root.get("viewBox") == "0 0 400 400"
    circles = [el for el in root.iter() if el.tag.endswith("circle")]
    assert len(circles) == 20 * 16 + 10  # silhouettes plus the point set
    for el in circles:
        assert 0.0 <= float(el.get("cx")) <= 400.0
        assert 0.0 <= float(el.get("cy")) <= 400.0
