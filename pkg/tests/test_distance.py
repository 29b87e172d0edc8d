import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import flat_plate
from jawkit import synth
from jawkit.distance import DistanceMap, difference_map, distance_map, map_stats, weighted_aggregate
from jawkit.errors import EmptyInputError, EmptyMapError, VertexSetMismatchError
from jawkit.mesh import load_mesh, read_ply_bytes


def test_parallel_plates_signed():
    lower = flat_plate(z=0.0, name="lower")
    upper = flat_plate(z=1.5, name="upper")
    m = distance_map(upper, lower)
    assert m.n_valid == upper.n_vertices
    assert np.allclose(m.values, 1.5)
    m = distance_map(flat_plate(z=-0.7, name="below"), lower)
    assert np.allclose(m.values, -0.7)


def test_unsigned_is_abs():
    lower = flat_plate(z=0.0, name="lower")
    m = distance_map(flat_plate(z=-0.7), lower, signed=False)
    assert np.allclose(m.values, 0.7) and not m.signed


def test_clamp_masks_with_counts():
    lower = flat_plate(z=0.0, name="lower")
    m = distance_map(flat_plate(z=3.0), lower, clamp_mm=2.0)
    assert m.n_valid == 0 and m.counts["clamped"] == 121
    assert np.all(np.isnan(m.values))
    with pytest.raises(EmptyMapError):
        map_stats(m)


def test_roi_closed_interval():
    lower = flat_plate(z=0.0, name="lower")
    assert distance_map(flat_plate(z=2.0), lower, roi=(0.0, 2.0)).n_valid == 121
    m = distance_map(flat_plate(z=2.0), lower, roi=(0.0, 1.999))
    assert m.n_valid == 0 and m.counts["outside_roi"] == 121


def test_sphere_shell_oracle():
    # vertices of a radius-12 sphere against a radius-10 sphere: gap ~2
    inner = synth.icosphere(4)
    outer = inner.with_vertices(inner.vertices * 12.0, name="outer")
    inner = inner.with_vertices(inner.vertices * 10.0, name="inner")
    m = distance_map(outer, inner)
    # the chordal inner mesh lies inside the true sphere, so gaps exceed 2 slightly
    assert np.all(m.values > 1.99) and np.all(m.values < 2.1)
    m = distance_map(inner, outer)
    assert np.all(m.values < -1.9) and np.all(m.values > -2.1)


def test_map_stats_population_std():
    v = np.array([1.0, 2.0, 3.0, np.nan])
    m = DistanceMap("a", "b", v, [True, True, True, False])
    n, mu, sigma = map_stats(m)
    assert n == 3 and mu == 2.0 and math.isclose(sigma, math.sqrt(2 / 3))


def test_map_ply_export(tmp_path):
    plate = flat_plate(z=1.0)
    m = distance_map(plate, flat_plate(z=0.0, name="lower"))
    p = tmp_path / "map.ply"
    m.save_ply(p, plate)
    _, _, extra = read_ply_bytes(p.read_bytes())
    assert np.allclose(extra["distance_mm"], 1.0) and np.all(extra["valid"] == 1)
    assert load_mesh(p).n_vertices == plate.n_vertices
    with pytest.raises(VertexSetMismatchError):
        m.save_ply(p, synth.icosphere(1))


def test_map_csv(tmp_path):
    m = DistanceMap("a", "b", [0.5, np.nan], [True, False])
    p = tmp_path / "m.csv"
    m.save_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "vertex_id,distance,valid"
    assert lines[1] == "0,0.5,1" and lines[2] == "1,,0"


def test_points_override_keeps_source_identity():
    plate = flat_plate(z=0.0, name="lower")
    src = flat_plate(z=5.0, name="src")
    m = distance_map(src, plate, points=src.vertices - [0, 0, 4.0])
    assert m.source_mesh_id == "src" and np.allclose(m.values, 1.0)


# -- pooling ------------------------------------------------------------------------

def test_weighted_aggregate_simple():
    mu, sigma = weighted_aggregate([(2, 0.0, 1.0), (2, 2.0, 1.0)])
    # values -1, 1, 1, 3
    assert math.isclose(mu, 1.0) and math.isclose(sigma, math.sqrt(2.0))


def test_weighted_aggregate_single_sample():
    assert weighted_aggregate([(5, 0.3, 0.2)]) == pytest.approx((0.3, 0.2))


def test_weighted_aggregate_rejects():
    with pytest.raises(EmptyInputError):
        weighted_aggregate([])
    with pytest.raises(ValueError):
        weighted_aggregate([(0, 1.0, 1.0)])
    with pytest.raises(ValueError):
        weighted_aggregate([(3, 1.0, -1.0)])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=2, max_size=60), st.integers(1, 6), st.integers(0, 10**6))
def test_weighted_aggregate_equals_concatenation(values, parts, seed):
    v = np.array(values)
    rng = np.random.default_rng(seed)
    cuts = np.sort(rng.choice(np.arange(1, len(v)), size=min(parts, len(v)) - 1, replace=False))
    chunks = np.split(v, cuts)
    mu, sigma = weighted_aggregate([(len(c), c.mean(), c.std()) for c in chunks])
    assert math.isclose(mu, v.mean(), abs_tol=1e-9)
    assert math.isclose(sigma, v.std(), abs_tol=1e-6)


# -- difference maps ------------------------------------------------------------------

def test_difference_measured_minus_planned():
    a = DistanceMap("fossa", "p", [1.0, 2.0, 3.0], [True, True, False])
    b = DistanceMap("fossa", "m", [1.5, 1.0, 3.0], [True, True, True])
    d = difference_map(a, b)
    assert np.allclose(d.values[:2], [0.5, -1.0]) and np.isnan(d.values[2])
    assert d.n_valid == 2


def test_difference_of_identical_maps_is_zero():
    a = DistanceMap("fossa", "p", [1.0, 2.0], [True, True])
    assert np.all(difference_map(a, a).values == 0.0)


def test_difference_mismatch():
    a = DistanceMap("fossa_l", "p", [1.0, 2.0], [True, True])
    b = DistanceMap("fossa_r", "p", [1.0, 2.0], [True, True])
    with pytest.raises(VertexSetMismatchError):
        difference_map(a, b)
    c = DistanceMap("fossa_l", "p", [1.0], [True])
    with pytest.raises(VertexSetMismatchError):
        difference_map(a, c)
