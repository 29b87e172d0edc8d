import json
import math

import numpy as np
import pytest

from jawkit import se3, synth
from jawkit.errors import NonPSDCovarianceError, ParseError
from jawkit.se3 import RigidTransform, compose
from jawkit.stats import karcher_mean, pca_ellipsoid, tangent_residuals
from jawkit.tree import TransformTree


def test_icosphere_counts_and_radius():
    s = synth.icosphere(2)
    assert s.n_triangles == 20 * 16
    assert np.allclose(np.linalg.norm(s.vertices, axis=1), 1.0)
    assert s.is_watertight() and s.has_consistent_orientation()
    c = s.vertices[s.triangles].mean(axis=1)
    assert np.all(np.einsum("ij,ij->i", s.face_normals, c) > 0)


def test_ellipsoid_distance_sphere_oracle(rng):
    pts = rng.normal(size=(50, 3))
    pts = pts / np.linalg.norm(pts, axis=1, keepdims=True) * rng.uniform(3, 8, size=(50, 1))
    d = synth.ellipsoid_distance(pts, (2.0, 2.0, 2.0))
    assert np.allclose(d, np.linalg.norm(pts, axis=1) - 2.0, atol=1e-9)
    assert np.isnan(synth.ellipsoid_distance([[0.1, 0, 0]], (2, 2, 2))[0])


def test_ellipsoid_distance_axis_points():
    d = synth.ellipsoid_distance([[13.0, 0, 0], [0, 5.5, 0], [0, 0, -9.0]], (10.0, 4.5, 6.0))
    assert np.allclose(d, [3.0, 1.0, 3.0], atol=1e-9)


def test_phantom_meshes(phantom):
    for side in ("left", "right"):
        c, f = phantom.condyles[side], phantom.fossae[side]
        assert c.is_watertight() and c.has_consistent_orientation()
        assert f.has_consistent_orientation()
        # fossa winding faces the condyle: normals point down on average
        assert phantom.fossa_normals[side].shape == f.vertices.shape
    assert phantom.maxilla_arch.vertices[:, 2].min() > phantom.mandible_arch.vertices[:, 2].max()


def test_phantom_gap_matches_mesh_distance(phantom):
    f = phantom.fossae["left"]
    _, d, _, _ = phantom.condyles["left"].index.query(f.vertices)
    assert np.max(np.abs(d - phantom.fossa_gap["left"])) < 0.01


def test_phantom_deterministic():
    a = synth.make_phantom(synth.PhantomSpec(edge_length=1.5))
    b = synth.make_phantom(synth.PhantomSpec(edge_length=1.5))
    assert np.array_equal(a.maxilla_arch.vertices, b.maxilla_arch.vertices)


def test_phantom_rejects_coarse_edges():
    with pytest.raises(Exception, match="edge length"):
        synth.make_phantom(synth.PhantomSpec(edge_length=5.0))


def test_noise_model_validates():
    with pytest.raises(NonPSDCovarianceError):
        synth.NoiseModel(covariance=np.diag([1, 1, 1, 1, 1, -1.0]))
    c = np.zeros((6, 6))
    c[0, 1] = 1.0
    with pytest.raises(NonPSDCovarianceError):
        synth.NoiseModel(covariance=c)


def test_zero_noise_samples_are_center():
    m = synth.NoiseModel(mean=np.array([0.01, 0, 0, 1.0, 2.0, 3.0]))
    for t in synth.sample_transforms(m, 3, seed=0):
        assert t.allclose(m.center, 0, 0)


def test_sample_transforms_recover_covariance():
    model = synth.dental_error_model()
    samples = synth.sample_transforms(model, 4000, seed=11)
    mu = karcher_mean(samples)
    res = tangent_residuals(samples, mu)
    e = pca_ellipsoid(res[:, 3:])
    assert np.allclose(e.eigenvalues, [2.4358, 0.7820, 0.3477], rtol=0.08)
    er = pca_ellipsoid(np.degrees(res[:, :3]), space="rotation")
    assert np.allclose(er.eigenvalues, [1.3594, 0.5300, 0.3812], rtol=0.1)
    assert mu.allclose(model.center, 2e-3, 0.1)


def test_sample_transforms_seeded():
    m = synth.dental_error_model()
    a = synth.sample_transforms(m, 4, seed=9)
    b = synth.sample_transforms(m, 4, seed=9)
    assert all(x.allclose(y, 0, 0) for x, y in zip(a, b))


def test_span_magnitudes(rng):
    ts = [se3.random_transform(rng, max_angle=0.1, max_translation=2) for _ in range(10)]
    out = synth.span_magnitudes(ts)
    th, tn = np.array([se3.error_magnitude(t) for t in out]).T
    assert math.isclose(th.min(), 0.4) and math.isclose(th.max(), 4.5)
    assert math.isclose(tn.min(), 0.5) and math.isclose(tn.max(), 7.0)
    for a, b in zip(ts, out):
        ca = a.translation / np.linalg.norm(a.translation)
        cb = b.translation / np.linalg.norm(b.translation)
        assert np.allclose(ca, cb)
    # rank order preserved
    tn_in = [np.linalg.norm(t.translation) for t in ts]
    assert np.array_equal(np.argsort(tn_in), np.argsort(tn))


def test_build_scenario_truth(phantom):
    sc = synth.build_scenario(phantom=phantom, model=synth.dental_error_model(),
                              splints=2, repeats=2, seed=4, jitter_mm=0.0)
    assert len(sc) == 4
    assert [c.repeat_id for c in sc.cases] == ["3t", "4t", "3t", "4t"]
    for c in sc.cases:
        assert c.measured.allclose(compose(c.error, c.planned), 1e-12, 1e-12)
        n_max = phantom.maxilla_arch.n_vertices
        want = c.scanner_pose.apply(phantom.maxilla_arch.vertices)
        assert np.allclose(c.scan.vertices[:n_max], want)
        th, tn = se3.error_magnitude(c.scanner_pose)
        assert th <= 1.0 + 1e-9


def test_build_scenario_explicit_errors_keep_stream(phantom):
    a = synth.build_scenario(phantom=phantom, splints=1, repeats=2, seed=4, with_scans=False)
    errs = [RigidTransform.from_translation([1.0, 0, 0])] * 2
    b = synth.build_scenario(phantom=phantom, splints=1, repeats=2, seed=4, with_scans=False,
                             errors=errs)
    assert all(x.scanner_pose.allclose(y.scanner_pose, 0, 0) for x, y in zip(a.cases, b.cases))
    assert b.cases[0].error is errs[0]
    with pytest.raises(ValueError):
        synth.build_scenario(phantom=phantom, splints=1, repeats=2, errors=errs[:1])


def test_fixture_roundtrip(tmp_path):
    ph = synth.make_phantom(synth.PhantomSpec(edge_length=1.5))
    sc = synth.build_scenario(phantom=ph, model=synth.dental_error_model(), splints=1,
                              repeats=2, seed=2)
    path = synth.write_fixture(sc, tmp_path, seed=2, jitter_mm=0.05)
    fx = synth.load_fixture(path)
    assert fx.manifest["format"] == synth.FIXTURE_FORMAT
    assert len(fx.cases) == 2
    c = fx.cases[1]
    assert c.truth["error"].allclose(sc.cases[1].error, 1e-15, 1e-12)
    assert np.array_equal(c.load_scan().vertices, sc.cases[1].scan.vertices)
    assert fx.mesh("maxilla_arch").n_triangles == ph.maxilla_arch.n_triangles
    tree = TransformTree.load(fx.path("tree"))
    for cyc in fx.manifest["cycles"]:
        th, tn = se3.error_magnitude(tree.consistency_error(cyc))
        assert th < 1e-9 and tn < 1e-9


def test_fixture_bad_manifest(tmp_path):
    p = tmp_path / "manifest.json"
    p.write_text(json.dumps({"format": "other"}))
    with pytest.raises(ParseError):
        synth.load_fixture(p)
    p.write_text("{")
    with pytest.raises(ParseError):
        synth.load_fixture(p)
