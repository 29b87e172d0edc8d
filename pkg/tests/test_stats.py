import math
import warnings

import numpy as np
import pytest
from scipy.spatial.distance import mahalanobis as scipy_mahalanobis

from jawkit import se3, stats, synth
from jawkit.errors import EmptyInputError, NoConvergenceError, ParseError, RankDeficientWarning
from jawkit.se3 import RigidTransform, compose, exp_se3, inverse
from jawkit.stats import (
    PcaEllipsoid,
    TransformSample,
    component_stats,
    decompose,
    histogram,
    karcher_mean,
    mahalanobis,
    pca_ellipsoid,
    tangent_residuals,
)


def _symmetric_cloud(center, rng, n_pairs=8, scale=0.05, mode="coupled"):
    out = []
    for _ in range(n_pairs):
        xi = rng.normal(size=6) * np.array([scale] * 3 + [scale * 20] * 3)
        out.append(compose(center, exp_se3(xi, mode)))
        out.append(compose(center, exp_se3(-xi, mode)))
    return out


# -- Karcher mean ------------------------------------------------------------------

def test_karcher_identical_samples_exact(rng):
    t = se3.random_transform(rng, max_translation=10)
    res = karcher_mean([t] * 5, full_output=True)
    assert res.iterations == 0
    assert np.array_equal(res.mean.matrix, t.matrix)


def test_karcher_symmetric_rotation_pair():
    a = RigidTransform(se3.rot_z(7.0), np.zeros(3))
    b = RigidTransform(se3.rot_z(-7.0), np.zeros(3))
    mu = karcher_mean([a, b])
    assert mu.allclose(RigidTransform.identity(), 1e-9, 1e-9)


def test_karcher_symmetric_cloud_oracle(rng):
    # samples center * exp(+-xi) have the intrinsic mean ``center`` exactly
    center = se3.random_transform(rng, max_angle=0.5, max_translation=5)
    mu = karcher_mean(_symmetric_cloud(center, rng))
    assert mu.allclose(center, 1e-9, 1e-8)


def test_karcher_stationarity(rng):
    model = synth.dental_error_model()
    samples = synth.sample_transforms(model, 32, seed=5)
    res = karcher_mean(samples, tol=1e-10, full_output=True)
    assert np.linalg.norm(tangent_residuals(samples, res.mean).mean(axis=0)) < 1e-10
    assert res.residual < 1e-10


def test_karcher_product_translation_is_mean(rng):
    samples = synth.sample_transforms(synth.dental_error_model("product"), 32, seed=2)
    mu = karcher_mean(samples, mode="product")
    assert np.array_equal(mu.translation, np.mean([s.translation for s in samples], axis=0))
    rres = tangent_residuals(samples, mu, "product")[:, :3].mean(axis=0)
    assert np.linalg.norm(rres) < 1e-10


def test_karcher_accepts_transform_samples(rng):
    t = se3.random_transform(rng, max_translation=3)
    samples = [TransformSample("S1", "3t", t), TransformSample("S1", "4t", t)]
    assert karcher_mean(samples).allclose(t, 1e-12, 1e-12)


def test_karcher_empty():
    with pytest.raises(EmptyInputError):
        karcher_mean([])


def test_karcher_no_convergence(rng):
    samples = synth.sample_transforms(synth.dental_error_model(), 16, seed=1)
    with pytest.raises(NoConvergenceError) as exc:
        karcher_mean(samples, tol=1e-30, max_iter=1)
    assert exc.value.last is not None


# -- components ------------------------------------------------------------------

def test_decompose_units():
    t = RigidTransform(se3.rot_z(3.0), [3.0, 4.0, 0.0])
    assert np.allclose(decompose(t), [3, 4, 0, 5, 0, 0, 3, 3])


def test_component_stats_columns():
    ts = [RigidTransform(se3.rot_x(a), [a, 0, 0]) for a in (1.0, 2.0, 6.0)]
    cs = component_stats(ts, karcher_mean(ts))
    i = stats.QUANTITIES.index("t_x")
    assert cs.mean[i] == 3.0 and cs.median[i] == 2.0 and cs.min[i] == 1.0 and cs.max[i] == 6.0
    assert math.isclose(cs.std[i], np.std([1, 2, 6], ddof=1))
    assert math.isclose(component_stats(ts, ts[0], ddof=0).std[i], np.std([1, 2, 6]))
    j = stats.QUANTITIES.index("theta")
    assert math.isclose(cs.max[j], 6.0)


def test_component_stats_norm_of_samples_not_of_mean():
    ts = [RigidTransform.from_translation([1.0, 0, 0]), RigidTransform.from_translation([-1.0, 0, 0])]
    cs = component_stats(ts, karcher_mean(ts))
    i = stats.QUANTITIES.index("t_norm")
    assert cs.mean[i] == 1.0 and cs.karcher[i] == 0.0


def test_component_stats_csv(tmp_path):
    ts = [RigidTransform(se3.rot_x(a), [a, 0, 0]) for a in (1.0, 2.0)]
    p = tmp_path / "c.csv"
    component_stats(ts, ts[0]).save_csv(p)
    rows = [r.split(",") for r in p.read_text().splitlines()]
    units = {r[0]: r[-1] for r in rows[1:]}
    assert units["t_norm"] == "mm" and units["theta"] == "deg" and units["r_x"] == "deg"


# -- PCA ---------------------------------------------------------------------------

def test_pca_axis_aligned_oracle(rng):
    x = rng.normal(size=(4000, 3)) * [3.0, 1.0, 0.5]
    e = pca_ellipsoid(x)
    assert np.allclose(e.eigenvalues, np.linalg.eigvalsh(np.cov(x.T))[::-1])
    assert abs(e.eigenvectors[0, 0]) > 0.99 and e.eigenvectors[0, 0] > 0
    assert math.isclose(e.shares.sum(), 1.0)


def test_pca_r95_identity():
    e = PcaEllipsoid.from_eigen([2.4358, 0.7820, 0.3477])
    assert np.allclose(e.r95, np.sqrt(7.814727903251178 * e.eigenvalues), rtol=1e-12)


def test_pca_r95_coverage(rng):
    # about 95% of Gaussian draws fall inside the ellipsoid
    cov = np.array([[4.0, 1.0, 0.0], [1.0, 2.0, 0.3], [0.0, 0.3, 1.0]])
    x = rng.multivariate_normal(np.zeros(3), cov, size=20000)
    e = pca_ellipsoid(x)
    local = (x - e.center) @ e.eigenvectors
    inside = ((local / e.r95) ** 2).sum(axis=1) <= 1.0
    assert abs(inside.mean() - 0.95) < 0.01


def test_pca_rank_deficient_warns():
    x = np.column_stack([np.arange(10.0), np.arange(10.0) * 2, np.zeros(10)])
    with pytest.warns(RankDeficientWarning):
        e = pca_ellipsoid(x)
    assert e.eigenvalues[1] == 0.0 and e.eigenvalues[2] == 0.0


def test_pca_too_few():
    with pytest.raises(EmptyInputError):
        pca_ellipsoid(np.zeros((2, 3)))


def test_pca_csv(tmp_path):
    e = PcaEllipsoid.from_eigen([1.3594, 0.5300, 0.3812], space="rotation")
    p = tmp_path / "p.csv"
    stats.save_pca_csv([e], p)
    rows = p.read_text().splitlines()
    assert rows[0].startswith("space,pc,variance,share_percent,r95")
    assert rows[1].split(",")[3] == "59.8696"


def test_surface_points_on_ellipsoid():
    e = PcaEllipsoid.from_eigen([4.0, 1.0, 0.25])
    s = e.surface_points().reshape(-1, 3)
    assert np.allclose(((s / e.r95) ** 2).sum(axis=1), 1.0)


# -- Mahalanobis --------------------------------------------------------------------

def test_mahalanobis_matches_scipy(rng):
    a = rng.normal(size=(3, 3))
    cov = a @ a.T + np.eye(3)
    x = rng.normal(size=(10, 3))
    mean = rng.normal(size=3)
    vi = np.linalg.inv(cov)
    want = [scipy_mahalanobis(r, mean, vi) for r in x]
    assert np.allclose(mahalanobis(x, mean, cov), want)
    assert isinstance(mahalanobis(x[0], mean, cov), float)


def test_mahalanobis_regularizes_semidefinite():
    cov = np.diag([1.0, 1.0, 0.0])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        d = mahalanobis([1.0, 0.0, 0.0], np.zeros(3), cov)
    assert math.isclose(d, 1.0, rel_tol=1e-6)


# -- histogram ------------------------------------------------------------------------

def test_histogram_counts():
    h = histogram(np.arange(10.0), 5)
    assert h.counts.tolist() == [2, 2, 2, 2, 2] and h.mean == 4.5 and h.median == 4.5


def test_histogram_single_value():
    h = histogram([2.0, 2.0, 2.0])
    assert h.counts.tolist() == [3] and h.edges.tolist() == [2.0, 2.0]


def test_histogram_empty():
    with pytest.raises(EmptyInputError):
        histogram([])


# -- samples csv ------------------------------------------------------------------------

def test_samples_csv_roundtrip(tmp_path, rng):
    samples = [TransformSample(f"S{i}", "3t", se3.random_transform(rng, max_translation=5))
               for i in range(3)]
    p = tmp_path / "s.csv"
    stats.save_samples_csv(samples, p)
    back = stats.load_samples_csv(p)
    assert [b.splint_id for b in back] == ["S0", "S1", "S2"]
    assert all(a.transform.allclose(b.transform, 1e-15, 1e-12) for a, b in zip(samples, back))


def test_samples_csv_bad_row(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("S1,3t,1,0,0\n")
    with pytest.raises(ParseError, match=":1:"):
        stats.load_samples_csv(p)


def test_tangent_residuals_at_identity(rng):
    ts = [se3.random_transform(rng, max_angle=1.0) for _ in range(4)]
    res = tangent_residuals(ts, RigidTransform.identity())
    assert np.allclose(res, [se3.log_se3(t) for t in ts])
    assert np.allclose(tangent_residuals(ts, ts[0])[0], 0.0)
    assert tangent_residuals(ts, inverse(ts[0])).shape == (4, 6)
