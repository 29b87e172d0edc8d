import json

import numpy as np
import pytest

from jawkit import se3, synth, tmj
from jawkit.distance import DistanceMap, difference_map
from jawkit.errors import EmptyInputError, EmptyMapError, ParseError, VertexSetMismatchError
from jawkit.mesh import read_ply_bytes
from jawkit.se3 import RigidTransform
from jawkit.tmj import JointConfiguration, JointModel


@pytest.fixture(scope="module")
def joints():
    ph = synth.make_phantom()
    return ph, [JointModel(s, ph.fossae[s], ph.condyles[s]) for s in tmj.SIDES]


def test_joint_model_validation(joints):
    ph, _ = joints
    with pytest.raises(ValueError):
        JointModel("middle", ph.fossae["left"], ph.condyles["left"])
    with pytest.raises(ValueError):
        JointConfiguration(JointModel("left", ph.fossae["left"], ph.condyles["left"]),
                           RigidTransform.identity(), "guessed")


def test_rest_map_matches_analytic_gap(joints):
    ph, js = joints
    m = tmj.joint_distance_map(js[0], ph.condyles["left"])
    gap = ph.fossa_gap["left"]
    assert m.n_valid == len(gap)
    assert np.max(np.abs(m.values - gap)) < 0.01


def test_pullback_equals_propagated_mesh(joints):
    _, js = joints
    t = RigidTransform(se3.exp_rotation(np.radians([2.0, -1.0, 3.0])), [0.3, 1.0, -0.4])
    posed = tmj.propagate(JointConfiguration(js[0], t, "measured"))
    direct = tmj.joint_distance_map(js[0], posed)
    pulled = tmj.pose_distance_map(js[0], t)
    both = direct.valid & pulled.valid
    assert np.array_equal(direct.valid, pulled.valid)
    assert np.max(np.abs(direct.values[both] - pulled.values[both])) < 1e-9


def test_posed_map_matches_analytic(joints):
    ph, js = joints
    t = RigidTransform(se3.exp_rotation(np.radians([1.0, 0.0, -2.0])), [0.2, 0.5, 0.3])
    m = tmj.pose_distance_map(js[1], t)
    truth = ph.analytic_gap("right", pose=t)
    ok = m.valid & np.isfinite(truth)
    # mesh chords sit inside the smooth ellipsoid, so mesh distances run slightly long
    assert np.max(np.abs(m.values[ok] - truth[ok])) < 0.05


def test_planned_equals_measured_zero(joints):
    _, js = joints
    t = synth.planned_presets()[1][1]
    rep = tmj.simulate_joint(js[0], t, t, "S1", "3t")
    assert np.all(rep.diff_map.valid_values == 0.0)
    assert rep.diff_mu_mm == 0.0 and rep.diff_sigma_mm == 0.0
    assert rep.key == "S1_3t_left"


def test_displacement_response(joints):
    _, js = joints
    up = np.array([0.0, 0.0, 1.0])
    rep = tmj.simulate_joint(js[0], RigidTransform.identity(),
                             RigidTransform.from_translation(0.5 * up))
    mask = tmj.facing_mask(js[0].fossa, up) & rep.diff_map.valid
    assert mask.sum() > 20
    mean = rep.diff_map.values[mask].mean()
    assert abs(mean + 0.5) < 0.025
    # moving away widens the joint space
    away = tmj.simulate_joint(js[0], RigidTransform.identity(),
                              RigidTransform.from_translation(-0.5 * up))
    assert away.diff_map.values[mask].mean() > 0.45


def test_roi_masking_and_empty_map(joints):
    _, js = joints
    m = tmj.pose_distance_map(js[0], RigidTransform.identity(), roi=(0.0, 2.0))
    assert 0 < m.n_valid < len(m)
    with pytest.raises(EmptyMapError):
        tmj.pose_distance_map(js[0], RigidTransform.from_translation([0, 0, -40.0]))
    with pytest.raises(EmptyMapError, match="splint 'S9'"):
        tmj.simulate_joint(js[0], RigidTransform.identity(),
                           RigidTransform.from_translation([0, 0, -40.0]), "S9", "3t")
    # roi disabled: everything valid
    assert tmj.pose_distance_map(js[0], RigidTransform.from_translation([0, 0, -40.0]),
                                 roi=None).n_valid == js[0].fossa.n_vertices


def test_frame_covariance(joints):
    # moving fossa, condyle and pose by one rigid map leaves the maps unchanged
    _, js = joints
    g = RigidTransform(se3.exp_rotation([0.3, -0.2, 0.5]), [5.0, -3.0, 8.0])
    j = js[0]
    moved = JointModel("left", j.fossa.transformed(g, "fossa_left"),
                       j.condyle.transformed(g, "condyle_left"))
    t = RigidTransform(se3.exp_rotation(np.radians([1.0, 2.0, 0.0])), [0.1, 0.4, 0.2])
    t_g = se3.compose(g, se3.compose(t, se3.inverse(g)))
    a = tmj.pose_distance_map(j, t)
    b = tmj.pose_distance_map(moved, t_g)
    assert np.allclose(a.values[a.valid], b.values[a.valid], atol=1e-9)


def test_difference_mismatch_between_sides(joints):
    _, js = joints
    a = tmj.pose_distance_map(js[0], RigidTransform.identity())
    b = tmj.pose_distance_map(js[1], RigidTransform.identity())
    with pytest.raises(VertexSetMismatchError):
        difference_map(a, b)


def test_simulate_order_and_jobs(joints):
    _, js = joints
    presets = synth.planned_presets()[:2]
    err = RigidTransform.from_translation([0.0, 0.3, 0.2])
    cases = [(n, "3t", p, se3.compose(err, p)) for n, p in presets]
    serial = tmj.simulate(js, cases, jobs=1)
    threaded = tmj.simulate(js, cases, jobs=3)
    assert [r.key for r in serial] == [f"{n}_3t_{s}" for n, _ in presets for s in tmj.SIDES]
    for a, b in zip(serial, threaded):
        assert np.array_equal(a.diff_map.values, b.diff_map.values, equal_nan=True)
    with pytest.raises(EmptyInputError):
        tmj.simulate(js, [])


def test_joint_summary_pooling(joints):
    _, js = joints
    p = RigidTransform.identity()
    cases = [("A", "3t", p, RigidTransform.from_translation([0, 0, 0.2])),
             ("A", "4t", p, RigidTransform.from_translation([0, 0.3, 0.1])),
             ("B", "3t", p, RigidTransform.from_translation([0, 0, -0.2]))]
    reps = tmj.simulate(js, cases)
    summ = tmj.joint_summary(reps)
    assert set(summ.pooled) == {"left", "right"}
    for side in tmj.SIDES:
        vals = np.concatenate([r.diff_map.valid_values for r in reps if r.side == side])
        n, mu, sigma = summ.pooled[side]
        assert n == len(vals)
        assert np.isclose(mu, vals.mean(), atol=1e-12) and np.isclose(sigma, vals.std(), atol=1e-9)
    assert summ.splints("left") == ["A", "B"]
    with pytest.raises(EmptyInputError):
        tmj.joint_summary([])


def test_summary_csv_and_ply(tmp_path, joints):
    _, js = joints
    t = RigidTransform.from_translation([0, 0, 0.1])
    reps = tmj.simulate(js, [("S1", "3t", RigidTransform.identity(), t)])
    summ = tmj.joint_summary(reps)
    p = tmp_path / "s.csv"
    summ.save_csv(p)
    rows = p.read_text().splitlines()
    assert rows[0] == "side,splint_id,repeat_id,n_valid,mu_mm,sigma_mm"
    assert rows[-1].startswith("right,pooled,")
    ply = tmp_path / "m.ply"
    reps[0].save_ply(ply, js[0].fossa)
    _, _, extra = read_ply_bytes(ply.read_bytes())
    assert set(extra) == {"planned_mm", "measured_mm", "diff_mm", "valid"}
    ok = extra["valid"] == 1
    assert np.allclose(extra["diff_mm"][ok], (extra["measured_mm"] - extra["planned_mm"])[ok],
                       atol=1e-5)


def test_scenario_roundtrip(tmp_path, joints):
    ph, js = joints
    sc = synth.build_scenario(phantom=ph, splints=1, repeats=1, seed=0, with_scans=False)
    synth.write_fixture(sc, tmp_path)
    loaded = tmj.load_scenario(tmp_path / "scenario.json")
    assert [j.side for j in loaded.joints] == ["left", "right"]
    assert loaded.roi == tmj.DEFAULT_ROI
    assert loaded.cases[0][3].allclose(sc.cases[0].measured, 1e-15, 1e-12)
    assert loaded.paths["left"] == ("meshes/fossa_left.ply", "meshes/condyle_left.ply")


def test_scenario_malformed(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"joints": [{"side": "left"}], "cases": []}))
    with pytest.raises(ParseError):
        tmj.load_scenario(p)
    p.write_text("[")
    with pytest.raises(ParseError):
        tmj.load_scenario(p)


def test_difference_map_reexport():
    a = DistanceMap("f", "p", [1.0], [True])
    assert tmj.difference_map(a, a).values[0] == 0.0
