"""Temporomandibular joint simulation.

Mandible transforms are propagated rigidly to the condyle meshes; joint space
is the unsigned distance from every fossa vertex to the posed condyle.  Maps
live on the fossa so planned, measured and difference maps share one vertex
set.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .distance import DistanceMap, difference_map, distance_map, map_stats, weighted_aggregate
from .errors import EmptyInputError, EmptyMapError, ParseError
from .mesh import TriangleMesh, load_mesh, ply_bytes
from .se3 import RigidTransform, apply, inverse, transform_from_json, transform_to_json

SIDES = ("left", "right")
LABELS = ("planned", "measured")
DEFAULT_ROI = (0.0, 10.0)

__all__ = ["JointModel", "JointConfiguration", "JointReport", "JointSummary", "propagate",
           "joint_distance_map", "pose_distance_map", "difference_map", "simulate_joint",
           "simulate", "joint_summary", "facing_mask", "Scenario", "load_scenario",
           "save_scenario"]


@dataclass(frozen=True, eq=False)
class JointModel:
    side: str
    fossa: TriangleMesh          # static, cranial frame
    condyle: TriangleMesh        # mandibular, reference pose

    def __post_init__(self):
        if self.side not in SIDES:
            raise ValueError(f"side must be one of {SIDES}, got {self.side!r}")
        if self.fossa.n_triangles == 0 or self.condyle.n_triangles == 0:
            raise ValueError("joint meshes must be nonempty")


@dataclass(frozen=True, eq=False)
class JointConfiguration:
    joint: JointModel
    mandible_transform: RigidTransform
    label: str = "planned"

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}, got {self.label!r}")


def propagate(config: JointConfiguration) -> TriangleMesh:
    """Condyle mesh moved by the mandible transform; connectivity unchanged."""
    c = config.joint.condyle
    return c.transformed(config.mandible_transform, name=f"{c.mesh_id}@{config.label}")


def _check_nonempty(m: DistanceMap, what: str) -> DistanceMap:
    if m.roi is not None and m.n_valid == 0:
        raise EmptyMapError(f"{what}: no fossa vertex within roi {m.roi}")
    return m


def joint_distance_map(joint: JointModel, condyle_posed: TriangleMesh,
                       roi=DEFAULT_ROI) -> DistanceMap:
    """Unsigned fossa-to-condyle distances, masked outside ``roi`` (None disables)."""
    m = distance_map(joint.fossa, condyle_posed, signed=False, roi=roi)
    return _check_nonempty(m, f"{joint.side} joint")


def pose_distance_map(joint: JointModel, transform: RigidTransform, roi=DEFAULT_ROI,
                      label: str = "posed") -> DistanceMap:
    """Same values as ``joint_distance_map(joint, propagate(...))``.

    Instead of moving the condyle, the fossa vertices are pulled back into the
    condyle's rest frame, so the condyle's spatial index is built only once.
    """
    pts = apply(inverse(transform), joint.fossa.vertices)
    base = distance_map(joint.fossa, joint.condyle, signed=False, roi=roi, points=pts)
    m = DistanceMap(joint.fossa.mesh_id, f"{joint.condyle.mesh_id}@{label}", base.values,
                    base.valid, False, base.roi, None, base.counts)
    return _check_nonempty(m, f"{joint.side} joint ({label})")


@dataclass(eq=False)
class JointReport:
    splint_id: str
    repeat_id: str
    side: str
    planned_map: DistanceMap
    measured_map: DistanceMap
    diff_map: DistanceMap
    diff_n: int
    diff_mu_mm: float
    diff_sigma_mm: float

    @property
    def key(self) -> str:
        return f"{self.splint_id}_{self.repeat_id}_{self.side}"

    def save_ply(self, path, fossa: TriangleMesh, binary: bool = True) -> None:
        """Fossa mesh carrying the planned, measured and diff values per vertex."""
        props = {}
        for name, m in (("planned_mm", self.planned_map), ("measured_mm", self.measured_map),
                        ("diff_mm", self.diff_map)):
            props[name] = ("float", np.nan_to_num(m.values, nan=0.0))
        props["valid"] = ("uchar", self.diff_map.valid.astype(np.uint8))
        with open(path, "wb") as fh:
            fh.write(ply_bytes(fossa.vertices, fossa.triangles, binary=binary,
                               vertex_properties=props))


def simulate_joint(joint: JointModel, planned: RigidTransform, measured: RigidTransform,
                   splint_id: str = "", repeat_id: str = "", roi=DEFAULT_ROI) -> JointReport:
    where = f"splint {splint_id!r} repeat {repeat_id!r}"
    try:
        pm = pose_distance_map(joint, planned, roi, "planned")
        mm = pose_distance_map(joint, measured, roi, "measured")
        diff = difference_map(pm, mm)
        n, mu, sigma = map_stats(diff)
    except EmptyMapError as exc:
        raise EmptyMapError(f"{where}: {exc}") from exc
    return JointReport(splint_id, repeat_id, joint.side, pm, mm, diff, n, mu, sigma)


def simulate(joints, cases, roi=DEFAULT_ROI, jobs: int = 1) -> list[JointReport]:
    """Reports for every case and joint, ordered by case then joint.

    ``cases`` holds ``(splint_id, repeat_id, planned, measured)`` tuples.
    """
    tasks = [(j, c) for c in cases for j in joints]
    if not tasks:
        raise EmptyInputError("nothing to simulate")

    def run(task):
        j, (sid, rid, planned, measured) = task
        return simulate_joint(j, planned, measured, sid, rid, roi)

    for j in joints:
        _ = j.condyle.index          # build shared indices before fanning out
    if jobs <= 1:
        return [run(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run, tasks))


@dataclass
class JointSummary:
    rows: list                   # dicts: side, splint_id, repeat_id, n, mu_mm, sigma_mm
    pooled: dict                 # side -> (n, mu_mm, sigma_mm)

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["side", "splint_id", "repeat_id", "n_valid", "mu_mm", "sigma_mm"])
            for r in self.rows:
                w.writerow([r["side"], r["splint_id"], r["repeat_id"], r["n"],
                            f"{r['mu_mm']:.6f}", f"{r['sigma_mm']:.6f}"])
            for side, (n, mu, sigma) in self.pooled.items():
                w.writerow([side, "pooled", "", n, f"{mu:.6f}", f"{sigma:.6f}"])

    def splints(self, side: str) -> list[str]:
        seen = []
        for r in self.rows:
            if r["side"] == side and r["splint_id"] not in seen:
                seen.append(r["splint_id"])
        return seen


def joint_summary(reports) -> JointSummary:
    """Per-report (mu, sigma) of the diff maps and a pooled line per side."""
    reports = list(reports)
    if not reports:
        raise EmptyInputError("joint_summary needs at least one report")
    rows = [{"side": r.side, "splint_id": r.splint_id, "repeat_id": r.repeat_id,
             "n": r.diff_n, "mu_mm": r.diff_mu_mm, "sigma_mm": r.diff_sigma_mm}
            for r in reports]
    pooled = {}
    for side in SIDES:
        trip = [(r.diff_n, r.diff_mu_mm, r.diff_sigma_mm) for r in reports if r.side == side]
        if trip:
            mu, sigma = weighted_aggregate(trip)
            pooled[side] = (int(sum(t[0] for t in trip)), mu, sigma)
    return JointSummary(rows, pooled)


def facing_mask(fossa: TriangleMesh, direction, max_angle_deg: float = 10.0) -> np.ndarray:
    """Fossa vertices whose surface faces a condyle displacement along ``direction``.

    The fossa winding points towards the condyle, so a vertex faces the
    motion when its normal is within ``max_angle_deg`` of ``-direction``.
    """
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    return fossa.vertex_normals @ -d >= math.cos(math.radians(max_angle_deg))


# -- scenario files -------------------------------------------------------------

@dataclass(eq=False)
class Scenario:
    joints: list                 # JointModel per side
    cases: list                  # (splint_id, repeat_id, planned, measured)
    roi: tuple | None = DEFAULT_ROI
    diff_limit_mm: float = 2.0
    paths: dict | None = None    # side -> (fossa path, condyle path) as written in the file


def save_scenario(path, joint_paths: dict, cases, roi=DEFAULT_ROI, diff_limit_mm: float = 2.0):
    """Write a scenario JSON; ``joint_paths`` maps side to ``(fossa, condyle)`` paths."""
    doc = {
        "joints": [{"side": side, "fossa": str(f), "condyle": str(c)}
                   for side, (f, c) in joint_paths.items()],
        "cases": [{"splint_id": sid, "repeat_id": rid, "planned": transform_to_json(p)["matrix"],
                   "measured": transform_to_json(m)["matrix"]} for sid, rid, p, m in cases],
        "roi": None if roi is None else [float(roi[0]), float(roi[1])],
        "diff_limit_mm": float(diff_limit_mm),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_scenario(path) -> Scenario:
    """Read a scenario JSON. Mesh paths are relative to the file's directory."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", offset=exc.pos) from exc
    base = os.path.dirname(os.path.abspath(path))
    try:
        joints, paths = [], {}
        for j in doc["joints"]:
            fp = os.path.join(base, j["fossa"])
            cp = os.path.join(base, j["condyle"])
            joints.append(JointModel(j["side"], load_mesh(fp, name=f"fossa_{j['side']}"),
                                     load_mesh(cp, name=f"condyle_{j['side']}")))
            paths[j["side"]] = (j["fossa"], j["condyle"])
        cases = [(str(c["splint_id"]), str(c["repeat_id"]), transform_from_json(c["planned"]),
                  transform_from_json(c["measured"])) for c in doc["cases"]]
        roi = doc.get("roi", list(DEFAULT_ROI))
        roi = None if roi is None else (float(roi[0]), float(roi[1]))
        limit = float(doc.get("diff_limit_mm", 2.0))
    except (KeyError, TypeError, IndexError) as exc:
        raise ParseError(f"{path}: malformed scenario ({exc!r})") from exc
    return Scenario(joints, cases, roi, limit, paths)
