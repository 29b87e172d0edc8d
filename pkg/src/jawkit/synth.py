"""Synthetic ground truth: jaw/joint phantoms, SE(3) noise, pipeline fixtures.

Phantom frame (mm): x lateral (left joint at +x), y anterior, z superior.
The condyle centres sit on the x axis, so a rotation about x through the
origin is a pure hinge opening.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import NonPSDCovarianceError, ParseError, ResolutionTooCoarseError
from .mesh import TriangleMesh, load_mesh, merge, save_mesh
from .se3 import (Mode, RigidTransform, compose, exp_rotation, exp_se3, log_rotation, log_se3,
                  transform_from_json, transform_to_json)

# -- geometry helpers -------------------------------------------------------------


def icosphere(level: int) -> TriangleMesh:
    """Unit icosphere with outward winding, ``20 * 4**level`` triangles."""
    p = (1 + 5 ** 0.5) / 2
    v = [(-1, p, 0), (1, p, 0), (-1, -p, 0), (1, -p, 0), (0, -1, p), (0, 1, p),
         (0, -1, -p), (0, 1, -p), (p, 0, -1), (p, 0, 1), (-p, 0, -1), (-p, 0, 1)]
    f = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
         (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
         (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(x, dtype=float) / np.linalg.norm(x) for x in v]
    faces = f
    for _ in range(level):
        cache = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        nf = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nf += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = nf
    return TriangleMesh(np.array(verts), np.array(faces))


def grid_triangles(n_rows: int, n_cols: int, flip: bool = False) -> np.ndarray:
    """Triangulate a row-major ``n_rows x n_cols`` vertex grid."""
    r, c = np.meshgrid(np.arange(n_rows - 1), np.arange(n_cols - 1), indexing="ij")
    a = (r * n_cols + c).ravel()
    b, d = a + 1, a + n_cols
    e = d + 1
    tris = np.concatenate([np.stack([a, d, b], 1), np.stack([b, d, e], 1)])
    return tris[:, ::-1] if flip else tris


def ellipsoid_distance(points, axes, inside: str = "nan") -> np.ndarray:
    """Euclidean distance from points to an axis-aligned centred ellipsoid surface.

    Exterior points only: solves the standard one-dimensional equation for
    the closest-point Lagrange multiplier by bisection.  Interior points get
    NaN.
    """
    p = np.abs(np.asarray(points, dtype=float).reshape(-1, 3))
    a = np.asarray(axes, dtype=float)
    a2 = a * a
    level = ((p / a) ** 2).sum(axis=1)
    out = np.full(len(p), np.nan)
    ext = level >= 1.0
    q = p[ext]
    lo = np.zeros(len(q))
    hi = a.max() * np.linalg.norm(q, axis=1) + 1e-12
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f = ((a * q / (mid[:, None] + a2)) ** 2).sum(axis=1) - 1.0
        lo = np.where(f > 0, mid, lo)
        hi = np.where(f > 0, hi, mid)
    t = 0.5 * (lo + hi)
    x = a2 * q / (t[:, None] + a2)
    out[ext] = np.linalg.norm(q - x, axis=1)
    return out


# -- phantom ------------------------------------------------------------------------

@dataclass(frozen=True)
class PhantomSpec:
    condyle_axes: tuple = (10.0, 4.5, 6.0)
    condyle_separation: float = 100.0          # centre-to-centre, along x
    fossa_gap_min: float = 1.5                 # gap at the fossa apex
    fossa_gap_rise: float = 4.0                # added gap at the fossa rim
    fossa_extent_deg: float = 75.0             # polar half-angle of the fossa cap
    arch_front_y: float = 100.0
    arch_back_y: float = 62.0
    arch_half_span: float = 26.0
    arch_z: float = -40.0                      # occlusal plane height
    arch_width: float = 9.0
    arch_height: float = 6.0
    tooth_period: float = 8.5
    tooth_amplitude: float = 2.0
    splint_gap: float = 3.0                    # vertical clearance between arches
    edge_length: float = 0.5
    seed: int = 0

    def __post_init__(self):
        dims = (*self.condyle_axes, self.condyle_separation, self.arch_width, self.arch_height,
                self.tooth_period, self.edge_length, self.arch_half_span)
        if any(d <= 0 for d in dims) or self.fossa_gap_min < 0:
            raise ValueError("phantom dimensions must be positive")

    @property
    def smallest_feature(self) -> float:
        return min(min(self.condyle_axes) / 2, self.tooth_period / 4, self.arch_width / 4)


@dataclass(eq=False)
class Phantom:
    spec: PhantomSpec
    condyles: dict          # side -> TriangleMesh
    fossae: dict            # side -> TriangleMesh
    fossa_gap: dict         # side -> per-vertex analytic gap (rest pose)
    fossa_normals: dict     # side -> per-vertex unit offset direction
    maxilla_arch: TriangleMesh
    mandible_arch: TriangleMesh

    def condyle_center(self, side: str) -> np.ndarray:
        s = 1.0 if side == "left" else -1.0
        return np.array([s * self.spec.condyle_separation / 2, 0.0, 0.0])

    def analytic_gap(self, side: str, points=None, pose: RigidTransform | None = None):
        """Exact distance to the continuous condyle ellipsoid.

        Without ``points`` returns the constructed gap at the fossa vertices.
        ``pose`` is the mandible transform applied to the condyle.
        """
        if points is None and pose is None:
            return self.fossa_gap[side]
        pts = self.fossae[side].vertices if points is None else np.asarray(points, dtype=float)
        if pose is not None:
            pts = (pts - pose.translation) @ pose.rotation
        return ellipsoid_distance(pts - self.condyle_center(side), self.spec.condyle_axes)

    @property
    def condyle(self):
        return self.condyles["left"]

    @property
    def fossa(self):
        return self.fossae["left"]


def _condyle_mesh(spec: PhantomSpec, center, name):
    a = np.asarray(spec.condyle_axes)
    level = 0
    while 1.1 * a.max() / 2 ** level > spec.edge_length and level < 7:
        level += 1
    sph = icosphere(level)
    return TriangleMesh(sph.vertices * a + center, sph.triangles, name)


def _fossa_mesh(spec: PhantomSpec, center, name):
    a = np.asarray(spec.condyle_axes)
    phi_max = math.radians(spec.fossa_extent_deg)
    rim = a.max() * phi_max
    n_rings = max(4, int(math.ceil(rim / spec.edge_length)))
    n_sect = max(12, int(math.ceil(2 * math.pi * a.max() * math.sin(phi_max) / spec.edge_length)))
    phi = np.linspace(0.0, phi_max, n_rings + 1)[1:]
    lam = np.linspace(0.0, 2 * math.pi, n_sect, endpoint=False)
    P, L = np.meshgrid(phi, lam, indexing="ij")
    dirs = np.stack([np.sin(P) * np.cos(L), np.sin(P) * np.sin(L), np.cos(P)], -1).reshape(-1, 3)
    dirs = np.vstack([[0.0, 0.0, 1.0], dirs])
    phis = np.concatenate([[0.0], P.ravel()])
    s = dirs * a
    n = s / (a * a)
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    gap = spec.fossa_gap_min + spec.fossa_gap_rise * (phis / phi_max) ** 2
    verts = center + s + gap[:, None] * n
    tris = []
    # apex fan; fossa winding faces down (towards the condyle)
    for j in range(n_sect):
        tris.append((0, 1 + (j + 1) % n_sect, 1 + j))
    for i in range(n_rings - 1):
        for j in range(n_sect):
            a0 = 1 + i * n_sect + j
            a1 = 1 + i * n_sect + (j + 1) % n_sect
            b0, b1 = a0 + n_sect, a1 + n_sect
            tris += [(a0, a1, b0), (a1, b1, b0)]
    return TriangleMesh(verts, np.array(tris), name), gap, n


def _arch_mesh(spec: PhantomSpec, upper: bool, rng: np.random.Generator, name: str):
    # U-shaped centreline y = front - k x^2, sampled by arc length
    k = (spec.arch_front_y - spec.arch_back_y) / spec.arch_half_span ** 2
    xs = np.linspace(-spec.arch_half_span, spec.arch_half_span, 4001)
    ys = spec.arch_front_y - k * xs ** 2
    seg = np.hypot(np.diff(xs), np.diff(ys))
    s_cum = np.concatenate([[0.0], np.cumsum(seg)])
    length = s_cum[-1]
    n_s = int(math.ceil(length / spec.edge_length)) + 1
    s = np.linspace(0.0, length, n_s)
    cx = np.interp(s, s_cum, xs)
    cy = np.interp(s, s_cum, ys)
    dx = np.gradient(cx)
    dy = np.gradient(cy)
    tl = np.hypot(dx, dy)
    nx, ny = dy / tl, -dx / tl             # in-plane normal to the curve
    n_teeth = int(math.ceil(length / spec.tooth_period)) + 1
    heights = 1.0 + 0.25 * rng.uniform(-1, 1, n_teeth)
    tooth = np.floor(s / spec.tooth_period).astype(int)
    phase = (s / spec.tooth_period) % 1.0
    bump = spec.tooth_amplitude * heights[tooth] * np.sin(math.pi * phase) ** 2
    profile_len = math.pi * (spec.arch_width / 2 + spec.arch_height) / 2
    n_u = max(9, int(math.ceil(profile_len / spec.edge_length)) + 1)
    u = np.linspace(-1.0, 1.0, n_u)
    lateral = spec.arch_width / 2 * np.sin(math.pi * u / 2)
    rise = np.cos(math.pi * u / 2)
    S, U = np.meshgrid(np.arange(n_s), np.arange(n_u), indexing="ij")
    lat = lateral[U]
    h = (spec.arch_height + bump[S]) * rise[U]
    # bottom arch: cusps point up (+z) towards the occlusal plane; top arch mirrored
    sign = 1.0 if upper else -1.0
    base = spec.arch_z + sign * (spec.splint_gap / 2 + spec.arch_height + spec.tooth_amplitude)
    z = base - sign * h
    verts = np.stack([cx[S] + lat * nx[S], cy[S] + lat * ny[S], z], -1).reshape(-1, 3)
    tris = grid_triangles(n_s, n_u, flip=not upper)
    mesh = TriangleMesh(verts, tris, name)
    # outward winding check: occlusal normals must face the other arch
    top = mesh.face_normals[:, 2].mean()
    if (top < 0) != upper:
        mesh = mesh.flipped()
    return mesh


def make_phantom(spec: PhantomSpec | None = None) -> Phantom:
    spec = spec or PhantomSpec()
    if spec.edge_length > spec.smallest_feature:
        raise ResolutionTooCoarseError(
            f"edge length {spec.edge_length} mm exceeds smallest feature "
            f"{spec.smallest_feature:.3g} mm")
    rng = np.random.default_rng(spec.seed)
    condyles, fossae, gaps, normals = {}, {}, {}, {}
    for side, sx in (("left", 1.0), ("right", -1.0)):
        c = np.array([sx * spec.condyle_separation / 2, 0.0, 0.0])
        condyles[side] = _condyle_mesh(spec, c, f"condyle_{side}")
        fossae[side], gaps[side], normals[side] = _fossa_mesh(spec, c, f"fossa_{side}")
    maxilla = _arch_mesh(spec, True, rng, "maxilla_arch")
    mandible = _arch_mesh(spec, False, rng, "mandible_arch")
    return Phantom(spec, condyles, fossae, gaps, normals, maxilla, mandible)


# -- SE(3) noise --------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Gaussian in the tangent space at ``exp(mean)``.

    ``mean`` is a tangent 6-vector ``[rot (rad), trans (mm)]``; ``covariance``
    is 6x6 with the rotation block in deg^2 and the translation block in mm^2.
    """

    mean: np.ndarray = field(default_factory=lambda: np.zeros(6))
    covariance: np.ndarray = field(default_factory=lambda: np.zeros((6, 6)))
    mode: str = "coupled"

    def __post_init__(self):
        m = np.asarray(self.mean, dtype=float).reshape(6)
        c = np.asarray(self.covariance, dtype=float).reshape(6, 6)
        if not np.allclose(c, c.T, atol=1e-9):
            raise NonPSDCovarianceError("covariance is not symmetric")
        if np.linalg.eigvalsh(c).min() < -1e-9:
            raise NonPSDCovarianceError("covariance has a negative eigenvalue")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "covariance", 0.5 * (c + c.T))

    @property
    def factor(self) -> np.ndarray:
        """``L`` with ``L L^T = covariance``; Cholesky, or eigen-based when singular."""
        try:
            return np.linalg.cholesky(self.covariance)
        except np.linalg.LinAlgError:
            lam, v = np.linalg.eigh(self.covariance)
            return v * np.sqrt(np.clip(lam, 0.0, None))

    @property
    def center(self) -> RigidTransform:
        return exp_se3(self.mean, self.mode)


_DEG = np.concatenate([np.full(3, math.pi / 180.0), np.ones(3)])


def sample_transforms(model: NoiseModel, n: int, seed=None) -> list[RigidTransform]:
    """``T_i = exp(mean + L z_i)`` with standard normal ``z_i``.

    The sample is drawn in degrees/mm and converted to radians before the
    exponential map.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, 6))
    xi = (z @ model.factor.T) * _DEG + model.mean
    return [exp_se3(x, model.mode) for x in xi]


def covariance_from_axes(trans_axes, trans_variances, rot_axes, rot_variances) -> np.ndarray:
    """Block-diagonal 6x6 covariance from principal axes (columns) and variances."""
    c = np.zeros((6, 6))
    for sl, axes, var in ((slice(0, 3), rot_axes, rot_variances),
                          (slice(3, 6), trans_axes, trans_variances)):
        u, _, vt = np.linalg.svd(np.asarray(axes, dtype=float))
        q = u @ vt                      # nearest orthonormal frame
        c[sl, sl] = q @ np.diag(var) @ q.T
    return c


def dental_error_model(mode: Mode = "coupled") -> NoiseModel:
    """Noise resembling the reported splint error: x-dominated translation,
    mean near ``(-1.93, -0.43, -0.39)`` mm and about 1.3 degrees rotation."""
    mean_rot = np.radians([-0.168, 0.757, 1.066])
    mean_t = np.array([-1.9276, -0.4282, -0.3883])
    trans_axes = np.array([[-0.9726, -0.2070, -0.1061],
                           [-0.2324, 0.8833, 0.4071],
                           [-0.0094, -0.4206, 0.9072]]).T
    rot_axes = np.array([[-0.0905, 0.3178, 0.9438],
                         [-0.3062, 0.8929, -0.3301],
                         [0.9477, 0.3188, -0.0165]]).T
    cov = covariance_from_axes(trans_axes, [2.4358, 0.7820, 0.3477],
                               rot_axes, [1.3594, 0.5300, 0.3812])
    if mode == "coupled":
        mean = log_se3(RigidTransform(exp_rotation(mean_rot), mean_t))
    else:
        mean = np.concatenate([mean_rot, mean_t])
    return NoiseModel(mean, cov, mode)


# -- scenarios ----------------------------------------------------------------------

def _pose(open_deg=0.0, yaw_deg=0.0, t=(0.0, 0.0, 0.0), pivot=(0.0, 0.0, 0.0)):
    """Hinge opening about x and yaw about z, both through ``pivot``, then translate."""
    r = exp_rotation([-math.radians(open_deg), 0.0, 0.0]) @ exp_rotation([0.0, 0.0, math.radians(yaw_deg)])
    pv = np.asarray(pivot, dtype=float)
    return RigidTransform(r, pv - r @ pv + np.asarray(t, dtype=float))


def planned_presets(spec: PhantomSpec | None = None) -> list[tuple[str, RigidTransform]]:
    """Eight target mandible poses covering protrusion, laterotrusion and opening."""
    spec = spec or PhantomSpec()
    half = spec.condyle_separation / 2
    return [
        ("incisor_contact", _pose(2.0, 0.0, (0.0, 3.0, -1.0))),
        ("max_protrusion", _pose(4.0, 0.0, (0.0, 6.0, -2.5))),
        ("laterotrusion_right", _pose(1.5, -4.0, (0.0, 0.5, -0.5), pivot=(-half, 0, 0))),
        ("laterotrusion_left", _pose(1.5, 4.0, (0.0, 0.5, -0.5), pivot=(half, 0, 0))),
        ("opening_10", _pose(10.0, 0.0, (0.0, 1.5, -1.0))),
        ("opening_20", _pose(20.0, 0.0, (0.0, 4.0, -2.0))),
        ("protrusion_right", _pose(3.0, -2.0, (-1.5, 4.0, -1.5))),
        ("protrusion_left", _pose(3.0, 2.0, (1.5, 4.0, -1.5))),
    ]


@dataclass(eq=False)
class ScenarioCase:
    splint_id: str
    repeat_id: str
    planned: RigidTransform
    measured: RigidTransform
    error: RigidTransform            # ground truth: measured = error @ planned
    scanner_pose: RigidTransform     # reference -> scan frame
    scan: TriangleMesh


@dataclass(eq=False)
class Scenario:
    phantom: Phantom
    model: NoiseModel
    cases: list

    def __len__(self):
        return len(self.cases)


def build_scenario(spec: PhantomSpec | None = None, model: NoiseModel | None = None,
                   splints: int = 8, repeats: int = 4, jitter_mm: float = 0.05,
                   scanner_offset=(1.0, 1.0), seed: int = 0, phantom: Phantom | None = None,
                   with_scans: bool = True, errors=None) -> Scenario:
    """Full pipeline fixture with exact ground truth.

    For each (splint, repeat): ``measured = error @ planned``, where ``error``
    is a draw from ``model`` expressed in the reference frame, and the scan
    holds the maxilla and the measured mandible, jittered and moved into a
    scanner frame by a random rigid offset of at most ``scanner_offset``
    (mm, degrees) about the arch centroid.

    ``errors`` replaces the draws from ``model`` with explicit transforms
    (one per case, splint-major order).
    """
    if splints < 1 or repeats < 1:
        raise ValueError("splints and repeats must be >= 1")
    spec = spec or PhantomSpec()
    phantom = phantom or make_phantom(spec)
    model = model or NoiseModel()
    presets = planned_presets(spec)
    rng = np.random.default_rng(seed)
    drawn = sample_transforms(model, splints * repeats, seed=rng.integers(2 ** 32))
    if errors is None:
        errors = drawn
    elif len(errors) != splints * repeats:
        raise ValueError(f"need {splints * repeats} error transforms, got {len(errors)}")
    cases = []
    centroid = phantom.maxilla_arch.vertices.mean(axis=0)
    for i in range(splints):
        name, planned = presets[i % len(presets)]
        sid = f"S{i + 1}" if splints > len(presets) else name
        for j in range(repeats):
            err = errors[i * repeats + j]
            measured = compose(err, planned)
            ax = rng.normal(size=3)
            ax /= np.linalg.norm(ax)
            ang = math.radians(scanner_offset[1]) * rng.uniform(0, 1)
            tdir = rng.normal(size=3)
            tdir /= np.linalg.norm(tdir)
            r = exp_rotation(ax * ang)
            t = centroid - r @ centroid + tdir * scanner_offset[0] * rng.uniform(0, 1)
            scanner = RigidTransform(r, t)
            scan = None
            if with_scans:
                mand = phantom.mandible_arch.transformed(measured)
                both = merge([phantom.maxilla_arch, mand], name=f"scan_{sid}_{j + 3}t")
                v = both.vertices
                if jitter_mm > 0:
                    v = v + rng.normal(scale=jitter_mm, size=v.shape)
                scan = TriangleMesh(v, both.triangles, both.name).transformed(scanner)
            cases.append(ScenarioCase(sid, f"{j + 3}t", planned, measured, err, scanner, scan))
    return Scenario(phantom, model, cases)


def span_magnitudes(transforms, t_range=(0.5, 7.0), theta_range_deg=(0.4, 4.5)):
    """Rescale magnitudes to fill the given ranges, keeping every direction.

    Translation norms and rotation angles are replaced by evenly spaced
    values assigned in rank order, so the smallest sample gets the lower
    bound and the largest the upper bound.
    """
    ts = np.array([t.translation for t in transforms])
    rv = np.array([log_rotation(t.rotation) for t in transforms])
    n = len(ts)
    tn = np.linalg.norm(ts, axis=1)
    th = np.linalg.norm(rv, axis=1)
    if np.any(tn == 0) or np.any(th == 0):
        raise ValueError("cannot rescale a zero translation or rotation")
    new_tn = np.empty(n)
    new_th = np.empty(n)
    new_tn[np.argsort(tn, kind="stable")] = np.linspace(*t_range, n)
    new_th[np.argsort(th, kind="stable")] = np.radians(np.linspace(*theta_range_deg, n))
    return [RigidTransform(exp_rotation(r / a * b), t / m * k)
            for t, r, m, a, k, b in zip(ts, rv, tn, th, new_tn, new_th)]


def with_edge_length(spec: PhantomSpec, edge: float) -> PhantomSpec:
    return replace(spec, edge_length=edge)


# -- fixture bundles ------------------------------------------------------------------

FIXTURE_FORMAT = "jawkit-fixture/1"


def _m(t: RigidTransform) -> list:
    return transform_to_json(t)["matrix"]


def write_fixture(scenario: Scenario, directory, seed: int | None = None,
                  jitter_mm: float | None = None) -> str:
    """Write meshes (PLY), transforms (JSON) and a ground-truth manifest.

    Layout::

        manifest.json   scenario.json   tree.json
        meshes/*.ply    scans/*.ply

    ``scenario.json`` drives the joint simulation with the true planned and
    measured transforms; ``tree.json`` is a consistent three-frame tree
    (scanner, reference, mandible). Returns the manifest path.
    """
    from .tmj import save_scenario
    from .tree import CHECK, TransformTree

    ph = scenario.phantom
    os.makedirs(os.path.join(directory, "meshes"), exist_ok=True)
    meshes = {"maxilla_arch": ph.maxilla_arch, "mandible_arch": ph.mandible_arch}
    for side in ("left", "right"):
        meshes[f"condyle_{side}"] = ph.condyles[side]
        meshes[f"fossa_{side}"] = ph.fossae[side]
    mesh_paths = {}
    for name, mesh in meshes.items():
        rel = f"meshes/{name}.ply"
        save_mesh(mesh, os.path.join(directory, rel))
        mesh_paths[name] = rel
    cases = []
    for c in scenario.cases:
        entry = {"splint_id": c.splint_id, "repeat_id": c.repeat_id, "planned": _m(c.planned),
                 "truth": {"error": _m(c.error), "measured": _m(c.measured),
                           "scanner_pose": _m(c.scanner_pose)}}
        if c.scan is not None:
            os.makedirs(os.path.join(directory, "scans"), exist_ok=True)
            rel = f"scans/scan_{c.splint_id}_{c.repeat_id}.ply"
            save_mesh(c.scan, os.path.join(directory, rel))
            entry["scan"] = rel
        cases.append(entry)
    save_scenario(os.path.join(directory, "scenario.json"),
                  {s: (mesh_paths[f"fossa_{s}"], mesh_paths[f"condyle_{s}"]) for s in ("left", "right")},
                  [(c.splint_id, c.repeat_id, c.planned, c.measured) for c in scenario.cases])
    # frames: K scanner, C reference, M mandible of the first case; C->M->K closes a loop
    tree = TransformTree(["C", "K", "M"])
    first = scenario.cases[0]
    tree.add_edge("C", "K", first.scanner_pose, label="scanner_pose")
    tree.add_edge("M", "C", first.measured, label="measured")
    tree.add_edge("M", "K", compose(first.scanner_pose, first.measured), CHECK, "scan_mandible")
    tree.save(os.path.join(directory, "tree.json"))
    model = scenario.model
    manifest = {
        "format": FIXTURE_FORMAT,
        "seed": seed,
        "jitter_mm": jitter_mm,
        "phantom": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(ph.spec).items()},
        "noise_model": {"mean": [float(x) for x in model.mean],
                        "covariance": [[float(x) for x in row] for row in model.covariance],
                        "mode": model.mode},
        "meshes": mesh_paths,
        "joints": [{"side": s, "fossa": mesh_paths[f"fossa_{s}"],
                    "condyle": mesh_paths[f"condyle_{s}"]} for s in ("left", "right")],
        "scenario": "scenario.json",
        "tree": "tree.json",
        "cycles": [["C", "M", "K"]],
        "cases": cases,
    }
    path = os.path.join(directory, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return path


@dataclass(eq=False)
class FixtureCase:
    splint_id: str
    repeat_id: str
    planned: RigidTransform
    scan_path: str | None
    truth: dict                  # name -> RigidTransform (may be empty)

    def load_scan(self) -> TriangleMesh:
        if self.scan_path is None:
            raise ValueError(f"case {self.splint_id}/{self.repeat_id} has no scan")
        return load_mesh(self.scan_path, name=f"scan_{self.splint_id}_{self.repeat_id}")


@dataclass(eq=False)
class Fixture:
    root: str
    manifest: dict
    meshes: dict                 # name -> absolute path
    cases: list

    def mesh(self, name: str) -> TriangleMesh:
        return load_mesh(self.meshes[name], name=name)

    def path(self, key: str) -> str | None:
        rel = self.manifest.get(key)
        return None if rel is None else os.path.join(self.root, rel)


def load_fixture(path) -> Fixture:
    """Read a manifest written by :func:`write_fixture` (paths relative to it)."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", offset=exc.pos) from exc
    root = os.path.dirname(os.path.abspath(path))
    try:
        if doc.get("format") != FIXTURE_FORMAT:
            raise ParseError(f"{path}: not a fixture manifest (format {doc.get('format')!r})")
        meshes = {k: os.path.join(root, v) for k, v in doc["meshes"].items()}
        cases = []
        for c in doc["cases"]:
            truth = {k: transform_from_json(v) for k, v in c.get("truth", {}).items()}
            scan = c.get("scan")
            cases.append(FixtureCase(str(c["splint_id"]), str(c["repeat_id"]),
                                     transform_from_json(c["planned"]),
                                     None if scan is None else os.path.join(root, scan), truth))
    except (KeyError, TypeError, AttributeError) as exc:
        raise ParseError(f"{path}: malformed manifest ({exc!r})") from exc
    return Fixture(root, doc, meshes, cases)
