"""Rigid surface registration.

``best_fit`` solves the weighted orthogonal Procrustes problem in closed form;
``icp`` alternates closest-point correspondences on a triangle surface with
``best_fit``.  Correspondences are filtered by a distance radius, optionally by
normal compatibility, and then trimmed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometryError, NoCorrespondencesError
from .mesh import TriangleMesh
from .se3 import RigidTransform, apply, compose, error_magnitude, exp_se3, inverse, log_se3

log = logging.getLogger(__name__)

MAX_BACKTRACK = 6


def best_fit(source, target, weights=None) -> RigidTransform:
    """Rigid transform minimizing ``sum w_i |R s_i + t - t_i|^2``."""
    s = np.asarray(source, dtype=float).reshape(-1, 3)
    d = np.asarray(target, dtype=float).reshape(-1, 3)
    if len(s) != len(d):
        raise ValueError("source and target differ in length")
    if len(s) < 3:
        raise DegenerateGeometryError("need at least three point pairs")
    w = np.ones(len(s)) if weights is None else np.asarray(weights, dtype=float)
    if np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be nonnegative with positive sum")
    w = w / w.sum()
    cs = w @ s
    cd = w @ d
    h = (s - cs).T @ ((d - cd) * w[:, None])
    u, sv, vt = np.linalg.svd(h)
    if sv[0] <= 0 or sv[1] <= 1e-12 * sv[0]:
        raise DegenerateGeometryError("cross-covariance rank < 2 (collinear or coincident points)")
    fix = np.diag([1.0, 1.0, np.sign(np.linalg.det(vt.T @ u.T)) or 1.0])
    r = vt.T @ fix @ u.T
    return RigidTransform(r, cd - r @ cs)


@dataclass(frozen=True)
class IcpParams:
    max_iterations: int = 100
    convergence_tol_mm: float = 1e-6
    max_correspondence_mm: float = 2.0
    trim_fraction: float = 0.1
    max_normal_angle_deg: float | None = None
    metric: str = "point_to_point"
    coarse_radii_mm: tuple = ()

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.convergence_tol_mm <= 0 or self.max_correspondence_mm <= 0:
            raise ValueError("tolerances must be positive")
        if not 0.0 <= self.trim_fraction <= 0.5:
            raise ValueError("trim_fraction must lie in [0, 0.5]")
        if self.metric != "point_to_point":
            raise ValueError(f"unsupported ICP metric {self.metric!r}")


@dataclass
class IcpResult:
    transform: RigidTransform
    rms_mm: float
    iterations_used: int
    inlier_count: int
    converged: bool
    trace: list = field(default_factory=list)

    def to_json(self, trace: bool = False) -> dict:
        theta, tnorm = error_magnitude(self.transform)
        out = {"matrix": [float(x) for x in self.transform.matrix.reshape(-1)],
               "rms_mm": self.rms_mm, "iterations_used": self.iterations_used,
               "inlier_count": self.inlier_count, "converged": self.converged,
               "theta_deg": theta, "t_norm_mm": tnorm}
        if trace:
            out["trace"] = self.trace
        return out


def _correspond(index, pts, src_normals, params, radius):
    """Closest points, inlier mask and the trimmed objective.

    Pairs failing the radius or normal test cost ``radius**2``; the objective
    is the mean of the ``K`` smallest costs with ``K`` fixed by the trim
    fraction, which makes it non-increasing under ICP steps.
    """
    cp, d, tri, _ = index.query(pts)
    ok = d <= radius
    if params.max_normal_angle_deg is not None and src_normals is not None:
        fn = index.mesh.face_normals[tri]
        ok &= np.einsum("ij,ij->i", src_normals, fn) >= math.cos(
            math.radians(params.max_normal_angle_deg))
    cost = np.where(ok, d * d, radius * radius)
    k = len(d) - int(math.floor(params.trim_fraction * len(d)))
    order = np.argsort(cost, kind="stable")[:k]
    kept = np.sort(order[ok[order]])
    rms = float(np.sqrt(cost[order].mean()))
    return kept, cp, rms


def icp(source, target: TriangleMesh, init: RigidTransform | None = None,
        params: IcpParams | None = None, source_normals=None,
        radius: float | None = None) -> IcpResult:
    """Align ``source`` points onto the ``target`` surface.

    The returned transform maps source coordinates onto the target. Each
    iteration pairs every source point with its closest surface point, rejects
    pairs beyond ``radius`` (and, if configured, pairs with incompatible
    normals), keeps the best ``1 - trim_fraction`` share and refits.

    ``rms_mm`` is the trimmed RMS with rejected pairs counted at the radius.
    The normal test can make a full refit step raise it; such a step is
    shortened geodesically (halving, up to ``MAX_BACKTRACK`` times) and the
    loop stops if no shortened step helps, so the recorded trace never
    increases.

    Raises :class:`NoCorrespondencesError` when every pair is rejected.
    """
    params = params or IcpParams()
    radius = params.max_correspondence_mm if radius is None else radius
    src = np.asarray(source, dtype=float).reshape(-1, 3)
    if len(src) == 0:
        raise ValueError("empty source point set")
    nrm = None if source_normals is None else np.asarray(source_normals, dtype=float)
    index = target.index

    def evaluate(pose, it):
        pts = apply(pose, src)
        n_rot = None if nrm is None else nrm @ pose.rotation.T
        kept, cp, rms = _correspond(index, pts, n_rot, params, radius)
        if len(kept) == 0:
            raise NoCorrespondencesError(
                f"all {len(src)} pairs rejected at iteration {it} (radius {radius} mm)")
        return pts, kept, cp, rms

    cur = init or RigidTransform.identity()
    pts, kept, cp, rms = evaluate(cur, 1)
    trace = [{"iteration": 1, "rms_mm": rms, "inliers": int(len(kept))}]
    converged = False
    it = 1
    while it < params.max_iterations:
        if len(kept) < 3:
            raise NoCorrespondencesError(f"only {len(kept)} correspondences at iteration {it}")
        step = best_fit(pts[kept], cp[kept])
        it += 1
        cand = compose(step, cur)
        c_pts, c_kept, c_cp, c_rms = evaluate(cand, it)
        if c_rms > rms:
            xi = log_se3(step)
            for k in range(1, MAX_BACKTRACK + 1):
                cand = compose(exp_se3(xi * 0.5 ** k), cur)
                c_pts, c_kept, c_cp, c_rms = evaluate(cand, it)
                if c_rms <= rms:
                    break
        if c_rms > rms:
            converged = True
            break
        gain = rms - c_rms
        cur, pts, kept, cp, rms = cand, c_pts, c_kept, c_cp, c_rms
        trace.append({"iteration": it, "rms_mm": rms, "inliers": int(len(kept))})
        if gain < params.convergence_tol_mm:
            converged = True
            break
    return IcpResult(cur, rms, len(trace), int(len(kept)), converged, trace)


def icp_schedule(source, target, init=None, params=None, source_normals=None, stage=None):
    """Run ICP over ``params.coarse_radii_mm`` then the final correspondence radius."""
    params = params or IcpParams()
    cur = init or RigidTransform.identity()
    result = None
    for radius in tuple(params.coarse_radii_mm) + (params.max_correspondence_mm,):
        try:
            result = icp(source, target, cur, params, source_normals, radius=radius)
        except NoCorrespondencesError as exc:
            raise NoCorrespondencesError(str(exc), stage=stage) from exc
        cur = result.transform
    return result


def principal_axes_prealign(source, target) -> RigidTransform:
    """Coarse alignment matching centroids and principal axes.

    Of the four proper sign choices for the axes, the one with the smallest
    mean nearest-neighbour distance between the point clouds is returned.
    """
    from scipy.spatial import cKDTree

    s = np.asarray(source, dtype=float)
    d = np.asarray(target, dtype=float)
    cs, cd = s.mean(0), d.mean(0)
    _, vs = np.linalg.eigh(np.cov((s - cs).T))
    _, vd = np.linalg.eigh(np.cov((d - cd).T))
    tree = cKDTree(d)
    best, best_cost = None, math.inf
    for sx, sy in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
        flip = np.diag([sx, sy, sx * sy])
        a = vd @ flip
        b = vs
        r = a @ b.T
        if np.linalg.det(r) < 0:
            a = a @ np.diag([1, 1, -1])
            r = a @ b.T
        t = RigidTransform(r, cd - r @ cs)
        cost = float(tree.query(apply(t, s))[0].mean())
        if cost < best_cost:
            best, best_cost = t, cost
    return best


def _subsample(n: int, limit: int | None) -> np.ndarray:
    if limit is None or n <= limit:
        return np.arange(n)
    return np.linspace(0, n - 1, limit).round().astype(np.int64)


@dataclass
class SplintMeasurement:
    error: RigidTransform
    scan_to_reference: RigidTransform
    stage1: IcpResult
    stage2: IcpResult


def default_splint_params() -> IcpParams:
    return IcpParams(max_iterations=200, convergence_tol_mm=1e-7, max_correspondence_mm=2.0,
                     trim_fraction=0.1, max_normal_angle_deg=60.0,
                     coarse_radii_mm=(12.0, 6.0))


def splint_positioning_error(planned: TriangleMesh, measured_scan: TriangleMesh,
                             maxilla_ref: TriangleMesh, params: IcpParams | None = None,
                             init: RigidTransform | None = None,
                             max_source_points: int | None = 4000,
                             full_output: bool = False):
    """Error transform realized by a splint.

    Stage 1 registers the reference maxilla onto the scan and brings the scan
    into the reference frame.  Stage 2 registers the planned mandible (already
    in its therapeutic pose) onto the aligned scan; that transform is the
    error, identity meaning the splint reproduced the plan exactly.

    ``init`` seeds stage 1 (scan pose relative to the reference).
    """
    params = params or default_splint_params()
    mx = _subsample(maxilla_ref.n_vertices, max_source_points)
    s1 = icp_schedule(maxilla_ref.vertices[mx], measured_scan, init, params,
                      maxilla_ref.vertex_normals[mx], stage=1)
    to_ref = inverse(s1.transform)
    aligned = measured_scan.transformed(to_ref, name=measured_scan.mesh_id + "@ref")
    md = _subsample(planned.n_vertices, max_source_points)
    s2 = icp_schedule(planned.vertices[md], aligned, None, params,
                      planned.vertex_normals[md], stage=2)
    log.debug("splint error: stage1 rms %.4f, stage2 rms %.4f", s1.rms_mm, s2.rms_mm)
    if full_output:
        return SplintMeasurement(s2.transform, to_ref, s1, s2)
    return s2.transform
