"""Per-vertex distance maps between surfaces and their summary statistics.

Sign convention: positive values lie outside the target surface (a gap),
negative values penetrate it.  Masked vertices carry NaN.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInputError, EmptyMapError, VertexSetMismatchError
from .mesh import TriangleMesh, ply_bytes


@dataclass(frozen=True, eq=False)
class DistanceMap:
    source_mesh_id: str
    target_mesh_id: str
    values: np.ndarray                 # (n,), NaN where masked
    valid: np.ndarray                  # (n,) bool
    signed: bool = True
    roi: tuple | None = None
    clamp: float | None = None
    counts: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        ok = np.array(self.valid, dtype=bool)
        v[~ok] = np.nan
        v.flags.writeable = False
        ok.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "valid", ok)

    def __len__(self):
        return len(self.values)

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())

    @property
    def valid_values(self) -> np.ndarray:
        return self.values[self.valid]

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["vertex_id", "distance", "valid"])
            for i, (d, ok) in enumerate(zip(self.values, self.valid)):
                w.writerow([i, repr(float(d)) if ok else "", int(ok)])

    def save_ply(self, path, mesh: TriangleMesh, binary: bool = True) -> None:
        """Write the source mesh with ``distance_mm`` and ``valid`` vertex properties."""
        if mesh.n_vertices != len(self):
            raise VertexSetMismatchError("mesh and map differ in vertex count")
        data = ply_bytes(mesh.vertices, mesh.triangles, binary=binary, vertex_properties={
            "distance_mm": ("float", np.nan_to_num(self.values, nan=0.0)),
            "valid": ("uchar", self.valid.astype(np.uint8)),
        })
        with open(path, "wb") as fh:
            fh.write(data)


def distance_map(source: TriangleMesh, target: TriangleMesh, signed: bool = True,
                 clamp_mm: float | None = None, roi=None, points=None) -> DistanceMap:
    """Distance from every source vertex to the target surface.

    Vertices with ``|d| > clamp_mm`` are masked (tolerance semantics); with
    ``roi = (lo, hi)`` vertices whose value falls outside the closed range are
    masked too. ``points`` overrides the query locations (for example source
    vertices already mapped into the target's frame); the map still belongs to
    ``source``.
    """
    pts = source.vertices if points is None else np.asarray(points, dtype=float)
    index = target.index
    if signed:
        d, _, _ = index.signed_query(pts)
    else:
        _, d, _, _ = index.query(pts)
    valid = np.ones(len(d), dtype=bool)
    counts = {"total": len(d)}
    if clamp_mm is not None:
        out = np.abs(d) > clamp_mm
        counts["clamped"] = int(out.sum())
        valid &= ~out
    if roi is not None:
        lo, hi = roi
        out = (d < lo) | (d > hi)
        counts["outside_roi"] = int((out & valid).sum())
        valid &= ~out
    counts["valid"] = int(valid.sum())
    return DistanceMap(source.mesh_id, target.mesh_id, d, valid, signed,
                       None if roi is None else (float(roi[0]), float(roi[1])),
                       clamp_mm, counts)


def map_stats(m: DistanceMap) -> tuple[int, float, float]:
    """``(N_valid, mean, population std)`` over valid vertices."""
    v = m.valid_values
    if len(v) == 0:
        raise EmptyMapError(f"map {m.source_mesh_id}->{m.target_mesh_id} has no valid vertices")
    return len(v), float(v.mean()), float(v.std())


def weighted_aggregate(per_sample) -> tuple[float, float]:
    """Pool ``(N_i, mu_i, sigma_i)`` triples into a global mean and std.

    The result equals the population mean and std of the concatenated
    underlying values.
    """
    arr = np.asarray(list(per_sample), dtype=float).reshape(-1, 3)
    if len(arr) == 0:
        raise EmptyInputError("no samples to aggregate")
    n, mu, sigma = arr.T
    if np.any(n < 1) or np.any(sigma < 0):
        raise ValueError("need N_i >= 1 and sigma_i >= 0")
    total = n.sum()
    mean = float((n * mu).sum() / total)
    second = float((n * (sigma ** 2 + mu ** 2)).sum() / total)
    # a second moment barely below mean^2 is rounding noise
    return mean, math.sqrt(max(second - mean * mean, 0.0))


def difference_map(planned: DistanceMap, measured: DistanceMap) -> DistanceMap:
    """Per-vertex ``measured - planned``; valid where both inputs are valid."""
    if planned.source_mesh_id != measured.source_mesh_id or len(planned) != len(measured):
        raise VertexSetMismatchError(
            f"maps live on different vertex sets ({planned.source_mesh_id!r} vs "
            f"{measured.source_mesh_id!r})")
    valid = planned.valid & measured.valid
    diff = np.where(valid, np.nan_to_num(measured.values) - np.nan_to_num(planned.values), np.nan)
    return DistanceMap(planned.source_mesh_id, f"{measured.target_mesh_id}-{planned.target_mesh_id}",
                       diff, valid, True, None, None,
                       {"total": len(diff), "valid": int(valid.sum())})
