"""Coordinate-frame registry with rigid-transform edges.

An edge ``(a, b, T)`` maps point coordinates expressed in frame ``a`` into
frame ``b``.  A transform written ``P_AB`` in the usual "maps B into A"
notation is therefore stored as the edge ``(B, A, P_AB)``.

Edges have a role. *Spanning* edges form a forest and are the only ones used
by :meth:`TransformTree.resolve`; *check* edges close loops and exist so that
loop inconsistency can be measured with :meth:`TransformTree.consistency_error`.
"""

from __future__ import annotations

import bisect
import csv
import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import se3
from .errors import (
    DisconnectedFramesError,
    DuplicateEdgeError,
    MissingEdgeError,
    ParseError,
    SpanningCycleError,
    UnknownFrameError,
)
from .se3 import RigidTransform, compose, inverse

SPANNING = "spanning"
CHECK = "check"


@dataclass(frozen=True, eq=False)
class Edge:
    source: str
    target: str
    transform: RigidTransform
    role: str = SPANNING
    label: str = ""


@dataclass
class TransformTree:
    frames: list[str] = field(default_factory=list)
    edges: list[Edge] = field(default_factory=list)

    def __post_init__(self):
        self._pairs: dict[frozenset, Edge] = {}
        self._adj: dict[str, list[Edge]] = {f: [] for f in self.frames}
        edges, self.edges = list(self.edges), []
        for e in edges:
            self.add_edge(e.source, e.target, e.transform, e.role, e.label)

    # -- building -------------------------------------------------------------

    def add_frame(self, name: str) -> "TransformTree":
        if not name:
            raise ValueError("frame name must be nonempty")
        if name not in self._adj:
            self.frames.append(name)
            self._adj[name] = []
        return self

    def add_edge(self, source: str, target: str, transform: RigidTransform,
                 role: str = SPANNING, label: str = "") -> "TransformTree":
        for f in (source, target):
            if f not in self._adj:
                raise UnknownFrameError(f"unknown frame {f!r}")
        if role not in (SPANNING, CHECK):
            raise ValueError(f"role must be {SPANNING!r} or {CHECK!r}")
        if source == target:
            raise ValueError("self-loop edges are not allowed")
        key = frozenset((source, target))
        if key in self._pairs:
            raise DuplicateEdgeError(f"an edge between {source!r} and {target!r} already exists")
        if role == SPANNING and self._spanning_path(source, target) is not None:
            raise SpanningCycleError(
                f"spanning edge {source}->{target} would close a loop; add it as a check edge")
        e = Edge(source, target, transform, role, label)
        self._pairs[key] = e
        self.edges.append(e)
        if role == SPANNING:
            self._adj[source].append(e)
            self._adj[target].append(e)
        return self

    # -- queries --------------------------------------------------------------

    def _spanning_path(self, a: str, b: str):
        """Edge path a -> b over spanning edges (BFS), or None."""
        if a == b:
            return []
        prev = {a: None}
        queue = deque([a])
        while queue:
            node = queue.popleft()
            for e in self._adj[node]:
                nxt = e.target if e.source == node else e.source
                if nxt in prev:
                    continue
                prev[nxt] = (node, e)
                if nxt == b:
                    path = []
                    cur = b
                    while prev[cur] is not None:
                        p, edge = prev[cur]
                        path.append((p, cur, edge))
                        cur = p
                    return path[::-1]
                queue.append(nxt)
        return None

    def resolve(self, source: str, target: str) -> RigidTransform:
        """Transform taking coordinates in ``source`` to coordinates in ``target``."""
        for f in (source, target):
            if f not in self._adj:
                raise UnknownFrameError(f"unknown frame {f!r}")
        path = self._spanning_path(source, target)
        if path is None:
            raise DisconnectedFramesError(f"no spanning path between {source!r} and {target!r}")
        out = RigidTransform.identity()
        for frm, to, e in path:
            step = e.transform if e.source == frm else inverse(e.transform)
            out = compose(step, out)
        return out

    def path(self, source: str, target: str) -> list[str]:
        """Frames visited along spanning edges from ``source`` to ``target``."""
        self.resolve(source, target)
        return [source] + [to for _, to, _ in self._spanning_path(source, target)]

    def edge_transform(self, a: str, b: str) -> RigidTransform:
        e = self._pairs.get(frozenset((a, b)))
        if e is None:
            raise MissingEdgeError(f"no stored edge between {a!r} and {b!r}")
        return e.transform if e.source == a else inverse(e.transform)

    def consistency_error(self, cycle) -> RigidTransform:
        """Compose stored edges around a closed frame loop.

        ``cycle`` lists frames in order; the closing frame may be repeated at
        the end or omitted. Identity means the loop is consistent.
        """
        cycle = list(cycle)
        if len(cycle) < 2:
            raise ValueError("a cycle needs at least two frames")
        if cycle[0] != cycle[-1]:
            cycle.append(cycle[0])
        out = RigidTransform.identity()
        for a, b in zip(cycle[:-1], cycle[1:]):
            out = compose(self.edge_transform(a, b), out)
        return out

    # -- serialization --------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "frames": list(self.frames),
            "edges": [
                {"from": e.source, "to": e.target, "role": e.role, "label": e.label,
                 "matrix": se3.transform_to_json(e.transform)["matrix"]}
                for e in self.edges
            ],
        }

    @classmethod
    def from_json(cls, obj) -> "TransformTree":
        try:
            tree = cls(frames=[str(f) for f in obj["frames"]])
            for e in obj["edges"]:
                tree.add_edge(e["from"], e["to"], se3.transform_from_json(e["matrix"]),
                              e.get("role", SPANNING), e.get("label", ""))
        except (KeyError, TypeError) as exc:
            raise ParseError(f"malformed tree document: {exc!r}") from exc
        return tree

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "TransformTree":
        try:
            with open(path) as fh:
                obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc.msg}", offset=exc.pos) from exc
        return cls.from_json(obj)


def error_magnitude(e: RigidTransform) -> tuple[float, float]:
    return se3.error_magnitude(e)


# -- motion ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MotionTrack:
    """Timestamped rigid motion of one frame. Times in seconds, strictly increasing."""

    frame: str
    times: tuple
    transforms: tuple

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        transforms = tuple(self.transforms)
        if len(times) != len(transforms):
            raise ValueError("times and transforms differ in length")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("timestamps must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "transforms", transforms)

    def __len__(self):
        return len(self.times)

    def at(self, t: float, interpolate: bool = False) -> RigidTransform:
        """Sample the track at time ``t``.

        Piecewise constant (the latest sample at or before ``t``) by default;
        with ``interpolate`` the geodesic between neighbouring samples is used.
        Times outside the track clamp to the end samples.
        """
        i = bisect.bisect_right(self.times, t) - 1
        if i < 0:
            return self.transforms[0]
        if i >= len(self.times) - 1 or not interpolate:
            return self.transforms[i]
        t0, t1 = self.times[i], self.times[i + 1]
        a, b = self.transforms[i], self.transforms[i + 1]
        frac = (t - t0) / (t1 - t0)
        delta = se3.log_se3(compose(inverse(a), b))
        return compose(a, se3.exp_se3(frac * delta))

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_s"] + se3.MATRIX_COLUMNS)
            for t, tr in zip(self.times, self.transforms):
                w.writerow([repr(t)] + [repr(float(x)) for x in tr.matrix.reshape(-1)])

    @classmethod
    def load_csv(cls, path, frame: str) -> "MotionTrack":
        times, transforms = [], []
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        for lineno, row in enumerate(rows[1:], start=2):
            if not row:
                continue
            if len(row) != 17:
                raise ParseError(f"{path}:{lineno}: expected 17 columns, got {len(row)}")
            try:
                vals = [float(x) for x in row]
                transforms.append(RigidTransform.from_matrix(vals[1:]))
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
            times.append(vals[0])
        return cls(frame, times, transforms)


def conjugate_motion(track: MotionTrack, bridge: RigidTransform,
                     frame: str | None = None) -> MotionTrack:
    """Re-express a motion in another frame: ``bridge^-1 @ P(t) @ bridge``.

    With a bridge ``P_FK`` that maps K coordinates into F, a track
    recorded in F becomes the same physical motion in K.
    """
    inv = inverse(bridge)
    moved = tuple(compose(inv, compose(t, bridge)) for t in track.transforms)
    return MotionTrack(frame or track.frame, track.times, moved)


def loop_error_report(tree: TransformTree, cycle) -> dict:
    e = tree.consistency_error(cycle)
    theta, tnorm = error_magnitude(e)
    return {"cycle": list(cycle), "theta_deg": theta, "t_norm_mm": tnorm,
            "matrix": [float(x) for x in np.asarray(e.matrix).reshape(-1)]}
