"""Rigid transformations on SE(3).

Conventions
-----------
* A transform ``T = (R, t)`` acts on points as ``p -> R @ p + t``.
* ``compose(a, b)`` is the matrix product ``a @ b``: ``b`` is applied first.
* Rotation vectors are in radians; :func:`np.degrees` gives the reporting view.
* Tangent vectors are 6-arrays ``[rot (rad), trans (mm)]``.

Two tangent parametrizations are supported through ``mode``:

``"coupled"``
    the true group logarithm, ``trans = V(rot)^-1 t`` with ``V`` the left
    Jacobian of SO(3);
``"product"``
    SO(3) x R^3, ``trans = t`` unchanged.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import ParseError, ThetaNearPiError

Mode = Literal["coupled", "product"]
MODES = ("coupled", "product")

SMALL_ANGLE = 1e-6
SERIES_ANGLE = 1e-2      # Jacobian coefficients cancel badly below this
NEAR_PI = 1e-3          # switch to the symmetric-part axis extraction
COUPLED_PI_MARGIN = 1e-6
ORTHO_DRIFT = 1e-9
READ_TOLERANCE = 1e-4


def skew(v):
    """Hat operator: 3-vector -> 3x3 skew-symmetric matrix."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(m):
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def rotation_deviation(m) -> float:
    """Largest entry of ``|m^T m - I|`` together with ``|det m - 1|``."""
    m = np.asarray(m, dtype=float)
    return max(float(np.abs(m.T @ m - np.eye(3)).max()), abs(float(np.linalg.det(m)) - 1.0))


def project_to_rotation(m) -> np.ndarray:
    """Nearest rotation matrix in the Frobenius sense (SVD, det forced to +1)."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=float))
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def is_rotation(m, tol: float = 1e-9) -> bool:
    m = np.asarray(m, dtype=float)
    return m.shape == (3, 3) and rotation_deviation(m) <= tol


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Immutable rotation + translation pair (translation in mm)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m, tol: float = READ_TOLERANCE) -> "RigidTransform":
        """Build from a 4x4 (or 16-element row-major) homogeneous matrix.

        The rotation block is always projected onto SO(3); a warning is
        emitted when it deviates from orthonormality by more than ``tol``.
        A block with non-positive determinant is rejected.
        """
        m = np.asarray(m, dtype=float).reshape(4, 4)
        r = m[:3, :3]
        if not np.all(np.isfinite(m)):
            raise ValueError("matrix contains non-finite entries")
        if np.linalg.det(r) <= 0:
            raise ValueError("rotation block has non-positive determinant")
        dev = rotation_deviation(r)
        if dev > tol:
            warnings.warn(f"rotation block deviates from SO(3) by {dev:.3g}; projecting",
                          stacklevel=2)
        if dev > 0:
            r = project_to_rotation(r)
        return cls(r, m[:3, 3])

    @classmethod
    def from_translation(cls, t) -> "RigidTransform":
        return cls(np.eye(3), t)

    @classmethod
    def from_rotvec(cls, rotvec, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        return cls(exp_rotation(rotvec), translation)

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "RigidTransform":
        return inverse(self)

    def apply(self, points) -> np.ndarray:
        return apply(self, points)

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return compose(self, other)

    def allclose(self, other: "RigidTransform", rtol: float = 1e-9, ttol: float = 1e-9) -> bool:
        return (np.allclose(self.rotation, other.rotation, rtol=0, atol=rtol)
                and np.allclose(self.translation, other.translation, rtol=0, atol=ttol))

    def __repr__(self):
        rv = np.degrees(log_rotation(self.rotation))
        return (f"RigidTransform(rotvec_deg={np.array2string(rv, precision=4)}, "
                f"t_mm={np.array2string(self.translation, precision=4)})")


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    r = a.rotation @ b.rotation
    if np.abs(r.T @ r - np.eye(3)).max() > ORTHO_DRIFT:
        r = project_to_rotation(r)
    return RigidTransform(r, a.rotation @ b.translation + a.translation)


def inverse(t: RigidTransform) -> RigidTransform:
    rt = t.rotation.T
    return RigidTransform(rt, -rt @ t.translation)


def apply(t: RigidTransform, points) -> np.ndarray:
    """Apply to a single 3-point or an ``(n, 3)`` array of points."""
    p = np.asarray(points, dtype=float)
    return p @ t.rotation.T + t.translation


# -- SO(3) -------------------------------------------------------------------

def exp_rotation(v) -> np.ndarray:
    """Rodrigues formula, Taylor-expanded below ``SMALL_ANGLE``."""
    v = np.asarray(v, dtype=float).reshape(3)
    theta = float(np.linalg.norm(v))
    k = skew(v)
    if theta < SMALL_ANGLE:
        th2 = theta * theta
        a = 1.0 - th2 / 6.0
        b = 0.5 - th2 / 24.0
    else:
        a = math.sin(theta) / theta
        b = (1.0 - math.cos(theta)) / (theta * theta)
    return np.eye(3) + a * k + b * (k @ k)


def _axis_tiebreak(u: np.ndarray) -> np.ndarray:
    for c in u:
        if abs(c) > 1e-12:
            return u if c > 0 else -u
    return u


def log_rotation(r) -> np.ndarray:
    """Rotation vector ``theta * u`` with ``theta`` in ``[0, pi]``.

    At exactly ``theta = pi`` the axis sign is ambiguous; the axis whose first
    nonzero component is positive is returned.
    """
    r = np.asarray(r, dtype=float)
    w = 0.5 * vee(r - r.T)                  # sin(theta) * u
    s = float(np.linalg.norm(w))
    c = 0.5 * (np.trace(r) - 1.0)           # cos(theta)
    theta = math.atan2(s, c)
    if theta < SMALL_ANGLE:
        return w * (1.0 + theta * theta / 6.0)
    if math.pi - theta > NEAR_PI:
        return w * (theta / s)
    # near pi: (R + R^T)/2 = cos(theta) I + (1 - cos(theta)) u u^T
    sym = 0.5 * (r + r.T)
    uu = (sym - c * np.eye(3)) / (1.0 - c)
    i = int(np.argmax(np.diag(uu)))
    u = uu[:, i] / math.sqrt(max(uu[i, i], 1e-300))
    u /= np.linalg.norm(u)
    if s > 1e-12:
        if np.dot(u, w) < 0:
            u = -u
    else:
        u = _axis_tiebreak(u)
    return theta * u


def rotation_angle(r) -> float:
    """Geodesic angle of a rotation, radians."""
    return float(np.linalg.norm(log_rotation(r)))


# -- SE(3) -------------------------------------------------------------------

def _jacobian_coeffs(theta: float):
    th2 = theta * theta
    if theta < SERIES_ANGLE:
        return (0.5 - th2 / 24.0 + th2 * th2 / 720.0,
                1.0 / 6.0 - th2 / 120.0 + th2 * th2 / 5040.0)
    return (2.0 * math.sin(0.5 * theta) ** 2 / th2,
            (theta - math.sin(theta)) / (th2 * theta))


def left_jacobian(rot) -> np.ndarray:
    rot = np.asarray(rot, dtype=float)
    k = skew(rot)
    b, c = _jacobian_coeffs(float(np.linalg.norm(rot)))
    return np.eye(3) + b * k + c * (k @ k)


def left_jacobian_inverse(rot) -> np.ndarray:
    rot = np.asarray(rot, dtype=float)
    theta = float(np.linalg.norm(rot))
    k = skew(rot)
    th2 = theta * theta
    if theta < SERIES_ANGLE:
        d = 1.0 / 12.0 + th2 / 720.0 + th2 * th2 / 30240.0
    else:
        half = 0.5 * theta
        d = (1.0 - half / math.tan(half)) / th2
    return np.eye(3) - 0.5 * k + d * (k @ k)


def log_se3(t: RigidTransform, mode: Mode = "coupled") -> np.ndarray:
    rot = log_rotation(t.rotation)
    if mode == "product":
        return np.concatenate([rot, t.translation])
    if mode != "coupled":
        raise ValueError(f"unknown mode {mode!r}")
    if np.linalg.norm(rot) > math.pi - COUPLED_PI_MARGIN:
        raise ThetaNearPiError("rotation angle too close to pi for the coupled log; "
                               "use mode='product'")
    return np.concatenate([rot, left_jacobian_inverse(rot) @ t.translation])


def exp_se3(v, mode: Mode = "coupled") -> RigidTransform:
    v = np.asarray(v, dtype=float).reshape(6)
    rot, trans = v[:3], v[3:]
    r = exp_rotation(rot)
    if mode == "product":
        return RigidTransform(r, trans)
    if mode != "coupled":
        raise ValueError(f"unknown mode {mode!r}")
    return RigidTransform(r, left_jacobian(rot) @ trans)


def error_magnitude(e: RigidTransform) -> tuple[float, float]:
    """``(theta_deg, t_norm_mm)`` of a transform."""
    return math.degrees(rotation_angle(e.rotation)), float(np.linalg.norm(e.translation))


def rot_x(deg: float) -> np.ndarray:
    return exp_rotation([math.radians(deg), 0, 0])


def rot_y(deg: float) -> np.ndarray:
    return exp_rotation([0, math.radians(deg), 0])


def rot_z(deg: float) -> np.ndarray:
    return exp_rotation([0, 0, math.radians(deg)])


def random_transform(rng: np.random.Generator, max_angle: float = math.pi,
                     max_translation: float = 100.0) -> RigidTransform:
    """Uniform axis, uniform angle in ``[0, max_angle)``, translation in a cube."""
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, max_angle)
    t = rng.uniform(-max_translation, max_translation, size=3)
    return RigidTransform(exp_rotation(axis * angle), t)


# -- serialization -------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def transform_to_json(t: RigidTransform) -> dict:
    return {"matrix": [float(x) for x in t.matrix.reshape(-1)]}


def transform_from_json(obj) -> RigidTransform:
    try:
        values = obj["matrix"] if isinstance(obj, dict) else obj
        values = [float(x) for x in values]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad transform object: {exc}") from exc
    if len(values) != 16:
        raise ParseError(f"expected 16 matrix entries, got {len(values)}")
    return RigidTransform.from_matrix(values)


def save_transform(t: RigidTransform, path) -> None:
    path = str(path)
    if path.endswith(".csv"):
        save_transforms_csv([t], path)
    else:
        with open(path, "w") as fh:
            json.dump(transform_to_json(t), fh, indent=2)
            fh.write("\n")


def load_transform(path) -> RigidTransform:
    path = str(path)
    if path.endswith(".csv"):
        ts = load_transforms_csv(path)
        if len(ts) != 1:
            raise ParseError(f"{path}: expected one transform row, found {len(ts)}")
        return ts[0]
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", offset=exc.pos) from exc
    return transform_from_json(obj)


MATRIX_COLUMNS = [f"m{i}{j}" for i in range(4) for j in range(4)]


def save_transforms_csv(transforms, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MATRIX_COLUMNS)
        for t in transforms:
            w.writerow([_fmt(x) for x in t.matrix.reshape(-1)])


def load_transforms_csv(path) -> list[RigidTransform]:
    out = []
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return out
    start = 1 if rows[0] and not _is_number(rows[0][0]) else 0
    for lineno, row in enumerate(rows[start:], start=start + 1):
        if not row:
            continue
        if len(row) != 16:
            raise ParseError(f"{path}:{lineno}: expected 16 columns, got {len(row)}")
        try:
            out.append(RigidTransform.from_matrix([float(x) for x in row]))
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
    return out


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True
