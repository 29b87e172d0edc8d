"""Statistics of rigid-transform samples on SE(3).

Karcher (intrinsic) mean, tangent residuals, per-component descriptive
statistics, PCA confidence ellipsoids and Mahalanobis distances.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from . import se3
from .errors import (EmptyInputError, NoConvergenceError, ParseError, RankDeficientWarning,
                     SingularCovarianceError)
from .se3 import Mode, RigidTransform, compose, exp_se3, inverse, log_rotation, log_se3

CHI2_95_3 = float(chi2.ppf(0.95, 3))     # 7.8147...
R95_SCALE = math.sqrt(CHI2_95_3)          # 2.7955...

QUANTITIES = ("t_x", "t_y", "t_z", "t_norm", "r_x", "r_y", "r_z", "theta")


@dataclass(frozen=True, eq=False)
class TransformSample:
    splint_id: str
    repeat_id: str
    transform: RigidTransform


# -- sample files ----------------------------------------------------------------

SAMPLE_COLUMNS = ["splint_id", "repeat_id"] + se3.MATRIX_COLUMNS


def save_samples_csv(samples, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SAMPLE_COLUMNS)
        for s in samples:
            w.writerow([s.splint_id, s.repeat_id] + [repr(float(x)) for x in s.transform.matrix.reshape(-1)])


def load_samples_csv(path) -> list[TransformSample]:
    """Read ``splint_id, repeat_id, m00..m33`` rows; a header row is optional."""
    out = []
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    start = 1 if rows and rows[0][:1] == ["splint_id"] else 0
    for lineno, row in enumerate(rows[start:], start=start + 1):
        if not row:
            continue
        if len(row) != 18:
            raise ParseError(f"{path}:{lineno}: expected 18 columns, got {len(row)}")
        try:
            t = RigidTransform.from_matrix([float(x) for x in row[2:]])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
        out.append(TransformSample(row[0], row[1], t))
    return out


# -- Karcher mean ---------------------------------------------------------------

def tangent_residuals(samples, mean: RigidTransform, mode: Mode = "coupled") -> np.ndarray:
    """``(n, 6)`` residuals ``log(mean^-1 T_i)``; product mode splits the factors.

    Product mode: rotation part ``Log(R_mean^T R_i)``, translation ``t_i - t_mean``.
    """
    transforms = [_as_transform(s) for s in samples]
    if mode == "product":
        rt = mean.rotation.T
        return np.array([np.concatenate([log_rotation(rt @ t.rotation),
                                         t.translation - mean.translation])
                         for t in transforms]).reshape(-1, 6)
    inv = inverse(mean)
    return np.array([log_se3(compose(inv, t), mode) for t in transforms]).reshape(-1, 6)


def _as_transform(s):
    return s.transform if isinstance(s, TransformSample) else s


@dataclass
class KarcherResult:
    mean: RigidTransform
    iterations: int
    residual: float


def karcher_mean(samples, mode: Mode = "coupled", tol: float = 1e-10, max_iter: int = 100,
                 init: RigidTransform | None = None, full_output: bool = False):
    """Intrinsic mean by fixed-point iteration.

    ``mu <- mu exp(step * mean_i log(mu^-1 T_i))`` starting from the first
    sample (or ``init``). The fixed point is the group barycenter, where the
    mean tangent residual vanishes; that residual norm is the merit, and the
    step (1 by default) is halved while it fails to shrink. Stops when the
    residual norm is below ``tol``.

    In product mode the translation is the arithmetic mean of the translations
    and only the rotation is iterated.
    """
    transforms = [_as_transform(s) for s in samples]
    if not transforms:
        raise EmptyInputError("karcher_mean needs at least one sample")
    mu = init or transforms[0]
    if mode == "product":
        t_mean = np.mean([t.translation for t in transforms], axis=0)
        mu = RigidTransform(mu.rotation, t_mean)

    def update(m):
        d = tangent_residuals(transforms, m, mode).mean(axis=0)
        if mode == "product":
            d[3:] = 0.0
        return d, float(np.linalg.norm(d))

    delta, norm = update(mu)
    for it in range(max_iter):
        if norm < tol:
            out = KarcherResult(mu, it, norm)
            return out if full_output else mu
        step = 1.0
        while True:
            cand = _retract(mu, step * delta, mode)
            c_delta, c_norm = update(cand)
            if c_norm < norm or step < 1e-6:
                break
            step *= 0.5
        if c_norm >= norm:
            break
        mu, delta, norm = cand, c_delta, c_norm
    if norm < tol:
        out = KarcherResult(mu, max_iter, norm)
        return out if full_output else mu
    raise NoConvergenceError(f"Karcher mean did not converge in {max_iter} iterations "
                             f"(residual {norm:.3g})", last=mu, residual=norm)


def _retract(mu: RigidTransform, delta, mode):
    if mode == "product":
        return RigidTransform(mu.rotation @ se3.exp_rotation(delta[:3]), mu.translation)
    return compose(mu, exp_se3(delta, mode))


# -- descriptive statistics ----------------------------------------------------

def decompose(t: RigidTransform) -> np.ndarray:
    """``[t_x, t_y, t_z, t_norm, r_x, r_y, r_z, theta]`` (mm, degrees)."""
    r = np.degrees(log_rotation(t.rotation))
    return np.concatenate([t.translation, [np.linalg.norm(t.translation)],
                           r, [np.linalg.norm(r)]])


@dataclass
class ComponentStats:
    """Rows follow ``QUANTITIES``; columns karcher/mean/std/median/min/max."""

    karcher: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    median: np.ndarray
    min: np.ndarray
    max: np.ndarray
    n: int

    def rows(self):
        for i, q in enumerate(QUANTITIES):
            yield q, (self.karcher[i], self.mean[i], self.std[i], self.median[i],
                      self.min[i], self.max[i])

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["quantity", "karcher_mean", "mean", "std", "median", "min", "max", "unit"])
            for q, vals in self.rows():
                unit = "mm" if q.startswith("t_") else "deg"
                w.writerow([q] + [f"{v:.6f}" for v in vals] + [unit])

    def to_json(self) -> dict:
        return {q: dict(zip(("karcher_mean", "mean", "std", "median", "min", "max"),
                            map(float, vals))) for q, vals in self.rows()}


def component_stats(samples, karcher: RigidTransform, ddof: int = 1) -> ComponentStats:
    """Per-sample decomposition then mean/std/median/min/max per quantity.

    ``ddof=1`` (default) gives the sample std; pass ``ddof=0`` for the population std.
    Norm rows are norms of each sample, not norms of the means.
    """
    transforms = [_as_transform(s) for s in samples]
    if not transforms:
        raise EmptyInputError("component_stats needs at least one sample")
    table = np.array([decompose(t) for t in transforms])
    std = table.std(axis=0, ddof=ddof) if len(table) > ddof else np.zeros(table.shape[1])
    return ComponentStats(decompose(karcher), table.mean(0), std, np.median(table, axis=0),
                          table.min(0), table.max(0), len(table))


# -- PCA ellipsoid -------------------------------------------------------------

@dataclass
class PcaEllipsoid:
    space: str
    eigenvalues: np.ndarray      # descending, mm^2 or deg^2
    eigenvectors: np.ndarray     # columns
    center: np.ndarray

    @classmethod
    def from_eigen(cls, eigenvalues, eigenvectors=None, space: str = "translation",
                   center=None) -> "PcaEllipsoid":
        lam = np.asarray(eigenvalues, dtype=float)
        order = np.argsort(-lam, kind="stable")
        vec = np.eye(len(lam)) if eigenvectors is None else np.asarray(eigenvectors, dtype=float)
        return cls(space, lam[order], vec[:, order],
                   np.zeros(len(lam)) if center is None else np.asarray(center, dtype=float))

    @property
    def shares(self) -> np.ndarray:
        total = self.eigenvalues.sum()
        return self.eigenvalues / total if total > 0 else np.zeros_like(self.eigenvalues)

    @property
    def r95(self) -> np.ndarray:
        return np.sqrt(CHI2_95_3 * np.clip(self.eigenvalues, 0.0, None))

    @property
    def covariance(self) -> np.ndarray:
        v = self.eigenvectors
        return v @ np.diag(self.eigenvalues) @ v.T

    def surface_points(self, n_u: int = 24, n_v: int = 12) -> np.ndarray:
        """Points on the 95% ellipsoid surface, shape ``(n_v, n_u, 3)``."""
        u = np.linspace(0, 2 * np.pi, n_u)
        v = np.linspace(0, np.pi, n_v)
        unit = np.stack([np.outer(np.sin(v), np.cos(u)), np.outer(np.sin(v), np.sin(u)),
                         np.outer(np.cos(v), np.ones_like(u))], axis=-1)
        return self.center + (unit * self.r95) @ self.eigenvectors.T

    def rows(self):
        for i in range(len(self.eigenvalues)):
            yield (self.space, f"PC{i + 1}", self.eigenvalues[i], self.shares[i], self.r95[i],
                   self.eigenvectors[:, i])


def pca_ellipsoid(residuals, space: str = "translation", ddof: int = 1) -> PcaEllipsoid:
    """Eigen-decomposition of the covariance of centered 3-vectors.

    Eigenvalues are sorted descending; each eigenvector's largest-magnitude
    component is made positive. Rank deficiency is reported as a warning.
    """
    x = np.asarray(residuals, dtype=float).reshape(-1, 3)
    if len(x) < 3:
        raise EmptyInputError("pca_ellipsoid needs at least three samples")
    center = x.mean(axis=0)
    cov = np.cov(x - center, rowvar=False, ddof=ddof)
    lam, vec = np.linalg.eigh(cov)
    order = np.argsort(-lam, kind="stable")
    lam, vec = lam[order], vec[:, order]
    lam = np.where(lam < 1e-15 * max(lam[0], 1e-300), 0.0, lam)
    for k in range(3):
        j = int(np.argmax(np.abs(vec[:, k])))
        if vec[j, k] < 0:
            vec[:, k] = -vec[:, k]
    if np.count_nonzero(lam) < 3:
        warnings.warn(f"{space} residuals are rank deficient (rank {np.count_nonzero(lam)})",
                      RankDeficientWarning, stacklevel=2)
    return PcaEllipsoid(space, lam, vec, center)


def save_pca_csv(ellipsoids, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["space", "pc", "variance", "share_percent", "r95", "v_x", "v_y", "v_z"])
        for e in ellipsoids:
            for space, pc, lam, share, r95, vec in e.rows():
                w.writerow([space, pc, f"{lam:.6f}", f"{100 * share:.4f}", f"{r95:.6f}"]
                           + [f"{c:.6f}" for c in vec])


# -- Mahalanobis -----------------------------------------------------------------

def mahalanobis(x, mean, cov) -> np.ndarray | float:
    """Mahalanobis distance of one point or each row of ``x``.

    A covariance that is not positive definite is regularized by
    ``1e-12 * trace`` on the diagonal before giving up.
    """
    cov = np.asarray(cov, dtype=float)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        eps = 1e-12 * float(np.trace(cov))
        try:
            chol = np.linalg.cholesky(cov + eps * np.eye(len(cov)))
        except np.linalg.LinAlgError:
            raise SingularCovarianceError("covariance is singular after regularization") from None
    d = np.asarray(x, dtype=float) - np.asarray(mean, dtype=float)
    z = np.linalg.solve(chol, d.T)
    out = np.sqrt((z * z).sum(axis=0))
    return float(out) if np.ndim(out) == 0 else out


# -- histogram -------------------------------------------------------------------

@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    mean: float
    median: float

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_lo", "bin_hi", "count"])
            for lo, hi, c in zip(self.edges[:-1], self.edges[1:], self.counts):
                w.writerow([f"{lo:.6f}", f"{hi:.6f}", int(c)])
            w.writerow([])
            w.writerow(["mean", f"{self.mean:.6f}"])
            w.writerow(["median", f"{self.median:.6f}"])


def histogram(values, bin_count: int = 10) -> Histogram:
    """Uniform bins over ``[min, max]`` with mean/median overlays.

    A single distinct value yields one bin holding every sample.
    """
    v = np.asarray(values, dtype=float).reshape(-1)
    if len(v) == 0:
        raise EmptyInputError("histogram of no values")
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        edges = np.array([lo, hi])
        counts = np.array([len(v)])
    else:
        counts, edges = np.histogram(v, bins=bin_count, range=(lo, hi))
    return Histogram(edges, counts, float(v.mean()), float(np.median(v)))
