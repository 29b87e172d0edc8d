"""Command-line frontend.

Subcommands::

    register     ICP of a source mesh onto a target mesh
    tree-check   loop consistency of a transform tree
    mean         Karcher mean of a samples CSV
    stats        descriptive statistics, PCA ellipsoids, Mahalanobis, histograms
    distmap      per-vertex distance map between two meshes
    simulate     joint-space simulation from a scenario JSON
    gen-fixture  synthetic fixture bundle with ground truth
    report       markdown/JSON summary of a run-all output directory
    run-all      full pipeline driven by one config file

Exit codes: 0 success, 1 I/O or configuration, 2 numerical or convergence,
3 data-contract violations.  ``JAWKIT_LOG`` sets the log level.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import plots, stats, synth, tmj
from .distance import distance_map, map_stats, weighted_aggregate
from .errors import ConfigError, JawkitError, NoConvergenceError
from .mesh import load_mesh
from .registration import (IcpParams, _subsample, default_splint_params, icp_schedule,
                           principal_axes_prealign, splint_positioning_error)
from .se3 import MODES, RigidTransform, compose, error_magnitude, inverse, load_transform, save_transform
from .tree import TransformTree, loop_error_report

log = logging.getLogger("jawkit")


# -- configuration ---------------------------------------------------------------

@dataclass
class PipelineConfig:
    fixture: str | None = None
    out: str = "jawkit_out"
    icp: IcpParams = field(default_factory=default_splint_params)
    max_source_points: int | None = 4000
    clamp_mm: float | None = 2.0
    roi: tuple | None = (0.0, 10.0)
    mode: str = "coupled"
    std_ddof: int = 1
    pca_ddof: int = 1
    dist_scale_mm: tuple = (0.0, 10.0)
    diff_limit_mm: float = 2.0
    histogram_bins: int = 10
    plots: bool = True
    heatmaps: bool = True
    jobs: int = 1
    seed: int = 0
    trace: bool = False
    tree_tolerance: dict | None = None      # {"theta_deg": x, "t_mm": y}; None = report only

    def validate(self) -> "PipelineConfig":
        if self.fixture is not None and not os.path.exists(self.fixture):
            raise ConfigError(f"fixture manifest not found: {self.fixture}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.clamp_mm is not None and not self.clamp_mm > 0:
            raise ConfigError("clamp_mm must be positive (or null to disable)")
        for name in ("roi", "dist_scale_mm"):
            v = getattr(self, name)
            if v is not None and (len(v) != 2 or not v[0] < v[1]):
                raise ConfigError(f"{name} must be [lo, hi] with lo < hi")
        if self.std_ddof not in (0, 1) or self.pca_ddof not in (0, 1):
            raise ConfigError("std_ddof and pca_ddof must be 0 or 1")
        if not self.diff_limit_mm > 0 or self.histogram_bins < 1 or self.jobs < 1:
            raise ConfigError("diff_limit_mm > 0, histogram_bins >= 1 and jobs >= 1 required")
        if self.max_source_points is not None and self.max_source_points < 3:
            raise ConfigError("max_source_points must be >= 3")
        return self


def _icp_from(obj: dict, base: IcpParams) -> IcpParams:
    known = {f.name for f in fields(IcpParams)}
    bad = set(obj) - known
    if bad:
        raise ConfigError(f"unknown icp keys: {sorted(bad)}")
    obj = dict(obj)
    if "coarse_radii_mm" in obj:
        obj["coarse_radii_mm"] = tuple(obj["coarse_radii_mm"])
    try:
        return replace(base, **obj)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid icp parameters: {exc}") from exc


def load_config(path: str | None) -> PipelineConfig:
    """Read a JSON config; relative paths resolve against the config's directory."""
    cfg = PipelineConfig()
    if path is None:
        return cfg
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at byte offset {exc.pos}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    base = os.path.dirname(os.path.abspath(path))
    known = {f.name for f in fields(PipelineConfig)}
    bad = set(doc) - known
    if bad:
        raise ConfigError(f"{path}: unknown config keys {sorted(bad)}")
    for key, value in doc.items():
        if key == "icp":
            cfg.icp = _icp_from(value, cfg.icp)
        elif key in ("fixture", "out") and value is not None:
            setattr(cfg, key, os.path.join(base, value))
        elif key in ("roi", "dist_scale_mm") and value is not None:
            setattr(cfg, key, tuple(float(x) for x in value))
        else:
            setattr(cfg, key, value)
    return cfg


OFF = "off"          # explicit "disabled" on the command line, distinct from "not given"


def _parse_roi(text: str):
    if text.lower() in ("none", "off"):
        return OFF
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"--roi expects LO:HI, got {text!r}") from None
    return (lo, hi)


def _parse_clamp(text: str):
    if text.lower() in ("none", "off"):
        return OFF
    return float(text)


def _flag(value):
    return None if value == OFF else value


def _resolve_config(args) -> PipelineConfig:
    cfg = load_config(args.config)
    for name in ("out", "jobs", "seed", "mode"):
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    if args.clamp is not None:
        cfg.clamp_mm = _flag(args.clamp)
    if args.roi is not None:
        cfg.roi = _flag(args.roi)
    if args.trace:
        cfg.trace = True
    if getattr(args, "no_plots", False):
        cfg.plots = False
        cfg.heatmaps = False
    return cfg.validate()


def _require(path, what="input"):
    if path is None or not os.path.exists(path):
        raise ConfigError(f"{what} not found: {path}")
    return path


# -- deterministic writers ----------------------------------------------------------

def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return None if math.isnan(f) else f
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([f"{x:.6f}" if isinstance(x, float) else x for x in r])


def _matrix(t: RigidTransform) -> list:
    return [float(x) for x in t.matrix.reshape(-1)]


# -- commands --------------------------------------------------------------------------

def cmd_register(args, cfg: PipelineConfig) -> int:
    src_path = _require(args.source, "source mesh")
    tgt_path = _require(args.target, "target mesh")
    source = load_mesh(src_path)
    target = load_mesh(tgt_path)
    idx = _subsample(source.n_vertices, cfg.max_source_points)
    pts, nrm = source.vertices[idx], source.vertex_normals[idx]
    if args.init is not None:
        init = load_transform(_require(args.init, "init transform"))
    elif args.prealign:
        init = principal_axes_prealign(source.vertices, target.vertices)
    else:
        init = RigidTransform.identity()
    result = icp_schedule(pts, target, init, cfg.icp, nrm)
    os.makedirs(cfg.out, exist_ok=True)
    name = args.name
    save_transform(result.transform, os.path.join(cfg.out, f"{name}_transform.json"))
    doc = result.to_json(trace=cfg.trace)
    doc.update({"source": os.path.basename(src_path), "target": os.path.basename(tgt_path)})
    write_json(os.path.join(cfg.out, f"{name}_icp.json"), doc)
    theta, tnorm = error_magnitude(result.transform)
    print(f"{name}: rms {result.rms_mm:.6f} mm, {result.iterations_used} iterations, "
          f"theta {theta:.6f} deg, |t| {tnorm:.6f} mm")
    if not result.converged:
        raise NoConvergenceError(f"ICP did not converge within {cfg.icp.max_iterations} iterations",
                                 last=result.transform, residual=result.rms_mm)
    return 0


def _cycles_from(args, fixture_cycles=None):
    if args.cycle:
        return [c.split(",") for c in args.cycle]
    if fixture_cycles:
        return fixture_cycles
    raise ConfigError("no cycle given (use --cycle A,B,C)")


def cmd_tree_check(args, cfg: PipelineConfig) -> int:
    tree = TransformTree.load(_require(args.tree, "tree file"))
    cycles = _cycles_from(args)
    reports = [loop_error_report(tree, c) for c in cycles]
    failed = False
    tol = cfg.tree_tolerance or {}
    for r in reports:
        ok = (r["theta_deg"] <= tol.get("theta_deg", math.inf)
              and r["t_norm_mm"] <= tol.get("t_mm", math.inf))
        r["within_tolerance"] = ok if tol else None
        failed |= not ok
        print(f"cycle {'->'.join(r['cycle'])}: theta {r['theta_deg']:.6g} deg, "
              f"t_norm {r['t_norm_mm']:.6g} mm")
    os.makedirs(cfg.out, exist_ok=True)
    write_json(os.path.join(cfg.out, "tree_check.json"),
               {"tree": os.path.basename(args.tree), "tolerance": cfg.tree_tolerance,
                "cycles": reports})
    return 2 if failed else 0


def _karcher(samples, cfg):
    return stats.karcher_mean(samples, mode=cfg.mode, full_output=True)


def cmd_mean(args, cfg: PipelineConfig) -> int:
    samples = stats.load_samples_csv(_require(args.samples, "samples CSV"))
    res = _karcher(samples, cfg)
    os.makedirs(cfg.out, exist_ok=True)
    _write_mean(cfg, samples, res)
    theta, tnorm = error_magnitude(res.mean)
    print(f"Karcher mean ({cfg.mode}) of {len(samples)} samples: theta {theta:.4f} deg, "
          f"|t| {tnorm:.4f} mm, {res.iterations} iterations")
    return 0


def _write_mean(cfg, samples, res) -> None:
    write_json(os.path.join(cfg.out, "karcher_mean.json"),
               {"matrix": _matrix(res.mean), "mode": cfg.mode, "n": len(samples),
                "iterations": res.iterations, "residual": res.residual,
                "quantities": dict(zip(stats.QUANTITIES, stats.decompose(res.mean)))})


def run_stats(samples, cfg: PipelineConfig) -> dict:
    """Component table, PCA ellipsoids, Mahalanobis distances, histograms and plots."""
    if not samples:
        from .errors import EmptyInputError
        raise EmptyInputError("no samples")
    os.makedirs(cfg.out, exist_ok=True)
    res = _karcher(samples, cfg)
    _write_mean(cfg, samples, res)
    comp = stats.component_stats(samples, res.mean, ddof=cfg.std_ddof)
    comp.save_csv(os.path.join(cfg.out, "component_stats.csv"))
    bundle = {"karcher_mean": _matrix(res.mean), "mode": cfg.mode, "n": len(samples),
              "component_stats": comp.to_json(), "samples": [], "pca": {}}
    resid = stats.tangent_residuals(samples, res.mean, cfg.mode)
    spaces = {"translation": (resid[:, 3:], "mm"), "rotation": (np.degrees(resid[:, :3]), "deg")}
    ellipsoids, mahal = [], {}
    if len(samples) >= 3:
        for space, (x, unit) in spaces.items():
            e = stats.pca_ellipsoid(x, space, ddof=cfg.pca_ddof)
            ellipsoids.append(e)
            try:
                mahal[space] = np.atleast_1d(stats.mahalanobis(x, e.center, e.covariance))
            except JawkitError as exc:
                log.warning("Mahalanobis distances unavailable for %s: %s", space, exc)
                mahal[space] = np.full(len(x), np.nan)
            bundle["pca"][space] = {"eigenvalues": e.eigenvalues, "eigenvectors": e.eigenvectors,
                                    "shares": e.shares, "r95": e.r95, "center": e.center}
        stats.save_pca_csv(ellipsoids, os.path.join(cfg.out, "pca_ellipsoids.csv"))
    else:
        log.warning("fewer than three samples: PCA and Mahalanobis skipped")
    rows = []
    for i, s in enumerate(samples):
        d = stats.decompose(s.transform)
        rows.append([s.splint_id, s.repeat_id, *map(float, d),
                     float(mahal["translation"][i]) if mahal else float("nan"),
                     float(mahal["rotation"][i]) if mahal else float("nan")])
        bundle["samples"].append({"splint_id": s.splint_id, "repeat_id": s.repeat_id,
                                  "residual": resid[i], "quantities": d})
    _write_rows(os.path.join(cfg.out, "samples_decomposed.csv"),
                ["splint_id", "repeat_id", *stats.QUANTITIES, "mahalanobis_translation",
                 "mahalanobis_rotation"], rows)
    hists = {}
    for q, unit in (("theta", "deg"), ("t_norm", "mm")):
        col = np.array([stats.decompose(s.transform)[stats.QUANTITIES.index(q)] for s in samples])
        h = stats.histogram(col, cfg.histogram_bins)
        h.save_csv(os.path.join(cfg.out, f"histogram_{q}.csv"))
        hists[q] = (h, unit)
        bundle[f"histogram_{q}"] = {"edges": h.edges, "counts": h.counts, "mean": h.mean,
                                    "median": h.median}
    write_json(os.path.join(cfg.out, "stats_bundle.json"), bundle)
    if cfg.plots:
        for q, (h, unit) in hists.items():
            plots.histogram_plot(h, os.path.join(cfg.out, f"histogram_{q}.png"),
                                 xlabel=f"{q} [{unit}]")
        for e in ellipsoids:
            x, unit = spaces[e.space]
            plots.ellipsoid_plot(e, x, mahal[e.space], os.path.join(cfg.out, f"ellipsoid_{e.space}.png"),
                                 unit=f"[{unit}]")
    return bundle


def cmd_stats(args, cfg: PipelineConfig) -> int:
    samples = stats.load_samples_csv(_require(args.samples, "samples CSV"))
    run_stats(samples, cfg)
    print(f"statistics of {len(samples)} samples written to {cfg.out}")
    return 0


def cmd_distmap(args, cfg: PipelineConfig) -> int:
    source = load_mesh(_require(args.source, "source mesh"))
    target = load_mesh(_require(args.target, "target mesh"))
    roi = _flag(args.roi)          # only an explicit --roi applies to surface maps
    m = distance_map(source, target, signed=not args.unsigned, clamp_mm=cfg.clamp_mm, roi=roi)
    os.makedirs(cfg.out, exist_ok=True)
    m.save_csv(os.path.join(cfg.out, "distmap.csv"))
    m.save_ply(os.path.join(cfg.out, "distmap.ply"), source)
    doc = {"source": m.source_mesh_id, "target": m.target_mesh_id, "signed": m.signed,
           "clamp_mm": m.clamp, "roi": m.roi, "counts": m.counts}
    if m.n_valid:
        n, mu, sigma = map_stats(m)
        doc.update({"n_valid": n, "mu_mm": mu, "sigma_mm": sigma})
        print(f"distance map: {n} valid vertices, mu {mu:.6f} mm, sigma {sigma:.6f} mm")
    else:
        print("distance map: no valid vertices")
    write_json(os.path.join(cfg.out, "distmap_stats.json"), doc)
    return 0


def run_simulation(joints, cases, cfg: PipelineConfig, roi, diff_limit) -> tmj.JointSummary:
    reports = tmj.simulate(joints, cases, roi=roi, jobs=cfg.jobs)
    summary = tmj.joint_summary(reports)
    os.makedirs(os.path.join(cfg.out, "maps"), exist_ok=True)
    fossa = {j.side: j.fossa for j in joints}
    for r in reports:
        r.save_ply(os.path.join(cfg.out, "maps", f"{r.key}.ply"), fossa[r.side])
    summary.save_csv(os.path.join(cfg.out, "joint_summary.csv"))
    write_json(os.path.join(cfg.out, "joint_summary.json"),
               {"reports": summary.rows, "roi": roi,
                "pooled": {s: {"n": n, "mu_mm": mu, "sigma_mm": sd}
                           for s, (n, mu, sd) in summary.pooled.items()}})
    if cfg.plots:
        plots.joint_errorbars(summary, os.path.join(cfg.out, "joint_errorbars.png"))
    if cfg.heatmaps:
        os.makedirs(os.path.join(cfg.out, "heatmaps"), exist_ok=True)
        for r in reports:
            plots.joint_heatmaps(fossa[r.side], r.planned_map, r.measured_map, r.diff_map,
                                 os.path.join(cfg.out, "heatmaps", f"{r.key}.png"),
                                 cfg.dist_scale_mm, diff_limit, title=r.key)
    return summary


def cmd_simulate(args, cfg: PipelineConfig) -> int:
    sc = tmj.load_scenario(_require(args.scenario, "scenario file"))
    roi = sc.roi if args.roi is None else cfg.roi
    summary = run_simulation(sc.joints, sc.cases, cfg, roi, sc.diff_limit_mm)
    for side, (n, mu, sd) in summary.pooled.items():
        print(f"{side}: {len([r for r in summary.rows if r['side'] == side])} reports, "
              f"pooled diff mu {mu:.6f} mm, sigma {sd:.6f} mm")
    return 0


def cmd_gen_fixture(args, cfg: PipelineConfig) -> int:
    spec = synth.PhantomSpec(seed=cfg.seed)
    if args.edge_length is not None:
        spec = synth.with_edge_length(spec, args.edge_length)
    model = synth.dental_error_model(cfg.mode) if not args.zero_noise else synth.NoiseModel(mode=cfg.mode)
    sc = synth.build_scenario(spec, model, splints=args.splints, repeats=args.repeats,
                              jitter_mm=args.jitter, seed=cfg.seed, with_scans=not args.no_scans)
    os.makedirs(cfg.out, exist_ok=True)
    path = synth.write_fixture(sc, cfg.out, seed=cfg.seed, jitter_mm=args.jitter)
    config = {"fixture": "manifest.json", "out": "run", "mode": cfg.mode, "seed": cfg.seed}
    write_json(os.path.join(cfg.out, "config.json"), config)
    stats.save_samples_csv([stats.TransformSample(c.splint_id, c.repeat_id, c.error) for c in sc.cases],
                           os.path.join(cfg.out, "ground_truth_samples.csv"))
    print(f"fixture with {len(sc)} cases written to {path}")
    return 0


def _measure_case(case, maxilla, mandible, cfg):
    scan = case.load_scan()
    planned_mesh = mandible.transformed(case.planned, name=f"planned_{case.splint_id}")
    m = splint_positioning_error(planned_mesh, scan, maxilla, params=cfg.icp,
                                 max_source_points=cfg.max_source_points, full_output=True)
    aligned = scan.transformed(m.scan_to_reference, name=scan.mesh_id + "@ref")
    surf_all = distance_map(planned_mesh, aligned, signed=True)
    surf = distance_map(planned_mesh, aligned, signed=True, clamp_mm=cfg.clamp_mm)
    return m, map_stats(surf_all), (map_stats(surf) if surf.n_valid else (0, float("nan"), float("nan")))


def cmd_run_all(args, cfg: PipelineConfig) -> int:
    fx = synth.load_fixture(_require(cfg.fixture, "fixture manifest"))
    os.makedirs(cfg.out, exist_ok=True)
    maxilla, mandible = fx.mesh("maxilla_arch"), fx.mesh("mandible_arch")
    cases = [c for c in fx.cases if c.scan_path is not None]
    if not cases:
        raise ConfigError("fixture has no scans to register")
    for c in cases:
        _require(c.scan_path, "scan")

    def work(c):
        return _measure_case(c, maxilla, mandible, cfg)

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(work, cases))
    else:
        results = [work(c) for c in cases]

    samples, reg_rows, surf_rows, rec_rows = [], [], [], []
    reg_doc = []
    for c, (m, (n_a, mu_a, sd_a), (n_c, mu_c, sd_c)) in zip(cases, results):
        samples.append(stats.TransformSample(c.splint_id, c.repeat_id, m.error))
        theta, tnorm = error_magnitude(m.error)
        reg_rows.append([c.splint_id, c.repeat_id, m.stage1.rms_mm, m.stage1.iterations_used,
                         m.stage2.rms_mm, m.stage2.iterations_used, theta, tnorm])
        entry = {"splint_id": c.splint_id, "repeat_id": c.repeat_id,
                 "stage1": m.stage1.to_json(trace=cfg.trace), "stage2": m.stage2.to_json(trace=cfg.trace),
                 "scan_to_reference": _matrix(m.scan_to_reference)}
        reg_doc.append(entry)
        surf_rows.append([c.splint_id, c.repeat_id, n_c, mu_c, sd_c, n_a, mu_a, sd_a])
        if "error" in c.truth:
            dt, dtn = error_magnitude(compose(m.error, inverse(c.truth["error"])))
            rec_rows.append([c.splint_id, c.repeat_id, dt, dtn])
    stats.save_samples_csv(samples, os.path.join(cfg.out, "samples.csv"))
    _write_rows(os.path.join(cfg.out, "registration.csv"),
                ["splint_id", "repeat_id", "stage1_rms_mm", "stage1_iterations", "stage2_rms_mm",
                 "stage2_iterations", "error_theta_deg", "error_t_norm_mm"], reg_rows)
    write_json(os.path.join(cfg.out, "registration.json"), {"cases": reg_doc})
    _write_rows(os.path.join(cfg.out, "surface_distances.csv"),
                ["splint_id", "repeat_id", "n_clamped", "mu_clamped_mm", "sigma_clamped_mm",
                 "n_all", "mu_all_mm", "sigma_all_mm"], surf_rows)
    pooled = {}
    for label, sl in (("clamped", slice(2, 5)), ("unclamped", slice(5, 8))):
        trip = [r[sl] for r in surf_rows if r[sl][0] > 0]
        if trip:
            mu, sd = weighted_aggregate(trip)
            pooled[label] = {"n": int(sum(t[0] for t in trip)), "mu_mm": mu, "sigma_mm": sd,
                             "samples": len(trip)}
    write_json(os.path.join(cfg.out, "surface_pooled.json"),
               {"clamp_mm": cfg.clamp_mm, "pooled": pooled})
    if cfg.plots and pooled.get("clamped"):
        mus = [r[3] for r in surf_rows if r[2] > 0]
        plots.histogram_plot(stats.histogram(mus, cfg.histogram_bins),
                             os.path.join(cfg.out, "surface_mean_histogram.png"),
                             xlabel="mean signed distance [mm]")
        rows = [{"side": "surface", "splint_id": r[0], "repeat_id": r[1], "n": r[2],
                 "mu_mm": r[3], "sigma_mm": r[4]} for r in surf_rows if r[2] > 0]
        p = pooled["clamped"]
        summ = tmj.JointSummary(rows, {"surface": (p["n"], p["mu_mm"], p["sigma_mm"])})
        plots.joint_errorbars(summ, os.path.join(cfg.out, "surface_errorbars.png"),
                              ylabel="signed distance [mm]")
    if rec_rows:
        _write_rows(os.path.join(cfg.out, "recovery.csv"),
                    ["splint_id", "repeat_id", "theta_err_deg", "t_err_mm"], rec_rows)
    run_stats(samples, cfg)
    joints = [tmj.JointModel(j["side"], fx.mesh(f"fossa_{j['side']}"), fx.mesh(f"condyle_{j['side']}"))
              for j in fx.manifest["joints"]]
    sim_cases = [(c.splint_id, c.repeat_id, c.planned, compose(m.error, c.planned))
                 for c, (m, _, _) in zip(cases, results)]
    run_simulation(joints, sim_cases, cfg, cfg.roi, cfg.diff_limit_mm)
    tree_path = fx.path("tree")
    if tree_path and os.path.exists(tree_path):
        tree = TransformTree.load(tree_path)
        write_json(os.path.join(cfg.out, "tree_check.json"),
                   {"tree": os.path.basename(tree_path), "tolerance": cfg.tree_tolerance,
                    "cycles": [loop_error_report(tree, cyc) for cyc in fx.manifest.get("cycles", [])]})
    write_report(cfg.out)
    print(f"pipeline over {len(cases)} cases written to {cfg.out}")
    return 0


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def write_report(directory) -> dict:
    """Collect a run directory into ``report.json`` and ``report.md``."""
    rep, md = {}, ["# jawkit pipeline report", ""]

    def have(name):
        return os.path.exists(os.path.join(directory, name))

    if have("karcher_mean.json"):
        with open(os.path.join(directory, "karcher_mean.json")) as fh:
            km = json.load(fh)
        rep["karcher_mean"] = km
        m = np.array(km["matrix"]).reshape(4, 4)
        md += [f"## Karcher mean ({km['mode']}, n = {km['n']})", "", "```"]
        md += ["  ".join(f"{x:10.6f}" for x in row) for row in m]
        md += ["```", ""]
    for name, title in (("component_stats.csv", "Component statistics"),
                        ("pca_ellipsoids.csv", "PCA ellipsoids"),
                        ("joint_summary.csv", "Joint-space difference summary"),
                        ("recovery.csv", "Recovery against ground truth")):
        if not have(name):
            continue
        rows = _read_csv(os.path.join(directory, name))
        rep[name] = rows
        md += [f"## {title}", "", "| " + " | ".join(rows[0]) + " |",
               "|" + "---|" * len(rows[0])]
        md += ["| " + " | ".join(r) + " |" for r in rows[1:] if r]
        md.append("")
    if have("recovery.csv"):
        rows = _read_csv(os.path.join(directory, "recovery.csv"))[1:]
        th = max(float(r[2]) for r in rows)
        tn = max(float(r[3]) for r in rows)
        rep["recovery_worst"] = {"theta_deg": th, "t_mm": tn}
        md += [f"Worst recovery error: {th:.4f} deg, {tn:.4f} mm.", ""]
    if have("surface_pooled.json"):
        with open(os.path.join(directory, "surface_pooled.json")) as fh:
            sp = json.load(fh)
        rep["surface_pooled"] = sp
        md += ["## Pooled surface distances", ""]
        for label, v in sorted(sp["pooled"].items()):
            md.append(f"- {label}: mu {v['mu_mm']:.4f} mm, sigma {v['sigma_mm']:.4f} mm "
                      f"over {v['n']} vertices")
        md.append("")
    if have("tree_check.json"):
        with open(os.path.join(directory, "tree_check.json")) as fh:
            rep["tree_check"] = json.load(fh)
    write_json(os.path.join(directory, "report.json"), rep)
    with open(os.path.join(directory, "report.md"), "w") as fh:
        fh.write("\n".join(md) + "\n")
    return rep


def cmd_report(args, cfg: PipelineConfig) -> int:
    directory = args.directory or cfg.out
    if not os.path.isdir(directory):
        raise ConfigError(f"output directory not found: {directory}")
    write_report(directory)
    print(f"report written to {os.path.join(directory, 'report.md')}")
    return 0


# -- argument parsing ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config JSON")
    common.add_argument("--out", help="output directory")
    common.add_argument("--jobs", type=int, help="worker threads")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--trace", action="store_true", help="include ICP iteration traces")
    common.add_argument("--mode", choices=MODES, help="SE(3) tangent parametrization")
    common.add_argument("--clamp", type=_parse_clamp, metavar="MM",
                        help="distance tolerance in mm ('none' disables)")
    common.add_argument("--roi", type=_parse_roi, metavar="LO:HI",
                        help="distance range kept in maps ('none' disables)")
    common.add_argument("--no-plots", action="store_true", help="skip image output")

    p = argparse.ArgumentParser(prog="jawkit", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("register", parents=[common], help="ICP of a source mesh onto a target")
    s.add_argument("source")
    s.add_argument("target")
    s.add_argument("--init", help="initial transform JSON/CSV")
    s.add_argument("--prealign", action="store_true", help="principal-axes pre-alignment")
    s.add_argument("--name", default="registration", help="output file stem")
    s.set_defaults(func=cmd_register)

    s = sub.add_parser("tree-check", parents=[common], help="loop consistency of a transform tree")
    s.add_argument("tree")
    s.add_argument("--cycle", action="append", help="comma-separated frames, repeatable")
    s.set_defaults(func=cmd_tree_check)

    s = sub.add_parser("mean", parents=[common], help="Karcher mean of a samples CSV")
    s.add_argument("samples")
    s.set_defaults(func=cmd_mean)

    s = sub.add_parser("stats", parents=[common], help="statistics of a samples CSV")
    s.add_argument("samples")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("distmap", parents=[common], help="distance map from source to target")
    s.add_argument("source")
    s.add_argument("target")
    s.add_argument("--unsigned", action="store_true")
    s.set_defaults(func=cmd_distmap)

    s = sub.add_parser("simulate", parents=[common], help="joint simulation from a scenario")
    s.add_argument("scenario")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("gen-fixture", parents=[common], help="write a synthetic fixture bundle")
    s.add_argument("--splints", type=int, default=8)
    s.add_argument("--repeats", type=int, default=4)
    s.add_argument("--jitter", type=float, default=0.05, help="scan vertex noise sigma (mm)")
    s.add_argument("--edge-length", type=float, help="phantom mesh edge length (mm)")
    s.add_argument("--zero-noise", action="store_true", help="identity splint errors")
    s.add_argument("--no-scans", action="store_true")
    s.set_defaults(func=cmd_gen_fixture)

    s = sub.add_parser("report", parents=[common], help="summarize an output directory")
    s.add_argument("directory", nargs="?")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("run-all", parents=[common], help="full pipeline from one config")
    s.set_defaults(func=cmd_run_all)
    return p


def _setup_logging() -> None:
    level = os.environ.get("JAWKIT_LOG", "WARNING").upper()
    numeric = logging.getLevelName(level) if not level.isdigit() else int(level)
    if not isinstance(numeric, int):
        numeric = logging.WARNING
    logging.basicConfig(level=numeric, format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve_config(args)
        if args.command == "gen-fixture" and args.out is None and args.config is None:
            cfg.out = "fixture"
        return args.func(args, cfg)
    except JawkitError as exc:
        print(f"jawkit {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"jawkit {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
