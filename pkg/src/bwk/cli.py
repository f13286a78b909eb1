"""Command line driver: TOML model configs in, JSON/CSV reports out.

Exit codes: 0 on success, 2 when the model is infeasible at the queried
point(s) (that is data, not a crash), 1 on configuration or runtime errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import compat, contact, extremal, frenet, geometry, transport
from .compat import COMPONENT_ORDER, Tolerances
from .expr import ExprSyntaxError
from .geometry import GeometryError
from .sampling import fibonacci_sphere

__all__ = ["main", "load_config", "ModelConfig", "ConfigError"]


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    model: geometry.FinslerModel
    tol: Tolerances
    ode_h: float
    grid: dict | None
    verify: dict
    path: str


# ---------------------------------------------------------------------------
# config loading

_UPPER_INDEX = {3: 2, 6: 3}  # upper-triangle length -> dimension


def _metric_rows(section, path):
    if "rows" in section:
        rows = section["rows"]
        n = len(rows)
        if any(len(r) != n for r in rows):
            raise ConfigError(f"{path}: [metric] rows must form a square table")
        return [[str(e) for e in row] for row in rows]
    if "upper" in section:
        upper = [str(e) for e in section["upper"]]
        if len(upper) not in _UPPER_INDEX:
            raise ConfigError(
                f"{path}: [metric] upper needs 3 entries (2D) or 6 entries (3D)")
        n = _UPPER_INDEX[len(upper)]
        rows = [["0"] * n for _ in range(n)]
        it = iter(upper)
        for i in range(n):
            for j in range(i, n):
                rows[i][j] = rows[j][i] = next(it)
        return rows
    raise ConfigError(f"{path}: [metric] needs 'rows' or 'upper'")


def load_config(path: str) -> ModelConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such file")
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"{path}: {err}")

    kind = raw.get("kind")
    if kind not in (geometry.RIEMANNIAN, geometry.RANDERS, geometry.CUSTOM):
        raise ConfigError(
            f"{path}: kind must be one of 'riemannian', 'randers', 'custom-F'")
    if "metric" not in raw:
        raise ConfigError(f"{path}: missing [metric] section")
    rows = _metric_rows(raw["metric"], path)

    n = len(rows)
    try:
        if kind == geometry.RIEMANNIAN:
            model = geometry.make_riemannian(rows, n=n)
        elif kind == geometry.RANDERS:
            comps = raw.get("one_form", {}).get("components")
            if comps is None:
                raise ConfigError(
                    f"{path}: randers model needs [one_form] components")
            if len(comps) != n:
                raise ConfigError(
                    f"{path}: one_form needs {n} components to match the metric")
            model = geometry.make_randers(rows, [str(c) for c in comps], n=n)
        else:
            fstr = raw.get("finsler", {}).get("F")
            if fstr is None:
                raise ConfigError(f"{path}: custom-F model needs [finsler] F")
            model = geometry.make_custom(rows, str(fstr), n=n)
    except ExprSyntaxError as err:
        raise ConfigError(f"{path}: bad expression: {err}")

    tol_kw = {}
    for key in ("eps_v", "eps_h", "eps_feas", "eps_tau"):
        if key in raw.get("tolerances", {}):
            tol_kw[key] = float(raw["tolerances"][key])
    sampling = raw.get("sampling", {})
    for key in ("n_dirs", "n_quad"):
        if key in sampling:
            tol_kw[key] = int(sampling[key])
    tol = Tolerances(**tol_kw)
    ode_h = float(sampling.get("ode_h", tol.ode_h))

    verify = {
        "curves": int(raw.get("verify", {}).get("curves", 10)),
        "seed": int(raw.get("verify", {}).get("seed", 0)),
        "scale": float(raw.get("verify", {}).get("scale", 1.0)),
    }
    return ModelConfig(model=model, tol=tol, ode_h=ode_h,
                       grid=raw.get("grid"), verify=verify, path=path)


def _parse_point(text: str, n: int) -> np.ndarray:
    parts = [s.strip() for s in text.split(",")]
    if len(parts) != n:
        raise ConfigError(f"--point needs {n} comma-separated values")
    try:
        return np.array([float(s) for s in parts])
    except ValueError:
        raise ConfigError(f"--point is not numeric: {text!r}")


# ---------------------------------------------------------------------------
# report assembly

def _jsonify(obj):
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    return obj


def _dump_json(report, out):
    text = json.dumps(_jsonify(report), sort_keys=True, indent=2) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _component_dict(t9) -> dict:
    return {name: float(v) for name, v in zip(COMPONENT_ORDER, t9)}


def _metric_residual(m, p, gamma_conn, h=1e-5) -> float:
    """Central-difference check of covariant constancy of the metric."""
    worst = 0.0
    g0 = geometry.point_data(m, p)
    for i in range(m.n):
        step = np.zeros(m.n)
        step[i] = h
        gp = geometry.point_data(m, p + step).gamma
        gm = geometry.point_data(m, p - step).gamma
        dg = (gp - gm) / (2 * h)
        pred = (np.einsum("lj,lk->jk", gamma_conn[:, i, :], g0.gamma)
                + np.einsum("lk,jl->jk", gamma_conn[:, i, :], g0.gamma))
        worst = max(worst, float(np.max(np.abs(dg - pred))))
    return worst


_DRIFT_DIR = np.array([0.6, -0.5, 0.3])
_DRIFT_V0 = np.array([0.8, 0.2, 0.5])


def _f_drift(m, p, tol, ode_h, span=0.1) -> float:
    """F-drift under the solved connection along a short straight segment."""
    field = extremal.ExtremalField(m, tol=tol, n_dirs=32)
    path = [
        "{!r} + {!r}*t".format(float(p[i]), float(span * _DRIFT_DIR[i]))
        for i in range(m.n)
    ]
    curve = transport.CurveSpec.make(path)
    rep = transport.transport_report(field, m, [curve], [_DRIFT_V0],
                                     h=ode_h, richardson=False)
    return rep.max_F_drift


def _oriented_axis(m, p, sol, data, tol):
    """Axis oriented by the frame of the indicatrix flow when available.

    Falls back to the sign-canonical singular vector if the flow degenerates
    (straight integral curve, vanishing curvature and so on).
    """
    try:
        lines = frenet.solution_lines(m, data=data, tol=tol, p=p)
        return lines.fd.B, "frame_flow"
    except (frenet.FrenetError, GeometryError):
        return sol.axis, "nullspace"


def point_report(cfg: ModelConfig, p: np.ndarray, full: bool) -> dict:
    m = cfg.model
    tol = cfg.tol
    data = geometry.point_data(m, p)
    sol = compat.solve_pointwise(m, p, tol=tol, data=data)
    report = {
        "point": list(p),
        "status": sol.status,
        "rank": sol.rank,
        "nullity": int(sol.detail.get("nullity", m.n * 3 - sol.rank)),
        "residuals": {"compat": sol.residual},
    }
    if not full:
        return report

    report["axis"] = None
    report["stu"] = None
    report["torsion_frame"] = None
    report["torsion_chart"] = None
    report["gamma"] = None
    report["residuals"]["metric"] = None
    report["residuals"]["F_drift"] = None
    if sol.status == compat.STATUS_INFEASIBLE:
        return report

    axis = None
    if sol.status == compat.STATUS_UNDETERMINED:
        axis, source = _oriented_axis(m, p, sol, data, tol)
        ud, stu = extremal.decompose_torsion(sol.base.t, axis)
        report["axis"] = list(axis)
        report["axis_source"] = source
        report["stu"] = list(stu)

    conn = extremal.connection_coefficients(m, p, sol.base, data=data)
    chart = sol.base.chart_components()
    report["torsion_frame"] = _component_dict(sol.base.t)
    report["torsion_chart"] = _component_dict(compat.tensor_to_components(chart))
    report["gamma"] = [float(v) for v in conn.gamma.ravel()]
    report["residuals"]["metric"] = _metric_residual(m, p, conn.gamma)
    report["residuals"]["F_drift"] = _f_drift(m, p, tol, cfg.ode_h)
    return report


def _emit_plot_data(cfg: ModelConfig, p: np.ndarray, out: str | None):
    """Sphere samples of the contact data, for external plotting."""
    m = cfg.model
    data = geometry.point_data(m, p)
    dirs = fibonacci_sphere(cfg.tol.n_quad)
    cross, b, _, _ = contact.cross_batch(m, data, dirs)
    name = "plot_data.csv"
    if out:
        stem, _ = os.path.splitext(out)
        name = stem + "_sphere.csv"
    with open(name, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["d1", "d2", "d3", "cross_norm", "b1", "b2", "b3"])
        norms = np.linalg.norm(cross, axis=1)
        for i in range(dirs.shape[0]):
            w.writerow([repr(float(v)) for v in (*dirs[i], norms[i], *b[i])])
    return name


# ---------------------------------------------------------------------------
# commands

def cmd_classify(cfg, args) -> int:
    p = _parse_point(args.point, cfg.model.n)
    report = point_report(cfg, p, full=False)
    _dump_json(report, args.out)
    if args.emit_plot_data:
        _emit_plot_data(cfg, p, args.out)
    return 2 if report["status"] == compat.STATUS_INFEASIBLE else 0


def cmd_solve(cfg, args) -> int:
    p = _parse_point(args.point, cfg.model.n)
    report = point_report(cfg, p, full=True)
    _dump_json(report, args.out)
    if args.emit_plot_data:
        _emit_plot_data(cfg, p, args.out)
    return 2 if report["status"] == compat.STATUS_INFEASIBLE else 0


_GRID_FIELDS = (
    ["x1", "x2", "x3", "status", "axis1", "axis2", "axis3"]
    + list(COMPONENT_ORDER)
    + ["s", "t", "u", "residual", "F_drift"]
)


def _grid_points(grid_spec) -> np.ndarray:
    lo = np.asarray(grid_spec["min"], dtype=float)
    hi = np.asarray(grid_spec["max"], dtype=float)
    shape = [int(s) for s in grid_spec["shape"]]
    axes = [
        np.linspace(lo[i], hi[i], shape[i]) if shape[i] > 1
        else np.array([(lo[i] + hi[i]) / 2.0])
        for i in range(len(shape))
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([a.ravel() for a in mesh], axis=1)


def _grid_row(cfg, p) -> dict:
    m = cfg.model
    tol = cfg.tol
    data = geometry.point_data(m, p)
    sol = compat.solve_pointwise(m, p, tol=tol, data=data)
    row = {f: "" for f in _GRID_FIELDS}
    row.update({"x1": p[0], "x2": p[1], "x3": p[2],
                "status": sol.status, "residual": sol.residual})
    if sol.status == compat.STATUS_INFEASIBLE:
        return row
    chart9 = compat.tensor_to_components(sol.base.chart_components())
    for name, v in zip(COMPONENT_ORDER, chart9):
        row[name] = v
    if sol.status == compat.STATUS_UNDETERMINED:
        axis, _ = _oriented_axis(m, p, sol, data, tol)
        _, stu = extremal.decompose_torsion(sol.base.t, axis)
        row.update({"axis1": axis[0], "axis2": axis[1], "axis3": axis[2],
                    "s": stu[0], "t": stu[1], "u": stu[2]})
    row["F_drift"] = _f_drift(m, p, tol, cfg.ode_h)
    return row


def cmd_grid(cfg, args) -> int:
    if not cfg.grid:
        raise ConfigError(f"{cfg.path}: grid command needs a [grid] section")
    points = _grid_points(cfg.grid)
    workers = int(os.environ.get("BWK_THREADS", "0") or 0) or min(
        8, os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(lambda p: _grid_row(cfg, p), points))

    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=_GRID_FIELDS)
    w.writeheader()
    for row in rows:
        w.writerow(row)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    any_bad = any(r["status"] == compat.STATUS_INFEASIBLE for r in rows)
    return 2 if any_bad else 0


def cmd_verify(cfg, args) -> int:
    p = _parse_point(args.point, cfg.model.n)
    v = cfg.verify
    curves = transport.random_spline_curves(v["seed"], v["curves"], p,
                                            scale=v["scale"])
    field = extremal.ExtremalField(cfg.model, tol=cfg.tol, n_dirs=32)
    try:
        rep = transport.transport_report(
            field, cfg.model, curves, [_DRIFT_V0] * len(curves), h=cfg.ode_h)
    except extremal.InfeasibleModel as err:
        _dump_json({"status": compat.STATUS_INFEASIBLE, "detail": str(err)},
                   args.out)
        return 2
    _dump_json({
        "max_F_drift": rep.max_F_drift,
        "max_gamma_drift": rep.max_gamma_drift,
        "richardson_ratio": rep.richardson_ratio,
        "traces": rep.traces,
        "curves": v["curves"],
        "seed": v["seed"],
    }, args.out)
    return 0


def cmd_axis(cfg, args) -> int:
    p = _parse_point(args.point, cfg.model.n)
    data = geometry.point_data(cfg.model, p)
    found = transport.detect_revolution_axis(cfg.model, p, data=data,
                                             tol=cfg.tol)
    sol = compat.solve_pointwise(cfg.model, p, tol=cfg.tol, data=data)
    report = {"point": list(p), "status": sol.status}
    if isinstance(found, str):
        report["axis"] = None
        report["isotropic"] = True
        report["agrees"] = sol.status == compat.STATUS_RIEMANNIAN
    elif found is None:
        report["axis"] = None
        report["isotropic"] = False
        report["agrees"] = sol.status != compat.STATUS_UNDETERMINED
    else:
        report["axis"] = list(found)
        report["isotropic"] = False
        agree = sol.status == compat.STATUS_UNDETERMINED and sol.axis is not None
        if agree:
            agree = abs(float(np.dot(found, sol.axis))) > 1.0 - 1e-5
        report["agrees"] = bool(agree)
    _dump_json(report, args.out)
    if args.emit_plot_data:
        _emit_plot_data(cfg, p, args.out)
    return 2 if sol.status == compat.STATUS_INFEASIBLE else 0


def cmd_surface2d(cfg, args) -> int:
    if cfg.model.n != 2:
        raise ConfigError(f"{cfg.path}: surface2d needs a 2D model "
                          f"(metric upper = 3 entries)")
    p = _parse_point(args.point, 2)
    res = compat.solve_surface_2d(cfg.model, p, tol=cfg.tol)
    _dump_json({
        "point": list(p),
        "torsion": list(res.torsion),
        "riemannian": bool(res.riemannian),
        "weight": res.weight,
    }, args.out)
    return 0


# ---------------------------------------------------------------------------

_COMMANDS = {
    "classify": cmd_classify,
    "solve": cmd_solve,
    "grid": cmd_grid,
    "verify": cmd_verify,
    "axis": cmd_axis,
    "surface2d": cmd_surface2d,
}


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="bwk",
        description="Compatible linear connections on Finsler 3-manifolds.")
    ap.add_argument("command", choices=sorted(_COMMANDS))
    ap.add_argument("--config", required=True, help="TOML model description")
    ap.add_argument("--point", default="0,0,0",
                    help="chart point, comma separated (default origin)")
    ap.add_argument("--out", default=None, help="write the report here")
    ap.add_argument("--emit-plot-data", action="store_true",
                    help="also write sphere samples of the contact data as CSV")
    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "surface2d" and args.point == "0,0,0":
        args.point = "0,0"
    try:
        cfg = load_config(args.config)
        return _COMMANDS[args.command](cfg, args)
    except (ConfigError, GeometryError, ExprSyntaxError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except extremal.InfeasibleModel as err:
        print(f"infeasible: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
