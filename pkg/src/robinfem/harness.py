"""Config-driven runs and verification studies.

A run config is a JSON object with the sections ``geometry``, ``coefficients``,
``data``, ``solver`` and an optional ``output`` directory; see the README for
the full schema. Parsing is strict: unknown keys and wrong types are rejected
with the dotted path of the offending field.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import (
    DEFAULT_SEED,
    REPORT_FIELDS,
    AdmissibilityError,
    TraceConstants,
    corrosion_to_coefficients,
    estimate_trace_constants,
)
from .assembly import BoundaryField, p1_gradients
from .geometry import AngularPartition, Mesh, build_disk_mesh, build_half_disk_mesh, format_mesh
from .solver import ProblemSpec, picard_solve, solve_linear_robin, verify_solution

SEED_ENV = "ROBIN_SEED"
CONSTANTS_FIELDS = REPORT_FIELDS + ("varphi", "psi", "mesh_level")
CONTRACTION_COLUMNS = ("eps2", "K_derivation", "K_paper", "max_ratio", "iterations", "converged")
CONVERGENCE_COLUMNS = ("level", "h", "err_L2", "err_H1", "rate_L2", "rate_H1")


class ConfigError(ValueError):
    pass


def seed_from_env() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV}={raw!r} is not an integer") from None


# --------------------------------------------------------------------------
# config parsing
# --------------------------------------------------------------------------

def _obj(value, path, allowed, required=()):
    if not isinstance(value, dict):
        raise ConfigError(f"{path}: expected an object")
    unknown = sorted(set(value) - set(allowed))
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {', '.join(unknown)}")
    for key in required:
        if key not in value:
            raise ConfigError(f"{path}.{key}: missing")
    return value


def _num(value, path, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{path}: expected a finite number, got {value!r}")
    if positive and value <= 0:
        raise ConfigError(f"{path}: expected a positive number, got {value!r}")
    return float(value)


def _int(value, path, minimum=0):
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{path}: expected an integer >= {minimum}, got {value!r}")
    return value


def _bool(value, path):
    if not isinstance(value, bool):
        raise ConfigError(f"{path}: expected true or false, got {value!r}")
    return value


@dataclass(frozen=True)
class FieldSpec:
    """``{"constant": v}`` or ``{"preset": "affine", "params": {"a", "bx", "by"}}``."""

    constant: float | None = None
    preset: str | None = None
    params: dict = field(default_factory=dict)

    def build(self) -> BoundaryField:
        if self.constant is not None:
            return BoundaryField.constant(self.constant)
        a, bx, by = (self.params.get(k, 0.0) for k in ("a", "bx", "by"))
        return BoundaryField.from_function(lambda p: a + bx * p[:, 0] + by * p[:, 1],
                                           f"affine(a={a!r}, bx={bx!r}, by={by!r})")

    def to_json(self):
        if self.constant is not None:
            return {"constant": self.constant}
        return {"preset": self.preset, "params": dict(self.params)}


FIELD_PRESETS = {"affine": ("a", "bx", "by")}


def _field(value, path) -> FieldSpec:
    _obj(value, path, ("constant", "preset", "params"))
    if ("constant" in value) == ("preset" in value):
        raise ConfigError(f"{path}: give exactly one of 'constant' or 'preset'")
    if "constant" in value:
        if "params" in value:
            raise ConfigError(f"{path}.params: not allowed with 'constant'")
        return FieldSpec(constant=_num(value["constant"], f"{path}.constant"))
    name = value["preset"]
    if name not in FIELD_PRESETS:
        raise ConfigError(f"{path}.preset: unknown preset {name!r} (known: {', '.join(FIELD_PRESETS)})")
    params = _obj(value.get("params", {}), f"{path}.params", FIELD_PRESETS[name])
    return FieldSpec(preset=name, params={k: _num(v, f"{path}.params.{k}") for k, v in params.items()})


@dataclass(frozen=True)
class RunConfig:
    geometry: dict
    varphi: FieldSpec
    psi: FieldSpec
    corrosion: dict | None
    phi: FieldSpec | None
    g: FieldSpec | None
    data_preset: str | None
    tol: float = 1e-10
    max_iter: int = 200
    allow_inadmissible: bool = False
    output: str | None = None

    # -- construction ------------------------------------------------------
    def build_mesh(self) -> Mesh:
        geo = self.geometry
        if geo["type"] == "half_disk":
            return build_half_disk_mesh(geo["R"], geo["split_angle"], geo["level"])
        part = AngularPartition(geo["R"], tuple((a["tag"], a["start"], a["end"]) for a in geo["arcs"]))
        return build_disk_mesh(part, geo["level"])

    def coefficient_fields(self):
        if self.corrosion is not None:
            return corrosion_to_coefficients(self.corrosion["lambda"], self.corrosion["alpha"])
        return self.varphi.build(), self.psi.build()

    def data_fields(self, varphi: BoundaryField, psi: BoundaryField):
        if self.data_preset is None:
            return self.phi.build(), self.g.build()
        return mms_data(self.geometry["R"], varphi, psi, nonlinear=self.data_preset == "mms_nonlinear")

    def problem(self, mesh: Mesh | None = None, trace: TraceConstants | None = None, seed: int | None = None):
        mesh = self.build_mesh() if mesh is None else mesh
        varphi, psi = self.coefficient_fields()
        phi, g = self.data_fields(varphi, psi)
        return ProblemSpec(mesh, varphi, psi, phi, g, trace=trace,
                           quadratic_robin=self.corrosion is not None,
                           seed=seed_from_env() if seed is None else seed)

    def echo_coefficients(self) -> dict:
        varphi, psi = self.coefficient_fields()
        return {"varphi": _echo(varphi), "psi": _echo(psi)}


def _echo(f: BoundaryField):
    return {"constant": f.value} if f.value is not None else {"function": f.label}


def parse_config(obj) -> RunConfig:
    """Validate a decoded JSON config; raises :class:`ConfigError`."""
    top = _obj(obj, "config", ("geometry", "coefficients", "data", "solver", "output"),
               ("geometry", "coefficients", "data"))

    geo_in = top["geometry"]
    _obj(geo_in, "geometry", ("type", "R", "split_angle", "arcs", "level"), ("type",))
    gtype = geo_in["type"]
    geo = {"type": gtype, "R": _num(geo_in.get("R", 1.0), "geometry.R", positive=True),
           "level": _int(geo_in.get("level", 0), "geometry.level")}
    if gtype == "half_disk":
        if "arcs" in geo_in:
            raise ConfigError("geometry.arcs: not allowed for half_disk")
        geo["split_angle"] = _num(geo_in.get("split_angle", math.pi / 2), "geometry.split_angle")
        if not 0 < geo["split_angle"] < math.pi:
            raise ConfigError("geometry.split_angle: must lie in (0, pi)")
    elif gtype == "disk":
        if "split_angle" in geo_in:
            raise ConfigError("geometry.split_angle: not allowed for disk")
        if "arcs" not in geo_in or not isinstance(geo_in["arcs"], list):
            raise ConfigError("geometry.arcs: expected a list of {tag, start, end}")
        arcs = []
        for i, arc in enumerate(geo_in["arcs"]):
            p = f"geometry.arcs[{i}]"
            _obj(arc, p, ("tag", "start", "end"), ("tag", "start", "end"))
            if arc["tag"] not in ("D", "N", "R"):
                raise ConfigError(f"{p}.tag: expected one of D, N, R")
            arcs.append({"tag": arc["tag"], "start": _num(arc["start"], f"{p}.start"),
                         "end": _num(arc["end"], f"{p}.end")})
        try:
            AngularPartition(geo["R"], tuple((a["tag"], a["start"], a["end"]) for a in arcs))
        except ValueError as exc:
            raise ConfigError(f"geometry.arcs: {exc}") from None
        geo["arcs"] = arcs
    else:
        raise ConfigError(f"geometry.type: expected 'disk' or 'half_disk', got {gtype!r}")

    co = top["coefficients"]
    _obj(co, "coefficients", ("varphi", "psi", "preset", "params"))
    corrosion = None
    varphi = psi = FieldSpec(constant=0.0)
    if "preset" in co:
        if "varphi" in co or "psi" in co:
            raise ConfigError("coefficients: give either a preset or varphi/psi, not both")
        if co["preset"] != "corrosion":
            raise ConfigError(f"coefficients.preset: unknown preset {co['preset']!r} (known: corrosion)")
        params = _obj(co.get("params"), "coefficients.params", ("lambda", "alpha"), ("lambda", "alpha"))
        corrosion = {"lambda": _num(params["lambda"], "coefficients.params.lambda"),
                     "alpha": _num(params["alpha"], "coefficients.params.alpha")}
        if not 0 < corrosion["alpha"] < 1:
            raise ConfigError("coefficients.params.alpha: must lie in (0, 1)")
    else:
        if "params" in co:
            raise ConfigError("coefficients.params: only allowed with a preset")
        if "varphi" not in co:
            raise ConfigError("coefficients.varphi: missing")
        varphi = _field(co["varphi"], "coefficients.varphi")
        psi = _field(co["psi"], "coefficients.psi") if "psi" in co else FieldSpec(constant=0.0)

    da = top["data"]
    _obj(da, "data", ("phi", "g", "preset"))
    phi = g = None
    data_preset = None
    if "preset" in da:
        if "phi" in da or "g" in da:
            raise ConfigError("data: give either a preset or phi/g, not both")
        if da["preset"] not in ("mms_linear", "mms_nonlinear"):
            raise ConfigError(f"data.preset: unknown preset {da['preset']!r} (known: mms_linear, mms_nonlinear)")
        if gtype != "half_disk":
            raise ConfigError("data.preset: manufactured data need the half_disk geometry")
        data_preset = da["preset"]
    else:
        for key in ("phi", "g"):
            if key not in da:
                raise ConfigError(f"data.{key}: missing")
        phi, g = _field(da["phi"], "data.phi"), _field(da["g"], "data.g")

    so = _obj(top.get("solver", {}), "solver", ("tol", "max_iter", "allow_inadmissible"))
    tol = _num(so.get("tol", 1e-10), "solver.tol", positive=True)
    max_iter = _int(so.get("max_iter", 200), "solver.max_iter", 1)
    allow = _bool(so.get("allow_inadmissible", False), "solver.allow_inadmissible")

    output = top.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError("output: expected a path string")
    return RunConfig(geo, varphi, psi, corrosion, phi, g, data_preset, tol, max_iter, allow, output)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse_config(obj)


# --------------------------------------------------------------------------
# manufactured solution u* = y on the upper half-disk
# --------------------------------------------------------------------------

def mms_data(radius: float, varphi: BoundaryField, psi: BoundaryField, nonlinear: bool = True):
    """Neumann and Robin data for which ``u* = y`` solves the problem on the half-disk."""
    phi = BoundaryField.from_function(lambda p: p[:, 1] / radius, "mms_phi")

    def g_func(p):
        y = p[:, 1]
        out = y / radius + varphi(p) * y
        if nonlinear:
            out = out + psi(p) * y * y
        return out

    return phi, BoundaryField.from_function(g_func, "mms_g_nonlinear" if nonlinear else "mms_g_linear")


# symmetric 7-point rule, exact for degree 5
_S15 = math.sqrt(15.0)
_A1, _A2 = (6 - _S15) / 21, (6 + _S15) / 21
_W1, _W2 = (155 - _S15) / 1200, (155 + _S15) / 1200
TRI7_BARY = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_A1, _A1, 1 - 2 * _A1], [_A1, 1 - 2 * _A1, _A1], [1 - 2 * _A1, _A1, _A1],
    [_A2, _A2, 1 - 2 * _A2], [_A2, 1 - 2 * _A2, _A2], [1 - 2 * _A2, _A2, _A2],
])
TRI7_W = np.array([9 / 40, _W1, _W1, _W1, _W2, _W2, _W2])


def l2_error(mesh: Mesh, u_nodal: np.ndarray, exact) -> float:
    """``||u_h - exact||_{L2}`` over the mesh with the 7-point triangle rule."""
    _, area = p1_gradients(mesh)
    p = mesh.nodes[mesh.triangles]                     # (m, 3, 2)
    pts = np.einsum("qi,tid->tqd", TRI7_BARY, p)       # (m, 7, 2)
    uh = np.einsum("qi,ti->tq", TRI7_BARY, u_nodal[mesh.triangles])
    ex = exact(pts.reshape(-1, 2)).reshape(uh.shape)
    return math.sqrt(float(np.sum(area[:, None] * TRI7_W[None, :] * (uh - ex) ** 2)))


@dataclass
class ConvergenceTable:
    rows: list
    picard: list = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CONVERGENCE_COLUMNS)
        for r in self.rows:
            w.writerow([_csv_val(r[c]) for c in CONVERGENCE_COLUMNS])
        return buf.getvalue()


def _csv_val(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _rate(coarse: float, fine: float):
    if coarse <= 0 or fine <= 0:
        return None
    return math.log2(coarse / fine)


def run_mms_study(kind: str, levels: int, varphi_const: float, psi_const: float = 0.0,
                  radius: float = 1.0, split_angle: float = math.pi / 2, first_level: int = 1,
                  tol: float = 1e-10, max_iter: int = 200, seed: int | None = None,
                  use_interpolant: bool = False) -> ConvergenceTable:
    """Errors of the discrete solution against ``u* = y`` over ``levels`` refinements.

    ``kind='linear'`` solves the linear problem (``psi_const`` must be 0);
    ``kind='nonlinear'`` runs Picard. Admissibility is checked on the finest
    mesh before anything else. ``use_interpolant`` replaces the solver by the
    nodal interpolant of ``u*``, so every error is zero.
    """
    if kind not in ("linear", "nonlinear"):
        raise ValueError(f"kind must be 'linear' or 'nonlinear', got {kind!r}")
    if levels < 3:
        raise ValueError("a convergence study needs at least 3 levels")
    if kind == "linear" and psi_const != 0:
        raise ValueError("the linear study needs psi_const = 0")
    seed = seed_from_env() if seed is None else seed
    varphi, psi = BoundaryField.constant(varphi_const), BoundaryField.constant(psi_const)
    phi, g = mms_data(radius, varphi, psi, nonlinear=kind == "nonlinear")

    def spec_at(level):
        mesh = build_half_disk_mesh(radius, split_angle, level)
        return ProblemSpec(mesh, varphi, psi, phi, g, seed=seed)

    level_list = list(range(first_level, first_level + levels))
    specs = {level_list[-1]: spec_at(level_list[-1])}
    finest = specs[level_list[-1]].admissibility
    if not finest.admissible:
        raise AdmissibilityError("finest level: " + "; ".join(finest.violations))

    exact = lambda p: p[:, 1]  # noqa: E731
    rows, picard = [], []
    for level in level_list:
        spec = specs.get(level) or spec_at(level)
        interp = spec.mesh.nodes[spec.dofs.free, 1]
        if use_interpolant:
            u = interp.copy()
        elif kind == "linear":
            u = solve_linear_robin(spec)
        else:
            spec.admissibility.require()
            u, rep = picard_solve(spec, tol=tol, max_iter=max_iter)
            picard.append({"level": level, "converged": rep.converged, "iterations": rep.iterations,
                           "max_ratio": max(rep.ratios, default=0.0), "K_derivation": rep.K_derivation,
                           "M0": spec.admissibility.M0, "max_iterate_norm": max(rep.iterates_norms)})
        rows.append({
            "level": level,
            "h": spec.mesh.max_diameter(),
            "err_L2": l2_error(spec.mesh, spec.dofs.expand(u), exact),
            "err_H1": spec.norm(u - interp),
            "rate_L2": None,
            "rate_H1": None,
        })
    for prev, row in zip(rows, rows[1:]):
        row["rate_L2"] = _rate(prev["err_L2"], row["err_L2"])
        row["rate_H1"] = _rate(prev["err_H1"], row["err_H1"])
    return ConvergenceTable(rows, picard)


# --------------------------------------------------------------------------
# contraction study
# --------------------------------------------------------------------------

DEFAULT_EPS2_FRACTIONS = (0.9, 0.5, 0.25, 0.1, 0.02)


def eps2_threshold(config: RunConfig, seed: int | None = None) -> float:
    """``1/(4 beta2^3 M0)`` for the config's mesh and data."""
    return config.problem(seed=seed).admissibility.thresholds["eps2_max"]


def run_contraction_study(config: RunConfig, eps2_grid, negative: bool = False, delta: float = 1e-6,
                          seed: int | None = None, keep_reports: bool = False):
    """Picard runs with ``psi = +-eps2 (1 - delta)`` for every ``eps2`` in the grid.

    Mesh, ``varphi`` and the boundary data stay those of ``config``, so ``M0``
    and the thresholds are the same at every grid point. Returns one row per
    grid value, in input order, with the largest observed increment ratio next
    to both contraction constants.
    """
    base = config.problem(seed=seed)
    trace = base.trace_constants
    rows, reports = [], []
    for eps2 in eps2_grid:
        eps2 = float(eps2)
        psi = BoundaryField.constant((-1.0 if negative else 1.0) * eps2 * (1.0 - delta))
        spec = base.with_coefficients(psi=psi, trace=trace, quadratic_robin=False)
        rep = spec.admissibility
        if not rep.admissible and not config.allow_inadmissible:
            raise AdmissibilityError(f"eps2 = {eps2!r}: " + "; ".join(rep.violations))
        _, pr = picard_solve(spec, tol=config.tol, max_iter=config.max_iter,
                             allow_inadmissible=config.allow_inadmissible, keep_iterates=keep_reports)
        rows.append({"eps2": eps2, "K_derivation": rep.K_derivation, "K_paper": rep.K_paper,
                     "max_ratio": max(pr.ratios, default=0.0), "iterations": pr.iterations,
                     "converged": pr.converged})
        reports.append((spec, pr))
    return (rows, reports) if keep_reports else rows


def contraction_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CONTRACTION_COLUMNS)
    for r in rows:
        w.writerow([_csv_val(r[c]) for c in CONTRACTION_COLUMNS])
    return buf.getvalue()


# --------------------------------------------------------------------------
# constants and full pipeline
# --------------------------------------------------------------------------

def constants_document(config: RunConfig, spec: ProblemSpec) -> dict:
    doc = spec.admissibility.to_dict()
    doc.update(config.echo_coefficients())
    doc["mesh_level"] = spec.mesh.level
    return {k: doc[k] for k in CONSTANTS_FIELDS}


def run_constants(config: RunConfig, seed: int | None = None) -> dict:
    """Build the mesh, estimate the trace constants and return the constants document."""
    spec = config.problem(seed=seed)
    return constants_document(config, spec)


def dumps(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


@dataclass
class RunResult:
    status: int
    artifacts: dict
    message: str = ""


def run_config(config: RunConfig, seed: int | None = None) -> RunResult:
    """Full pipeline; returns the exit status and the artifacts to write.

    Status 0 iff Picard converged and the solution passed verification, 2 for
    inadmissible coefficients, 1 for any other failure.
    """
    mesh = config.build_mesh()
    spec = config.problem(mesh=mesh, seed=seed)
    artifacts = {"mesh.txt": format_mesh(mesh)}
    constants = constants_document(config, spec)
    artifacts["constants.json"] = dumps(constants)
    report = spec.admissibility
    if not report.admissible and not config.allow_inadmissible:
        return RunResult(2, artifacts, "inadmissible coefficients: " + "; ".join(report.violations))
    u, pr = picard_solve(spec, tol=config.tol, max_iter=config.max_iter,
                         allow_inadmissible=config.allow_inadmissible)
    artifacts["picard.json"] = dumps(pr.to_dict())
    ver = verify_solution(spec, u, report, tol=config.tol)
    artifacts["verification.json"] = dumps(ver.to_dict())
    nodal = spec.dofs.expand(u)
    artifacts["solution.txt"] = "".join(
        f"{i} {x!r} {y!r} {v!r}\n" for i, ((x, y), v) in enumerate(zip(mesh.nodes.tolist(), nodal.tolist())))
    if not pr.converged:
        return RunResult(1, artifacts, f"Picard iteration did not converge in {pr.iterations} iterations")
    if not ver.passed:
        return RunResult(1, artifacts, "verification failed: " + "; ".join(ver.failures))
    return RunResult(0, artifacts, "converged and verified")


def write_artifacts(artifacts: dict, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in artifacts.items():
        (out / name).write_text(text)
