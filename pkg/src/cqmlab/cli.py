"""Scenario runner: ``cqmlab run <config.toml>`` / ``cqmlab validate <config.toml>``.

Scenarios are TOML files with sections [scenario], [constants], [chart],
[metric], [potential], optional [em]/[grav], named [functions.*] tables
and an ordered [[tasks]] array.  Each task emits one CSV (header line
``# cqm-csv v1``); a run manifest with the config hash and residual
summary is written alongside.  Exit codes: 0 ok, 1 assertion failure,
2 config error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import struct
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:          # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import __version__, falg, quantum, solver, units
from .errors import ConfigError, CqmError
from .fields import ScalarField, parse_expression
from .geometry import (EMField, FibredChart, GeometryBundle, SpacelikeMetric,
                       SpacetimeConnection, compose_total_connection,
                       field_array, levi_civita_connection, validate_geometry)
from .gridops import SpatialGrid
from .phase import PhasePoint, build_gamma, build_omega, integrate_newton

EXIT_OK, EXIT_ASSERTION, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

CSV_HEADER = "# cqm-csv v1"

TOLERANCE_PROFILES = {
    "strict": {"validate": 1e-8, "closure": 1e-6, "hermiticity": 1e-8,
               "commutator": 1e-6, "spectrum": 1e-6, "bracket": 1e-8},
    "grid": {"validate": 1e-6, "closure": 1e-4, "hermiticity": 1e-6,
             "commutator": 1e-4, "spectrum": 1e-4, "bracket": 1e-6},
}

TASK_KINDS = ("validate", "trajectory", "brackets", "operators", "evolve",
              "spectrum", "commutators")


def _need(table, key, path):
    if key not in table:
        raise ConfigError(f"missing required key", path=f"{path}.{key}")
    return table[key]


class Scenario:
    """A parsed and validated scenario file."""

    def __init__(self, raw, source):
        self.source = source
        meta = raw.get("scenario", {})
        self.name = meta.get("name", Path(source).stem)
        self.k_factor = float(meta.get("k_factor", 0.0))

        chart_tab = _need(raw, "chart", "")
        n = int(_need(chart_tab, "n", "chart"))
        try:
            self.chart = FibredChart(
                n, [tuple(e) for e in _need(chart_tab, "extents", "chart")],
                tuple(_need(chart_tab, "grid_points", "chart")),
                float(chart_tab.get("time_step", 1e-3)))
        except CqmError as exc:
            raise ConfigError(str(exc), path="chart")
        self.n = n

        consts = raw.get("constants", {})
        m = units.mass(float(consts.get("mass", 1.0)))
        hbar = units.planck(float(consts.get("hbar", 1.0)))
        q = units.charge(float(consts.get("charge", 1.0)))
        metric_scale = m.value / hbar.value
        em_scale = q.value / hbar.value

        try:
            comp = raw.get("metric", {}).get(
                "components", [["1" if i == j else "0" for j in range(n)]
                               for i in range(n)])
            fields = field_array(comp, n, shape=(n, n))
            if metric_scale != 1.0:
                fields = field_array(
                    [[fields[i, j] * metric_scale for j in range(n)]
                     for i in range(n)], n, shape=(n, n))
            self.metric = SpacelikeMetric(fields)
        except CqmError as exc:
            raise ConfigError(str(exc), path="metric.components")

        try:
            pot = raw.get("potential", {}).get("components", ["0"] * (n + 1))
            if len(pot) != n + 1:
                raise ConfigError(f"potential needs {n + 1} components",
                                  path="potential.components")
            self.potential = field_array(
                [ScalarField.from_expression(str(p), n) * em_scale
                 if em_scale != 1.0 else str(p) for p in pot],
                n, shape=(n + 1,))
        except ConfigError:
            raise
        except CqmError as exc:
            raise ConfigError(str(exc), path="potential.components")

        try:
            grav = raw.get("grav")
            self.grav = (SpacetimeConnection.from_map(grav, n) if grav
                         else levi_civita_connection(self.metric))
            em = raw.get("em")
            if em:
                emf = EMField.from_map(em, n)
                if em_scale != 1.0:
                    emf = EMField(field_array(
                        [[emf.components[i, j] * em_scale for j in range(n + 1)]
                         for i in range(n + 1)], n, shape=(n + 1, n + 1)), n=n)
                self.em = emf
            else:
                self.em = EMField.from_potential(self.potential, n)
        except ConfigError:
            raise
        except CqmError as exc:
            raise ConfigError(str(exc), path="grav/em")

        self.bundle = GeometryBundle(self.chart, self.metric, self.grav,
                                     self.em, self.potential)

        self.functions = {}
        for fname, tab in raw.get("functions", {}).items():
            try:
                self.functions[fname] = falg.SpecialQuadratic.build(
                    str(_need(tab, "f0", f"functions.{fname}")),
                    [str(c) for c in _need(tab, "fi", f"functions.{fname}")],
                    str(_need(tab, "f_base", f"functions.{fname}")),
                    n, name=fname)
            except ConfigError:
                raise
            except CqmError as exc:
                raise ConfigError(str(exc), path=f"functions.{fname}")

        self.tasks = raw.get("tasks", [])
        for i, task in enumerate(self.tasks):
            kind = _need(task, "kind", f"tasks[{i}]")
            if kind not in TASK_KINDS:
                raise ConfigError(f"unknown task kind {kind!r}",
                                  path=f"tasks[{i}].kind")
            for key in ("function", "functions"):
                names = task.get(key)
                names = [names] if isinstance(names, str) else (names or [])
                for ref in names:
                    for part in (ref.split(",") if isinstance(ref, str) else ref):
                        if part and part not in self.functions:
                            raise ConfigError(
                                f"undefined function {part!r}",
                                path=f"tasks[{i}].{key}")

    def function(self, name, where):
        if name not in self.functions:
            raise ConfigError(f"undefined function {name!r}", path=where)
        return self.functions[name]


def load_scenario(path) -> Scenario:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"no such file: {path}", path=str(path))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"parse error: {exc}", path=str(path))
    return Scenario(raw, str(path))


# -- emission ------------------------------------------------------------

def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([f"{v:.12g}" if isinstance(v, float) else v
                             for v in row])


def dump_wavefunction(path, wf):
    """Flat binary dump: int32 n, int32 dims, little-endian complex pairs."""
    shape = wf.grid.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<i", len(shape)))
        fh.write(struct.pack(f"<{len(shape)}i", *shape))
        fh.write(np.ascontiguousarray(wf.values,
                                      dtype="<c16").tobytes())


def _state_from_task(task, scenario, grid, where):
    re_src = _need(task, "state_re", where)
    im_src = str(task.get("state_im", "0"))
    n = scenario.n
    re_f = ScalarField.from_expression(str(re_src), n)
    im_f = ScalarField.from_expression(im_src, n)
    return quantum.AnalyticState(
        grid, lambda t, xs: np.asarray(re_f(t, xs)) + 1j * np.asarray(im_f(t, xs)))


# -- tasks ---------------------------------------------------------------

def _task_validate(scenario, task, tol, out):
    report = validate_geometry(scenario.bundle)
    omega = build_omega(scenario.bundle)
    gamma = build_gamma(scenario.bundle)
    center = [0.5 * (lo + hi) for lo, hi in scenario.chart.extents]
    pts = [PhasePoint(0.1, center, [0.2] * scenario.n),
           PhasePoint(0.4, [0.9 * c + 0.05 * (hi - lo) for c, (lo, hi)
                            in zip(center, scenario.chart.extents)],
                      [-0.1] * scenario.n)]
    closure = omega.closure_residual(pts)
    contraction = max(gamma.contraction_residual(omega, p) for p in pts)
    vtol = float(task.get("tolerance", tol["validate"]))
    ctol = float(task.get("closure_tolerance", tol["closure"]))
    rows, ok = [], True
    for name, value in report.residuals.items():
        passed = value <= vtol
        ok = ok and passed
        rows.append((name, float(value), vtol, "pass" if passed else "fail"))
    for name, value, bound in (("omega_closure", closure, ctol),
                               ("gamma_contraction", contraction, ctol)):
        passed = value <= bound
        ok = ok and passed
        rows.append((name, float(value), bound, "pass" if passed else "fail"))
    _write_csv(out, ("check", "residual", "tolerance", "status"), rows)
    worst = max([float(v) for v in report.residuals.values()] + [closure])
    return ok, worst


def _task_trajectory(scenario, task, tol, out):
    start = _need(task, "start", "tasks.trajectory")
    p0 = PhasePoint(float(start.get("t", 0.0)),
                    [float(v) for v in _need(start, "x", "tasks.trajectory.start")],
                    [float(v) for v in _need(start, "v", "tasks.trajectory.start")])
    gamma = build_gamma(scenario.bundle)
    traj = integrate_newton(gamma, p0, float(_need(task, "t_end", "tasks.trajectory")),
                            int(task.get("steps", 1000)))
    n = scenario.n
    cols = ["step", "t"] + [f"x{i+1}" for i in range(n)] + [f"v{i+1}" for i in range(n)]
    rows = [(i, p.t, *map(float, p.x), *map(float, p.v))
            for i, p in enumerate(traj)]
    _write_csv(out, cols, rows)
    return True, 0.0


def _task_brackets(scenario, task, tol, out):
    pairs = _need(task, "pairs", "tasks.brackets")
    center = [0.5 * (lo + hi) for lo, hi in scenario.chart.extents]
    t0 = float(task.get("t", 0.0))
    btol = float(task.get("tolerance", tol["bracket"]))
    rows, ok, worst = [], True, 0.0
    for pair in pairs:
        fa = scenario.function(pair[0], "tasks.brackets.pairs")
        fb = scenario.function(pair[1], "tasks.brackets.pairs")
        br = falg.special_bracket(fa, fb, scenario.bundle)
        rb = falg.special_bracket(fb, fa, scenario.bundle)
        p = PhasePoint(t0, center, [0.3] * scenario.n)
        anti = abs(br.value(scenario.bundle, p) + rb.value(scenario.bundle, p))
        worst = max(worst, anti)
        passed = anti <= btol
        ok = ok and passed
        cls = falg.classify(br, scenario.chart)
        rows.append((f"{pair[0]},{pair[1]}", float(br.f0(t0, center)),
                     ";".join(f"{c(t0, center):.12g}" for c in br.fi),
                     float(br.f_base(t0, center)),
                     "yes" if cls.quantisable else "no",
                     float(anti), "pass" if passed else "fail"))
    _write_csv(out, ("pair", "f0", "fi", "f_base", "quantisable",
                     "antisymmetry_residual", "status"), rows)
    return ok, worst


def _task_operators(scenario, task, tol, out, k_factor):
    names = task.get("functions", list(scenario.functions))
    grid = SpatialGrid.from_chart(scenario.chart)
    t0 = float(task.get("t", 0.0))
    htol = float(task.get("tolerance", tol["hermiticity"]))
    rows, ok, worst = [], True, 0.0
    for name in names:
        f = scenario.function(name, "tasks.operators.functions")
        op = quantum.quantum_operator(f, scenario.bundle, k_factor, grid, t0)
        defect = op.hermiticity_defect()
        worst = max(worst, defect)
        passed = defect <= htol
        ok = ok and passed
        rows.append((name, "hermiticity_defect", float(defect), htol,
                     "pass" if passed else "fail"))
    _write_csv(out, ("operator", "residual_kind", "value", "tolerance",
                     "status"), rows)
    return ok, worst


def _task_evolve(scenario, task, tol, out, k_factor, outdir):
    grid = SpatialGrid.from_chart(scenario.chart)
    state = _state_from_task(task, scenario, grid, "tasks.evolve")
    cfg = solver.EvolutionConfig(float(task.get("t_start", 0.0)),
                                 float(_need(task, "t_end", "tasks.evolve")),
                                 int(_need(task, "steps", "tasks.evolve")))
    psi0 = solver.normalize(state.slice(cfg.t_start), scenario.bundle)
    observables = {}
    for name in task.get("observables", []):
        f = scenario.function(name, "tasks.evolve.observables")
        observables[name] = quantum.quantum_operator(
            f, scenario.bundle, k_factor, grid, cfg.t_start)
    result = solver.evolve(psi0, scenario.bundle, k_factor, cfg, observables)
    cols = ["step", "t", "norm"] + list(observables)
    rows = [(i, float(result.times[i]), float(result.norms[i]),
             *(float(result.series[name][i]) for name in observables))
            for i in range(len(result.times))]
    _write_csv(out, cols, rows)
    if task.get("dump_final", False):
        dump_wavefunction(Path(outdir) / f"{task.get('label', 'evolve')}_final.cqm",
                          result.final)
    drift = float(np.max(np.abs(result.norms - result.norms[0])))
    dtol = float(task.get("norm_tolerance", 1e-8))
    static = solver.bundle_is_static(scenario.bundle)
    ok = (drift <= dtol) if static else True
    return ok, drift


def _task_spectrum(scenario, task, tol, out, k_factor):
    fname = task.get("function")
    f = scenario.function(fname, "tasks.spectrum.function") if fname else None
    res = solver.spectrum(scenario.bundle, k_factor,
                          int(task.get("n_modes", 5)), f=f)
    stol = float(task.get("tolerance", tol["spectrum"]))
    rows, ok = [], True
    for m, (lam, r) in enumerate(zip(res.eigenvalues, res.residuals)):
        passed = r <= stol
        ok = ok and passed
        rows.append((m, float(lam), float(r), "pass" if passed else "fail"))
    _write_csv(out, ("mode", "eigenvalue", "residual", "status"), rows)
    return ok, float(np.max(res.residuals))


def _task_commutators(scenario, task, tol, out, k_factor):
    grid = SpatialGrid.from_chart(scenario.chart)
    state = _state_from_task(task, scenario, grid, "tasks.commutators")
    pairs = _need(task, "pairs", "tasks.commutators")
    t0 = float(task.get("t", 0.0))
    ctol = float(task.get("tolerance", tol["commutator"]))
    rows, ok, worst = [], True, 0.0
    for pair in pairs:
        fa = scenario.function(pair[0], "tasks.commutators.pairs")
        fb = scenario.function(pair[1], "tasks.commutators.pairs")
        rep = quantum.commutator_check(fa, fb, state, scenario.bundle,
                                       k_factor, t0)
        worst = max(worst, rep.residual)
        passed = rep.residual <= ctol
        ok = ok and passed
        rows.append((f"{pair[0]},{pair[1]}", float(rep.residual),
                     float(rep.lhs_norm), float(rep.obstruction_norm),
                     "yes" if rep.obstruction_active else "no",
                     "pass" if passed else "fail"))
    _write_csv(out, ("pair", "residual", "lhs_norm", "obstruction_norm",
                     "obstruction_active", "status"), rows)
    return ok, worst


# -- driver --------------------------------------------------------------

def run_scenario(path, outdir, profile="strict", k_override=None,
                 validate_only=False):
    scenario = load_scenario(path)
    tol = TOLERANCE_PROFILES[profile]
    k_factor = scenario.k_factor if k_override is None else float(k_override)
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(path, "rb") as fh:
        digest = hashlib.sha256(fh.read()).hexdigest()

    tasks = scenario.tasks
    if validate_only:
        tasks = [{"kind": "validate"}]
    summary, all_ok = [], True
    for i, task in enumerate(tasks):
        kind = task["kind"]
        label = task.get("label", f"{i:02d}_{kind}")
        out = outdir / f"{label}.csv"
        if kind == "validate":
            ok, worst = _task_validate(scenario, task, tol, out)
        elif kind == "trajectory":
            ok, worst = _task_trajectory(scenario, task, tol, out)
        elif kind == "brackets":
            ok, worst = _task_brackets(scenario, task, tol, out)
        elif kind == "operators":
            ok, worst = _task_operators(scenario, task, tol, out, k_factor)
        elif kind == "evolve":
            ok, worst = _task_evolve(scenario, task, tol, out, k_factor, outdir)
        elif kind == "spectrum":
            ok, worst = _task_spectrum(scenario, task, tol, out, k_factor)
        elif kind == "commutators":
            ok, worst = _task_commutators(scenario, task, tol, out, k_factor)
        all_ok = all_ok and ok
        summary.append({"task": label, "kind": kind, "status": "pass" if ok
                        else "fail", "max_residual": worst,
                        "output": out.name})
    manifest = {
        "scenario": scenario.name,
        "config": str(path),
        "config_sha256": digest,
        "version": __version__,
        "tolerance_profile": profile,
        "tolerances": tol,
        "k_factor": k_factor,
        "tasks": summary,
    }
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return EXIT_OK if all_ok else EXIT_ASSERTION


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="cqmlab", description="covariant quantum mechanics workbench")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in ("run", "validate"):
        p = sub.add_parser(cmd)
        p.add_argument("config")
        p.add_argument("--out", default=os.environ.get("CQMLAB_OUT", "out"))
        p.add_argument("--tolerance-profile", choices=("strict", "grid"),
                       default="strict")
        p.add_argument("--k", type=float, default=None,
                       help="override the scenario's curvature factor")
    args = parser.parse_args(argv)
    try:
        return run_scenario(args.config, args.out, args.tolerance_profile,
                            args.k, validate_only=args.command == "validate")
    except ConfigError as exc:
        print(f"config error [{exc.path}]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CqmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
