"""Command line front end.

    tslie run problem.txt --out results/

Problem files are sectioned ``key = value`` text::

    [timescale]
    kind = geometric      # uniform: a, b, n_points; explicit: points = 0, 1, 3
    t0 = 1
    ratio = 2
    count = 21

    [lagrangian]
    expr = t + qs*qd

    [generator g1]
    tau = 0
    xi = ln(t)/ln(2)

    [initial]
    q0 = 0
    v0 = 1

Exit codes: 0 all gated verdicts pass, 1 a tolerance is exceeded, 2 input
error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import expr as ex
from .discrete import DiscreteTrajectory, discrete_el_residual
from .dynamics import (AccelerationField, Lagrangian, Trajectory, dubois_residual,
                       el_residual, solve_bvp, solve_ivp)
from .errors import InputError, NumericError, ProblemFormatError, ToolkitError
from .symmetry import (GeneratorPair, build_ladders, conserved_series, determining_residual,
                       equivalence_gap, noether_residual, search_generators, solve_gauge,
                       structure_residual)
from .timescale import TimeScale, build_explicit, build_geometric, build_uniform

EXIT_OK, EXIT_TOLERANCE, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3

_SECTION_RE = re.compile(r"^\[\s*([a-z_]+)(?:\s+([A-Za-z0-9_\-]+))?\s*\]$")
_KEY_RE = re.compile(r"^[a-z][a-z0-9_]*$")

_SECTION_KEYS = {
    "timescale": {"kind", "a", "b", "n_points", "t0", "ratio", "count", "points"},
    "lagrangian": {"expr"},
    "acceleration": {"expr"},
    "generator": {"tau", "xi"},
    "initial": {"q0", "v0"},
    "boundary": {"a", "b"},
    "tolerances": {"residual_tol", "drift_tol"},
    "flags": {"include_gauge", "dubois_variant", "discrete_variant"},
    "search": {"tau", "xi"},
}


@dataclass
class ProblemSpec:
    timescale: dict
    lagrangian: ex.Expression
    acceleration: Optional[ex.Expression] = None
    generators: list = field(default_factory=list)  # (name, GeneratorPair)
    initial: Optional[tuple] = None
    boundary: Optional[tuple] = None
    residual_tol: float = 1e-9
    drift_tol: float = 1e-9
    include_gauge: bool = True
    dubois_variant: str = "printed"
    discrete_variant: str = "reconciled"
    path: str = ""

    def build_timescale(self) -> TimeScale:
        p = self.timescale
        kind = p["kind"]
        if kind == "uniform":
            return build_uniform(p["a"], p["b"], int(p["n_points"]))
        if kind == "geometric":
            return build_geometric(p["t0"], p["ratio"], int(p["count"]))
        return build_explicit(p["points"])


def _read_sections(path):
    """Parse the file into ``[(section, name, {key: (value, line)}, line)]``."""
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise InputError(f"cannot read {path}: {err}") from None
    sections = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SECTION_RE.match(line)
        if m:
            kind, name = m.group(1), m.group(2)
            if kind not in _SECTION_KEYS:
                raise ProblemFormatError(f"unknown section [{kind}]", lineno)
            if (kind == "generator") != (name is not None):
                raise ProblemFormatError(
                    f"section [{kind}] {'needs' if kind == 'generator' else 'takes no'} a name",
                    lineno)
            current = (kind, name, {}, lineno)
            sections.append(current)
            continue
        if "=" not in line:
            raise ProblemFormatError(f"expected 'key = value', got {line!r}", lineno)
        if current is None:
            raise ProblemFormatError("key outside of any section", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if not _KEY_RE.match(key):
            raise ProblemFormatError(f"invalid key {key!r}", lineno)
        if key not in _SECTION_KEYS[current[0]]:
            raise ProblemFormatError(f"unknown key {key!r} in [{current[0]}]", lineno)
        if key in current[2]:
            raise ProblemFormatError(f"duplicate key {key!r}", lineno)
        current[2][key] = (value, lineno)
    return sections


def _number(entries, key, section_line, section):
    if key not in entries:
        raise ProblemFormatError(f"[{section}] is missing {key!r}", section_line)
    value, lineno = entries[key]
    try:
        x = float(value)
    except ValueError:
        raise ProblemFormatError(f"{key!r} is not a number: {value!r}", lineno) from None
    if not math.isfinite(x):
        raise ProblemFormatError(f"{key!r} must be finite", lineno)
    return x


def _expression(entries, key, section_line, section, variables):
    if key not in entries:
        raise ProblemFormatError(f"[{section}] is missing {key!r}", section_line)
    value, lineno = entries[key]
    try:
        return ex.parse(value, variables)
    except InputError as err:
        raise ProblemFormatError(f"{key!r}: {err}", lineno) from None


def _expression_list(entries, key, variables):
    if key not in entries:
        return []
    value, lineno = entries[key]
    out = []
    for item in value.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            out.append(ex.parse(item, variables))
        except InputError as err:
            raise ProblemFormatError(f"{key!r}: {err}", lineno) from None
    return out


def _boolean(value, lineno, key):
    v = value.lower()
    if v in ("true", "yes", "1", "on"):
        return True
    if v in ("false", "no", "0", "off"):
        return False
    raise ProblemFormatError(f"{key!r} must be true or false, got {value!r}", lineno)


def load_problem(path) -> ProblemSpec:
    sections = _read_sections(path)
    seen = {}
    generators = []
    for kind, name, entries, lineno in sections:
        if kind == "generator":
            if any(g[0] == name for g in generators):
                raise ProblemFormatError(f"duplicate generator {name!r}", lineno)
            tau = _expression(entries, "tau", lineno, "generator", ex.GENERATOR_VARS)
            xi = _expression(entries, "xi", lineno, "generator", ex.GENERATOR_VARS)
            generators.append((name, GeneratorPair(tau, xi)))
            continue
        if kind == "search":
            raise ProblemFormatError("[search] belongs in a basis file (see --search)", lineno)
        if kind in seen:
            raise ProblemFormatError(f"duplicate section [{kind}]", lineno)
        seen[kind] = (entries, lineno)

    for required in ("timescale", "lagrangian"):
        if required not in seen:
            raise ProblemFormatError(f"missing section [{required}]")
    if ("initial" in seen) == ("boundary" in seen):
        raise ProblemFormatError("exactly one of [initial] or [boundary] is required")

    entries, lineno = seen["timescale"]
    if "kind" not in entries:
        raise ProblemFormatError("[timescale] is missing 'kind'", lineno)
    kind, kind_line = entries["kind"]
    ts_params = {"kind": kind}
    if kind == "uniform":
        names = ("a", "b", "n_points")
    elif kind == "geometric":
        names = ("t0", "ratio", "count")
    elif kind == "explicit":
        names = ()
        if "points" not in entries:
            raise ProblemFormatError("[timescale] is missing 'points'", lineno)
        value, pline = entries["points"]
        try:
            ts_params["points"] = [float(v) for v in value.split(",") if v.strip()]
        except ValueError:
            raise ProblemFormatError(f"bad point list {value!r}", pline) from None
    else:
        raise ProblemFormatError(f"unknown time scale kind {kind!r}", kind_line)
    for key in names:
        ts_params[key] = _number(entries, key, lineno, "timescale")
    allowed = {"kind", *names} | ({"points"} if kind == "explicit" else set())
    for key, (_, kl) in entries.items():
        if key not in allowed:
            raise ProblemFormatError(f"key {key!r} does not apply to {kind} scales", kl)

    spec = ProblemSpec(
        timescale=ts_params,
        lagrangian=_expression(seen["lagrangian"][0], "expr", seen["lagrangian"][1],
                               "lagrangian", ex.LAGRANGIAN_VARS),
        generators=generators,
        path=str(path),
    )
    if "acceleration" in seen:
        e, ln = seen["acceleration"]
        spec.acceleration = _expression(e, "expr", ln, "acceleration", ex.ACCELERATION_VARS)
    if "initial" in seen:
        e, ln = seen["initial"]
        spec.initial = (_number(e, "q0", ln, "initial"), _number(e, "v0", ln, "initial"))
    else:
        e, ln = seen["boundary"]
        spec.boundary = (_number(e, "a", ln, "boundary"), _number(e, "b", ln, "boundary"))
    if "tolerances" in seen:
        e, ln = seen["tolerances"]
        for key in ("residual_tol", "drift_tol"):
            if key in e:
                setattr(spec, key, _number(e, key, ln, "tolerances"))
    if "flags" in seen:
        e, _ = seen["flags"]
        if "include_gauge" in e:
            spec.include_gauge = _boolean(*e["include_gauge"], "include_gauge")
        if "dubois_variant" in e:
            v, vl = e["dubois_variant"]
            if v not in ("printed", "sigma", "sigma_form"):
                raise ProblemFormatError("dubois_variant must be printed or sigma", vl)
            spec.dubois_variant = "sigma" if v == "sigma_form" else v
        if "discrete_variant" in e:
            v, vl = e["discrete_variant"]
            if v not in ("printed", "reconciled"):
                raise ProblemFormatError("discrete_variant must be printed or reconciled", vl)
            spec.discrete_variant = v
    return spec


def load_basis(path) -> tuple:
    """Read a ``[search]`` basis file: ``tau = ...`` and ``xi = ...`` lists."""
    sections = _read_sections(path)
    found = [s for s in sections if s[0] == "search"]
    if len(found) != 1 or len(sections) != 1:
        raise ProblemFormatError("a basis file holds exactly one [search] section")
    entries = found[0][2]
    return (_expression_list(entries, "tau", ex.GENERATOR_VARS),
            _expression_list(entries, "xi", ex.GENERATOR_VARS))


# --------------------------------------------------------------------------
# running


@dataclass
class Verdict:
    name: str
    passed: bool
    gated: bool
    value: float
    tol: float
    note: str = ""


@dataclass
class GeneratorReport:
    name: str
    generator: GeneratorPair
    tau_zero: bool
    determining: object
    gauge: object
    conserved: object
    structure: object
    noether: object
    gap: object


@dataclass
class RunReport:
    trajectory: Trajectory
    el: object
    dubois: dict
    generators: list = field(default_factory=list)
    verdicts: list = field(default_factory=list)
    discrete_el: object = None
    search: object = None

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts if v.gated)

    @property
    def exit_code(self) -> int:
        return EXIT_OK if self.passed else EXIT_TOLERANCE


def _fmt(x):
    return format(float(x), ".17g")


def _write_csv(path, header, columns, n):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(n):
            row = []
            for col in columns:
                if callable(col):
                    v = col(i)
                else:
                    start, arr = col
                    k = i - start
                    v = arr[k] if 0 <= k < len(arr) else None
                row.append("" if v is None else _fmt(v))
            w.writerow(row)


def _acceleration_field(spec, L):
    if spec.acceleration is not None:
        return AccelerationField(h=spec.acceleration, lagrangian=L)
    return AccelerationField(lagrangian=L)


def run(spec: ProblemSpec, out_dir, search_basis=None) -> RunReport:
    """Solve, verify every generator and write CSV files plus ``report.txt``."""
    out = Path(out_dir)
    ts = spec.build_timescale()
    L = Lagrangian(spec.lagrangian)
    acc = _acceleration_field(spec, L)
    if spec.initial is not None:
        tr = solve_ivp(acc, ts, *spec.initial)
    else:
        tr = solve_bvp(acc, ts, *spec.boundary)

    el = el_residual(L, tr)
    report = RunReport(
        trajectory=tr, el=el,
        dubois={"printed": dubois_residual(L, tr, "printed"),
                "sigma": dubois_residual(L, tr, "sigma_form")},
    )
    report.verdicts.append(Verdict("euler_lagrange", el.relative <= spec.residual_tol, True,
                                   el.relative, spec.residual_tol))
    if ts.is_unit_lattice():
        report.discrete_el = discrete_el_residual(
            L, DiscreteTrajectory.from_trajectory(tr), spec.discrete_variant)

    for name, gen in spec.generators:
        det = determining_residual(gen, acc, tr)
        G = solve_gauge(gen, L, tr)
        cons = conserved_series(gen, L, G, tr, include_gauge=spec.include_gauge)
        gr = GeneratorReport(
            name=name, generator=gen,
            tau_zero=bool(np.all(build_ladders(gen, tr).tau == 0)),
            determining=det, gauge=G, conserved=cons,
            structure=structure_residual(gen, L, G, tr),
            noether=noether_residual(gen, L, G, tr),
            gap=equivalence_gap(gen, L, G, tr),
        )
        report.generators.append(gr)
        tol = spec.residual_tol
        report.verdicts += [
            Verdict(f"{name}.determining", det.relative <= tol, True, det.relative, tol),
            Verdict(f"{name}.structure", gr.structure.relative <= tol, True,
                    gr.structure.relative, tol),
            Verdict(f"{name}.equivalence", gr.gap.relative <= tol, True, gr.gap.relative, tol),
        ]
        drift = cons.relative_drift
        ok = drift <= spec.drift_tol
        note = "" if ok else "conserved-quantity drift exceeds tolerance"
        if not gr.tau_zero:
            note = (note + "; " if note else "") + "not gated: tau is not identically zero"
        report.verdicts.append(Verdict(f"{name}.drift", ok, gr.tau_zero, drift,
                                       spec.drift_tol, note))

    if search_basis is not None:
        report.search = search_generators(search_basis[0], search_basis[1], acc, [tr])

    out.mkdir(parents=True, exist_ok=True)
    _write_outputs(spec, report, out)
    return report


def _write_outputs(spec, report, out):
    tr = report.trajectory
    n = tr.n
    _write_csv(out / "trajectory.csv",
               ["index", "t", "mu", "q", "qsigma", "qdelta", "qdeltadelta"],
               [lambda i: i, (0, tr.t), (0, tr.mu), (0, tr.q),
                (0, np.append(tr.q[1:], tr.q[-1])), (0, tr.qd), (0, tr.qdd)], n)
    for gr in report.generators:
        _write_csv(out / f"sym_{gr.name}.csv",
                   ["index", "t", "det_residual", "G", "I", "structure_res", "noether_res"],
                   [lambda i: i, (0, tr.t), (0, gr.determining.series), (0, gr.gauge.values),
                    (0, gr.conserved.values), (0, gr.structure.series), (0, gr.noether.series)],
                   n)
    if report.search is not None:
        with open(out / "search.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rank", "score", "null", "tau", "xi"])
            for k, c in enumerate(report.search):
                w.writerow([k, _fmt(c.score), int(c.null), ex.serialize(c.generator.tau),
                            ex.serialize(c.generator.xi)])
    (out / "report.txt").write_text(render_report(spec, report))


def _line(label, r):
    return (f"{label}: max_abs={r.max_abs:.6e} relative={r.relative:.6e} "
            f"points={r.domain.start}..{r.domain.stop - 1}")


def render_report(spec: ProblemSpec, report: RunReport) -> str:
    tr = report.trajectory
    verdict = {v.name: v for v in report.verdicts}

    def mark(name):
        v = verdict[name]
        s = "PASS" if v.passed else "FAIL"
        if not v.gated:
            s += " (not gated)"
        return s

    lines = [f"problem: {spec.path}",
             f"time scale: {tr.ts.kind}, {tr.n} points, t in [{tr.t[0]:.17g}, {tr.t[-1]:.17g}]",
             f"lagrangian: {ex.serialize(spec.lagrangian)}"]
    if spec.acceleration is not None:
        lines.append(f"acceleration: {ex.serialize(spec.acceleration)}")
    lines.append(f"trajectory: q0={tr.q[0]:.17g} qd0={tr.qd[0]:.17g}")
    lines.append(_line("euler-lagrange residual", report.el) + f" [{mark('euler_lagrange')}]")
    order = ["printed", "sigma"] if spec.dubois_variant == "printed" else ["sigma", "printed"]
    for k, key in enumerate(order):
        tag = "selected" if k == 0 else "alternative"
        lines.append(_line(f"dubois-reymond ({key}, {tag}, diagnostic)", report.dubois[key]))
    if report.discrete_el is not None:
        lines.append(_line(f"discrete euler-lagrange ({spec.discrete_variant}, diagnostic)",
                           report.discrete_el))
    for gr in report.generators:
        nm = gr.name
        lines.append("")
        lines.append(f"generator {nm}: tau = {ex.serialize(gr.generator.tau)}, "
                     f"xi = {ex.serialize(gr.generator.xi)}")
        lines.append("  " + _line("determining residual", gr.determining)
                     + f" [{mark(nm + '.determining')}]")
        g = gr.gauge.values
        lines.append(f"  gauge: G[0]={g[0]:.17g} G[last]={g[-1]:.17g} "
                     f"max|G|={np.max(np.abs(g)):.6e}")
        lines.append("  " + _line("structure residual", gr.structure)
                     + f" [{mark(nm + '.structure')}]")
        lines.append("  " + _line("noether residual", gr.noether))
        lines.append("  " + _line("structure-noether gap", gr.gap)
                     + f" [{mark(nm + '.equivalence')}]")
        c = gr.conserved
        v = verdict[nm + ".drift"]
        lines.append(f"  conserved quantity (gauge {'included' if c.include_gauge else 'omitted'}): "
                     f"I[0]={c.values[0]:.17g} drift={c.drift:.6e} relative={c.relative_drift:.6e} "
                     f"[{mark(nm + '.drift')}]")
        if v.note:
            lines.append(f"  note: {v.note}")
    if report.search is not None:
        lines.append("")
        lines.append(f"generator search: null-space dimension {report.search.null_dimension}")
        for k, c in enumerate(report.search):
            lines.append(f"  #{k} score={c.score:.6e}{' (null)' if c.null else ''} "
                         f"tau = {ex.serialize(c.generator.tau)}, "
                         f"xi = {ex.serialize(c.generator.xi)}")
    lines.append("")
    failed = [v.name for v in report.verdicts if v.gated and not v.passed]
    if failed:
        lines.append(f"verdict: FAIL ({', '.join(failed)})")
    else:
        lines.append("verdict: PASS")
    return "\n".join(lines) + "\n"


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="tslie", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="solve a problem file and verify its generators")
    p.add_argument("problem")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--drift-tol", type=float)
    p.add_argument("--residual-tol", type=float)
    p.add_argument("--no-gauge", action="store_true", help="omit G from the conserved quantity")
    p.add_argument("--dubois", choices=("printed", "sigma"))
    p.add_argument("--search", metavar="BASIS_FILE")
    args = parser.parse_args(argv)

    try:
        spec = load_problem(args.problem)
        if args.drift_tol is not None:
            spec.drift_tol = args.drift_tol
        if args.residual_tol is not None:
            spec.residual_tol = args.residual_tol
        if args.no_gauge:
            spec.include_gauge = False
        if args.dubois:
            spec.dubois_variant = args.dubois
        basis = load_basis(args.search) if args.search else None
        # build the scale up front so bad parameters never leave partial output
        spec.build_timescale()
    except InputError as err:
        print(f"input error: {err}", file=sys.stderr)
        return EXIT_INPUT
    try:
        report = run(spec, args.out, basis)
    except InputError as err:
        print(f"input error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except NumericError as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    sys.stdout.write(render_report(spec, report))
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
