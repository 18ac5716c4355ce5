"""Command-line front end.

    riccati-lab {flow,check,volume,scan,report} --config run.json --out DIR

The config is one JSON object.  Manifold keys: ``dimension``, ``kind``
(``space_form`` | ``warped`` | ``custom_profile``), ``k``, ``profile``,
``table``, ``anisotropic``, ``cut_equals_conjugate``.  Run keys (all
optional): ``epsilon`` (1e-3), ``r_max`` (3.0), ``grid`` (201), ``order``
(32), ``rtol`` (1e-9), ``atol`` (1e-12), ``max_steps``, ``directions``,
``checks``, ``compare`` (``{"k": .., "K": ..}``), ``radii``, ``scan``.

Exit codes: 0 every verdict holds, 2 some verdict failed, 1 usage, config or
numeric error.
"""

from __future__ import annotations

import argparse
import csv
import glob
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import comparison as cmp
from . import oracles
from . import spaceform as sf
from . import volume as vol
from .flow import FlowError, StepControl, integrate_lanes, write_trace_csv
from .manifold import (
    DirectionChartPoint,
    ManifoldSpec,
    SpaceForm,
    ValidationError,
    WarpedProduct,
    builtin_profile,
    chart_inverse,
    constant_table,
)

DEFAULTS = {"epsilon": 1e-3, "r_max": 3.0, "grid": 201, "order": 32, "rtol": 1e-9, "atol": 1e-12}
TRACE_CHECKS = ("constant_curvature", "hessian_lower", "hessian_upper", "mean", "identities")
SCAN_CHECKS = ("bonnet_myers", "synge", "cartan_hadamard")
VOLUME_CHECKS = ("bishop", "bishop_gromov")
ALL_CHECKS = TRACE_CHECKS + SCAN_CHECKS + VOLUME_CHECKS
# lower end of the constant-curvature window; g / sn_k^2 is 0/0-limited below it
CONSTANT_R_MIN = 0.05
CONSTANT_END_FRACTION = 0.95


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    spec: ManifoldSpec
    raw: dict
    epsilon: float
    r_max: float
    grid: int
    order: int
    control: StepControl
    directions: list
    checks: list = field(default_factory=list)
    quiet: bool = False


# -- config ------------------------------------------------------------------


def _need(d: dict, key: str, where: str = ""):
    if key not in d:
        raise ConfigError(f"missing required key '{where}{key}'")
    return d[key]


def _number(d: dict, key: str, default=None, where: str = "") -> float:
    v = d.get(key, default) if default is not None else _need(d, key, where)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"key '{where}{key}' must be a number, got {v!r}")
    return float(v)


def build_spec(raw: dict, profile_override: str | None = None, k_override: float | None = None) -> ManifoldSpec:
    n = _need(raw, "dimension")
    if isinstance(n, bool) or not isinstance(n, int) or n < 2:
        raise ConfigError(f"key 'dimension' must be an integer >= 2, got {n!r}")
    kind = _need(raw, "kind")
    if kind == "space_form":
        k = k_override if k_override is not None else _number(raw, "k")
        spec = ManifoldSpec(n, SpaceForm(k), True, f"space_form(k={k!r})")
    elif kind == "warped":
        name = profile_override or _need(raw, "profile")
        try:
            prof = builtin_profile(str(name))
        except ValidationError as exc:
            raise ConfigError(f"key 'profile': {exc}") from exc
        spec = ManifoldSpec(n, WarpedProduct(prof), True, f"warped({prof.name})")
    elif kind == "custom_profile":
        table = _need(raw, "table")
        try:
            prof = constant_table(table, raw.get("anisotropic"))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"key 'table' is not a numeric table: {exc}") from exc
        spec = ManifoldSpec(n, prof, False, f"custom_profile({prof.label})")
    else:
        raise ConfigError(f"key 'kind' must be one of space_form, warped, custom_profile; got {kind!r}")
    cut = raw.get("cut_equals_conjugate", spec.cut_equals_conjugate)
    if not isinstance(cut, bool):
        raise ConfigError("key 'cut_equals_conjugate' must be true or false")
    return ManifoldSpec(spec.n, spec.kind, cut, spec.label)


def _directions(raw: dict, n: int) -> list[DirectionChartPoint]:
    if "directions" not in raw:
        return cmp.default_directions(n)
    out = []
    for i, d in enumerate(raw["directions"]):
        where = f"directions[{i}]"
        if isinstance(d, dict) and "xi" in d:
            pt = chart_inverse(d["xi"])
        elif isinstance(d, dict):
            pt = DirectionChartPoint(tuple(_need(d, "theta", where + ".")), d.get("pole", "north"))
        else:
            pt = DirectionChartPoint(tuple(d))
        if pt.dim != n - 1:
            raise ConfigError(f"key '{where}' needs {n - 1} chart coordinates")
        out.append(pt)
    if not out:
        raise ConfigError("key 'directions' is empty")
    return out


def load_config(path: str, args) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc.strerror}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    spec = build_spec(raw)
    vals = {key: (_number(raw, key, dflt)) for key, dflt in DEFAULTS.items()}
    for key, flag in (("epsilon", "epsilon"), ("r_max", "rmax"), ("grid", "grid"), ("order", "order")):
        if getattr(args, flag, None) is not None:
            vals[key] = float(getattr(args, flag))
    for key in ("epsilon", "r_max", "rtol", "atol"):
        if not vals[key] > 0:
            raise ConfigError(f"key '{key}' must be > 0")
    if not vals["epsilon"] < vals["r_max"]:
        raise ConfigError(f"need epsilon < r_max, got {vals['epsilon']!r} >= {vals['r_max']!r}")
    if vals["epsilon"] > 1e-2:
        raise ConfigError("key 'epsilon' must be <= 1e-2")
    for key in ("grid", "order"):
        if vals[key] != int(vals[key]) or vals[key] < 3:
            raise ConfigError(f"key '{key}' must be an integer >= 3")
    checks = raw.get("checks", [])
    if getattr(args, "check", None):
        checks = [c.strip() for c in args.check.split(",") if c.strip()]
    if not isinstance(checks, list):
        raise ConfigError("key 'checks' must be a list of names")
    for c in checks:
        if c not in ALL_CHECKS:
            raise ConfigError(f"unknown check {c!r} in 'checks'; known: {', '.join(ALL_CHECKS)}")
    max_steps = raw.get("max_steps", StepControl.max_steps)
    if isinstance(max_steps, bool) or not isinstance(max_steps, int) or max_steps < 1:
        raise ConfigError("key 'max_steps' must be a positive integer")
    control = StepControl(rtol=vals["rtol"], atol=vals["atol"], max_steps=max_steps)
    return RunConfig(
        spec, raw, vals["epsilon"], vals["r_max"], int(vals["grid"]), int(vals["order"]),
        control, _directions(raw, spec.n), checks, bool(getattr(args, "quiet", False)),
    )


def _bound(cfg: RunConfig, key: str) -> float:
    """Comparison constant ``compare.<key>``, else the space-form ``k``."""
    comp = cfg.raw.get("compare", {})
    if key in comp:
        return _number(comp, key, where="compare.")
    if "k" in cfg.raw:
        return _number(cfg.raw, "k")
    raise ConfigError(f"missing required key 'compare.{key}'")


# -- output ------------------------------------------------------------------


def _fmt(x: float) -> str:
    return "%.17g" % x


def write_verdicts(verdicts, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "holds", "max_violation", "at_r", "tolerance"])
        for v in verdicts:
            w.writerow(v.row())
        fh.write("\n# notes\n")
        for v in verdicts:
            fh.write(f"# {v.name}: {v.notes}\n")


def read_verdicts(path) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _say(cfg_or_quiet, text: str) -> None:
    quiet = cfg_or_quiet if isinstance(cfg_or_quiet, bool) else cfg_or_quiet.quiet
    if not quiet:
        print(text)


def _report_verdicts(cfg: RunConfig, verdicts) -> int:
    for v in verdicts:
        tag = "PASS" if v.holds else "FAIL"
        _say(cfg, f"{tag} {v.name} max_violation={v.max_violation:.6g} at_r={v.at_r:.6g} tolerance={v.tolerance:.3g}")
    return 0 if all(v.holds for v in verdicts) else 2


# -- subcommands -------------------------------------------------------------


def _grid(cfg: RunConfig, r_max: float) -> np.ndarray:
    pts = np.linspace(cfg.epsilon, r_max, cfg.grid)
    return np.unique(np.append(pts, 10.0 * cfg.epsilon))


def _traces(cfg: RunConfig, r_max: float | None = None):
    r_max = cfg.r_max if r_max is None else r_max
    return integrate_lanes(cfg.spec, cfg.directions, cfg.epsilon, r_max, _grid(cfg, r_max), cfg.control)


def cmd_flow(cfg: RunConfig, out: str) -> int:
    traces = _traces(cfg)
    with open(os.path.join(out, "events.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "pole", "theta", "halt_reason", "r_end", "r0", "estimator_error"])
        for i, tr in enumerate(traces):
            write_trace_csv(tr, os.path.join(out, f"trace_{i}.csv"))
            ev = tr.conjugate
            w.writerow([i, tr.theta.pole, " ".join(_fmt(x) for x in tr.theta.theta), tr.halt_reason,
                        _fmt(tr.terminal.r), _fmt(ev.r0) if ev else "", _fmt(ev.estimator_error) if ev else ""])
            where = f"conjugate r0={ev.r0:.9g} (+/- {ev.estimator_error:.2g})" if ev else f"no event up to r={tr.terminal.r:.9g}"
            _say(cfg, f"trace_{i}: {len(tr.states)} states, {where}")
    return 0


def _trace_verdict(name: str, traces, fn) -> cmp.ComparisonVerdict:
    parts = [fn(tr) for tr in traces]
    worst = max(parts, key=lambda p: p.max_violation / p.tolerance)
    notes = "; ".join(dict.fromkeys(p.notes for p in parts))
    return cmp.ComparisonVerdict(parts[0].name, all(p.holds for p in parts), worst.max_violation, worst.at_r, worst.tolerance, notes)


def _constant_window(cfg: RunConfig, k: float):
    return (CONSTANT_R_MIN, min(cfg.r_max, CONSTANT_END_FRACTION * sf.domain_end(k)))


def _run_check(cfg: RunConfig, name: str, traces, curve_cache: dict) -> cmp.ComparisonVerdict:
    spec = cfg.spec
    common = dict(directions=cfg.directions, epsilon=cfg.epsilon, grid=cfg.grid, control=cfg.control)
    if name == "constant_curvature":
        k = _bound(cfg, "k")
        return _trace_verdict(name, traces(), lambda tr: cmp.constant_curvature_check(tr, k, r_range=_constant_window(cfg, k)))
    if name == "hessian_lower":
        K = _bound(cfg, "K")
        return _trace_verdict(name, traces(), lambda tr: cmp.check_hessian_lower(tr, K))
    if name == "hessian_upper":
        k = _bound(cfg, "k")
        return _trace_verdict(name, traces(), lambda tr: cmp.check_hessian_upper(tr, k))
    if name == "mean":
        k = _bound(cfg, "k")
        return _trace_verdict(name, traces(), lambda tr: cmp.check_mean(tr, k))
    if name == "identities":
        return _trace_verdict(name, traces(), cmp.identity_check)
    if name == "bonnet_myers":
        return cmp.bonnet_myers_scan(spec, _positive(_bound(cfg, "k"), name), **common)
    if name == "synge":
        return cmp.synge_check(spec, _positive(_bound(cfg, "k"), name), **common)
    if name == "cartan_hadamard":
        return cmp.cartan_hadamard_check(spec, cfg.r_max, **common)
    k = _bound(cfg, "k")
    if "curve" not in curve_cache:
        scheme = vol.build_quadrature(spec.n, cfg.order)
        curve_cache["scheme"] = scheme
        curve_cache["curve"] = vol.volume_curve(spec, _radii(cfg), scheme, cfg.epsilon, cfg.control)
    scheme, curve = curve_cache["scheme"], curve_cache["curve"]
    check = vol.bishop_check if name == "bishop" else vol.bishop_gromov_check
    return check(spec, k, curve.radii, scheme, cfg.epsilon, cfg.control, curve=curve)


def _positive(k: float, name: str) -> float:
    if not k > 0:
        raise ConfigError(f"check '{name}' needs compare.k > 0, got {k!r}")
    return k


def _radii(cfg: RunConfig) -> list[float]:
    if "radii" in cfg.raw:
        radii = cfg.raw["radii"]
        if not isinstance(radii, list) or not radii or not all(isinstance(r, (int, float)) for r in radii):
            raise ConfigError("key 'radii' must be a non-empty list of numbers")
        radii = [float(r) for r in radii]
    else:
        # two small radii for the r -> 0 limit, then an even grid to r_max
        radii = [0.01, 0.02] + [float(r) for r in np.linspace(0.0, cfg.r_max, 17)[1:]]
    radii = sorted(set(r for r in radii if r > cfg.epsilon))
    if not radii or radii[-1] > cfg.r_max + 1e-12:
        raise ConfigError(f"key 'radii' must lie in (epsilon, r_max={cfg.r_max!r}]")
    return radii


def _run_checks(cfg: RunConfig, names, out: str) -> int:
    cache: dict = {}

    def traces():
        if "traces" not in cache:
            cache["traces"] = _traces(cfg)
        return cache["traces"]

    verdicts = []
    for name in names:
        try:
            verdicts.append(_run_check(cfg, name, traces, cache))
        except cmp.HypothesisViolated as exc:
            verdicts.append(exc.verdict())
    write_verdicts(verdicts, os.path.join(out, "verdicts.csv"))
    if "curve" in cache:
        vol.write_volume_csv(cache["curve"], cfg.spec.n, _bound(cfg, "k"), os.path.join(out, "volume.csv"))
    return _report_verdicts(cfg, verdicts)


def cmd_check(cfg: RunConfig, out: str) -> int:
    if not cfg.checks:
        raise ConfigError("no checks requested; set 'checks' or pass --check")
    return _run_checks(cfg, cfg.checks, out)


def cmd_volume(cfg: RunConfig, out: str) -> int:
    names = [c for c in cfg.checks if c in VOLUME_CHECKS] or list(VOLUME_CHECKS)
    return _run_checks(cfg, names, out)


def cmd_scan(cfg: RunConfig, out: str) -> int:
    """Sweep ``k`` (space forms) or the argument of a profile template and
    tabulate first conjugate radii per direction."""
    scan = _need(cfg.raw, "scan")
    values = _need(scan, "values", "scan.")
    if not isinstance(values, list) or not values:
        raise ConfigError("key 'scan.values' must be a non-empty list")
    template = scan.get("profile")
    rows = []
    for v in values:
        if template is not None:
            label = template.replace("{}", repr(float(v)))
            spec = build_spec(cfg.raw, profile_override=label)
        else:
            label = repr(float(v))
            spec = build_spec(cfg.raw, k_override=float(v))
        r_max = cfg.r_max
        if spec.working_end < r_max:
            r_max = spec.working_end
        traces = integrate_lanes(spec, cfg.directions, cfg.epsilon, r_max, _grid(cfg, r_max), cfg.control)
        for i, tr in enumerate(traces):
            ev = tr.conjugate
            rows.append([label, str(i), _fmt(ev.r0) if ev else "inf", _fmt(ev.estimator_error) if ev else "0", _fmt(tr.terminal.r)])
        first = min((tr.conjugate.r0 for tr in traces if tr.conjugate), default=math.inf)
        _say(cfg, f"{label}: first conjugate radius {first:.9g}")
    with open(os.path.join(out, "scan.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["value", "direction", "r0", "estimator_error", "r_end"])
        w.writerows(rows)
    return 0


def cmd_report(out: str, quiet: bool) -> int:
    lines = []
    status = 0
    vpath = os.path.join(out, "verdicts.csv")
    found = False
    if os.path.exists(vpath):
        found = True
        rows = read_verdicts(vpath)
        failed = [r for r in rows if r["holds"] != "true"]
        lines.append(f"verdicts: {len(rows)} total, {len(rows) - len(failed)} hold, {len(failed)} fail")
        for r in rows:
            tag = "PASS" if r["holds"] == "true" else "FAIL"
            lines.append(f"  {tag} {r['name']} max_violation={r['max_violation']} at_r={r['at_r']}")
        if failed:
            status = 2
    traces = sorted(glob.glob(os.path.join(out, "trace_*.csv")))
    if traces:
        found = True
        lines.append(f"traces: {len(traces)} files")
        epath = os.path.join(out, "events.csv")
        if os.path.exists(epath):
            with open(epath, newline="") as fh:
                for r in csv.DictReader(fh):
                    where = f"r0={r['r0']}" if r["r0"] else f"no event to r={r['r_end']}"
                    lines.append(f"  trace_{r['index']}: {where}")
    for fname, label in (("volume.csv", "volume"), ("scan.csv", "scan")):
        path = os.path.join(out, fname)
        if os.path.exists(path):
            found = True
            with open(path, newline="") as fh:
                rows = list(csv.DictReader(fh))
            lines.append(f"{label}: {len(rows)} rows")
            if label == "volume" and rows:
                last = rows[-1]
                lines.append(f"  r={last['r']} volume={last['volume']} model={last['model_volume']} ratio={last['ratio']}")
    if not found:
        raise ConfigError(f"no run outputs found in {out!r}")
    text = "\n".join(lines) + "\n"
    with open(os.path.join(out, "summary.txt"), "w") as fh:
        fh.write(text)
    if not quiet:
        sys.stdout.write(text)
    return status


# -- entry point -------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    # usage errors share exit code 1 with config errors; argparse would use 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH")
    common.add_argument("--out", metavar="DIR", default=".")
    common.add_argument("--epsilon", type=float, metavar="X")
    common.add_argument("--rmax", type=float, metavar="X")
    common.add_argument("--grid", type=int, metavar="N")
    common.add_argument("--order", type=int, metavar="N")
    common.add_argument("--check", metavar="NAME[,NAME...]")
    common.add_argument("--quiet", action="store_true")
    p = _Parser(prog="riccati-lab", description="Comparison-geometry checks on model manifolds.")
    p.add_argument("--dump-oracles", action="store_true", help="print the oracle table as CSV and exit")
    sub = p.add_subparsers(dest="command")
    for name, text in (
        ("flow", "integrate the radial flow and write one trace CSV per direction"),
        ("check", "run named checks and write verdicts.csv"),
        ("volume", "ball volumes plus Bishop and Bishop-Gromov verdicts"),
        ("scan", "sweep a parameter and tabulate conjugate radii"),
        ("report", "summarise the outputs already in --out"),
    ):
        sub.add_parser(name, parents=[common], help=text)
    return p


COMMANDS = {"flow": cmd_flow, "check": cmd_check, "volume": cmd_volume, "scan": cmd_scan}


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    if args.dump_oracles:
        oracles.dump_oracles(sys.stdout)
        return 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        os.makedirs(args.out, exist_ok=True)
        if args.command == "report":
            return cmd_report(args.out, args.quiet)
        if not args.config:
            raise ConfigError("--config is required")
        cfg = load_config(args.config, args)
        return COMMANDS[args.command](cfg, args.out)
    except FlowError as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, ValidationError, vol.VolumeGateError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
