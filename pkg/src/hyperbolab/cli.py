"""Batch front-end: experiment configs in, reports and plot-ready CSV out.

A config is a JSON document::

    {
      "maps": {
        "m":    {"fixture": "ulam"},
        "m2":   {"file": "maps/custom.json"},
        "m3":   {"label": "...", "domain": ["0", "1"], "family": {...}}
      },
      "tasks": [
        {"task": "ce", "map": "m", "n": 200},
        {"task": "conjugacy", "map": "m", "target": "m2", "depth": 12}
      ],
      "seed": 0,
      "output_dir": "runs/demo"
    }

Numeric fields are exact-decimal or rational strings and survive
round-trips bit-exactly. Task failures with a clear hypothesis cause are
results, not crashes; runs are deterministic given config and seed, with
wall-clock and timestamps isolated in the report's telemetry block.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import mpmath
import numpy as np

from . import __version__
from .conjugacy import build_conjugacy, holder_fit, invariance_report, table_pairs
from .errors import ConfigError, DynamicsError, HypothesisError
from .fixtures import FIXTURES, fixture, fixture_names
from .hyperbolicity import ce_fit, recurrence_fit, recurrence_series, slow_recurrence_stat
from .mapkit import MapSpec, load_map, map_from_dict, map_to_dict, to_fraction
from .orbit import PrecisionPolicy, critical_orbit, repelling_check
from .pullback import (
    esc_fit,
    quasi_chain,
    sample_distortion_probes,
    shrink_to_ce_bound,
    tce_density,
)

__all__ = ["ExperimentConfig", "RunReport", "emit_report", "main", "run_analysis"]

TASK_KINDS = (
    "orbit",
    "repelling",
    "ce",
    "recurrence",
    "slow-recurrence",
    "tce",
    "esc",
    "koebe",
    "quasi-chain",
    "shrink-bound",
    "conjugacy",
    "invariance",
)


@dataclass(frozen=True)
class TaskConfig:
    name: str
    kind: str
    map_label: str
    params: dict


@dataclass(frozen=True)
class ExperimentConfig:
    maps: dict
    tasks: tuple[TaskConfig, ...]
    seed: int
    output_dir: str | None


@dataclass
class RunReport:
    config: dict
    tasks: list
    versions: dict
    telemetry: dict


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------


def _parse_number(value, path: str) -> Fraction:
    try:
        return Fraction(str(value))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"cannot parse number {value!r}", field_path=path) from None


def parse_config(doc: dict, base_dir: Path | None = None) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    maps = {}
    raw_maps = doc.get("maps", {})
    if not isinstance(raw_maps, dict):
        raise ConfigError("'maps' must be an object", field_path="maps")
    for label, md in raw_maps.items():
        path = f"maps.{label}"
        if not isinstance(md, dict):
            raise ConfigError("map definition must be an object", field_path=path)
        try:
            if "fixture" in md:
                spec = fixture(md["fixture"])
            elif "file" in md:
                fpath = Path(md["file"])
                if base_dir is not None and not fpath.is_absolute():
                    fpath = base_dir / fpath
                spec = load_map(fpath)
            else:
                spec = map_from_dict({**md, "label": md.get("label", label)})
        except (DynamicsError, KeyError, ValueError, OSError) as exc:
            raise ConfigError(f"invalid map definition: {exc}", field_path=path) from exc
        maps[label] = spec
    tasks = []
    raw_tasks = doc.get("tasks", [])
    if not isinstance(raw_tasks, list):
        raise ConfigError("'tasks' must be a list", field_path="tasks")
    for i, td in enumerate(raw_tasks):
        path = f"tasks[{i}]"
        if not isinstance(td, dict) or "task" not in td:
            raise ConfigError("task entry needs a 'task' field", field_path=path)
        kind = td["task"]
        if kind not in TASK_KINDS:
            raise ConfigError(f"unknown task kind {kind!r}", field_path=f"{path}.task")
        map_label = td.get("map")
        if map_label not in maps:
            raise ConfigError(
                f"task references undefined map {map_label!r}",
                field_path=f"{path}.map",
            )
        target = td.get("target")
        if target is not None and target not in maps:
            raise ConfigError(
                f"task references undefined map {target!r}",
                field_path=f"{path}.target",
            )
        params = {k: v for k, v in td.items() if k not in ("task", "map", "name")}
        tasks.append(
            TaskConfig(
                name=td.get("name", f"{kind}-{i}"),
                kind=kind,
                map_label=map_label,
                params=params,
            )
        )
    seed = doc.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("'seed' must be an integer", field_path="seed")
    out = doc.get("output_dir")
    return ExperimentConfig(maps=maps, tasks=tuple(tasks), seed=seed, output_dir=out)


def config_to_dict(config: ExperimentConfig) -> dict:
    return {
        "maps": {label: map_to_dict(m) for label, m in sorted(config.maps.items())},
        "tasks": [
            {"name": t.name, "task": t.kind, "map": t.map_label, **t.params}
            for t in config.tasks
        ],
        "seed": config.seed,
        "output_dir": config.output_dir,
    }


# ---------------------------------------------------------------------------
# json-safe conversion
# ---------------------------------------------------------------------------


def to_jsonable(obj):
    """Recursively convert results to JSON-safe values.

    Extended-precision numbers become exact ``p/q`` strings tagged with
    their certified precision context where the caller recorded one, so
    re-parsing loses nothing.
    """
    if obj is None or isinstance(obj, (bool, int, str)):
        return obj
    if isinstance(obj, float):
        if obj != obj:
            return "nan"
        if obj == float("inf"):
            return "inf"
        if obj == float("-inf"):
            return "-inf"
        return obj
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, mpmath.mpf):
        return str(to_fraction(obj))
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return to_jsonable(obj.item())
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {
            f.name: to_jsonable(getattr(obj, f.name))
            for f in dataclasses.fields(obj)
        }
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if hasattr(obj, "to_floats"):
        return list(obj.to_floats())
    return str(obj)


# ---------------------------------------------------------------------------
# task execution
# ---------------------------------------------------------------------------


def _policy_from(params: dict) -> PrecisionPolicy:
    kwargs = {}
    for key in ("min_certified", "guard_bits", "max_bits"):
        if key in params:
            kwargs[key] = int(params[key])
    return PrecisionPolicy(**kwargs)


def _run_task(task: TaskConfig, config: ExperimentConfig) -> tuple[dict, dict]:
    spec: MapSpec = config.maps[task.map_label]
    p = task.params
    policy = _policy_from(p)
    seed = int(p.get("seed", config.seed))
    series: dict[str, list] = {}
    kind = task.kind
    if kind == "orbit":
        c = spec.critical_points[int(p.get("critical_index", 0))]
        rec = critical_orbit(spec, c, int(p.get("n", 100)), policy, exact=bool(p.get("exact", False)))
        series["orbit"] = [
            [k, str(to_fraction(rec.points[k]) if not rec.exact else rec.points[k]),
             str(to_fraction(rec.deriv_factors[k]) if not rec.exact else rec.deriv_factors[k]),
             rec.certified_bits[k]]
            for k in range(len(rec))
        ]
        result = {
            "entries": len(rec),
            "precision_bits": rec.precision_bits,
            "min_certified_bits": rec.min_certified,
            "exact": rec.exact,
        }
    elif kind == "repelling":
        rep = repelling_check(spec, int(p.get("max_period", 6)))
        result = to_jsonable(rep)
    elif kind == "ce":
        c = spec.critical_points[int(p.get("critical_index", 0))]
        rec = critical_orbit(spec, c, int(p.get("n", 200)), policy)
        result = to_jsonable(ce_fit(rec))
    elif kind == "recurrence":
        c = spec.critical_points[int(p.get("critical_index", 0))]
        n = int(p.get("n", 200))
        d = recurrence_series(spec, c, n, policy)
        series["d_n"] = [[k + 1, d[k]] for k in range(len(d))]
        result = {
            model: to_jsonable(recurrence_fit(d, model))
            for model in p.get("models", ["ser", "er", "pr"])
        }
    elif kind == "slow-recurrence":
        c = spec.critical_points[int(p.get("critical_index", 0))]
        n = int(p.get("n", 200))
        d = recurrence_series(spec, c, n, policy)
        deltas = [float(_parse_number(x, "deltas")) for x in p.get("deltas", ["0.2", "0.1", "0.05"])]
        result = {
            str(delta): to_jsonable(slow_recurrence_stat(d, delta, n))
            for delta in deltas
        }
    elif kind == "tce":
        x = float(_parse_number(p.get("x", "0.5"), "x"))
        result = to_jsonable(
            tce_density(
                spec,
                x,
                int(p.get("N", 40)),
                float(_parse_number(p.get("r", "0.1"), "r")),
                int(p.get("D", 2)),
                policy,
            )
        )
    elif kind == "esc":
        delta = float(_parse_number(p.get("delta", "0.1"), "delta"))
        count = int(p.get("probes", 16))
        a, b = spec.domain_floats
        centers = np.linspace(a + delta / 2, b - delta / 2, count)
        probes = [(x - delta / 2, x + delta / 2) for x in centers]
        fit = esc_fit(spec, delta, int(p.get("N", 10)), probes)
        series["max_diameters"] = [
            [k + 1, fit.max_diameters[k]] for k in range(len(fit.max_diameters))
        ]
        result = to_jsonable(fit)
    elif kind == "koebe":
        probes = sample_distortion_probes(
            spec,
            int(p.get("count", 20)),
            int(p.get("s_max", 10)),
            float(_parse_number(p.get("tau", "0.5"), "tau")),
            seed=seed,
        )
        series["distortion_ratios"] = [
            [pr.steps, pr.ratio] for pr in probes
        ]
        result = {
            "count": len(probes),
            "max_ratio": max((pr.ratio for pr in probes), default=None),
            "probes": to_jsonable(probes),
        }
    elif kind == "quasi-chain":
        cert = quasi_chain(
            spec,
            float(_parse_number(p.get("v", float(spec.f(spec.critical_points[0].location))), "v")),
            int(p.get("n", 100)),
            float(_parse_number(p.get("eta", "0.1"), "eta")),
            policy=policy,
        )
        result = to_jsonable(cert)
        if not cert.hypotheses_verified:
            raise HypothesisError("quasi-chain hypotheses failed verification")
    elif kind == "shrink-bound":
        cert = shrink_to_ce_bound(
            spec,
            float(_parse_number(p.get("v", float(spec.f(spec.critical_points[0].location))), "v")),
            int(p.get("n", 20)),
            float(_parse_number(p.get("C_alpha", "0.5"), "C_alpha")),
            float(_parse_number(p.get("alpha_rec", "0.001"), "alpha_rec")),
            float(_parse_number(p["lam"], "lam")),
            float(_parse_number(p["M"], "M")),
            float(_parse_number(p.get("delta0", "0.05"), "delta0")),
            policy,
        )
        result = to_jsonable(cert)
        if not cert.diffeo_verified:
            raise HypothesisError(
                f"chain meets the critical set at {cert.failed_indices}"
            )
    elif kind == "conjugacy":
        target = config.maps[task.params["target"]]
        table = build_conjugacy(spec, target, int(p.get("depth", 10)), policy=policy)
        pairs = table_pairs(table, seed=seed)
        fwd = holder_fit(pairs, "forward")
        bwd = holder_fit(pairs, "backward")
        series["holder_pairs"] = [
            [float(a), float(b), float(c2), float(d2)]
            for a, b, c2, d2 in pairs[:5000].tolist()
        ]
        result = {
            "table_size": len(table),
            "depth": table.depth,
            "bracket_width": table.bracket_width,
            "holder_forward": to_jsonable(fwd),
            "holder_backward": to_jsonable(bwd),
        }
    elif kind == "invariance":
        target = config.maps[task.params["target"]]
        table = build_conjugacy(spec, target, int(p.get("depth", 10)), policy=policy)
        result = to_jsonable(
            invariance_report(
                spec,
                target,
                table,
                horizons=int(p.get("horizons", 200)),
                seed=seed,
                policy=policy,
            )
        )
    else:  # pragma: no cover - guarded by parse_config
        raise ConfigError(f"unhandled task kind {kind!r}")
    return result, series


def run_analysis(config: ExperimentConfig) -> RunReport:
    """Execute every configured task; per-task failures become statuses.

    Tasks run sequentially in config order (a deterministic schedule); all
    underlying operations are pure, so results are independent of ordering.
    """
    tasks_out = []
    wall = {}
    for task in config.tasks:
        t0 = time.perf_counter()
        try:
            result, series = _run_task(task, config)
            status = "ok"
            error = None
        except HypothesisError as exc:
            result, series = {"detail": str(exc)}, {}
            status = "hypothesis-failed"
            error = str(exc)
        except DynamicsError as exc:
            result, series = {}, {}
            status = "error"
            error = f"{type(exc).__name__}: {exc}"
        wall[task.name] = time.perf_counter() - t0
        entry = {
            "name": task.name,
            "task": task.kind,
            "map": task.map_label,
            "status": status,
            "result": result,
            "series": series,
        }
        if error is not None:
            entry["error"] = error
        tasks_out.append(entry)
    versions = {
        "hyperbolab": __version__,
        "mpmath": mpmath.__version__,
        "numpy": np.__version__,
    }
    telemetry = {
        "wall_clock_seconds": {k: round(v, 6) for k, v in wall.items()},
        "started_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    return RunReport(
        config=config_to_dict(config),
        tasks=tasks_out,
        versions=versions,
        telemetry=telemetry,
    )


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------


def report_to_dict(report: RunReport) -> dict:
    return {
        "config": report.config,
        "tasks": report.tasks,
        "versions": report.versions,
        "telemetry": report.telemetry,
    }


def emit_report(report: RunReport | dict, out_dir, fmt: str = "json") -> list[Path]:
    """Write the report (stable field order) and/or its CSV series bundle."""
    doc = report_to_dict(report) if isinstance(report, RunReport) else report
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DynamicsError(f"cannot create output directory {out}: {exc}") from exc
    written = []
    if fmt == "json":
        path = out / "report.json"
        with open(path, "w") as fh:
            json.dump(to_jsonable(doc), fh, indent=2, sort_keys=True)
            fh.write("\n")
        written.append(path)
    elif fmt == "csv-bundle":
        for task in doc["tasks"]:
            for series_name, rows in task.get("series", {}).items():
                path = out / f"{task['name']}.{series_name}.csv"
                with open(path, "w", newline="") as fh:
                    w = csv.writer(fh)
                    for row in rows:
                        w.writerow(row)
                written.append(path)
    else:
        raise ConfigError(f"unknown report format {fmt!r}")
    return written


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------


def _cmd_analyze(args) -> int:
    cfg_path = Path(args.config)
    try:
        doc = json.loads(cfg_path.read_text())
        config = parse_config(doc, base_dir=cfg_path.parent)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        loc = f" at {exc.field_path}" if exc.field_path else ""
        print(f"config error{loc}: {exc}", file=sys.stderr)
        return 1
    out_dir = args.output_dir or config.output_dir or "."
    report = run_analysis(config)
    emit_report(report, out_dir, "json")
    if args.csv:
        emit_report(report, out_dir, "csv-bundle")
    bad = [t for t in report.tasks if t["status"] == "error"]
    for t in report.tasks:
        print(f"{t['name']}: {t['status']}")
    return 2 if bad else 0


def _cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    try:
        doc = json.loads((run_dir / "report.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: cannot read report: {exc}", file=sys.stderr)
        return 1
    emit_report(doc, args.output_dir or run_dir, args.format)
    return 0


def _cmd_fixtures(args) -> int:
    if args.action == "list":
        for name in fixture_names():
            print(f"{name}: {FIXTURES[name][0]}")
        return 0
    name = args.name
    if name is None:
        print("config error: fixtures run needs a fixture name", file=sys.stderr)
        return 1
    try:
        fixture(name)
    except DynamicsError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    doc = {
        "maps": {"m": {"fixture": name}},
        "tasks": [
            {"task": "orbit", "map": "m", "n": 50},
            {"task": "ce", "map": "m", "n": 100},
            {"task": "recurrence", "map": "m", "n": 100},
            {"task": "esc", "map": "m", "delta": "0.1", "N": 8, "probes": 8},
        ],
        "seed": 0,
    }
    config = parse_config(doc)
    report = run_analysis(config)
    out_dir = args.output_dir or f"fixture-{name}"
    emit_report(report, out_dir, "json")
    emit_report(report, out_dir, "csv-bundle")
    for t in report.tasks:
        print(f"{t['name']}: {t['status']}")
    return 2 if any(t["status"] == "error" for t in report.tasks) else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hyperbolab",
        description="growth, recurrence, pull-back and conjugacy analysis "
        "for smooth interval maps",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_an = sub.add_parser("analyze", help="run an experiment config")
    p_an.add_argument("config")
    p_an.add_argument("--output-dir", default=None)
    p_an.add_argument("--csv", action="store_true", help="also emit the CSV bundle")
    p_an.set_defaults(func=_cmd_analyze)

    p_rep = sub.add_parser("report", help="re-emit a stored run report")
    p_rep.add_argument("run_dir")
    p_rep.add_argument("--format", choices=("json", "csv-bundle"), default="json")
    p_rep.add_argument("--output-dir", default=None)
    p_rep.set_defaults(func=_cmd_report)

    p_fx = sub.add_parser("fixtures", help="list or run built-in fixtures")
    p_fx.add_argument("action", choices=("list", "run"))
    p_fx.add_argument("name", nargs="?")
    p_fx.add_argument("--output-dir", default=None)
    p_fx.set_defaults(func=_cmd_fixtures)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
