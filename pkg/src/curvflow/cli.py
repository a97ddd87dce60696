"""Command-line front end.

Subcommands: ``flow`` (run a flow, emit snapshots/metrics/manifest),
``metrics`` (measure evolved meshes against a reference), ``oracle``
(analytic-flow comparison harness), ``plot`` (render a metrics CSV).

Exit codes are stable and scriptable: 0 success, 1 usage/schema/IO
errors, 2 numerical singularity (a flow that terminated early, or an
oracle case that failed its tolerance).
"""

from __future__ import annotations

import argparse
import csv as csv_mod
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, flow, oracle
from .errors import ConnectivityMismatchError, CurvflowError, SchemaError
from .fem import assemble_mass, assemble_stiffness, dirichlet_energy
from .mesh import surface_area
from .mesh_io import FORMATS, load_mesh, save_mesh
from .metrics import (
    CSV_COLUMNS,
    energy_decomposition_from_spectrum,
    qc_error,
    sphericity_variance,
    stretch_spectrum,
    vertex_masses,
)
from .shapes import generate, parse_spec, spec_to_string

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SINGULAR = 2


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; 2 is reserved for singularities here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _out_dir(arg: str | None) -> Path:
    out = Path(arg or os.environ.get("CURVFLOW_OUT", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


def write_manifest(path: Path, command: str, config: dict, status: str,
                   outputs: list, started: str, extra: dict | None = None) -> None:
    """Record everything needed to re-run the experiment bit-identically."""
    entries = []
    for p in outputs:
        p = Path(p)
        entries.append({
            "path": p.name,
            "bytes": p.stat().st_size,
            "sha256": _sha256(p),
        })
    doc = {
        "tool": "curvflow",
        "version": __version__,
        "command": command,
        "config": config,
        "status": status,
        "started": started,
        "finished": _utcnow(),
        "outputs": entries,
    }
    if extra:
        doc.update(extra)
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def _parse_snapshots(text: str, steps: int) -> tuple:
    if text == "none":
        return ()
    if text == "pow2":
        out = []
        k = 1
        while k <= steps:
            out.append(k)
            k *= 2
        return tuple(out)
    if text.startswith("every:"):
        k = int(text.split(":", 1)[1])
        if k <= 0:
            raise ValueError("every:K needs K > 0")
        return tuple(range(k, steps + 1, k))
    if text.startswith("list:"):
        return tuple(sorted({int(t) for t in text.split(":", 1)[1].split(",") if t}))
    raise ValueError(f"bad --snapshots value {text!r}")


def _onoff(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="curvflow", description=__doc__)
    parser.add_argument("--version", action="version", version=f"curvflow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("flow", help="run a flow and write snapshots + metrics")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--input", help="mesh file (obj/off/ply)")
    src.add_argument("--shape", help="inline generator spec, e.g. icosphere:3")
    p.add_argument("--flow", dest="variant", choices=flow.VARIANTS)
    p.add_argument("--dt", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--normalize", type=_onoff)
    p.add_argument("--recenter", type=_onoff)
    p.add_argument("--boundary", choices=("none", "fixed"))
    p.add_argument("--snapshots", help="pow2 | every:K | list:a,b,c | none")
    p.add_argument("--out", help="output dir (default $CURVFLOW_OUT or .)")
    p.add_argument("--metrics-csv", dest="metrics_csv")
    p.add_argument("--solver", choices=("direct", "cg"))
    p.add_argument("--stop-eps", dest="stop_eps", type=float)
    p.add_argument("--format", choices=FORMATS, help="snapshot format (default obj)")
    p.add_argument("--basename")
    p.add_argument("--config", help="JSON file mirroring these flags (explicit flags win)")
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("metrics", help="measure evolved meshes against a reference")
    p.add_argument("--reference", required=True)
    p.add_argument("evolved", nargs="+")
    p.add_argument("--csv", default=None, help="write rows here as well as stdout")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("oracle", help="compare discrete flows against analytic radii")
    p.add_argument("--cases", nargs="+", choices=oracle.SHAPES, default=list(oracle.SHAPES))
    p.add_argument("--flows", nargs="+", choices=flow.VARIANTS, default=list(flow.VARIANTS))
    p.add_argument("--dt", type=float, default=None, help="override protocol step size")
    p.add_argument("--steps", type=int, default=None, help="override protocol step count")
    p.add_argument("--quick", action="store_true", help="skip the refinement run")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("plot", help="render convergence/conformality/sphericity panels")
    p.add_argument("--csv", action="append", required=True, help="metrics CSV (repeatable)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CurvflowError as e:
        print(f"curvflow: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"curvflow: {e}", file=sys.stderr)
        return EXIT_USAGE


# ------------------------------------------------------------------ flow

FLOW_DEFAULTS = {
    "input": None, "shape": None, "variant": None, "dt": None,
    "steps": 512, "normalize": True, "recenter": True, "boundary": "none",
    "snapshots": "pow2", "out": None, "metrics_csv": None,
    "solver": "direct", "stop_eps": 0.0, "format": "obj", "basename": None,
}


def _resolve_flow_args(args) -> dict:
    """Defaults, overlaid by the config file, overlaid by explicit flags."""
    resolved = dict(FLOW_DEFAULTS)
    if args.config:
        with open(args.config) as f:
            stored = json.load(f)
        for key, value in stored.items():
            attr = key.replace("-", "_")
            if attr not in FLOW_DEFAULTS:
                raise SchemaError(f"{args.config}: unknown config key {key!r}")
            resolved[attr] = value
    for attr in FLOW_DEFAULTS:
        given = getattr(args, attr)
        if given is not None:
            resolved[attr] = given
    for key in ("normalize", "recenter"):  # accept JSON "on"/"off" strings too
        if isinstance(resolved[key], str):
            resolved[key] = _onoff(resolved[key])
    return resolved


def cmd_flow(args) -> int:
    started = _utcnow()
    opts = _resolve_flow_args(args)
    if (opts["input"] is None) == (opts["shape"] is None):
        print("curvflow flow: exactly one of --input/--shape is required", file=sys.stderr)
        return EXIT_USAGE
    if opts["variant"] is None or opts["dt"] is None:
        print("curvflow flow: --flow and --dt are required", file=sys.stderr)
        return EXIT_USAGE
    if opts["dt"] <= 0:
        print("curvflow flow: --dt must be positive", file=sys.stderr)
        return EXIT_USAGE
    if opts["steps"] < 0:
        print("curvflow flow: --steps must be >= 0", file=sys.stderr)
        return EXIT_USAGE
    try:
        schedule = _parse_snapshots(opts["snapshots"], opts["steps"])
    except ValueError as e:
        print(f"curvflow flow: {e}", file=sys.stderr)
        return EXIT_USAGE

    if opts["shape"]:
        spec = parse_spec(opts["shape"])
        mesh = generate(spec)
        source = spec_to_string(spec)
        basename = opts["basename"] or spec.kind
    else:
        mesh = load_mesh(opts["input"])
        source = str(opts["input"])
        basename = opts["basename"] or Path(opts["input"]).stem

    config = flow.FlowConfig(
        variant=opts["variant"],
        dt=opts["dt"],
        steps=opts["steps"],
        normalize_area=opts["normalize"],
        recenter=opts["recenter"],
        boundary_mode=opts["boundary"],
        snapshot_schedule=schedule,
        stop_eps=opts["stop_eps"],
        solver=opts["solver"],
    )
    config.validate()

    out = _out_dir(opts["out"])
    result = flow.run(mesh, config)
    for w in result.state.warnings:
        print(f"curvflow flow: warning: {w}", file=sys.stderr)

    outputs = []
    for step_index, positions in result.snapshots:
        snap = out / f"{basename}_step{step_index:05d}.{opts['format']}"
        save_mesh(mesh.with_positions(positions), snap)
        outputs.append(snap)

    csv_path = Path(opts["metrics_csv"]) if opts["metrics_csv"] else out / f"{basename}_metrics.csv"
    with open(csv_path, "w") as f:
        f.write(",".join(CSV_COLUMNS) + "\n")
        for record in result.records:
            f.write(record.to_csv_row() + "\n")
    outputs.append(csv_path)

    state = result.state
    status = state.status.value
    config_echo = {
        "source": source,
        "variant": config.variant,
        "dt": config.dt,
        "steps": config.steps,
        "normalize": config.normalize_area,
        "recenter": config.recenter,
        "boundary": config.boundary_mode,
        "snapshots": opts["snapshots"],
        "solver": config.solver,
        "stop_eps": config.stop_eps,
        "format": opts["format"],
    }
    extra = {}
    if state.status is flow.FlowStatus.SINGULAR:
        extra = {"singular_step": state.singular_step, "singular_cause": state.singular_cause}
    write_manifest(out / f"{basename}_manifest.json", "flow", config_echo,
                   status, outputs, started, extra)

    print(f"status: {status} after {state.step} steps (t={state.flow_time:g})")
    if state.status is flow.FlowStatus.SINGULAR:
        print(f"singular at step {state.singular_step}: {state.singular_cause}")
        return EXIT_SINGULAR
    return EXIT_OK


# --------------------------------------------------------------- metrics

METRICS_CSV_COLUMNS = (
    "mesh", "qc_error", "sphericity_variance", "dirichlet_energy",
    "tildeEA", "tildeEC", "area",
)


def cmd_metrics(args) -> int:
    reference = load_mesh(args.reference)
    L0 = assemble_stiffness(reference)
    rows = []
    for path in args.evolved:
        evolved = load_mesh(path)
        if not np.array_equal(reference.faces, evolved.faces):
            raise ConnectivityMismatchError(
                f"{path} does not share the reference connectivity"
            )
        spectrum = stretch_spectrum(reference, evolved.vertices)
        ea, ec, _ = energy_decomposition_from_spectrum(spectrum)
        masses = vertex_masses(assemble_mass(evolved))
        rows.append((
            str(path),
            qc_error(spectrum),
            sphericity_variance(evolved.vertices, masses),
            dirichlet_energy(L0, evolved.vertices),
            ea,
            ec,
            surface_area(evolved),
        ))
    lines = [",".join(METRICS_CSV_COLUMNS)]
    for row in rows:
        lines.append(row[0] + "," + ",".join(f"{v:.17g}" for v in row[1:]))
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.csv:
        with open(args.csv, "w") as f:
            f.write(text)
    return EXIT_OK


# ---------------------------------------------------------------- oracle

def cmd_oracle(args) -> int:
    started = _utcnow()
    out = _out_dir(args.out)
    cases = [
        oracle.AnalyticCase(shape=shape, flow=variant)
        for shape in args.cases
        for variant in args.flows
    ]

    def run_one(case):
        spec, dt, steps = oracle.default_protocol(case.shape)
        return oracle.compare_discrete(
            case, spec,
            dt=args.dt or dt,
            steps=args.steps or steps,
            estimate_order=not args.quick,
        )

    jobs = max(1, min(args.jobs, len(cases)))
    if jobs == 1:
        reports = [run_one(c) for c in cases]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(run_one, cases))

    outputs = []
    summary_lines = []
    for report in reports:
        case = report.case
        case_csv = out / f"oracle_{case.shape}_{case.flow}.csv"
        with open(case_csv, "w") as f:
            for line in report.csv_rows():
                f.write(line + "\n")
        outputs.append(case_csv)
        line = report.to_text()
        summary_lines.append(line)
        print(line)
    summary = out / "oracle_summary.txt"
    with open(summary, "w") as f:
        f.write("\n".join(summary_lines) + "\n")
    outputs.append(summary)

    all_pass = all(r.passed for r in reports)
    write_manifest(
        out / "oracle_manifest.json", "oracle",
        {"cases": args.cases, "flows": args.flows, "dt": args.dt,
         "steps": args.steps, "quick": args.quick},
        "pass" if all_pass else "fail", outputs, started,
    )
    return EXIT_OK if all_pass else EXIT_SINGULAR


# ------------------------------------------------------------------ plot

def read_metrics_csv(path) -> dict:
    """Parse a metrics CSV into column lists; SchemaError on any deviation."""
    with open(path, newline="") as f:
        reader = csv_mod.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if tuple(header) != CSV_COLUMNS:
            raise SchemaError(f"{path}: header {header} != {list(CSV_COLUMNS)}")
        cols: dict = {name: [] for name in CSV_COLUMNS}
        rows = 0
        for row in reader:
            if len(row) != len(CSV_COLUMNS):
                raise SchemaError(f"{path}: row with {len(row)} fields")
            for name, value in zip(CSV_COLUMNS, row):
                if name == "status":
                    cols[name].append(value)
                else:
                    try:
                        cols[name].append(float(value))
                    except ValueError:
                        raise SchemaError(f"{path}: non-numeric {name}={value!r}") from None
            rows += 1
    if rows == 0:
        raise SchemaError(f"{path}: no data rows")
    return cols


def cmd_plot(args) -> int:
    from .plotting import plot_metrics

    series = {}
    for path in args.csv:
        label = Path(path).stem
        if label in series:
            label = str(path)
        series[label] = read_metrics_csv(path)
    written = plot_metrics(series, _out_dir(args.out))
    for path in written:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
