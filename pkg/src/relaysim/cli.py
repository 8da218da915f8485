"""Command-line entry point.

Three subcommands:

* ``validate``: parse trace CSVs (files or directories) and print per-link
  diagnostics; every bad file is reported, not just the first.
* ``synth``: generate a synthetic full-mesh topology for one endpoint/user
  pair plus N relays, write its trace CSVs, a topology manifest, and a ready
  to run experiment manifest.
* ``run``: execute the session x method matrix described by an experiment
  manifest and write per-cell JSON reports, CDF CSVs, and a summary CSV.

Experiment manifest (JSON, schema_version 1)::

    {
      "schema_version": 1,
      "topology": "topology.json",        # path relative to the manifest, OR
      "synthetic": {                      # generate on the fly instead
        "relays": 4, "duration_ms": 700000.0, "step_ms": 10.0, "seed": 0,
        "mean_range": [100.0, 200.0], "std_choices": [10.0, 20.0, 30.0],
        "regime": "stationary-gaussian"
      },
      "pairs": [["e0", "u0"]],            # directed endpoint -> user streams
      "methods": ["drt-bf", "drt-wm", "via-bf", "via-wm", "vcr-wm"],
      "defaults": {                       # all keys optional
        "packets": 60000, "interval_ms": 10.0, "warmup_ms": 60000.0,
        "seed": 0, "loss_threshold": null,
        "router": {"c": 1.0, "confidence": 0.95, "prune": true},
        "jitter": {"window_ms": 2000.0, "bin_ms": 1.0, "percentile": 0.95,
                   "loss_cost_ms": 100.0, "initial_lag_ms": 0.0,
                   "max_lag_ms": 10000.0, "update_on_drop": true}
      },
      "output_dir": "results"             # optional
    }

Exactly one of "topology"/"synthetic" must be present. Flags override
manifest fields. Output directory precedence: --out flag, then the manifest
field, then $RELAYSIM_OUT_DIR. Results are written only after the whole
matrix has completed, so a failed run leaves no partial output.

Exit codes: 0 ok, 2 usage, 3 validation, 4 runtime.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from .engine import (
    METHODS,
    ROUTER_KINDS,
    RouterConfig,
    SessionConfig,
    derive_cell_seed,
    run_session,
    summarize_cells,
)
from .errors import ConfigurationError, TraceParseError, ValidationError
from .jitter import JitterConfig
from .paths import path_count, required_links
from .reports import MetricsReport, write_summary_csv
from .traces import (
    REGIMES,
    SyntheticTraceSpec,
    Topology,
    generate_synthetic,
    ingest_trace,
    load_topology,
    save_topology,
    trace_summary,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_RUNTIME = 4

OUT_DIR_ENV = "RELAYSIM_OUT_DIR"
EXPERIMENT_SCHEMA_VERSION = 1

_ROUTER_KEYS = {"c", "confidence", "prune"}
_JITTER_KEYS = {"window_ms", "bin_ms", "percentile", "loss_cost_ms",
                "initial_lag_ms", "max_lag_ms", "update_on_drop"}
_DEFAULT_KEYS = {"packets", "interval_ms", "warmup_ms", "seed",
                 "loss_threshold", "router", "jitter"}


def _usage_error(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_USAGE


def _resolve_out_dir(flag_value: str | None, manifest_value: str | None,
                     manifest_dir: Path | None) -> Path:
    if flag_value:
        return Path(flag_value)
    if manifest_value:
        base = manifest_dir if manifest_dir is not None else Path.cwd()
        return base / manifest_value
    env = os.environ.get(OUT_DIR_ENV)
    if env:
        return Path(env)
    raise ValidationError(
        f"no output directory: pass --out, set the manifest's output_dir, "
        f"or set ${OUT_DIR_ENV}"
    )


# ---------------------------------------------------------------- validate

def cmd_validate(args: argparse.Namespace) -> int:
    files: list[Path] = []
    for raw in args.paths:
        p = Path(raw)
        if p.is_dir():
            files.extend(sorted(p.rglob("*.csv")))
        else:
            files.append(p)
    if not files:
        print("error: no traces found", file=sys.stderr)
        return EXIT_VALIDATION
    failures = 0
    for f in files:
        try:
            trace = ingest_trace(f, unit=args.unit)
        except FileNotFoundError:
            print(f"{f}: ERROR file not found", file=sys.stderr)
            failures += 1
            continue
        except (TraceParseError, ValidationError) as exc:
            print(f"{f}: ERROR {exc}", file=sys.stderr)
            failures += 1
            continue
        s = trace_summary(trace)
        print(
            f"{f}: {s['src']}->{s['dst']} samples={s['samples']} "
            f"duration_ms={s['duration_ms']:.0f} mean_ms={s['mean_ms']:.2f} "
            f"std_ms={s['std_ms']:.2f} min_ms={s['min_ms']:.2f} max_ms={s['max_ms']:.2f}"
        )
    if failures:
        print(f"{failures} of {len(files)} files failed validation", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


# ------------------------------------------------------------------- synth

def _synthetic_topology(relays: int, duration_ms: float, step_ms: float,
                        spec: SyntheticTraceSpec) -> Topology:
    relay_names = [f"r{i}" for i in range(relays)]
    links = required_links("e0", "u0", relay_names, include_reverse=True)
    roles = {"e0": "endpoint", "u0": "user"}
    return generate_synthetic(spec, links, duration_ms, step_ms, roles=roles)


def cmd_synth(args: argparse.Namespace) -> int:
    if args.duration_ms <= 0:
        return _usage_error("--duration-ms must be positive")
    if args.step_ms <= 0:
        return _usage_error("--step-ms must be positive")
    if args.relays < 0:
        return _usage_error("--relays cannot be negative")
    try:
        spec = SyntheticTraceSpec(
            mean_range=(args.mean_range[0], args.mean_range[1]),
            std_choices=tuple(args.std_choices),
            regime=args.regime,
            seed=args.seed,
        )
    except ValidationError as exc:
        return _usage_error(str(exc))
    try:
        out_dir = _resolve_out_dir(args.out, None, None)
    except ValidationError as exc:
        return _usage_error(str(exc))
    topology = _synthetic_topology(args.relays, args.duration_ms, args.step_ms, spec)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = save_topology(topology, out_dir / "topology.json")
    experiment = {
        "schema_version": EXPERIMENT_SCHEMA_VERSION,
        "topology": "topology.json",
        "pairs": [["e0", "u0"]],
        "methods": list(METHODS),
        "defaults": {"seed": args.seed},
    }
    exp_path = out_dir / "experiment.json"
    exp_path.write_text(json.dumps(experiment, indent=2, sort_keys=True) + "\n")
    n_paths = path_count(args.relays)
    print(f"wrote {manifest_path} ({len(topology.traces)} links, "
          f"{args.relays} relays, {n_paths} candidate paths)")
    print(f"wrote {exp_path}")
    return EXIT_OK


# --------------------------------------------------------------------- run

def _load_experiment(path: Path) -> dict:
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ValidationError(f"manifest not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path.name}: {exc}") from None
    if doc.get("schema_version") != EXPERIMENT_SCHEMA_VERSION:
        raise ValidationError(
            f"unsupported experiment schema_version {doc.get('schema_version')!r}"
        )
    if ("topology" in doc) == ("synthetic" in doc):
        raise ValidationError("exactly one of 'topology'/'synthetic' is required")
    pairs = doc.get("pairs")
    if not pairs:
        raise ValidationError("manifest needs a non-empty 'pairs' list")
    for entry in pairs:
        if len(entry) != 2 or entry[0] == entry[1]:
            raise ValidationError(f"bad pair {entry!r}")
    return doc


def _experiment_topology(doc: dict, manifest_dir: Path) -> Topology:
    if "topology" in doc:
        return load_topology(manifest_dir / doc["topology"])
    syn = dict(doc["synthetic"])
    relays = int(syn.pop("relays", 4))
    duration_ms = float(syn.pop("duration_ms", 700_000.0))
    step_ms = float(syn.pop("step_ms", 10.0))
    spec = SyntheticTraceSpec(
        mean_range=tuple(syn.pop("mean_range", (100.0, 200.0))),
        std_choices=tuple(syn.pop("std_choices", (10.0, 20.0, 30.0))),
        regime=syn.pop("regime", "stationary-gaussian"),
        seed=int(syn.pop("seed", 0)),
    )
    if syn:
        raise ValidationError(f"unknown synthetic keys {sorted(syn)}")
    return _synthetic_topology(relays, duration_ms, step_ms, spec)


def _template_config(doc: dict, args: argparse.Namespace, endpoint: str, user: str) -> SessionConfig:
    d = dict(doc.get("defaults", {}))
    unknown = set(d) - _DEFAULT_KEYS
    if unknown:
        raise ValidationError(f"unknown defaults keys {sorted(unknown)}")
    rd = dict(d.get("router", {}))
    jd = dict(d.get("jitter", {}))
    if set(rd) - _ROUTER_KEYS:
        raise ValidationError(f"unknown router keys {sorted(set(rd) - _ROUTER_KEYS)}")
    if set(jd) - _JITTER_KEYS:
        raise ValidationError(f"unknown jitter keys {sorted(set(jd) - _JITTER_KEYS)}")

    def pick(flag, manifest_value, fallback):
        if flag is not None:
            return flag
        if manifest_value is not None:
            return manifest_value
        return fallback

    router = RouterConfig(
        kind="direct",
        c=float(rd.get("c", 1.0)),
        confidence=float(pick(args.confidence, rd.get("confidence"), 0.95)),
        prune=bool(rd.get("prune", True)),
    )
    jitter = JitterConfig(
        kind="watermark",
        window_ms=float(pick(args.window_ms, jd.get("window_ms"), 2000.0)),
        bin_ms=float(jd.get("bin_ms", 1.0)),
        percentile=float(pick(args.percentile, jd.get("percentile"), 0.95)),
        loss_cost_ms=float(jd.get("loss_cost_ms", 100.0)),
        initial_lag_ms=float(jd.get("initial_lag_ms", 0.0)),
        max_lag_ms=float(jd.get("max_lag_ms", 10000.0)),
        update_on_drop=bool(jd.get("update_on_drop", True)),
    )
    threshold = d.get("loss_threshold")
    return SessionConfig(
        endpoint=endpoint,
        user=user,
        packet_count=int(pick(args.packets, d.get("packets"), 60_000)),
        interval_ms=float(pick(args.interval_ms, d.get("interval_ms"), 10.0)),
        warmup_ms=float(d.get("warmup_ms", 60_000.0)),
        seed=int(pick(args.seed, d.get("seed"), 0)),
        router=router,
        jitter=jitter,
        loss_threshold=None if threshold is None else float(threshold),
    )


def _resolve_methods(doc: dict, args: argparse.Namespace) -> list[tuple[str, str, str]]:
    """Returns (label, router_kind, jitter_kind) triples."""
    if args.router or args.jitter:
        router_kind = args.router or "direct"
        jitter_kind = args.jitter or "watermark"
        return [(f"{router_kind}+{jitter_kind}", router_kind, jitter_kind)]
    if args.methods:
        names = [m.strip() for m in args.methods.split(",") if m.strip()]
    else:
        names = list(doc.get("methods", list(METHODS)))
    if not names:
        raise ValidationError("method list is empty")
    triples = []
    for name in names:
        if name not in METHODS:
            raise ValidationError(f"unknown method {name!r}; known: {sorted(METHODS)}")
        router_kind, jitter_kind = METHODS[name]
        triples.append((name, router_kind, jitter_kind))
    return triples


def _run_cell(job: tuple) -> tuple[tuple[int, str], MetricsReport]:
    s_idx, m_idx, label, router_kind, jitter_kind, topology, cfg = job
    cell_cfg = replace(
        cfg,
        router=replace(cfg.router, kind=router_kind),
        jitter=replace(cfg.jitter, kind=jitter_kind),
        seed=derive_cell_seed(cfg.seed, s_idx, m_idx),
    )
    return (s_idx, label), run_session(topology, cell_cfg, method=label).report


def _print_matrix(labels: list[str], method_mean: dict, method_loss: dict,
                  reductions: dict) -> None:
    width = max(len(m) for m in labels) + 2
    print("\nmethod means over sessions:")
    for m in labels:
        print(f"  {m:<{width}} mean={method_mean[m]:9.3f} ms  loss={method_loss[m]:.4%}")
    if len(labels) > 1:
        print("\nmean latency reduction, row vs column baseline ((base-ours)/base):")
        header = " " * (width + 2) + "".join(f"{m:>{width}}" for m in labels)
        print(header)
        for ours in labels:
            row = [f"  {ours:<{width}}"]
            for base in labels:
                if base == ours:
                    row.append(f"{'-':>{width}}")
                else:
                    r = reductions.get((base, ours))
                    row.append(f"{'n/a':>{width}}" if r is None else f"{r:>{width - 1}.1%} ")
            print("".join(row))


def cmd_run(args: argparse.Namespace) -> int:
    manifest_path = Path(args.manifest)
    doc = _load_experiment(manifest_path)
    manifest_dir = manifest_path.parent
    out_dir = _resolve_out_dir(args.out, doc.get("output_dir"), manifest_dir)
    topology = _experiment_topology(doc, manifest_dir)
    pairs = [(str(e), str(u)) for e, u in doc["pairs"]]
    triples = _resolve_methods(doc, args)
    labels = [t[0] for t in triples]
    sessions = [_template_config(doc, args, e, u) for e, u in pairs]

    jobs = args.jobs
    if jobs is None:
        jobs = max(1, min(len(pairs), os.cpu_count() or 1))
    if jobs < 1:
        return _usage_error("--jobs must be >= 1")

    work = [
        (s_idx, m_idx, label, router_kind, jitter_kind, topology, cfg)
        for s_idx, cfg in enumerate(sessions)
        for m_idx, (label, router_kind, jitter_kind) in enumerate(triples)
    ]
    cells: dict[tuple[int, str], MetricsReport] = {}
    if jobs == 1:
        for job in work:
            key, report = _run_cell(job)
            cells[key] = report
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for key, report in pool.map(_run_cell, work):
                cells[key] = report

    matrix = summarize_cells(cells, len(sessions), labels)

    # simulation done; only now touch the filesystem
    out_dir.mkdir(parents=True, exist_ok=True)
    shutil.copyfile(manifest_path, out_dir / "manifest.json")
    effective = {
        "schema_version": EXPERIMENT_SCHEMA_VERSION,
        "manifest": str(manifest_path.resolve()),
        "methods": labels,
        "pairs": [list(p) for p in pairs],
        "sessions": [
            {"endpoint": c.endpoint, "user": c.user, "packets": c.packet_count,
             "interval_ms": c.interval_ms, "warmup_ms": c.warmup_ms, "seed": c.seed}
            for c in sessions
        ],
    }
    (out_dir / "effective_manifest.json").write_text(
        json.dumps(effective, indent=2, sort_keys=True) + "\n"
    )
    ordered = []
    for s_idx in range(len(sessions)):
        for label in labels:
            report = cells[(s_idx, label)]
            stem = f"s{s_idx}_{label.replace('+', '_')}"
            report.write_json(out_dir / f"{stem}.json")
            report.write_cdf_csv(out_dir / f"{stem}_cdf.csv")
            ordered.append(report)
    write_summary_csv(ordered, out_dir / "summary.csv")

    for report in ordered:
        if report.loss_threshold_exceeded:
            print(
                f"warning: s{ordered.index(report)} {report.method} loss rate "
                f"{report.loss_rate:.4f} exceeds threshold {report.loss_threshold}",
                file=sys.stderr,
            )
    _print_matrix(labels, matrix.method_mean_ms, matrix.method_loss, matrix.reductions)
    print(f"\nwrote {len(ordered)} report cells to {out_dir}")
    return EXIT_OK


# -------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relaysim",
        description="Trace-driven relay routing and jitter management simulator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_val = sub.add_parser("validate", help="check trace CSV files")
    p_val.add_argument("paths", nargs="+", help="trace files or directories")
    p_val.add_argument("--unit", choices=("one-way", "rtt"), default="one-way")
    p_val.set_defaults(func=cmd_validate)

    p_syn = sub.add_parser("synth", help="generate a synthetic topology")
    p_syn.add_argument("--relays", type=int, default=4)
    p_syn.add_argument("--duration-ms", type=float, default=700_000.0)
    p_syn.add_argument("--step-ms", type=float, default=10.0)
    p_syn.add_argument("--seed", type=int, default=0)
    p_syn.add_argument("--regime", choices=REGIMES, default="stationary-gaussian")
    p_syn.add_argument("--mean-range", type=float, nargs=2, default=(100.0, 200.0),
                       metavar=("LO", "HI"))
    p_syn.add_argument("--std-choices", type=float, nargs="+", default=(10.0, 20.0, 30.0))
    p_syn.add_argument("--out", help=f"output directory (default ${OUT_DIR_ENV})")
    p_syn.set_defaults(func=cmd_synth)

    p_run = sub.add_parser("run", help="run an experiment manifest")
    p_run.add_argument("manifest", help="experiment manifest JSON")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--packets", type=int)
    p_run.add_argument("--interval-ms", type=float)
    p_run.add_argument("--router", choices=ROUTER_KINDS,
                       help="run a single custom method with this router")
    p_run.add_argument("--jitter", choices=("watermark", "buffer"),
                       help="run a single custom method with this jitter manager")
    p_run.add_argument("--methods", help="comma-separated subset of the named methods")
    p_run.add_argument("--percentile", type=float)
    p_run.add_argument("--window-ms", type=float)
    p_run.add_argument("--confidence", type=float)
    p_run.add_argument("--jobs", type=int, help="parallel worker processes")
    p_run.add_argument("--out", help=f"output directory (default ${OUT_DIR_ENV})")
    p_run.set_defaults(func=cmd_run)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (TraceParseError, ValidationError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001  keep the CLI from tracebacking
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
