"""Latency traces, topologies, and synthetic trace generation.

A trace is a time-ordered series of one-way latency samples for one directed
link. Lookups use zero-order hold: the value at time t is the latest sample at
or before t, the first sample before the trace starts, and the last sample
after it ends.

Trace CSV format (one directed link per file)::

    timestamp_ms,src_node,dst_node,latency_ms
    0,A,B,100.0
    1000,A,B,104.5

Lines starting with ``#`` are comments. A topology manifest (JSON) lists the
nodes with their roles and maps each directed link to its trace file; see
``load_topology`` / ``save_topology``.
"""

from __future__ import annotations

import csv
import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import TraceParseError, ValidationError

ROLES = ("endpoint", "relay", "user")

MANIFEST_SCHEMA_VERSION = 1

# Spike regime constants: per-sample burst start probability, multiplicative
# factor range, and geometric burst duration (mean, in samples).
SPIKE_PROB = 0.01
SPIKE_FACTOR_RANGE = (2.0, 10.0)
SPIKE_MEAN_DURATION = 20

REGIMES = ("stationary-gaussian", "regime-switching-spikes")


@dataclass(frozen=True)
class Node:
    name: str
    role: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValidationError(f"unknown role {self.role!r} for node {self.name!r}")


class LatencyTrace:
    """One-way latency samples for a single directed link."""

    __slots__ = ("src", "dst", "timestamps_ms", "latencies_ms")

    def __init__(self, src: str, dst: str, timestamps_ms, latencies_ms) -> None:
        ts = np.asarray(timestamps_ms, dtype=np.float64)
        lat = np.asarray(latencies_ms, dtype=np.float64)
        if ts.ndim != 1 or lat.ndim != 1 or ts.shape != lat.shape:
            raise ValidationError("timestamps and latencies must be 1-d and equal length")
        if ts.size == 0:
            raise ValidationError(f"trace {src}->{dst} has no samples")
        if ts.size > 1 and not np.all(np.diff(ts) > 0):
            raise ValidationError(f"trace {src}->{dst} timestamps must be strictly increasing")
        if not np.all(np.isfinite(lat)) or not np.all(lat > 0):
            raise ValidationError(f"trace {src}->{dst} latencies must be positive and finite")
        self.src = src
        self.dst = dst
        self.timestamps_ms = ts
        self.latencies_ms = lat

    @property
    def link(self) -> tuple[str, str]:
        return (self.src, self.dst)

    def __len__(self) -> int:
        return int(self.timestamps_ms.size)

    def __repr__(self) -> str:
        return f"LatencyTrace({self.src}->{self.dst}, n={len(self)})"

    def sample(self, t_ms: float) -> float:
        """Zero-order-hold lookup at time t_ms."""
        idx = int(np.searchsorted(self.timestamps_ms, t_ms, side="right")) - 1
        if idx < 0:
            idx = 0
        return float(self.latencies_ms[idx])


def sample_latency(trace: LatencyTrace, t_ms: float) -> float:
    return trace.sample(t_ms)


def ingest_trace(path: str | Path, unit: str = "one-way") -> LatencyTrace:
    """Parse a trace CSV for one directed link.

    Args:
        path: CSV file with header timestamp_ms,src_node,dst_node,latency_ms.
        unit: "one-way" keeps values as-is; "rtt" halves them (symmetric links).

    Raises:
        TraceParseError: malformed row, with the offending line number.
        ValidationError: empty trace, non-monotonic timestamps, mixed links,
            or nonpositive latencies.
    """
    if unit not in ("one-way", "rtt"):
        raise ValidationError(f"unknown unit {unit!r}")
    path = Path(path)
    timestamps: list[float] = []
    latencies: list[float] = []
    link: tuple[str, str] | None = None
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header_seen = False
        for lineno, row in enumerate(reader, start=1):
            if not row or (row[0].lstrip().startswith("#")):
                continue
            if not header_seen:
                header_seen = True
                if row[0].strip().lower() == "timestamp_ms":
                    continue
                # no header row: fall through and parse it as data
            if len(row) != 4:
                raise TraceParseError(f"{path.name} line {lineno}: expected 4 columns, got {len(row)}")
            try:
                t = float(row[0])
                lat = float(row[3])
            except ValueError as exc:
                raise TraceParseError(f"{path.name} line {lineno}: {exc}") from None
            src, dst = row[1].strip(), row[2].strip()
            if link is None:
                link = (src, dst)
            elif (src, dst) != link:
                raise ValidationError(
                    f"{path.name} line {lineno}: mixed links in one file "
                    f"({link[0]}->{link[1]} then {src}->{dst})"
                )
            timestamps.append(t)
            latencies.append(lat)
    if link is None:
        raise ValidationError(f"{path.name}: no samples")
    values = np.asarray(latencies, dtype=np.float64)
    if unit == "rtt":
        values = values / 2.0
    return LatencyTrace(link[0], link[1], np.asarray(timestamps, dtype=np.float64), values)


def write_trace_csv(trace: LatencyTrace, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp_ms", "src_node", "dst_node", "latency_ms"])
        for t, lat in zip(trace.timestamps_ms, trace.latencies_ms):
            writer.writerow([repr(float(t)), trace.src, trace.dst, repr(float(lat))])


@dataclass
class Topology:
    """A node set plus one latency trace per directed link."""

    nodes: list[Node]
    traces: dict[tuple[str, str], LatencyTrace] = field(default_factory=dict)

    def __post_init__(self) -> None:
        names = [n.name for n in self.nodes]
        if len(set(names)) != len(names):
            raise ValidationError("duplicate node names")
        self._by_name = {n.name: n for n in self.nodes}
        for link, trace in self.traces.items():
            if trace.link != link:
                raise ValidationError(f"trace keyed {link} carries link {trace.link}")
            for name in link:
                if name not in self._by_name:
                    raise ValidationError(f"trace references unknown node {name!r}")

    def node(self, name: str) -> Node:
        try:
            return self._by_name[name]
        except KeyError:
            raise ValidationError(f"unknown node {name!r}") from None

    def node_names(self) -> list[str]:
        return [n.name for n in self.nodes]

    def has_link(self, src: str, dst: str) -> bool:
        return (src, dst) in self.traces

    def trace(self, src: str, dst: str) -> LatencyTrace:
        try:
            return self.traces[(src, dst)]
        except KeyError:
            raise ValidationError(f"no trace for link {src}->{dst}") from None

    def latency(self, src: str, dst: str, t_ms: float) -> float:
        return self.trace(src, dst).sample(t_ms)


@dataclass(frozen=True)
class SyntheticTraceSpec:
    """Parameters for synthetic link traces.

    Per-link means are drawn uniformly from mean_range and stds uniformly from
    std_choices, using a substream keyed on (seed, link name) so the result
    does not depend on link enumeration order.
    """

    mean_range: tuple[float, float] = (100.0, 200.0)
    std_choices: tuple[float, ...] = (10.0, 20.0, 30.0)
    regime: str = "stationary-gaussian"
    seed: int = 0

    def __post_init__(self) -> None:
        lo, hi = self.mean_range
        if not (0 < lo < hi):
            raise ValidationError("mean_range must satisfy 0 < low < high")
        if not self.std_choices or any(s <= 0 for s in self.std_choices):
            raise ValidationError("std_choices must be positive")
        if self.regime not in REGIMES:
            raise ValidationError(f"unknown regime {self.regime!r}")


def _link_rng(seed: int, src: str, dst: str) -> np.random.Generator:
    key = zlib.crc32(f"{src}->{dst}".encode())
    return np.random.default_rng(np.random.SeedSequence([seed, key]))


def synth_link_samples(
    rng: np.random.Generator,
    mean: float,
    std: float,
    n: int,
    regime: str = "stationary-gaussian",
) -> np.ndarray:
    """Draw n positive latency samples for one link.

    The spike regime starts a burst with probability SPIKE_PROB per sample,
    multiplies the base latency by a factor uniform in SPIKE_FACTOR_RANGE, and
    holds it for a geometric duration with mean SPIKE_MEAN_DURATION samples.
    """
    base = rng.normal(mean, std, size=n)
    if regime == "regime-switching-spikes":
        starts = rng.random(n)
        values = np.empty(n)
        remaining = 0
        factor = 1.0
        lo, hi = SPIKE_FACTOR_RANGE
        for i in range(n):
            if remaining == 0 and starts[i] < SPIKE_PROB:
                factor = lo + (hi - lo) * rng.random()
                remaining = int(rng.geometric(1.0 / SPIKE_MEAN_DURATION))
            if remaining > 0:
                values[i] = base[i] * factor
                remaining -= 1
            else:
                values[i] = base[i]
        base = values
    return np.maximum(base, 0.1)


def generate_synthetic(
    spec: SyntheticTraceSpec,
    links: Sequence[tuple[str, str]],
    duration_ms: float,
    step_ms: float,
    roles: Mapping[str, str] | None = None,
) -> Topology:
    """Build a synthetic topology: one trace per listed directed link.

    Deterministic in (spec, links, duration_ms, step_ms); link order does not
    matter. Nodes are inferred from the links; roles defaults to "relay" for
    any node not named in the mapping.
    """
    if not links:
        raise ValidationError("links must be non-empty")
    if duration_ms <= 0 or step_ms <= 0:
        raise ValidationError("duration_ms and step_ms must be positive")
    seen = set()
    for link in links:
        if link in seen:
            raise ValidationError(f"duplicate link {link}")
        seen.add(link)
    roles = dict(roles or {})
    names: list[str] = []
    for src, dst in links:
        for name in (src, dst):
            if name not in names:
                names.append(name)
    nodes = [Node(name, roles.get(name, "relay")) for name in sorted(names)]
    timestamps = np.arange(0.0, duration_ms, step_ms)
    traces = {}
    lo, hi = spec.mean_range
    for src, dst in links:
        rng = _link_rng(spec.seed, src, dst)
        mean = lo + (hi - lo) * rng.random()
        std = float(spec.std_choices[int(rng.integers(len(spec.std_choices)))])
        samples = synth_link_samples(rng, mean, std, timestamps.size, spec.regime)
        traces[(src, dst)] = LatencyTrace(src, dst, timestamps.copy(), samples)
    return Topology(nodes, traces)


def save_topology(topology: Topology, manifest_path: str | Path, trace_dir: str | None = "traces") -> Path:
    """Write every trace to CSV plus a manifest JSON referencing them."""
    manifest_path = Path(manifest_path)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    entries = []
    for (src, dst), trace in sorted(topology.traces.items()):
        rel = f"{src}__{dst}.csv" if not trace_dir else f"{trace_dir}/{src}__{dst}.csv"
        write_trace_csv(trace, manifest_path.parent / rel)
        entries.append({"src": src, "dst": dst, "file": rel, "unit": "one-way"})
    doc = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "nodes": [{"name": n.name, "role": n.role} for n in topology.nodes],
        "traces": entries,
    }
    manifest_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return manifest_path


def load_topology(manifest_path: str | Path) -> Topology:
    """Load a topology manifest and every trace file it references."""
    manifest_path = Path(manifest_path)
    try:
        doc = json.loads(manifest_path.read_text())
    except FileNotFoundError:
        raise ValidationError(f"manifest not found: {manifest_path}") from None
    except json.JSONDecodeError as exc:
        raise TraceParseError(f"{manifest_path.name}: {exc}") from None
    version = doc.get("schema_version")
    if version != MANIFEST_SCHEMA_VERSION:
        raise ValidationError(f"unsupported manifest schema_version {version!r}")
    nodes = [Node(entry["name"], entry["role"]) for entry in doc.get("nodes", [])]
    traces = {}
    for entry in doc.get("traces", []):
        file_path = manifest_path.parent / entry["file"]
        if not file_path.exists():
            raise ValidationError(f"trace file missing: {file_path}")
        trace = ingest_trace(file_path, unit=entry.get("unit", "one-way"))
        if trace.link != (entry["src"], entry["dst"]):
            raise ValidationError(
                f"{file_path.name}: manifest says {entry['src']}->{entry['dst']}, "
                f"file contains {trace.src}->{trace.dst}"
            )
        traces[trace.link] = trace
    return Topology(nodes, traces)


def trace_summary(trace: LatencyTrace) -> dict:
    """Per-link stats used by the validate command."""
    lat = trace.latencies_ms
    ts = trace.timestamps_ms
    return {
        "src": trace.src,
        "dst": trace.dst,
        "samples": int(lat.size),
        "duration_ms": float(ts[-1] - ts[0]),
        "mean_ms": float(np.mean(lat)),
        "std_ms": float(np.std(lat)),
        "min_ms": float(np.min(lat)),
        "max_ms": float(np.max(lat)),
    }
