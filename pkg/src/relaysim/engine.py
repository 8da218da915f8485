"""Trace-driven session simulation.

One session streams ``packet_count`` packets from an endpoint to a user at a
fixed cadence. The sender stamps packet i with Ts = session_start +
i*interval; it arrives at Ta = Ts + path latency (zero-order hold at Ts) and
is handed to the jitter manager in arrival order, which either drops it or
emits it at To. Feedback flows back to the path scheduler over the reverse
direct link; plan updates reach the sender after the forward direct one-way
delay and apply only to packets generated after adoption.

Event order is a single queue sorted by (time, kind, tie) with kind order
arrival < feedback < control < generation, so runs are deterministic and
reports are byte-identical for identical (config, topology, seed).

The session tail: after the last event, both jitter managers flush whatever
they still hold; flushed packets count as delivered with To = end time.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from heapq import heappop, heappush
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, ValidationError
from .estimator import IMPLEMENTATION
from .jitter import JitterConfig, Packet, build_jitter_manager
from .paths import RelayPath, enumerate_paths, prune_topk, warmup_stats
from .reports import MetricsReport, build_report
from .routing import (
    DirectRouter,
    RoutingPlan,
    ThompsonRouter,
    Ucb1Router,
    maybe_update_plan,
    tau0_from_variance,
)
from .traces import Topology

EV_ARRIVAL, EV_FEEDBACK, EV_CONTROL, EV_GEN = 0, 1, 2, 3

ROUTER_KINDS = ("direct", "via_ucb1", "vcroute_ts")

# method name -> (router kind, jitter kind)
METHODS = {
    "drt-bf": ("direct", "buffer"),
    "drt-wm": ("direct", "watermark"),
    "via-bf": ("via_ucb1", "buffer"),
    "via-wm": ("via_ucb1", "watermark"),
    "vcr-wm": ("vcroute_ts", "watermark"),
}


@dataclass
class RouterConfig:
    kind: str = "direct"
    c: float = 1.0                 # UCB1 exploration constant
    confidence: float = 0.95       # pruning confidence level
    prune: bool = True             # False keeps every candidate path

    def __post_init__(self) -> None:
        if self.kind not in ROUTER_KINDS:
            raise ValidationError(f"unknown router kind {self.kind!r}")


@dataclass
class SessionConfig:
    endpoint: str
    user: str
    relays: tuple[str, ...] | None = None  # None: every non-user node except the pair
    packet_count: int = 600_000
    interval_ms: float = 10.0
    warmup_ms: float = 60_000.0
    seed: int = 0
    router: RouterConfig = field(default_factory=RouterConfig)
    jitter: JitterConfig = field(default_factory=JitterConfig)
    loss_threshold: float | None = None

    def __post_init__(self) -> None:
        if self.packet_count < 0:
            raise ValidationError("packet_count cannot be negative")
        if self.interval_ms <= 0 or self.warmup_ms <= 0:
            raise ValidationError("interval_ms and warmup_ms must be positive")


@dataclass
class PacketRecord:
    __slots__ = ("seq", "ts", "ta", "to", "path_id", "fate")
    seq: int
    ts: float
    ta: float
    to: float | None
    path_id: int
    fate: str  # in_flight -> delivered | dropped_late | flushed


@dataclass
class SessionResult:
    report: MetricsReport
    records: list[PacketRecord]


class _PathTickCache:
    """Per-path latency at every generation tick, built lazily per path."""

    def __init__(self, topology: Topology, paths: Sequence[RelayPath], ticks: np.ndarray) -> None:
        self._topology = topology
        self._paths = {p.path_id: p for p in paths}
        self._ticks = ticks
        self._links: dict[tuple[str, str], np.ndarray] = {}
        self._by_path: dict[int, np.ndarray] = {}

    def _link_array(self, src: str, dst: str) -> np.ndarray:
        key = (src, dst)
        arr = self._links.get(key)
        if arr is None:
            trace = self._topology.trace(src, dst)
            idx = np.maximum(
                np.searchsorted(trace.timestamps_ms, self._ticks, side="right") - 1, 0
            )
            arr = trace.latencies_ms[idx]
            self._links[key] = arr
        return arr

    def path_array(self, path_id: int) -> np.ndarray:
        arr = self._by_path.get(path_id)
        if arr is None:
            path = self._paths[path_id]
            arr = np.zeros(self._ticks.size)
            for src, dst in path.links():
                arr = arr + self._link_array(src, dst)
            self._by_path[path_id] = arr
        return arr

    def at(self, path_id: int, tick: int) -> float:
        return float(self.path_array(path_id)[tick])


def _resolve_relays(topology: Topology, cfg: SessionConfig) -> list[str]:
    if cfg.relays is not None:
        return list(cfg.relays)
    return [
        n.name
        for n in topology.nodes
        if n.name not in (cfg.endpoint, cfg.user) and n.role != "user"
    ]


def _check_coverage(topology: Topology, paths: Sequence[RelayPath], needs_reverse: bool,
                    endpoint: str, user: str) -> None:
    missing = []
    for path in paths:
        for link in path.links():
            if not topology.has_link(*link):
                missing.append(link)
    if needs_reverse and not topology.has_link(user, endpoint):
        missing.append((user, endpoint))
    if missing:
        uniq = sorted(set(missing))
        raise ConfigurationError(f"missing traces for links: {uniq}")


def run_session(topology: Topology, cfg: SessionConfig, method: str | None = None) -> SessionResult:
    """Simulate one session and report its metrics.

    ``method`` only labels the report; router/jitter kinds come from cfg.
    """
    topology.node(cfg.endpoint)
    topology.node(cfg.user)
    relays = _resolve_relays(topology, cfg)
    all_paths = enumerate_paths(cfg.endpoint, cfg.user, relays)
    router_kind = cfg.router.kind
    needs_feedback = router_kind != "direct"

    if router_kind == "direct":
        candidate_paths = [all_paths[0]]
    else:
        candidate_paths = all_paths
    _check_coverage(topology, candidate_paths, needs_feedback, cfg.endpoint, cfg.user)

    # candidate set and warm stats
    if router_kind == "direct":
        topk_ids = [0]
        initial_path = 0
        router = DirectRouter(0)
        rng = None
    else:
        stats = warmup_stats(all_paths, topology, cfg.warmup_ms, cfg.interval_ms)
        if cfg.router.prune:
            topk_ids = prune_topk(stats, cfg.router.confidence)
        else:
            topk_ids = [s.path_id for s in stats]
        by_id = {s.path_id: s for s in stats}
        initial_path = min(topk_ids, key=lambda pid: (by_id[pid].mean_ms, pid))
        if router_kind == "via_ucb1":
            router = Ucb1Router(topk_ids, c=cfg.router.c)
        else:
            rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
            priors = [
                (pid, by_id[pid].mean_ms, tau0_from_variance(by_id[pid].std_ms ** 2))
                for pid in topk_ids
            ]
            router = ThompsonRouter(priors, rng)

    t0 = cfg.warmup_ms
    n = cfg.packet_count
    ticks = t0 + np.arange(n) * cfg.interval_ms
    cache = _PathTickCache(topology, all_paths, ticks)
    jm = build_jitter_manager(cfg.jitter, cfg.interval_ms)
    direct_fwd = topology.trace(cfg.endpoint, cfg.user)
    direct_rev = topology.trace(cfg.user, cfg.endpoint) if needs_feedback else None

    plan = RoutingPlan(cfg.endpoint, cfg.user, initial_path, version=1, issued_at_ms=t0)
    active_path = initial_path
    adopted_version = 1
    warm = router.warm_order()

    records: list[PacketRecord | None] = [None] * n
    delivered_latencies: list[float] = []
    path_changes: list[tuple[float, int, int]] = []
    overhead_sum = 0.0
    plan_updates = 0
    control_messages = 0
    dropped_late = 0
    tail_flushed = 0

    heap: list[tuple[float, int, int, float, float]] = []
    ctr = 0

    def push(t: float, kind: int, a: float, b: float) -> None:
        nonlocal ctr
        heappush(heap, (t, kind, ctr, a, b))
        ctr += 1

    if n > 0:
        push(t0, EV_GEN, 0, 0.0)
    end_time = t0

    uninitialized = getattr(router, "uninitialized_ids", None)

    while heap:
        t, kind, _, a, b = heappop(heap)
        end_time = t
        if kind == EV_ARRIVAL:
            seq = int(a)
            rec = records[seq]
            emissions, was_dropped = jm.on_arrival(Packet(seq, rec.ts, t), t)
            if was_dropped:
                rec.fate = "dropped_late"
                dropped_late += 1
                if router.needs_feedback == "e2e":
                    # a dropped packet never plays out, but its lateness at
                    # arrival is known and is the reward signal that lets the
                    # scheduler learn a probed path is slow; without it the
                    # posterior of a bad path never updates (every probe gets
                    # dropped) and exploration is never suppressed
                    avail = t + direct_rev.sample(t)
                    push(avail, EV_FEEDBACK, rec.path_id, t - rec.ts)
            if router.needs_feedback == "transmit":
                send_at = t
                avail = send_at + direct_rev.sample(send_at)
                push(avail, EV_FEEDBACK, rec.path_id, t - rec.ts)
            for em in emissions:
                erec = records[em.seq]
                erec.to = em.out
                erec.fate = "delivered"
                delivered_latencies.append(em.out - erec.ts)
                if router.needs_feedback == "e2e":
                    send_at = em.out if em.out > t else t
                    avail = send_at + direct_rev.sample(send_at)
                    push(avail, EV_FEEDBACK, erec.path_id, em.out - erec.ts)
        elif kind == EV_FEEDBACK:
            router.observe(int(a), b)
            if router.ready():
                selected = router.select()
                old_path = plan.path_id
                plan, issued = maybe_update_plan(plan, selected, t)
                if issued:
                    delay = direct_fwd.sample(t)
                    overhead_sum += delay
                    plan_updates += 1
                    control_messages += 1
                    path_changes.append((t, old_path, selected))
                    push(t + delay, EV_CONTROL, plan.version, selected)
        elif kind == EV_CONTROL:
            version = int(a)
            if version > adopted_version:
                adopted_version = version
                active_path = int(b)
        else:  # EV_GEN
            seq = int(a)
            if seq < len(warm):
                path_id = warm[seq]
            else:
                pending = uninitialized() if uninitialized is not None else []
                if pending:
                    # a candidate arm still has no reward (its warm packet was
                    # dropped); keep cycling those arms until every posterior
                    # is initialized
                    path_id = pending[seq % len(pending)]
                else:
                    path_id = active_path
            ta = t + cache.at(path_id, seq)
            records[seq] = PacketRecord(seq, t, ta, None, path_id, "in_flight")
            push(ta, EV_ARRIVAL, seq, 0.0)
            if seq + 1 < n:
                push(t + cfg.interval_ms, EV_GEN, seq + 1, 0.0)

    for em in jm.flush(end_time):
        erec = records[em.seq]
        erec.to = em.out
        erec.fate = "flushed"
        delivered_latencies.append(em.out - erec.ts)
        tail_flushed += 1

    for rec in records:
        assert rec is None or rec.fate != "in_flight"

    method_label = method or f"{router_kind}+{cfg.jitter.kind}"
    report = build_report(
        method=method_label,
        router_kind=router_kind,
        jitter_kind=cfg.jitter.kind,
        endpoint=cfg.endpoint,
        user=cfg.user,
        seed=cfg.seed,
        packet_count=n,
        interval_ms=cfg.interval_ms,
        warmup_ms=cfg.warmup_ms,
        delivered_latencies=delivered_latencies,
        dropped_late=dropped_late,
        tail_flushed=tail_flushed,
        plan_update_count=plan_updates,
        path_changes=path_changes,
        control_messages=control_messages,
        overhead_sum_ms=overhead_sum,
        candidate_paths=len(all_paths),
        topk_paths=topk_ids,
        estimator_implementation=IMPLEMENTATION,
        loss_threshold=cfg.loss_threshold,
        config={
            "router": {"kind": router_kind, "c": cfg.router.c,
                       "confidence": cfg.router.confidence, "prune": cfg.router.prune},
            "jitter": {"kind": cfg.jitter.kind, "window_ms": cfg.jitter.window_ms,
                       "bin_ms": cfg.jitter.bin_ms, "percentile": cfg.jitter.percentile,
                       "loss_cost_ms": cfg.jitter.loss_cost_ms,
                       "initial_lag_ms": cfg.jitter.initial_lag_ms,
                       "max_lag_ms": cfg.jitter.max_lag_ms,
                       "update_on_drop": cfg.jitter.update_on_drop},
        },
    )
    return SessionResult(report, [r for r in records if r is not None])


def method_config(cfg: SessionConfig, method: str) -> SessionConfig:
    """Specialize a template config to one named method."""
    try:
        router_kind, jitter_kind = METHODS[method]
    except KeyError:
        raise ValidationError(f"unknown method {method!r}; known: {sorted(METHODS)}") from None
    return replace(
        cfg,
        router=replace(cfg.router, kind=router_kind),
        jitter=replace(cfg.jitter, kind=jitter_kind),
    )


def derive_cell_seed(base_seed: int, session_index: int, method_index: int) -> int:
    seq = np.random.SeedSequence([base_seed, session_index, method_index])
    return int(seq.generate_state(1)[0])


@dataclass
class MatrixResult:
    methods: list[str]
    cells: dict[tuple[int, str], MetricsReport]
    method_mean_ms: dict[str, float]
    method_loss: dict[str, float]
    reductions: dict[tuple[str, str], float]


def run_matrix(
    sessions: Sequence[tuple[Topology, SessionConfig]],
    methods: Sequence[str],
) -> MatrixResult:
    """Run every (session, method) cell and tabulate pairwise reductions.

    Each cell gets an rng seed derived from (session seed, session index,
    method index), so results do not depend on execution order. Reductions
    are (base_mean - ours_mean)/base_mean over session-averaged means.
    """
    if not sessions or not methods:
        raise ValidationError("need at least one session and one method")
    cells: dict[tuple[int, str], MetricsReport] = {}
    for s_idx, (topology, cfg) in enumerate(sessions):
        for m_idx, method in enumerate(methods):
            cell_cfg = method_config(cfg, method)
            cell_cfg = replace(cell_cfg, seed=derive_cell_seed(cfg.seed, s_idx, m_idx))
            result = run_session(topology, cell_cfg, method=method)
            cells[(s_idx, method)] = result.report
    return summarize_cells(cells, len(sessions), methods)


def summarize_cells(
    cells: dict[tuple[int, str], MetricsReport],
    n_sessions: int,
    methods: Sequence[str],
) -> MatrixResult:
    method_mean = {
        m: float(np.mean([cells[(s, m)].latency_mean_ms for s in range(n_sessions)]))
        for m in methods
    }
    method_loss = {
        m: float(np.mean([cells[(s, m)].loss_rate for s in range(n_sessions)]))
        for m in methods
    }
    reductions = {}
    for base in methods:
        for ours in methods:
            if base != ours and method_mean[base] > 0:
                reductions[(base, ours)] = (method_mean[base] - method_mean[ours]) / method_mean[base]
    return MatrixResult(list(methods), cells, method_mean, method_loss, reductions)
