"""Shared topology builders for the unit and acceptance tests.

The builders mirror the library's synthetic link sampler but pin explicit
per-link means instead of drawing them, so scenario geometry is readable at
the call site.
"""

from __future__ import annotations

import zlib

import numpy as np

from relaysim import LatencyTrace, Node, Topology
from relaysim.traces import synth_link_samples


def constant_trace(src: str, dst: str, latency_ms: float, duration_ms: float,
                   step_ms: float = 1000.0) -> LatencyTrace:
    ts = np.arange(0.0, duration_ms, step_ms)
    return LatencyTrace(src, dst, ts, np.full(ts.size, latency_ms))


def constant_pair_topology(fwd_ms: float = 50.0, rev_ms: float = 40.0,
                           duration_ms: float = 700_000.0) -> Topology:
    """Two nodes, both directions constant."""
    return Topology(
        [Node("e0", "endpoint"), Node("u0", "user")],
        {
            ("e0", "u0"): constant_trace("e0", "u0", fwd_ms, duration_ms),
            ("u0", "e0"): constant_trace("u0", "e0", rev_ms, duration_ms),
        },
    )


def gaussian_link(src: str, dst: str, mean: float, std: float, seed: int,
                  duration_ms: float, step_ms: float = 10.0,
                  regime: str = "stationary-gaussian") -> LatencyTrace:
    """One link with the library sampler, substream keyed like generate_synthetic."""
    ts = np.arange(0.0, duration_ms, step_ms)
    rng = np.random.default_rng(
        np.random.SeedSequence([seed, zlib.crc32(f"{src}->{dst}".encode())]))
    return LatencyTrace(src, dst, ts, synth_link_samples(rng, mean, std, ts.size, regime))


def burst_direct_topology(seed: int, duration_ms: float) -> Topology:
    """Single e0->u0 link, 150+-30 ms with multiplicative latency bursts.

    100 ms trace step: a burst (geometric mean 20 samples) is a square spike
    lasting seconds, the regime the out-of-order managers are compared under.
    """
    trace = gaussian_link("e0", "u0", 150.0, 30.0, seed, duration_ms,
                         step_ms=100.0, regime="regime-switching-spikes")
    return Topology([Node("e0", "endpoint"), Node("u0", "user")],
                    {("e0", "u0"): trace})


def hetero_topology(seed: int, duration_ms: float) -> Topology:
    """Four relays; one cheap relay path in a field of expensive ones.

    Direct e0->u0 runs 300+-30 ms. The r0 detour costs ~150 ms (75+-7 per
    link); every other link is 175+-10, so every non-r0 detour is >= 350 ms.
    The scheduler's job: find and hold e0->r0->u0.
    """
    relays = ["r0", "r1", "r2", "r3"]
    nodes = [Node("e0", "endpoint"), Node("u0", "user")] + [Node(r, "relay") for r in relays]
    means: dict[tuple[str, str], tuple[float, float]] = {
        ("e0", "u0"): (300.0, 30.0), ("u0", "e0"): (300.0, 30.0),
        ("e0", "r0"): (75.0, 7.0), ("r0", "u0"): (75.0, 7.0),
    }
    for r in ("r1", "r2", "r3"):
        means[("e0", r)] = (175.0, 10.0)
        means[(r, "u0")] = (175.0, 10.0)
    for a in relays:
        for b in relays:
            if a != b:
                means[(a, b)] = (175.0, 10.0)
    traces = {link: gaussian_link(link[0], link[1], m, s, seed, duration_ms)
              for link, (m, s) in means.items()}
    return Topology(nodes, traces)
