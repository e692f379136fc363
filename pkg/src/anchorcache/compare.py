"""Side-by-side strategy runs over one schedule with identical seeds.

For each strategy the report carries the maximum observed position, how many
post-switch frames {f .. f+n_junction-1} are still reachable in the view at
probe frames (the structural evidence-retention measure), and per-frame region
occupancy. Divergence frames are the first t at which two strategies' latent
checksums differ; None means the runs are identical.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from itertools import combinations
from typing import Any, Optional

from anchorcache.engine import EngineConfig, FrameTrace, run_engine
from anchorcache.errors import SchemaError
from anchorcache.memory import Region
from anchorcache.recache import Strategy
from anchorcache.schedule import PromptSchedule

DEFAULT_PROBE_OFFSETS = (5,)


@dataclass(frozen=True)
class RetentionProbe:
    boundary: int
    probe_frame: int
    count: int

    def to_dict(self) -> dict[str, Any]:
        return {"boundary": self.boundary, "probe": self.probe_frame, "count": self.count}


@dataclass(frozen=True)
class StrategyReport:
    strategy: Strategy
    max_position: int
    retention: tuple[RetentionProbe, ...]
    occupancy: tuple[dict[str, int], ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "strategy": self.strategy.value,
            "max_position": self.max_position,
            "retention": [p.to_dict() for p in self.retention],
            "occupancy": list(self.occupancy),
        }


@dataclass(frozen=True)
class ComparisonReport:
    strategies: tuple[Strategy, ...]
    per_strategy: dict[Strategy, StrategyReport]
    divergence: tuple[tuple[Strategy, Strategy, Optional[int]], ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "strategies": [s.value for s in self.strategies],
            "per_strategy": {s.value: r.to_dict() for s, r in self.per_strategy.items()},
            "divergence": [
                {"a": a.value, "b": b.value, "frame": frame}
                for a, b, frame in self.divergence
            ],
        }


def run_comparison(
    sched: PromptSchedule,
    base_config: EngineConfig,
    strategies: tuple[Strategy, ...],
    probe_offsets: tuple[int, ...] = DEFAULT_PROBE_OFFSETS,
) -> ComparisonReport:
    """Run each strategy with identical seeds and summarize the differences."""
    if len(strategies) < 2:
        raise SchemaError("strategies", "comparison needs at least two strategies")
    if len(set(strategies)) != len(strategies):
        raise SchemaError("strategies", "strategies must be distinct")
    probes = _probe_frames(sched, base_config, probe_offsets)
    traces: dict[Strategy, list[FrameTrace]] = {}
    reports: dict[Strategy, StrategyReport] = {}
    for strategy in strategies:
        config = replace(base_config, strategy=strategy)
        run = run_engine(sched, config)
        traces[strategy] = run
        reports[strategy] = _summarize(strategy, run, sched, base_config, probes)
    divergence = []
    for a, b in combinations(strategies, 2):
        divergence.append((a, b, _divergence_frame(traces[a], traces[b])))
    return ComparisonReport(
        strategies=tuple(strategies),
        per_strategy=reports,
        divergence=tuple(divergence),
    )


def _probe_frames(
    sched: PromptSchedule, config: EngineConfig, offsets: tuple[int, ...]
) -> list[tuple[int, int]]:
    """(boundary, probe frame) pairs; probes past the horizon are dropped."""
    lead = config.cache.window + config.cache.n_junction
    pairs = []
    for f in sched.boundaries:
        for offset in offsets:
            probe = f + lead + offset
            if probe < sched.total_frames:
                pairs.append((f, probe))
    return pairs


def _summarize(
    strategy: Strategy,
    run: list[FrameTrace],
    sched: PromptSchedule,
    config: EngineConfig,
    probes: list[tuple[int, int]],
) -> StrategyReport:
    max_position = 0
    occupancy = []
    for trace in run:
        max_position = max(max_position, trace.query_position)
        counts = {r.value: 0 for r in Region}
        for e in trace.regions:
            counts[e.region.value] += 1
            max_position = max(max_position, e.position)
        occupancy.append({"t": trace.t, **counts})
    retention = []
    n_j = config.cache.n_junction
    for boundary, probe in probes:
        view_frames = {e.frame for e in run[probe].regions}
        wanted = set(range(boundary, boundary + n_j))
        retention.append(
            RetentionProbe(boundary=boundary, probe_frame=probe, count=len(wanted & view_frames))
        )
    return StrategyReport(
        strategy=strategy,
        max_position=max_position,
        retention=tuple(retention),
        occupancy=tuple(occupancy),
    )


def _divergence_frame(a: list[FrameTrace], b: list[FrameTrace]) -> Optional[int]:
    for ta, tb in zip(a, b):
        if ta.latent_checksum != tb.latent_checksum:
            return ta.t
    return None
