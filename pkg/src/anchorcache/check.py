"""Offline trace auditor.

Re-derives the expected per-frame segment, boundary, activation flag, region
membership, and positions from nothing but the trace header (config + schedule
+ strategy), then verifies every frame record against them. Each invariant
class reports PASS/FAIL with its violation count and first-violation
coordinates (frame and file line).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

from anchorcache.engine import EngineConfig, FrameTrace
from anchorcache.errors import SchemaError
from anchorcache.memory import Region, reconstruct_regions
from anchorcache.recache import Strategy
from anchorcache.rope import RopeMode, junction_position, local_position
from anchorcache.schedule import PromptSchedule

CHECK_CLASSES = (
    "schedule-consistency",
    "position-bound",
    "region-membership",
    "region-layout",
    "local-contiguity",
)


@dataclass
class CheckResult:
    name: str
    violations: int = 0
    first_frame: Optional[int] = None
    first_line: Optional[int] = None
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def record(self, frame: int, line: int, detail: str) -> None:
        if self.violations == 0:
            self.first_frame = frame
            self.first_line = line
            self.detail = detail
        self.violations += 1

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "passed": self.passed,
            "violations": self.violations,
            "first_frame": self.first_frame,
            "first_line": self.first_line,
            "detail": self.detail,
        }


@dataclass
class CheckReport:
    results: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def to_dict(self) -> dict[str, Any]:
        return {"passed": self.passed, "checks": [r.to_dict() for r in self.results]}


def derived_events(sched: PromptSchedule, config: EngineConfig) -> tuple[dict[int, tuple[int, ...]], list[int]]:
    """Junction refreshes and window restarts implied by (schedule, strategy)."""
    refreshes: dict[int, tuple[int, ...]] = {}
    restarts: list[int] = []
    n_j = config.cache.n_junction
    for f in sched.boundaries:
        if config.strategy is Strategy.FLUSH:
            restarts.append(f)
        elif config.strategy is Strategy.ANCHOR and n_j > 0 and f + n_j - 1 < sched.total_frames:
            refreshes[f] = tuple(range(f, f + n_j))
    return refreshes, restarts


def expected_positions(
    t: int,
    pairs: list[tuple[Region, int]],
    boundary: int,
    config: EngineConfig,
) -> tuple[dict[int, int], int]:
    """Frame -> position mapping plus query position for the header's mode."""
    rope = config.rope
    w = config.cache.window
    n_j = config.cache.n_junction
    positions: dict[int, int] = {}
    if config.rope_mode is RopeMode.TRI:
        sink_index = 0
        for region, frame in pairs:
            if region is Region.SINK:
                positions[frame] = sink_index
                sink_index += 1
            elif region is Region.JUNCTION:
                positions[frame] = max(0, junction_position(frame - boundary, t, n_j, w, rope))
            else:
                positions[frame] = local_position(frame - (t - w + 1), t, w, rope)
        query = local_position(w - 1, t, w, rope)
    elif config.rope_mode is RopeMode.BOUNDED:
        for _, frame in pairs:
            positions[frame] = min(frame, rope.p_max)
        query = min(t, rope.p_max)
    else:
        for _, frame in pairs:
            positions[frame] = frame
        query = t
    return positions, query


def check_trace(header: dict[str, Any], frames: list[FrameTrace]) -> CheckReport:
    """Audit parsed trace records against the header's configuration."""
    try:
        sched = PromptSchedule.from_dict(header["schedule"])
        config = EngineConfig.from_dict(header["settings"])
    except (KeyError, TypeError) as exc:
        raise SchemaError("header", f"incomplete header: {exc}") from exc
    refreshes, restarts = derived_events(sched, config)
    results = {name: CheckResult(name) for name in CHECK_CLASSES}
    for index, frame in enumerate(frames):
        line = index + 2  # header occupies line 1
        t = frame.t
        _check_schedule(results["schedule-consistency"], frame, line, sched, config)
        bound_breach = None
        if frame.query_position > config.rope.p_max:
            bound_breach = f"query position {frame.query_position} > p_max={config.rope.p_max}"
        for e in frame.regions:
            if e.position > config.rope.p_max:
                bound_breach = bound_breach or (
                    f"frame {e.frame} at position {e.position} > p_max={config.rope.p_max}"
                )
        if bound_breach is not None:
            results["position-bound"].record(t, line, bound_breach)
        expected_pairs = reconstruct_regions(t, sched, config.cache, refreshes, restarts)
        expected_set = {(r.value, f) for r, f in expected_pairs}
        if frame.region_pairs() != expected_set:
            results["region-membership"].record(
                t, line,
                f"regions {sorted(frame.region_pairs())} != expected {sorted(expected_set)}",
            )
        else:
            positions, query = expected_positions(
                t, expected_pairs, sched.last_boundary(t), config
            )
            if frame.query_position != query:
                results["region-layout"].record(
                    t, line, f"query position {frame.query_position}, expected {query}"
                )
            for e in frame.regions:
                if positions.get(e.frame) != e.position:
                    results["region-layout"].record(
                        t, line,
                        f"frame {e.frame} at position {e.position}, "
                        f"expected {positions.get(e.frame)}",
                    )
        local = [e.frame for e in frame.regions if e.region is Region.LOCAL]
        if local:
            contiguous = local == list(range(local[0], local[0] + len(local)))
            if not contiguous or local[-1] != t - 1:
                results["local-contiguity"].record(
                    t, line, f"local frames {local} not contiguous up to {t - 1}"
                )
    return CheckReport(results=[results[name] for name in CHECK_CLASSES])


def _check_schedule(
    result: CheckResult,
    frame: FrameTrace,
    line: int,
    sched: PromptSchedule,
    config: EngineConfig,
) -> None:
    t = frame.t
    expected_segment = sched.active_segment(t)
    expected_boundary = sched.last_boundary(t)
    expected_delta = sched.junction_active(
        t, config.cache.n_junction, config.cache.window
    )
    if frame.segment != expected_segment:
        result.record(t, line, f"segment {frame.segment}, expected {expected_segment}")
    elif frame.boundary != expected_boundary:
        result.record(t, line, f"boundary {frame.boundary}, expected {expected_boundary}")
    elif frame.delta != expected_delta:
        result.record(t, line, f"delta {frame.delta}, expected {expected_delta}")
