"""Three-region KV cache: frozen sink, refreshable junction, rolling local window.

The cache state is a value: every transition returns a new state, so snapshots
and replay are trivial. The view assembled for generating frame t contains

  * the sink entries (earliest frames, frozen once full),
  * the junction entries, only once they have left the local window and only
    if they belong to the latest switch,
  * the local entries inside the window ``[t-W+1, t-1]`` (the slot at offset
    W-1 belongs to the frame being generated and is filled at attention time).

Early frames live in both sink and local; assembly dedups by frame index and
keeps the sink copy so softmax weight is not double-counted.

``reconstruct_regions`` / ``reconstruct_oracle`` rebuild the same view by
literal slicing of the full push/refresh/restart history, with no incremental
state — the ground truth the rolling implementation is checked against.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional

import numpy as np

from anchorcache.errors import SequenceError, ShapeError, StateError
from anchorcache.schedule import PromptSchedule


class Region(str, Enum):
    SINK = "sink"
    JUNCTION = "junction"
    LOCAL = "local"


@dataclass(frozen=True, eq=False)
class KVEntry:
    """One frame's per-head key/value tensors, stored unrotated.

    Shapes are (n_heads, tokens_per_frame, head_dim). Rotation happens at
    attention time from the position map, so the same entry can be re-indexed
    as it moves between regions.
    """

    frame: int
    keys: np.ndarray
    values: np.ndarray
    prompt_segment: int
    latent_checksum: str

    def __post_init__(self):
        if self.frame < 0:
            raise StateError(f"frame must be >= 0, got {self.frame}")
        if self.keys.shape != self.values.shape:
            raise StateError(
                f"key shape {self.keys.shape} != value shape {self.values.shape}"
            )


@dataclass(frozen=True)
class CacheConfig:
    """Region capacities: sink size, junction size, local window length."""

    n_sink: int = 3
    n_junction: int = 3
    window: int = 9

    def __post_init__(self):
        if self.n_sink < 0:
            raise StateError("n_sink must be >= 0")
        if self.n_junction < 0:
            raise StateError("n_junction must be >= 0")
        if self.window < 1:
            raise StateError("window must be >= 1")

    @property
    def capacity(self) -> int:
        return self.n_sink + self.n_junction + self.window

    def to_dict(self) -> dict:
        return {"sink": self.n_sink, "junction": self.n_junction, "window": self.window}

    @classmethod
    def from_dict(cls, doc: dict) -> "CacheConfig":
        return cls(n_sink=doc["sink"], n_junction=doc["junction"], window=doc["window"])


@dataclass(frozen=True)
class AnchorMemoryView:
    """Snapshot of the memory conditioning frame t: ordered, deduplicated entries."""

    t: int
    entries: tuple[tuple[Region, KVEntry], ...]
    config: CacheConfig
    junction_boundary: Optional[int] = None

    def frames(self) -> set[int]:
        return {e.frame for _, e in self.entries}

    def region_frames(self, region: Region) -> list[int]:
        return [e.frame for r, e in self.entries if r is region]

    def region_pairs(self) -> set[tuple[str, int]]:
        return {(r.value, e.frame) for r, e in self.entries}


@dataclass
class HistoryLog:
    """Append-only record of everything that ever happened to the cache.

    entries: latest KV per pushed frame; refreshes: boundary -> junction
    frames stored for it; restarts: boundaries where the local window was
    discarded (flush), which window slicing must not reach behind.
    """

    entries: dict[int, KVEntry] = field(default_factory=dict)
    refreshes: dict[int, tuple[int, ...]] = field(default_factory=dict)
    restarts: list[int] = field(default_factory=list)

    def record_push(self, entry: KVEntry) -> None:
        self.entries[entry.frame] = entry

    def record_refresh(self, boundary: int, frames: Iterable[int]) -> None:
        self.refreshes[boundary] = tuple(frames)

    def record_restart(self, boundary: int) -> None:
        self.restarts.append(boundary)


@dataclass(frozen=True)
class CacheState:
    """Value-semantics cache: sink, junction, local deque, retained latents.

    ``local`` holds the last ``window`` pushed frames. ``window_latents``
    mirrors it with the source latents (re-cache input); ``junction_latents``
    keeps the first ``n_junction`` latents of the current segment.
    ``next_frame`` is the only frame ``push_frame`` will accept.
    """

    config: CacheConfig
    sink: tuple[KVEntry, ...] = ()
    junction: tuple[KVEntry, ...] = ()
    junction_boundary: Optional[int] = None
    local: tuple[KVEntry, ...] = ()
    window_latents: tuple[tuple[int, np.ndarray], ...] = ()
    junction_latents: tuple[tuple[int, np.ndarray], ...] = ()
    segment_start: int = 0
    next_frame: int = 0

    @classmethod
    def empty(cls, config: CacheConfig) -> "CacheState":
        return cls(config=config)

    # -- rolling update -----------------------------------------------------

    def push_frame(self, entry: KVEntry, latent: np.ndarray) -> "CacheState":
        """Append one generated frame; evict the oldest local entry past W."""
        if entry.frame != self.next_frame:
            raise SequenceError(
                f"expected frame {self.next_frame}, got {entry.frame}"
            )
        w = self.config.window
        new_local = (self.local + (entry,))[-w:]
        new_sink = self.sink
        if len(self.sink) < self.config.n_sink:
            new_sink = self.sink + (entry,)
        new_window = (self.window_latents + ((entry.frame, latent),))[-w:]
        new_junction_latents = self.junction_latents
        if self.segment_start <= entry.frame < self.segment_start + self.config.n_junction:
            new_junction_latents = tuple(
                jl for jl in self.junction_latents if jl[0] >= self.segment_start
            ) + ((entry.frame, latent),)
        return replace(
            self,
            sink=new_sink,
            local=new_local,
            window_latents=new_window,
            junction_latents=new_junction_latents,
            next_frame=entry.frame + 1,
        )

    def refresh_junction(self, boundary: int, entries: tuple[KVEntry, ...]) -> "CacheState":
        """Replace the junction wholesale with the post-switch frames."""
        n_j = self.config.n_junction
        if len(entries) != n_j:
            raise ShapeError(f"expected {n_j} junction entries, got {len(entries)}")
        expected = list(range(boundary, boundary + n_j))
        got = [e.frame for e in entries]
        if got != expected:
            raise ShapeError(
                f"junction frames {got} are not the contiguous span {expected}"
            )
        return replace(self, junction=tuple(entries), junction_boundary=boundary)

    # -- strategy primitives -------------------------------------------------

    def with_local(self, entries: tuple[KVEntry, ...]) -> "CacheState":
        return replace(self, local=entries)

    def cleared_local(self) -> "CacheState":
        return replace(self, local=())

    def cleared_junction(self) -> "CacheState":
        return replace(self, junction=(), junction_boundary=None)

    def with_segment_start(self, boundary: int) -> "CacheState":
        return replace(self, segment_start=boundary, junction_latents=())

    def latent_for(self, frame: int) -> np.ndarray:
        for f, latent in self.window_latents:
            if f == frame:
                return latent
        raise StateError(f"no retained latent for frame {frame}")

    # -- assembly -------------------------------------------------------------

    def assemble(self, t: int, sched: PromptSchedule) -> AnchorMemoryView:
        """Build the memory view for generating frame t."""
        if t != self.next_frame:
            raise StateError(
                f"cannot assemble for t={t}: frames 0..{self.next_frame - 1} pushed"
            )
        cfg = self.config
        delta = sched.junction_active(t, cfg.n_junction, cfg.window)
        junction: tuple[KVEntry, ...] = ()
        junction_boundary = None
        if delta and self.junction and self.junction_boundary == sched.last_boundary(t):
            junction = self.junction
            junction_boundary = self.junction_boundary
        window_lo = t - cfg.window + 1
        local = tuple(e for e in self.local if e.frame >= window_lo)
        entries: list[tuple[Region, KVEntry]] = []
        seen: set[int] = set()
        for region, group in (
            (Region.SINK, self.sink),
            (Region.JUNCTION, junction),
            (Region.LOCAL, local),
        ):
            for e in group:
                if e.frame in seen:
                    continue
                seen.add(e.frame)
                entries.append((region, e))
        if not any(r is Region.JUNCTION for r, _ in entries):
            junction_boundary = None
        return AnchorMemoryView(
            t=t,
            entries=tuple(entries),
            config=cfg,
            junction_boundary=junction_boundary,
        )


def reconstruct_regions(
    t: int,
    sched: PromptSchedule,
    config: CacheConfig,
    refreshes: dict[int, tuple[int, ...]],
    restarts: Iterable[int] = (),
) -> list[tuple[Region, int]]:
    """Ground-truth (region, frame) list for frame t by slicing the full history.

    No incremental state: sink is the earliest frames, local is the window
    slice bounded below by the last flush restart, junction comes straight
    from the refresh log when the activation condition holds.
    """
    sink = list(range(min(config.n_sink, t)))
    restart_lo = max((b for b in restarts if b <= t), default=0)
    local_lo = max(0, t - config.window + 1, restart_lo)
    local = list(range(local_lo, t))
    junction: list[int] = []
    if sched.junction_active(t, config.n_junction, config.window):
        frames = refreshes.get(sched.last_boundary(t))
        if frames:
            junction = list(frames)
    pairs: list[tuple[Region, int]] = []
    seen: set[int] = set()
    for region, frames in ((Region.SINK, sink), (Region.JUNCTION, junction), (Region.LOCAL, local)):
        for f in frames:
            if f in seen:
                continue
            seen.add(f)
            pairs.append((region, f))
    return pairs


def reconstruct_oracle(
    log: HistoryLog,
    t: int,
    sched: PromptSchedule,
    config: CacheConfig,
) -> AnchorMemoryView:
    """Materialize the ground-truth view from the history log."""
    pairs = reconstruct_regions(t, sched, config, log.refreshes, log.restarts)
    entries = []
    for region, frame in pairs:
        if frame not in log.entries:
            raise StateError(f"history log has no entry for frame {frame}")
        entries.append((region, log.entries[frame]))
    junction_boundary = None
    if any(r is Region.JUNCTION for r, _ in pairs):
        junction_boundary = sched.last_boundary(t)
    return AnchorMemoryView(
        t=t,
        entries=tuple(entries),
        config=config,
        junction_boundary=junction_boundary,
    )
