"""Rotary position embedding and the tri-region bounded position assignment.

Positions are per latent frame (all tokens of a frame share one position) and
rotation is applied to channel pairs with angle ``pos * base**(-2j/head_dim)``,
so attention logits depend only on relative positions.

Assignment modes:

  * tri      — sink frames sit at 0..n_sink-1; local frames are re-indexed
               inside the window so the newest slot lands at ``p_max - 1``
               once ``t >= p_max`` (below that, a frame's position is simply
               its latent index); junction frames occupy the band immediately
               below the first local slot. Every position stays <= p_max.
  * bounded  — every frame at ``min(latent index, p_max)``: the plain cap.
  * unbounded — raw latent indices; grows past p_max. Comparison baseline
               only, expected to trip the bound checker.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from anchorcache.errors import (
    ConsistencyError,
    DimensionError,
    FrameRangeError,
    SchemaError,
    StateError,
)
from anchorcache.memory import AnchorMemoryView, Region


class RopeMode(str, Enum):
    TRI = "tri"
    BOUNDED = "bounded"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class RopeConfig:
    """Position bound, rotation base frequency, and per-head channel count."""

    p_max: int = 21
    base: float = 10000.0
    head_dim: int = 8

    def __post_init__(self):
        if self.p_max < 1:
            raise SchemaError("rope.p_max", "must be >= 1")
        if self.base <= 1.0:
            raise SchemaError("rope.base", "must be > 1")
        if self.head_dim < 2 or self.head_dim % 2 != 0:
            raise DimensionError(f"head_dim must be a positive even integer, got {self.head_dim}")

    def frequencies(self) -> np.ndarray:
        j = np.arange(self.head_dim // 2, dtype=np.float64)
        return self.base ** (-2.0 * j / self.head_dim)


def rotate(vec: np.ndarray, pos: int, cfg: RopeConfig) -> np.ndarray:
    """Rotate one head-dim vector to position `pos`. Norm-preserving."""
    if vec.shape[-1] % 2 != 0 or vec.shape[-1] != cfg.head_dim:
        raise DimensionError(
            f"vector length {vec.shape[-1]} incompatible with head_dim={cfg.head_dim}"
        )
    return rotate_tokens(vec, pos, cfg)


def rotate_tokens(block: np.ndarray, pos: int, cfg: RopeConfig) -> np.ndarray:
    """Rotate an (..., head_dim) block of tokens sharing one frame position."""
    if pos < 0:
        raise FrameRangeError(f"rotary position must be >= 0, got {pos}")
    if block.shape[-1] != cfg.head_dim:
        raise DimensionError(
            f"last axis {block.shape[-1]} does not match head_dim={cfg.head_dim}"
        )
    angles = pos * cfg.frequencies()
    cos = np.cos(angles)
    sin = np.sin(angles)
    even = block[..., 0::2]
    odd = block[..., 1::2]
    out = np.empty_like(block)
    out[..., 0::2] = even * cos - odd * sin
    out[..., 1::2] = even * sin + odd * cos
    return out


def local_position(k: int, t: int, window: int, cfg: RopeConfig) -> int:
    """Position of the local-window slot k (= w-1 is the frame being generated).

    Below the bound the slot's frame keeps its latent index; from ``t >= p_max``
    the window is re-anchored so slot k sits at ``p_max - window + k``.
    """
    if not 0 <= k <= window - 1:
        raise FrameRangeError(f"window offset {k} outside [0, {window - 1}]")
    if t < cfg.p_max:
        return max(0, t - window + 1 + k)
    return max(0, cfg.p_max - window + k)


def junction_position(m: int, t: int, n_junction: int, window: int, cfg: RopeConfig) -> int:
    """Position of junction slot m: the band immediately below the local window."""
    if not 0 <= m <= n_junction - 1:
        raise FrameRangeError(f"junction offset {m} outside [0, {n_junction - 1}]")
    return local_position(0, t, window, cfg) - n_junction + m


@dataclass(frozen=True)
class PositionEntry:
    frame: int
    region: Region
    position: int

    def to_dict(self) -> dict:
        return {"frame": self.frame, "region": self.region.value, "pos": self.position}

    @classmethod
    def from_dict(cls, doc: dict) -> "PositionEntry":
        return cls(frame=doc["frame"], region=Region(doc["region"]), position=doc["pos"])


@dataclass(frozen=True)
class PositionMap:
    """Effective rotary position of every cached frame plus the current query."""

    entries: tuple[PositionEntry, ...]
    query_position: int

    def position_of(self, frame: int) -> int:
        for e in self.entries:
            if e.frame == frame:
                return e.position
        raise ConsistencyError(f"no position assigned to frame {frame}")

    def max_position(self) -> int:
        positions = [e.position for e in self.entries]
        positions.append(self.query_position)
        return max(positions)

    def by_region(self, region: Region) -> list[PositionEntry]:
        return [e for e in self.entries if e.region is region]


def assign_positions(view: AnchorMemoryView, cfg: RopeConfig, mode: RopeMode) -> PositionMap:
    """Map every view entry (and the query for frame t) to its rotary position."""
    t = view.t
    for _, entry in view.entries:
        if entry.frame >= t:
            raise StateError(
                f"memory for t={t} contains frame {entry.frame} from the future"
            )
    w = view.config.window
    n_j = view.config.n_junction
    entries: list[PositionEntry] = []
    if mode is RopeMode.TRI:
        sink_index = 0
        for region, entry in view.entries:
            if region is Region.SINK:
                pos = sink_index
                sink_index += 1
            elif region is Region.JUNCTION:
                if view.junction_boundary is None:
                    raise StateError("junction entries present without a boundary")
                m = entry.frame - view.junction_boundary
                pos = max(0, junction_position(m, t, n_j, w, cfg))
            else:
                k = entry.frame - (t - w + 1)
                pos = local_position(k, t, w, cfg)
            entries.append(PositionEntry(entry.frame, region, pos))
        query_pos = local_position(w - 1, t, w, cfg)
    elif mode is RopeMode.BOUNDED:
        for region, entry in view.entries:
            entries.append(PositionEntry(entry.frame, region, min(entry.frame, cfg.p_max)))
        query_pos = min(t, cfg.p_max)
    else:
        for region, entry in view.entries:
            entries.append(PositionEntry(entry.frame, region, entry.frame))
        query_pos = t
    return PositionMap(entries=tuple(entries), query_position=query_pos)


def position_warnings(view: AnchorMemoryView, pmap: PositionMap, cfg: RopeConfig) -> list[str]:
    """Per-frame anomalies worth surfacing in the trace without aborting.

    Cross-region position duplicates (junction band descending into the sink
    band for early activations) and a junction band that had to be clamped at
    zero (only reachable when n_junction + window > p_max).
    """
    warnings: list[str] = []
    by_position: dict[int, set[Region]] = {}
    for e in pmap.entries:
        by_position.setdefault(e.position, set()).add(e.region)
    dup = sorted(p for p, regions in by_position.items() if len(regions) > 1)
    if dup:
        warnings.append(f"duplicate positions across regions: {dup}")
    if view.junction_boundary is not None:
        raw_min = junction_position(0, view.t, view.config.n_junction, view.config.window, cfg)
        if raw_min < 0:
            warnings.append(f"junction band clamped at 0 (raw start {raw_min})")
    return warnings
