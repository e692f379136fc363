"""Streaming loop: per-frame assembly, position assignment, generation, rolling
update, and boundary handling.

The loop is strictly sequential (the stream is causal). At a boundary frame f
the configured strategy runs *before* frame f is generated, so f comes out
under the new prompt with the refreshed local cache. Under the anchor strategy
the engine snapshots the KV of frames f..f+n_junction-1 into the junction once
the last of them exists.

In checked mode every frame is validated against the invariants (position
bound, region layout, contiguity, membership vs the history-slicing oracle,
memory bound) and the first breach aborts the run naming the invariant and
frame. Unchecked runs record anomalies as trace warnings instead, which keeps
the deliberately-broken unbounded baseline runnable for comparisons.
"""

from __future__ import annotations

import base64
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from anchorcache.errors import DimensionError, InvariantViolation, StateError
from anchorcache.memory import (
    AnchorMemoryView,
    CacheConfig,
    CacheState,
    HistoryLog,
    KVEntry,
    Region,
    reconstruct_regions,
)
from anchorcache.model import ModelConfig, ToyModel, generate_frame
from anchorcache.recache import (
    Strategy,
    recache_anchor,
    recache_baseline,
    recache_flush,
)
from anchorcache.rope import (
    PositionEntry,
    PositionMap,
    RopeConfig,
    RopeMode,
    assign_positions,
    position_warnings,
)
from anchorcache.schedule import PromptSchedule

SNAPSHOT_VERSION = 1

FrameObserver = Callable[..., None]


@dataclass(frozen=True)
class EngineConfig:
    cache: CacheConfig = field(default_factory=CacheConfig)
    rope: RopeConfig = field(default_factory=RopeConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    strategy: Strategy = Strategy.ANCHOR
    rope_mode: RopeMode = RopeMode.TRI
    noise_seed: int = 0
    checked: bool = False

    def __post_init__(self):
        if self.rope.head_dim != self.model.head_dim:
            raise DimensionError(
                f"rope head_dim={self.rope.head_dim} != model head_dim={self.model.head_dim}"
            )

    def warnings(self) -> list[str]:
        out = []
        if self.cache.n_junction + self.cache.window > self.rope.p_max:
            out.append(
                "junction+window exceeds p_max "
                f"({self.cache.n_junction}+{self.cache.window} > {self.rope.p_max}): "
                "steady-state region layout will overlap"
            )
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "sink": self.cache.n_sink,
            "junction": self.cache.n_junction,
            "window": self.cache.window,
            "p_max": self.rope.p_max,
            "rope_base": self.rope.base,
            "d_model": self.model.d_model,
            "n_heads": self.model.n_heads,
            "tokens_per_frame": self.model.tokens_per_frame,
            "weight_seed": self.model.weight_seed,
            "noise_seed": self.noise_seed,
            "strategy": self.strategy.value,
            "rope_mode": self.rope_mode.value,
            "checked": self.checked,
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "EngineConfig":
        model = ModelConfig(
            d_model=doc["d_model"],
            n_heads=doc["n_heads"],
            tokens_per_frame=doc["tokens_per_frame"],
            weight_seed=doc["weight_seed"],
        )
        return cls(
            cache=CacheConfig(
                n_sink=doc["sink"], n_junction=doc["junction"], window=doc["window"]
            ),
            rope=RopeConfig(
                p_max=doc["p_max"], base=doc["rope_base"], head_dim=model.head_dim
            ),
            model=model,
            strategy=Strategy(doc["strategy"]),
            rope_mode=RopeMode(doc["rope_mode"]),
            noise_seed=doc["noise_seed"],
            checked=doc["checked"],
        )


@dataclass(frozen=True)
class FrameTrace:
    """Replay record of one generated frame."""

    t: int
    segment: int
    boundary: int
    delta: bool
    regions: tuple[PositionEntry, ...]
    query_position: int
    latent_norm: float
    latent_checksum: str
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "type": "frame",
            "t": self.t,
            "segment": self.segment,
            "boundary": self.boundary,
            "delta": self.delta,
            "regions": [e.to_dict() for e in self.regions],
            "query_pos": self.query_position,
            "latent_norm": self.latent_norm,
            "latent_checksum": self.latent_checksum,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "FrameTrace":
        return cls(
            t=doc["t"],
            segment=doc["segment"],
            boundary=doc["boundary"],
            delta=doc["delta"],
            regions=tuple(PositionEntry.from_dict(e) for e in doc["regions"]),
            query_position=doc["query_pos"],
            latent_norm=doc["latent_norm"],
            latent_checksum=doc["latent_checksum"],
            warnings=tuple(doc.get("warnings", ())),
        )

    def region_pairs(self) -> set[tuple[str, int]]:
        return {(e.region.value, e.frame) for e in self.regions}


class Engine:
    """One streaming run over a schedule. Sequential by construction."""

    def __init__(
        self,
        sched: PromptSchedule,
        config: EngineConfig,
        on_frame: Optional[FrameObserver] = None,
    ):
        if sched.d_model != config.model.d_model:
            raise DimensionError(
                f"schedule d_model={sched.d_model} != model d_model={config.model.d_model}"
            )
        self.schedule = sched
        self.config = config
        self.model = ToyModel(config.model)
        self.state = CacheState.empty(config.cache)
        self.history = HistoryLog()
        self.on_frame = on_frame
        self._t = 0
        self._boundaries = set(sched.boundaries)
        self._pending: Optional[tuple[int, list[KVEntry]]] = None

    @property
    def t(self) -> int:
        return self._t

    @property
    def done(self) -> bool:
        return self._t >= self.schedule.total_frames

    def step(self) -> FrameTrace:
        """Generate one frame and advance the stream."""
        if self.done:
            raise StateError("stream exhausted: all frames generated")
        t = self._t
        sched = self.schedule
        cfg = self.config
        if t in self._boundaries:
            self._apply_strategy(t)
        view = self.state.assemble(t, sched)
        pmap = assign_positions(view, cfg.rope, cfg.rope_mode)
        warnings = position_warnings(view, pmap, cfg.rope)
        if cfg.checked:
            self._check_frame_invariants(t, view, pmap)
        segment = sched.active_segment(t)
        prompt = sched.prompts[segment]
        latent, entry = generate_frame(
            self.model, view, pmap, prompt, t, cfg.noise_seed, segment, cfg.rope
        )
        self.state = self.state.push_frame(entry, latent)
        self.history.record_push(entry)
        self._collect_junction(t, entry)
        if cfg.checked:
            self._check_memory_bound(t)
        trace = FrameTrace(
            t=t,
            segment=segment,
            boundary=sched.last_boundary(t),
            delta=sched.junction_active(t, cfg.cache.n_junction, cfg.cache.window),
            regions=pmap.entries,
            query_position=pmap.query_position,
            latent_norm=float(np.linalg.norm(latent)),
            latent_checksum=entry.latent_checksum,
            warnings=tuple(warnings),
        )
        if self.on_frame is not None:
            self.on_frame(t=t, view=view, pmap=pmap, prompt=prompt, latent=latent, entry=entry)
        self._t = t + 1
        return trace

    def run(self) -> list[FrameTrace]:
        """Step the whole horizon and return one trace per frame."""
        traces = []
        while not self.done:
            traces.append(self.step())
        return traces

    # -- boundary handling ---------------------------------------------------

    def _apply_strategy(self, boundary: int) -> None:
        sched = self.schedule
        cfg = self.config
        segment = sched.active_segment(boundary)
        prompt = sched.prompts[segment]
        self._pending = None
        if cfg.strategy is Strategy.BASELINE:
            self.state = recache_baseline(self.state, prompt, self.model, segment, boundary)
        elif cfg.strategy is Strategy.FLUSH:
            self.state = recache_flush(self.state, boundary)
            self.history.record_restart(boundary)
        else:
            self.state = recache_anchor(
                self.state, prompt, self.model, segment, boundary,
                sched, cfg.rope, cfg.rope_mode,
            )
            if cfg.cache.n_junction > 0:
                self._pending = (boundary, [])

    def _collect_junction(self, t: int, entry: KVEntry) -> None:
        if self._pending is None:
            return
        boundary, collected = self._pending
        if t < boundary + self.config.cache.n_junction:
            collected.append(entry)
        if len(collected) == self.config.cache.n_junction:
            self.state = self.state.refresh_junction(boundary, tuple(collected))
            self.history.record_refresh(boundary, [e.frame for e in collected])
            self._pending = None

    # -- checked-mode invariants ----------------------------------------------

    def _check_frame_invariants(self, t: int, view: AnchorMemoryView, pmap: PositionMap) -> None:
        cfg = self.config
        if pmap.max_position() > cfg.rope.p_max:
            raise InvariantViolation(
                "position-bound", t,
                f"max position {pmap.max_position()} > p_max={cfg.rope.p_max}",
            )
        if cfg.rope_mode is RopeMode.TRI:
            for region in Region:
                entries = pmap.by_region(region)
                for a, b in zip(entries, entries[1:]):
                    if b.position <= a.position:
                        raise InvariantViolation(
                            "region-layout", t,
                            f"{region.value} positions not strictly increasing "
                            f"({a.frame}->{a.position}, {b.frame}->{b.position})",
                        )
        junction = pmap.by_region(Region.JUNCTION)
        if junction and cfg.rope_mode is RopeMode.TRI:
            min_junction = min(e.position for e in junction)
            if min_junction > cfg.cache.n_sink - 1:
                sink = pmap.by_region(Region.SINK)
                local = pmap.by_region(Region.LOCAL)
                max_sink = max((e.position for e in sink), default=-1)
                min_local = min((e.position for e in local), default=pmap.query_position)
                ordered = (
                    max_sink < min_junction < min_local <= pmap.query_position
                )
                if not ordered:
                    raise InvariantViolation(
                        "region-layout", t,
                        f"sink<{max_sink}> junction<{min_junction}> local<{min_local}> "
                        f"query<{pmap.query_position}> not monotone",
                    )
        local_frames = view.region_frames(Region.LOCAL)
        if local_frames:
            span = list(range(local_frames[0], local_frames[0] + len(local_frames)))
            if local_frames != span or local_frames[-1] != t - 1:
                raise InvariantViolation(
                    "local-contiguity", t,
                    f"local frames {local_frames} not contiguous up to {t - 1}",
                )
        expected = {
            (r.value, f)
            for r, f in reconstruct_regions(
                t, self.schedule, cfg.cache, self.history.refreshes, self.history.restarts
            )
        }
        if view.region_pairs() != expected:
            raise InvariantViolation(
                "region-membership", t,
                f"view {sorted(view.region_pairs())} != oracle {sorted(expected)}",
            )

    def _check_memory_bound(self, t: int) -> None:
        total = len(self.state.sink) + len(self.state.junction) + len(self.state.local)
        if total > self.config.cache.capacity:
            raise InvariantViolation(
                "memory-bound", t,
                f"{total} retained entries > capacity {self.config.cache.capacity}",
            )

    # -- snapshot / restore -----------------------------------------------------

    def snapshot(self) -> dict[str, Any]:
        """Versioned JSON-serializable blob; restore() resumes the exact stream."""
        state = self.state
        return {
            "version": SNAPSHOT_VERSION,
            "t": self._t,
            "schedule": self.schedule.to_dict(),
            "config": self.config.to_dict(),
            "state": {
                "sink": [_entry_to_doc(e) for e in state.sink],
                "junction": [_entry_to_doc(e) for e in state.junction],
                "junction_boundary": state.junction_boundary,
                "local": [_entry_to_doc(e) for e in state.local],
                "window_latents": [
                    [f, _array_to_doc(a)] for f, a in state.window_latents
                ],
                "junction_latents": [
                    [f, _array_to_doc(a)] for f, a in state.junction_latents
                ],
                "segment_start": state.segment_start,
                "next_frame": state.next_frame,
            },
            "pending": None
            if self._pending is None
            else {
                "boundary": self._pending[0],
                "entries": [_entry_to_doc(e) for e in self._pending[1]],
            },
            "history": {
                "refreshes": {
                    str(b): list(frames) for b, frames in self.history.refreshes.items()
                },
                "restarts": list(self.history.restarts),
            },
        }

    @classmethod
    def restore(
        cls, snapshot: dict[str, Any], on_frame: Optional[FrameObserver] = None
    ) -> "Engine":
        if snapshot.get("version") != SNAPSHOT_VERSION:
            raise StateError(
                f"unsupported snapshot version {snapshot.get('version')!r}"
            )
        sched = PromptSchedule.from_dict(snapshot["schedule"])
        config = EngineConfig.from_dict(snapshot["config"])
        engine = cls(sched, config, on_frame=on_frame)
        doc = snapshot["state"]
        engine.state = CacheState(
            config=config.cache,
            sink=tuple(_entry_from_doc(d) for d in doc["sink"]),
            junction=tuple(_entry_from_doc(d) for d in doc["junction"]),
            junction_boundary=doc["junction_boundary"],
            local=tuple(_entry_from_doc(d) for d in doc["local"]),
            window_latents=tuple(
                (f, _array_from_doc(a)) for f, a in doc["window_latents"]
            ),
            junction_latents=tuple(
                (f, _array_from_doc(a)) for f, a in doc["junction_latents"]
            ),
            segment_start=doc["segment_start"],
            next_frame=doc["next_frame"],
        )
        engine._t = snapshot["t"]
        pending = snapshot["pending"]
        if pending is not None:
            engine._pending = (
                pending["boundary"],
                [_entry_from_doc(d) for d in pending["entries"]],
            )
        hist = snapshot["history"]
        engine.history.refreshes = {
            int(b): tuple(frames) for b, frames in hist["refreshes"].items()
        }
        engine.history.restarts = list(hist["restarts"])
        return engine


def run_engine(sched: PromptSchedule, config: EngineConfig) -> list[FrameTrace]:
    return Engine(sched, config).run()


def _array_to_doc(a: np.ndarray) -> dict[str, Any]:
    data = np.ascontiguousarray(a, dtype=np.float64).tobytes()
    return {"shape": list(a.shape), "data": base64.b64encode(data).decode("ascii")}


def _array_from_doc(doc: dict[str, Any]) -> np.ndarray:
    raw = base64.b64decode(doc["data"])
    return np.frombuffer(raw, dtype=np.float64).reshape(doc["shape"]).copy()


def _entry_to_doc(e: KVEntry) -> dict[str, Any]:
    return {
        "frame": e.frame,
        "segment": e.prompt_segment,
        "checksum": e.latent_checksum,
        "keys": _array_to_doc(e.keys),
        "values": _array_to_doc(e.values),
    }


def _entry_from_doc(doc: dict[str, Any]) -> KVEntry:
    return KVEntry(
        frame=doc["frame"],
        keys=_array_from_doc(doc["keys"]),
        values=_array_from_doc(doc["values"]),
        prompt_segment=doc["segment"],
        latent_checksum=doc["checksum"],
    )
