"""Shared test utilities.

`drive_synthetic` replays the cache bookkeeping for a schedule without the
model (dummy KV payloads), which makes region/position fuzzing cheap.
`rotate_reference` and `dense_attention_reference` are from-scratch
reimplementations (explicit loops, no shared kernel code) used as independent
oracles for the vectorized paths.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Iterator

import numpy as np

from anchorcache.memory import (
    AnchorMemoryView,
    CacheConfig,
    CacheState,
    HistoryLog,
    KVEntry,
)
from anchorcache.model import ToyModel
from anchorcache.recache import Strategy
from anchorcache.rope import PositionMap, RopeConfig
from anchorcache.schedule import PromptEmbedding, PromptSchedule

_DUMMY_KV = np.zeros((1, 1, 2))
_DUMMY_LATENT = np.zeros(1)


def synth_entry(frame: int, segment: int = 0) -> KVEntry:
    return KVEntry(
        frame=frame,
        keys=_DUMMY_KV,
        values=_DUMMY_KV,
        prompt_segment=segment,
        latent_checksum="",
    )


def make_schedule(
    boundaries: list[int],
    total_frames: int,
    d_model: int = 32,
    seeds: list[int] | None = None,
) -> PromptSchedule:
    if seeds is None:
        seeds = list(range(1, len(boundaries) + 2))
    return PromptSchedule.from_dict(
        {
            "d_model": d_model,
            "prompts": [{"seed": s} for s in seeds],
            "boundaries": boundaries,
            "total_frames": total_frames,
        }
    )


def random_schedule(
    rng: np.random.Generator,
    max_total: int = 200,
    max_boundaries: int = 5,
    d_model: int = 8,
) -> PromptSchedule:
    total = int(rng.integers(1, max_total + 1))
    max_b = min(max_boundaries, total - 1)
    n_b = int(rng.integers(0, max_b + 1)) if max_b > 0 else 0
    if n_b > 0:
        boundaries = sorted(
            int(f) for f in rng.choice(np.arange(1, total), size=n_b, replace=False)
        )
    else:
        boundaries = []
    seeds = [int(rng.integers(0, 2**31)) for _ in range(n_b + 1)]
    return make_schedule(boundaries, total, d_model=d_model, seeds=seeds)


def drive_synthetic(
    sched: PromptSchedule,
    cache_cfg: CacheConfig,
    strategy: Strategy,
) -> Iterator[tuple[int, AnchorMemoryView, HistoryLog]]:
    """Yield (t, view, history) per frame with model-free cache bookkeeping.

    Mirrors the engine's boundary handling exactly: strategy before assembly,
    push after, junction collected over the first n_junction post-switch
    frames (anchor only).
    """
    state = CacheState.empty(cache_cfg)
    log = HistoryLog()
    pending: tuple[int, list[KVEntry]] | None = None
    boundaries = set(sched.boundaries)
    for t in range(sched.total_frames):
        if t in boundaries:
            seg = sched.active_segment(t)
            pending = None
            if strategy is Strategy.FLUSH:
                state = state.cleared_local().cleared_junction().with_segment_start(t)
                log.record_restart(t)
            elif strategy is Strategy.BASELINE:
                rebuilt = tuple(replace(e, prompt_segment=seg) for e in state.local)
                state = state.with_local(rebuilt).cleared_junction().with_segment_start(t)
            else:
                state = state.with_segment_start(t)
                if cache_cfg.n_junction > 0:
                    pending = (t, [])
        view = state.assemble(t, sched)
        yield t, view, log
        entry = synth_entry(t, sched.active_segment(t))
        state = state.push_frame(entry, _DUMMY_LATENT)
        log.record_push(entry)
        if pending is not None:
            b, collected = pending
            if t < b + cache_cfg.n_junction:
                collected.append(entry)
            if len(collected) == cache_cfg.n_junction:
                state = state.refresh_junction(b, tuple(collected))
                log.record_refresh(b, [e.frame for e in collected])
                pending = None


def rotate_reference(vec: np.ndarray, pos: int, base: float) -> np.ndarray:
    """Pairwise rotation computed channel by channel."""
    d = vec.shape[0]
    out = np.empty(d, dtype=np.float64)
    for j in range(d // 2):
        theta = pos * base ** (-2.0 * j / d)
        c, s = np.cos(theta), np.sin(theta)
        x, y = vec[2 * j], vec[2 * j + 1]
        out[2 * j] = c * x - s * y
        out[2 * j + 1] = s * x + c * y
    return out


def dense_attention_reference(
    model: ToyModel,
    query_latent: np.ndarray,
    prompt: PromptEmbedding,
    view: AnchorMemoryView,
    pmap: PositionMap,
    rope_cfg: RopeConfig,
) -> np.ndarray:
    """Brute-force dense attention over materialized rotated keys."""
    cfg = model.config
    n_heads, tokens, hd = cfg.n_heads, cfg.tokens_per_frame, cfg.head_dim
    base = rope_cfg.base
    h = query_latent + prompt.vector
    q_rows = h @ model.w_q
    k_self = h @ model.w_k
    v_self = h @ model.w_v
    out = np.zeros((tokens, cfg.d_model))
    for head in range(n_heads):
        lo, hi = head * hd, (head + 1) * hd
        ctx_k: list[np.ndarray] = []
        ctx_v: list[np.ndarray] = []
        for _, entry in view.entries:
            pos = pmap.position_of(entry.frame)
            for token in range(entry.keys.shape[1]):
                ctx_k.append(rotate_reference(entry.keys[head, token], pos, base))
                ctx_v.append(entry.values[head, token])
        for token in range(tokens):
            ctx_k.append(rotate_reference(k_self[token, lo:hi], pmap.query_position, base))
            ctx_v.append(v_self[token, lo:hi])
        for token in range(tokens):
            q_vec = rotate_reference(q_rows[token, lo:hi], pmap.query_position, base)
            logits = np.array([q_vec @ k for k in ctx_k]) / np.sqrt(hd)
            weights = np.exp(logits - logits.max())
            weights /= weights.sum()
            combined = np.zeros(hd)
            for w, v in zip(weights, ctx_v):
                combined += w * v
            out[token, lo:hi] = combined
    merged = out @ model.w_o
    return merged + np.tanh(merged @ model.w_mlp)
