"""Cache maintenance strategies applied at a prompt switch.

Three selectable behaviours, invoked at a boundary frame f before frame f is
generated:

  * baseline — rebuild the local window's KV from the retained latents under
    the new prompt. Prior KV evidence is gone; the junction stays cleared for
    the whole run (the junction is the anchor mechanism, the baseline must
    not have one).
  * flush    — drop the local window entirely and keep only the sink; the
    rolling window restarts from f.
  * anchor   — warm-start the rebuild: each retained latent takes one
    attention pass over the pre-switch anchor memory before its KV is
    recomputed under the new prompt, making post-switch entries functionally
    dependent on pre-switch evidence. The engine then snapshots frames
    f..f+n_junction-1 into the junction as they are generated.
"""

from __future__ import annotations

from enum import Enum

from anchorcache.memory import CacheState
from anchorcache.model import ToyModel, kv_entry
from anchorcache.rope import RopeConfig, RopeMode, assign_positions
from anchorcache.schedule import PromptEmbedding, PromptSchedule


class Strategy(str, Enum):
    BASELINE = "baseline"
    FLUSH = "flush"
    ANCHOR = "anchor"


def recache_baseline(
    state: CacheState,
    new_prompt: PromptEmbedding,
    model: ToyModel,
    segment: int,
    boundary: int,
) -> CacheState:
    """Plain re-cache: same local frames, KV recomputed under the new prompt."""
    rebuilt = tuple(
        kv_entry(model, state.latent_for(e.frame), new_prompt, e.frame, segment)
        for e in state.local
    )
    return (
        state.with_local(rebuilt)
        .cleared_junction()
        .with_segment_start(boundary)
    )


def recache_flush(state: CacheState, boundary: int) -> CacheState:
    """Discard the local window; only the sink survives the switch."""
    return state.cleared_local().cleared_junction().with_segment_start(boundary)


def recache_anchor(
    state: CacheState,
    new_prompt: PromptEmbedding,
    model: ToyModel,
    segment: int,
    boundary: int,
    sched: PromptSchedule,
    rope_cfg: RopeConfig,
    rope_mode: RopeMode,
) -> CacheState:
    """Warm-started re-cache over the pre-switch anchor memory.

    The pre-switch view is assembled under the schedule as it looked before
    this boundary existed, so a still-active previous junction participates.
    The old junction entries are left in place; the engine replaces them
    wholesale once the first n_junction post-switch frames exist.
    """
    pre_sched = sched.truncated_before(boundary)
    m_pre = state.assemble(boundary, pre_sched)
    pmap_pre = assign_positions(m_pre, rope_cfg, rope_mode)
    rebuilt = []
    for e in state.local:
        latent = state.latent_for(e.frame)
        warmed = model.attend(latent, new_prompt, m_pre, pmap_pre, rope_cfg)
        rebuilt.append(kv_entry(model, warmed, new_prompt, e.frame, segment))
    return state.with_local(tuple(rebuilt)).with_segment_start(boundary)
