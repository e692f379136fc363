"""Streaming KV-cache engine with three-region anchor memory.

Core pieces: a prompt schedule with switch boundaries, a rolling cache split
into sink / junction / local regions, bounded tri-region rotary position
assignment, prompt-switch re-cache strategies, and a deterministic toy
attention generator that makes every mechanism numerically checkable. A
FastAPI service wraps the engine; the CLI is a thin client over it.
"""

from anchorcache.compare import ComparisonReport, run_comparison
from anchorcache.engine import Engine, EngineConfig, FrameTrace, run_engine
from anchorcache.memory import (
    AnchorMemoryView,
    CacheConfig,
    CacheState,
    HistoryLog,
    KVEntry,
    Region,
    reconstruct_oracle,
    reconstruct_regions,
)
from anchorcache.model import ModelConfig, ToyModel, generate_frame, kv_entry, noise_latent
from anchorcache.recache import Strategy, recache_anchor, recache_baseline, recache_flush
from anchorcache.rope import (
    PositionEntry,
    PositionMap,
    RopeConfig,
    RopeMode,
    assign_positions,
    junction_position,
    local_position,
    rotate,
)
from anchorcache.schedule import PromptEmbedding, PromptSchedule

__version__ = "0.1.0"

__all__ = [
    "AnchorMemoryView",
    "CacheConfig",
    "CacheState",
    "ComparisonReport",
    "Engine",
    "EngineConfig",
    "FrameTrace",
    "HistoryLog",
    "KVEntry",
    "ModelConfig",
    "PositionEntry",
    "PositionMap",
    "PromptEmbedding",
    "PromptSchedule",
    "Region",
    "RopeConfig",
    "RopeMode",
    "Strategy",
    "ToyModel",
    "assign_positions",
    "generate_frame",
    "junction_position",
    "kv_entry",
    "local_position",
    "noise_latent",
    "recache_anchor",
    "recache_baseline",
    "recache_flush",
    "reconstruct_oracle",
    "reconstruct_regions",
    "rotate",
    "run_comparison",
    "run_engine",
    "__version__",
]
