"""Deterministic single-block causal-attention generator.

Stands in for a distilled few-step video generator so the cache mechanics
produce checkable numbers: one attention block plus a tanh MLP residual, all
weights drawn from a seeded PRNG and everything computed in float64. Prompt
conditioning is an additive bias on every token before projection — the
cheapest mechanism that makes cached KV depend on the prompt, which is the
property the re-cache strategies act on.

Keys are stored unrotated; rotation happens inside ``attend`` from the
position map, so entries can be re-indexed as they move between regions.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from anchorcache.errors import DimensionError
from anchorcache.memory import AnchorMemoryView, KVEntry
from anchorcache.rope import PositionMap, RopeConfig, rotate_tokens
from anchorcache.schedule import PromptEmbedding


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 32
    n_heads: int = 4
    tokens_per_frame: int = 4
    weight_seed: int = 0

    def __post_init__(self):
        if self.d_model < 1 or self.n_heads < 1 or self.tokens_per_frame < 1:
            raise DimensionError("d_model, n_heads and tokens_per_frame must be >= 1")
        if self.d_model % self.n_heads != 0:
            raise DimensionError(
                f"d_model={self.d_model} not divisible by n_heads={self.n_heads}"
            )
        if (self.d_model // self.n_heads) % 2 != 0:
            raise DimensionError(
                f"head_dim={self.d_model // self.n_heads} must be even for rotation"
            )

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    def to_dict(self) -> dict:
        return {
            "d_model": self.d_model,
            "n_heads": self.n_heads,
            "tokens_per_frame": self.tokens_per_frame,
            "weight_seed": self.weight_seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelConfig":
        return cls(
            d_model=doc["d_model"],
            n_heads=doc["n_heads"],
            tokens_per_frame=doc["tokens_per_frame"],
            weight_seed=doc["weight_seed"],
        )


def latent_checksum(latent: np.ndarray) -> str:
    """Stable short hash of a float64 latent; trace and divergence currency."""
    return hashlib.sha256(np.ascontiguousarray(latent, dtype=np.float64).tobytes()).hexdigest()[:16]


def noise_latent(t: int, noise_seed: int, config: ModelConfig) -> np.ndarray:
    """Seeded per-frame noise; same (seed, t) always yields the same latent."""
    rng = np.random.default_rng([noise_seed, t])
    return rng.standard_normal((config.tokens_per_frame, config.d_model))


def _stable_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


class ToyModel:
    """Projection matrices and the attention forward pass."""

    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.weight_seed)
        d = config.d_model
        scale = 1.0 / np.sqrt(d)
        self.w_q = rng.standard_normal((d, d)) * scale
        self.w_k = rng.standard_normal((d, d)) * scale
        self.w_v = rng.standard_normal((d, d)) * scale
        self.w_o = rng.standard_normal((d, d)) * scale
        self.w_mlp = rng.standard_normal((d, d)) * scale

    def _split_heads(self, x: np.ndarray) -> np.ndarray:
        tokens = self.config.tokens_per_frame
        return x.reshape(tokens, self.config.n_heads, self.config.head_dim).transpose(1, 0, 2)

    def _check_latent(self, latent: np.ndarray) -> None:
        expected = (self.config.tokens_per_frame, self.config.d_model)
        if latent.shape != expected:
            raise DimensionError(f"latent shape {latent.shape}, expected {expected}")

    def compute_kv(self, latent: np.ndarray, prompt: PromptEmbedding) -> tuple[np.ndarray, np.ndarray]:
        """Unrotated (keys, values), each (n_heads, tokens_per_frame, head_dim)."""
        self._check_latent(latent)
        h = latent + prompt.vector
        keys = self._split_heads(h @ self.w_k)
        values = self._split_heads(h @ self.w_v)
        return keys, values

    def attend(
        self,
        query_latent: np.ndarray,
        prompt: PromptEmbedding,
        view: AnchorMemoryView,
        pmap: PositionMap,
        rope_cfg: RopeConfig,
    ) -> np.ndarray:
        """Scaled-dot attention of the current frame over the assembled memory.

        The context is every cached entry's keys rotated at its mapped
        position, plus the frame's own keys at the query position (the frame
        always self-attends). Output goes through the output projection and a
        tanh MLP residual.
        """
        self._check_latent(query_latent)
        if rope_cfg.head_dim != self.config.head_dim:
            raise DimensionError(
                f"rope head_dim={rope_cfg.head_dim} != model head_dim={self.config.head_dim}"
            )
        h = query_latent + prompt.vector
        q = rotate_tokens(self._split_heads(h @ self.w_q), pmap.query_position, rope_cfg)
        keys = []
        values = []
        for _, entry in view.entries:
            pos = pmap.position_of(entry.frame)
            keys.append(rotate_tokens(entry.keys, pos, rope_cfg))
            values.append(entry.values)
        self_k, self_v = self.compute_kv(query_latent, prompt)
        keys.append(rotate_tokens(self_k, pmap.query_position, rope_cfg))
        values.append(self_v)
        k_all = np.concatenate(keys, axis=1)
        v_all = np.concatenate(values, axis=1)
        logits = q @ k_all.transpose(0, 2, 1) / np.sqrt(self.config.head_dim)
        attn = _stable_softmax(logits)
        ctx = attn @ v_all
        merged = ctx.transpose(1, 0, 2).reshape(self.config.tokens_per_frame, self.config.d_model)
        out = merged @ self.w_o
        return out + np.tanh(out @ self.w_mlp)


def kv_entry(
    model: ToyModel,
    latent: np.ndarray,
    prompt: PromptEmbedding,
    frame: int,
    segment: int,
) -> KVEntry:
    """Wrap a latent's KV projection as a tagged cache entry."""
    keys, values = model.compute_kv(latent, prompt)
    return KVEntry(
        frame=frame,
        keys=keys,
        values=values,
        prompt_segment=segment,
        latent_checksum=latent_checksum(latent),
    )


def generate_frame(
    model: ToyModel,
    view: AnchorMemoryView,
    pmap: PositionMap,
    prompt: PromptEmbedding,
    t: int,
    noise_seed: int,
    segment: int,
    rope_cfg: RopeConfig,
) -> tuple[np.ndarray, KVEntry]:
    """One-step generation: attend the seeded noise latent over the memory."""
    noise = noise_latent(t, noise_seed, model.config)
    latent = model.attend(noise, prompt, view, pmap, rope_cfg)
    entry = kv_entry(model, latent, prompt, t, segment)
    return latent, entry
