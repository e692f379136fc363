"""Prompt stream, interaction boundaries, and the boundary arithmetic.

A schedule is an ordered list of prompt embeddings plus the frame indices at
which the active prompt switches. Segments are 0-based: boundary ``f[i]``
switches generation to prompt ``i+1``, and the stream start acts as an
implicit boundary 0 for the initial prompt. Before the first switch there is
no junction, so the activation indicator is forced false.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import Any

import numpy as np

from anchorcache.errors import FrameRangeError, SchemaError


@dataclass(frozen=True, eq=False)
class PromptEmbedding:
    """A conditioning vector derived deterministically from an integer seed."""

    vector: np.ndarray
    seed: int

    def __post_init__(self):
        if self.vector.ndim != 1:
            raise SchemaError("prompt.vector", "must be a 1-D vector")
        if not np.all(np.isfinite(self.vector)):
            raise SchemaError("prompt.vector", "entries must be finite")

    @classmethod
    def from_seed(cls, seed: int, d_model: int) -> "PromptEmbedding":
        """Unit-norm gaussian vector; the same seed always yields the same vector."""
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(d_model)
        v = v / np.linalg.norm(v)
        return cls(vector=v, seed=seed)


@dataclass(frozen=True)
class PromptSchedule:
    """Prompts, switch boundaries, and the stream horizon.

    Invariants: ``len(prompts) == len(boundaries) + 1``; boundaries are
    strictly increasing, each in ``[1, total_frames)``.
    """

    prompts: tuple[PromptEmbedding, ...]
    boundaries: tuple[int, ...]
    total_frames: int
    d_model: int

    def __post_init__(self):
        if self.total_frames < 1:
            raise SchemaError("total_frames", "must be >= 1")
        if len(self.prompts) < 1:
            raise SchemaError("prompts", "must contain at least one prompt")
        if len(self.prompts) != len(self.boundaries) + 1:
            raise SchemaError(
                "prompts",
                f"expected {len(self.boundaries) + 1} prompts for "
                f"{len(self.boundaries)} boundaries, got {len(self.prompts)}",
            )
        for i, f in enumerate(self.boundaries):
            if f < 1:
                raise SchemaError(f"boundaries[{i}]", "must be >= 1")
            if f >= self.total_frames:
                raise SchemaError(
                    f"boundaries[{i}]", f"must be < total_frames ({self.total_frames})"
                )
            if i > 0 and f <= self.boundaries[i - 1]:
                raise SchemaError(f"boundaries[{i}]", "must be strictly increasing")
        for i, p in enumerate(self.prompts):
            if p.vector.shape != (self.d_model,):
                raise SchemaError(
                    f"prompts[{i}]",
                    f"vector dimension {p.vector.shape} does not match d_model={self.d_model}",
                )

    def _check_frame(self, t: int) -> None:
        if not 0 <= t < self.total_frames:
            raise FrameRangeError(
                f"frame {t} outside [0, {self.total_frames})"
            )

    def active_segment(self, t: int) -> int:
        """Number of boundaries at or before t; indexes the active prompt."""
        self._check_frame(t)
        return bisect.bisect_right(self.boundaries, t)

    def last_boundary(self, t: int) -> int:
        """Most recent switch frame at or before t; 0 before the first switch."""
        self._check_frame(t)
        seg = bisect.bisect_right(self.boundaries, t)
        return self.boundaries[seg - 1] if seg > 0 else 0

    def junction_active(self, t: int, n_junction: int, window: int) -> bool:
        """True once the post-switch frames have fully left the local window.

        Activation condition: ``s(t) + n_junction <= t - window``, gated on at
        least one switch having occurred at or before t.
        """
        if n_junction < 0:
            raise SchemaError("n_junction", "must be >= 0")
        if window < 1:
            raise SchemaError("window", "must be >= 1")
        self._check_frame(t)
        if self.active_segment(t) == 0:
            return False
        return self.last_boundary(t) + n_junction <= t - window

    def active_prompt(self, t: int) -> PromptEmbedding:
        return self.prompts[self.active_segment(t)]

    def truncated_before(self, boundary: int) -> "PromptSchedule":
        """The schedule as it looked before the switch at `boundary` existed.

        Used to assemble the pre-switch memory at a boundary: boundaries >=
        `boundary` (and their prompts) are dropped.
        """
        keep = bisect.bisect_left(self.boundaries, boundary)
        return PromptSchedule(
            prompts=self.prompts[: keep + 1],
            boundaries=self.boundaries[:keep],
            total_frames=self.total_frames,
            d_model=self.d_model,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "d_model": self.d_model,
            "prompts": [{"seed": p.seed} for p in self.prompts],
            "boundaries": list(self.boundaries),
            "total_frames": self.total_frames,
        }

    @classmethod
    def from_dict(cls, doc: Any) -> "PromptSchedule":
        """Build from the schedule JSON document, reporting field paths on error."""
        if not isinstance(doc, dict):
            raise SchemaError("", "schedule document must be a JSON object")
        d_model = _require_int(doc, "d_model", minimum=1)
        total = _require_int(doc, "total_frames", minimum=1)
        prompts_doc = doc.get("prompts")
        if not isinstance(prompts_doc, list) or not prompts_doc:
            raise SchemaError("prompts", "must be a non-empty list")
        prompts = []
        for i, item in enumerate(prompts_doc):
            if not isinstance(item, dict) or "seed" not in item:
                raise SchemaError(f"prompts[{i}]", "must be an object with a 'seed' field")
            seed = item["seed"]
            if not isinstance(seed, int) or isinstance(seed, bool):
                raise SchemaError(f"prompts[{i}].seed", "must be an integer")
            prompts.append(PromptEmbedding.from_seed(seed, d_model))
        boundaries_doc = doc.get("boundaries", [])
        if not isinstance(boundaries_doc, list):
            raise SchemaError("boundaries", "must be a list of frame indices")
        for i, f in enumerate(boundaries_doc):
            if not isinstance(f, int) or isinstance(f, bool):
                raise SchemaError(f"boundaries[{i}]", "must be an integer")
        return cls(
            prompts=tuple(prompts),
            boundaries=tuple(boundaries_doc),
            total_frames=total,
            d_model=d_model,
        )


def _require_int(doc: dict, key: str, minimum: int) -> int:
    if key not in doc:
        raise SchemaError(key, "is required")
    value = doc[key]
    if not isinstance(value, int) or isinstance(value, bool):
        raise SchemaError(key, "must be an integer")
    if value < minimum:
        raise SchemaError(key, f"must be >= {minimum}")
    return value
