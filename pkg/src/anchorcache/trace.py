"""JSON-lines trace serialization.

One header line (full config, schedule, seeds) followed by one frame record
per line. Serialization is canonical (sorted keys, compact separators) so the
same run always produces byte-identical files, and floats round-trip exactly
through their shortest repr.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from anchorcache.engine import EngineConfig, FrameTrace
from anchorcache.errors import TraceParseError
from anchorcache.schedule import PromptSchedule

TRACE_VERSION = 1


def canonical_dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def build_header(sched: PromptSchedule, config: EngineConfig) -> dict[str, Any]:
    return {
        "type": "header",
        "version": TRACE_VERSION,
        "schedule": sched.to_dict(),
        "settings": config.to_dict(),
        "warnings": config.warnings(),
    }


def trace_lines(header: dict[str, Any], frames: list[dict[str, Any]]) -> list[str]:
    return [canonical_dumps(header)] + [canonical_dumps(f) for f in frames]


def write_trace(path: str | Path, header: dict[str, Any], frames: list[dict[str, Any]]) -> None:
    text = "\n".join(trace_lines(header, frames)) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def parse_trace(text: str) -> tuple[dict[str, Any], list[FrameTrace]]:
    """Parse trace JSONL back into a header dict and frame records.

    Raises TraceParseError with the 1-based line number on any malformed line.
    """
    lines = [line for line in text.splitlines()]
    if not lines or not lines[0].strip():
        raise TraceParseError(1, "empty trace: missing header line")
    header = _parse_line(lines[0], 1)
    if header.get("type") != "header":
        raise TraceParseError(1, "first line is not a header record")
    for key in ("schedule", "settings"):
        if key not in header:
            raise TraceParseError(1, f"header missing '{key}'")
    frames = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        doc = _parse_line(line, i)
        if doc.get("type") != "frame":
            raise TraceParseError(i, f"unexpected record type {doc.get('type')!r}")
        try:
            frames.append(FrameTrace.from_dict(doc))
        except (KeyError, ValueError, TypeError) as exc:
            raise TraceParseError(i, f"bad frame record: {exc}") from exc
    return header, frames


def _parse_line(line: str, line_no: int) -> dict[str, Any]:
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise TraceParseError(line_no, f"invalid JSON: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise TraceParseError(line_no, "record is not a JSON object")
    return doc
