"""Evaluation manifests: one JSON object per line describing an utterance.

Each line carries an ``id``, a ``source`` audio or feature path, and a
``reference`` translation; ``transcript`` is optional. Relative source paths
are resolved against the manifest's own directory. Whether a source file
exists is checked when a run touches it, not at load time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

__all__ = ["ManifestEntry", "ManifestError", "load_manifest"]


class ManifestError(ValueError):
    """Raised for malformed manifest lines; message includes the line number."""


@dataclass(frozen=True)
class ManifestEntry:
    """A single utterance to evaluate."""

    id: str
    source: Path
    reference: str
    transcript: str | None = None


_REQUIRED = ("id", "source", "reference")


def load_manifest(path) -> list[ManifestEntry]:
    """Parse a JSON-lines manifest into entries, in file order.

    Blank lines are skipped. Raises ManifestError on unparseable lines,
    missing or non-string required fields, or duplicate ids.
    """
    manifest_path = Path(path)
    base = manifest_path.parent
    entries: list[ManifestEntry] = []
    seen: dict[str, int] = {}
    with manifest_path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{manifest_path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise ManifestError(f"{manifest_path}:{lineno}: expected a JSON object")
            for key in _REQUIRED:
                if key not in record:
                    raise ManifestError(f"{manifest_path}:{lineno}: missing required field {key!r}")
                if not isinstance(record[key], str) or not record[key]:
                    raise ManifestError(
                        f"{manifest_path}:{lineno}: field {key!r} must be a non-empty string"
                    )
            transcript = record.get("transcript")
            if transcript is not None and not isinstance(transcript, str):
                raise ManifestError(f"{manifest_path}:{lineno}: field 'transcript' must be a string")
            utt_id = record["id"]
            if utt_id in seen:
                raise ManifestError(
                    f"{manifest_path}:{lineno}: duplicate id {utt_id!r} (first seen on line {seen[utt_id]})"
                )
            seen[utt_id] = lineno
            source = Path(record["source"])
            if not source.is_absolute():
                source = base / source
            entries.append(
                ManifestEntry(
                    id=utt_id,
                    source=source,
                    reference=record["reference"],
                    transcript=transcript,
                )
            )
    return entries
