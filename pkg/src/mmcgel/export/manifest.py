"""JSON run manifest."""

import json
from pathlib import Path

from mmcgel.export.base import atomic_write_text
from mmcgel.models import RunManifest


def write_manifest(manifest: RunManifest, path: Path | str) -> Path:
    """Serialise the manifest atomically as indented JSON."""
    text = json.dumps(manifest.to_dict(), indent=2, allow_nan=True)
    return atomic_write_text(path, text + "\n")


def read_manifest(path: Path | str) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)
