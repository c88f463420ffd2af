"""Returns a path to a bundled manifest, if it exists."""

from __future__ import annotations

from pathlib import Path
from typing import List

MANIFEST_DIR = Path(__file__).resolve().parent.parent / "manifests"


def bundled_manifests() -> List[str]:
    return sorted(path.stem for path in MANIFEST_DIR.glob("*.toml"))


def get_resource(name: str) -> Path:
    """Resolves a bundled manifest by name (with or without the .toml suffix)."""
    stem = name[:-5] if name.endswith(".toml") else name
    path = MANIFEST_DIR.joinpath(f"{stem}.toml")
    if path.is_file():
        return path

    raise FileNotFoundError(
        f"Could not find a bundled manifest at {path}; "
        f"known manifests: {', '.join(bundled_manifests())}"
    )
