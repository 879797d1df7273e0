"""Bundled models, hand profiles, and scenes."""

from importlib import resources
from pathlib import Path

__all__ = ["asset_path", "list_assets"]


def asset_path(*parts: str) -> Path:
    """Absolute path of a bundled asset, e.g. asset_path('models', 'arm6.urdf')."""
    p = Path(str(resources.files("dexlink.assets")))
    for part in parts:
        p = p / part
    if not p.exists():
        raise FileNotFoundError(f"no bundled asset {'/'.join(parts)!r}")
    return p


def list_assets(kind: str) -> list[str]:
    base = Path(str(resources.files("dexlink.assets"))) / kind
    if not base.is_dir():
        return []
    return sorted(f.name for f in base.iterdir() if f.is_file())
