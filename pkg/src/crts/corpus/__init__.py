"""The bundled reference corpus: ten published cardiology recommendations
encoded as canonical CRTS-XML."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from crts.model import Recommendation


def paths() -> list[Path]:
    root = resources.files(__name__)
    return sorted(Path(str(p)) for p in root.iterdir() if p.name.endswith(".xml"))


def load() -> list[Recommendation]:
    from crts.serial import parse_xml

    return [parse_xml(p.read_bytes()) for p in paths()]
