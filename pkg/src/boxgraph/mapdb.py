"""Map database: a directory of ``.bxg`` graphs plus ``index.txt``.

Each index line is ``<scan id> <file name> [12 pose values]`` with the
optional pose in KITTI row-major 3x4 form (world <- sensor).
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from . import graph as bxg
from .graph import FormatError, SemanticGraph
from .registration import RigidTransform
from .skitti_io import _parse_row, format_pose

INDEX_NAME = "index.txt"


@dataclass(frozen=True)
class IndexEntry:
    scan_id: str
    file_name: str
    pose: RigidTransform | None = None


def write_index(db_dir, entries) -> Path:
    path = Path(db_dir) / INDEX_NAME
    lines = []
    for e in entries:
        row = f"{e.scan_id} {e.file_name}"
        if e.pose is not None:
            row += " " + format_pose(e.pose)
        lines.append(row + "\n")
    path.write_text("".join(lines))
    return path


def read_index(db_dir) -> list[IndexEntry]:
    path = Path(db_dir) / INDEX_NAME
    try:
        text = path.read_text()
    except OSError as exc:
        raise FormatError(f"cannot read map index: {exc}") from None
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) not in (2, 14):
            raise FormatError(f"{path}:{n}: expected 2 or 14 fields, got {len(fields)}")
        pose = _parse_row(fields[2:], f"{path}:{n}") if len(fields) == 14 else None
        out.append(IndexEntry(fields[0], fields[1], pose))
    return out


def load_graphs(db_dir, entries=None) -> dict[str, SemanticGraph]:
    entries = read_index(db_dir) if entries is None else entries
    return {e.scan_id: bxg.load(Path(db_dir) / e.file_name) for e in entries}


def save_database(db_dir, graphs, poses=None) -> list[IndexEntry]:
    """Write graphs as ``<scan id>.bxg`` plus the index; poses are optional."""
    db_dir = Path(db_dir)
    db_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for k, g in enumerate(graphs):
        name = f"{g.scan_id}.bxg"
        bxg.save(g, db_dir / name)
        entries.append(IndexEntry(g.scan_id, name, None if poses is None else poses[k]))
    write_index(db_dir, entries)
    return entries
