"""Semantic graph descriptor and its compact ``.bxg`` binary format."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from .clustering import Cluster

MAGIC = b"BOXG"
FORMAT_VERSION = 1
VALUES_PER_VERTEX = 7
VERTEX_BYTES = 4 * VALUES_PER_VERTEX
_HEADER = struct.Struct("<4sHIH")
# class ids travel as float32; integers are exact up to 2**24
MAX_CLASS_ID = 1 << 24


class FormatError(ValueError):
    pass


class Vertex(NamedTuple):
    centroid: np.ndarray
    label: int
    feature: np.ndarray  # (h, w, d): extents along z, y, x


def vertex_from_cluster(cluster: Cluster) -> Vertex:
    pts = np.asarray(cluster.points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("cannot build a vertex from an empty cluster")
    ext = pts.max(axis=0) - pts.min(axis=0)
    return Vertex(pts.mean(axis=0), int(cluster.label), ext[::-1].copy())


@dataclass(frozen=True, eq=False)
class SemanticGraph:
    """Complete graph over object instances; edges are implicit centroid pairs.

    Vertex data lives in parallel arrays: ``centroids`` (n, 3),
    ``labels`` (n,), ``features`` (n, 3) as (h, w, d).
    """

    centroids: np.ndarray
    labels: np.ndarray
    features: np.ndarray
    scan_id: str = ""

    def __post_init__(self):
        c = np.array(self.centroids, dtype=np.float64).reshape(-1, 3)
        l = np.array(self.labels, dtype=np.int64).reshape(-1)
        f = np.array(self.features, dtype=np.float64).reshape(-1, 3)
        if not len(c) == len(l) == len(f):
            raise ValueError("centroids, labels and features must have equal length")
        if (f < 0).any():
            raise ValueError("bounding-box extents must be nonnegative")
        for a in (c, l, f):
            a.flags.writeable = False
        object.__setattr__(self, "centroids", c)
        object.__setattr__(self, "labels", l)
        object.__setattr__(self, "features", f)

    @classmethod
    def from_vertices(cls, vertices, scan_id: str = "") -> "SemanticGraph":
        vertices = list(vertices)
        if not vertices:
            return cls(np.empty((0, 3)), np.empty(0, dtype=np.int64), np.empty((0, 3)), scan_id)
        return cls(np.array([v.centroid for v in vertices]),
                   np.array([v.label for v in vertices]),
                   np.array([v.feature for v in vertices]), scan_id)

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i: int) -> Vertex:
        return Vertex(self.centroids[i], int(self.labels[i]), self.features[i])

    def __iter__(self) -> Iterator[Vertex]:
        return (self[i] for i in range(len(self)))

    @property
    def vertices(self) -> list[Vertex]:
        return list(self)

    def edge_length(self, i: int, j: int) -> float:
        return float(np.linalg.norm(self.centroids[i] - self.centroids[j]))

    def transformed(self, T) -> "SemanticGraph":
        """Centroids moved by a rigid transform; features are kept as-is."""
        return SemanticGraph(T.apply(self.centroids), self.labels, self.features, self.scan_id)

    def __eq__(self, other):
        if not isinstance(other, SemanticGraph):
            return NotImplemented
        return (self.scan_id == other.scan_id
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.centroids, other.centroids)
                and np.array_equal(self.features, other.features))


def build_graph(clusters, scan_id: str = "") -> SemanticGraph:
    return SemanticGraph.from_vertices((vertex_from_cluster(c) for c in clusters), scan_id)


def serialize(graph: SemanticGraph) -> bytes:
    sid = graph.scan_id.encode("utf-8")
    if len(sid) > 0xFFFF:
        raise ValueError("scan id too long")
    if len(graph) and (graph.labels.min() < 0 or graph.labels.max() >= MAX_CLASS_ID):
        raise ValueError(f"class ids must lie in [0, {MAX_CLASS_ID})")
    payload = np.empty((len(graph), VALUES_PER_VERTEX), dtype="<f4")
    payload[:, 0:3] = graph.centroids
    payload[:, 3] = graph.labels
    payload[:, 4:7] = graph.features
    return _HEADER.pack(MAGIC, FORMAT_VERSION, len(graph), len(sid)) + sid + payload.tobytes()


def payload_size(data: bytes) -> int:
    _, _, _, sid_len = _HEADER.unpack_from(data)
    return len(data) - _HEADER.size - sid_len


def deserialize(data: bytes) -> SemanticGraph:
    if len(data) < _HEADER.size:
        raise FormatError("truncated header")
    magic, version, count, sid_len = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}")
    off = _HEADER.size
    if len(data) < off + sid_len:
        raise FormatError("truncated scan id")
    scan_id = data[off:off + sid_len].decode("utf-8")
    off += sid_len
    if len(data) != off + count * VERTEX_BYTES:
        raise FormatError(f"payload holds {len(data) - off} bytes, expected {count * VERTEX_BYTES}")
    vals = np.frombuffer(data, dtype="<f4", offset=off).reshape(count, VALUES_PER_VERTEX)
    vals = vals.astype(np.float64)
    return SemanticGraph(vals[:, 0:3], vals[:, 3].astype(np.int64), vals[:, 4:7], scan_id)


def save(graph: SemanticGraph, path) -> int:
    data = serialize(graph)
    Path(path).write_bytes(data)
    return len(data)


def load(path) -> SemanticGraph:
    return deserialize(Path(path).read_bytes())
