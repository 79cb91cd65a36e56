"""Semantic graph descriptors for LiDAR place recognition and 6-DoF pose estimation."""
from .clustering import Cluster, ClusteringParams, cluster_by_class, dbscan
from .graph import SemanticGraph, Vertex, build_graph, deserialize, serialize, vertex_from_cluster
from .matching import MatchSet, assign_vertices, delta, vertex_similarity
from .registration import RansacParams, RigidTransform, kabsch, ransac_register
from .scoring import MatchResult, edge_similarity, graph_similarity, match_graphs
from .skitti_io import LabeledCloud, PoseRecord, attach_and_filter, load_scan, read_labels, read_point_cloud, read_poses

__version__ = "0.1.0"

__all__ = [
    "Cluster", "ClusteringParams", "cluster_by_class", "dbscan",
    "SemanticGraph", "Vertex", "build_graph", "deserialize", "serialize", "vertex_from_cluster",
    "MatchSet", "assign_vertices", "delta", "vertex_similarity",
    "RansacParams", "RigidTransform", "kabsch", "ransac_register",
    "MatchResult", "edge_similarity", "graph_similarity", "match_graphs",
    "LabeledCloud", "PoseRecord", "attach_and_filter", "load_scan", "read_labels", "read_point_cloud", "read_poses",
]
