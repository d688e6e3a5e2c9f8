"""Intersection-contour untangling for multi-layer cloth.

Detects interpenetrations between cloth triangles, chains them into contours,
classifies nodes as repelled or non-repelled, and drives an implicit Euler
solver that repels separated layers while shrinking contours of already
intersecting ones.
"""
from .collision import count_intersections, detect_intersections, find_cloth_correspondences
from .contours import classify_nodes, make_contours, remove_nested, split_by_closed_contour
from .energy import MaterialParams
from .graph import GraphConfig, WorldGraph, build_input_graph
from .icloss import IcGradientMode, ic_gradient, ic_loss_value
from .kernels import BACKEND
from .mesh import TriMesh, build_topology
from .solver import (Ablation, ResolveStatus, SimState, SolverConfig, resolve_static, simulate_sequence,
                     step_frame)

__version__ = "0.1.0"

__all__ = [
    "Ablation", "BACKEND", "GraphConfig", "IcGradientMode", "MaterialParams", "ResolveStatus", "SimState",
    "SolverConfig", "TriMesh", "WorldGraph", "build_input_graph", "build_topology", "classify_nodes",
    "count_intersections", "detect_intersections", "find_cloth_correspondences", "ic_gradient",
    "ic_loss_value", "make_contours", "remove_nested", "resolve_static", "simulate_sequence",
    "split_by_closed_contour", "step_frame",
]
