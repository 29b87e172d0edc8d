"""Rigid-transform analysis of occlusal splint positioning and TMJ simulation."""

from .se3 import RigidTransform, compose, inverse, apply, exp_rotation, log_rotation, exp_se3, log_se3
from .mesh import TriangleMesh, load_mesh, save_mesh

__version__ = "0.1.0"
