"""touchmap: incremental 3-D shape mapping from tactile patches and a depth map.

Surface measurements stream into a lattice of signed-distance query nodes,
each fused in information form from local Gaussian-process conditionals;
marching cubes turns the posterior field into an uncertainty-annotated mesh.
"""

__version__ = "0.1.0"
