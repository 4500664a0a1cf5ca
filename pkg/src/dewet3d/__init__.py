"""Parametric finite elements for solid-state dewetting of thin films in 3D."""

from .anisotropy import (
    Anisotropy,
    gamma,
    make_cusped,
    make_ellipsoidal,
    make_isotropic,
    make_rotated,
    rotation_matrix,
    xi_vector,
)
from .diagnostics import (
    average_contact_angle,
    convergence_study,
    manifold_distance,
    relative_volume_loss,
    total_energy,
)
from .geometry import compute_geometry, enclosed_volume, substrate_area, surface_area
from .mesh import SurfaceMesh, build_mesh, generate_cuboid_island, generate_ring_island, refine
from .scheme import SchemeParams, SchemeState, advance, assemble_step, run

__version__ = "0.1.0"
