import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_cap, unit_square_patch
from dewet3d.errors import (
    ContactLineOffSubstrate,
    DegenerateTriangle,
    InvalidDimension,
    IsolatedVertex,
    NonManifoldEdge,
    OpenBoundaryChain,
    OrientationError,
    SizeMismatch,
)
from dewet3d.geometry import enclosed_volume
from dewet3d.mesh import (
    build_mesh,
    generate_cuboid_island,
    generate_ring_island,
    mesh_size,
    refine,
    unique_edges,
)


def directed_edges(T):
    return np.concatenate([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]])


def assert_valid(mesh):
    """Independent re-check of the mesh invariants with plain Python sets."""
    edges = [tuple(e) for e in directed_edges(mesh.triangles)]
    counts = {}
    for a, b in edges:
        counts[frozenset((a, b))] = counts.get(frozenset((a, b)), 0) + 1
    assert set(counts.values()) <= {1, 2}
    directed = set(edges)
    assert len(directed) == len(edges)  # no edge traversed twice in the same direction
    boundary = {(a, b) for a, b in edges if (b, a) not in directed}
    bverts = {v for e in boundary for v in e}
    assert np.all(mesh.vertices[sorted(bverts), 2] == 0.0)
    from_loops = {tuple(s) for s in mesh.boundary_segments}
    assert from_loops == boundary


def test_single_triangle_above_substrate():
    V = np.array([[0.0, 0, 1], [1, 0, 1], [0, 1, 1]])
    with pytest.raises(ContactLineOffSubstrate):
        build_mesh(V, [[0, 1, 2]])


def test_square_patch_has_one_loop_of_four():
    m = unit_square_patch()
    assert len(m.boundary_loops) == 1
    assert sorted(m.boundary_loops[0].vertex_indices) == [0, 1, 2, 3]
    assert m.boundary_loops[0].segment_count == 4


def test_inconsistent_winding_rejected():
    V = np.array([[0.0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]])
    T = np.array([[0, 1, 2], [0, 3, 2]])  # second triangle reversed
    # oracle: the shared edge (0, 2) appears with the same direction twice
    d = [tuple(e) for e in directed_edges(T)]
    assert d.count((2, 0)) == 2 or d.count((0, 2)) == 2
    with pytest.raises(OrientationError):
        build_mesh(V, T)


def test_clockwise_patch_rejected():
    V = np.array([[0.0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]])
    with pytest.raises(OrientationError):
        build_mesh(V, [[0, 2, 1], [0, 3, 2]])


def test_structural_errors():
    V = np.array([[0.0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [0.5, 0.5, 0]])
    with pytest.raises(IsolatedVertex):
        build_mesh(V, [[0, 1, 2], [0, 2, 3]])
    with pytest.raises(DegenerateTriangle):
        build_mesh(V[:3], [[0, 0, 1]])
    with pytest.raises(DegenerateTriangle):
        build_mesh(np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0]]), [[0, 1, 2]])
    with pytest.raises(SizeMismatch):
        build_mesh(V[:, :2], [[0, 1, 2]])
    with pytest.raises(SizeMismatch):
        build_mesh(V[:3], [[0, 1, 7]])
    # three triangles on one edge
    W = np.array([[0.0, 0, 0], [1, 0, 0], [0.5, 1, 0], [0.5, -1, 0], [0.5, 0, 1]])
    with pytest.raises(NonManifoldEdge):
        build_mesh(W, [[0, 1, 2], [1, 0, 3], [0, 1, 4]])


def test_bowtie_boundary_rejected():
    # two triangles sharing only a vertex: boundary chain through it is ambiguous
    V = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [-1, 0, 0], [0, -1, 0]])
    with pytest.raises(OpenBoundaryChain):
        build_mesh(V, [[0, 1, 2], [0, 3, 4]])


def test_cuboid_generator_h_and_volume():
    m = generate_cuboid_island(3, 3, 1, 0.5)
    assert mesh_size(m) <= 0.5 + 1e-15
    assert m.n_triangles == 84 and m.n_vertices == 49
    assert abs(enclosed_volume(m) - 9.0) <= 1e-12 * 9
    assert_valid(m)


def test_coarsest_cuboid():
    m = generate_cuboid_island(1, 1, 1, 10.0)
    assert len(m.boundary_loops) == 1
    # five faces, each one cell split around its centre
    assert m.n_triangles == 5 * 4
    assert_valid(m)


def test_example1_counts_by_refinement():
    m = generate_cuboid_island(3.2, 3.2, 0.1, 0.05)
    assert (m.n_triangles, m.n_vertices) == (4608, 2369)
    r = refine(m)
    assert (r.n_triangles, r.n_vertices) == (18432, 9345)


def test_example2_counts():
    m = generate_cuboid_island(3, 3, 1, 0.5)
    for _ in range(3):
        m = refine(m)
    assert (m.n_triangles, m.n_vertices) == (5376, 2737)


def test_ring_generator():
    m = generate_ring_island(12, 12, 10, 10, 1, 0.5)
    assert len(m.boundary_loops) == 2
    assert abs(enclosed_volume(m) - 44.0) <= 1e-12 * 44
    assert m.n_triangles * 64 == 33792
    assert_valid(m)
    coarse = generate_ring_island(4, 4, 2, 2, 1, 1.0)
    assert_valid(coarse)
    assert len(coarse.boundary_loops) == 2


@pytest.mark.parametrize("inner", [(12, 12), (12, 10), (13, 11)])
def test_ring_inner_must_fit(inner):
    with pytest.raises(InvalidDimension):
        generate_ring_island(12, 12, *inner, 1, 0.5)


def test_nonpositive_dimensions():
    with pytest.raises(InvalidDimension):
        generate_cuboid_island(0, 1, 1, 0.5)
    with pytest.raises(InvalidDimension):
        generate_cuboid_island(1, 1, 1, -0.5)


def test_refine_bookkeeping_and_h():
    m = generate_cuboid_island(3, 3, 1, 0.5)
    r = refine(m)
    assert r.n_triangles == 4 * m.n_triangles
    assert r.n_vertices == m.n_vertices + len(unique_edges(m.triangles))
    assert mesh_size(r) == pytest.approx(0.25, rel=1e-14)
    rr = refine(r)
    assert_valid(rr)
    assert len(rr.boundary_loops) == len(m.boundary_loops)
    assert abs(enclosed_volume(rr) - 9.0) <= 1e-12 * 9


def test_with_vertices_repins_contact_line():
    m = generate_cuboid_island(3, 3, 1, 0.5)
    V = m.vertices.copy()
    V[m.boundary_vertices, 2] += 1e-9
    m2 = m.with_vertices(V)
    assert np.all(m2.vertices[m.boundary_vertices, 2] == 0.0)
    assert not m2.vertices.flags.writeable


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), refinements=st.integers(0, 1))
def test_random_caps_pass_invariants(seed, refinements):
    m = random_cap(np.random.default_rng(seed))
    for _ in range(refinements):
        m = refine(m)
    assert_valid(m)


@settings(max_examples=20, deadline=None)
@given(
    L=st.floats(0.5, 5), W=st.floats(0.5, 5), H=st.floats(0.05, 2), h=st.floats(0.2, 1.5)
)
def test_generated_cuboids_valid(L, W, H, h):
    m = generate_cuboid_island(L, W, H, h)
    assert_valid(m)
    assert mesh_size(m) <= h * (1 + 1e-12)
    assert enclosed_volume(m) == pytest.approx(L * W * H, rel=1e-12)
