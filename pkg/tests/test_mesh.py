import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acoustoelastic.mesh import (BoundaryTag, MeshError, Region, euler_characteristic,
                                 generate_disk_annulus, load_mesh, validate_topology, write_mesh)


def test_boundary_edge_counts_example():
    m = generate_disk_annulus(0.5, 1.0, 2.0, 4, 16)
    assert len(m.outer_edges) == 16
    assert len(m.interface_edges) == 16


@pytest.mark.parametrize("args", [(0.5, 1.0, 2.0, 4, 16), (0.5, 1.0, 2.0, 24, 96), (0.3, 1.0, 1.5, 6, 40)])
def test_euler_characteristic_of_disk(args):
    assert euler_characteristic(generate_disk_annulus(*args)) == 1


def test_refinement_quadruples_cells():
    coarse = generate_disk_annulus(0.5, 1.0, 2.0, 12, 48)
    fine = generate_disk_annulus(0.5, 1.0, 2.0, 24, 96)
    assert 3.5 <= fine.n_cells / coarse.n_cells <= 4.5


@given(r_D=st.floats(0.1, 0.9), a=st.floats(1.0, 1.5), width=st.floats(0.2, 2.0),
       n_radial=st.integers(2, 12), n_angular=st.integers(8, 64))
@settings(max_examples=25, deadline=None)
def test_generated_meshes_are_valid(r_D, a, width, n_radial, n_angular):
    m = generate_disk_annulus(r_D, a, a + width, n_radial, n_angular)
    assert np.all(m.signed_areas() > 0)
    assert m.angles().min() >= 20.0
    assert euler_characteristic(m) == 1
    centroids = m.vertices[m.cells].mean(axis=1)
    r = np.linalg.norm(centroids, axis=1)
    assert np.all(r[m.cell_region == Region.ELASTIC] < r_D)
    fluid = r[m.cell_region == Region.FLUID]
    assert np.all((fluid > r_D * (1 - 1e-9)) & (fluid < a + width))
    assert np.allclose(np.linalg.norm(m.vertices[m.outer_vertices], axis=1), a + width, rtol=1e-12)
    assert np.allclose(np.linalg.norm(m.vertices[m.interface_vertices], axis=1), r_D, rtol=1e-12)


def test_interface_edges_separate_regions(coarse_mesh):
    m = coarse_mesh
    for i, j in m.interface_edges:
        owners = [c for c in range(m.n_cells) if i in m.cells[c] and j in m.cells[c]]
        assert sorted(m.cell_region[owners]) == [Region.ELASTIC, Region.FLUID]
    n = m.interface_normals
    mid = m.vertices[m.interface_edges].mean(axis=1)
    assert np.allclose(np.linalg.norm(n, axis=1), 1.0)
    assert np.all(np.einsum("ij,ij->i", n, mid) > 0)  # points from the solid into the fluid


def test_areas_converge_to_disk_and_annulus(coarse_mesh):
    fine = generate_disk_annulus(0.5, 1.0, 2.0, 24, 96)
    err_c = abs(coarse_mesh.area(Region.FLUID) - np.pi * (4 - 0.25))
    err_f = abs(fine.area(Region.FLUID) - np.pi * (4 - 0.25))
    assert err_f < err_c / 3
    assert fine.area(Region.ELASTIC) == pytest.approx(np.pi * 0.25, rel=2e-3)


@pytest.mark.parametrize("args", [(1.0, 1.0, 2.0, 4, 16), (0.5, 2.0, 1.5, 4, 16), (0.5, 1.0, 2.0, 1, 16),
                                  (0.5, 1.0, 2.0, 4, 4), (0.0, 1.0, 2.0, 4, 16)])
def test_bad_parameters_rejected(args):
    with pytest.raises(MeshError):
        generate_disk_annulus(*args)


def test_mesh_arrays_are_read_only(coarse_mesh):
    with pytest.raises(ValueError):
        coarse_mesh.vertices[0, 0] = 1.0


# -- file round trip and load diagnostics -------------------------------------------------


def test_round_trip(tmp_path, coarse_mesh):
    path = tmp_path / "m.txt"
    write_mesh(coarse_mesh, path)
    back = load_mesh(path)
    assert np.array_equal(back.vertices, coarse_mesh.vertices)
    assert np.array_equal(back.cells, coarse_mesh.cells)
    assert np.array_equal(back.cell_region, coarse_mesh.cell_region)
    assert np.array_equal(back.boundary_edges, coarse_mesh.boundary_edges)
    assert np.array_equal(back.boundary_tags, coarse_mesh.boundary_tags)


def _small_file(tmp_path):
    path = tmp_path / "m.txt"
    write_mesh(generate_disk_annulus(0.5, 1.0, 2.0, 2, 8), path)
    return path, path.read_text().splitlines()


def test_dangling_vertex_index_names_the_cell(tmp_path):
    path, lines = _small_file(tmp_path)
    start = lines.index(next(l for l in lines if l.startswith("cells"))) + 1
    lines[start + 3] = "0 1 999 ELASTIC"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(MeshError, match="cell 3"):
        load_mesh(path)


def test_interface_between_two_fluid_cells_rejected(tmp_path):
    path, lines = _small_file(tmp_path)
    lines = [l.replace("ELASTIC", "FLUID") for l in lines]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(MeshError, match="interface edge 0"):
        load_mesh(path)


def test_malformed_vertex_line_reports_line(tmp_path):
    path, lines = _small_file(tmp_path)
    lines[3] = "0.5 abc"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(MeshError, match=r"m\.txt:4: vertex 1"):
        load_mesh(path)


def test_missing_outer_boundary_rejected(tmp_path):
    path, lines = _small_file(tmp_path)
    keep = [l for l in lines if not l.endswith("OUTER")]
    n_bnd = sum(l.endswith("INTERFACE") for l in keep)
    keep = [f"boundary {n_bnd}" if l.startswith("boundary") else l for l in keep]
    path.write_text("\n".join(keep) + "\n")
    with pytest.raises(MeshError):
        load_mesh(path)


def test_validate_topology_rejects_clockwise_cell():
    v = np.array([[0, 0], [1, 0], [0, 1], [1, 1.0]])
    cells = np.array([[0, 2, 1], [1, 3, 2]])
    with pytest.raises(MeshError, match="orient"):
        validate_topology(v, cells, np.array([1, 1]), np.array([[0, 1]]), np.array([BoundaryTag.OUTER]))

