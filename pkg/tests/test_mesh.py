import math

import numpy as np
import pytest

from tsefem.mesh import (CHANNEL_HEIGHT, CHANNEL_LENGTH, CYLINDER, CYLINDER_CENTER, CYLINDER_RADIUS,
                         DIRICHLET, INLET, OUTLET, WALLS, GmshParseError, Mesh, MeshError,
                         build_channel_cylinder_mesh, build_unit_square_mesh, default_segments,
                         read_gmsh, signed_areas, size_field)

TWO_CELL = """$MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
4
1 0 0 0
2 1 0 0
3 1 1 0
4 0 1 0
$EndNodes
$Elements
6
1 1 2 7 1 1 2
2 1 2 7 1 2 3
3 1 2 8 2 3 4
4 1 2 8 2 4 1
5 2 2 0 1 1 2 3
6 2 2 0 1 1 3 4
$EndElements
"""


@pytest.mark.parametrize("n", [1, 3, 8])
def test_unit_square_counts(n):
    m = build_unit_square_mesh(n)
    assert m.num_vertices == (n + 1) ** 2
    assert m.num_cells == 2 * n * n
    assert len(m.boundary_edges) == 4 * n
    assert m.tags == [DIRICHLET]
    assert np.all(signed_areas(m.vertices, m.cells) > 0)
    assert m.cell_areas.sum() == pytest.approx(1.0, rel=1e-14)
    assert np.allclose(m.cell_size, math.sqrt(0.5) / n)


def test_mesh_reorients_clockwise_cells():
    v = np.array([[0, 0], [1, 0], [0, 1]], float)
    m = Mesh(v, [[0, 2, 1]], [[0, 1], [1, 2], [2, 0]], [1, 1, 1])
    assert signed_areas(m.vertices, m.cells)[0] > 0
    assert not m.cells.flags.writeable


def test_mesh_validation_errors():
    v = np.array([[0, 0], [1, 0], [0, 1]], float)
    with pytest.raises(MeshError, match="out of range"):
        Mesh(v, [[0, 1, 5]], np.zeros((0, 2)), [])
    with pytest.raises(MeshError, match="degenerate"):
        Mesh(np.array([[0, 0], [1, 0], [2, 0]], float), [[0, 1, 2]], np.zeros((0, 2)), [])
    with pytest.raises(MeshError, match="one tag"):
        Mesh(v, [[0, 1, 2]], [[0, 1]], [1, 1])
    sq = build_unit_square_mesh(2)
    with pytest.raises(MeshError, match="shared by two cells"):
        Mesh(sq.vertices, sq.cells, [[0, 4]], [1])


def test_channel_geometry():
    m = build_channel_cylinder_mesh(8)
    segs = default_segments(8)
    # the hole is the inscribed polygon, so the area is exact for straight-sided cells
    poly = 0.5 * segs * CYLINDER_RADIUS ** 2 * math.sin(2 * math.pi / segs)
    assert m.cell_areas.sum() == pytest.approx(CHANNEL_LENGTH * CHANNEL_HEIGHT - poly, rel=1e-12)
    assert m.tags == [INLET, OUTLET, WALLS, CYLINDER]
    assert int((m.boundary_tags == CYLINDER).sum()) == segs
    cyl = m.vertices[np.unique(m.edges_with_tag(CYLINDER))]
    assert np.allclose(np.hypot(*(cyl - CYLINDER_CENTER).T), CYLINDER_RADIUS)
    inlet = m.vertices[np.unique(m.edges_with_tag(INLET))]
    assert np.allclose(inlet[:, 0], 0.0)
    outlet = m.vertices[np.unique(m.edges_with_tag(OUTLET))]
    assert np.allclose(outlet[:, 0], CHANNEL_LENGTH)
    # total boundary length: rectangle plus the polygon perimeter
    e = m.boundary_edges
    length = np.linalg.norm(m.vertices[e[:, 0]] - m.vertices[e[:, 1]], axis=1).sum()
    perimeter = 2 * (CHANNEL_LENGTH + CHANNEL_HEIGHT) + 2 * segs * CYLINDER_RADIUS * math.sin(math.pi / segs)
    assert length == pytest.approx(perimeter, rel=1e-12)


def test_default_segments_and_override():
    assert default_segments(35) == 18
    assert default_segments(75) == 38
    assert default_segments(1) == 8
    m = build_channel_cylinder_mesh(8, segments=12)
    assert int((m.boundary_tags == CYLINDER).sum()) == 12


def test_channel_size_decreases_with_resolution():
    a = build_channel_cylinder_mesh(10)
    b = build_channel_cylinder_mesh(20)
    assert b.num_cells > a.num_cells
    assert b.cell_size.max() < a.cell_size.max()


def test_summary_and_size_field():
    m = build_unit_square_mesh(2)
    s = m.summary()
    assert s.startswith("vertices=9 cells=8 boundary_edges=8 h_min=")
    assert np.allclose(size_field(m, "min"), m.cell_size.min())
    assert np.allclose(size_field(m, "max"), m.cell_size.max())
    with pytest.raises(ValueError):
        size_field(m, "avg")


def test_read_gmsh(tmp_path):
    f = tmp_path / "two.msh"
    f.write_text(TWO_CELL)
    m = read_gmsh(f)
    assert m.num_vertices == 4 and m.num_cells == 2
    assert sorted(m.tags) == [7, 8]
    assert len(m.edges_with_tag(7)) == 2
    assert m.cell_areas.sum() == pytest.approx(1.0)


@pytest.mark.parametrize("edit,line,msg", [
    (lambda s: s.replace("2.2 0 8", "4.1 0 8"), 2, "MeshFormat"),
    (lambda s: s.replace("2.2 0 8", "2.2 1 8"), 2, "binary"),
    (lambda s: s.replace("3 1 1 0\n", "3 1 x 0\n"), 8, "malformed node"),
    (lambda s: s.replace("5 2 2 0 1 1 2 3", "5 9 2 0 1 1 2 3"), 17, "unsupported element type 9"),
    (lambda s: s.replace("6 2 2 0 1 1 3 4", "6 2 2 0 1 1 3 9"), 18, "unknown node 9"),
    (lambda s: s.replace("$EndNodes\n", ""), 4, "not terminated"),
])
def test_read_gmsh_errors_carry_line_numbers(tmp_path, edit, line, msg):
    f = tmp_path / "bad.msh"
    f.write_text(edit(TWO_CELL))
    with pytest.raises(GmshParseError, match=msg) as info:
        read_gmsh(f)
    assert info.value.line == line
