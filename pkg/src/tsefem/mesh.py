"""Triangulations with tagged boundaries.

Builders for the unit square and the channel-with-cylinder domain, plus a
reader for Gmsh MSH 2.2 ASCII files.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay

DIRICHLET = 1

INLET = 1
OUTLET = 2
WALLS = 3
CYLINDER = 4

CHANNEL_LENGTH = 2.2
CHANNEL_HEIGHT = 0.41
CYLINDER_CENTER = (0.205, 0.205)
CYLINDER_RADIUS = 0.05


class MeshError(ValueError):
    pass


class GmshParseError(MeshError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


def signed_areas(vertices: np.ndarray, cells: np.ndarray) -> np.ndarray:
    p0, p1, p2 = (vertices[cells[:, i]] for i in range(3))
    d1 = p1 - p0
    d2 = p2 - p0
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


@dataclass(frozen=True)
class Mesh:
    """Immutable triangulation.

    Cells are reoriented counter-clockwise on construction. ``cell_size`` is
    always ``sqrt(area)`` per cell.
    """

    vertices: np.ndarray
    cells: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    tag_names: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        vertices = np.ascontiguousarray(self.vertices, dtype=float)
        cells = np.array(self.cells, dtype=np.int64).reshape(-1, 3)
        edges = np.array(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        tags = np.array(self.boundary_tags, dtype=np.int64).reshape(-1)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshError("vertices must have shape (n, 2)")
        nv = len(vertices)
        if cells.size and (cells.min() < 0 or cells.max() >= nv):
            raise MeshError("cell vertex index out of range")
        if edges.size and (edges.min() < 0 or edges.max() >= nv):
            raise MeshError("boundary edge vertex index out of range")
        if len(tags) != len(edges):
            raise MeshError("one tag per boundary edge required")
        area = signed_areas(vertices, cells)
        flip = area < 0
        cells[flip] = cells[flip][:, [0, 2, 1]]
        area = np.abs(area)
        if np.any(area <= 0):
            raise MeshError(f"degenerate cell(s): {np.flatnonzero(area <= 0)[:5]}")
        for arr in (vertices, cells, edges, tags):
            arr.flags.writeable = False
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "boundary_edges", edges)
        object.__setattr__(self, "boundary_tags", tags)
        object.__setattr__(self, "tag_names", dict(self.tag_names))
        _check_boundary_edges(cells, edges)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    @property
    def cell_areas(self) -> np.ndarray:
        return np.abs(signed_areas(self.vertices, self.cells))

    @property
    def cell_size(self) -> np.ndarray:
        return np.sqrt(self.cell_areas)

    @property
    def tags(self) -> list[int]:
        return sorted(set(self.boundary_tags.tolist()))

    def edges_with_tag(self, tag: int) -> np.ndarray:
        return self.boundary_edges[self.boundary_tags == tag]

    def summary(self) -> str:
        h = self.cell_size
        return (
            f"vertices={self.num_vertices} cells={self.num_cells} "
            f"boundary_edges={len(self.boundary_edges)} "
            f"h_min={h.min():.6g} h_max={h.max():.6g}"
        )


def size_field(mesh: Mesh, mode: str = "cell") -> np.ndarray:
    """Per-cell mesh size: the cell field itself, or its min/max broadcast."""
    h = mesh.cell_size
    if mode == "cell":
        return h
    if mode == "min":
        return np.full_like(h, h.min())
    if mode == "max":
        return np.full_like(h, h.max())
    raise ValueError(f"unknown size mode {mode!r}")


def _edge_keys(a: np.ndarray, b: np.ndarray, nv: int) -> np.ndarray:
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    return lo * nv + hi


def _check_boundary_edges(cells: np.ndarray, edges: np.ndarray) -> None:
    if not len(edges):
        return
    nv = int(max(cells.max(), edges.max())) + 1
    local = cells[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 3, 2)
    keys = _edge_keys(local[..., 0].ravel(), local[..., 1].ravel(), nv)
    uniq, counts = np.unique(keys, return_counts=True)
    bkeys = _edge_keys(edges[:, 0], edges[:, 1], nv)
    pos = np.searchsorted(uniq, bkeys)
    pos = np.clip(pos, 0, len(uniq) - 1)
    found = uniq[pos] == bkeys
    if not found.all():
        bad = edges[~found][0]
        raise MeshError(f"boundary edge {tuple(bad)} is not an edge of any cell")
    if np.any(counts[pos] != 1):
        bad = edges[counts[pos] != 1][0]
        raise MeshError(f"boundary edge {tuple(bad)} is shared by two cells")


def exterior_edges(cells: np.ndarray) -> np.ndarray:
    """Edges owned by exactly one cell, oriented as in that cell."""
    local = cells[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
    nv = int(cells.max()) + 1
    keys = _edge_keys(local[:, 0], local[:, 1], nv)
    _, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
    return local[counts[inverse] == 1]


def build_unit_square_mesh(n: int) -> Mesh:
    """Uniform ``n x n`` grid on [0,1]^2, squares split lower-left to upper-right."""
    if n < 1:
        raise MeshError("n must be >= 1")
    x = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(x, x, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    v00 = idx[:-1, :-1].ravel()
    v10 = idx[:-1, 1:].ravel()
    v01 = idx[1:, :-1].ravel()
    v11 = idx[1:, 1:].ravel()
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    cells = np.stack([lower, upper], axis=1).reshape(-1, 3)
    edges = exterior_edges(cells)
    return Mesh(vertices, cells, edges, np.full(len(edges), DIRICHLET),
                tag_names={"dirichlet": DIRICHLET})


def _walk(p0, p1, size, fine):
    """Points along a segment, spaced by the local target size."""
    p0 = np.asarray(p0, float)
    p1 = np.asarray(p1, float)
    length = np.linalg.norm(p1 - p0)
    s = np.linspace(0.0, 1.0, max(int(length / fine) * 4, 8) + 1)
    pts = p0 + s[:, None] * (p1 - p0)
    density = 1.0 / size(pts)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (density[1:] + density[:-1]) * np.diff(s) * length)])
    count = max(int(round(cum[-1])), 1)
    targets = np.linspace(0.0, cum[-1], count + 1)
    t = np.interp(targets, cum, s)
    return p0 + t[:, None] * (p1 - p0)


def default_segments(resolution: int) -> int:
    """Cylinder polygon size giving sqrt(cell area) ~ H / resolution at the wall.

    An equilateral cell with edge e has sqrt(area) = 0.658 e.
    """
    edge = CHANNEL_HEIGHT / (0.658 * resolution)
    return max(8, int(round(2 * math.pi * CYLINDER_RADIUS / edge)))


def build_channel_cylinder_mesh(resolution: int, segments: int | None = None,
                                wake_refinement: float = 1.0,
                                grading: float = 0.25,
                                smoothing: int = 4) -> Mesh:
    """Channel ``[0, 2.2] x [0, 0.41]`` minus a polygonal cylinder.

    ``resolution`` follows the mshr convention: the far-field cell size is the
    bounding-circle diameter divided by ``resolution``. The cylinder is an
    inscribed ``segments``-gon; by default its size is picked so that the
    smallest cells have sqrt(area) close to ``H / resolution``. ``wake_refinement`` < 1 shrinks the target size
    downstream of the cylinder by that factor.
    """
    if resolution < 8:
        raise MeshError("resolution must be >= 8")
    if segments is None:
        segments = default_segments(resolution)
    if segments < 8:
        raise MeshError("cylinder needs at least 8 segments")
    L, H = CHANNEL_LENGTH, CHANNEL_HEIGHT
    c = np.array(CYLINDER_CENTER)
    r0 = CYLINDER_RADIUS
    h_far = 2.0 * math.hypot(L / 2, H / 2) / resolution
    h_cyl = 2.0 * r0 * math.sin(math.pi / segments)
    h_far = max(h_far, h_cyl)

    def size(p):
        p = np.atleast_2d(p)
        d = np.linalg.norm(p - c, axis=1) - r0
        s = np.minimum(h_far, h_cyl + grading * np.maximum(d, 0.0))
        if wake_refinement != 1.0:
            wake = (p[:, 0] > c[0]) & (np.abs(p[:, 1] - c[1]) < 4 * r0)
            s = np.where(wake, np.maximum(s * wake_refinement, h_cyl), s)
        return s

    theta = 2 * np.pi * np.arange(segments) / segments
    circle = c + r0 * np.column_stack([np.cos(theta), np.sin(theta)])

    corners = [(0.0, 0.0), (L, 0.0), (L, H), (0.0, H)]
    boundary = []
    for a, b in zip(corners, corners[1:] + corners[:1]):
        boundary.append(_walk(a, b, size, h_cyl)[:-1])
    boundary = np.vstack(boundary)

    interior = []
    r = r0
    s = h_cyl
    k = 0
    while s < h_far * 0.999:
        r = r + s * math.sqrt(3) / 2
        s = float(size(c + [r, 0.0])[0])
        n_ring = max(segments, int(round(2 * np.pi * r / s)))
        phase = (0.5 * (k % 2)) * 2 * np.pi / n_ring
        ang = phase + 2 * np.pi * np.arange(n_ring) / n_ring
        ring = c + r * np.column_stack([np.cos(ang), np.sin(ang)])
        interior.append(ring)
        k += 1
    r_zone = r + 0.6 * h_far

    dy = h_far * math.sqrt(3) / 2
    rows = np.arange(0.0, H + dy, dy)
    lattice = []
    for j, y in enumerate(rows):
        xs = np.arange(0.0, L + h_far, h_far) + (0.5 * h_far if j % 2 else 0.0)
        lattice.append(np.column_stack([xs, np.full_like(xs, y)]))
    interior.append(np.vstack(lattice))
    interior = np.vstack(interior)

    s_int = size(interior)
    margin = 0.45 * s_int
    inside = (
        (interior[:, 0] > margin) & (interior[:, 0] < L - margin)
        & (interior[:, 1] > margin) & (interior[:, 1] < H - margin)
    )
    d = np.linalg.norm(interior - c, axis=1)
    lattice_mask = np.zeros(len(interior), bool)
    lattice_mask[-sum(len(x) for x in lattice):] = True
    keep = inside & (d > r0 + 0.5 * h_cyl) & (~lattice_mask | (d > r_zone))
    interior = interior[keep]

    fixed = np.vstack([boundary, circle])
    points = np.vstack([fixed, interior])
    n_fixed = len(fixed)
    r_in = r0 * math.cos(math.pi / segments)

    def triangulate(pts):
        tri = Delaunay(pts)
        simp = tri.simplices
        cent = pts[simp].mean(axis=1)
        keep = np.linalg.norm(cent - c, axis=1) > r_in
        simp = simp[keep]
        area = np.abs(signed_areas(pts, simp))
        return simp[area > 1e-14 * h_cyl ** 2]

    cells = triangulate(points)
    for _ in range(smoothing):
        nbr_sum = np.zeros_like(points)
        deg = np.zeros(len(points))
        for a, b in ((0, 1), (1, 2), (2, 0)):
            np.add.at(nbr_sum, cells[:, a], points[cells[:, b]])
            np.add.at(nbr_sum, cells[:, b], points[cells[:, a]])
            np.add.at(deg, cells[:, a], 1.0)
            np.add.at(deg, cells[:, b], 1.0)
        moved = points.copy()
        free = np.arange(n_fixed, len(points))
        moved[free] = 0.5 * points[free] + 0.5 * nbr_sum[free] / deg[free, None]
        dm = np.linalg.norm(moved[free] - c, axis=1)
        ok = dm > r0 + 0.3 * h_cyl
        points[free[ok]] = moved[free[ok]]
        cells = triangulate(points)

    used = np.unique(cells)
    remap = -np.ones(len(points), np.int64)
    remap[used] = np.arange(len(used))
    points = points[used]
    cells = remap[cells]

    edges = exterior_edges(cells)
    mid = points[edges].mean(axis=1)
    tol = 1e-9
    tags = np.full(len(edges), CYLINDER)
    tags[np.abs(mid[:, 0]) < tol] = INLET
    tags[np.abs(mid[:, 0] - L) < tol] = OUTLET
    tags[(np.abs(mid[:, 1]) < tol) | (np.abs(mid[:, 1] - H) < tol)] = WALLS
    cyl = tags == CYLINDER
    dv = np.linalg.norm(points[edges[cyl]] - c, axis=2)
    if cyl.sum() != segments or np.any(np.abs(dv - r0) > 1e-10):
        raise MeshError("cylinder boundary was not recovered by the triangulation")
    return Mesh(points, cells, edges, tags,
                tag_names={"inlet": INLET, "outlet": OUTLET, "walls": WALLS, "cylinder": CYLINDER})


def read_gmsh(path) -> Mesh:
    """Read a Gmsh MSH 2.2 ASCII file (line and triangle elements)."""
    lines = Path(path).read_text().splitlines()
    sections: dict[str, tuple[int, int]] = {}
    i = 0
    while i < len(lines):
        s = lines[i].strip()
        if s.startswith("$") and not s.startswith("$End"):
            name = s[1:]
            end = f"$End{name}"
            j = i + 1
            while j < len(lines) and lines[j].strip() != end:
                j += 1
            if j == len(lines):
                raise GmshParseError(f"section ${name} not terminated", i + 1)
            sections[name] = (i + 1, j)
            i = j + 1
        else:
            if s:
                raise GmshParseError(f"unexpected content {s!r}", i + 1)
            i += 1

    if "MeshFormat" not in sections:
        raise GmshParseError("missing $MeshFormat header", 1)
    a, b = sections["MeshFormat"]
    head = lines[a].split() if a < b else []
    if len(head) < 3 or not head[0].startswith("2."):
        raise GmshParseError("unsupported or malformed $MeshFormat (need 2.2 ASCII)", a + 1)
    if head[1] != "0":
        raise GmshParseError("binary MSH files are not supported", a + 1)
    for name in ("Nodes", "Elements"):
        if name not in sections:
            raise GmshParseError(f"missing ${name} section")

    a, b = sections["Nodes"]
    try:
        count = int(lines[a])
    except (ValueError, IndexError):
        raise GmshParseError("bad node count", a + 1) from None
    if b - a - 1 != count:
        raise GmshParseError(f"expected {count} nodes, found {b - a - 1}", a + 1)
    node_index: dict[int, int] = {}
    coords = np.empty((count, 2))
    for k in range(count):
        ln = a + 1 + k
        parts = lines[ln].split()
        try:
            nid = int(parts[0])
            coords[k] = float(parts[1]), float(parts[2])
        except (ValueError, IndexError):
            raise GmshParseError("malformed node line", ln + 1) from None
        node_index[nid] = k

    a, b = sections["Elements"]
    try:
        count = int(lines[a])
    except (ValueError, IndexError):
        raise GmshParseError("bad element count", a + 1) from None
    if b - a - 1 != count:
        raise GmshParseError(f"expected {count} elements, found {b - a - 1}", a + 1)
    tris, segs, seg_tags = [], [], []
    for k in range(count):
        ln = a + 1 + k
        try:
            parts = [int(x) for x in lines[ln].split()]
            etype, ntags = parts[1], parts[2]
            tags = parts[3:3 + ntags]
            nodes = parts[3 + ntags:]
        except (ValueError, IndexError):
            raise GmshParseError("malformed element line", ln + 1) from None
        if etype == 15:
            continue
        expect = {1: 2, 2: 3}.get(etype)
        if expect is None:
            raise GmshParseError(f"unsupported element type {etype}", ln + 1)
        if len(nodes) != expect:
            raise GmshParseError(f"element type {etype} needs {expect} nodes", ln + 1)
        try:
            local = [node_index[n] for n in nodes]
        except KeyError as exc:
            raise GmshParseError(f"element references unknown node {exc.args[0]}", ln + 1) from None
        if etype == 2:
            tris.append(local)
        else:
            segs.append(local)
            seg_tags.append(tags[0] if tags else 0)
    if not tris:
        raise GmshParseError("no triangle elements")
    cells = np.array(tris, np.int64)
    used = np.unique(cells)
    remap = -np.ones(len(coords), np.int64)
    remap[used] = np.arange(len(used))
    segs = np.array(segs, np.int64).reshape(-1, 2)
    if segs.size and np.any(remap[segs] < 0):
        raise GmshParseError("line element node not used by any triangle")
    return Mesh(coords[used], remap[cells], remap[segs] if segs.size else segs,
                np.array(seg_tags, np.int64))
