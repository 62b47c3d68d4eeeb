"""Taylor-Hood P2/P1 function spaces on a triangle mesh.

Scalar P2 nodes are numbered vertices first, then edges (edge key = sorted
vertex pair, in lexicographic order). Velocity DOFs interleave components:
``2*node + component``. Pressure DOFs are the mesh vertices.

Local P2 node order on a cell with vertices (v0, v1, v2): v0, v1, v2, then the
midpoints of edges (v0,v1), (v1,v2), (v2,v0).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh

LOCAL_EDGES = np.array([[0, 1], [1, 2], [2, 0]])


def p1_reference(xi, eta):
    """Barycentric values and reference gradients at points (xi, eta)."""
    xi = np.asarray(xi, float)
    eta = np.asarray(eta, float)
    lam = np.stack([1.0 - xi - eta, xi, eta], axis=-1)
    grad = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    return lam, np.broadcast_to(grad, lam.shape + (2,))


def p2_reference(xi, eta):
    """Quadratic Lagrange values (..., 6) and reference gradients (..., 6, 2)."""
    lam, dlam = p1_reference(xi, eta)
    l0, l1, l2 = lam[..., 0], lam[..., 1], lam[..., 2]
    vals = np.stack([
        l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
        4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0,
    ], axis=-1)
    g = dlam[..., 0, :], dlam[..., 1, :], dlam[..., 2, :]
    L = l0[..., None], l1[..., None], l2[..., None]
    grads = np.stack([
        (4 * L[0] - 1) * g[0], (4 * L[1] - 1) * g[1], (4 * L[2] - 1) * g[2],
        4 * (L[0] * g[1] + L[1] * g[0]),
        4 * (L[1] * g[2] + L[2] * g[1]),
        4 * (L[2] * g[0] + L[0] * g[2]),
    ], axis=-2)
    return vals, grads


@dataclass(frozen=True)
class MixedSpace:
    mesh: Mesh
    edges: np.ndarray            # (ne, 2) sorted vertex pairs
    cell_nodes: np.ndarray       # (nc, 6) scalar P2 node indices
    node_coords: np.ndarray      # (nn, 2)
    boundary_nodes: dict         # tag -> sorted scalar P2 node indices
    jacobians: np.ndarray        # (nc, 2, 2) columns x1-x0, x2-x0
    inv_jacobians: np.ndarray    # (nc, 2, 2)
    det: np.ndarray              # (nc,) positive

    @property
    def num_nodes(self) -> int:
        return len(self.node_coords)

    @property
    def num_velocity_dofs(self) -> int:
        return 2 * self.num_nodes

    @property
    def num_pressure_dofs(self) -> int:
        return self.mesh.num_vertices

    @property
    def cell_to_pdofs(self) -> np.ndarray:
        return self.mesh.cells

    @property
    def cell_to_vdofs(self) -> np.ndarray:
        n = self.cell_nodes
        return np.stack([2 * n, 2 * n + 1], axis=-1).reshape(len(n), 12)

    @property
    def velocity_dof_coords(self) -> np.ndarray:
        return np.repeat(self.node_coords, 2, axis=0)

    @property
    def pressure_dof_coords(self) -> np.ndarray:
        return self.mesh.vertices

    @property
    def boundary_vdofs(self) -> dict:
        return {t: np.sort(np.concatenate([2 * n, 2 * n + 1]))
                for t, n in self.boundary_nodes.items()}

    def all_boundary_nodes(self) -> np.ndarray:
        if not self.boundary_nodes:
            return np.zeros(0, np.int64)
        return np.unique(np.concatenate(list(self.boundary_nodes.values())))

    def map_points(self, ref: np.ndarray) -> np.ndarray:
        """Physical coordinates (nc, nq, 2) of reference points (nq, 2)."""
        x0 = self.mesh.vertices[self.mesh.cells[:, 0]]
        return x0[:, None, :] + np.einsum("cij,qj->cqi", self.jacobians, ref)

    def physical_gradients(self, ref_grads: np.ndarray) -> np.ndarray:
        """Map reference gradients (nq, nb, 2) to physical ones (nc, nq, nb, 2)."""
        return np.einsum("qbj,cji->cqbi", ref_grads, self.inv_jacobians)

    def interpolate_velocity(self, func, t: float = 0.0) -> np.ndarray:
        """Nodal P2 interpolant of ``func(x, y, t) -> (ux, uy)``."""
        x, y = self.node_coords.T
        ux, uy = func(x, y, t)
        out = np.empty(self.num_velocity_dofs)
        out[0::2] = np.broadcast_to(ux, x.shape)
        out[1::2] = np.broadcast_to(uy, x.shape)
        return out

    def interpolate_pressure(self, func, t: float = 0.0) -> np.ndarray:
        x, y = self.mesh.vertices.T
        return np.broadcast_to(np.asarray(func(x, y, t), float), x.shape).copy()

    def locate(self, points: np.ndarray):
        """Cell index and reference coordinates of physical points (brute force)."""
        points = np.atleast_2d(points)
        x0 = self.mesh.vertices[self.mesh.cells[:, 0]]
        cells = np.full(len(points), -1)
        ref = np.zeros((len(points), 2))
        for i, p in enumerate(points):
            r = np.einsum("cij,cj->ci", self.inv_jacobians, p - x0)
            ok = (r[:, 0] >= -1e-12) & (r[:, 1] >= -1e-12) & (r.sum(1) <= 1 + 1e-12)
            hit = np.flatnonzero(ok)
            if len(hit):
                cells[i] = hit[0]
                ref[i] = r[hit[0]]
        return cells, ref

    def evaluate_velocity(self, U: np.ndarray, points: np.ndarray) -> np.ndarray:
        cells, ref = self.locate(points)
        if np.any(cells < 0):
            raise ValueError("point outside mesh")
        vals, _ = p2_reference(ref[:, 0], ref[:, 1])
        nodes = self.cell_nodes[cells]
        return np.stack([(vals * U[2 * nodes + c]).sum(1) for c in (0, 1)], axis=-1)


def build_taylor_hood(mesh: Mesh) -> MixedSpace:
    cells = mesh.cells
    nv = mesh.num_vertices
    local = cells[:, LOCAL_EDGES]                  # (nc, 3, 2)
    lo = np.minimum(local[..., 0], local[..., 1])
    hi = np.maximum(local[..., 0], local[..., 1])
    keys = lo * nv + hi
    uniq, inverse = np.unique(keys.ravel(), return_inverse=True)
    edges = np.column_stack([uniq // nv, uniq % nv])
    cell_edges = inverse.reshape(-1, 3)
    cell_nodes = np.hstack([cells, nv + cell_edges])
    verts = mesh.vertices
    node_coords = np.vstack([verts, 0.5 * (verts[edges[:, 0]] + verts[edges[:, 1]])])

    boundary_nodes = {}
    be = mesh.boundary_edges
    if len(be):
        bkeys = np.minimum(be[:, 0], be[:, 1]) * nv + np.maximum(be[:, 0], be[:, 1])
        bedge_idx = np.searchsorted(uniq, bkeys)
        for tag in mesh.tags:
            sel = mesh.boundary_tags == tag
            nodes = np.concatenate([be[sel].ravel(), nv + bedge_idx[sel]])
            boundary_nodes[tag] = np.unique(nodes)

    x0 = verts[cells[:, 0]]
    J = np.stack([verts[cells[:, 1]] - x0, verts[cells[:, 2]] - x0], axis=-1)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    invJ = np.empty_like(J)
    invJ[:, 0, 0] = J[:, 1, 1] / det
    invJ[:, 1, 1] = J[:, 0, 0] / det
    invJ[:, 0, 1] = -J[:, 0, 1] / det
    invJ[:, 1, 0] = -J[:, 1, 0] / det
    for arr in (edges, cell_nodes, node_coords, J, invJ, det):
        arr.flags.writeable = False
    return MixedSpace(mesh, edges, cell_nodes, node_coords, boundary_nodes, J, invJ, det)


def evaluate_basis(space: MixedSpace, cell: int, reference_point):
    """Values and physical gradients of the P2 and P1 bases on one cell.

    Returns ``(p2_values (6,), p2_grads (6, 2), p1_values (3,), p1_grads (3, 2))``.
    """
    xi, eta = (float(v) for v in reference_point)
    tol = 1e-14
    if xi < -tol or eta < -tol or xi + eta > 1 + tol:
        raise ValueError(f"reference point {reference_point} outside the reference triangle")
    v2, g2 = p2_reference(xi, eta)
    v1, g1 = p1_reference(xi, eta)
    invJ = space.inv_jacobians[cell]
    return v2, g2 @ invJ, v1, g1 @ invJ
