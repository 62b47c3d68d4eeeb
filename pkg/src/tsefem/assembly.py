"""Weak-form assembly for the Taylor-Hood discretization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .spaces import LOCAL_EDGES, MixedSpace, p1_reference, p2_reference


def _sym_rule(center_w, orbits):
    pts, wts = [], []
    if center_w is not None:
        pts.append((1 / 3, 1 / 3))
        wts.append(center_w)
    for a, w in orbits:
        b = 1 - 2 * a
        pts += [(a, a), (b, a), (a, b)]
        wts += [w, w, w]
    # weights sum to 1; scale to the reference area 1/2
    return np.array(pts), 0.5 * np.array(wts)


# 6-point degree-4 rule (Dunavant)
QUAD4 = _sym_rule(None, [(0.445948490915965, 0.223381589678011),
                         (0.091576213509771, 0.109951743655322)])
# 7-point degree-5 rule (Radon)
_s15 = np.sqrt(15.0)
QUAD5 = _sym_rule(9 / 40, [((6 - _s15) / 21, (155 - _s15) / 1200),
                           ((6 + _s15) / 21, (155 + _s15) / 1200)])


class QuadratureData:
    """Basis tables at the quadrature points of every cell."""

    def __init__(self, space: MixedSpace, rule=QUAD5):
        self.space = space
        self.points, self.weights = rule
        xi, eta = self.points.T
        self.p2, g2 = p2_reference(xi, eta)          # (nq, 6), (nq, 6, 2)
        self.p1, g1 = p1_reference(xi, eta)          # (nq, 3), (nq, 3, 2)
        self.dp2 = space.physical_gradients(g2)      # (nc, nq, 6, 2)
        self.dp1 = space.physical_gradients(np.ascontiguousarray(g1))
        self.wdet = space.det[:, None] * self.weights[None, :]   # (nc, nq)
        self.x = space.map_points(self.points)       # (nc, nq, 2)

    def local_velocity(self, U: np.ndarray) -> np.ndarray:
        n = self.space.cell_nodes
        return np.stack([U[2 * n], U[2 * n + 1]], axis=-1)  # (nc, 6, 2)

    def velocity(self, U: np.ndarray):
        """Values (nc, nq, 2) and gradients (nc, nq, 2, 2), grad[..., i, j] = d u_i / d x_j."""
        loc = self.local_velocity(U)
        vals = np.einsum("qa,cai->cqi", self.p2, loc)
        grads = np.einsum("cqaj,cai->cqij", self.dp2, loc)
        return vals, grads

    def pressure(self, P: np.ndarray) -> np.ndarray:
        return np.einsum("qa,ca->cq", self.p1, P[self.space.mesh.cells])

    def integrate(self, f: np.ndarray) -> float:
        return float((self.wdet * f).sum())

    def scatter_velocity(self, f: np.ndarray) -> np.ndarray:
        """Assemble ``int f . psi`` for a field f given at quadrature points (nc, nq, 2)."""
        loc = np.einsum("cq,qa,cqi->cai", self.wdet, self.p2, f)
        return self.scatter_local(loc)

    def scatter_local(self, loc: np.ndarray) -> np.ndarray:
        n = self.space.cell_nodes
        idx = np.stack([2 * n, 2 * n + 1], axis=-1)
        return np.bincount(idx.ravel(), weights=loc.ravel(),
                           minlength=self.space.num_velocity_dofs)


@dataclass(frozen=True)
class AssembledForms:
    mass: sp.csr_matrix            # velocity mass, A_1
    stiffness: sp.csr_matrix       # velocity stiffness, int grad u : grad v
    divergence: sp.csr_matrix      # (np, nu): int phi_j div psi_l
    mean_row: np.ndarray           # int phi_j over pressure DOFs
    pressure_mass: sp.csr_matrix
    scalar_mass: sp.csr_matrix     # P2 scalar blocks
    scalar_stiffness: sp.csr_matrix

    @property
    def area(self) -> float:
        return float(self.mean_row.sum())


def _scalar_pairs(nodes):
    rows = np.repeat(nodes[:, :, None], nodes.shape[1], axis=2)
    cols = np.repeat(nodes[:, None, :], nodes.shape[1], axis=1)
    return rows.ravel(), cols.ravel()


def _csr(vals, rows, cols, shape):
    return sp.coo_matrix((vals.ravel(), (rows, cols)), shape=shape).tocsr()


def scalar_p2_stiffness(space: MixedSpace, weights=None, rule=QUAD4) -> sp.csr_matrix:
    """P2 scalar stiffness, optionally with a per-cell coefficient."""
    qd = QuadratureData(space, rule)
    w = qd.wdet if weights is None else qd.wdet * np.asarray(weights)[:, None]
    loc = np.einsum("cq,cqak,cqbk->cab", w, qd.dp2, qd.dp2)
    rows, cols = _scalar_pairs(space.cell_nodes)
    return _csr(loc, rows, cols, (space.num_nodes,) * 2)


def vectorize(scalar: sp.spmatrix) -> sp.csr_matrix:
    """Interleaved two-component version of a scalar P2 operator."""
    return sp.kron(scalar, sp.identity(2), format="csr")


def weighted_stiffness(space: MixedSpace, weights) -> sp.csr_matrix:
    return vectorize(scalar_p2_stiffness(space, weights))


def assemble_forms(space: MixedSpace, rule=QUAD4) -> AssembledForms:
    qd = QuadratureData(space, rule)
    nodes = space.cell_nodes
    cells = space.mesh.cells
    nn, npr = space.num_nodes, space.num_pressure_dofs

    rows, cols = _scalar_pairs(nodes)
    m2 = np.einsum("cq,qa,qb->cab", qd.wdet, qd.p2, qd.p2)
    k2 = np.einsum("cq,cqak,cqbk->cab", qd.wdet, qd.dp2, qd.dp2)
    Ms = _csr(m2, rows, cols, (nn, nn))
    Ks = _csr(k2, rows, cols, (nn, nn))

    prow, pcol = _scalar_pairs(cells)
    m1 = np.einsum("cq,qa,qb->cab", qd.wdet, qd.p1, qd.p1)
    Mp = _csr(m1, prow, pcol, (npr, npr))

    # D[j, 2l+c] = int phi_j d psi_l / d x_c
    d = np.einsum("cq,qj,cqlk->cjlk", qd.wdet, qd.p1, qd.dp2)     # (nc, 3, 6, 2)
    drow = np.broadcast_to(cells[:, :, None, None], d.shape)
    dcol = np.broadcast_to((2 * nodes[:, None, :, None] + np.arange(2)), d.shape)
    D = _csr(d, drow.ravel(), dcol.ravel(), (npr, 2 * nn))

    mean_row = np.asarray(Mp.sum(axis=0)).ravel()
    return AssembledForms(vectorize(Ms), vectorize(Ks), D, mean_row, Mp, Ms, Ks)


def p1_element_matrices(vertices) -> tuple[np.ndarray, np.ndarray]:
    """Local P1 mass and stiffness on one triangle, by quadrature."""
    v = np.asarray(vertices, float)
    J = np.column_stack([v[1] - v[0], v[2] - v[0]])
    det = abs(np.linalg.det(J))
    pts, wts = QUAD4
    lam, g = p1_reference(pts[:, 0], pts[:, 1])
    grad = g[0] @ np.linalg.inv(J)
    mass = det * np.einsum("q,qa,qb->ab", wts, lam, lam)
    stiff = det * wts.sum() * grad @ grad.T
    return mass, stiff


def convection_term(qd: QuadratureData, modes, k: int, evaluated=None) -> np.ndarray:
    """Assemble ``sum_m int (u_m . grad) u_{k-m} . psi`` over m = 0..k."""
    if evaluated is None:
        evaluated = [qd.velocity(modes[m]) for m in range(k + 1)]
    conv = np.zeros_like(evaluated[0][0])
    for m in range(k + 1):
        um = evaluated[m][0]
        g = evaluated[k - m][1]
        conv += np.einsum("cqj,cqij->cqi", um, g)
    return qd.scatter_velocity(conv)


def neumann_vector(space: MixedSpace, tag: int, func, npts: int = 4) -> np.ndarray:
    """Assemble ``int_{Gamma_tag} f . psi ds`` for ``func(x, y) -> (fx, fy)``."""
    mesh = space.mesh
    out = np.zeros(space.num_velocity_dofs)
    edges = mesh.edges_with_tag(tag)
    if not len(edges):
        return out
    gx, gw = np.polynomial.legendre.leggauss(npts)
    s = 0.5 * (gx + 1.0)
    w = 0.5 * gw
    nv = mesh.num_vertices
    keys = np.minimum(edges[:, 0], edges[:, 1]) * nv + np.maximum(edges[:, 0], edges[:, 1])
    ekeys = space.edges[:, 0] * nv + space.edges[:, 1]
    mid = nv + np.searchsorted(ekeys, keys)
    a = mesh.vertices[edges[:, 0]]
    b = mesh.vertices[edges[:, 1]]
    length = np.linalg.norm(b - a, axis=1)
    pts = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
    fx, fy = func(pts[..., 0], pts[..., 1])
    f = np.stack([np.broadcast_to(fx, pts.shape[:2]), np.broadcast_to(fy, pts.shape[:2])], -1)
    # 1D quadratic Lagrange on the edge: nodes a, b, mid
    phi = np.stack([(1 - s) * (1 - 2 * s), s * (2 * s - 1), 4 * s * (1 - s)], -1)
    loc = np.einsum("e,q,qa,eqi->eai", length, w, phi, f)
    nodes = np.column_stack([edges, mid])
    for i in range(2):
        np.add.at(out, 2 * nodes + i, loc[..., i])
    return out


def assemble_series_rhs(space: MixedSpace, forms: AssembledForms, modes, k: int, Re: float,
                        neumann=None, convection: bool = True, qd: QuadratureData | None = None,
                        evaluated=None) -> np.ndarray:
    """Weak right-hand side of the rank-k recurrence.

    ``-sum_m int (u_m.grad)u_{k-m}.psi - (1/Re) int grad u_k : grad psi + int f_k . psi ds``.
    ``neumann`` maps tag -> callable ``(x, y) -> (fx, fy)`` giving the rank-k datum.
    """
    if Re <= 0:
        raise ValueError("Re must be positive")
    if k < 0 or k >= len(modes):
        raise IndexError(f"rank {k} needs modes 0..{k}, have {len(modes)}")
    rhs = -(forms.stiffness @ modes[k]) / Re
    if convection:
        if qd is None:
            qd = QuadratureData(space, QUAD5)
        rhs -= convection_term(qd, modes, k, evaluated)
    for tag, func in (neumann or {}).items():
        if func is not None:
            rhs += neumann_vector(space, tag, func)
    return rhs


def convection_jacobian(qd: QuadratureData, U: np.ndarray) -> sp.csr_matrix:
    """Derivative of ``int (u.grad)u . psi`` with respect to the velocity DOFs at U."""
    space = qd.space
    vals, grads = qd.velocity(U)
    # (du . grad) u : phi_b e_d -> phi_b d_d u_i
    t1 = np.einsum("cq,qa,qb,cqid->caibd", qd.wdet, qd.p2, qd.p2, grads)
    # (u . grad) du : (u . grad phi_b) delta_id
    adv = np.einsum("cqj,cqbj->cqb", vals, qd.dp2)
    t2 = np.einsum("cq,qa,cqb->cab", qd.wdet, qd.p2, adv)
    loc = t1 + np.einsum("cab,id->caibd", t2, np.eye(2))
    n = space.cell_nodes
    idx = np.stack([2 * n, 2 * n + 1], axis=-1)          # (nc, 6, 2)
    rows = np.broadcast_to(idx[:, :, :, None, None], loc.shape)
    cols = np.broadcast_to(idx[:, None, None, :, :], loc.shape)
    return _csr(loc, rows.ravel(), cols.ravel(), (space.num_velocity_dofs,) * 2)


class ConstraintError(ValueError):
    pass


@dataclass
class SaddleSystem:
    """Constrained block system ``[[A, B^T, 0], [B, 0, m], [0, m^T, 0]]``.

    ``B`` is the negated divergence matrix so the pressure unknown is the
    physical pressure. Dirichlet rows/columns are eliminated symmetrically;
    ``lifting`` keeps the removed columns for right-hand-side corrections.
    """

    matrix: sp.csc_matrix
    n_velocity: int
    n_pressure: int
    pressure_mode: str
    dirichlet_dofs: np.ndarray
    lifting: sp.csr_matrix
    boundary_vdofs: dict
    mean_row: np.ndarray
    pin_dof: int | None = None

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def dirichlet_vector(self, dirichlet_values) -> np.ndarray:
        g = np.zeros(self.n_velocity)
        for tag, values in dirichlet_values.items():
            if tag not in self.boundary_vdofs:
                raise ConstraintError(f"Dirichlet tag {tag} has no boundary DOFs in this space")
            g[self.boundary_vdofs[tag]] = values
        return g[self.dirichlet_dofs]

    def rhs(self, f_velocity: np.ndarray, dirichlet_values=None, f_pressure=None) -> np.ndarray:
        b = np.zeros(self.size)
        b[:self.n_velocity] = f_velocity
        if f_pressure is not None:
            b[self.n_velocity:self.n_velocity + self.n_pressure] = f_pressure
        if len(self.dirichlet_dofs):
            g = self.dirichlet_vector(dirichlet_values or {})
            b -= self.lifting @ g
            b[self.dirichlet_dofs] = g
        if self.pin_dof is not None:
            b[self.n_velocity + self.pin_dof] = 0.0
        return b

    def split(self, x: np.ndarray):
        nu, npr = self.n_velocity, self.n_pressure
        lam = x[nu + npr:]
        return x[:nu], x[nu:nu + npr], (float(lam[0]) if len(lam) else 0.0)


def apply_constraints(velocity_block: sp.spmatrix, forms: AssembledForms, space: MixedSpace,
                      dirichlet_tags, pressure: str = "mean") -> SaddleSystem:
    """Build the constrained saddle-point matrix.

    ``pressure`` is ``"mean"`` (Lagrange multiplier for zero mean), ``"pin"``
    (first pressure DOF fixed, mean removed after solving) or ``"none"``
    (pressure already determined, e.g. by an outflow boundary).
    """
    bdofs = space.boundary_vdofs
    for tag in dirichlet_tags:
        if tag not in bdofs:
            raise ConstraintError(f"Dirichlet tag {tag} has no boundary DOFs in this space")
    nu, npr = space.num_velocity_dofs, space.num_pressure_dofs
    B = -forms.divergence
    blocks = [[velocity_block, B.T], [B, None]]
    if pressure == "mean":
        m = sp.csr_matrix(forms.mean_row[:, None])
        blocks = [[velocity_block, B.T, None], [B, None, m], [None, m.T, None]]
    elif pressure not in ("pin", "none"):
        raise ValueError(f"unknown pressure mode {pressure!r}")
    S = sp.bmat(blocks, format="csr")
    n = S.shape[0]
    if dirichlet_tags:
        dofs = np.unique(np.concatenate([bdofs[t] for t in dirichlet_tags]))
    else:
        dofs = np.zeros(0, np.int64)
    fixed = dofs.copy()
    pin = None
    if pressure == "pin":
        pin = 0
        fixed = np.append(fixed, nu + pin)
    keep = np.ones(n)
    keep[fixed] = 0.0
    Kd = sp.diags(keep)
    lifting = S.tocsc()[:, dofs].tocsr()
    Sc = Kd @ S @ Kd + sp.diags(1.0 - keep)
    return SaddleSystem(Sc.tocsc(), nu, npr, pressure, dofs, lifting,
                        {t: bdofs[t] for t in dirichlet_tags}, forms.mean_row, pin)
