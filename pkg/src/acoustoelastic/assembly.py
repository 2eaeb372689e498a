"""P1 finite element assembly of the coupled fluid/solid system ``A U'' + B U = F(t)``.

Unknowns are ordered elastic first (two interleaved components per ELASTIC
vertex), then acoustic (one per FLUID vertex not on the outer circle).  The
block layout is::

    A = [[rho1 rho2 M_u,      0     ],      B = [[rho1 K_1,  E ],
         [      L,      M_beta / c^2]]           [   0,     K_0]]

with ``E = rho1 * G``, ``L = -rho1 * G^T`` and ``G[j, k] = int_{dD} phi_k (n . W_j) ds``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh, Region
from .quadrature import TRI3, TRI7, line_rule
from .radial_map import coefficients_at


class AssemblyError(RuntimeError):
    """Mesh/map mismatch or degenerate geometry met during assembly."""


@dataclass(frozen=True)
class MaterialParams:
    """Wave speed ``c``, fluid density ``rho1``, solid density ``rho2`` and Lame parameters."""

    c: float = 1.0
    rho1: float = 1.0
    rho2: float = 1.0
    mu: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        for name in ("c", "rho1", "rho2", "mu"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0.0):
                raise ValueError(f"material parameter {name} must be positive, got {value}")
        if not (np.isfinite(self.lam) and self.lam + self.mu > 0.0):
            raise ValueError(f"need lambda + mu > 0, got lambda={self.lam}, mu={self.mu}")

    @property
    def pressure_speed(self) -> float:
        """Compressional wave speed in the solid."""
        return float(np.sqrt((self.lam + 2.0 * self.mu) / self.rho2))

    @property
    def max_speed(self) -> float:
        return max(self.c, self.pressure_speed)


@dataclass(frozen=True, eq=False)
class DofMap:
    """Vertex to unknown numbering.

    Elastic unknown ``2 * k + comp`` belongs to ``elastic_vertices[k]``; acoustic
    unknown ``n_elastic + k`` belongs to ``acoustic_vertices[k]``.
    """

    n_vertices: int
    elastic_vertices: np.ndarray
    acoustic_vertices: np.ndarray
    dirichlet_vertices: np.ndarray
    fluid_vertices: np.ndarray

    @classmethod
    def from_mesh(cls, mesh: Mesh) -> "DofMap":
        fluid = mesh.vertices_in(Region.FLUID)
        outer = mesh.outer_vertices
        return cls(
            n_vertices=mesh.n_vertices,
            elastic_vertices=mesh.vertices_in(Region.ELASTIC),
            acoustic_vertices=np.setdiff1d(fluid, outer),
            dirichlet_vertices=outer,
            fluid_vertices=fluid,
        )

    @property
    def n_elastic(self) -> int:
        return 2 * len(self.elastic_vertices)

    @property
    def n_acoustic(self) -> int:
        return len(self.acoustic_vertices)

    @property
    def n_total(self) -> int:
        return self.n_elastic + self.n_acoustic

    @property
    def elastic_slice(self) -> slice:
        return slice(0, self.n_elastic)

    @property
    def acoustic_slice(self) -> slice:
        return slice(self.n_elastic, self.n_total)

    def _lookup(self, vertices):
        out = np.full(self.n_vertices, -1, dtype=np.int64)
        out[vertices] = np.arange(len(vertices))
        return out

    @cached_property
    def elastic_lookup(self) -> np.ndarray:
        """Vertex -> elastic node position (-1 if none)."""
        return self._lookup(self.elastic_vertices)

    @cached_property
    def acoustic_lookup(self) -> np.ndarray:
        """Vertex -> local acoustic index (-1 for solid-only or Dirichlet vertices)."""
        return self._lookup(self.acoustic_vertices)

    @cached_property
    def fluid_lookup(self) -> np.ndarray:
        return self._lookup(self.fluid_vertices)

    def split(self, U):
        """``(elastic, acoustic)`` views of a global vector."""
        U = np.asarray(U)
        if U.shape[0] != self.n_total:
            raise ValueError(f"vector length {U.shape[0]} != {self.n_total} unknowns")
        return U[self.elastic_slice], U[self.acoustic_slice]

    def join(self, elastic, acoustic):
        return np.concatenate([np.asarray(elastic, float), np.asarray(acoustic, float)])

    def acoustic_to_vertices(self, y, boundary_values=None):
        """Scatter acoustic unknowns to a vertex array (NaN off the fluid)."""
        out = np.full(self.n_vertices, np.nan)
        out[self.fluid_vertices] = 0.0
        out[self.acoustic_vertices] = y
        if boundary_values is not None:
            out[self.dirichlet_vertices] = boundary_values
        return out

    def elastic_to_vertices(self, x):
        out = np.full((self.n_vertices, 2), np.nan)
        out[self.elastic_vertices] = np.asarray(x).reshape(-1, 2)
        return out


# -- element geometry -----------------------------------------------------------------


def _geometry(mesh: Mesh, cells):
    """Areas ``(m,)`` and P1 basis gradients ``(m, 3, 2)``."""
    p = mesh.vertices[cells]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    if np.any(det <= 0.0):
        raise AssemblyError(f"degenerate or inverted cell {int(np.argmin(det))}")
    inv = np.empty((len(cells), 2, 2))
    inv[:, 0, 0], inv[:, 0, 1] = e2[:, 1] / det, -e2[:, 0] / det
    inv[:, 1, 0], inv[:, 1, 1] = -e1[:, 1] / det, e1[:, 0] / det
    ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    grads = np.einsum("kj,mji->mki", ref, inv)
    return 0.5 * det, grads


def _coo(rows, cols, vals, shape):
    return sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=shape).tocsr()


def _pairs(idx):
    """Row/col index arrays for all local pairs of ``idx`` (m, k)."""
    k = idx.shape[1]
    return np.repeat(idx, k, axis=1).reshape(-1, k, k), np.tile(idx, (1, k)).reshape(-1, k, k)


def _fluid_coefficients(mesh: Mesh, rmap, cells):
    """beta at 7-point rule points ``(m, 7)`` and cell integrals of M ``(m, 2, 2)``."""
    pts = TRI7.points(mesh.vertices[cells])
    r = np.linalg.norm(pts, axis=-1)
    limit = rmap.outer_radius
    if np.any(r > limit * (1.0 + 1e-12)):
        c, q = np.unravel_index(np.argmax(r), r.shape)
        raise AssemblyError(
            f"quadrature point of cell {c} at radius {r[c, q]:.6g} exceeds map radius {limit}"
        )
    over = r > limit
    if np.any(over):
        pts = np.where(over[..., None], pts * (limit / np.where(over, r, 1.0))[..., None], pts)
    coef = coefficients_at(rmap, pts)
    area, _ = _geometry(mesh, cells)
    M_int = np.einsum("q,mqij->mij", TRI7.weights, coef.M) * area[:, None, None]
    return coef.beta, M_int


def _vertex_matrix(mesh, cells, local):
    idx_r, idx_c = _pairs(cells)
    n = mesh.n_vertices
    return _coo(idx_r, idx_c, local, (n, n))


def _restrict(mat, rows, cols=None):
    cols = rows if cols is None else cols
    return mat[rows][:, cols].tocsr()


def _acoustic_indexing(dofs: DofMap, include_dirichlet: bool):
    return dofs.fluid_vertices if include_dirichlet else dofs.acoustic_vertices


def assemble_acoustic_mass(mesh: Mesh, rmap, params: MaterialParams, dofs: DofMap | None = None,
                           include_dirichlet: bool = False, weighted: bool = True) -> sp.csr_matrix:
    """``int_Omega (beta / c^2) phi_j phi_k dx`` over acoustic unknowns.

    With ``weighted=False`` the plain mass matrix ``int phi_j phi_k`` is returned.
    ``include_dirichlet`` indexes rows/columns by all fluid vertices instead.
    """
    dofs = DofMap.from_mesh(mesh) if dofs is None else dofs
    cells = mesh.cells_in(Region.FLUID)
    if len(cells) == 0:
        raise AssemblyError("mesh has no FLUID cells")
    area, _ = _geometry(mesh, cells)
    if weighted:
        beta, _ = _fluid_coefficients(mesh, rmap, cells)
        w = TRI7.weights[None, :] * beta / params.c ** 2 * area[:, None]
        local = np.einsum("mq,qj,qk->mjk", w, TRI7.bary, TRI7.bary)
    else:
        w = TRI3.weights[None, :] * area[:, None]
        local = np.einsum("mq,qj,qk->mjk", w, TRI3.bary, TRI3.bary)
    idx = _acoustic_indexing(dofs, include_dirichlet)
    return _restrict(_vertex_matrix(mesh, cells, local), idx)


def assemble_a0(mesh: Mesh, rmap, params: MaterialParams | None = None, dofs: DofMap | None = None,
                include_dirichlet: bool = False, weighted: bool = True) -> sp.csr_matrix:
    """``int_Omega (M grad phi_j) . grad phi_k dx``; ``weighted=False`` uses ``M = I``."""
    dofs = DofMap.from_mesh(mesh) if dofs is None else dofs
    cells = mesh.cells_in(Region.FLUID)
    if len(cells) == 0:
        raise AssemblyError("mesh has no FLUID cells")
    area, grads = _geometry(mesh, cells)
    if weighted:
        _, M_int = _fluid_coefficients(mesh, rmap, cells)
        local = np.einsum("mji,mil,mkl->mjk", grads, M_int, grads)
    else:
        local = np.einsum("mji,mki->mjk", grads, grads) * area[:, None, None]
    idx = _acoustic_indexing(dofs, include_dirichlet)
    return _restrict(_vertex_matrix(mesh, cells, local), idx)


def _elastic_index(cells, dofs: DofMap):
    node = dofs.elastic_lookup[cells]
    return np.stack([2 * node, 2 * node + 1], -1).reshape(len(cells), 6)


def elastic_forms(mesh: Mesh, dofs: DofMap | None = None):
    """Unscaled elastic forms ``(mass, grad:grad, div*div)`` over elastic unknowns."""
    dofs = DofMap.from_mesh(mesh) if dofs is None else dofs
    cells = mesh.cells_in(Region.ELASTIC)
    if len(cells) == 0:
        raise AssemblyError("mesh has no ELASTIC cells")
    area, grads = _geometry(mesh, cells)
    m = len(cells)
    eye2 = np.eye(2)
    scalar_mass = np.einsum("q,qj,qk->jk", TRI3.weights, TRI3.bary, TRI3.bary)
    mass = area[:, None, None, None, None] * np.einsum("jk,ab->jakb", scalar_mass, eye2)[None]
    lap = np.einsum("mji,mki->mjk", grads, grads) * area[:, None, None]
    gradgrad = np.einsum("mjk,ab->mjakb", lap, eye2)
    divdiv = np.einsum("mja,mkb->mjakb", grads, grads) * area[:, None, None, None, None]
    idx = _elastic_index(cells, dofs)
    rows, cols = _pairs(idx)
    n = dofs.n_elastic
    shape = (m, 6, 6)
    return tuple(_coo(rows, cols, mat.reshape(shape), (n, n)) for mat in (mass, gradgrad, divdiv))


def assemble_elastic(mesh: Mesh, params: MaterialParams, dofs: DofMap | None = None):
    """Mass ``rho1 rho2 int W_j . W_k`` and stiffness ``rho1 [mu grad:grad + (lam + mu) div div]``."""
    mass, gradgrad, divdiv = elastic_forms(mesh, dofs)
    stiff = params.rho1 * (params.mu * gradgrad + (params.lam + params.mu) * divdiv)
    return (params.rho1 * params.rho2 * mass).tocsr(), stiff.tocsr()


def _interface_geometry(mesh: Mesh):
    edges = mesh.interface_edges
    if len(edges) == 0:
        raise AssemblyError("mesh has no INTERFACE edges")
    normals = mesh.interface_normals
    if len(normals) != len(edges) or not np.all(np.isfinite(normals)):
        raise AssemblyError("interface edge with undefined normal")
    norm = np.linalg.norm(normals, axis=1)
    if np.any(np.abs(norm - 1.0) > 1e-10):
        raise AssemblyError(f"interface normal {int(np.argmax(np.abs(norm - 1.0)))} is not a unit vector")
    length = np.linalg.norm(mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]], axis=1)
    return edges, normals, length


def interface_coupling(mesh: Mesh, dofs: DofMap | None = None) -> sp.csr_matrix:
    """``G[j, k] = int_{dD} phi_k (n . W_j) ds`` (elastic rows, acoustic columns)."""
    dofs = DofMap.from_mesh(mesh) if dofs is None else dofs
    edges, normals, length = _interface_geometry(mesh)
    rule = line_rule(2)
    basis = np.stack([1.0 - rule.s, rule.s], -1)
    edge_mass = np.einsum("q,qa,qb->ab", rule.weights, basis, basis)
    node = dofs.elastic_lookup[edges]
    ac = dofs.acoustic_lookup[edges]
    if np.any(node < 0) or np.any(ac < 0):
        raise AssemblyError("interface edge vertex lacks an elastic or acoustic unknown")
    # vals[e, a, comp, b]: elastic vertex a, component comp, acoustic vertex b
    vals = np.einsum("e,ab,ec->eacb", length, edge_mass, normals)
    rows = np.broadcast_to((2 * node[:, :, None] + np.arange(2))[:, :, :, None], vals.shape)
    cols = np.broadcast_to(ac[:, None, None, :], vals.shape)
    return _coo(rows, cols, vals, (dofs.n_elastic, dofs.n_acoustic))


def assemble_interface(mesh: Mesh, params: MaterialParams, dofs: DofMap | None = None):
    """Coupling blocks ``(E, L)``.

    ``E`` (elastic rows) carries ``rho1 int p n . v``; ``L`` (acoustic rows)
    carries ``-rho1 int (n . u'') q``.  ``L`` is assembled by its own loop, so
    ``L + E^T = 0`` is a genuine consistency check.
    """
    dofs = DofMap.from_mesh(mesh) if dofs is None else dofs
    E = params.rho1 * interface_coupling(mesh, dofs)

    edges, normals, length = _interface_geometry(mesh)
    rule = line_rule(2)
    rows, cols, vals = [], [], []
    for (i, j), n, ell in zip(edges, normals, length):
        ends = (i, j)
        for a_q, a in enumerate(ends):          # acoustic test function
            for b_q, b in enumerate(ends):      # elastic trial function
                phi_a = rule.s if a_q else 1.0 - rule.s
                phi_b = rule.s if b_q else 1.0 - rule.s
                w = ell * float(np.dot(rule.weights, phi_a * phi_b))
                for comp in range(2):
                    rows.append(dofs.acoustic_lookup[a])
                    cols.append(2 * dofs.elastic_lookup[b] + comp)
                    vals.append(-params.rho1 * w * n[comp])
    L = sp.coo_matrix((vals, (rows, cols)), shape=(dofs.n_acoustic, dofs.n_elastic)).tocsr()
    return E.tocsr(), L


# -- loads ------------------------------------------------------------------------------


class VolumeLoad:
    """Reusable assembler of ``int_Omega f(x, t) phi_k dx`` over acoustic unknowns."""

    def __init__(self, mesh: Mesh, dofs: DofMap):
        cells = mesh.cells_in(Region.FLUID)
        area, _ = _geometry(mesh, cells)
        self.points = TRI7.points(mesh.vertices[cells])
        self.weights = TRI7.weights[None, :] * area[:, None]
        self.index = dofs.acoustic_lookup[cells]
        self.dofs = dofs

    def __call__(self, f: Callable, t: float) -> np.ndarray:
        vals = np.asarray(f(self.points, t), dtype=float)
        vals = np.broadcast_to(vals, self.weights.shape)
        local = np.einsum("mq,qk->mk", vals * self.weights, TRI7.bary)
        keep = self.index >= 0
        out = np.zeros(self.dofs.n_total)
        out[self.dofs.acoustic_slice] = np.bincount(
            self.index[keep], weights=local[keep], minlength=self.dofs.n_acoustic
        )
        return out


class InterfaceLoad:
    """Reusable assembler of interface data integrals.

    ``acoustic(points, normals, t)`` gives a scalar density tested against
    acoustic basis functions; ``elastic(points, normals, t)`` gives a vector
    density tested against elastic basis functions.  Points have shape
    ``(n_edges, n_quad, 2)``.
    """

    def __init__(self, mesh: Mesh, dofs: DofMap, n_points: int = 3):
        edges, normals, length = _interface_geometry(mesh)
        rule = line_rule(n_points)
        self.points = rule.points(mesh.vertices[edges[:, 0]], mesh.vertices[edges[:, 1]])
        self.normals = np.broadcast_to(normals[:, None, :], self.points.shape).copy()
        self.weights = rule.weights[None, :] * length[:, None]
        self.basis = np.stack([1.0 - rule.s, rule.s], -1)
        self.acoustic_index = dofs.acoustic_lookup[edges]
        self.elastic_index = dofs.elastic_lookup[edges]
        self.dofs = dofs

    def __call__(self, t: float, acoustic: Callable | None = None, elastic: Callable | None = None):
        dofs = self.dofs
        out = np.zeros(dofs.n_total)
        if acoustic is not None:
            g = np.broadcast_to(np.asarray(acoustic(self.points, self.normals, t), float), self.weights.shape)
            local = np.einsum("eq,qa->ea", g * self.weights, self.basis)
            out[dofs.acoustic_slice] = np.bincount(
                self.acoustic_index.ravel(), weights=local.ravel(), minlength=dofs.n_acoustic
            )
        if elastic is not None:
            g = np.asarray(elastic(self.points, self.normals, t), float)
            local = np.einsum("eqc,eq,qa->eac", g, self.weights, self.basis)
            idx = 2 * self.elastic_index[:, :, None] + np.arange(2)
            out[dofs.elastic_slice] += np.bincount(
                idx.ravel(), weights=local.ravel(), minlength=dofs.n_elastic
            )
        return out


def assemble_load(mesh: Mesh, rmap, f: Callable, t: float, dofs: DofMap | None = None,
                  include_dirichlet: bool = False) -> np.ndarray:
    """Global load vector: ``int_Omega f(., t) phi_k dx`` in the acoustic block, zero elsewhere.

    ``f(points, t)`` receives compressed-coordinate points of shape ``(..., 2)``.
    ``rmap`` is accepted for symmetry with the other assemblers; the source is
    already expressed in compressed coordinates.  With ``include_dirichlet``
    the result is indexed by all fluid vertices instead (no elastic block).
    """
    dofs = DofMap.from_mesh(mesh) if dofs is None else dofs
    if not include_dirichlet:
        return VolumeLoad(mesh, dofs)(f, t)
    full = DofMap(dofs.n_vertices, np.zeros(0, np.int64), dofs.fluid_vertices,
                  np.zeros(0, np.int64), dofs.fluid_vertices)
    return VolumeLoad(mesh, full)(f, t)


# -- the full system --------------------------------------------------------------------


@dataclass(frozen=True)
class NormMatrices:
    """Unweighted Gram matrices for the field norms reported by diagnostics."""

    p_mass: sp.csr_matrix
    p_grad: sp.csr_matrix
    u_mass: sp.csr_matrix
    u_div: sp.csr_matrix
    u_grad: sp.csr_matrix


@dataclass(frozen=True, eq=False)
class AssembledSystem:
    """Block matrices ``A``, ``B`` plus the individual blocks and load assemblers."""

    mesh: Mesh
    rmap: object
    params: MaterialParams
    dof_map: DofMap
    A: sp.csr_matrix
    B: sp.csr_matrix
    blocks: dict = field(repr=False)

    @cached_property
    def volume_load(self) -> VolumeLoad:
        return VolumeLoad(self.mesh, self.dof_map)

    @cached_property
    def interface_load(self) -> InterfaceLoad:
        return InterfaceLoad(self.mesh, self.dof_map)

    @cached_property
    def norms(self) -> NormMatrices:
        mass, gradgrad, divdiv = elastic_forms(self.mesh, self.dof_map)
        return NormMatrices(
            p_mass=assemble_acoustic_mass(self.mesh, self.rmap, self.params, self.dof_map, weighted=False),
            p_grad=assemble_a0(self.mesh, self.rmap, self.params, self.dof_map, weighted=False),
            u_mass=mass, u_div=divdiv, u_grad=gradgrad,
        )

    def load(self, f: Callable | None, t: float) -> np.ndarray:
        if f is None:
            return np.zeros(self.dof_map.n_total)
        return self.volume_load(f, t)


def assemble_system(mesh: Mesh, rmap, params: MaterialParams) -> AssembledSystem:
    dofs = DofMap.from_mesh(mesh)
    Mp = assemble_acoustic_mass(mesh, rmap, params, dofs)
    K0 = assemble_a0(mesh, rmap, params, dofs)
    Mu, K1 = assemble_elastic(mesh, params, dofs)
    E, L = assemble_interface(mesh, params, dofs)
    A = sp.bmat([[Mu, None], [L, Mp]], format="csr")
    B = sp.bmat([[K1, E], [None, K0]], format="csr")
    blocks = {"Mp": Mp, "K0": K0, "Mu": Mu, "K1": K1, "E": E, "L": L}
    return AssembledSystem(mesh, rmap, params, dofs, A, B, blocks)


def dump_coo(matrix, path) -> None:
    """Write ``row col value`` lines (debug aid)."""
    coo = sp.coo_matrix(matrix)
    with open(Path(path), "w") as fh:
        fh.write(f"# shape {coo.shape[0]} {coo.shape[1]} nnz {coo.nnz}\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i} {j} {v:.17g}\n")
