"""Triangulations of the disk ``B_b`` split into an elastic disk ``D`` and a fluid annulus.

Meshes are built from concentric vertex rings.  Neighbouring rings are zipped
together by an angular sweep; ring counts and layer thicknesses are chosen so
that arc length and radial spacing stay comparable, which keeps element angles
above 20 degrees.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class Region(enum.IntEnum):
    ELASTIC = 0
    FLUID = 1


class BoundaryTag(enum.IntEnum):
    INTERFACE = 0
    OUTER = 1


class MeshError(ValueError):
    """Invalid mesh parameters or mesh file contents."""


def _frozen(arr, dtype):
    out = np.array(arr, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming P1 triangulation with region and boundary tags.

    ``boundary_edges`` rows are vertex pairs; ``boundary_tags`` holds a
    :class:`BoundaryTag` per row.  ``interface_normals`` is aligned with
    ``interface_edges`` and points from the elastic cell into the fluid.
    """

    vertices: np.ndarray
    cells: np.ndarray
    cell_region: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    interface_normals: np.ndarray = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "vertices", _frozen(self.vertices, float).reshape(-1, 2))
        object.__setattr__(self, "cells", _frozen(self.cells, np.int64).reshape(-1, 3))
        object.__setattr__(self, "cell_region", _frozen(self.cell_region, np.int8))
        object.__setattr__(self, "boundary_edges", _frozen(self.boundary_edges, np.int64).reshape(-1, 2))
        object.__setattr__(self, "boundary_tags", _frozen(self.boundary_tags, np.int8))
        if self.interface_normals is None:
            normals = _interface_normals(self)
        else:
            normals = self.interface_normals
        object.__setattr__(self, "interface_normals", _frozen(normals, float).reshape(-1, 2))

    # -- derived quantities -------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def interface_edges(self) -> np.ndarray:
        return self.boundary_edges[self.boundary_tags == BoundaryTag.INTERFACE]

    @property
    def outer_edges(self) -> np.ndarray:
        return self.boundary_edges[self.boundary_tags == BoundaryTag.OUTER]

    def cells_in(self, region: Region) -> np.ndarray:
        return self.cells[self.cell_region == region]

    def vertices_in(self, region: Region) -> np.ndarray:
        """Sorted indices of vertices touching at least one cell of ``region``."""
        return np.unique(self.cells_in(region))

    @property
    def outer_vertices(self) -> np.ndarray:
        return np.unique(self.outer_edges)

    @property
    def interface_vertices(self) -> np.ndarray:
        return np.unique(self.interface_edges)

    def signed_areas(self, cells=None) -> np.ndarray:
        cells = self.cells if cells is None else cells
        p = self.vertices[cells]
        e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def area(self, region: Region | None = None) -> float:
        cells = self.cells if region is None else self.cells_in(region)
        return float(self.signed_areas(cells).sum())

    def edges(self) -> np.ndarray:
        """Unique undirected edges, sorted vertex pairs."""
        e = np.concatenate([self.cells[:, [0, 1]], self.cells[:, [1, 2]], self.cells[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    def edge_lengths(self) -> np.ndarray:
        e = self.edges()
        return np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1)

    @property
    def min_edge_length(self) -> float:
        return float(self.edge_lengths().min())

    def angles(self) -> np.ndarray:
        """Interior angles in degrees, shape ``(n_cells, 3)``."""
        p = self.vertices[self.cells]
        out = np.empty((self.n_cells, 3))
        for k in range(3):
            u = p[:, (k + 1) % 3] - p[:, k]
            w = p[:, (k + 2) % 3] - p[:, k]
            cosang = np.einsum("ij,ij->i", u, w) / (np.linalg.norm(u, axis=1) * np.linalg.norm(w, axis=1))
            out[:, k] = np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0)))
        return out

    def interface_lengths(self) -> np.ndarray:
        e = self.interface_edges
        return np.linalg.norm(self.vertices[e[:, 1]] - self.vertices[e[:, 0]], axis=1)

    def outer_radius(self) -> float:
        return float(np.linalg.norm(self.vertices[self.outer_vertices], axis=1).max())


def _edge_cell_map(cells):
    """dict: sorted edge -> list of cell indices."""
    owners: dict[tuple[int, int], list[int]] = {}
    for c, tri in enumerate(cells):
        for k in range(3):
            i, j = int(tri[k]), int(tri[(k + 1) % 3])
            owners.setdefault((min(i, j), max(i, j)), []).append(c)
    return owners


def _interface_normals(mesh: Mesh) -> np.ndarray:
    edges = mesh.interface_edges
    if len(edges) == 0:
        return np.zeros((0, 2))
    owners = _edge_cell_map(mesh.cells)
    normals = np.empty((len(edges), 2))
    for n, (i, j) in enumerate(edges):
        cell_ids = owners.get((min(i, j), max(i, j)), [])
        elastic = [c for c in cell_ids if mesh.cell_region[c] == Region.ELASTIC]
        if not elastic:
            raise MeshError(f"interface edge {n} ({i}, {j}) has no elastic cell")
        tri = mesh.cells[elastic[0]]
        opposite = mesh.vertices[[v for v in tri if v not in (i, j)][0]]
        t = mesh.vertices[j] - mesh.vertices[i]
        nrm = np.array([t[1], -t[0]]) / np.linalg.norm(t)
        if np.dot(nrm, mesh.vertices[i] - opposite) < 0.0:
            nrm = -nrm
        normals[n] = nrm
    return normals


# -- generation -------------------------------------------------------------------------


def _ring(radius, count, start):
    ang = 2.0 * np.pi * np.arange(count) / count
    pts = np.stack([radius * np.cos(ang), radius * np.sin(ang)], -1)
    return pts, np.arange(start, start + count)


def _connect(inner, outer, inner_pts, outer_pts):
    """Zip two closed rings into triangles by sweeping the polar angle.

    Both rings start at angle zero.  At each step the ring whose next vertex has
    the smaller angle advances; ties go to the shorter new diagonal.
    """
    ni, no = len(inner), len(outer)
    ang_i = 2.0 * np.pi * np.arange(ni + 1) / ni
    ang_o = 2.0 * np.pi * np.arange(no + 1) / no
    tris = []
    i = j = 0
    while i < ni or j < no:
        if i == ni:
            advance_inner = False
        elif j == no:
            advance_inner = True
        elif abs(ang_i[i + 1] - ang_o[j + 1]) > 1e-12:
            advance_inner = ang_i[i + 1] < ang_o[j + 1]
        else:
            d_inner = np.linalg.norm(inner_pts[(i + 1) % ni] - outer_pts[j % no])
            d_outer = np.linalg.norm(inner_pts[i % ni] - outer_pts[(j + 1) % no])
            advance_inner = d_inner <= d_outer
        if advance_inner:
            tris.append((inner[i % ni], inner[(i + 1) % ni], outer[j % no]))
            i += 1
        else:
            tris.append((inner[i % ni], outer[(j + 1) % no], outer[j % no]))
            j += 1
    return tris


def _fan(centre, ring):
    n = len(ring)
    return [(centre, ring[k], ring[(k + 1) % n]) for k in range(n)]


# Layering rules (all ratios are arc length / radial spacing):
# fluid ring counts double outwards once the arc exceeds DOUBLE_ARC * dr;
# a radial layer is split while dr exceeds the arc of its inner ring / MIN_ARC;
# disk ring counts track ring circumference / dr, changing by at most a factor 2.
DOUBLE_ARC = 2.6
MIN_ARC = 0.7
MIN_RING = 6


def _layer_radii(r0, r1, n):
    return r0 + (r1 - r0) * np.arange(1, n + 1) / n


def fluid_layers(r_D: float, a: float, b: float, n_radial: int) -> tuple[int, int]:
    """Split ``n_radial`` fluid layers between ``[r_D, a]`` and ``[a, b]``."""
    n_inner = max(1, int(round(n_radial * (a - r_D) / (b - r_D))))
    n_outer = max(1, n_radial - n_inner)
    return n_inner, n_outer


def generate_disk_annulus(r_D: float, a: float, b: float, n_radial: int, n_angular: int) -> Mesh:
    """Structured mesh of the disk ``D = {r < r_D}`` and the fluid annulus ``r_D < r < b``.

    ``n_radial`` layers of fluid elements are distributed over ``[r_D, a]`` and
    ``[a, b]`` with a vertex ring exactly on ``r = a``; layers much thicker than
    the local arc length are subdivided.  The interface ring carries
    ``n_angular`` vertices, doubled as often as needed for its arc length to
    stay within a small multiple of the finest radial spacing.  Disk layers use the spacing of the first fluid
    layer (or less, to match the interface arc length).
    """
    if not (0.0 < r_D < a < b):
        raise MeshError(f"need 0 < r_D < a < b, got r_D={r_D}, a={a}, b={b}")
    if n_radial < 2:
        raise MeshError(f"n_radial must be >= 2, got {n_radial}")
    if n_angular < 8:
        raise MeshError(f"n_angular must be >= 8, got {n_angular}")

    n_in, n_out = fluid_layers(r_D, a, b, n_radial)
    dr_min = min((a - r_D) / n_in, (b - a) / n_out)
    while 2.0 * np.pi * r_D / n_angular > DOUBLE_ARC * dr_min:
        n_angular *= 2
    arc_D = 2.0 * np.pi * r_D / n_angular
    dr_ref = min((a - r_D) / n_in, arc_D / MIN_ARC)
    n_disk = max(1, int(round(r_D / dr_ref)))
    disk_radii = r_D * np.arange(1, n_disk + 1) / n_disk
    dr_disk = r_D / n_disk

    # disk ring counts, chosen from the interface inwards
    counts = [n_angular]
    for r in disk_radii[-2::-1]:
        n = counts[-1]
        target = int(round(2.0 * np.pi * r / dr_disk))
        counts.append(min(n, max(target, (n + 1) // 2, MIN_RING)))
    counts = counts[::-1]

    vertices = [np.zeros((1, 2))]
    cells, regions = [], []
    start = 1
    prev = prev_pts = None
    for r, n in zip(disk_radii, counts):
        pts, ring = _ring(r, n, start)
        vertices.append(pts)
        tri = _fan(0, ring) if prev is None else _connect(prev, ring, prev_pts, pts)
        cells += tri
        regions += [Region.ELASTIC] * len(tri)
        prev, prev_pts, start = ring, pts, start + n
    interface_ring = prev

    r_prev = r_D
    for r_next in np.concatenate([_layer_radii(r_D, a, n_in), _layer_radii(a, b, n_out)]):
        # split layers much thicker than the arc of their inner ring
        arc = 2.0 * np.pi * r_prev / len(prev)
        m = max(1, int(np.ceil((r_next - r_prev) * MIN_ARC / arc - 1e-9)))
        for r in _layer_radii(r_prev, r_next, m):
            n = len(prev)
            if 2.0 * np.pi * r / n > DOUBLE_ARC * (r_next - r_prev) / m:
                n *= 2
            pts, ring = _ring(r, n, start)
            vertices.append(pts)
            tri = _connect(prev, ring, prev_pts, pts)
            cells += tri
            regions += [Region.FLUID] * len(tri)
            prev, prev_pts, start = ring, pts, start + n
        r_prev = r_next
    outer_ring = prev

    vertices = np.concatenate(vertices)
    cells = np.array(cells, dtype=np.int64)
    p = vertices[cells]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    flip = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0] < 0.0
    cells[flip] = cells[flip][:, [0, 2, 1]]

    def closed(ring):
        return np.stack([ring, np.roll(ring, -1)], -1)

    iface, outer = closed(interface_ring), closed(outer_ring)
    edges = np.concatenate([iface, outer])
    tags = np.array([BoundaryTag.INTERFACE] * len(iface) + [BoundaryTag.OUTER] * len(outer))
    t = vertices[iface[:, 1]] - vertices[iface[:, 0]]
    normals = np.stack([t[:, 1], -t[:, 0]], -1) / np.linalg.norm(t, axis=1)[:, None]
    return Mesh(vertices, cells, np.array(regions, dtype=np.int8), edges, tags, normals)


# -- file I/O ---------------------------------------------------------------------------


def write_mesh(mesh: Mesh, path) -> None:
    """Write the plain-text mesh format read by :func:`load_mesh`."""
    lines = ["dim 2", f"vertices {mesh.n_vertices}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines.append(f"cells {mesh.n_cells}")
    lines += [f"{i} {j} {k} {Region(r).name}" for (i, j, k), r in zip(mesh.cells.tolist(), mesh.cell_region)]
    lines.append(f"boundary {len(mesh.boundary_edges)}")
    lines += [f"{i} {j} {BoundaryTag(t).name}" for (i, j), t in zip(mesh.boundary_edges.tolist(), mesh.boundary_tags)]
    Path(path).write_text("\n".join(lines) + "\n")


class _Reader:
    def __init__(self, text: str, path):
        self.lines = [(n + 1, ln.split()) for n, ln in enumerate(text.splitlines())
                      if ln.strip() and not ln.lstrip().startswith("#")]
        self.pos = 0
        self.path = path

    def fail(self, lineno, msg):
        raise MeshError(f"{self.path}:{lineno}: {msg}")

    def next(self):
        if self.pos >= len(self.lines):
            raise MeshError(f"{self.path}: unexpected end of file")
        item = self.lines[self.pos]
        self.pos += 1
        return item

    def header(self, keyword):
        lineno, toks = self.next()
        if len(toks) != 2 or toks[0] != keyword:
            self.fail(lineno, f"expected '{keyword} <count>', got {' '.join(toks)!r}")
        try:
            count = int(toks[1])
        except ValueError:
            self.fail(lineno, f"bad count {toks[1]!r}")
        if count < 0:
            self.fail(lineno, f"negative count {count}")
        return count


def load_mesh(path) -> Mesh:
    """Read and validate a mesh file; errors name the file line or entity index."""
    path = Path(path)
    rd = _Reader(path.read_text(), path)
    lineno, toks = rd.next()
    if toks != ["dim", "2"]:
        rd.fail(lineno, "first line must be 'dim 2'")

    nv = rd.header("vertices")
    vertices = np.empty((nv, 2))
    for n in range(nv):
        lineno, toks = rd.next()
        try:
            if len(toks) != 2:
                raise ValueError
            vertices[n] = [float(toks[0]), float(toks[1])]
        except ValueError:
            rd.fail(lineno, f"vertex {n}: expected 'x y'")
    if not np.all(np.isfinite(vertices)):
        raise MeshError(f"{path}: non-finite vertex coordinates")

    nc = rd.header("cells")
    cells = np.empty((nc, 3), dtype=np.int64)
    regions = np.empty(nc, dtype=np.int8)
    for n in range(nc):
        lineno, toks = rd.next()
        if len(toks) != 4:
            rd.fail(lineno, f"cell {n}: expected 'i j k region'")
        try:
            idx = [int(t) for t in toks[:3]]
        except ValueError:
            rd.fail(lineno, f"cell {n}: vertex indices must be integers")
        bad = [i for i in idx if not 0 <= i < nv]
        if bad:
            rd.fail(lineno, f"cell {n} references vertex {bad[0]} but there are {nv} vertices")
        if len(set(idx)) != 3:
            rd.fail(lineno, f"cell {n} has repeated vertices")
        if toks[3] not in Region.__members__:
            rd.fail(lineno, f"cell {n}: unknown region tag {toks[3]!r}")
        cells[n] = idx
        regions[n] = Region[toks[3]]

    nb = rd.header("boundary")
    edges = np.empty((nb, 2), dtype=np.int64)
    tags = np.empty(nb, dtype=np.int8)
    for n in range(nb):
        lineno, toks = rd.next()
        if len(toks) != 3:
            rd.fail(lineno, f"boundary edge {n}: expected 'i j tag'")
        try:
            idx = [int(t) for t in toks[:2]]
        except ValueError:
            rd.fail(lineno, f"boundary edge {n}: vertex indices must be integers")
        bad = [i for i in idx if not 0 <= i < nv]
        if bad:
            rd.fail(lineno, f"boundary edge {n} references vertex {bad[0]} but there are {nv} vertices")
        if toks[2] not in BoundaryTag.__members__:
            rd.fail(lineno, f"boundary edge {n}: unknown tag {toks[2]!r}")
        edges[n] = idx
        tags[n] = BoundaryTag[toks[2]]
    if rd.pos != len(rd.lines):
        rd.fail(rd.lines[rd.pos][0], "trailing content after boundary section")

    validate_topology(vertices, cells, regions, edges, tags, source=str(path))
    return Mesh(vertices, cells, regions, edges, tags)


def validate_topology(vertices, cells, regions, edges, tags, source="mesh") -> None:
    """Check orientation, tag consistency and boundary completeness."""
    p = vertices[cells]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    area = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    bad = np.flatnonzero(area <= 0.0)
    if len(bad):
        raise MeshError(f"{source}: cell {bad[0]} is not positively oriented (area {area[bad[0]]:.3e})")
    used = np.zeros(len(vertices), bool)
    used[cells.ravel()] = True
    if not used.all():
        raise MeshError(f"{source}: vertex {np.flatnonzero(~used)[0]} belongs to no cell")

    owners = _edge_cell_map(cells)
    tagged = {}
    for n, (i, j) in enumerate(edges):
        key = (min(i, j), max(i, j))
        if key in tagged:
            raise MeshError(f"{source}: boundary edge {n} duplicates edge {tagged[key]}")
        tagged[key] = n
        cell_ids = owners.get(key)
        if cell_ids is None:
            raise MeshError(f"{source}: boundary edge {n} ({i}, {j}) is not an edge of any cell")
        kinds = sorted(int(regions[c]) for c in cell_ids)
        if tags[n] == BoundaryTag.INTERFACE and kinds != [Region.ELASTIC, Region.FLUID]:
            names = [Region(k).name for k in kinds]
            raise MeshError(f"{source}: interface edge {n} ({i}, {j}) must separate one ELASTIC "
                            f"and one FLUID cell, found {names}")
        if tags[n] == BoundaryTag.OUTER and kinds != [Region.FLUID]:
            names = [Region(k).name for k in kinds]
            raise MeshError(f"{source}: outer edge {n} ({i}, {j}) must belong to exactly one "
                            f"FLUID cell, found {names}")
    for key, cell_ids in owners.items():
        kinds = {int(regions[c]) for c in cell_ids}
        if len(cell_ids) > 2:
            raise MeshError(f"{source}: edge {key} shared by {len(cell_ids)} cells")
        if (len(cell_ids) == 1 or len(kinds) == 2) and key not in tagged:
            raise MeshError(f"{source}: edge {key} lies on a region boundary but is not tagged")
    if not np.any(tags == BoundaryTag.OUTER):
        raise MeshError(f"{source}: no OUTER boundary edges")


def mesh_size(mesh: Mesh) -> float:
    """Largest edge length."""
    return float(mesh.edge_lengths().max())


def euler_characteristic(mesh: Mesh) -> int:
    return mesh.n_vertices - len(mesh.edges()) + mesh.n_cells


__all__ = [
    "Region", "BoundaryTag", "MeshError", "Mesh", "generate_disk_annulus", "load_mesh",
    "write_mesh", "validate_topology", "fluid_layers", "euler_characteristic", "mesh_size",
]
