"""Polygonal meshes: generation of the four test families, auditing and text I/O."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay, Voronoi

from .polybasis import CellGeometry

log = logging.getLogger(__name__)

__all__ = [
    "PolygonalMesh",
    "ShapeReport",
    "MeshError",
    "MeshFormatError",
    "MeshQualityError",
    "generate_cvt",
    "generate_distorted_quads",
    "generate_disk_meshes",
    "disk_map",
    "check_mesh",
    "read_mesh",
    "write_mesh",
    "make_mesh",
]


class MeshError(ValueError):
    pass


class MeshFormatError(MeshError):
    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


class MeshQualityError(MeshError):
    pass


def _shoelace(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _segments_cross(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(p3, p4, p1), orient(p3, p4, p2)
    d3, d4 = orient(p1, p2, p3), orient(p1, p2, p4)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def is_simple_polygon(poly: np.ndarray) -> bool:
    m = len(poly)
    if m < 3 or _shoelace(poly) <= 0:
        return False
    for i in range(m):
        a, b = poly[i], poly[(i + 1) % m]
        for j in range(i + 2, m):
            if i == 0 and j == m - 1:
                continue
            if _segments_cross(a, b, poly[j], poly[(j + 1) % m]):
                return False
    return True


@dataclass(frozen=True, eq=False)
class PolygonalMesh:
    """Vertices plus counterclockwise vertex loops; topology is derived lazily.

    Treat instances as immutable: every derived quantity is cached.
    """

    vertices: np.ndarray
    cells: tuple
    nominal_h: float | None = None
    family: str = "custom"
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        cells = tuple(np.asarray(c, dtype=np.int64) for c in self.cells)
        object.__setattr__(self, "cells", cells)
        if self.validate:
            self._check()

    def _check(self):
        nv = len(self.vertices)
        for ci, c in enumerate(self.cells):
            if len(c) < 3 or len(set(c.tolist())) != len(c):
                raise MeshError(f"cell {ci}: needs >= 3 distinct vertices")
            if c.min() < 0 or c.max() >= nv:
                raise MeshError(f"cell {ci}: vertex index out of range")
            if not is_simple_polygon(self.vertices[c]):
                raise MeshError(f"cell {ci}: not a simple counterclockwise polygon")
        counts = np.array([len(cs) for cs in self.edge_cells])
        if np.any(counts > 2):
            raise MeshError("an edge is shared by more than two cells")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @cached_property
    def _topology(self):
        index: dict[tuple[int, int], int] = {}
        edges = []
        edge_cells: list[list[int]] = []
        cell_edges, cell_signs = [], []
        for ci, c in enumerate(self.cells):
            ce, cs = [], []
            m = len(c)
            for i in range(m):
                a, b = int(c[i]), int(c[(i + 1) % m])
                key = (a, b) if a < b else (b, a)
                e = index.get(key)
                if e is None:
                    e = len(edges)
                    index[key] = e
                    edges.append(key)
                    edge_cells.append([])
                edge_cells[e].append(ci)
                ce.append(e)
                cs.append(1 if a < b else -1)
            cell_edges.append(np.array(ce, dtype=np.int64))
            cell_signs.append(np.array(cs, dtype=np.int64))
        return np.array(edges, dtype=np.int64).reshape(-1, 2), edge_cells, cell_edges, cell_signs

    @property
    def edges(self) -> np.ndarray:
        """Unique edges as (low, high) vertex index pairs."""
        return self._topology[0]

    @property
    def edge_cells(self) -> list:
        return self._topology[1]

    @property
    def cell_edges(self) -> list:
        return self._topology[2]

    @property
    def cell_edge_signs(self) -> list:
        """+1 where the local ccw edge direction runs from low to high vertex index."""
        return self._topology[3]

    @cached_property
    def boundary_edge(self) -> np.ndarray:
        return np.array([len(cs) == 1 for cs in self.edge_cells], dtype=bool)

    @cached_property
    def boundary_vertex(self) -> np.ndarray:
        flag = np.zeros(self.n_vertices, dtype=bool)
        flag[self.edges[self.boundary_edge].ravel()] = True
        return flag

    @cached_property
    def geometry(self) -> list:
        return [CellGeometry(self.vertices[c]) for c in self.cells]

    @cached_property
    def cell_areas(self) -> np.ndarray:
        return np.array([g.area for g in self.geometry])

    @cached_property
    def cell_diameters(self) -> np.ndarray:
        return np.array([g.diameter for g in self.geometry])

    @property
    def h(self) -> float:
        return float(self.cell_diameters.max())

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def interior_counts(self) -> tuple[int, int, int]:
        """(interior vertices, interior edges, cells)."""
        return (
            int((~self.boundary_vertex).sum()),
            int((~self.boundary_edge).sum()),
            self.n_cells,
        )

    def euler_characteristic(self) -> int:
        used = np.unique(np.concatenate(self.cells))
        return len(used) - self.n_edges + self.n_cells

    def cells_from_edges(self) -> list[np.ndarray]:
        """Rebuild every vertex loop from the edge table (topology round trip)."""
        out = []
        for ce, cs in zip(self.cell_edges, self.cell_edge_signs):
            out.append(np.array([self.edges[e][0] if s > 0 else self.edges[e][1] for e, s in zip(ce, cs)]))
        return out


# ---------------------------------------------------------------------------
# shape audit


@dataclass
class ShapeReport:
    star_ratio: np.ndarray
    vertex_ratio: np.ndarray
    rho_min: float

    @property
    def rho(self) -> float:
        return float(min(self.star_ratio.min(), self.vertex_ratio.min()))

    @property
    def failing_cells(self) -> np.ndarray:
        bad = (self.star_ratio < self.rho_min) | (self.vertex_ratio < self.rho_min)
        return np.flatnonzero(bad)

    @property
    def passed(self) -> bool:
        return len(self.failing_cells) == 0

    def summary(self) -> str:
        return (
            f"cells={len(self.star_ratio)} rho={self.rho:.4g} "
            f"min_star={self.star_ratio.min():.4g} min_vertex={self.vertex_ratio.min():.4g} "
            f"rho_min={self.rho_min} {'PASS' if self.passed else 'FAIL'}"
        )


def _clip_halfplane(poly: np.ndarray, a: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Keep the part of ``poly`` with (x - a) . n <= 0 (Sutherland-Hodgman)."""
    if len(poly) == 0:
        return poly
    d = (poly - a) @ n
    out = []
    m = len(poly)
    for i in range(m):
        p, q = poly[i], poly[(i + 1) % m]
        dp, dq = d[i], d[(i + 1) % m]
        if dp <= 0:
            out.append(p)
        if dp * dq < 0:
            t = dp / (dp - dq)
            out.append(p + t * (q - p))
    return np.array(out).reshape(-1, 2)


def _point_in_convex(poly: np.ndarray, p: np.ndarray) -> bool:
    nxt = np.roll(poly, -1, axis=0)
    cr = (nxt[:, 0] - poly[:, 0]) * (p[1] - poly[:, 1]) - (nxt[:, 1] - poly[:, 1]) * (p[0] - poly[:, 0])
    return bool(np.all(cr >= -1e-14))


def _star_radius(poly: np.ndarray, centroid: np.ndarray) -> float:
    kernel = poly.copy()
    m = len(poly)
    for i in range(m):
        a, b = poly[i], poly[(i + 1) % m]
        t = b - a
        n = np.array([t[1], -t[0]])
        kernel = _clip_halfplane(kernel, a, n)
        if len(kernel) < 3:
            return 0.0
    if abs(_shoelace(kernel)) < 1e-300:
        return 0.0
    c = centroid if _point_in_convex(kernel, centroid) else kernel.mean(axis=0)
    nxt = np.roll(kernel, -1, axis=0)
    d = nxt - kernel
    L = np.hypot(d[:, 0], d[:, 1])
    ok = L > 0
    dist = np.abs(d[ok, 0] * (c[1] - kernel[ok, 1]) - d[ok, 1] * (c[0] - kernel[ok, 0])) / L[ok]
    return float(dist.min())


def check_mesh(mesh: PolygonalMesh, rho_min: float = 0.01) -> ShapeReport:
    """Per-cell (A1)/(A2)-style ratios: star radius / h_E and min vertex distance / h_E."""
    star = np.empty(mesh.n_cells)
    vert = np.empty(mesh.n_cells)
    for i, (c, g) in enumerate(zip(mesh.cells, mesh.geometry)):
        poly = mesh.vertices[c]
        diff = poly[:, None, :] - poly[None, :, :]
        dist = np.sqrt((diff**2).sum(-1))
        np.fill_diagonal(dist, np.inf)
        vert[i] = dist.min() / g.diameter
        star[i] = _star_radius(poly, g.centroid) / g.diameter
    return ShapeReport(star, vert, rho_min)


# ---------------------------------------------------------------------------
# CVT


def _poly_centroid(poly: np.ndarray) -> np.ndarray:
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cr = x * yn - xn * y
    A = 0.5 * cr.sum()
    return np.array([((x + xn) * cr).sum(), ((y + yn) * cr).sum()]) / (6.0 * A)


def _bounded_voronoi(seeds: np.ndarray, box):
    """Voronoi diagram of ``seeds`` clipped to an axis-aligned box via mirroring."""
    x0, x1, y0, y1 = box
    s = seeds
    mirrored = np.vstack(
        [
            s,
            np.column_stack([2 * x0 - s[:, 0], s[:, 1]]),
            np.column_stack([2 * x1 - s[:, 0], s[:, 1]]),
            np.column_stack([s[:, 0], 2 * y0 - s[:, 1]]),
            np.column_stack([s[:, 0], 2 * y1 - s[:, 1]]),
        ]
    )
    vor = Voronoi(mirrored)
    regions = []
    for i in range(len(s)):
        reg = vor.regions[vor.point_region[i]]
        if -1 in reg or len(reg) < 3:
            raise MeshError("unbounded Voronoi region for an interior seed")
        pts = vor.vertices[reg]
        ang = np.arctan2(pts[:, 1] - s[i, 1], pts[:, 0] - s[i, 0])
        order = np.argsort(ang)
        regions.append(np.asarray(reg)[order])
    return vor.vertices.copy(), regions


def _snap_to_box(v: np.ndarray, box, tol: float) -> np.ndarray:
    x0, x1, y0, y1 = box
    v = v.copy()
    for col, lo, hi in ((0, x0, x1), (1, y0, y1)):
        v[np.abs(v[:, col] - lo) < tol, col] = lo
        v[np.abs(v[:, col] - hi) < tol, col] = hi
    return v


def _on_box(v: np.ndarray, box) -> np.ndarray:
    x0, x1, y0, y1 = box
    return np.column_stack([v[:, 0] == x0, v[:, 0] == x1, v[:, 1] == y0, v[:, 1] == y1])


def _compact(vertices: np.ndarray, cells: list) -> tuple[np.ndarray, list]:
    used = np.unique(np.concatenate(cells))
    remap = -np.ones(len(vertices), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return vertices[used], [remap[c] for c in cells]


def _merge_close(vertices: np.ndarray, cells: list, tol: float):
    """Merge numerically coincident vertices (degenerate Voronoi vertices)."""
    key = np.round(vertices / tol).astype(np.int64)
    _, first, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
    inv = inv.ravel()
    new_cells = []
    for c in cells:
        c2 = inv[c]
        keep = np.concatenate([[True], c2[1:] != c2[:-1]])
        c2 = c2[keep]
        if len(c2) > 1 and c2[0] == c2[-1]:
            c2 = c2[:-1]
        new_cells.append(c2)
    return vertices[first], new_cells


def _collapse_short_edges(vertices: np.ndarray, cells: list, box, rel_tol: float):
    """Collapse edges shorter than ``rel_tol`` times the smaller incident cell diameter.

    Boundary vertices stay on the box; box corners never move.
    """
    v = vertices.copy()
    cells = [c.copy() for c in cells]
    for _ in range(50):
        diam = []
        for c in cells:
            p = v[c]
            d = p[:, None, :] - p[None, :, :]
            diam.append(np.sqrt((d**2).sum(-1)).max())
        best = {}
        for ci, c in enumerate(cells):
            m = len(c)
            for i in range(m):
                a, b = int(c[i]), int(c[(i + 1) % m])
                key = (min(a, b), max(a, b))
                best[key] = min(best.get(key, np.inf), diam[ci])
        on = _on_box(v, box)
        tri_vertices = set()
        for c in cells:
            if len(c) <= 3:
                tri_vertices.update(c.tolist())
        target = -np.ones(len(v), dtype=np.int64)
        moved = False
        touched = set()
        for (a, b), dmin in sorted(best.items(), key=lambda kv: np.hypot(*(v[kv[0][0]] - v[kv[0][1]]))):
            L = np.hypot(*(v[a] - v[b]))
            if L >= rel_tol * dmin:
                break
            if a in touched or b in touched or a in tri_vertices or b in tri_vertices:
                continue
            ca, cb = on[a].sum(), on[b].sum()
            if ca == 2 and cb == 2:
                continue
            if ca > cb:
                keep, drop, pos = a, b, v[a]
            elif cb > ca:
                keep, drop, pos = b, a, v[b]
            elif ca == 1 and not np.array_equal(on[a], on[b]):
                continue
            else:
                keep, drop, pos = a, b, 0.5 * (v[a] + v[b])
            v[keep] = pos
            target[drop] = keep
            touched.update((a, b))
            moved = True
        if not moved:
            break
        new_cells = []
        for c in cells:
            c2 = np.where(target[c] >= 0, target[c], c)
            keep = np.concatenate([[True], c2[1:] != c2[:-1]])
            c2 = c2[keep]
            if c2[0] == c2[-1]:
                c2 = c2[:-1]
            new_cells.append(c2)
        cells = new_cells
    return _compact(v, cells)


def _cvt_seeds(n: int, box, iterations: int, rng: np.random.Generator, seeds=None) -> np.ndarray:
    x0, x1, y0, y1 = box
    if seeds is None:
        seeds = np.column_stack([rng.uniform(x0, x1, n), rng.uniform(y0, y1, n)])
    s = np.asarray(seeds, float).copy()
    for _ in range(iterations):
        verts, regions = _bounded_voronoi(s, box)
        s = np.array([_poly_centroid(verts[r]) for r in regions])
    return s


def _voronoi_mesh(seeds, box, collapse_tol: float, family: str, nominal_h) -> PolygonalMesh:
    verts, regions = _bounded_voronoi(seeds, box)
    scale = max(box[1] - box[0], box[3] - box[2])
    verts = _snap_to_box(verts, box, 1e-10 * scale)
    verts, regions = _compact(verts, regions)
    verts, regions = _merge_close(verts, regions, 1e-9 * scale)
    if collapse_tol > 0:
        verts, regions = _collapse_short_edges(verts, regions, box, collapse_tol)
    return PolygonalMesh(verts, tuple(regions), nominal_h=nominal_h, family=family)


def generate_cvt(
    target_h: float,
    lloyd_iterations: int = 100,
    rng_seed: int = 0,
    box=(0.0, 1.0, 0.0, 1.0),
    seeds=None,
    collapse_tol: float = 0.1,
    area_eps: float = 1e-12,
    max_retries: int = 5,
) -> PolygonalMesh:
    """Lloyd-relaxed Voronoi tessellation of a box with about area/target_h**2 cells.

    ``seeds`` overrides the random initial generators (then ``target_h`` only
    labels the mesh).  Degenerate cells trigger a reported regeneration with
    perturbed seeds.
    """
    if not 0 < target_h <= 1 * max(box[1] - box[0], box[3] - box[2]):
        raise ValueError("target_h must be positive and not exceed the box size")
    rng = np.random.default_rng(rng_seed)
    area = (box[1] - box[0]) * (box[3] - box[2])
    n = max(1, int(round(area / target_h**2))) if seeds is None else len(seeds)
    init = None if seeds is None else np.asarray(seeds, float)
    for attempt in range(max_retries + 1):
        s = _cvt_seeds(n, box, lloyd_iterations, rng, init)
        mesh = _voronoi_mesh(s, box, collapse_tol if n > 1 else 0.0, "cvt", target_h)
        if mesh.cell_areas.min() > area_eps * area:
            return mesh
        log.warning("degenerate CVT cell (attempt %d); regenerating with perturbed seeds", attempt)
        base = s if init is None else init
        init = base + rng.normal(scale=1e-3 * target_h, size=base.shape)
        init[:, 0] = np.clip(init[:, 0], box[0] + 1e-6, box[1] - 1e-6)
        init[:, 1] = np.clip(init[:, 1], box[2] + 1e-6, box[3] - 1e-6)
    raise MeshError("could not generate a non-degenerate CVT")


# ---------------------------------------------------------------------------
# distorted quadrilaterals


def generate_distorted_quads(n_per_side: int, amplitude: float = 0.3, rng_seed: int = 0) -> PolygonalMesh:
    """Uniform n x n quads of the unit square with randomly displaced interior vertices.

    Each interior vertex moves by a vector drawn uniformly from the disk of
    radius ``amplitude / n``; displacements that invalidate a cell are resampled.
    """
    if n_per_side < 1:
        raise ValueError("n_per_side must be >= 1")
    if not 0 <= amplitude < 0.5:
        raise ValueError("amplitude must lie in [0, 0.5)")
    n = n_per_side
    rng = np.random.default_rng(rng_seed)
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    vid = lambda i, j: j * (n + 1) + i  # noqa: E731
    cells = [np.array([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)]) for j in range(n) for i in range(n)]
    R = amplitude / n
    if R > 0:
        for j in range(1, n):
            for i in range(1, n):
                v = vid(i, j)
                incident = [cells[jj * n + ii] for jj in (j - 1, j) for ii in (i - 1, i)]
                base = verts[v].copy()
                for _ in range(1000):
                    r = R * np.sqrt(rng.uniform())
                    t = rng.uniform(0, 2 * np.pi)
                    verts[v] = base + r * np.array([np.cos(t), np.sin(t)])
                    if all(is_simple_polygon(verts[c]) for c in incident):
                        break
                else:
                    verts[v] = base
    return PolygonalMesh(verts, tuple(cells), nominal_h=1.0 / n, family="dquad")


# ---------------------------------------------------------------------------
# disk meshes


def disk_map(pts: np.ndarray) -> np.ndarray:
    """Square [-1,1]^2 to unit disk: (x sqrt(1 - y^2/2), y sqrt(1 - x^2/2))."""
    p = np.atleast_2d(np.asarray(pts, float))
    x, y = p[:, 0], p[:, 1]
    return np.column_stack([x * np.sqrt(1 - y**2 / 2), y * np.sqrt(1 - x**2 / 2)])


def _disk_triangles(target_h: float, rng_seed: int) -> PolygonalMesh:
    rng = np.random.default_rng(rng_seed)
    N = max(1, int(round(1.0 / target_h)))
    pts = [np.zeros((1, 2))]
    for i in range(1, N + 1):
        r = i / N
        m = max(6, int(round(2 * np.pi * r / target_h)))
        t0 = rng.uniform(0, 2 * np.pi / m)
        t = t0 + 2 * np.pi * np.arange(m) / m
        pts.append(np.column_stack([r * np.cos(t), r * np.sin(t)]))
    P = np.vstack(pts)
    tri = Delaunay(P).simplices
    cells = []
    for t in tri:
        if _shoelace(P[t]) < 0:
            t = t[::-1]
        if _shoelace(P[t]) > 1e-14:
            cells.append(t)
    return PolygonalMesh(P, tuple(cells), nominal_h=target_h, family="tri")


def generate_disk_meshes(family: str, target_h: float, rng_seed: int = 0, lloyd_iterations: int = 100) -> PolygonalMesh:
    """Unit-disk meshes: ``triangles`` (rings + Delaunay) or ``mapped_cvt``."""
    fam = family.replace("-", "_").lower()
    if fam in ("triangles", "tri", "t"):
        return _disk_triangles(target_h, rng_seed)
    if fam in ("mapped_cvt", "w"):
        sq = generate_cvt(target_h, lloyd_iterations, rng_seed, box=(-1.0, 1.0, -1.0, 1.0))
        V = disk_map(sq.vertices)
        r = np.hypot(V[:, 0], V[:, 1])
        on_circle = np.abs(r - 1.0) < 1e-12
        V[on_circle] /= r[on_circle, None]
        for ci, c in enumerate(sq.cells):
            if not is_simple_polygon(V[c]):
                raise MeshError(f"mapped cell {ci} is not a simple polygon")
        return PolygonalMesh(V, sq.cells, nominal_h=target_h, family="mapped-cvt")
    raise ValueError(f"unknown disk family {family!r}; expected 'triangles' or 'mapped_cvt'")


def make_mesh(family: str, h: float, seed: int = 0, **kw) -> PolygonalMesh:
    """Dispatch on the CLI family names: cvt, dquad, tri, mapped-cvt."""
    fam = family.lower()
    if fam == "cvt":
        return generate_cvt(h, rng_seed=seed, **kw)
    if fam == "dquad":
        return generate_distorted_quads(int(round(1.0 / h)), kw.get("amplitude", 0.3), seed)
    if fam in ("tri", "triangles"):
        return generate_disk_meshes("triangles", h, seed)
    if fam in ("mapped-cvt", "mapped_cvt"):
        return generate_disk_meshes("mapped_cvt", h, seed, **kw)
    raise ValueError(f"unknown mesh family {family!r}; valid: cvt, dquad, tri, mapped-cvt")


# ---------------------------------------------------------------------------
# text format


def write_mesh(mesh: PolygonalMesh, path) -> None:
    lines = ["vem-mesh 1", f"{mesh.n_vertices} {mesh.n_cells}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines += [" ".join([str(len(c))] + [str(int(i)) for i in c]) for c in mesh.cells]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> PolygonalMesh:
    raw = Path(path).read_text().splitlines()
    if not raw or raw[0].split() != ["vem-mesh", "1"]:
        raise MeshFormatError(1, "expected header 'vem-mesh 1'")
    try:
        nv, nc = (int(t) for t in raw[1].split())
    except (IndexError, ValueError):
        raise MeshFormatError(2, "expected '<n_vertices> <n_cells>'") from None
    if len(raw) < 2 + nv + nc:
        raise MeshFormatError(len(raw), "file ends before all vertices and cells were read")
    verts = np.empty((nv, 2))
    for i in range(nv):
        ln = 3 + i
        parts = raw[ln - 1].split()
        if len(parts) != 2:
            raise MeshFormatError(ln, "expected 'x y'")
        try:
            verts[i] = [float(parts[0]), float(parts[1])]
        except ValueError:
            raise MeshFormatError(ln, "non-numeric coordinate") from None
    cells = []
    for j in range(nc):
        ln = 3 + nv + j
        try:
            parts = [int(t) for t in raw[ln - 1].split()]
        except ValueError:
            raise MeshFormatError(ln, "non-integer cell entry") from None
        if not parts or parts[0] != len(parts) - 1:
            raise MeshFormatError(ln, "vertex count does not match the number of indices")
        if parts[0] < 3:
            raise MeshFormatError(ln, "open polygon: a cell needs at least 3 vertices")
        idx = parts[1:]
        bad = [i for i in idx if i < 0 or i >= nv]
        if bad:
            raise MeshFormatError(ln, f"vertex index {bad[0]} out of range [0, {nv})")
        if len(set(idx)) != len(idx):
            raise MeshFormatError(ln, "open polygon: repeated vertex index")
        cells.append(np.array(idx, dtype=np.int64))
    return PolygonalMesh(verts, tuple(cells))
