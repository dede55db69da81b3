"""Structured triangle meshes of the thin domain, its reference cells, and interval meshes.

Every mesh is built column by column: the horizontal axis is cut at all
period boundaries and profile breakpoints, each column is tensor-gridded
and each quad is split into two triangles.  For piecewise-constant profiles
all columns share one table of vertical levels (which contains every
distinct height), so comb-like tops are meshed exactly and conformingly.
Continuous profiles use a sigma grid: each vertical line carries the same
number of nodes, uniformly spaced up to the local top.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from .geometry import CellGeometry, ThinDomainSpec, eval_profile, partition

TAGS = ("bottom", "top", "left", "right", "jump")


class MeshTooCoarse(ValueError):
    pass


class IncompatiblePeriodicTrace(ValueError):
    pass


class PointOutsideDomain(ValueError):
    pass


class TriangleMesh:
    """P1 triangle mesh with tagged boundary edges and optional periodic node pairs."""

    def __init__(self, nodes, elements, boundary_edges, boundary_tags,
                 periodic_pairs=None, h=None, element_tags=None):
        self.nodes = np.ascontiguousarray(nodes, dtype=float)
        self.elements = np.ascontiguousarray(elements, dtype=np.int64)
        self.boundary_edges = np.asarray(boundary_edges, dtype=np.int64).reshape(-1, 2)
        self.boundary_tags = np.asarray(boundary_tags, dtype=object)
        if periodic_pairs is None:
            periodic_pairs = np.empty((0, 2), dtype=np.int64)
        self.periodic_pairs = np.asarray(periodic_pairs, dtype=np.int64).reshape(-1, 2)
        self.h = h
        if element_tags is None:
            element_tags = np.zeros(len(self.elements), dtype=np.int64)
        self.element_tags = np.asarray(element_tags, dtype=np.int64)

    def __repr__(self):
        return (f"TriangleMesh(nodes={self.n_nodes}, elements={self.n_elements}, "
                f"periodic_pairs={len(self.periodic_pairs)})")

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.elements]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def areas(self) -> np.ndarray:
        return self.signed_areas

    @property
    def area(self) -> float:
        return float(math.fsum(self.signed_areas))

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.nodes[self.elements].mean(axis=1)

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """Constant gradients of the three P1 basis functions, shape (M, 3, 2)."""
        p = self.nodes[self.elements]
        x, y = p[..., 0], p[..., 1]
        twice = 2.0 * self.signed_areas
        gx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
        gy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
        return np.stack([gx, gy], axis=2) / twice[:, None, None]

    @cached_property
    def locator(self) -> "PointLocator":
        return PointLocator(self)

    def edges_with_tag(self, tag: str) -> np.ndarray:
        return self.boundary_edges[self.boundary_tags == tag]

    def count_components(self) -> int:
        from scipy.sparse import coo_matrix
        from scipy.sparse.csgraph import connected_components

        e = self.elements
        rows = np.concatenate([e[:, 0], e[:, 1], e[:, 2]])
        cols = np.concatenate([e[:, 1], e[:, 2], e[:, 0]])
        graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(self.n_nodes,) * 2)
        used = np.unique(e)
        n, labels = connected_components(graph, directed=False)
        return len(np.unique(labels[used]))


@dataclass(frozen=True)
class IntervalMesh:
    nodes: np.ndarray

    @property
    def n_elements(self) -> int:
        return len(self.nodes) - 1


def mesh_interval(n: int) -> IntervalMesh:
    if n < 1:
        raise ValueError("interval mesh needs at least one element")
    nodes = np.arange(n + 1) / n
    nodes[-1] = 1.0
    return IntervalMesh(nodes)


# --------------------------------------------------------------------------
# column layouts in cell units (y1, y2)

@dataclass
class _Layout:
    """Vertical lines and per-column data of a column mesh, in cell units."""
    lines: np.ndarray          # x of vertical lines, length C+1
    mode: str                  # "levels" or "sigma"
    levels: Optional[np.ndarray] = None   # shared level table (levels mode)
    col_levels: Optional[np.ndarray] = None  # top level index per column (levels mode)
    tops: Optional[np.ndarray] = None     # top height per line minus base (sigma mode)
    base: float = 0.0
    ny: int = 0


def _subdivide(a: float, b: float, h: float) -> np.ndarray:
    n = max(1, int(math.ceil((b - a) / h - 1e-9)))
    return a + (b - a) * np.arange(n) / n


def _level_table(heights, base: float, h: float) -> np.ndarray:
    """Shared vertical levels: every distinct height is a level, gaps subdivided by h."""
    distinct = np.unique(np.asarray(heights, dtype=float))
    distinct = distinct[distinct > base]
    parts = [np.array([base])]
    prev = base
    for d in distinct:
        parts += [_subdivide(prev, d, h), np.array([d])]
        prev = d
    return np.unique(np.concatenate(parts))


def _graded(table: np.ndarray, at: float, hmin: float, h: float, ratio: float = 2.0) -> np.ndarray:
    """Add levels at distances hmin, hmin*ratio, ... < h on both sides of ``at``."""
    if not 0 < hmin < h:
        return table
    steps = hmin * ratio ** np.arange(int(math.ceil(math.log(h / hmin, ratio))))
    extra = np.concatenate([at - steps, at + steps])
    extra = extra[(extra > table[0]) & (extra < table[-1])]
    # drop added levels that would crowd an existing one
    gap = np.min(np.abs(extra[:, None] - table[None, :]), axis=1)
    extra = extra[gap > 0.5 * np.minimum(np.abs(extra - at), h)]
    return np.unique(np.concatenate([table, extra]))


def _cell_layout(profile, h: float, base_at_g0: bool = False,
                 grade_hmin: Optional[float] = None) -> _Layout:
    """Column layout of one period [0, L] of Y* (or of Y*+ when base_at_g0).

    ``grade_hmin`` adds geometrically graded levels around y2 = g0 (levels
    mode only), starting at that spacing.
    """
    L = profile.period
    cuts = np.append(profile.kinks(), L)
    cuts = np.unique(np.concatenate([[0.0], cuts]))
    lines = np.concatenate([_subdivide(a, b, h) for a, b in zip(cuts[:-1], cuts[1:])] + [[L]])
    base = profile.g0 if base_at_g0 else 0.0
    if profile.is_piecewise_constant:
        mids = 0.5 * (lines[:-1] + lines[1:])
        heights = eval_profile(profile, mids)
        table = _level_table(heights, base, h)
        if grade_hmin is not None and not profile.is_constant:
            table = _graded(table, profile.g0, grade_hmin, h)
        col_levels = np.searchsorted(table, heights)
        if not np.allclose(table[col_levels], heights, rtol=0, atol=0):
            raise AssertionError("level table misses a profile height")
        return _Layout(lines, "levels", levels=table, col_levels=col_levels, base=base)
    tops = eval_profile(profile, lines) - base
    tops = np.where(np.abs(tops) < 1e-14 * profile.g1, 0.0, tops)
    tops[-1] = tops[0]
    ny = max(1, int(math.ceil((profile.g1 - base) / h - 1e-9)))
    return _Layout(lines, "sigma", tops=tops, base=base, ny=ny)


def _tile(cell: _Layout, n_periods: int, remainder: float, profile, h: float) -> _Layout:
    """Repeat a one-period layout ``n_periods`` times and append a partial period."""
    L = profile.period
    local = cell.lines[:-1]
    pieces = [k * L + local for k in range(n_periods)]
    data = []
    if cell.mode == "levels":
        data = [cell.col_levels] * n_periods
    else:
        data = [cell.tops[:-1]] * n_periods
    if remainder > 0:
        part = local[local < remainder]
        if remainder - part[-1] < 1e-9 * h and len(part) > 1:
            # avoid a sliver column when the next line is not a jump
            if cell.mode == "sigma" or cell.col_levels[len(part) - 1] == cell.col_levels[len(part) - 2]:
                part = part[:-1]
        pieces.append(n_periods * L + part)
        if cell.mode == "levels":
            data.append(cell.col_levels[:len(part)])
        else:
            data.append(cell.tops[:len(part)])
    end = n_periods * L + remainder
    lines = np.concatenate(pieces + [[end]])
    if cell.mode == "levels":
        return _Layout(lines, "levels", levels=cell.levels,
                       col_levels=np.concatenate(data), base=cell.base)
    tops = np.concatenate(data + [[eval_profile(profile, end) - cell.base]])
    tops = np.where(np.abs(tops) < 1e-14 * profile.g1, 0.0, tops)
    return _Layout(lines, "sigma", tops=tops, base=cell.base, ny=cell.ny)


# --------------------------------------------------------------------------
# mesh assembly from a layout

def _build(layout: _Layout, xmap, ymap, periodic: bool, h: float) -> TriangleMesh:
    if layout.mode == "levels":
        return _build_levels(layout, xmap, ymap, periodic, h)
    return _build_sigma(layout, xmap, ymap, periodic, h)


def _build_levels(lay: _Layout, xmap, ymap, periodic, h) -> TriangleMesh:
    C = len(lay.lines) - 1
    K = lay.col_levels
    left = np.concatenate([[0], K])
    right = np.concatenate([K, [0]])
    line_top = np.maximum(left, right)
    counts = np.where(line_top > 0, line_top + 1, 0)
    offset = np.concatenate([[0], np.cumsum(counts)])
    n_nodes = offset[-1]

    xs = xmap(lay.lines)
    ys = ymap(lay.levels)
    line_idx = np.repeat(np.arange(C + 1), counts)
    lev_idx = np.arange(n_nodes) - offset[line_idx]
    nodes = np.column_stack([xs[line_idx], ys[lev_idx]])

    # quads: column c, layer k, for k < K[c]
    col = np.repeat(np.arange(C), K)
    layer = np.arange(K.sum()) - np.repeat(np.cumsum(K) - K, K)
    a = offset[col] + layer
    b = offset[col + 1] + layer
    c = b + 1
    d = a + 1
    elements = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    # interleave so that both triangles of a quad are neighbours in memory
    order = np.argsort(np.concatenate([np.arange(len(a)) * 2, np.arange(len(a)) * 2 + 1]),
                       kind="stable")
    elements = elements[order]

    edges, tags = [], []
    filled = np.nonzero(K > 0)[0]
    edges.append(np.column_stack([offset[filled], offset[filled + 1]]))
    tags += ["bottom"] * len(filled)
    edges.append(np.column_stack([offset[filled] + K[filled], offset[filled + 1] + K[filled]]))
    tags += ["top"] * len(filled)

    pair_top = 0
    if periodic:
        pair_top = min(K[0], K[-1])
    for j in range(C + 1):
        lo, hi = min(left[j], right[j]), max(left[j], right[j])
        if j == 0 or j == C:
            hi = line_top[j]
            k = np.arange(hi)
            e = np.column_stack([offset[j] + k, offset[j] + k + 1])
            side = "left" if j == 0 else "right"
            if periodic:
                edges.append(e)
                tags += [side] * min(pair_top, hi) + ["jump"] * max(0, hi - pair_top)
            else:
                edges.append(e)
                tags += [side] * hi
        elif lo != hi:
            k = np.arange(lo, hi)
            edges.append(np.column_stack([offset[j] + k, offset[j] + k + 1]))
            tags += ["jump"] * (hi - lo)
    edges = np.concatenate(edges)

    pairs = None
    if periodic:
        k = np.arange(pair_top + 1)
        pairs = np.column_stack([offset[0] + k, offset[C] + k])
        _check_pairs(nodes, pairs, xs[-1] - xs[0])
    return TriangleMesh(nodes, elements, edges, np.array(tags, dtype=object), pairs, h)


def _build_sigma(lay: _Layout, xmap, ymap, periodic, h) -> TriangleMesh:
    C = len(lay.lines) - 1
    ny = lay.ny
    flat = lay.tops <= 0
    counts = np.where(flat, 1, ny + 1)
    offset = np.concatenate([[0], np.cumsum(counts)])
    xs = xmap(lay.lines)
    line_idx = np.repeat(np.arange(C + 1), counts)
    k = np.arange(offset[-1]) - offset[line_idx]
    frac = np.where(flat[line_idx], 0.0, k / ny)
    nodes = np.column_stack([xs[line_idx], ymap(lay.base + frac * lay.tops[line_idx])])

    tris = []
    edges, tags = [], []
    kk = np.arange(ny)
    for j in range(C):
        fl, fr = flat[j], flat[j + 1]
        a0, b0 = offset[j], offset[j + 1]
        if fl and fr:
            continue
        if not fl and not fr:
            a, b = a0 + kk, b0 + kk
            quad_a = np.column_stack([a, b, b + 1])
            quad_b = np.column_stack([a, b + 1, a + 1])
            tris.append(np.stack([quad_a, quad_b], axis=1).reshape(-1, 3))
            edges.append([[a0, b0], [a0 + ny, b0 + ny]])
        elif fl:
            b = b0 + kk
            tris.append(np.column_stack([np.full(ny, a0), b, b + 1]))
            edges.append([[a0, b0], [a0, b0 + ny]])
        else:
            a = a0 + kk
            tris.append(np.column_stack([a, np.full(ny, b0), a + 1]))
            edges.append([[a0, b0], [a0 + ny, b0]])
        tags += ["bottom", "top"]
    elements = np.concatenate(tris)
    for j, side in ((0, "left"), (C, "right")):
        if not flat[j]:
            edges.append(np.column_stack([offset[j] + kk, offset[j] + kk + 1]))
            tags += [side] * ny
    edges = np.concatenate([np.asarray(e).reshape(-1, 2) for e in edges])
    pairs = None
    if periodic:
        n0 = counts[0]
        if counts[-1] != n0:
            raise IncompatiblePeriodicTrace("left and right traces carry different node counts")
        kp = np.arange(n0)
        pairs = np.column_stack([offset[0] + kp, offset[C] + kp])
        _check_pairs(nodes, pairs, xs[-1] - xs[0])
    return TriangleMesh(nodes, elements, edges, np.array(tags, dtype=object), pairs, h)


def _check_pairs(nodes, pairs, shift):
    dl = nodes[pairs[:, 0]]
    dr = nodes[pairs[:, 1]]
    if not (np.array_equal(dl[:, 1], dr[:, 1]) and np.allclose(dr[:, 0] - dl[:, 0], shift,
                                                              rtol=0, atol=1e-14 * max(1, shift))):
        raise IncompatiblePeriodicTrace("left/right node layouts do not match")


# --------------------------------------------------------------------------
# public mesh generators

def grading(spec: ThinDomainSpec, h: float) -> Optional[float]:
    """Smallest graded level spacing (cell units) used for R^eps, or None."""
    if spec.alpha <= 1:
        return None
    return h / spec.epsilon ** spec.alpha * spec.epsilon ** (spec.alpha - 1)


def mesh_thin_domain(spec: ThinDomainSpec, h: float) -> TriangleMesh:
    """Mesh R^eps as a tiling of scaled copies of the Y* cell mesh.

    ``h`` is the physical horizontal target size; the cell mesh uses
    ``h / eps^alpha`` in cell units in both directions, so vertical spacing
    in R^eps is proportional to eps.
    """
    prof = spec.profile
    cell_len = spec.period_length
    if not h > 0:
        raise ValueError("h must be positive")
    if h > cell_len / 4 * (1 + 1e-12):
        raise MeshTooCoarse(f"h={h:g} cannot resolve one oscillation period "
                            f"(need h <= {cell_len / 4:g})")
    h_cell = h / spec.epsilon ** spec.alpha
    part = partition(spec)
    remainder = 0.0 if part.lambda_empty else (1.0 - part.lambda_start) / spec.epsilon ** spec.alpha
    # for alpha > 1 a cell-unit height d is eps^(1-alpha) times longer than a
    # cell-unit width d, so grade towards y = eps g0 down to isotropic size
    cell = _cell_layout(prof, h_cell, grade_hmin=grading(spec, h))
    lay = _tile(cell, part.n_cells, remainder, prof, h_cell)
    ea, eps = spec.epsilon ** spec.alpha, spec.epsilon
    L = prof.period

    def xmap(t):
        k = np.floor(t / L + 1e-12)
        x = k * cell_len + (t - k * L) * ea
        x[-1] = 1.0
        return x

    mesh = _build(lay, xmap, lambda s: eps * s, False, h)
    mesh.element_tags = (mesh.centroids[:, 1] > eps * prof.g0).astype(np.int64)
    return mesh


def mesh_cell(geom: CellGeometry, h: float, periodic: bool = True,
              grade_hmin: Optional[float] = None) -> TriangleMesh:
    """Mesh of Y*, Y*+, R- or R+ (h in cell units).

    ``grade_hmin`` reproduces the levels graded towards y2 = g0 that
    ``mesh_thin_domain`` uses when alpha > 1.
    """
    prof = geom.profile
    if not h > 0:
        raise ValueError("h must be positive")
    if geom.domain in ("R-", "R+"):
        if h > 0.25:
            raise MeshTooCoarse("h must not exceed 1/4 on R- and R+")
        y0, y1 = (0.0, prof.g0) if geom.domain == "R-" else (prof.g0, prof.g1)
        if y1 <= y0:
            raise ValueError(f"{geom.domain} is empty for a constant profile")
        return rectangle_mesh(0.0, 1.0, y0, y1, int(math.ceil(1 / h - 1e-9)),
                              int(math.ceil((y1 - y0) / h - 1e-9)))
    if h > prof.period / 4 * (1 + 1e-12):
        raise MeshTooCoarse(f"h={h:g} cannot resolve the cell (need h <= L/4)")
    lay = _cell_layout(prof, h, base_at_g0=(geom.domain == "Y*+"), grade_hmin=grade_hmin)
    if geom.domain == "Y*+" and lay.mode == "levels" and not lay.col_levels.any():
        raise ValueError("Y*+ is empty for a constant profile")
    ident = lambda t: np.asarray(t, dtype=float)
    return _build(lay, ident, ident, periodic and geom.domain == "Y*", h)


def rectangle_mesh(x0, x1, y0, y1, nx: int, ny: int) -> TriangleMesh:
    table = y0 + (y1 - y0) * np.arange(ny + 1) / ny
    table[-1] = y1
    lines = x0 + (x1 - x0) * np.arange(nx + 1) / nx
    lines[-1] = x1
    lay = _Layout(lines, "levels", levels=table, col_levels=np.full(nx, ny))
    ident = lambda t: np.asarray(t, dtype=float)
    return _build(lay, ident, ident, False, max((x1 - x0) / nx, (y1 - y0) / ny))


def write_mesh(mesh: TriangleMesh, path) -> None:
    """Dump as text: header, ``x y`` node lines, then ``i j k tag`` element lines."""
    with open(path, "w") as fh:
        fh.write(f"nodes {mesh.n_nodes} elements {mesh.n_elements}\n")
        for x, y in mesh.nodes:
            fh.write(f"{x:.17g} {y:.17g}\n")
        for (i, j, k), t in zip(mesh.elements, mesh.element_tags):
            fh.write(f"{i} {j} {k} {t}\n")


def read_mesh(path) -> TriangleMesh:
    with open(path) as fh:
        head = fh.readline().split()
        n, m = int(head[1]), int(head[3])
        nodes = np.loadtxt(fh, max_rows=n, ndmin=2)
        elem = np.loadtxt(fh, max_rows=m, dtype=np.int64, ndmin=2)
    return TriangleMesh(nodes, elem[:, :3], np.empty((0, 2)), np.empty(0, dtype=object),
                        element_tags=elem[:, 3])


# --------------------------------------------------------------------------
# point location

class PointLocator:
    """Uniform-grid spatial index over element bounding boxes."""

    def __init__(self, mesh: TriangleMesh):
        self.mesh = mesh
        p = mesh.nodes[mesh.elements]
        lo, hi = p.min(axis=1), p.max(axis=1)
        self.origin = mesh.nodes.min(axis=0)
        span = mesh.nodes.max(axis=0) - self.origin
        ext = np.maximum((hi - lo).max(axis=0), 1e-300)
        # grid cell at least as large as any element so each box touches <= 2x2 cells
        self.shape = np.maximum(1, np.floor(span / ext).astype(np.int64))
        self.cell = np.where(span > 0, span / self.shape, 1.0)
        i0 = self._index(lo)
        i1 = self._index(hi)
        cand_e, cand_c = [], []
        for dx in (0, 1):
            for dy in (0, 1):
                ix = np.minimum(i0[:, 0] + dx, i1[:, 0])
                iy = np.minimum(i0[:, 1] + dy, i1[:, 1])
                cand_e.append(np.arange(len(lo)))
                cand_c.append(ix * self.shape[1] + iy)
        ce = np.concatenate(cand_e)
        cc = np.concatenate(cand_c)
        key = np.unique(cc * len(lo) + ce)
        cc, ce = key // len(lo), key % len(lo)
        self.elements_sorted = ce
        self.starts = np.searchsorted(cc, np.arange(self.shape[0] * self.shape[1] + 1))
        self.max_count = int(np.diff(self.starts).max())
        # barycentric maps
        x0 = p[:, 0]
        m = np.stack([p[:, 1] - x0, p[:, 2] - x0], axis=2)  # columns are edge vectors
        self.inv = np.linalg.inv(m)
        self.x0 = x0
        self.heights = 2 * mesh.signed_areas[:, None] / np.linalg.norm(
            p[:, [2, 0, 1]] - p[:, [1, 2, 0]], axis=2)

    def _index(self, pts):
        idx = np.floor((pts - self.origin) / self.cell).astype(np.int64)
        return np.clip(idx, 0, self.shape - 1)

    def barycentric(self, elems, pts):
        d = pts - self.x0[elems]
        l12 = np.einsum("nij,nj->ni", self.inv[elems], d)
        return np.column_stack([1 - l12.sum(axis=1), l12])

    def locate(self, pts, tol: float = 1e-12):
        """Return (element index, clamped barycentric coordinates) for each point.

        Points outside the mesh by more than ``tol`` (distance) raise
        PointOutsideDomain.  Ties go to the lowest element index.
        """
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        n = len(pts)
        cells = self._index(pts)
        flat = cells[:, 0] * self.shape[1] + cells[:, 1]
        start, stop = self.starts[flat], self.starts[flat + 1]
        best_e = np.full(n, -1, dtype=np.int64)
        best_d = np.full(n, -np.inf)
        for slot in range(self.max_count):
            has = start + slot < stop
            if not has.any():
                break
            ids = np.nonzero(has)[0]
            e = self.elements_sorted[start[ids] + slot]
            lam = self.barycentric(e, pts[ids])
            dist = (lam * self.heights[e]).min(axis=1)  # signed distance proxy
            # candidates come in increasing element order: keep the first one containing the point
            better = (best_d[ids] < 0) & (dist > best_d[ids])
            best_d[ids[better]] = dist[better]
            best_e[ids[better]] = e[better]
        bad = best_d < -tol
        if bad.any():
            i = int(np.nonzero(bad)[0][0])
            raise PointOutsideDomain(f"point {pts[i]} lies outside the mesh")
        lam = self.barycentric(best_e, pts)
        lam = np.clip(lam, 0.0, None)
        lam /= lam.sum(axis=1, keepdims=True)
        return best_e, lam
