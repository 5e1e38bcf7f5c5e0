"""Curved-boundary quadrilateral meshes for perforated domains.

Cells are 9-node biquadratic quads (4 corners CCW, 4 edge midside nodes,
1 center node).  Curved inclusion boundaries are realized isoparametrically
by snapping midside nodes of inclusion edges onto the exact curve; cell
centers are completed by transfinite blending of the 8 boundary nodes.

Meshes are conforming up to one-level hanging nodes.  Refinement splits
marked cells 1->4, closure-marks neighbors to keep the one-level rule and
co-refines periodic partner cells so periodic pairings stay 1:1.

Three generators cover the problem geometries:

* :func:`build_unit_cell_mesh` -- perforated unit cell (permeability).
* :func:`build_strip_mesh`     -- free-fluid block over a tiling of scaled
  perforated cells (microscopic problem, width eps or L).
* :func:`build_bl_mesh`        -- boundary-layer column (0,1) x (-l, k).

Shared nodes between sub-blocks are welded by exact coordinate identity;
all coordinates on glue lines are produced as ``(index + offset) * scale``
with the same floats on both sides, so no tolerance is involved.
"""

import hashlib
import io
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .elements import gauss_2d, geometry_jacobians, map_points
from .inclusions import GeometryError, InclusionSpec, PlacedCurve

REGION_FREE = 0
REGION_POROUS = 1

# local edges: (corner, corner, midside slot)
CELL_EDGES = ((0, 1, 4), (1, 2, 5), (2, 3, 6), (3, 0, 7))

# 1D quadratic trace interpolation weights at t=1/4 and 3/4 on nodes (a, b, mid)
_QTRACE_Q1 = np.array([0.375, -0.125, 0.75])
_QTRACE_Q3 = np.array([-0.125, 0.375, 0.75])


def _edge_key(a, b):
    return (a, b) if a < b else (b, a)


def as_fraction(value, max_den=10**4):
    """Parse eps given as Fraction, 'p/q' string, int or decimal float."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        if "/" in value:
            p, q = value.split("/")
            return Fraction(int(p), int(q))
        value = float(value)
    if isinstance(value, int):
        return Fraction(value)
    frac = Fraction(value).limit_denominator(max_den)
    if abs(float(frac) - value) > 1e-12:
        raise GeometryError(f"{value!r} is not representable as p/q with q <= {max_den}")
    return frac


@dataclass(frozen=True)
class GeometrySpec:
    """Perforated two-domain geometry: free block over an eps-periodic bed."""

    inclusion: InclusionSpec
    epsilon: Fraction
    L: Fraction = Fraction(1)
    free_height: int = 1
    porous_height: int = 1
    bl_cutoff_k: int = 5
    bl_cutoff_l: int = 5

    def __post_init__(self):
        object.__setattr__(self, "epsilon", as_fraction(self.epsilon))
        object.__setattr__(self, "L", as_fraction(self.L))
        eps = self.epsilon
        if not (0 < eps <= 1):
            raise GeometryError("epsilon must lie in (0, 1]")
        if (1 / eps).denominator != 1:
            raise GeometryError("1/epsilon must be an integer (whole cell rows)")
        if (self.L / eps).denominator != 1:
            raise GeometryError("L/epsilon must be an integer (whole cell columns)")
        if self.bl_cutoff_k < 1 or self.bl_cutoff_l < 1:
            raise GeometryError("cut-off levels must be >= 1")


def transfinite_center(cell_coords):
    """Center geometry node from the 8 boundary nodes (Coons completion)."""
    corners = cell_coords[0:4]
    mids = cell_coords[4:8]
    return mids.sum(axis=0) / 2.0 - corners.sum(axis=0) / 4.0


class QuadMesh:
    """Leaf-cell quadrilateral mesh with boundary tags and periodic pairs."""

    def __init__(self, nodes, cells, level, region, pore, curve_id, curves,
                 edge_tags, periodic, lines):
        self.nodes = np.asarray(nodes, dtype=float)
        self.cells = np.asarray(cells, dtype=np.int64)
        self.level = np.asarray(level, dtype=np.int32)
        self.region = np.asarray(region, dtype=np.int8)
        self.pore = np.asarray(pore, dtype=np.int64)
        self.curve_id = np.asarray(curve_id, dtype=np.int64)
        self.curves = list(curves)
        self.edge_tags = dict(edge_tags)      # edge key -> tag
        self.periodic = list(periodic)        # [((a0,a1),(b0,b1)), ...] ordered
        self.lines = dict(lines)              # name -> (y, x_lo, x_hi)
        self._edge_mid = None
        self._edge_cells = None

    # ------------------------------------------------------------------
    # derived connectivity
    # ------------------------------------------------------------------
    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_cells(self):
        return len(self.cells)

    def _build_edge_maps(self):
        mid = {}
        owners = {}
        for c, cell in enumerate(self.cells):
            for le, (i, j, m) in enumerate(CELL_EDGES):
                key = _edge_key(cell[i], cell[j])
                mid[key] = cell[m]
                owners.setdefault(key, []).append((c, le))
        self._edge_mid = mid
        self._edge_cells = owners

    @property
    def edge_mid(self):
        if self._edge_mid is None:
            self._build_edge_maps()
        return self._edge_mid

    @property
    def edge_cells(self):
        if self._edge_cells is None:
            self._build_edge_maps()
        return self._edge_cells

    def hanging_edges(self):
        """Hanging relations: list of (parent_key, mid, coarse_cell, fine_cells).

        A parent edge (a,b) with midside m is hanging when only one leaf cell
        owns it while leaf cells own the child edges (a,m) and (m,b).
        """
        mid = self.edge_mid
        owners = self.edge_cells
        out = []
        for key in sorted(owners):
            own = owners[key]
            if len(own) != 1:
                continue
            m = mid[key]
            k1, k2 = _edge_key(key[0], m), _edge_key(key[1], m)
            if k1 in owners and k2 in owners:
                fine = [owners[k1][0][0], owners[k2][0][0]]
                out.append((key, m, own[0][0], fine))
        return out

    def boundary_edges(self, tag=None):
        """Tagged boundary edges as list of (a, b, mid, tag)."""
        mid = self.edge_mid
        out = []
        for key, t in self.edge_tags.items():
            if key in mid and (tag is None or t == tag):
                out.append((key[0], key[1], mid[key], t))
        out.sort()
        return out

    def tagged_nodes(self, tag):
        """All nodes (corner and midside) on edges carrying `tag`."""
        nodes = set()
        for a, b, m, _ in self.boundary_edges(tag):
            nodes.update((a, b, m))
        return sorted(nodes)

    def cell_coords(self, cells=None):
        idx = self.cells if cells is None else self.cells[cells]
        return self.nodes[idx]

    # ------------------------------------------------------------------
    # quality and measure
    # ------------------------------------------------------------------
    def min_jacobian(self, n_gauss=4):
        pts, _ = gauss_2d(n_gauss)
        _, det, _ = geometry_jacobians(self.cell_coords(), pts)
        return float(det.min())

    def fluid_area(self, n_gauss=4, region=None):
        pts, w = gauss_2d(n_gauss)
        sel = slice(None) if region is None else np.flatnonzero(self.region == region)
        _, det, _ = geometry_jacobians(self.cell_coords()[sel], pts)
        return float(np.einsum("cq,q->", det, w))

    def periodic_node_pairs(self):
        """Node identifications from periodic edge pairs: list of (a, b)."""
        mid = self.edge_mid
        pairs = []
        for (a0, a1), (b0, b1) in self.periodic:
            pairs.append((a0, b0))
            pairs.append((a1, b1))
            pairs.append((mid[_edge_key(a0, a1)], mid[_edge_key(b0, b1)]))
        return pairs

    # ------------------------------------------------------------------
    # serialization (exact round-trip)
    # ------------------------------------------------------------------
    def dump(self, stream):
        w = stream.write
        w(f"nodes: {self.n_nodes}\n")
        for i, (x, y) in enumerate(self.nodes):
            w(f"{i} {float(x)!r} {float(y)!r}\n")
        w(f"cells: {self.n_cells}\n")
        for i, cell in enumerate(self.cells):
            tag = f"{int(self.region[i])}/{int(self.level[i])}/{int(self.pore[i])}/{int(self.curve_id[i])}"
            w(f"{i} " + " ".join(str(n) for n in cell) + f" {tag}\n")
        w(f"pairs: {len(self.periodic)}\n")
        for (a0, a1), (b0, b1) in self.periodic:
            w(f"{a0},{a1} {b0},{b1}\n")
        w(f"faces: {len(self.edge_tags)}\n")
        for (a, b), t in sorted(self.edge_tags.items()):
            w(f"{a} {b} {t}\n")
        w(f"lines: {len(self.lines)}\n")
        for name, (y, lo, hi) in sorted(self.lines.items()):
            w(f"{name} {float(y)!r} {float(lo)!r} {float(hi)!r}\n")
        w(f"curves: {len(self.curves)}\n")
        for c in self.curves:
            s = c.spec
            w(f"{s.kind} {float(s.center[0])!r} {float(s.center[1])!r} {float(s.radius)!r} "
              f"{float(s.semi_axis_a)!r} {float(s.semi_axis_b)!r} {float(s.rotation_deg)!r} "
              f"{float(c.scale)!r} {float(c.shift[0])!r} {float(c.shift[1])!r}\n")

    def dumps(self):
        buf = io.StringIO()
        self.dump(buf)
        return buf.getvalue()

    def content_hash(self):
        return hashlib.sha256(self.dumps().encode()).hexdigest()[:16]

    @classmethod
    def load(cls, stream):
        def expect(line, name):
            head, count = line.split(":")
            if head != name:
                raise ValueError(f"expected section {name}, got {head}")
            return int(count)

        n = expect(stream.readline(), "nodes")
        nodes = np.empty((n, 2))
        for _ in range(n):
            i, x, y = stream.readline().split()
            nodes[int(i)] = (float(x), float(y))
        c = expect(stream.readline(), "cells")
        cells = np.empty((c, 9), dtype=np.int64)
        region = np.empty(c, dtype=np.int8)
        level = np.empty(c, dtype=np.int32)
        pore = np.empty(c, dtype=np.int64)
        curve_id = np.empty(c, dtype=np.int64)
        for _ in range(c):
            parts = stream.readline().split()
            i = int(parts[0])
            cells[i] = [int(v) for v in parts[1:10]]
            r, lv, po, cv = parts[10].split("/")
            region[i], level[i], pore[i], curve_id[i] = int(r), int(lv), int(po), int(cv)
        p = expect(stream.readline(), "pairs")
        periodic = []
        for _ in range(p):
            a, b = stream.readline().split()
            a0, a1 = (int(v) for v in a.split(","))
            b0, b1 = (int(v) for v in b.split(","))
            periodic.append(((a0, a1), (b0, b1)))
        f = expect(stream.readline(), "faces")
        edge_tags = {}
        for _ in range(f):
            a, b, t = stream.readline().split()
            edge_tags[(int(a), int(b))] = t
        k = expect(stream.readline(), "lines")
        lines = {}
        for _ in range(k):
            name, y, lo, hi = stream.readline().split()
            lines[name] = (float(y), float(lo), float(hi))
        m = expect(stream.readline(), "curves")
        curves = []
        for _ in range(m):
            parts = stream.readline().split()
            spec = InclusionSpec(kind=parts[0], center=(float(parts[1]), float(parts[2])),
                                 radius=float(parts[3]), semi_axis_a=float(parts[4]),
                                 semi_axis_b=float(parts[5]), rotation_deg=float(parts[6]))
            curves.append(PlacedCurve(spec, float(parts[7]), (float(parts[8]), float(parts[9]))))
        return cls(nodes, cells, level, region, pore, curve_id, curves,
                   edge_tags, periodic, lines)

    @classmethod
    def loads(cls, text):
        return cls.load(io.StringIO(text))


# ----------------------------------------------------------------------
# builder
# ----------------------------------------------------------------------
class _Builder:
    """Accumulates cells; shared nodes weld later by exact coordinates."""

    def __init__(self):
        self.coords = []
        self.cells = []
        self.region = []
        self.pore = []
        self.curve = []
        self.curves = []

    def node(self, xy):
        self.coords.append((float(xy[0]), float(xy[1])))
        return len(self.coords) - 1

    def add_curve(self, curve):
        self.curves.append(curve)
        return len(self.curves) - 1

    def add_cell(self, node_ids, region, pore=-1, curve=-1):
        self.cells.append(tuple(node_ids))
        self.region.append(region)
        self.pore.append(pore)
        self.curve.append(curve)

    def add_ogrid(self, curve, pore_id, curve_id, origin, scale):
        """Eight-cell O-grid filling one perforated cell.

        Outer-square node coordinates are computed as (origin + param)*scale
        so they weld exactly against neighboring blocks; `origin` holds the
        integer cell indices.
        """
        ox, oy = origin
        sq_param = [(0.0, 0.0), (0.5, 0.0), (1.0, 0.0), (1.0, 0.5),
                    (1.0, 1.0), (0.5, 1.0), (0.0, 1.0), (0.0, 0.5)]
        angles = np.deg2rad([225.0, 270.0, 315.0, 0.0, 45.0, 90.0, 135.0, 180.0])

        def gpt(px, py):
            return ((ox + px) * scale, (oy + py) * scale)

        sq = [self.node(gpt(*p)) for p in sq_param]
        inc_local = curve.spec.boundary_point(angles)
        inc = [self.node(((ox + p[0]) * scale, (oy + p[1]) * scale)) for p in inc_local]
        sq_mid = []
        for i in range(8):
            a = np.asarray(self.coords[sq[i]])
            b = np.asarray(self.coords[sq[(i + 1) % 8]])
            sq_mid.append(self.node(0.5 * (a + b)))
        spoke_mid = [self.node(0.5 * (np.asarray(self.coords[sq[i]]) + np.asarray(self.coords[inc[i]])))
                     for i in range(8)]
        inc_mid = []
        for i in range(8):
            p = 0.5 * (np.asarray(self.coords[inc[i]]) + np.asarray(self.coords[inc[(i + 1) % 8]]))
            inc_mid.append(self.node(curve.project(p)[0]))
        for i in range(8):
            j = (i + 1) % 8
            corners = [sq[i], sq[j], inc[j], inc[i]]
            mids = [sq_mid[i], spoke_mid[j], inc_mid[i], spoke_mid[i]]
            pts = np.array([self.coords[n] for n in corners + mids])
            ctr = self.node(transfinite_center(pts))
            self.add_cell(corners + mids + [ctr], REGION_POROUS, pore_id, curve_id)

    def add_block(self, xs, ys, region):
        """Tensor-product block of straight cells on gridlines xs x ys."""
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        cache = {}

        def nd(i2, j2):
            nid = cache.get((i2, j2))
            if nid is not None:
                return nid
            x = xs[i2 // 2] if i2 % 2 == 0 else 0.5 * (xs[i2 // 2] + xs[i2 // 2 + 1])
            y = ys[j2 // 2] if j2 % 2 == 0 else 0.5 * (ys[j2 // 2] + ys[j2 // 2 + 1])
            nid = self.node((x, y))
            cache[(i2, j2)] = nid
            return nid

        for j in range(len(ys) - 1):
            for i in range(len(xs) - 1):
                nine = [nd(2 * i, 2 * j), nd(2 * i + 2, 2 * j), nd(2 * i + 2, 2 * j + 2),
                        nd(2 * i, 2 * j + 2), nd(2 * i + 1, 2 * j), nd(2 * i + 2, 2 * j + 1),
                        nd(2 * i + 1, 2 * j + 2), nd(2 * i, 2 * j + 1), nd(2 * i + 1, 2 * j + 1)]
                self.add_cell(nine, region)

    def finish(self, lines=None):
        """Weld coinciding nodes (exact match) and emit the mesh."""
        coords = np.array(self.coords)
        seen = {}
        remap = np.empty(len(coords), dtype=np.int64)
        for i, (x, y) in enumerate(self.coords):
            j = seen.get((x, y))
            if j is None:
                seen[(x, y)] = i
                remap[i] = i
            else:
                remap[i] = j
        keep = np.flatnonzero(remap == np.arange(len(coords)))
        newid = -np.ones(len(coords), dtype=np.int64)
        newid[keep] = np.arange(len(keep))
        cells = newid[remap[np.array(self.cells, dtype=np.int64)]]
        return QuadMesh(coords[keep], cells, np.zeros(len(cells), dtype=np.int32),
                        np.array(self.region, dtype=np.int8),
                        np.array(self.pore, dtype=np.int64),
                        np.array(self.curve, dtype=np.int64),
                        self.curves, {}, [], lines or {})


# ----------------------------------------------------------------------
# tagging and pairing helpers
# ----------------------------------------------------------------------
def _tag_by_predicate(mesh, predicate, tag):
    """Tag untagged single-owner edges whose three nodes satisfy predicate."""
    for key in sorted(mesh.edge_cells):
        if len(mesh.edge_cells[key]) != 1 or key in mesh.edge_tags:
            continue
        m = mesh.edge_mid[key]
        pts = mesh.nodes[[key[0], key[1], m]]
        if all(predicate(x, y) for x, y in pts):
            mesh.edge_tags[key] = tag


def _tag_inclusions(mesh):
    for key in sorted(mesh.edge_cells):
        owners = mesh.edge_cells[key]
        if len(owners) != 1 or key in mesh.edge_tags:
            continue
        c, _le = owners[0]
        cid = mesh.curve_id[c]
        if cid < 0:
            continue
        curve = mesh.curves[cid]
        m = mesh.edge_mid[key]
        if curve.on_curve(mesh.nodes[[key[0], key[1], m]], tol=1e-9).all():
            mesh.edge_tags[key] = "inclusion"


def _add_periodic(mesh, tag_a, tag_b, shift):
    """Pair boundary edges tag_a <-> tag_b translated by `shift`."""
    ea = mesh.boundary_edges(tag_a)
    eb = mesh.boundary_edges(tag_b)
    if len(ea) != len(eb):
        raise GeometryError("periodic boundaries have mismatched edge counts")
    shift = np.asarray(shift, dtype=float)
    index = {}
    for a, b, m, _ in eb:
        lo = tuple(np.round(np.minimum(mesh.nodes[a], mesh.nodes[b]) - shift, 9))
        index[lo] = (a, b)
    pairs = []
    for a, b, m, _ in ea:
        lo = tuple(np.round(np.minimum(mesh.nodes[a], mesh.nodes[b]), 9))
        if lo not in index:
            raise GeometryError("periodic partner edge not found")
        pa, pb = index[lo]
        # order both pairs consistently (by position along the edge)
        if tuple(mesh.nodes[b]) < tuple(mesh.nodes[a]):
            a, b = b, a
        if tuple(mesh.nodes[pb] - shift) < tuple(mesh.nodes[pa] - shift):
            pa, pb = pb, pa
        pairs.append(((a, b), (pa, pb)))
    # exact coordinate identity across the pairing
    for (a0, a1), (b0, b1) in pairs:
        for s, t in ((a0, b0), (a1, b1)):
            mesh.nodes[t] = mesh.nodes[s] + shift
        ma = mesh.edge_mid[_edge_key(a0, a1)]
        mb = mesh.edge_mid[_edge_key(b0, b1)]
        mesh.nodes[mb] = mesh.nodes[ma] + shift
    mesh.periodic.extend(pairs)


# ----------------------------------------------------------------------
# generators
# ----------------------------------------------------------------------
def build_unit_cell_mesh(inclusion, base_refine=0, periodic=True):
    """Mesh of the fluid part of the unit cell with 1-periodic pairings."""
    b = _Builder()
    curve = PlacedCurve(inclusion, 1.0, (0.0, 0.0))
    cid = b.add_curve(curve)
    b.add_ogrid(curve, 0, cid, (0, 0), 1.0)
    mesh = b.finish()
    _tag_inclusions(mesh)
    _tag_by_predicate(mesh, lambda x, y: abs(x) < 1e-12, "left")
    _tag_by_predicate(mesh, lambda x, y: abs(x - 1) < 1e-12, "right")
    _tag_by_predicate(mesh, lambda x, y: abs(y) < 1e-12, "bottom")
    _tag_by_predicate(mesh, lambda x, y: abs(y - 1) < 1e-12, "top")
    if periodic:
        _add_periodic(mesh, "left", "right", (1.0, 0.0))
        _add_periodic(mesh, "bottom", "top", (0.0, 1.0))
    for _ in range(base_refine):
        mesh = refine(mesh)
    return mesh


def _graded_heights(h0, total, hmax=0.25, growth=2.0):
    """Gridlines 0..total starting at step h0, growing up to hmax."""
    ys = [0.0]
    h = min(h0, hmax, total)
    while ys[-1] + h < total - 0.75 * h:
        ys.append(ys[-1] + h)
        h = min(h * growth, hmax)
    ys.append(float(total))
    return ys


def build_strip_mesh(geom, width, base_refine=0, periodic=True):
    """Free block (width x free_height) over a tiling of eps-scaled cells.

    `width` must be an integer multiple of geom.epsilon.  The interface
    sits on y=0 and is recorded as the marked line 'interface'.
    """
    width = as_fraction(width)
    eps = geom.epsilon
    if (width / eps).denominator != 1:
        raise GeometryError("width must be an integer multiple of eps")
    ncols = int(width / eps)
    nrows = int(geom.porous_height / eps)
    feps = float(eps)
    b = _Builder()
    for r in range(nrows):
        for c in range(ncols):
            curve = PlacedCurve(geom.inclusion, feps, (c * feps, -(r + 1) * feps))
            cid = b.add_curve(curve)
            b.add_ogrid(curve, r * ncols + c, cid, (c, -(r + 1)), feps)
    # free block: x gridlines every eps/2 (they match the pore-cell tops)
    xs = [(c + f) * feps for c in range(ncols) for f in (0.0, 0.5)] + [ncols * feps]
    ys = _graded_heights(feps / 2.0, float(geom.free_height))
    b.add_block(xs, ys, REGION_FREE)
    fwidth = ncols * feps
    mesh = b.finish({"interface": (0.0, 0.0, fwidth)})
    _tag_inclusions(mesh)
    _tag_by_predicate(mesh, lambda x, y: abs(x) < 1e-12, "left")
    _tag_by_predicate(mesh, lambda x, y: abs(x - fwidth) < 1e-12, "right")
    _tag_by_predicate(mesh, lambda x, y: abs(y + geom.porous_height) < 1e-12, "bottom")
    _tag_by_predicate(mesh, lambda x, y: abs(y - geom.free_height) < 1e-12, "top")
    if periodic:
        _add_periodic(mesh, "left", "right", (fwidth, 0.0))
    for _ in range(base_refine):
        mesh = refine(mesh)
    return mesh


def build_bl_mesh(inclusion, k, l, base_refine=0):
    """Boundary-layer column (0,1) x (-l, k), l perforated cells below y=0."""
    if k < 1 or l < 1:
        raise GeometryError("cut-off levels k, l must be >= 1")
    b = _Builder()
    for r in range(l):
        curve = PlacedCurve(inclusion, 1.0, (0.0, -(r + 1.0)))
        cid = b.add_curve(curve)
        b.add_ogrid(curve, r, cid, (0, -(r + 1)), 1.0)
    for j in range(k):
        b.add_block([0.0, 0.5, 1.0], [float(j), j + 0.5, float(j + 1)], REGION_FREE)
    mesh = b.finish({"interface": (0.0, 0.0, 1.0)})
    _tag_inclusions(mesh)
    _tag_by_predicate(mesh, lambda x, y: abs(x) < 1e-12, "left")
    _tag_by_predicate(mesh, lambda x, y: abs(x - 1) < 1e-12, "right")
    _tag_by_predicate(mesh, lambda x, y: abs(y + l) < 1e-12, "bl_bottom")
    _tag_by_predicate(mesh, lambda x, y: abs(y - k) < 1e-12, "bl_top")
    _add_periodic(mesh, "left", "right", (1.0, 0.0))
    for _ in range(base_refine):
        mesh = refine(mesh)
    return mesh


def build_block_mesh(xs, ys, base_refine=0, region=REGION_FREE):
    """Plain tensor-product rectangle mesh (tags left/right/bottom/top)."""
    b = _Builder()
    b.add_block(xs, ys, region)
    mesh = b.finish()
    x0, x1, y0, y1 = xs[0], xs[-1], ys[0], ys[-1]
    _tag_by_predicate(mesh, lambda x, y: abs(x - x0) < 1e-12, "left")
    _tag_by_predicate(mesh, lambda x, y: abs(x - x1) < 1e-12, "right")
    _tag_by_predicate(mesh, lambda x, y: abs(y - y0) < 1e-12, "bottom")
    _tag_by_predicate(mesh, lambda x, y: abs(y - y1) < 1e-12, "top")
    for _ in range(base_refine):
        mesh = refine(mesh)
    return mesh


# ----------------------------------------------------------------------
# refinement
# ----------------------------------------------------------------------
def _closure_marks(mesh, marks):
    """Extend marks so the one-level rule holds and periodic partners co-refine."""
    marks = np.array(marks, dtype=bool)
    owners = mesh.edge_cells
    neigh = [[] for _ in range(mesh.n_cells)]
    for own in owners.values():
        if len(own) == 2:
            (c0, _), (c1, _) = own
            neigh[c0].append(c1)
            neigh[c1].append(c0)
    for _key, _m, coarse, fine in mesh.hanging_edges():
        for f in fine:
            neigh[coarse].append(f)
            neigh[f].append(coarse)
    partner = [[] for _ in range(mesh.n_cells)]
    for (a0, a1), (b0, b1) in mesh.periodic:
        ca = owners[_edge_key(a0, a1)][0][0]
        cb = owners[_edge_key(b0, b1)][0][0]
        partner[ca].append(cb)
        partner[cb].append(ca)
    level = mesh.level
    changed = True
    while changed:
        changed = False
        for c in np.flatnonzero(marks):
            for n in neigh[c]:
                if not marks[n] and level[n] < level[c]:
                    marks[n] = True
                    changed = True
            for p in partner[c]:
                if not marks[p]:
                    marks[p] = True
                    changed = True
    return marks


def refine(mesh, marks=None):
    """Split marked cells 1->4 (all cells when marks is None).

    Closure marking keeps level differences <= 1; new midside nodes of
    inclusion edges are snapped onto the exact curve; child centers are
    recomputed by transfinite blending.
    """
    if marks is None:
        marks = np.ones(mesh.n_cells, dtype=bool)
    else:
        marks = np.asarray(marks, dtype=bool)
        if marks.shape != (mesh.n_cells,):
            raise ValueError("marks length must equal cell count")
    marks = _closure_marks(mesh, marks)

    coords = list(map(tuple, mesh.nodes))
    new_mid = {}

    def add_node(xy):
        coords.append((float(xy[0]), float(xy[1])))
        return len(coords) - 1

    def child_mid(a, b, pos):
        key = _edge_key(a, b)
        nid = new_mid.get(key)
        if nid is None:
            nid = add_node(pos)
            new_mid[key] = nid
        return nid

    def split_edge(a, b, m, curve):
        """Mids of the half edges (a,m) and (m,b) via the quadratic trace."""
        pa, pb, pm = (np.asarray(coords[a]), np.asarray(coords[b]), np.asarray(coords[m]))
        p1 = _QTRACE_Q1[0] * pa + _QTRACE_Q1[1] * pb + _QTRACE_Q1[2] * pm
        p2 = _QTRACE_Q3[0] * pa + _QTRACE_Q3[1] * pb + _QTRACE_Q3[2] * pm
        if curve is not None:
            p1 = curve.project(p1)[0]
            p2 = curve.project(p2)[0]
        return child_mid(a, m, p1), child_mid(m, b, p2)

    inclusion_edges = {k for k, t in mesh.edge_tags.items() if t == "inclusion"}

    new_cells, new_level, new_region, new_pore, new_curve = [], [], [], [], []

    def emit(cell9, lv, rg, po, cv):
        new_cells.append(cell9)
        new_level.append(lv)
        new_region.append(rg)
        new_pore.append(po)
        new_curve.append(cv)

    ref_cross = np.array([[0.5, 0.25], [0.75, 0.5], [0.5, 0.75], [0.25, 0.5]])
    for c in range(mesh.n_cells):
        cell = mesh.cells[c]
        if not marks[c]:
            emit(list(cell), mesh.level[c], mesh.region[c], mesh.pore[c], mesh.curve_id[c])
            continue
        c0, c1, c2, c3, m4, m5, m6, m7, m8 = cell
        curve = mesh.curves[mesh.curve_id[c]] if mesh.curve_id[c] >= 0 else None
        halves = []
        for (i, j, ms) in CELL_EDGES:
            a, bb, m = cell[i], cell[j], cell[ms]
            on_curve = curve if _edge_key(a, bb) in inclusion_edges else None
            halves.append(split_edge(a, bb, m, on_curve))
        (b1, b2), (r1, r2), (t1, t2), (l1, l2) = halves
        cross_pts = map_points(mesh.nodes[cell][None, :, :], ref_cross)[0]
        xb = child_mid(m4, m8, cross_pts[0])
        xr = child_mid(m5, m8, cross_pts[1])
        xt = child_mid(m6, m8, cross_pts[2])
        xl = child_mid(m7, m8, cross_pts[3])
        children = [
            [c0, m4, m8, m7, b1, xb, xl, l2],
            [m4, c1, m5, m8, b2, r1, xr, xb],
            [m8, m5, c2, m6, xr, r2, t1, xt],
            [m7, m8, m6, c3, xl, xt, t2, l1],
        ]
        for ch in children:
            pts = np.array([coords[n] for n in ch])
            ctr = add_node(transfinite_center(pts))
            emit(ch + [ctr], mesh.level[c] + 1, mesh.region[c], mesh.pore[c], mesh.curve_id[c])

    # inherit boundary tags
    new_tags = {}
    for key, t in mesh.edge_tags.items():
        m = mesh.edge_mid.get(key)
        if m is not None and _edge_key(key[0], m) in new_mid:
            new_tags[_edge_key(key[0], m)] = t
            new_tags[_edge_key(m, key[1])] = t
        else:
            new_tags[key] = t

    # split periodic pairs and enforce exact coordinate correspondence
    new_pairs = []
    nodes_arr = np.array(coords)
    for (a0, a1), (b0, b1) in mesh.periodic:
        ka, kb = _edge_key(a0, a1), _edge_key(b0, b1)
        ma, mb = mesh.edge_mid[ka], mesh.edge_mid[kb]
        if _edge_key(a0, ma) in new_mid:
            shift = nodes_arr[b0] - nodes_arr[a0]
            for left, right in (((a0, ma), (b0, mb)), ((ma, a1), (mb, b1))):
                new_pairs.append((left, right))
                sa = new_mid[_edge_key(*left)]
                sb = new_mid[_edge_key(*right)]
                nodes_arr[sb] = nodes_arr[sa] + shift
            nodes_arr[mb] = nodes_arr[ma] + shift
        else:
            new_pairs.append(((a0, a1), (b0, b1)))

    return QuadMesh(nodes_arr, np.array(new_cells, dtype=np.int64),
                    np.array(new_level, dtype=np.int32),
                    np.array(new_region, dtype=np.int8),
                    np.array(new_pore, dtype=np.int64),
                    np.array(new_curve, dtype=np.int64),
                    mesh.curves, new_tags, new_pairs, mesh.lines)
