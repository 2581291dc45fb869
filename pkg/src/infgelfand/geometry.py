"""Grid domains, boundary-clipped stencils, and distance-to-boundary fields.

The grid is node-centered, uniform, and axis-aligned.  The boundary is
honored through per-ray clip fractions (cut-cell rays): an interior node
whose stencil neighbor falls outside the domain sees the Dirichlet value 0
at the exact point where the ray crosses the boundary, not at the neighbor.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyInteriorError, UsageError

NODE_INTERIOR = 0
NODE_BOUNDARY = 1
NODE_EXTERIOR = 2

_GRID_MARGIN = 2  # cells beyond the bounding box; covers wide-stencil offsets
_BOUNDARY_SNAP = 1e-12  # |sdf| below this (times h) counts as a boundary node


# ---------------------------------------------------------------------------
# shape descriptors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Interval:
    a: float
    b: float

    dim = 1

    def validate(self):
        if not self.b > self.a:
            raise UsageError(f"interval needs a < b, got [{self.a}, {self.b}]")

    def bbox(self):
        return np.array([self.a]), np.array([self.b])

    def sdf(self, pts):
        x = pts[:, 0]
        return np.maximum(self.a - x, x - self.b)


@dataclass(frozen=True)
class Ball:
    center: tuple[float, float]
    radius: float

    dim = 2

    def validate(self):
        if not self.radius > 0:
            raise UsageError(f"ball needs radius > 0, got {self.radius}")

    def bbox(self):
        c = np.asarray(self.center, dtype=float)
        return c - self.radius, c + self.radius

    def sdf(self, pts):
        c = np.asarray(self.center, dtype=float)
        return np.linalg.norm(pts - c, axis=1) - self.radius


@dataclass(frozen=True)
class Annulus:
    center: tuple[float, float]
    inner_radius: float
    outer_radius: float

    dim = 2

    def validate(self):
        if not (0 < self.inner_radius < self.outer_radius):
            raise UsageError(
                f"annulus needs 0 < r < R, got r={self.inner_radius} R={self.outer_radius}")

    def bbox(self):
        c = np.asarray(self.center, dtype=float)
        return c - self.outer_radius, c + self.outer_radius

    def sdf(self, pts):
        c = np.asarray(self.center, dtype=float)
        rho = np.linalg.norm(pts - c, axis=1)
        return np.maximum(self.inner_radius - rho, rho - self.outer_radius)


@dataclass(frozen=True)
class Rectangle:
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    dim = 2

    def validate(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise UsageError("rectangle needs xmax > xmin and ymax > ymin")

    def bbox(self):
        return np.array([self.xmin, self.ymin]), np.array([self.xmax, self.ymax])

    def sdf(self, pts):
        x, y = pts[:, 0], pts[:, 1]
        return np.maximum.reduce([self.xmin - x, x - self.xmax,
                                  self.ymin - y, y - self.ymax])


@dataclass(frozen=True)
class Stadium:
    """Convex hull of two balls of equal radius: all points within
    ``radius`` of the segment p1..p2."""

    p1: tuple[float, float]
    p2: tuple[float, float]
    radius: float

    dim = 2

    def validate(self):
        if not self.radius > 0:
            raise UsageError(f"stadium needs radius > 0, got {self.radius}")

    def bbox(self):
        a = np.asarray(self.p1, dtype=float)
        b = np.asarray(self.p2, dtype=float)
        return np.minimum(a, b) - self.radius, np.maximum(a, b) + self.radius

    def sdf(self, pts):
        a = np.asarray(self.p1, dtype=float)
        b = np.asarray(self.p2, dtype=float)
        ab = b - a
        denom = float(ab @ ab)
        if denom == 0.0:
            t = np.zeros(len(pts))
        else:
            t = np.clip((pts - a) @ ab / denom, 0.0, 1.0)
        closest = a + t[:, None] * ab
        return np.linalg.norm(pts - closest, axis=1) - self.radius


@dataclass(frozen=True)
class Mask:
    """Bitmap shape: pixel > 0 means inside.  The boundary sits halfway
    between an inside node and any outside neighbor (clip fraction 1/2)."""

    bitmap: np.ndarray = field(hash=False, compare=False)  # (nx, ny), x-first

    dim = 2

    def validate(self):
        if self.bitmap.ndim != 2:
            raise UsageError("mask bitmap must be 2-D")

    def bbox(self):  # in index units; the grid builder maps indices to h
        nx, ny = self.bitmap.shape
        return np.array([0.0, 0.0]), np.array([float(nx - 1), float(ny - 1)])

    def sdf(self, pts):  # not meaningful for masks
        raise NotImplementedError("mask shapes have no analytic boundary")


ANALYTIC_SHAPES = (Interval, Ball, Annulus, Rectangle, Stadium)


# ---------------------------------------------------------------------------
# stencils
# ---------------------------------------------------------------------------

class StencilSet:
    """Integer offset directions, closed under negation, axis offsets included."""

    def __init__(self, offsets):
        offs = np.asarray(offsets, dtype=np.int64)
        if offs.ndim != 2:
            raise UsageError("stencil offsets must be a (K, dim) array")
        self.offsets = offs
        self.lengths = np.sqrt((offs.astype(float) ** 2).sum(axis=1))
        self._validate()
        # antipode[r] = index of -offsets[r]
        key = {tuple(o): i for i, o in enumerate(offs.tolist())}
        self.antipode = np.array([key[tuple((-offs[i]).tolist())]
                                  for i in range(len(offs))], dtype=np.int64)

    def _validate(self):
        rows = {tuple(o) for o in self.offsets.tolist()}
        for o in self.offsets.tolist():
            if tuple(-c for c in o) not in rows:
                raise UsageError(f"stencil not closed under negation: {o}")
        dim = self.offsets.shape[1]
        for ax in range(dim):
            unit = tuple(1 if i == ax else 0 for i in range(dim))
            if unit not in rows:
                raise UsageError(f"stencil missing axis offset {unit}")

    def __len__(self):
        return len(self.offsets)

    @property
    def dim(self):
        return self.offsets.shape[1]

    @staticmethod
    def standard(dim):
        if dim == 1:
            return StencilSet([[1], [-1]])
        return StencilSet([[1, 0], [-1, 0], [0, 1], [0, -1],
                           [1, 1], [-1, -1], [1, -1], [-1, 1]])

    @staticmethod
    def wide(dim):
        if dim == 1:
            return StencilSet.standard(1)
        base = StencilSet.standard(2).offsets.tolist()
        knights = [[2, 1], [-2, -1], [2, -1], [-2, 1],
                   [1, 2], [-1, -2], [-1, 2], [1, -2]]
        return StencilSet(base + knights)


def get_stencil(name, dim):
    if name == "standard":
        return StencilSet.standard(dim)
    if name == "wide":
        return StencilSet.wide(dim)
    raise UsageError(f"unknown stencil '{name}' (expected 'standard' or 'wide')")


# ---------------------------------------------------------------------------
# grid domain
# ---------------------------------------------------------------------------

@dataclass
class RayTable:
    """Per-interior-node ray data for one stencil.

    nb[i, r]   flat grid index of the neighbor when it is interior, else -1
               (the ray then contributes the Dirichlet value 0);
    step[i, r] effective step length theta * h * |d| along the ray;
    antipode[r] index of the ray -offsets[r];
    pair_a/pair_b list each antipodal pair once (pair_a[p] < pair_b[p]).
    """

    offsets: np.ndarray
    lengths: np.ndarray
    antipode: np.ndarray
    pair_a: np.ndarray
    pair_b: np.ndarray
    nb: np.ndarray
    step: np.ndarray


class GridDomain:
    """Uniform node-centered grid over a shape with node classification."""

    def __init__(self, shape, resolution):
        if resolution < 8:
            raise UsageError(f"resolution must be >= 8, got {resolution}")
        shape.validate()
        self.shape_obj = shape
        self.resolution = int(resolution)
        self.dim = shape.dim
        self.h = 1.0 / float(resolution)
        self._build_grid()
        self._classify()
        if self.n_interior == 0:
            raise EmptyInteriorError(f"no interior nodes for {shape} at resolution {resolution}")
        self._ray_tables = {}
        self._sweep_orders = None
        self._distance = None

    # -- construction -------------------------------------------------------

    def _build_grid(self):
        h = self.h
        if isinstance(self.shape_obj, Mask):
            nx, ny = self.shape_obj.bitmap.shape
            lo_idx = np.array([-_GRID_MARGIN, -_GRID_MARGIN])
            n = np.array([nx + 2 * _GRID_MARGIN, ny + 2 * _GRID_MARGIN])
        else:
            lo, hi = self.shape_obj.bbox()
            lo_idx = np.floor(lo / h + 1e-9).astype(np.int64) - _GRID_MARGIN
            hi_idx = np.ceil(hi / h - 1e-9).astype(np.int64) + _GRID_MARGIN
            n = hi_idx - lo_idx + 1
        self.origin = lo_idx.astype(float) * h
        self.nshape = tuple(int(v) for v in n)
        self.n_nodes = int(np.prod(n))

    def _axis_coords(self, ax):
        return self.origin[ax] + self.h * np.arange(self.nshape[ax])

    def all_coords(self):
        """Coordinates of every grid node, flat order, shape (n_nodes, dim)."""
        axes = [self._axis_coords(ax) for ax in range(self.dim)]
        if self.dim == 1:
            return axes[0][:, None]
        xx, yy = np.meshgrid(axes[0], axes[1], indexing="ij")
        return np.stack([xx.ravel(), yy.ravel()], axis=1)

    def _classify(self):
        if isinstance(self.shape_obj, Mask):
            kind = np.full(self.nshape, NODE_EXTERIOR, dtype=np.int8)
            inside = self.shape_obj.bitmap > 0
            kind[_GRID_MARGIN:_GRID_MARGIN + inside.shape[0],
                 _GRID_MARGIN:_GRID_MARGIN + inside.shape[1]][inside] = NODE_INTERIOR
            self.kind = kind.ravel()
        else:
            s = self.shape_obj.sdf(self.all_coords())
            tol = _BOUNDARY_SNAP * max(1.0, self.h)
            kind = np.where(s < -tol, NODE_INTERIOR,
                            np.where(s <= tol, NODE_BOUNDARY, NODE_EXTERIOR))
            self.kind = kind.astype(np.int8)
        self.interior_flat = np.flatnonzero(self.kind == NODE_INTERIOR)
        self.boundary_flat = np.flatnonzero(self.kind == NODE_BOUNDARY)
        self.n_interior = len(self.interior_flat)

    # -- indexing helpers ----------------------------------------------------

    def node_coords(self, flat_idx):
        flat_idx = np.asarray(flat_idx)
        if self.dim == 1:
            return (self.origin[0] + self.h * flat_idx.astype(float))[:, None]
        nx, ny = self.nshape
        ix, iy = np.divmod(flat_idx, ny)
        return np.stack([self.origin[0] + self.h * ix,
                         self.origin[1] + self.h * iy], axis=1)

    def interior_coords(self):
        return self.node_coords(self.interior_flat)

    def zero_field(self):
        return ScalarField(self, np.zeros(self.n_nodes))

    # -- ray tables ----------------------------------------------------------

    def ray_table(self, stencil="standard"):
        if isinstance(stencil, str):
            stencil = get_stencil(stencil, self.dim)
        key = tuple(map(tuple, stencil.offsets.tolist()))
        if key not in self._ray_tables:
            self._ray_tables[key] = self._build_ray_table(stencil)
        return self._ray_tables[key]

    def _build_ray_table(self, stencil):
        offs = stencil.offsets
        K = len(offs)
        ni = self.n_interior
        nb = np.full((ni, K), -1, dtype=np.int64)
        step = np.zeros((ni, K))
        if self.dim == 1:
            idx = self.interior_flat[:, None] + offs[:, 0][None, :]
        else:
            ny = self.nshape[1]
            idx = self.interior_flat[:, None] + offs[:, 0][None, :] * ny + offs[:, 1][None, :]
        # margin guarantees idx stays inside the array for interior nodes
        nkind = self.kind[idx]
        full = np.broadcast_to(self.h * stencil.lengths[None, :], (ni, K))
        nb[nkind == NODE_INTERIOR] = idx[nkind == NODE_INTERIOR]
        ext = nkind == NODE_EXTERIOR
        theta = np.ones((ni, K))
        if ext.any():
            theta = self._clip_fractions_for(ext, offs)
        step[:] = theta * full
        anti = stencil.antipode
        pair_a = np.array([r for r in range(K) if r < anti[r]], dtype=np.int64)
        pair_b = anti[pair_a]
        return RayTable(offsets=offs.copy(), lengths=stencil.lengths.copy(),
                        antipode=anti.copy(), pair_a=pair_a, pair_b=pair_b,
                        nb=nb, step=step)

    def _clip_fractions_for(self, ext_mask, offs):
        """Clip fraction theta in (0,1) for every (interior node, ray) with an
        exterior neighbor.  Returns a dense (ni, K) array (1 elsewhere)."""
        ni, K = ext_mask.shape
        theta = np.ones((ni, K))
        if isinstance(self.shape_obj, Mask):
            theta[ext_mask] = 0.5
            return theta
        rows, cols = np.nonzero(ext_mask)
        x = self.interior_coords()[rows]
        v = (self.h * offs[cols]).astype(float)
        lo = np.zeros(len(rows))
        hi = np.ones(len(rows))
        # segment goes from strictly inside to strictly outside: one crossing
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            s = self.shape_obj.sdf(x + mid[:, None] * v)
            inside = s < 0.0
            lo = np.where(inside, mid, lo)
            hi = np.where(inside, hi, mid)
        theta[rows, cols] = 0.5 * (lo + hi)
        return theta

    def clip_fractions(self, stencil="standard"):
        tab = self.ray_table(stencil)
        return tab.step / (self.h * tab.lengths[None, :])

    # -- sweep orders ----------------------------------------------------------

    def sweep_orders(self):
        """2^dim alternating lexicographic orderings (positions into the
        interior arrays) used by the Gauss-Seidel fast sweeps."""
        if self._sweep_orders is None:
            if self.dim == 1:
                keys = [self.interior_flat]
            else:
                ny = self.nshape[1]
                ix, iy = np.divmod(self.interior_flat, ny)
                keys = [ix * ny + iy, -ix * ny + iy, ix * ny - iy, -ix * ny - iy]
            orders = []
            for k in keys:
                asc = np.argsort(k, kind="stable").astype(np.int64)
                orders.append(asc)
                if self.dim == 1:
                    orders.append(asc[::-1].copy())
            self._sweep_orders = orders
        return self._sweep_orders

    def __repr__(self):
        return (f"GridDomain({self.shape_obj!r}, resolution={self.resolution}, "
                f"nodes={self.n_nodes}, interior={self.n_interior})")


@dataclass
class ScalarField:
    """One value per grid node; 0 at boundary/exterior for every field in
    this artifact (homogeneous Dirichlet data)."""

    domain: GridDomain
    values: np.ndarray

    def interior_values(self):
        return self.values[self.domain.interior_flat]

    def sup_norm(self):
        if self.domain.n_interior == 0:
            return 0.0
        return float(np.abs(self.interior_values()).max())

    def copy(self):
        return ScalarField(self.domain, self.values.copy())


# ---------------------------------------------------------------------------
# geometry operations
# ---------------------------------------------------------------------------

def build_domain(shape, resolution):
    """Construct a GridDomain; raises EmptyInteriorError when no node falls
    strictly inside the shape."""
    return GridDomain(shape, resolution)


def distance_field(domain):
    """Distance to the boundary at every node (0 outside).

    Analytic shapes use the exact formula.  Mask shapes solve the
    gradient-constrained problem with unit right-hand side, whose unique
    solution is the distance function.
    """
    if domain._distance is not None:
        return domain._distance.copy()
    vals = np.zeros(domain.n_nodes)
    if isinstance(domain.shape_obj, Mask):
        from .limit_solver import LimitConfig, solve_frozen_rhs
        ones = ScalarField(domain, np.ones(domain.n_nodes))
        dist, _ = solve_frozen_rhs(domain, ones, LimitConfig(lam=0.0))
        vals = dist.values
    else:
        inside = domain.kind != NODE_EXTERIOR
        pts = domain.all_coords()[inside]
        vals[inside] = np.maximum(-domain.shape_obj.sdf(pts), 0.0)
    domain._distance = ScalarField(domain, vals)
    return domain._distance.copy()


def lambda1_infinity(domain):
    """First infinity-eigenvalue: reciprocal of the in-radius."""
    dmax = distance_field(domain).sup_norm()
    if dmax <= 0:
        raise EmptyInteriorError("degenerate domain: max distance is zero")
    return 1.0 / dmax


def max_distance_set(domain, tol=None):
    """Flat indices of interior nodes within tol of the maximal boundary
    distance (default tol: 1.5 h)."""
    if tol is None:
        tol = 1.5 * domain.h
    if tol < 0:
        raise UsageError(f"tol must be >= 0, got {tol}")
    dist = distance_field(domain)
    di = dist.interior_values()
    keep = di >= di.max() - tol
    return domain.interior_flat[keep]


# ---------------------------------------------------------------------------
# shape descriptors from JSON / PGM masks
# ---------------------------------------------------------------------------

_SHAPE_EXAMPLE = '{"shape":"ball","center":[0,0],"radius":1.0,"resolution":64}'

_SHAPE_KEYS = {
    "interval": {"a", "b"},
    "ball": {"center", "radius"},
    "annulus": {"center", "inner_radius", "outer_radius"},
    "rectangle": {"xmin", "xmax", "ymin", "ymax"},
    "stadium": {"p1", "p2", "radius"},
    "mask": {"path"},
}


def shape_from_json(doc, base_dir="."):
    """Strictly parse a shape document: unknown keys are rejected.

    Returns (shape, resolution).
    """
    if not isinstance(doc, dict):
        raise UsageError(f"shape document must be a JSON object, e.g. {_SHAPE_EXAMPLE}")
    if "shape" not in doc:
        raise UsageError(f"missing key 'shape'; example: {_SHAPE_EXAMPLE}")
    name = doc["shape"]
    if name not in _SHAPE_KEYS:
        raise UsageError(f"unknown shape '{name}'; choose from {sorted(_SHAPE_KEYS)}")
    allowed = _SHAPE_KEYS[name] | {"shape", "resolution"}
    for key in doc:
        if key not in allowed:
            raise UsageError(
                f"unknown key '{key}' for shape '{name}'; example: {_SHAPE_EXAMPLE}")
    missing = allowed - set(doc) - {"resolution"}
    if missing:
        raise UsageError(f"missing key(s) {sorted(missing)} for shape '{name}'")
    if "resolution" not in doc:
        raise UsageError(f"missing key 'resolution'; example: {_SHAPE_EXAMPLE}")
    res = doc["resolution"]
    if not isinstance(res, int) or res < 8:
        raise UsageError(f"resolution must be an integer >= 8, got {res!r}")
    if name == "interval":
        shape = Interval(float(doc["a"]), float(doc["b"]))
    elif name == "ball":
        shape = Ball(tuple(map(float, doc["center"])), float(doc["radius"]))
    elif name == "annulus":
        shape = Annulus(tuple(map(float, doc["center"])),
                        float(doc["inner_radius"]), float(doc["outer_radius"]))
    elif name == "rectangle":
        shape = Rectangle(float(doc["xmin"]), float(doc["xmax"]),
                          float(doc["ymin"]), float(doc["ymax"]))
    elif name == "stadium":
        shape = Stadium(tuple(map(float, doc["p1"])), tuple(map(float, doc["p2"])),
                        float(doc["radius"]))
    else:
        bitmap = read_pgm(Path(base_dir) / doc["path"])
        shape = Mask(bitmap=(bitmap > 0).T.astype(np.uint8))  # rows->y, cols->x
    shape.validate()
    return shape, res


def load_domain_json(path_or_doc, resolution=None):
    """Build a GridDomain from a JSON file path, JSON text, or dict."""
    if isinstance(path_or_doc, dict):
        doc, base = path_or_doc, "."
    else:
        text = str(path_or_doc)
        if text.lstrip().startswith("{"):
            doc, base = json.loads(text), "."
        else:
            p = Path(text)
            try:
                doc = json.loads(p.read_text())
            except FileNotFoundError:
                raise UsageError(f"domain file not found: {p}")
            except json.JSONDecodeError as e:
                raise UsageError(f"bad JSON in {p}: {e}")
            base = p.parent
    shape, res = shape_from_json(doc, base_dir=base)
    if resolution is not None:
        res = resolution
    return build_domain(shape, res)


def read_pgm(path):
    """Read a P2 (ASCII) or P5 (binary) PGM image into a (rows, cols) array."""
    data = Path(path).read_bytes()

    def tokens(buf):
        i = 0
        while i < len(buf):
            if buf[i:i + 1] == b"#":
                while i < len(buf) and buf[i:i + 1] != b"\n":
                    i += 1
            elif buf[i:i + 1].isspace():
                i += 1
            else:
                j = i
                while j < len(buf) and not buf[j:j + 1].isspace() and buf[j:j + 1] != b"#":
                    j += 1
                yield buf[i:j], j
                i = j

    gen = tokens(data)
    magic, _ = next(gen)
    if magic not in (b"P2", b"P5"):
        raise UsageError(f"not a PGM file (magic {magic!r}): {path}")
    (w, _), (hgt, _), (maxval, pos) = next(gen), next(gen), next(gen)
    w, hgt, maxval = int(w), int(hgt), int(maxval)
    if magic == b"P2":
        vals = [int(t) for t, _ in gen]
        arr = np.array(vals, dtype=np.uint16)
    else:
        raw = data[pos + 1:]
        dtype = np.uint8 if maxval < 256 else ">u2"
        arr = np.frombuffer(raw, dtype=dtype, count=w * hgt).astype(np.uint16)
    if arr.size != w * hgt:
        raise UsageError(f"PGM pixel count mismatch in {path}")
    return arr.reshape(hgt, w)
