"""Node sets, subset masks and nested exhaustions.

A :class:`NodeSet` is the finite stand-in for the ambient space: a point
cloud in R^d where each node carries a cell size (the diameter of the small
region it represents). Subsets of nodes are :class:`SubsetMask` objects.
"""
from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import DimensionError, InvalidShapeError, StageCountError


# --------------------------------------------------------------------------
# subset masks

@dataclass(frozen=True)
class SubsetMask:
    """Sorted set of node indices of a node set with ``size`` nodes."""

    indices: tuple[int, ...]
    size: int

    def __post_init__(self):
        idx = tuple(sorted({int(i) for i in self.indices}))
        if idx and (idx[0] < 0 or idx[-1] >= self.size):
            raise IndexError(f"mask indices out of range for {self.size} nodes")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def full(cls, size: int) -> SubsetMask:
        return cls(tuple(range(size)), size)

    @classmethod
    def empty(cls, size: int) -> SubsetMask:
        return cls((), size)

    @classmethod
    def from_bool(cls, flags) -> SubsetMask:
        flags = np.asarray(flags, dtype=bool)
        return cls(tuple(np.flatnonzero(flags)), flags.size)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=int)

    @property
    def bool_mask(self) -> np.ndarray:
        out = np.zeros(self.size, dtype=bool)
        out[list(self.indices)] = True
        return out

    def complement(self) -> SubsetMask:
        return SubsetMask.from_bool(~self.bool_mask)

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, i):
        return int(i) in set(self.indices)

    def __or__(self, other: SubsetMask) -> SubsetMask:
        return SubsetMask(self.indices + tuple(other.indices), self.size)

    def __and__(self, other: SubsetMask) -> SubsetMask:
        return SubsetMask(tuple(set(self.indices) & set(other.indices)), self.size)

    def __sub__(self, other: SubsetMask) -> SubsetMask:
        return SubsetMask(tuple(set(self.indices) - set(other.indices)), self.size)

    def __le__(self, other: SubsetMask) -> bool:
        return set(self.indices) <= set(other.indices)

    def __lt__(self, other: SubsetMask) -> bool:
        return set(self.indices) < set(other.indices)

    def to_json(self) -> dict:
        return {"indices": list(self.indices)}


def as_mask(A, size: int) -> SubsetMask:
    """Coerce a mask, a boolean array or an iterable of indices to a mask."""
    if isinstance(A, SubsetMask):
        if A.size != size:
            raise DimensionError(f"mask is for {A.size} nodes, expected {size}")
        return A
    if A is None:
        return SubsetMask.full(size)
    arr = np.asarray(A)
    if arr.dtype == bool:
        if arr.size != size:
            raise DimensionError(f"boolean mask has {arr.size} entries, expected {size}")
        return SubsetMask.from_bool(arr)
    return SubsetMask(tuple(int(i) for i in np.ravel(arr)), size)


# --------------------------------------------------------------------------
# node sets

def nearest_neighbor_spacing(points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if len(points) < 2:
        raise InvalidShapeError("nearest-neighbor spacing needs at least two points")
    dist, _ = cKDTree(points).query(points, k=2)
    return dist[:, 1]


@dataclass(frozen=True, eq=False)
class NodeSet:
    """Finite point cloud with per-node cell sizes.

    Parameters
    ----------
    points : ndarray, shape (N, d)
        Pairwise distinct node coordinates.
    cell_sizes : ndarray, shape (N,)
        Diameter of the cell each node stands for; strictly positive.
    labels : mapping of str to SubsetMask
        Named subsets (for instance ``"boundary"`` of a ball).
    cell_dim : int
        Intrinsic dimension of the cells: ``d`` for volume clouds, ``d - 1``
        for surface layouts such as spheres. It selects the reference cell
        used to regularize the Gram diagonal.
    """

    points: np.ndarray
    cell_sizes: np.ndarray
    labels: Mapping[str, SubsetMask] = field(default_factory=dict)
    cell_dim: int | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or len(pts) == 0:
            raise InvalidShapeError("a node set needs a non-empty (N, d) array of points")
        h = np.array(self.cell_sizes, dtype=float).reshape(-1)
        if h.shape != (len(pts),):
            raise DimensionError("one cell size per point is required")
        if not np.all(np.isfinite(h)) or np.any(h <= 0):
            raise InvalidShapeError("cell sizes must be finite and positive")
        if len(pts) > 1 and np.min(nearest_neighbor_spacing(pts)) <= 0:
            raise InvalidShapeError("node points must be pairwise distinct")
        cell_dim = pts.shape[1] if self.cell_dim is None else int(self.cell_dim)
        if not 1 <= cell_dim <= pts.shape[1]:
            raise DimensionError(f"cell_dim must lie in [1, {pts.shape[1]}]")
        labels = {}
        for name, m in dict(self.labels).items():
            labels[str(name)] = as_mask(m, len(pts))
        pts.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "cell_sizes", h)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "cell_dim", cell_dim)

    @classmethod
    def from_points(cls, points, cell_sizes=None, labels=None, cell_dim=None) -> NodeSet:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if cell_sizes is None:
            cell_sizes = nearest_neighbor_spacing(pts) if len(pts) > 1 else np.ones(1)
        return cls(pts, cell_sizes, labels or {}, cell_dim)

    @classmethod
    def indexed(cls, n: int) -> NodeSet:
        """Abstract node set ``{0, ..., n-1}`` used by matrix kernels."""
        return cls(np.arange(n, dtype=float)[:, None], np.ones(n), {}, 1)

    def __len__(self):
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def id(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.points).tobytes())
        h.update(np.ascontiguousarray(self.cell_sizes).tobytes())
        h.update(str(self.cell_dim).encode())
        return h.hexdigest()[:16]

    @property
    def diameter(self) -> float:
        if len(self) < 2:
            return 0.0
        from scipy.spatial.distance import pdist

        return float(pdist(self.points).max())

    @property
    def full_mask(self) -> SubsetMask:
        return SubsetMask.full(len(self))

    def mask(self, name: str) -> SubsetMask:
        return self.labels[name]

    def mask_where(self, flags) -> SubsetMask:
        return SubsetMask.from_bool(flags)

    def with_cell_sizes(self, cell_sizes) -> NodeSet:
        return NodeSet(self.points, cell_sizes, self.labels, self.cell_dim)

    def radii(self, center=None) -> np.ndarray:
        c = np.zeros(self.dim) if center is None else np.asarray(center, dtype=float)
        return np.linalg.norm(self.points - c, axis=1)


# --------------------------------------------------------------------------
# shapes

@dataclass(frozen=True)
class Ball:
    center: tuple[float, ...]
    r: float
    kind = "ball"


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, ...]
    r: float
    kind = "sphere"


@dataclass(frozen=True)
class Box:
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    kind = "box"


@dataclass(frozen=True)
class Annulus:
    center: tuple[float, ...]
    r_in: float
    r_out: float
    kind = "annulus"


@dataclass(frozen=True)
class Cloud:
    path: str
    dim: int | None = None
    kind = "cloud"


ShapeSpec = Ball | Sphere | Box | Annulus | Cloud


def shape_from_json(obj: Mapping, base_dir: str | Path | None = None) -> ShapeSpec:
    """Build a shape from its JSON form, e.g. ``{"kind": "ball", "center": [0, 0, 0], "r": 1}``."""
    try:
        kind = obj["kind"]
        if kind == "ball":
            return Ball(tuple(obj["center"]), float(obj["r"]))
        if kind == "sphere":
            return Sphere(tuple(obj["center"]), float(obj["r"]))
        if kind == "box":
            return Box(tuple(obj["lo"]), tuple(obj["hi"]))
        if kind == "annulus":
            return Annulus(tuple(obj["center"]), float(obj["r_in"]), float(obj["r_out"]))
        if kind == "cloud":
            path = Path(obj["path"])
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            return Cloud(str(path), obj.get("dim"))
    except (KeyError, TypeError) as exc:
        raise InvalidShapeError(f"malformed shape specification: {exc}") from exc
    raise InvalidShapeError(f"unknown shape kind {kind!r}")


def shape_to_json(shape: ShapeSpec) -> dict:
    if isinstance(shape, (Ball, Sphere)):
        return {"kind": shape.kind, "center": list(shape.center), "r": shape.r}
    if isinstance(shape, Box):
        return {"kind": "box", "lo": list(shape.lo), "hi": list(shape.hi)}
    if isinstance(shape, Annulus):
        return {"kind": "annulus", "center": list(shape.center), "r_in": shape.r_in, "r_out": shape.r_out}
    return {"kind": "cloud", "path": shape.path, "dim": shape.dim}


def spiral_points(n: int) -> np.ndarray:
    """Generalized spiral layout of ``n`` points on the unit sphere in R^3.

    Heights are equally spaced in [-1, 1] and the azimuth advances by
    ``3.6 / sqrt(n (1 - h^2))``; the poles get azimuth 0.
    """
    if n == 1:
        return np.array([[0.0, 0.0, 1.0]])
    k = np.arange(n)
    h = -1.0 + 2.0 * k / (n - 1)
    theta = np.arccos(h)
    phi = np.zeros(n)
    if n > 2:
        inc = 3.6 / np.sqrt(n * (1.0 - h[1:-1] ** 2))
        phi[1:-1] = np.mod(np.cumsum(inc), 2.0 * np.pi)
    pts = np.column_stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), h])
    return pts / np.linalg.norm(pts, axis=1)[:, None]


def circle_points(n: int) -> np.ndarray:
    t = 2.0 * np.pi * np.arange(n) / n
    return np.column_stack([np.cos(t), np.sin(t)])


def _shell(dim: int, radius: float, spacing: float) -> np.ndarray:
    # hexagonal packing density on a sphere, equal arcs on a circle
    if dim == 3:
        count = max(4, int(round(4.0 * np.pi * radius**2 / (np.sqrt(3.0) / 2.0 * spacing**2))))
        return radius * spiral_points(count)
    count = max(3, int(round(2.0 * np.pi * radius / spacing)))
    return radius * circle_points(count)


def _center(center, dim_hint=None) -> np.ndarray:
    c = np.asarray(center, dtype=float).reshape(-1)
    if c.size not in (2, 3):
        raise InvalidShapeError("ball, sphere and annulus layouts are available in dimensions 2 and 3")
    return c


def _shells(center, radii, spacing, dim):
    pts, labels, start = [], {}, 0
    for k, rad in enumerate(radii):
        if rad == 0.0:
            block = np.zeros((1, dim))
        else:
            block = _shell(dim, rad, spacing)
        pts.append(block + center)
        labels[f"shell_{k}"] = range(start, start + len(block))
        start += len(block)
    return np.vstack(pts), labels


def discretize(shape: ShapeSpec | Mapping, resolution: int) -> NodeSet:
    """Quasi-uniform node set covering ``shape``.

    ``resolution`` means: the number of points for a sphere; the number of
    radial intervals for a ball (shells at radii ``k r / resolution``, plus
    the center) or an annulus (``resolution + 1`` shells); the number of grid
    points per axis for a box. It is ignored for point clouds. Cell sizes are
    nearest-neighbor distances.
    """
    if isinstance(shape, Mapping):
        shape = shape_from_json(shape)
    resolution = int(resolution)
    if resolution < 1:
        raise InvalidShapeError("resolution must be at least 1")

    if isinstance(shape, Sphere):
        c = _center(shape.center)
        if shape.r <= 0:
            raise InvalidShapeError("sphere radius must be positive")
        unit = spiral_points(resolution) if c.size == 3 else circle_points(resolution)
        pts = c + shape.r * unit
        h = nearest_neighbor_spacing(pts) if resolution > 1 else np.array([2.0 * shape.r])
        return NodeSet(pts, h, {}, c.size - 1)

    if isinstance(shape, Ball):
        c = _center(shape.center)
        if shape.r <= 0:
            raise InvalidShapeError("ball radius must be positive")
        spacing = shape.r / resolution
        radii = [shape.r * k / resolution for k in range(resolution + 1)]
        pts, shells = _shells(c, radii, spacing, c.size)
        labels = {"center": shells["shell_0"], "boundary": shells[f"shell_{resolution}"]}
        labels.update(shells)
        return NodeSet(pts, nearest_neighbor_spacing(pts), labels, c.size)

    if isinstance(shape, Annulus):
        c = _center(shape.center)
        if shape.r_in <= 0 or shape.r_out <= shape.r_in:
            raise InvalidShapeError("annulus needs 0 < r_in < r_out")
        radii = list(np.linspace(shape.r_in, shape.r_out, resolution + 1))
        spacing = (shape.r_out - shape.r_in) / resolution
        pts, shells = _shells(c, radii, spacing, c.size)
        labels = {"inner": shells["shell_0"], "outer": shells[f"shell_{resolution}"]}
        labels.update(shells)
        return NodeSet(pts, nearest_neighbor_spacing(pts), labels, c.size)

    if isinstance(shape, Box):
        lo = np.asarray(shape.lo, dtype=float).reshape(-1)
        hi = np.asarray(shape.hi, dtype=float).reshape(-1)
        if lo.shape != hi.shape or lo.size == 0 or np.any(lo >= hi):
            raise InvalidShapeError("box needs lo < hi componentwise")
        if resolution == 1:
            return NodeSet(((lo + hi) / 2)[None, :], [float(np.min(hi - lo))], {}, lo.size)
        axes = [np.linspace(a, b, resolution) for a, b in zip(lo, hi)]
        grid = np.meshgrid(*axes, indexing="ij")
        pts = np.column_stack([g.reshape(-1) for g in grid])
        return NodeSet(pts, nearest_neighbor_spacing(pts), {}, lo.size)

    if isinstance(shape, Cloud):
        return read_cloud(shape.path, shape.dim)

    raise InvalidShapeError(f"unsupported shape {shape!r}")


def read_cloud(path: str | Path, dim: int | None = None) -> NodeSet:
    """Read a CSV point cloud, one point per row.

    The last column is a cell size when the header names it ``cell_size``
    or when ``dim`` is given and the rows have ``dim + 1`` columns.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(x.strip() for x in r)]
    if not rows:
        raise InvalidShapeError(f"point cloud {path} is empty")
    header = None
    try:
        float(rows[0][0])
    except ValueError:
        header, rows = [x.strip() for x in rows[0]], rows[1:]
    data = np.array([[float(x) for x in r] for r in rows], dtype=float)
    if data.ndim != 2 or len(data) == 0:
        raise InvalidShapeError(f"point cloud {path} has no points")
    has_h = (header is not None and header[-1] == "cell_size") or (
        dim is not None and data.shape[1] == int(dim) + 1
    )
    if has_h:
        return NodeSet(data[:, :-1], data[:, -1], {}, None)
    return NodeSet.from_points(data)


def write_cloud(nodes: NodeSet, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i}" for i in range(nodes.dim)] + ["cell_size"])
        for p, h in zip(nodes.points, nodes.cell_sizes):
            w.writerow([f"{v:.17g}" for v in p] + [f"{h:.17g}"])


# --------------------------------------------------------------------------
# exhaustions

@dataclass(frozen=True)
class Exhaustion:
    """Nested masks; increasing runs grow to ``union_mask``, decreasing ones shrink to it."""

    stages: tuple[SubsetMask, ...]
    union_mask: SubsetMask
    mode: str = "increasing"

    def __post_init__(self):
        if not self.stages:
            raise StageCountError("an exhaustion needs at least one stage")
        for a, b in zip(self.stages, self.stages[1:]):
            ok = a < b if self.mode == "increasing" else b < a
            if not ok:
                raise StageCountError("exhaustion stages must be strictly monotone under inclusion")

    def __len__(self):
        return len(self.stages)


def _quantile_stages(ordered: Sequence[int], stages: int) -> list[list[int]]:
    n = len(ordered)
    return [list(ordered[: math.ceil(j * n / stages)]) for j in range(1, stages + 1)]


def build_exhaustion(
    nodes: NodeSet | int,
    target,
    stages: int,
    mode: str = "increasing",
    order: str = "index",
    superset=None,
    center=None,
) -> Exhaustion:
    """Nested masks converging to ``target``.

    Increasing mode grows ``K_1 < K_2 < ... < K_s = target``; decreasing
    mode shrinks from ``superset`` (all nodes by default) down to
    ``target``. ``order="index"`` splits by index quantiles, ``"radius"``
    by distance from ``center`` (the origin by default), so that stage ``j``
    of an increasing run keeps the nodes within ``j / s`` of the largest
    radius.
    """
    size = nodes if isinstance(nodes, int) else len(nodes)
    target = as_mask(target, size)
    if stages < 2:
        raise StageCountError("an exhaustion needs at least two stages")
    if len(target) == 0:
        raise StageCountError("target mask is empty")
    if order not in ("index", "radius"):
        raise ValueError(f"unknown order {order!r}")
    if order == "radius":
        if isinstance(nodes, int):
            raise ValueError("radius ordering needs node coordinates")
        radius = nodes.radii(center)
    else:
        radius = None

    if mode == "increasing":
        if stages > len(target):
            raise StageCountError(f"{stages} stages requested for a target of {len(target)} nodes")
        members = target.array
        if radius is None:
            groups = _quantile_stages(members, stages)
        else:
            rmax = radius[members].max()
            eps = 1e-12 * max(rmax, 1.0)
            groups = [members[radius[members] <= rmax * j / stages + eps] for j in range(1, stages + 1)]
            if any(len(g) == 0 for g in groups):
                raise StageCountError("a radial stage is empty; use fewer stages")
        masks = tuple(SubsetMask(tuple(g), size) for g in groups)
        return Exhaustion(masks, target, "increasing")

    if mode == "decreasing":
        sup = SubsetMask.full(size) if superset is None else as_mask(superset, size)
        if not target <= sup:
            raise ValueError("target must be contained in the superset")
        extra = (sup - target).array
        if stages > len(extra) + 1:
            raise StageCountError(f"{stages} stages requested but only {len(extra)} nodes can be removed")
        if radius is not None:
            extra = extra[np.argsort(radius[extra], kind="stable")]
        m = len(extra)
        masks = []
        for j in range(stages):
            keep = math.ceil((stages - 1 - j) * m / (stages - 1))
            masks.append(SubsetMask(tuple(target.indices) + tuple(int(i) for i in extra[:keep]), size))
        return Exhaustion(tuple(masks), target, "decreasing")

    raise ValueError(f"unknown mode {mode!r}")
