"""Trial points, the overlapping patch cover and patch membership.

Patches are open discs ``B(center, radius)`` over the unit square. Lookups go
through a uniform-bin spatial index whose cell size is the largest patch
radius, so a disc query touches at most a 3x3 block of bins.
"""

from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .errors import CoverageError, DegenerateNodesError

DUPLICATE_TOL = 1e-12
PROBE_SIDE = 200


def _as_points(coords):
    pts = np.asarray(coords, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"expected an (n, 2) array of points, got shape {pts.shape}")
    return pts


@dataclass(frozen=True, eq=False)
class PointSet:
    """Distinct points of the closed unit square, stored as an (N, 2) array."""

    coords: np.ndarray
    tol: float = DUPLICATE_TOL

    def __post_init__(self):
        pts = _as_points(self.coords).copy()
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        if pts.size and (pts.min() < 0.0 or pts.max() > 1.0):
            bad = np.flatnonzero(((pts < 0.0) | (pts > 1.0)).any(axis=1))[0]
            raise ValueError(f"point {bad} {tuple(pts[bad])} lies outside [0, 1]^2")
        if len(pts) > 1:
            pairs = cKDTree(pts).query_pairs(self.tol, output_type="ndarray")
            if len(pairs):
                i, j = pairs[0]
                raise DegenerateNodesError(f"points {i} and {j} coincide within {self.tol:g}")
        pts.setflags(write=False)
        object.__setattr__(self, "coords", pts)

    def __len__(self):
        return len(self.coords)

    @property
    def x(self):
        return self.coords[:, 0]

    @property
    def y(self):
        return self.coords[:, 1]

    def to_csv(self, path):
        np.savetxt(path, self.coords, fmt="%.17g", delimiter=",", header="x,y", comments="")

    @classmethod
    def from_csv(cls, path):
        data = np.genfromtxt(path, delimiter=",", names=True)
        if data.dtype.names is None or not {"x", "y"} <= set(data.dtype.names):
            raise ValueError(f"{path}: expected a CSV with header x,y")
        data = np.atleast_1d(data)
        return cls(np.column_stack([data["x"], data["y"]]))


def build_uniform_grid(n_per_side):
    """n x n tensor grid on [0, 1]^2 including the boundary; x varies fastest."""
    if int(n_per_side) != n_per_side or n_per_side < 2:
        raise ValueError(f"n_per_side must be an integer >= 2, got {n_per_side!r}")
    g = np.linspace(0.0, 1.0, int(n_per_side))
    xx, yy = np.meshgrid(g, g)
    return PointSet(np.column_stack([xx.ravel(), yy.ravel()]))


def build_halton_points(n, seed=None):
    """First ``n`` points of the 2-D Halton sequence (scrambled when ``seed`` is given)."""
    if n < 1:
        raise ValueError("n must be positive")
    sampler = qmc.Halton(d=2, scramble=seed is not None, seed=seed)
    return PointSet(sampler.random(n))


class _BinIndex:
    """Uniform bins over a point cloud, for fixed-radius disc queries."""

    def __init__(self, points, cell):
        self.points = _as_points(points)
        self.cell = float(cell)
        self.origin = self.points.min(axis=0) if len(self.points) else np.zeros(2)
        ij = np.floor((self.points - self.origin) / self.cell).astype(np.int64)
        self.shape = (ij.max(axis=0) + 1) if len(ij) else np.array([1, 1])
        keys = ij[:, 0] * self.shape[1] + ij[:, 1]
        self.order = np.argsort(keys, kind="stable")
        self.sorted_keys = keys[self.order]

    def candidates(self, center, radius):
        lo = np.floor((np.asarray(center) - radius - self.origin) / self.cell).astype(np.int64)
        hi = np.floor((np.asarray(center) + radius - self.origin) / self.cell).astype(np.int64)
        lo = np.maximum(lo, 0)
        hi = np.minimum(hi, self.shape - 1)
        chunks = []
        for i in range(lo[0], hi[0] + 1):
            k0 = i * self.shape[1] + lo[1]
            k1 = i * self.shape[1] + hi[1]
            a = np.searchsorted(self.sorted_keys, k0, side="left")
            b = np.searchsorted(self.sorted_keys, k1, side="right")
            if b > a:
                chunks.append(self.order[a:b])
        if not chunks:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(chunks)

    def within(self, center, radius):
        """Indices of points strictly inside the disc, ascending."""
        idx = self.candidates(center, radius)
        d = self.points[idx] - center
        inside = idx[np.einsum("ij,ij->i", d, d) < radius * radius]
        inside.sort()
        return inside


@dataclass(frozen=True, eq=False)
class PatchCover:
    """Overlapping disc patches: centers, radii and the overlap factor used to build them."""

    centers: np.ndarray
    radii: np.ndarray
    overlap: float = float("nan")

    def __post_init__(self):
        centers = _as_points(self.centers).copy()
        radii = np.broadcast_to(np.asarray(self.radii, dtype=float), (len(centers),)).copy()
        if np.any(radii <= 0) or not np.all(np.isfinite(radii)):
            raise ValueError("patch radii must be positive and finite")
        centers.setflags(write=False)
        radii.setflags(write=False)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "radii", radii)

    @property
    def count(self):
        return len(self.centers)

    def __len__(self):
        return self.count

    @cached_property
    def _index(self):
        return _BinIndex(self.centers, self.radii.max())

    def verify_coverage(self, probe_side=PROBE_SIDE):
        """Raise CoverageError naming the first probe point outside every patch."""
        probe = build_uniform_grid(probe_side).coords
        covered = np.zeros(len(probe), dtype=bool)
        index = _BinIndex(probe, self.radii.max())
        for center, radius in zip(self.centers, self.radii):
            covered[index.within(center, radius)] = True
        if not covered.all():
            raise CoverageError(probe[np.argmin(covered)])


def build_patch_cover(n_c, overlap=1.0, verify=True):
    """Patches centred on an m x m grid (corners included) with a common radius.

    With ``m = sqrt(n_c)`` and center spacing ``h = 1/(m-1)``, every radius is
    ``overlap * h``. ``overlap`` must be at least ``1/sqrt(2)`` so that discs
    reach the middle of each cell. Coverage is checked on a probe grid.
    """
    m = math.isqrt(int(n_c)) if n_c >= 0 else 0
    if int(n_c) != n_c or m * m != n_c or m < 2:
        raise ValueError(f"number of patches must be a square m^2 with m >= 2, got {n_c!r}")
    if not overlap >= 1.0 / math.sqrt(2.0):
        raise ValueError(f"overlap must be >= 1/sqrt(2), got {overlap!r}")
    h = 1.0 / (m - 1)
    centers = build_uniform_grid(m).coords
    cover = PatchCover(centers, np.full(n_c, overlap * h), overlap=float(overlap))
    if verify:
        cover.verify_coverage()
    return cover


@dataclass(frozen=True, eq=False)
class PatchMembership:
    """Per-patch member lists ``members[l]`` (ascending indices into the point set)."""

    members: tuple
    underfilled: tuple = field(default=())

    def __len__(self):
        return len(self.members)

    def __getitem__(self, patch):
        return self.members[patch]

    def sizes(self):
        return np.array([len(m) for m in self.members])


def assign_members(points, cover, min_members=2, require_all_covered=True):
    """Index sets of the points strictly inside each patch.

    Patches with fewer than ``min_members`` points are listed in
    ``underfilled``; deciding what to do about them is left to the caller.
    A point outside every patch raises CoverageError unless
    ``require_all_covered`` is false.
    """
    coords = points.coords if isinstance(points, PointSet) else _as_points(points)
    members = []
    if len(coords):
        index = _BinIndex(coords, cover.radii.max())
        members = [index.within(c, r) for c, r in zip(cover.centers, cover.radii)]
    else:
        members = [np.empty(0, dtype=np.int64) for _ in range(cover.count)]
    if require_all_covered and len(coords):
        hit = np.zeros(len(coords), dtype=bool)
        for m in members:
            hit[m] = True
        if not hit.all():
            raise CoverageError(coords[np.argmin(hit)])
    underfilled = tuple(l for l, m in enumerate(members) if len(m) < min_members)
    for m in members:
        m.setflags(write=False)
    return PatchMembership(tuple(members), underfilled)


def covering_patches(x, cover):
    """Ascending ids of the patches whose open disc contains ``x``."""
    x = np.asarray(x, dtype=float).reshape(2)
    idx = cover._index.candidates(x, cover.radii.max())
    d = cover.centers[idx] - x
    hit = idx[np.einsum("ij,ij->i", d, d) < cover.radii[idx] ** 2]
    if len(hit) == 0:
        raise CoverageError(x)
    hit.sort()
    return hit
