"""Pointcloud sequences, the icosahedral direction set and support volumes."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

PHI = (1.0 + math.sqrt(5.0)) / 2.0


@dataclass(frozen=True)
class Frame:
    index: int
    points: np.ndarray

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise DataError(f"frame {self.index}: non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class PointCloudSequence:
    frames: tuple
    frame_rate: float = 30.0
    subject_id: int | None = None
    action_label: int | None = None

    def __post_init__(self):
        frames = tuple(self.frames)
        idx = [f.index for f in frames]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise DataError("frame indices must be strictly increasing")
        object.__setattr__(self, "frames", frames)

    @property
    def n_f(self) -> int:
        return len(self.frames)

    @property
    def indices(self) -> np.ndarray:
        return np.array([f.index for f in self.frames], dtype=np.int64)

    def stacked(self):
        """All points as one array plus the frame index of every point."""
        if not self.frames:
            return np.zeros((0, 3)), np.zeros(0, dtype=np.int64)
        pts = np.concatenate([f.points for f in self.frames])
        tags = np.repeat(self.indices, [len(f) for f in self.frames])
        return pts, tags

    def transformed(self, rotation=None, translation=None) -> "PointCloudSequence":
        R = np.eye(3) if rotation is None else np.asarray(rotation, dtype=np.float64)
        d = np.zeros(3) if translation is None else np.asarray(translation, dtype=np.float64)
        frames = tuple(Frame(f.index, f.points @ R.T + d) for f in self.frames)
        return PointCloudSequence(frames, self.frame_rate, self.subject_id, self.action_label)

    def decimated(self, step: int = 2, offset: int = 0) -> "PointCloudSequence":
        """Keep every ``step``-th frame and renumber from 1 (frame-rate division)."""
        kept = self.frames[offset::step]
        frames = tuple(Frame(i + 1, f.points) for i, f in enumerate(kept))
        return PointCloudSequence(frames, self.frame_rate / step, self.subject_id, self.action_label)


@dataclass(frozen=True)
class DirectionSet:
    axes: np.ndarray
    psi: float

    @property
    def m(self) -> int:
        return len(self.axes)


@dataclass(frozen=True)
class SupportVolume:
    center: np.ndarray
    points: np.ndarray
    frames: np.ndarray = field(default=None)
    r: float = math.inf
    tau: int = 0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))
        tags = np.zeros(len(pts), dtype=np.int64) if self.frames is None else np.asarray(self.frames)
        object.__setattr__(self, "frames", tags)

    def __len__(self):
        return len(self.points)


def icosahedron_axes(m: int = 20) -> DirectionSet:
    """Facet-centre directions of the regular icosahedron.

    Order: the 8 ``(+-1, +-1, +-1)`` corners, then ``(0, +-1/phi, +-phi)``,
    ``(+-1/phi, +-phi, 0)`` and ``(+-phi, 0, +-1/phi)``; inside each group
    signs run ``+`` before ``-`` with the last coordinate varying fastest.
    """
    if m != 20:
        raise ConfigError(f"only m=20 (icosahedron) is supported, got m={m}")
    inv = 1.0 / PHI
    rows = [s for s in itertools.product((1.0, -1.0), repeat=3)]
    for a, b in itertools.product((1.0, -1.0), repeat=2):
        rows.append((0.0, a * inv, b * PHI))
    for a, b in itertools.product((1.0, -1.0), repeat=2):
        rows.append((a * inv, b * PHI, 0.0))
    for a, b in itertools.product((1.0, -1.0), repeat=2):
        rows.append((a * PHI, 0.0, b * inv))
    length = math.sqrt(PHI**2 + inv**2)
    axes = np.array(rows) / length
    axes.setflags(write=False)
    return DirectionSet(axes, neighbor_threshold_closed_form())


def neighbor_threshold_closed_form() -> float:
    return (PHI + 1.0 / PHI) / (PHI**2 + PHI**-2)


def neighbor_threshold(axes: DirectionSet | np.ndarray) -> float:
    """Projection of an axis on its nearest neighbour.

    For the icosahedral set this is the closed form ``(phi + 1/phi) / L_u**2
    = sqrt(5)/3``; for any other set of unit axes it is the largest dot
    product between two distinct axes.
    """
    U = axes.axes if isinstance(axes, DirectionSet) else np.asarray(axes, dtype=np.float64)
    if U.ndim != 2 or U.shape[1] != 3 or len(U) < 2:
        raise ConfigError("need at least two 3-D axes")
    if U.shape == (20, 3) and np.allclose(U, icosahedron_axes().axes, atol=1e-12, rtol=0):
        return neighbor_threshold_closed_form()
    G = U @ U.T
    return float(G[~np.eye(len(U), dtype=bool)].max())


def accumulate_window(seq: PointCloudSequence, t: int, tau: int):
    """Merge frames ``t - tau .. t + tau`` (missing border frames are skipped).

    Returns ``(points, frame_tags)``.
    """
    if seq.n_f == 0:
        raise DataError("empty sequence")
    if tau < 0:
        raise ConfigError("tau must be >= 0")
    chosen = [f for f in seq.frames if t - tau <= f.index <= t + tau]
    if not chosen:
        return np.zeros((0, 3)), np.zeros(0, dtype=np.int64)
    pts = np.concatenate([f.points for f in chosen])
    tags = np.repeat([f.index for f in chosen], [len(f) for f in chosen])
    return pts, tags


def _expand(starts, counts):
    """Concatenated ``range(s, s + c)`` for every ``(s, c)``, plus the owner row of each item."""
    total = int(counts.sum())
    owner = np.repeat(np.arange(len(counts)), counts)
    within = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    return np.repeat(starts, counts) + within, owner


class VoxelGrid:
    """Uniform voxel hash over a fixed point set.

    A ball query of radius ``r`` visits the ``(2k+1)**3`` cells around each
    occupied query cell, ``k = ceil(r / cell)``, and keeps exact
    ``d**2 <= r**2`` hits. Queries are batched per occupied cell pair.
    """

    def __init__(self, points, cell: float):
        if not cell > 0 or not math.isfinite(cell):
            raise ConfigError("voxel cell edge must be positive and finite")
        self.points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        self.cell = float(cell)
        ijk = np.floor(self.points / self.cell).astype(np.int64)
        self._keys, self._start, self._count, self._order = self._bucket(ijk)

    @staticmethod
    def _pack(ijk):
        # 21 bits per axis; offsets keep coordinates non-negative
        off = ijk + (1 << 20)
        if np.any(off < 0) or np.any(off >= (1 << 21)):
            raise DataError("coordinates too far from the origin for the voxel hash")
        return (off[..., 0] << 42) | (off[..., 1] << 21) | off[..., 2]

    def _bucket(self, ijk):
        lin = self._pack(ijk)
        order = np.argsort(lin, kind="stable")
        keys, start, count = np.unique(lin[order], return_index=True, return_counts=True)
        return keys, start, count, order

    def query_pairs(self, centers, r: float):
        """All ``(query, point)`` index pairs with ``|point - center|**2 <= r**2``.

        Pairs are sorted by query, then by point index. Also returns the
        squared distances.
        """
        centers = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
        if len(self.points) == 0 or len(centers) == 0:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0)
        if not math.isfinite(r):
            qi = np.repeat(np.arange(len(centers)), len(self.points))
            pj = np.tile(np.arange(len(self.points)), len(centers))
        else:
            reach = max(1, math.ceil(r / self.cell))
            cijk = np.floor(centers / self.cell).astype(np.int64)
            _, cstart, ccount, corder = self._bucket(cijk)
            cell_ijk = cijk[corder[cstart]]
            rng = np.arange(-reach, reach + 1)
            offs = np.stack(np.meshgrid(rng, rng, rng, indexing="ij"), axis=-1).reshape(-1, 3)
            nb = self._pack(cell_ijk[:, None, :] + offs[None, :, :])
            pos = np.minimum(np.searchsorted(self._keys, nb), len(self._keys) - 1)
            hit = self._keys[pos] == nb
            cc, slot = np.nonzero(hit)
            pc = pos[cc, slot]
            # every centre of cell cc against every point of cell pc
            cidx, pair = _expand(cstart[cc], ccount[cc])
            per = self._count[pc[pair]]
            pidx, _ = _expand(self._start[pc[pair]], per)
            qi = corder[np.repeat(cidx, per)]
            pj = self._order[pidx]
        d2 = np.sum((self.points[pj] - centers[qi]) ** 2, axis=1)
        keep = d2 <= r * r
        qi, pj, d2 = qi[keep], pj[keep], d2[keep]
        order = np.lexsort((pj, qi))
        return qi[order], pj[order], d2[order]


def spherical_support(cloud, p, r: float, frames=None, tau: int = 0) -> SupportVolume:
    """Points of ``cloud`` within distance ``r`` of ``p``.

    ``cloud`` is an ``(n, 3)`` array or the ``(points, tags)`` pair returned by
    :func:`accumulate_window`.
    """
    if not r > 0:
        raise ConfigError("support radius must be positive")
    if isinstance(cloud, tuple):
        cloud, frames = cloud
    pts = np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
    tags = np.zeros(len(pts), dtype=np.int64) if frames is None else np.asarray(frames)
    p = np.asarray(p, dtype=np.float64)
    if not math.isfinite(r) or len(pts) == 0:
        sel = np.arange(len(pts))
    else:
        _, sel, _ = VoxelGrid(pts, r).query_pairs(p[None, :], r)
    return SupportVolume(p, pts[sel], tags[sel], r, tau)
