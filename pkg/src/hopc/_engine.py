"""Vectorised per-point machinery shared by the holistic and keypoint paths.

Supports are represented as flat ``(owner, point)`` pair lists: ``owner[i]``
is the query point and ``point[i]`` an index into the stacked sequence.
"""

from __future__ import annotations

import numpy as np

from .eigen import eig3_batch, orient_batch, scatter_batch
from .geom import PointCloudSequence, VoxelGrid

REL_TOL = 1e-9


class SequenceIndex:
    """Per-frame voxel grids (edge ``cell``) over one sequence, built on first use."""

    def __init__(self, seq: PointCloudSequence, cell: float):
        self.seq = seq
        self.cell = float(cell)
        self.points, self.tags = seq.stacked()
        sizes = [len(f) for f in seq.frames]
        self.start = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        self.position = {f.index: i for i, f in enumerate(seq.frames)}
        self._grids = {}

    def frame_points(self, t):
        pos = self.position[t]
        return self.points[self.start[pos]:self.start[pos + 1]]

    def frame_slice(self, t):
        pos = self.position[t]
        return slice(self.start[pos], self.start[pos + 1])

    def _grid(self, pos):
        g = self._grids.get(pos)
        if g is None:
            g = self._grids[pos] = VoxelGrid(self.seq.frames[pos].points, self.cell)
        return g

    def window_pairs(self, centers, t, tau, r):
        """Pairs between ``centers`` and points of frames ``t - tau .. t + tau`` within ``r``.

        Returns ``(owner, point, dt, d2)`` sorted by owner then point, where
        ``dt`` is the frame offset of the point relative to ``t``.
        """
        qs, ps, ds = [], [], []
        for f in self.seq.frames:
            if abs(f.index - t) > tau:
                continue
            pos = self.position[f.index]
            q, p, d2 = self._grid(pos).query_pairs(centers, r)
            qs.append(q)
            ps.append(p + self.start[pos])
            ds.append(d2)
        if not qs:
            z = np.zeros(0, dtype=np.int64)
            return z, z, z, np.zeros(0)
        q = np.concatenate(qs)
        p = np.concatenate(ps)
        d2 = np.concatenate(ds)
        order = np.lexsort((p, q))
        q, p, d2 = q[order], p[order], d2[order]
        return q, p, self.tags[p] - t, d2


def support_eigen(points, centers, owner, member, n, orient=True):
    """Eigen-analysis of ``n`` supports given by pair lists.

    Returns ``(lambdas, vectors, scores, counts)``; vectors are
    sign-disambiguated relative to each centre when ``orient`` is set.
    """
    o = points[member] - centers[owner]
    C, counts = scatter_batch(o, owner, n)
    lam, V = eig3_batch(C) if n else (np.zeros((0, 3)), np.zeros((0, 3, 3)))
    scores = None
    if orient and n:
        V, scores = orient_batch(V, o, owner, n)
    return lam, V, scores, counts


def first_strict_extremum(values, kind):
    """Index of the first strict interior local min/max along axis 1, or -1.

    Neighbours must differ by more than a relative ``1e-9`` so flat (or
    round-off flat) profiles have no extremum; NaNs never qualify.
    """
    v = np.asarray(values, dtype=np.float64)
    n, k = v.shape
    out = np.full(n, -1, dtype=np.int64)
    if k < 3:
        return out
    mid, left, right = v[:, 1:-1], v[:, :-2], v[:, 2:]
    tol = REL_TOL * np.maximum(np.abs(mid), 1e-300)
    with np.errstate(invalid="ignore"):
        if kind == "min":
            hit = (left - mid > tol) & (right - mid > tol)
        else:
            hit = (mid - left > tol) & (mid - right > tol)
    hit &= np.isfinite(mid) & np.isfinite(left) & np.isfinite(right)
    anyhit = hit.any(axis=1)
    out[anyhit] = np.argmax(hit[anyhit], axis=1) + 1
    return out


def temporal_profile(index: SequenceIndex, centers, t, r, delta_max, pairs=None):
    """``A(tau) = l2/l1 + l3/l2`` for ``tau = 1..delta_max``; shape ``(n, delta_max)``.

    ``r`` is a scalar or per-centre radii. ``pairs`` may pass in the result
    of a :meth:`SequenceIndex.window_pairs` call covering at least
    ``delta_max`` frames and ``max(r)``.
    """
    n = len(centers)
    r = np.broadcast_to(np.asarray(r, dtype=np.float64), (n,))
    if pairs is None:
        pairs = index.window_pairs(centers, t, delta_max, float(r.max()) if n else 0.0)
    owner, member, dt, d2 = pairs
    keep = (d2 <= r[owner] ** 2) & (np.abs(dt) <= delta_max)
    owner, member, adt = owner[keep], member[keep], np.abs(dt[keep])
    # moments binned by (centre, |dt|), then cumulated over the window size
    width = delta_max + 1
    key = owner * width + adt
    o = index.points[member] - centers[owner]
    size = n * width
    mom = [np.bincount(key, minlength=size)]
    mom += [np.bincount(key, o[:, a], minlength=size) for a in range(3)]
    mom += [np.bincount(key, o[:, a] * o[:, b], minlength=size) for a in range(3) for b in range(a, 3)]
    mom = np.cumsum(np.stack(mom, axis=1).reshape(n, width, 10), axis=1)[:, 1:].reshape(-1, 10)
    cnt = np.maximum(mom[:, 0], 1.0)
    mean = mom[:, 1:4] / cnt[:, None]
    C = np.empty((len(mom), 3, 3))
    col = 4
    for a in range(3):
        for b in range(a, 3):
            C[:, a, b] = C[:, b, a] = mom[:, col] / cnt - mean[:, a] * mean[:, b]
            col += 1
    lam = eig3_batch(C)[0] if len(C) else np.zeros((0, 3))
    with np.errstate(divide="ignore", invalid="ignore"):
        a = lam[:, 1] / lam[:, 0] + lam[:, 2] / lam[:, 1]
    return np.where(lam[:, 1] > 0, a, np.nan).reshape(n, delta_max)


def temporal_scale(index: SequenceIndex, centers, t, r, delta_max, pairs=None):
    """Adaptive temporal half-window per centre (``-1`` when there is no local minimum)."""
    idx = first_strict_extremum(temporal_profile(index, centers, t, r, delta_max, pairs), "min")
    return np.where(idx >= 0, idx + 1, -1)


def spatial_profile(index: SequenceIndex, centers, t, radii):
    """``l1/l2`` of the single-frame support at every radius; shape ``(n, len(radii))``."""
    radii = np.asarray(radii, dtype=np.float64)
    n = len(centers)
    owner, member, _, d2 = index.window_pairs(centers, t, 0, float(radii.max()))
    prof = np.full((n, len(radii)), np.nan)
    for i, rad in enumerate(radii):
        sel = d2 <= rad * rad
        lam, _, _, _ = support_eigen(index.points, centers, owner[sel], member[sel], n, orient=False)
        with np.errstate(divide="ignore", invalid="ignore"):
            prof[:, i] = np.where(lam[:, 1] > 0, lam[:, 0] / lam[:, 1], np.nan)
    return prof


def spatial_scale(index: SequenceIndex, centers, t, radii):
    """Adaptive radius per centre (``nan`` when there is no local maximum)."""
    radii = np.asarray(radii, dtype=np.float64)
    idx = first_strict_extremum(spatial_profile(index, centers, t, radii), "max")
    return np.where(idx >= 0, radii[np.maximum(idx, 0)], np.nan)
