"""HOPC point descriptor and the holistic cell-grid sequence descriptor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _engine
from .eigen import Eigensystem, eigenratios_batch, orient_batch, scatter_batch, eig3_batch
from .errors import ConfigError, DataError
from .geom import DirectionSet, PointCloudSequence, SupportVolume, icosahedron_axes

THETA = 1.12
# dot products that equal psi in exact arithmetic land within a few ulps of it
QUANT_ATOL = 1e-12


@dataclass(frozen=True)
class HopcDescriptor:
    h: np.ndarray
    block_mask: np.ndarray
    discarded: bool
    eigensystem: Eigensystem | None = None

    @property
    def blocks(self):
        return self.h.reshape(3, -1)


def project_and_quantize(v, axes: DirectionSet | None = None):
    """Quantised projection of a unit vector (or stack of them) onto the axes.

    Projections at or below ``psi`` become 0, the rest are shifted down by
    ``psi``. A zero vector gives an all-zero histogram.
    """
    axes = axes or icosahedron_axes()
    v = np.asarray(v, dtype=np.float64)
    b = v @ axes.axes.T
    return np.where(b > axes.psi + QUANT_ATOL, b - axes.psi, 0.0)


def hopc_blocks(lam, V, axes: DirectionSet):
    """Eigenvalue-scaled quantised histograms, shape ``(n, 3, m)``.

    Blocks whose quantised histogram is all zero come back zeroed and flagged
    in the returned ``(n, 3)`` mask.
    """
    bq = project_and_quantize(np.transpose(V, (0, 2, 1)), axes)
    norm = np.linalg.norm(bq, axis=2)
    empty = norm <= 0
    scale = np.divide(lam, norm, out=np.zeros_like(lam), where=~empty)
    return bq * scale[:, :, None], empty


def prune(blocks, lam, theta, empty=None):
    """Apply the eigenratio cases to ``(n, 3, m)`` blocks.

    Returns ``(h, block_mask, discarded)`` with ``h`` flattened to ``(n, 3m)``.
    """
    d12, d23 = eigenratios_batch(lam)
    a, b = d12 > theta, d23 > theta
    keep = np.zeros(lam.shape, dtype=bool)
    keep[a & b] = True
    keep[~a & b, 2] = True
    keep[a & ~b, 0] = True
    discarded = (~a & ~b) | (lam[:, 0] <= 0)
    keep[discarded] = False
    if empty is not None:
        keep &= ~empty
    h = np.where(keep[:, :, None], blocks, 0.0)
    return h.reshape(len(h), -1), ~keep, discarded


def hopc_batch(points, centers, owner, member, n, axes: DirectionSet, theta=THETA):
    """HOPC for ``n`` supports given as pair lists; see :mod:`hopc._engine`."""
    lam, V, _, _ = _engine.support_eigen(points, centers, owner, member, n)
    blocks, empty = hopc_blocks(lam, V, axes)
    return prune(blocks, lam, theta, empty)


def hopc_point(p, support: SupportVolume, axes: DirectionSet | None = None,
               theta: float = THETA) -> HopcDescriptor:
    """Descriptor of ``p`` from the points of its support volume."""
    if not theta > 1:
        raise ConfigError("theta must exceed 1")
    axes = axes or icosahedron_axes()
    p = np.asarray(p, dtype=np.float64)
    if len(support) == 0:
        raise DataError("HOPC of an empty support")
    o = support.points - p
    owner = np.zeros(len(o), dtype=np.int64)
    C, _ = scatter_batch(o, owner, 1)
    lam, V = eig3_batch(C)
    V, scores = orient_batch(V, o, owner, 1)
    blocks, empty = hopc_blocks(lam, V, axes)
    h, mask, discarded = prune(blocks, lam, theta, empty)
    eig = Eigensystem(lam[0], V[0], oriented=True, scores=scores[0])
    return HopcDescriptor(h[0], mask[0], bool(discarded[0]), eig)


@dataclass(frozen=True)
class CellGrid:
    n_x: int = 6
    n_y: int = 5
    n_t: int = 3
    bounds: tuple | None = None

    @property
    def gamma(self) -> int:
        return self.n_x * self.n_y * self.n_t

    def fitted(self, seq: PointCloudSequence) -> "CellGrid":
        """Grid anchored on the X/Y bounding box of every point in ``seq``."""
        pts, _ = seq.stacked()
        if len(pts) == 0:
            raise DataError("empty sequence")
        lo, hi = pts[:, :2].min(axis=0), pts[:, :2].max(axis=0)
        return CellGrid(self.n_x, self.n_y, self.n_t, (lo[0], hi[0], lo[1], hi[1], seq.n_f))

    def cell_of(self, xy, frame_pos):
        """Linear cell id (x fastest, then y, then t); ``frame_pos`` is 0-based."""
        x0, x1, y0, y1, n_f = self.bounds

        def bin_(v, lo, hi, n):
            width = hi - lo if hi > lo else 1.0
            return np.clip(np.floor((v - lo) / width * n).astype(np.int64), 0, n - 1)

        ix = bin_(xy[:, 0], x0, x1, self.n_x)
        iy = bin_(xy[:, 1], y0, y1, self.n_y)
        it = np.clip((np.asarray(frame_pos) * self.n_t) // max(n_f, 1), 0, self.n_t - 1)
        return ix + self.n_x * (iy + self.n_y * it)


@dataclass(frozen=True)
class HolisticDescriptor:
    h_v: np.ndarray
    grid: CellGrid
    counts: np.ndarray

    def cell_blocks(self):
        return self.h_v.reshape(self.grid.gamma, -1)


def holistic_descriptor(seq: PointCloudSequence, grid: CellGrid | None = None,
                        axes: DirectionSet | None = None, r: float = 1.0, tau: int = 2,
                        theta: float = THETA, adaptive_tau: bool = False, delta_max: int = 6,
                        adaptive_r: bool = False, radii=None) -> HolisticDescriptor:
    """Concatenated, per-cell L2-normalised sums of spatio-temporal HOPC.

    Every point of every frame is described from the points of frames
    ``t - tau .. t + tau`` within ``r`` of it. With ``adaptive_tau`` each
    point uses its own temporal scale, and with ``adaptive_r`` its own
    radius from the ``radii`` ladder; points without a scale fall back to
    ``tau`` / ``r``. Discarded points contribute nothing.
    """
    if seq.n_f == 0:
        raise DataError("empty sequence")
    axes = axes or icosahedron_axes()
    grid = (grid or CellGrid()).fitted(seq)
    if adaptive_r and (radii is None or len(radii) < 3):
        raise ConfigError("adaptive_r needs a ladder of at least 3 radii")
    index = _engine.SequenceIndex(seq, float(np.max(radii)) if adaptive_r else r)
    m3 = 3 * axes.m
    H = np.zeros((grid.gamma, m3))
    counts = np.zeros(grid.gamma, dtype=np.int64)
    for pos, frame in enumerate(seq.frames):
        centers = frame.points
        n = len(centers)
        if n == 0:
            continue
        t = frame.index
        rad = np.full(n, float(r))
        if adaptive_r:
            rb = _engine.spatial_scale(index, centers, t, radii)
            rad = np.where(np.isnan(rb), r, rb)
        taus = np.full(n, int(tau))
        reach = max(int(tau), int(delta_max)) if adaptive_tau else int(tau)
        pairs = index.window_pairs(centers, t, reach, float(rad.max()))
        if adaptive_tau:
            ts = _engine.temporal_scale(index, centers, t, rad, delta_max, pairs)
            taus = np.where(ts > 0, ts, tau)
        owner, member, dt, d2 = pairs
        keep = (d2 <= rad[owner] ** 2) & (np.abs(dt) <= taus[owner])
        h, _, discarded = hopc_batch(index.points, centers, owner[keep], member[keep], n, axes, theta)
        cells = grid.cell_of(centers[:, :2], np.full(n, pos))
        live = ~discarded
        np.add.at(H, cells[live], h[live])
        counts += np.bincount(cells[live], minlength=grid.gamma)
    norms = np.linalg.norm(H, axis=1)
    nz = norms > 0
    H[nz] /= norms[nz, None]
    return HolisticDescriptor(H.reshape(-1), grid, counts)
