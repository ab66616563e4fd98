"""Spatio-temporal keypoints: detection, view-invariant description and scale selection."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import _engine
from .descriptor import THETA, hopc_blocks, hopc_batch, prune
from .eigen import Eigensystem, eigenratios_batch
from .errors import ConfigError
from .geom import DirectionSet, Frame, PointCloudSequence, SupportVolume, icosahedron_axes


@dataclass(frozen=True)
class Keypoint:
    p: np.ndarray
    t: int
    r: float
    tau: int
    eta: float
    h_spatial: np.ndarray
    h_st: np.ndarray
    basis: np.ndarray = field(repr=False, default=None)


@dataclass(frozen=True)
class LocalityParams:
    r_prime: float
    tau_prime: int

    def __post_init__(self):
        if not self.r_prime > 0 or self.tau_prime < 0:
            raise ConfigError("locality needs r' > 0 and tau' >= 0")


@dataclass(frozen=True)
class DetectorParams:
    """Keypoint detector settings.

    ``r_prime`` defaults to ``r / 4`` and ``tau_prime`` to ``tau``. With
    ``adaptive_r`` the radius of each point comes from the ``radii`` ladder,
    with ``adaptive_tau`` the half-window is searched in ``1..delta_max``;
    points without a selected scale are not candidates.
    """

    r: float = 1.0
    tau: int = 2
    theta: float = THETA
    r_prime: float | None = None
    tau_prime: int | None = None
    eta_min: float = 0.05
    top_n: int | None = None
    stride: int = 1
    adaptive_r: bool = False
    radii: tuple | None = None
    adaptive_tau: bool = False
    delta_max: int = 6

    @property
    def locality(self) -> LocalityParams:
        rp = self.r / 4 if self.r_prime is None else self.r_prime
        tp = self.tau if self.tau_prime is None else self.tau_prime
        return LocalityParams(rp, tp)


@dataclass(frozen=True)
class AlignedSupport:
    points: np.ndarray
    frames: np.ndarray
    origin: np.ndarray
    basis: np.ndarray

    def reconstruct(self):
        return self.points @ self.basis.T + self.origin


@dataclass(frozen=True)
class SurfaceDescriptor:
    g: np.ndarray
    occupied: np.ndarray
    shape: tuple
    extent: tuple


def quality(h_spatial, h_st):
    """Half the chi-squared distance between spatial and spatio-temporal HOPC.

    Works on single vectors or row stacks; bins where both are 0 are skipped.
    """
    a = np.asarray(h_spatial, dtype=np.float64)
    b = np.asarray(h_st, dtype=np.float64)
    den = a + b
    terms = np.divide((a - b) ** 2, den, out=np.zeros_like(den), where=den > 0)
    eta = 0.5 * terms.sum(axis=-1)
    return float(eta) if eta.ndim == 0 else eta


def candidate_filter(p, t, seq: PointCloudSequence, r: float, tau: int, theta: float = THETA):
    """Spatial and spatio-temporal eigensystems at ``(p, t)`` if all four eigenratios exceed ``theta``.

    Returns ``None`` for rejected points.
    """
    index = _engine.SequenceIndex(seq, r)
    return _candidates(index, np.asarray(p, dtype=np.float64)[None], t, r, tau, theta)[0]


def _candidates(index, centers, t, r, tau, theta):
    n = len(centers)
    r = np.broadcast_to(np.asarray(r, dtype=np.float64), (n,))
    tau = np.broadcast_to(np.asarray(tau), (n,))
    owner, member, dt, d2 = index.window_pairs(centers, t, int(tau.max()), float(r.max()))
    keep = d2 <= r[owner] ** 2
    st = keep & (np.abs(dt) <= tau[owner])
    sp = keep & (dt == 0)
    out = []
    lam_s, V_s, sc_s, _ = _engine.support_eigen(index.points, centers, owner[sp], member[sp], n)
    lam_t, V_t, sc_t, _ = _engine.support_eigen(index.points, centers, owner[st], member[st], n)
    ok = np.ones(n, dtype=bool)
    for lam in (lam_s, lam_t):
        d12, d23 = eigenratios_batch(lam)
        ok &= (d12 > theta) & (d23 > theta) & (lam[:, 0] > 0)
    for i in range(n):
        if ok[i]:
            out.append((Eigensystem(lam_s[i], V_s[i], True, sc_s[i]),
                        Eigensystem(lam_t[i], V_t[i], True, sc_t[i])))
        else:
            out.append(None)
    return out


def detect_stkp(seq: PointCloudSequence, params: DetectorParams | None = None,
                axes: DirectionSet | None = None) -> list:
    """Detect spatio-temporal keypoints.

    Every point (every ``stride``-th per frame) is screened; candidates are
    ranked by quality (ties: frame, then x, y, z) and greedily thinned so no
    two survivors lie within ``r'`` of each other *and* within ``tau'``
    frames. Candidates below ``eta_min`` are dropped, and ``top_n`` caps the
    result.
    """
    params = params or DetectorParams()
    axes = axes or icosahedron_axes()
    if seq.n_f == 0:
        return []
    if params.adaptive_r and (params.radii is None or len(params.radii) < 3):
        raise ConfigError("adaptive_r needs a ladder of at least 3 radii")
    index = _engine.SequenceIndex(seq, float(max(params.radii)) if params.adaptive_r else params.r)
    found = []
    for frame in seq.frames:
        centers = frame.points[::max(1, params.stride)]
        if len(centers) == 0:
            continue
        found.extend(_detect_frame(index, frame.index, centers, params, axes))
    found.sort(key=lambda k: (-k.eta, k.t, k.p[0], k.p[1], k.p[2]))
    kept = suppress(found, params.locality)
    if params.top_n is not None:
        kept = kept[:params.top_n]
    return kept


def _detect_frame(index, t, centers, params, axes):
    n = len(centers)
    rad = np.full(n, float(params.r))
    alive = np.ones(n, dtype=bool)
    if params.adaptive_r:
        rb = _engine.spatial_scale(index, centers, t, params.radii)
        alive &= ~np.isnan(rb)
        rad = np.where(np.isnan(rb), params.r, rb)
    taus = np.full(n, int(params.tau))
    reach = max(params.tau, params.delta_max) if params.adaptive_tau else params.tau
    owner, member, dt, d2 = pairs = index.window_pairs(centers, t, reach, float(rad.max()))
    if params.adaptive_tau:
        ts = _engine.temporal_scale(index, centers, t, rad, params.delta_max, pairs)
        alive &= ts > 0
        taus = np.where(ts > 0, ts, params.tau)
    if not alive.any():
        return []
    # renumber the surviving centres and their pairs
    idx = np.nonzero(alive)[0]
    remap = np.cumsum(alive) - 1
    sel = alive[owner]
    owner, member, dt, d2 = remap[owner[sel]], member[sel], dt[sel], d2[sel]
    c, rad, taus = centers[idx], rad[idx], taus[idx]
    n = len(c)
    keep = d2 <= rad[owner] ** 2
    st = keep & (np.abs(dt) <= taus[owner])
    sp = keep & (dt == 0)
    lam_s, V_s, _, _ = _engine.support_eigen(index.points, c, owner[sp], member[sp], n)
    lam_t, V_t, _, _ = _engine.support_eigen(index.points, c, owner[st], member[st], n)
    ok = (lam_s[:, 0] > 0) & (lam_t[:, 0] > 0)
    for lam in (lam_s, lam_t):
        d12, d23 = eigenratios_batch(lam)
        ok &= (d12 > params.theta) & (d23 > params.theta)
    b_s, e_s = hopc_blocks(lam_s, V_s, axes)
    b_t, e_t = hopc_blocks(lam_t, V_t, axes)
    h_s, _, _ = prune(b_s, lam_s, params.theta, e_s)
    h_t, _, _ = prune(b_t, lam_t, params.theta, e_t)
    eta = quality(h_s, h_t)
    ok &= eta >= params.eta_min
    out = []
    for i in np.nonzero(ok)[0]:
        out.append(Keypoint(c[i].copy(), int(t), float(rad[i]), int(taus[i]), float(eta[i]),
                            h_s[i], h_t[i], V_s[i]))
    return out


def suppress(candidates, locality: LocalityParams):
    """Greedy locality suppression over candidates already sorted best-first."""
    rp, tp = locality.r_prime, locality.tau_prime
    cells: dict = {}
    kept = []
    for kp in candidates:
        key = tuple(np.floor(kp.p / rp).astype(np.int64))
        near = (other for off in itertools.product((-1, 0, 1), repeat=3)
                for other in cells.get(tuple(k + o for k, o in zip(key, off)), ()))
        if not any(abs(o.t - kp.t) <= tp and np.sum((o.p - kp.p) ** 2) <= rp * rp for o in near):
            kept.append(kp)
            cells.setdefault(key, []).append(kp)
    return kept


def keypoint_support(seq: PointCloudSequence, kp: Keypoint, index=None) -> SupportVolume:
    """Spatio-temporal support of a keypoint (frames ``t +- tau``, radius ``r``)."""
    index = index or _engine.SequenceIndex(seq, kp.r)
    _, member, _, _ = index.window_pairs(kp.p[None], kp.t, kp.tau, kp.r)
    return SupportVolume(kp.p, index.points[member], index.tags[member], kp.r, kp.tau)


def align_support(kp: Keypoint, support: SupportVolume, V_spatial=None) -> AlignedSupport:
    """Express support offsets ``q - p`` in the keypoint's spatial eigenbasis."""
    V = kp.basis if V_spatial is None else np.asarray(V_spatial)
    if V is None:
        raise ConfigError("alignment needs the oriented spatial eigenbasis")
    o = support.points - kp.p
    return AlignedSupport(o @ V, support.frames - kp.t, np.asarray(kp.p), np.asarray(V))


def surface_descriptor(aligned: AlignedSupport, m_x: int = 20, m_y: int = 20, m_t: int = 3,
                       r: float = 1.0, tau: int = 2, k: int = 4, power: float = 2.0,
                       occupancy: float | None = None) -> SurfaceDescriptor:
    """Sample the aligned support as a depth field ``z(x, y, t)`` on a regular grid.

    Nodes sit at cell centres of ``[-r, r]^2`` in aligned x/y; the ``2 tau + 1``
    frame offsets are split into ``m_t`` slabs. A node takes the
    inverse-distance weighted (``1/d**power``) mean aligned z of its ``k``
    nearest slab points, or 0 when the nearest one is farther than
    ``occupancy`` (default: two node spacings). Raster order is x fastest,
    then y, then t.
    """
    xs = -r + (np.arange(m_x) + 0.5) * (2 * r / m_x)
    ys = -r + (np.arange(m_y) + 0.5) * (2 * r / m_y)
    occupancy = 2 * max(2 * r / m_x, 2 * r / m_y) if occupancy is None else occupancy
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.stack([gx.ravel(), gy.ravel()], axis=1)
    g = np.zeros((m_t, m_y * m_x))
    occ = np.zeros((m_t, m_y * m_x), dtype=bool)
    span = 2 * tau + 1
    slab = np.clip(((aligned.frames + tau) * m_t) // span, 0, m_t - 1)
    for s in range(m_t):
        pts = aligned.points[slab == s]
        if len(pts) == 0:
            continue
        d = np.sqrt(np.sum((nodes[:, None, :] - pts[None, :, :2]) ** 2, axis=2))
        kk = min(k, len(pts))
        nn = np.argpartition(d, kk - 1, axis=1)[:, :kk] if kk < len(pts) else np.tile(np.arange(len(pts)), (len(nodes), 1))
        dn = np.take_along_axis(d, nn, axis=1)
        zn = pts[nn, 2]
        exact = dn <= 1e-15
        w = np.where(exact, 1.0, 1.0 / np.maximum(dn, 1e-15) ** power)
        w = np.where(exact.any(axis=1, keepdims=True), exact.astype(float), w)
        val = np.sum(w * zn, axis=1) / np.sum(w, axis=1)
        hit = dn.min(axis=1) <= occupancy
        g[s] = np.where(hit, val, 0.0)
        occ[s] = hit
    return SurfaceDescriptor(g.reshape(-1), occ.reshape(-1), (m_t, m_y, m_x), (r, tau))


def describe_keypoints(seq: PointCloudSequence, keypoints, backend: str = "surface",
                       m_x: int = 20, m_y: int = 20, m_t: int = 3,
                       axes: DirectionSet | None = None, theta: float = THETA):
    """View-invariant descriptors of keypoints, one row each.

    ``surface`` samples the aligned hyper-surface, ``hopc`` recomputes the
    spatio-temporal HOPC on the aligned support.
    """
    if backend not in ("surface", "hopc"):
        raise ConfigError(f"unknown keypoint descriptor backend {backend!r}")
    axes = axes or icosahedron_axes()
    if not keypoints:
        dim = m_x * m_y * m_t if backend == "surface" else 3 * axes.m
        return np.zeros((0, dim))
    index = _engine.SequenceIndex(seq, max(k.r for k in keypoints))
    rows = []
    for kp in keypoints:
        sup = keypoint_support(seq, kp, index)
        al = align_support(kp, sup)
        if backend == "surface":
            rows.append(surface_descriptor(al, m_x, m_y, m_t, kp.r, kp.tau).g)
        else:
            owner = np.zeros(len(al.points), dtype=np.int64)
            h, _, _ = hopc_batch(al.points, np.zeros((1, 3)), owner, np.arange(len(al.points)), 1,
                                 axes, theta)
            rows.append(h[0])
    return np.array(rows)


def adaptive_spatial_scale(cloud, p, radii):
    """Radius from the ladder where ``l1/l2`` of the support first peaks, else ``None``."""
    radii = np.asarray(radii, dtype=np.float64)
    if len(radii) < 3:
        return None
    if np.any(np.diff(radii) <= 0):
        raise ConfigError("radii must be strictly ascending")
    seq = PointCloudSequence((Frame(1, cloud),))
    index = _engine.SequenceIndex(seq, float(radii.max()))
    rb = _engine.spatial_scale(index, np.asarray(p, dtype=np.float64)[None], 1, radii)[0]
    return None if math.isnan(rb) else float(rb)


def adaptive_temporal_scale(seq: PointCloudSequence, p, t: int, r: float, delta_max: int):
    """Half-window ``tau`` at the first strict local minimum of ``l2/l1 + l3/l2``, else ``None``."""
    if delta_max < 2:
        raise ConfigError("delta_max must be >= 2")
    index = _engine.SequenceIndex(seq, r)
    ts = _engine.temporal_scale(index, np.asarray(p, dtype=np.float64)[None], t, r, delta_max)[0]
    return None if ts < 0 else int(ts)


def first_local_min(values):
    """1-based position of the first strict interior local minimum, or ``None``."""
    i = _engine.first_strict_extremum(np.asarray(values, dtype=np.float64)[None], "min")[0]
    return None if i < 0 else int(i) + 1
