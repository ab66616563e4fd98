"""Scatter matrices and the 3x3 symmetric eigenproblem.

All heavy lifting is done on stacks of matrices (``(n, 3, 3)`` arrays) so the
per-point descriptor code can stay vectorised; the single-matrix functions
are thin wrappers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericalError
from .geom import SupportVolume

TIE_RTOL = 1e-10
ZERO_SCORE_RTOL = 1e-12


@dataclass(frozen=True)
class ScatterMatrix:
    C: np.ndarray
    mu: np.ndarray
    n_p: int


@dataclass(frozen=True)
class Eigensystem:
    """Eigenvalues in descending order; ``vectors[:, j]`` pairs with ``lambdas[j]``."""

    lambdas: np.ndarray
    vectors: np.ndarray
    oriented: bool = False
    scores: np.ndarray | None = None


@dataclass(frozen=True)
class EigenRatios:
    d12: float
    d23: float

    @property
    def d12_infinite(self) -> bool:
        return np.isinf(self.d12)

    @property
    def d23_infinite(self) -> bool:
        return np.isinf(self.d23)


def scatter(support: SupportVolume | np.ndarray) -> ScatterMatrix:
    """Mean-centred second moment of the support points (extended precision)."""
    pts = support.points if isinstance(support, SupportVolume) else np.asarray(support)
    pts = pts.reshape(-1, 3)
    if len(pts) == 0:
        raise DataError("scatter matrix of an empty support")
    ext = pts.astype(np.longdouble)
    mu = ext.mean(axis=0)
    o = ext - mu
    C = (o.T @ o) / len(pts)
    C = np.asarray(C, dtype=np.float64)
    C = 0.5 * (C + C.T)
    return ScatterMatrix(C, np.asarray(mu, dtype=np.float64), len(pts))


def scatter_batch(offsets, owner, n):
    """Scatter matrices of ``n`` supports given as concatenated offsets.

    ``offsets`` are support points relative to their query point (keeps the
    accumulation well conditioned); ``owner[i]`` is the support that
    ``offsets[i]`` belongs to. Returns ``(C, counts)``.
    """
    counts = np.bincount(owner, minlength=n).astype(np.float64)
    safe = np.maximum(counts, 1.0)
    mean = np.stack([np.bincount(owner, offsets[:, a], minlength=n) for a in range(3)], axis=1)
    mean /= safe[:, None]
    C = np.empty((n, 3, 3))
    for a in range(3):
        for b in range(a, 3):
            s = np.bincount(owner, offsets[:, a] * offsets[:, b], minlength=n) / safe
            C[:, a, b] = C[:, b, a] = s - mean[:, a] * mean[:, b]
    return C, counts


def _charpoly_newton(A, lam):
    tr = A[:, 0, 0] + A[:, 1, 1] + A[:, 2, 2]
    c1 = (A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] ** 2
          + A[:, 0, 0] * A[:, 2, 2] - A[:, 0, 2] ** 2
          + A[:, 1, 1] * A[:, 2, 2] - A[:, 1, 2] ** 2)
    det = np.linalg.det(A)
    out = lam.copy()
    for j in range(3):
        x = lam[:, j]
        f = -x**3 + tr * x**2 - c1 * x + det
        df = -3 * x**2 + 2 * tr * x - c1
        step = np.divide(f, df, out=np.zeros_like(f), where=np.abs(df) > 1e-6)
        # only polish isolated roots; near a double root the step is noise
        others = np.abs(lam - x[:, None])
        others[:, j] = np.inf
        gap = others.min(axis=1)
        ok = np.abs(step) < 0.25 * gap
        out[:, j] = np.where(ok, x - step, x)
    return out


def _null_vector(A, lam):
    """Unit vector spanning the null space of ``A - lam I`` (isolated eigenvalue)."""
    M = A - lam[:, None, None] * np.eye(3)
    r0, r1, r2 = M[:, 0], M[:, 1], M[:, 2]
    cands = np.stack([np.cross(r0, r1), np.cross(r0, r2), np.cross(r1, r2)], axis=1)
    norms = np.linalg.norm(cands, axis=2)
    best = np.argmax(norms, axis=1)
    v = cands[np.arange(len(A)), best]
    nv = norms[np.arange(len(A)), best]
    fallback = nv <= 0
    v[fallback] = (1.0, 0.0, 0.0)
    nv[fallback] = 1.0
    return v / nv[:, None]


def _complement(w):
    """Deterministic orthonormal pair ``(u, v)`` spanning the plane orthogonal to ``w``."""
    u = np.empty_like(w)
    big_x = np.abs(w[:, 0]) > np.abs(w[:, 1])
    nx = np.sqrt(w[:, 0] ** 2 + w[:, 2] ** 2)
    ny = np.sqrt(w[:, 1] ** 2 + w[:, 2] ** 2)
    with np.errstate(invalid="ignore", divide="ignore"):
        u[:, 0] = np.where(big_x, -w[:, 2] / nx, 0.0)
        u[:, 1] = np.where(big_x, 0.0, w[:, 2] / ny)
        u[:, 2] = np.where(big_x, w[:, 0] / nx, -w[:, 1] / ny)
    return u, np.cross(w, u)


def _second_vector(A, lam, u, v):
    M = A - lam[:, None, None] * np.eye(3)
    Mu = np.einsum("nij,nj->ni", M, u)
    Mv = np.einsum("nij,nj->ni", M, v)
    m00 = np.einsum("ni,ni->n", u, Mu)
    m01 = np.einsum("ni,ni->n", u, Mv)
    m11 = np.einsum("ni,ni->n", v, Mv)
    # null vector of [[m00, m01], [m01, m11]] from its larger row
    use_first = np.abs(m00) >= np.abs(m11)
    a = np.where(use_first, m00, m01)
    b = np.where(use_first, m01, m11)
    n = np.hypot(a, b)
    degenerate = n <= 0
    n[degenerate] = 1.0
    cu = np.where(degenerate, 1.0, b / n)
    cv = np.where(degenerate, 0.0, -a / n)
    w = cu[:, None] * u + cv[:, None] * v
    return w / np.linalg.norm(w, axis=1)[:, None]


def _canonical_signs(V):
    """Make the first clearly nonzero component of every column positive."""
    V = V.copy()
    for j in range(3):
        col = V[:, :, j]
        first = np.argmax(np.abs(col) > 1e-12, axis=1)
        s = np.sign(col[np.arange(len(col)), first])
        s[s == 0] = 1.0
        V[:, :, j] *= s[:, None]
    return V


def eig3_batch(C):
    """Eigen-decompose a stack of symmetric PSD 3x3 matrices.

    Returns ``(lambdas, vectors)`` with ``lambdas`` of shape ``(n, 3)`` sorted
    descending and ``vectors[:, :, j]`` the matching unit eigenvectors.

    Eigenvalues come from the trigonometric solution of the characteristic
    cubic plus one guarded Newton step. The eigenvector of the most isolated
    eigenvalue is taken from cross products of rows of ``C - lam I``, the
    middle one is solved inside its orthogonal complement and the last is a
    cross product, which keeps the triad orthonormal when two eigenvalues
    coincide. Degenerate subspaces get the basis produced by
    ``_complement`` (deterministic), then every column's first nonzero
    component is made positive; a fully isotropic matrix yields the identity.
    """
    C = np.asarray(C, dtype=np.float64)
    single = C.ndim == 2
    C = C.reshape(-1, 3, 3)
    if not np.all(np.isfinite(C)):
        raise NumericalError("non-finite entries in scatter matrix")
    n = len(C)
    scale = np.max(np.abs(C.reshape(n, 9)), axis=1)
    zero = scale == 0
    scale[zero] = 1.0
    A = C / scale[:, None, None]
    A = 0.5 * (A + np.transpose(A, (0, 2, 1)))

    p1 = A[:, 0, 1] ** 2 + A[:, 0, 2] ** 2 + A[:, 1, 2] ** 2
    q = np.trace(A, axis1=1, axis2=2) / 3.0
    d = np.stack([A[:, 0, 0], A[:, 1, 1], A[:, 2, 2]], axis=1) - q[:, None]
    p = np.sqrt((np.sum(d**2, axis=1) + 2.0 * p1) / 6.0)
    iso = p <= 1e-15
    p_safe = np.where(iso, 1.0, p)
    B = (A - q[:, None, None] * np.eye(3)) / p_safe[:, None, None]
    rr = np.clip(np.linalg.det(B) / 2.0, -1.0, 1.0)
    phi = np.arccos(rr) / 3.0
    e1 = q + 2.0 * p * np.cos(phi)
    e3 = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    e2 = 3.0 * q - e1 - e3
    lam = np.stack([e1, e2, e3], axis=1)
    lam = _charpoly_newton(A, lam)
    lam = -np.sort(-lam, axis=1)
    lam[iso] = q[iso, None]

    first_isolated = (lam[:, 0] - lam[:, 1]) >= (lam[:, 1] - lam[:, 2])
    lam_iso = np.where(first_isolated, lam[:, 0], lam[:, 2])
    w_iso = _null_vector(A, lam_iso)
    u, v = _complement(w_iso)
    w_mid = _second_vector(A, lam[:, 1], u, v)
    V = np.empty((n, 3, 3))
    V[:, :, 1] = w_mid
    fi = first_isolated[:, None]
    V[:, :, 0] = np.where(fi, w_iso, np.cross(w_mid, w_iso))
    V[:, :, 2] = np.where(fi, np.cross(w_iso, w_mid), w_iso)
    V[iso] = np.eye(3)

    # Rayleigh quotients recover full precision at (near) double roots, where
    # the cubic's roots are only good to ~sqrt(eps)
    lam = np.einsum("nij,nik,nkj->nj", V, A, V)
    order = np.argsort(-lam, axis=1, kind="stable")
    lam = np.take_along_axis(lam, order, axis=1)
    V = np.take_along_axis(V, order[:, None, :], axis=2)
    V = _canonical_signs(V)

    lam = lam * scale[:, None]
    lam[zero] = 0.0
    lam = np.maximum(lam, 0.0)
    if single:
        return lam[0], V[0]
    return lam, V


def eig3(C: ScatterMatrix | np.ndarray) -> Eigensystem:
    M = C.C if isinstance(C, ScatterMatrix) else np.asarray(C, dtype=np.float64)
    if M.shape != (3, 3):
        raise DataError("eig3 expects a 3x3 matrix")
    lam, V = eig3_batch(M)
    return Eigensystem(lam, V)


def orient_batch(V, offsets, owner, n):
    """Sign-disambiguate stacks of eigenvector triads.

    ``offsets`` are ``q - p`` for every support point, ``owner`` maps each
    offset to its triad. Each eigenvector takes the sign of the signed
    squared-projection mass of the offsets (a zero mass counts as positive);
    if the result is left-handed the vector with the least decisive mass is
    flipped (ties go to the higher index). Returns ``(V_oriented, scores)``.
    """
    proj = np.einsum("mi,mij->mj", offsets, V[owner])
    sq = proj * proj
    scores = np.stack([np.bincount(owner, np.sign(proj[:, j]) * sq[:, j], minlength=n)
                       for j in range(3)], axis=1)
    mass = np.stack([np.bincount(owner, sq[:, j], minlength=n) for j in range(3)], axis=1)
    scores = np.where(np.abs(scores) <= ZERO_SCORE_RTOL * mass, 0.0, scores)
    signs = np.where(scores < 0, -1.0, 1.0)
    W = V * signs[:, None, :]
    scores = scores * signs
    det = np.einsum("ni,ni->n", np.cross(W[:, :, 0], W[:, :, 1]), W[:, :, 2])
    left = det < 0
    if left.any():
        # argmin over reversed columns so ties pick the highest index
        weakest = 2 - np.argmin(np.abs(scores[:, ::-1]), axis=1)
        rows = np.nonzero(left)[0]
        W[rows, :, weakest[rows]] *= -1.0
        scores[rows, weakest[rows]] *= -1.0
    return W, scores


def disambiguate_signs(eigs: Eigensystem, support: SupportVolume, p=None) -> Eigensystem:
    pts = support.points
    if len(pts) == 0:
        raise DataError("sign disambiguation needs a nonempty support")
    p = support.center if p is None else np.asarray(p, dtype=np.float64)
    o = pts - p
    W, scores = orient_batch(eigs.vectors[None], o, np.zeros(len(o), dtype=np.int64), 1)
    return Eigensystem(eigs.lambdas, W[0], oriented=True, scores=scores[0])


def eigenratios_batch(lam, floor=None):
    """Consecutive eigenvalue ratios ``(d12, d23)`` for ``(n, 3)`` eigenvalues.

    A denominator at or below the floor makes the ratio infinite, unless the
    numerator is below the floor too (``0/0``), which counts as ambiguous (1).
    The default floor is ``1e-12 * lambda_1`` (``1e-15`` when ``lambda_1 == 0``).
    """
    lam = np.asarray(lam, dtype=np.float64).reshape(-1, 3)
    if floor is None:
        floor = np.where(lam[:, 0] > 0, 1e-12 * lam[:, 0], 1e-15)
    floor = np.broadcast_to(floor, (len(lam),))

    def ratio(num, den):
        with np.errstate(divide="ignore", invalid="ignore"):
            out = num / den
        out = np.where(den <= floor, np.inf, out)
        return np.where((den <= floor) & (num <= floor), 1.0, out)

    return ratio(lam[:, 0], lam[:, 1]), ratio(lam[:, 1], lam[:, 2])


def eigenratios(eigs: Eigensystem, floor: float | None = None) -> EigenRatios:
    d12, d23 = eigenratios_batch(eigs.lambdas[None], floor)
    return EigenRatios(float(d12[0]), float(d23[0]))
