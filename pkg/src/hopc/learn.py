"""Bag-of-words encoding, histogram intersection kernel SVM and evaluation protocol."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, NumericalError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Codebook:
    centers: np.ndarray
    cost_history: tuple = ()

    @property
    def k(self) -> int:
        return len(self.centers)


@dataclass(frozen=True)
class BowHistogram:
    counts: np.ndarray
    empty: bool = False


def _sq_dist(X, C, chunk=256):
    """Exact squared distances ``|x - c|^2`` (no expansion trick, so ties are honest)."""
    out = np.empty((len(X), len(C)))
    for i in range(0, len(X), chunk):
        diff = X[i:i + chunk, None, :] - C[None, :, :]
        out[i:i + chunk] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def assign(X, centers):
    """Nearest centre per row (ties go to the lowest index) and its squared distance."""
    d = _sq_dist(np.asarray(X, dtype=np.float64), np.asarray(centers, dtype=np.float64))
    idx = np.argmin(d, axis=1)
    return idx, d[np.arange(len(X)), idx]


def _kmeanspp(X, k, rng):
    centers = [X[rng.integers(len(X))]]
    d2 = _sq_dist(X, np.array(centers))[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            i = int(np.argmax(d2))
        else:
            i = int(rng.choice(len(X), p=d2 / total))
        centers.append(X[i])
        d2 = np.minimum(d2, _sq_dist(X, X[i:i + 1])[:, 0])
    return np.array(centers)


def kmeans_codebook(descriptors, k: int = 1000, seed: int = 0, max_iter: int = 100,
                    tol: float = 1e-6) -> Codebook:
    """Lloyd's k-means from a seeded k-means++ start.

    Stops after ``max_iter`` rounds or when the cost changes by less than
    ``tol`` relative. Empty clusters are re-seeded with the points farthest
    from their current centre. ``cost_history`` holds the cost after every
    assignment step.
    """
    X = np.asarray(descriptors, dtype=np.float64)
    if X.ndim != 2 or len(X) == 0:
        raise DataError("k-means needs a non-empty 2-D descriptor array")
    if k < 1:
        raise ConfigError("k must be >= 1")
    if len(np.unique(X, axis=0)) < k:
        raise DataError(f"k-means with k={k} needs at least {k} distinct descriptors, "
                        f"got {len(np.unique(X, axis=0))}")
    rng = np.random.default_rng(seed)
    C = _kmeanspp(X, k, rng)
    history = []
    for _ in range(max_iter):
        idx, d2 = assign(X, C)
        cost = float(d2.sum())
        history.append(cost)
        counts = np.bincount(idx, minlength=k)
        newC = np.zeros_like(C)
        np.add.at(newC, idx, X)
        live = counts > 0
        newC[live] /= counts[live, None]
        if not live.all():
            far = np.argsort(-d2, kind="stable")
            newC[~live] = X[far[:int((~live).sum())]]
        C = newC
        if len(history) > 1 and history[-2] - cost <= tol * max(history[-2], 1e-300):
            break
    idx, d2 = assign(X, C)
    history.append(float(d2.sum()))
    return Codebook(C, tuple(history))


def bow_encode(descriptors, codebook: Codebook) -> BowHistogram:
    """L1-normalised hard-assignment histogram over the codewords."""
    X = np.asarray(descriptors, dtype=np.float64)
    k = codebook.k
    if X.size == 0:
        return BowHistogram(np.zeros(k), empty=True)
    X = X.reshape(len(X), -1)
    if X.shape[1] != codebook.centers.shape[1]:
        raise DataError("descriptor and codebook dimensions differ")
    idx, _ = assign(X, codebook.centers)
    counts = np.bincount(idx, minlength=k).astype(np.float64)
    return BowHistogram(counts / counts.sum())


def hik(x, y) -> float:
    """Histogram intersection ``sum(min(x, y))``."""
    x = np.asarray(getattr(x, "counts", x), dtype=np.float64)
    y = np.asarray(getattr(y, "counts", y), dtype=np.float64)
    if x.shape != y.shape:
        raise DataError("histograms differ in length")
    if (x < 0).any() or (y < 0).any():
        raise DataError("histogram intersection needs non-negative entries")
    return float(np.minimum(x, y).sum())


def hik_gram(X, Y=None, chunk=64):
    X = np.asarray(X, dtype=np.float64)
    Y = X if Y is None else np.asarray(Y, dtype=np.float64)
    if (X < 0).any() or (Y < 0).any():
        raise DataError("histogram intersection needs non-negative entries")
    K = np.empty((len(X), len(Y)))
    for i in range(0, len(X), chunk):
        K[i:i + chunk] = np.minimum(X[i:i + chunk, None, :], Y[None, :, :]).sum(axis=2)
    return K


def linear_gram(X, Y=None):
    X = np.asarray(X, dtype=np.float64)
    Y = X if Y is None else np.asarray(Y, dtype=np.float64)
    return X @ Y.T


KERNELS = {"hik": hik_gram, "linear": linear_gram}


def smo(K, y, C=1.0, tol=1e-3, max_iter=100000):
    """Solve the soft-margin SVM dual on a precomputed kernel.

    Maximal-violating-pair working sets with second-order selection of the
    partner, no shrinking. ``y`` is +-1. Returns ``(alpha, b)`` for the
    decision function ``sum_i alpha_i y_i K(x_i, x) + b``.
    """
    K = np.asarray(K, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    if not np.all(np.isfinite(K)):
        raise NumericalError("non-finite kernel entries")
    Q = K * np.outer(y, y)
    QD = np.diag(Q).copy()
    alpha = np.zeros(n)
    G = -np.ones(n)
    eps_tau = 1e-12
    for _ in range(max_iter):
        yG = -y * G
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        if not up.any() or not low.any():
            break
        i = int(np.flatnonzero(up)[np.argmax(yG[up])])
        gmax = yG[i]
        gmin = yG[low].min()
        if gmax - gmin < tol:
            break
        b_it = gmax - yG
        cand = low & (b_it > 0)
        a_it = QD[i] + QD - 2.0 * y[i] * y * Q[i]  # = K_ii + K_tt - 2 K_it
        a_it = np.where(a_it > 0, a_it, eps_tau)
        obj = np.where(cand, -(b_it**2) / a_it, np.inf)
        j = int(np.argmin(obj))
        # two-variable update, as in LIBSVM's Solver
        Qi, Qj = Q[i], Q[j]
        ai_old, aj_old = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = max(QD[i] + QD[j] + 2 * Qi[j], eps_tau)
            delta = (-G[i] - G[j]) / quad
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0 and aj < 0:
                aj, ai = 0.0, diff
            elif diff <= 0 and ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0 and ai > C:
                ai, aj = C, C - diff
            elif diff <= 0 and aj > C:
                aj, ai = C, C + diff
        else:
            quad = max(QD[i] + QD[j] - 2 * Qi[j], eps_tau)
            delta = (G[i] - G[j]) / quad
            s = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if s > C and ai > C:
                ai, aj = C, s - C
            elif s <= C and aj < 0:
                aj, ai = 0.0, s
            if s > C and aj > C:
                aj, ai = C, s - C
            elif s <= C and ai < 0:
                ai, aj = 0.0, s
        alpha[i], alpha[j] = ai, aj
        G += Qi * (ai - ai_old) + Qj * (aj - aj_old)
    else:
        log.warning("SMO stopped at max_iter=%d before reaching tol", max_iter)
    yG = -y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        b = float(yG[free].mean())
    else:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        ub = yG[low].min() if low.any() else 0.0
        lb = yG[up].max() if up.any() else 0.0
        b = float((ub + lb) / 2)
    return alpha, b


@dataclass(frozen=True)
class ClassifierModel:
    """One-vs-rest kernel SVM; ``coef[c]`` holds ``alpha * y`` of head ``c``."""

    classes: np.ndarray
    support: np.ndarray
    coef: np.ndarray
    bias: np.ndarray
    kernel: str = "hik"
    C: float = 1.0
    fallback: int = 0

    def decision(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        K = KERNELS[self.kernel](X, self.support)
        scores = K @ self.coef.T + self.bias
        if not np.all(np.isfinite(scores)):
            raise NumericalError("non-finite decision scores")
        return scores


def _canonical_order(X, labels):
    keys = [X[:, c] for c in range(X.shape[1] - 1, -1, -1)] + [labels]
    return np.lexsort(keys)


def svm_train(histograms, labels, C: float = 1.0, kernel: str = "hik", tol: float = 1e-3) -> ClassifierModel:
    """Train one SMO head per class on a precomputed kernel.

    Samples are put in a canonical order first, so permuting the training
    set yields an identical model.
    """
    X = np.asarray([getattr(h, "counts", h) for h in histograms], dtype=np.float64)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if len(classes) < 2:
        raise DataError("SVM training needs at least two classes")
    if kernel not in KERNELS:
        raise ConfigError(f"unknown kernel {kernel!r}")
    if not C > 0:
        raise ConfigError("C must be positive")
    order = _canonical_order(X, labels)
    X, labels = X[order], labels[order]
    K = KERNELS[kernel](X)
    coef = np.zeros((len(classes), len(X)))
    bias = np.zeros(len(classes))
    for ci, c in enumerate(classes):
        y = np.where(labels == c, 1.0, -1.0)
        alpha, b = smo(K, y, C, tol)
        coef[ci] = alpha * y
        bias[ci] = b
    vals, cnt = np.unique(labels, return_counts=True)
    fallback = vals[np.argmax(cnt)]
    return ClassifierModel(classes, X, coef, bias, kernel, float(C), int(fallback))


def svm_predict(model: ClassifierModel, histogram):
    """``(label, scores)``; the highest score wins, ties go to the lowest class id.

    A histogram flagged empty (no keypoints) gets the most frequent training
    class.
    """
    if isinstance(histogram, BowHistogram) and histogram.empty:
        log.warning("empty histogram: predicting the majority training class")
        return model.fallback, np.zeros(len(model.classes))
    x = getattr(histogram, "counts", histogram)
    scores = model.decision(x)[0]
    return model.classes[int(np.argmax(scores))].item(), scores


def svm_predict_many(model: ClassifierModel, X):
    scores = model.decision(X)
    return model.classes[np.argmax(scores, axis=1)], scores


@dataclass(frozen=True)
class FoldPlan:
    subjects: tuple
    folds: tuple
    named: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.folds)


def enumerate_folds(subjects, train_count: int) -> FoldPlan:
    """Every split of the subjects into ``train_count`` training subjects and the rest.

    Folds come in lexicographic order of the sorted subject list. The split
    that trains on the odd-positioned subjects (1st, 3rd, ...) is named
    ``"5/5"`` when it exists.
    """
    subs = tuple(sorted(set(subjects)))
    if not 0 < train_count < len(subs):
        raise ConfigError("train_count must be between 1 and the number of subjects - 1")
    folds = []
    for tr in itertools.combinations(subs, train_count):
        te = tuple(s for s in subs if s not in tr)
        folds.append((tr, te))
    named = {}
    odd = tuple(subs[::2])
    if len(odd) == train_count:
        named["5/5"] = folds.index((odd, tuple(s for s in subs if s not in odd)))
    return FoldPlan(subs, tuple(folds), named)


def summarize(accuracies):
    """``(mean, std, max, min)``; std uses the n-1 denominator."""
    a = np.asarray(accuracies, dtype=np.float64)
    std = float(a.std(ddof=1)) if len(a) > 1 else 0.0
    return float(a.mean()), std, float(a.max()), float(a.min())


@dataclass
class EvalReport:
    accuracies: np.ndarray
    plan: FoldPlan
    classes: np.ndarray
    confusion: np.ndarray
    fold_confusions: list

    @property
    def mean(self):
        return summarize(self.accuracies)[0]

    @property
    def std(self):
        return summarize(self.accuracies)[1]

    @property
    def max(self):
        return float(np.max(self.accuracies))

    @property
    def min(self):
        return float(np.min(self.accuracies))

    def named(self, name="5/5"):
        i = self.plan.named.get(name)
        return None if i is None else float(self.accuracies[i])


def evaluate(pipeline, labels, subjects, plan: FoldPlan) -> EvalReport:
    """Run ``pipeline(train_idx, test_idx) -> predicted labels`` on every fold.

    Confusion matrices have true classes on rows; the pooled matrix sums all
    folds.
    """
    labels = np.asarray(labels)
    subjects = np.asarray(subjects)
    classes = np.unique(labels)
    pos = {c: i for i, c in enumerate(classes.tolist())}
    accs, confs = [], []
    for tr, te in plan.folds:
        tr_idx = np.flatnonzero(np.isin(subjects, tr))
        te_idx = np.flatnonzero(np.isin(subjects, te))
        pred = np.asarray(pipeline(tr_idx, te_idx))
        truth = labels[te_idx]
        conf = np.zeros((len(classes), len(classes)), dtype=np.int64)
        for a, b in zip(truth.tolist(), pred.tolist()):
            if b in pos:
                conf[pos[a], pos[b]] += 1
        accs.append(float(np.mean(pred == truth)) if len(truth) else 0.0)
        confs.append(conf)
    return EvalReport(np.array(accs), plan, classes, np.sum(confs, axis=0), confs)
