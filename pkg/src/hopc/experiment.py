"""Cross-subject experiments: feature extraction, per-fold training and reports."""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .descriptor import CellGrid, holistic_descriptor
from .errors import ConfigError, DataError
from .learn import (FoldPlan, bow_encode, enumerate_folds, evaluate, kmeans_codebook, summarize,
                    svm_predict_many, svm_train)
from .stkp import DetectorParams, describe_keypoints, detect_stkp
from .synth import action_suite


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    plan: FoldPlan
    fold_ids: list
    accuracies: np.ndarray
    classes: np.ndarray
    confusion: np.ndarray
    fold_confusions: list
    timing: dict = field(default_factory=dict, compare=False)

    @property
    def stats(self):
        return summarize(self.accuracies)

    def csv(self) -> str:
        """Per-fold accuracies, preceded by the config echo as ``#`` lines."""
        lines = ["# " + ln for ln in self.config.echo().splitlines()]
        lines.append("fold,train_subjects,test_subjects,accuracy")
        for fid, acc in zip(self.fold_ids, self.accuracies):
            tr, te = self.plan.folds[fid]
            lines.append(f"{fid + 1},{' '.join(map(str, tr))},{' '.join(map(str, te))},{float(acc)!r}")
        return "\n".join(lines) + "\n"

    def confusion_csv(self) -> str:
        """Pooled confusion matrix; rows are true classes."""
        head = "true\\pred," + ",".join(str(c) for c in self.classes)
        rows = [f"{c}," + ",".join(str(v) for v in row) for c, row in zip(self.classes, self.confusion)]
        return "\n".join([head] + rows) + "\n"

    def summary(self) -> str:
        mean, std, hi, lo = self.stats
        out = [f"pipeline: {self.config.pipeline}", f"protocol: {self.config.protocol}",
               f"folds: {len(self.accuracies)}",
               f"accuracy: {100 * mean:.2f}% +- {100 * std:.2f}  (max {100 * hi:.2f}%, min {100 * lo:.2f}%)"]
        named = self.plan.named.get("5/5")
        if named is not None and named in self.fold_ids:
            out.append(f"5/5 split: {100 * self.accuracies[self.fold_ids.index(named)]:.2f}%")
        out += ["", "confusion (rows true, columns predicted):", self.confusion_csv().rstrip(), "",
                "config:", self.config.echo().rstrip()]
        return "\n".join(out) + "\n"

    def write(self, out_dir):
        """Write ``report.csv``, ``confusion.csv``, ``summary.txt`` and ``timing.txt``.

        Only ``timing.txt`` varies between runs with equal config and inputs.
        """
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        (d / "report.csv").write_text(self.csv())
        (d / "confusion.csv").write_text(self.confusion_csv())
        (d / "summary.txt").write_text(self.summary())
        (d / "timing.txt").write_text("".join(f"{k}={v:.3f}\n" for k, v in self.timing.items()))


def detector_params(cfg: ExperimentConfig) -> DetectorParams:
    return DetectorParams(r=cfg.r, tau=cfg.tau, theta=cfg.theta, r_prime=cfg.r_prime,
                          tau_prime=cfg.tau_prime, eta_min=cfg.eta_min, top_n=cfg.top_n,
                          stride=cfg.stride, adaptive_r=cfg.adaptive_r, radii=cfg.radii,
                          adaptive_tau=cfg.adaptive_tau, delta_max=cfg.delta_max)


def sequence_features(cfg: ExperimentConfig, seq):
    """Holistic vector, or the keypoint descriptor rows, of one sequence."""
    if cfg.pipeline == "holistic":
        grid = CellGrid(cfg.n_x, cfg.n_y, cfg.n_t)
        return holistic_descriptor(seq, grid, r=cfg.r, tau=cfg.tau, theta=cfg.theta,
                                   adaptive_tau=cfg.adaptive_tau, delta_max=cfg.delta_max,
                                   adaptive_r=cfg.adaptive_r, radii=cfg.radii).h_v
    if cfg.pipeline == "stkp":
        kps = detect_stkp(seq, detector_params(cfg))
        return describe_keypoints(seq, kps, cfg.backend, cfg.m_x, cfg.m_y, cfg.m_t, theta=cfg.theta)
    return np.zeros(0)


def _features_job(args):
    cfg, seq = args
    return sequence_features(cfg, seq)


def _map(cfg, fn, items):
    if cfg.workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(cfg.workers) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _predict_fold(args):
    cfg, train_feats, y_train, test_feats = args
    if cfg.pipeline == "constant":
        vals, cnt = np.unique(y_train, return_counts=True)
        return np.full(len(test_feats), vals[np.argmax(cnt)])
    if cfg.pipeline == "stkp":
        rows = [f for f in train_feats if len(f)]
        if not rows:
            raise DataError("no keypoints in the training sequences")
        cb = kmeans_codebook(np.concatenate(rows), k=cfg.k, seed=cfg.seed, max_iter=cfg.max_iter)
        train_feats = [bow_encode(f, cb) for f in train_feats]
        test_feats = [bow_encode(f, cb) for f in test_feats]
        X_tr = np.array([h.counts for h in train_feats])
        model = svm_train(X_tr, y_train, C=cfg.C, kernel=cfg.kernel)
        pred, _ = svm_predict_many(model, np.array([h.counts for h in test_feats]))
        empty = np.array([h.empty for h in test_feats])
        return np.where(empty, model.fallback, pred)
    model = svm_train(np.array(train_feats), y_train, C=cfg.C, kernel=cfg.kernel)
    return svm_predict_many(model, np.array(test_feats))[0]


def load_data(cfg: ExperimentConfig, sequences=None):
    if sequences is not None:
        return list(sequences)
    if cfg.data == "synth":
        return action_suite(cfg.synth_subjects, cfg.synth_duration, seed=cfg.seed)
    raise DataError("data=files needs sequences to be supplied")


def run_experiment(cfg: ExperimentConfig, sequences=None) -> ExperimentReport:
    """Run the configured pipeline over every fold of the subject split.

    ``sequences`` must carry subject ids and action labels; with
    ``data=synth`` and no sequences the built-in action suite is used.
    Features are extracted once per sequence (and per frame rate under a
    speed protocol); codebooks and classifiers are trained per fold.
    """
    timing = {}
    t0 = time.perf_counter()
    seqs = load_data(cfg, sequences)
    if not seqs:
        raise DataError("no sequences")
    missing = [i for i, s in enumerate(seqs) if s.subject_id is None or s.action_label is None]
    if missing:
        raise DataError(f"sequences {missing[:5]} lack a subject id or action label")
    labels = np.array([s.action_label for s in seqs])
    subjects = np.array([s.subject_id for s in seqs])
    if len(np.unique(labels)) < 2:
        raise DataError("need at least two action classes")
    uniq = np.unique(subjects)
    n_train = cfg.train_subjects if cfg.train_subjects is not None else len(uniq) // 2
    plan = enumerate_folds(uniq.tolist(), n_train)
    if cfg.folds == "all":
        fold_ids = list(range(len(plan)))
    elif cfg.folds in plan.named:
        fold_ids = [plan.named[cfg.folds]]
    else:
        raise ConfigError(f"unknown fold selection {cfg.folds!r}")
    if cfg.protocol != "none" and min(s.n_f for s in seqs) < 2 * cfg.decimation:
        raise DataError("sequences too short to decimate")
    timing["load"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    full = _map(cfg, _features_job, [(cfg, s) for s in seqs])
    if cfg.protocol == "none":
        train_f = test_f = full
    else:
        half = _map(cfg, _features_job, [(cfg, s.decimated(cfg.decimation)) for s in seqs])
        train_f, test_f = (full, half) if cfg.protocol == "full-half" else (half, full)
    timing["features"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    jobs = []
    for fid in fold_ids:
        tr, te = plan.folds[fid]
        tr_idx = np.flatnonzero(np.isin(subjects, tr))
        te_idx = np.flatnonzero(np.isin(subjects, te))
        jobs.append((cfg, [train_f[i] for i in tr_idx], labels[tr_idx], [test_f[i] for i in te_idx]))
    preds = _map(cfg, _predict_fold, jobs)
    timing["folds"] = time.perf_counter() - t0

    sub_plan = FoldPlan(plan.subjects, tuple(plan.folds[f] for f in fold_ids), {})
    lookup = iter(preds)
    ev = evaluate(lambda tr, te: next(lookup), labels, subjects, sub_plan)
    return ExperimentReport(cfg, plan, fold_ids, ev.accuracies, ev.classes, ev.confusion,
                            ev.fold_confusions, timing)
