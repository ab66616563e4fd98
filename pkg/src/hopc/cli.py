"""Command-line interface (``hopc <subcommand>``).

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import ExperimentConfig
from .errors import ConfigError, DataError, HopcError
from .experiment import detector_params, run_experiment, sequence_features
from .learn import bow_encode, kmeans_codebook, summarize, svm_predict_many, svm_train
from .stkp import describe_keypoints, detect_stkp
from .synth import SCENARIOS, SynthScenario, synth_generate

log = logging.getLogger("hopc")


def _add_config_flags(p, skip=()):
    p.add_argument("--config", help="key=value experiment config file (flags override it)")
    for f in dataclasses.fields(ExperimentConfig):
        if f.name in skip:
            continue
        p.add_argument("--" + f.name.replace("_", "-"), dest="cfg_" + f.name, metavar="VALUE",
                       help=f"config key {f.name} (default {f.default!r})")


def _config(args) -> ExperimentConfig:
    kv = io.read_keyvalue(args.config) if getattr(args, "config", None) else {}
    for k, v in vars(args).items():
        if k.startswith("cfg_") and v is not None:
            kv[k[4:]] = v
    if getattr(args, "seed", None) is not None:
        kv["seed"] = str(args.seed)
    return ExperimentConfig.from_mapping(kv)


def _echo_with(cfg, **extra):
    return cfg.echo() + "".join(f"{k}={v}\n" for k, v in extra.items())


def cmd_ingest(args):
    intr = io.CameraIntrinsics.from_file(args.intrinsics) if args.intrinsics else None
    seq = io.load_pgm_directory(args.depth_dir, intr, args.frame_rate)
    if args.subject is not None or args.label is not None:
        seq = dataclasses.replace(seq, subject_id=args.subject, action_label=args.label)
    io.save_sequence(seq, args.output)
    print(f"{args.output}: {seq.n_f} frames, {sum(len(f) for f in seq.frames)} points")


def cmd_synth(args):
    sc = SynthScenario(args.scenario, duration=args.duration, speed=args.speed,
                       view_axis=tuple(args.view_axis), view_angle=args.view_angle,
                       actor_scale=args.actor_scale, noise_sigma=args.noise_sigma, seed=args.seed,
                       action=args.action)
    seq, truth = synth_generate(sc, with_truth=True)
    if args.subject is not None:
        seq = dataclasses.replace(seq, subject_id=args.subject)
    io.save_sequence(seq, args.output)
    if args.truth:
        with open(args.truth, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["frame", "point", "moving"])
            for f, mask in zip(seq.frames, truth):
                for i, m in enumerate(mask.tolist()):
                    w.writerow([f.index, i, int(m)])
    print(f"{args.output}: {seq.n_f} frames")


def cmd_holistic(args):
    cfg = _config(args).replace(pipeline="holistic")
    seqs = [io.load_sequence(p) for p in args.sequences]
    rows = [sequence_features(cfg, s) for s in seqs]
    subj = [-1 if s.subject_id is None else s.subject_id for s in seqs]
    lab = [-1 if s.action_label is None else s.action_label for s in seqs]
    io.save_descriptors(args.output, np.array(rows), subj, lab, cfg.m, cfg.n_x * cfg.n_y * cfg.n_t,
                        cfg.echo())
    print(f"{args.output}: {len(rows)} x {len(rows[0])}")


def cmd_detect(args):
    cfg = _config(args).replace(pipeline="stkp")
    seq = io.load_sequence(args.sequence)
    kps = detect_stkp(seq, detector_params(cfg))
    D = describe_keypoints(seq, kps, cfg.backend, cfg.m_x, cfg.m_y, cfg.m_t, theta=cfg.theta)
    extra = {"subject": -1 if seq.subject_id is None else seq.subject_id,
             "label": -1 if seq.action_label is None else seq.action_label}
    io.save_keypoints(args.output, kps, D, _echo_with(cfg, **extra), args.csv)
    print(f"{args.output}: {len(kps)} keypoints")


def _keypoint_files(paths):
    out = []
    for p in paths:
        _, D, echo = io.load_keypoints(p)
        kv = dict(line.split("=", 1) for line in echo.splitlines() if "=" in line)
        out.append((D, int(kv.get("subject", -1)), int(kv.get("label", -1))))
    return out


def cmd_codebook(args):
    cfg = _config(args)
    rows = [D for D, _, _ in _keypoint_files(args.keypoints) if len(D)]
    if not rows:
        raise DataError("no keypoint descriptors in the inputs")
    cb = kmeans_codebook(np.concatenate(rows), k=cfg.k, seed=cfg.seed, max_iter=cfg.max_iter)
    io.save_codebook(args.output, cb, cfg.echo())
    print(f"{args.output}: k={cb.k}, final cost {cb.cost_history[-1]!r}")


def _features_for_model(args):
    """``(X, labels, empty)`` from a descriptor file or keypoint files + codebook."""
    if args.descriptors:
        X, _, labels, _ = io.load_descriptors(args.descriptors)
        return X, labels, np.zeros(len(X), dtype=bool)
    if not (args.keypoints and args.codebook):
        raise ConfigError("give --descriptors, or --keypoints with --codebook")
    cb = io.load_codebook(args.codebook)
    hists, labels = [], []
    for D, _, lab in _keypoint_files(args.keypoints):
        hists.append(bow_encode(D, cb))
        labels.append(lab)
    return (np.array([h.counts for h in hists]), np.array(labels), np.array([h.empty for h in hists]))


def cmd_train(args):
    cfg = _config(args)
    X, labels, _ = _features_for_model(args)
    if (labels < 0).any():
        raise DataError("training inputs need action labels")
    model = svm_train(X, labels, C=cfg.C, kernel=cfg.kernel)
    io.save_model(args.output, model)
    print(f"{args.output}: {len(model.classes)} classes, {len(model.support)} training samples")


def cmd_eval(args):
    cfg = _config(args)
    if args.model:
        model = io.load_model(args.model)
        X, labels, empty = _features_for_model(args)
        pred, _ = svm_predict_many(model, X)
        pred = np.where(empty, model.fallback, pred)
        acc = float(np.mean(pred == labels))
        print(f"accuracy {100 * acc:.2f}% over {len(labels)} sequences")
        return
    seqs = None
    if args.data:
        files = sorted(Path(args.data).glob("*.hpc"))
        if not files:
            raise DataError(f"{args.data}: no .hpc sequences")
        seqs = [io.load_sequence(f) for f in files]
        cfg = cfg.replace(data="files")
    report = run_experiment(cfg, seqs)
    report.write(args.output)
    sys.stdout.write(report.summary())


def cmd_report(args):
    path = Path(args.run_dir) / "report.csv"
    if not path.exists():
        raise DataError(f"{path}: no report")
    lines = path.read_text().splitlines()
    echo = {ln[2:].split("=", 1)[0]: ln[2:].split("=", 1)[1] for ln in lines if ln.startswith("# ")}
    rows = list(csv.DictReader([ln for ln in lines if not ln.startswith("#")]))
    if not rows:
        raise DataError(f"{path}: no folds")
    accs = [float(r["accuracy"]) for r in rows]
    mean, std, hi, lo = summarize(accs)
    print("pipeline,protocol,folds,mean,std,max,min")
    print(f"{echo.get('pipeline', '?')},{echo.get('protocol', '?')},{len(accs)},"
          f"{100 * mean:.2f},{100 * std:.2f},{100 * hi:.2f},{100 * lo:.2f}")


def build_parser():
    ap = argparse.ArgumentParser(prog="hopc", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="PGM depth directory -> native sequence")
    p.add_argument("depth_dir")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--intrinsics", help="key=value file (default: <depth_dir>/intrinsics.txt)")
    p.add_argument("--frame-rate", type=float, default=30.0)
    p.add_argument("--subject", type=int)
    p.add_argument("--label", type=int)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="synthetic scenario -> native sequence + ground truth")
    p.add_argument("scenario", choices=SCENARIOS)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--truth", help="CSV of per-point motion ground truth")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--duration", type=int, default=24)
    p.add_argument("--speed", type=float, default=1.0)
    p.add_argument("--view-axis", type=float, nargs=3, default=(0.0, 1.0, 0.0))
    p.add_argument("--view-angle", type=float, default=0.0)
    p.add_argument("--actor-scale", type=float, default=1.0)
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--action", type=int, default=0)
    p.add_argument("--subject", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("holistic", help="sequences -> holistic descriptors")
    p.add_argument("sequences", nargs="+")
    p.add_argument("-o", "--output", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_holistic)

    p = sub.add_parser("detect", help="sequence -> keypoints + descriptors")
    p.add_argument("sequence")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--csv", help="also export the keypoints as CSV")
    _add_config_flags(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("codebook", help="keypoint files -> k-means codebook")
    p.add_argument("keypoints", nargs="+")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--seed", type=int, required=True)
    _add_config_flags(p, skip=("seed",))
    p.set_defaults(func=cmd_codebook)

    for name, helptext, func in (("train", "features -> SVM model", cmd_train),
                                 ("eval", "evaluate a model, or run a full experiment", cmd_eval)):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--descriptors", help="descriptor file (holistic vectors)")
        p.add_argument("--keypoints", nargs="+", help="keypoint files, one per sequence")
        p.add_argument("--codebook")
        if name == "train":
            p.add_argument("-o", "--output", required=True)
            _add_config_flags(p)
        else:
            p.add_argument("--model", help="evaluate this model instead of running an experiment")
            p.add_argument("--data", help="directory of labelled .hpc sequences (default: synthetic)")
            p.add_argument("-o", "--output", default="report", help="report directory")
            p.add_argument("--seed", type=int, required=True)
            _add_config_flags(p, skip=("seed", "data"))
        p.set_defaults(func=func)

    p = sub.add_parser("report", help="tabulate a report directory written by eval")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except HopcError as e:
        print(f"hopc: error: {e}", file=sys.stderr)
        return e.exit_code
    except (FileNotFoundError, IsADirectoryError, PermissionError) as e:
        print(f"hopc: error: {e}", file=sys.stderr)
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
