import subprocess
import sys

import numpy as np
import pytest

from hopc import io
from hopc.cli import main


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("seqs")
    for subject in (1, 2):
        for action in (0, 1):
            rc = main(["synth", "two-limb-articulation", "-o", str(d / f"s{subject}a{action}.hpc"),
                       "--seed", str(10 * subject + action), "--duration", "8", "--action", str(action),
                       "--subject", str(subject)])
            assert rc == 0
    return d


def test_synth_with_truth(tmp_path):
    out, truth = tmp_path / "p.hpc", tmp_path / "t.csv"
    assert main(["synth", "static-plane", "-o", str(out), "--seed", "0", "--truth", str(truth)]) == 0
    lines = truth.read_text().splitlines()
    assert lines[0] == "frame,point,moving"
    assert all(ln.endswith(",0") for ln in lines[1:])
    assert io.load_sequence(out).n_f == 24


def test_synth_requires_seed(tmp_path):
    with pytest.raises(SystemExit) as e:
        main(["synth", "static-plane", "-o", str(tmp_path / "x.hpc")])
    assert e.value.code == 2


def test_ingest(tmp_path):
    depth = tmp_path / "depth"
    depth.mkdir()
    for i in range(2):
        io.write_pgm(depth / f"{i}.pgm", np.full((4, 5), 1000 + i))
    io.CameraIntrinsics(100, 100, 2, 1.5, 0.001).to_file(depth / "intrinsics.txt")
    out = tmp_path / "d.hpc"
    assert main(["ingest", str(depth), "-o", str(out), "--subject", "4", "--label", "1"]) == 0
    seq = io.load_sequence(out)
    assert (seq.n_f, seq.subject_id, seq.action_label, len(seq.frames[0])) == (2, 4, 1, 20)


def test_holistic_train_eval(synth_dir, tmp_path):
    seqs = sorted(map(str, synth_dir.glob("*.hpc")))
    desc, model = tmp_path / "d.hpd", tmp_path / "m.hsv"
    assert main(["holistic", *seqs, "-o", str(desc), "--n-t", "1"]) == 0
    X, subj, lab, meta = io.load_descriptors(desc)
    assert X.shape == (4, 30 * 60) and meta["gamma"] == 30
    assert "n_t=1\n" in meta["echo"]
    assert main(["train", "--descriptors", str(desc), "-o", str(model)]) == 0
    assert main(["eval", "--seed", "0", "--model", str(model), "--descriptors", str(desc)]) == 0


def test_detect_codebook_train(synth_dir, tmp_path):
    kps = []
    for p in sorted(synth_dir.glob("*.hpc")):
        out = tmp_path / (p.stem + ".hpk")
        assert main(["detect", str(p), "-o", str(out), "--top-n", "20", "--csv", str(tmp_path / "k.csv")]) == 0
        kps.append(str(out))
    cb, model = tmp_path / "c.hcb", tmp_path / "m.hsv"
    assert main(["codebook", *kps, "-o", str(cb), "--seed", "1", "--k", "8"]) == 0
    assert io.load_codebook(cb).k == 8
    assert main(["train", "--keypoints", *kps, "--codebook", str(cb), "-o", str(model)]) == 0
    assert main(["eval", "--seed", "0", "--model", str(model), "--keypoints", *kps,
                 "--codebook", str(cb)]) == 0


def test_eval_and_report(synth_dir, tmp_path, capsys):
    run = tmp_path / "run"
    assert main(["eval", "--seed", "0", "--data", str(synth_dir), "--pipeline", "constant",
                 "-o", str(run)]) == 0
    capsys.readouterr()
    assert main(["report", str(run)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "pipeline,protocol,folds,mean,std,max,min"
    assert out[1].startswith("constant,none,2,50.00,")


def test_exit_codes(tmp_path, capsys):
    assert main(["detect", str(tmp_path / "missing.hpc"), "-o", str(tmp_path / "k.hpk")]) == 3
    (tmp_path / "bad.hpc").write_bytes(b"HPC1\x01\x00")
    assert main(["detect", str(tmp_path / "bad.hpc"), "-o", str(tmp_path / "k.hpk")]) == 3
    assert main(["eval", "--seed", "0", "--theta", "0.9", "--pipeline", "constant"]) == 2
    (tmp_path / "c.txt").write_text("bogus=1\n")
    assert main(["eval", "--seed", "0", "--config", str(tmp_path / "c.txt")]) == 2
    assert "error" in capsys.readouterr().err


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "hopc", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "ingest" in r.stdout
