import csv
import json
import math

import numpy as np
import pytest

from voltda.cli import main
from voltda.errors import InsufficientDataError
from voltda.evaluation import evaluate, stratified_split
from voltda.image import read_pi_csv
from voltda.pipeline import PipelineConfig, load_config
from voltda.volume_io import load_npy, save_npy

SMALL = ["--dims", "16", "16", "16", "--radius", "5", "--thickness", "2", "--noise", "0.1"]


def synth(out, kinds=("sphere_shell",), count=1, seed=0, extra=()):
    args = ["synth", "--out", str(out), "--count", str(count), "--seed", str(seed), *SMALL, *extra]
    for k in kinds:
        args += ["--kind", k]
    assert main(args) == 0


def read_bytes(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


# ---------------------------------------------------------------- synth


def test_synth_count_and_labels(tmp_path):
    synth(tmp_path, count=4, seed=3)
    assert len(list(tmp_path.glob("*.npy"))) == 4
    rows = list(csv.DictReader(open(tmp_path / "labels.csv")))
    assert len(rows) == 4 and {r["label"] for r in rows} == {"sphere_shell"}


def test_synth_two_kinds_deterministic(tmp_path):
    synth(tmp_path / "a", ("sphere_shell", "solid_ball"), count=20, extra=["--jitter", "1"])
    synth(tmp_path / "b", ("sphere_shell", "solid_ball"), count=20, extra=["--jitter", "1"])
    assert len(list((tmp_path / "a").glob("*.npy"))) == 40
    labels = {r["label"] for r in csv.DictReader(open(tmp_path / "a" / "labels.csv"))}
    assert labels == {"sphere_shell", "solid_ball"}
    assert read_bytes(tmp_path / "a") == read_bytes(tmp_path / "b")


# ------------------------------------------------------------- pipeline


def test_smoke_defaults(tmp_path):
    assert main(["synth", "--kind", "sphere_shell", "--out", str(tmp_path / "in")]) == 0
    assert main(["pipeline", str(tmp_path / "in"), "--out", str(tmp_path / "out")]) == 0
    out = tmp_path / "out"
    for name in ("sphere_shell_000.H2.pi.png", "sphere_shell_000.H2.pi.csv", "sphere_shell_000.H2.params.json"):
        assert (out / name).is_file()
    assert read_pi_csv(out / "sphere_shell_000.H2.pi.csv").shape == (50, 50)
    side = json.loads((out / "sphere_shell_000.H2.params.json").read_text())
    assert side["config"]["converter"]["target_count"] == 600
    assert side["config"]["image"]["epsilon"] == 0.95
    assert side["k"] == 50 and side["hom_dim"] == 2


def test_rerun_byte_identical(tmp_path):
    synth(tmp_path / "in", ("sphere_shell", "solid_ball"), count=2)
    for run in ("a", "b"):
        assert main(["pipeline", str(tmp_path / "in"), "--out", str(tmp_path / run), "--jobs", "1",
                     "--superpixels", "300", "--homdim", "1", "--homdim", "2"]) == 0
    assert read_bytes(tmp_path / "a") == read_bytes(tmp_path / "b")


def test_dataset_bounds_shared(tmp_path):
    synth(tmp_path / "in", ("sphere_shell", "solid_ball"), count=5, extra=["--jitter", "1"])
    assert main(["pipeline", str(tmp_path / "in"), "--out", str(tmp_path / "out"), "--jobs", "1",
                 "--superpixels", "300", "--bounds", "dataset", "--homdim", "1"]) == 0
    sides = [json.loads(p.read_text()) for p in sorted((tmp_path / "out").glob("*.H1.params.json"))]
    assert len(sides) == 10
    keys = {tuple(s[k] for k in ("m", "M", "n", "N", "sigma")) for s in sides}
    assert len(keys) == 1


def test_stage_composability(tmp_path):
    synth(tmp_path / "in", count=1)
    flags = ["--superpixels", "200"]
    main(["pipeline", str(tmp_path / "in"), "--out", str(tmp_path / "full"), "--jobs", "1", *flags,
          "--quantile", "0.05", "--homdim", "1"])
    assert main(["convert", str(tmp_path / "in"), "--out", str(tmp_path / "c"), *flags]) == 0
    assert main(["persist", str(tmp_path / "c" / "sphere_shell_000.cloud.csv"), "--out", str(tmp_path / "p"),
                 "--quantile", "0.05", "--homdim", "1"]) == 0
    assert main(["image", str(tmp_path / "p" / "sphere_shell_000.diagram.csv"), "--out", str(tmp_path / "i"),
                 "--homdim", "1"]) == 0
    full, p, i = tmp_path / "full", tmp_path / "p", tmp_path / "i"
    name = "sphere_shell_000.diagram.csv"
    assert (full / name).read_bytes() == (p / name).read_bytes()
    for suffix in (".H1.pi.csv", ".H1.pi.png"):
        assert (full / f"sphere_shell_000{suffix}").read_bytes() == (i / f"sphere_shell_000{suffix}").read_bytes()
    a = json.loads((full / "sphere_shell_000.H1.params.json").read_text())
    b = json.loads((i / "sphere_shell_000.H1.params.json").read_text())
    for key in ("m", "M", "n", "N", "sigma", "fingerprint"):
        assert a[key] == b[key]
    assert a["config"]["filtration"]["quantile"] == 0.05
    assert a["config"]["r_max"] == b["config"]["r_max"]


def test_partial_failure_skips_file(tmp_path):
    synth(tmp_path / "in", count=2)
    (tmp_path / "in" / "broken.npy").write_bytes(b"not an npy file")
    code = main(["pipeline", str(tmp_path / "in"), "--out", str(tmp_path / "out"), "--jobs", "1",
                 "--superpixels", "200", "--homdim", "1"])
    assert code == 1
    assert len(list((tmp_path / "out").glob("*.H1.pi.csv"))) == 2


def test_budget_exit_code(tmp_path, caplog):
    synth(tmp_path / "in", count=1)
    code = main(["pipeline", str(tmp_path / "in"), "--out", str(tmp_path / "out"), "--budget", "100"])
    assert code == 3
    assert "sphere_shell_000.npy" in caplog.text and "budget" in caplog.text


@pytest.mark.parametrize("flags", [["--epsilon", "1.0"], ["--resolution", "0"], ["--quantile", "1.5"],
                                   ["--homdim", "3", "--max-dim", "2"]])
def test_config_error_exit_code(tmp_path, flags):
    synth(tmp_path / "in", count=1)
    assert main(["pipeline", str(tmp_path / "in"), "--out", str(tmp_path / "out"), *flags]) == 2


def test_config_file_layering(tmp_path, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"image": {"epsilon": 0.9, "resolution": 20}, "converter": {"target_count": 200}}))
    monkeypatch.setenv("VOLTDA_CONFIG", str(cfg))
    assert load_config().image.epsilon == 0.9
    synth(tmp_path / "in", count=1)
    assert main(["pipeline", str(tmp_path / "in"), "--out", str(tmp_path / "out"), "--resolution", "12",
                 "--homdim", "1"]) == 0
    side = json.loads((tmp_path / "out" / "sphere_shell_000.H1.params.json").read_text())
    assert side["epsilon"] == 0.9 and side["k"] == 12
    assert side["config"]["converter"]["target_count"] == 200


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"imgae": {}}))
    synth(tmp_path / "in", count=1)
    assert main(["--config", str(cfg), "pipeline", str(tmp_path / "in"), "--out", str(tmp_path / "o")]) == 2


def test_config_echo_roundtrip():
    cfg = PipelineConfig()
    assert PipelineConfig.from_dict(cfg.effective()) == cfg


# ---------------------------------------------------------- stage commands


def test_convert_constant_volume(tmp_path):
    save_npy(np.full((12, 12, 12), 7, dtype=np.int16), tmp_path / "flat.npy")
    assert main(["convert", str(tmp_path / "flat.npy"), "--out", str(tmp_path / "c"), "--superpixels", "27"]) == 0
    rows = list(csv.DictReader(open(tmp_path / "c" / "flat.cloud.csv")))
    assert len(rows) == 27 and all(float(r["v"]) == 0.0 for r in rows)


def test_persist_unit_square(tmp_path):
    (tmp_path / "sq.csv").write_text("z,y,x,v\n0,0,0,0\n1,0,0,0\n1,1,0,0\n0,1,0,0\n")
    assert main(["persist", str(tmp_path / "sq.csv"), "--out", str(tmp_path / "p"), "--rmax", "2",
                 "--homdim", "1"]) == 0
    lines = (tmp_path / "p" / "sq.diagram.csv").read_text().splitlines()
    assert f"1,1.0,{math.sqrt(2)!r}" in lines
    assert lines[-1].startswith("1,1.0,1.41421")


def test_image_empty_diagram_explicit_bounds(tmp_path):
    (tmp_path / "e.diagram.csv").write_text("dim,birth,death\n0,0.0,inf\n")
    assert main(["image", str(tmp_path / "e.diagram.csv"), "--out", str(tmp_path / "i"),
                 "--bounds-values", "0", "1", "0", "1", "--resolution", "10"]) == 0
    grid = read_pi_csv(tmp_path / "i" / "e.H2.pi.csv")
    assert grid.shape == (10, 10) and not grid.any()


def test_image_cap_policy(tmp_path):
    (tmp_path / "e.diagram.csv").write_text("dim,birth,death\n2,0.1,inf\n")
    assert main(["image", str(tmp_path / "e.diagram.csv"), "--out", str(tmp_path / "i"), "--inf-policy",
                 "cap_at_rmax", "--rmax", "0.5", "--resolution", "10"]) == 0
    side = json.loads((tmp_path / "i" / "e.H2.params.json").read_text())
    assert side["N"] > 0.5 > side["n"]


# ------------------------------------------------------------------ eval


def write_pis(d, feats, labels):
    d.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, (f, lab) in enumerate(zip(feats, labels)):
        np.savetxt(d / f"v{i:02d}.H2.pi.csv", f.reshape(2, 2), delimiter=",")
        rows.append(f"v{i:02d}.npy,{lab}")
    (d / "labels.csv").write_text("file,label\n" + "\n".join(rows) + "\n")


def test_eval_separable(tmp_path):
    rng = np.random.default_rng(0)
    feats = np.vstack([rng.normal(0, 0.1, (20, 4)), rng.normal(5, 0.1, (20, 4))])
    write_pis(tmp_path, feats, ["a"] * 20 + ["b"] * 20)
    assert main(["eval", str(tmp_path), str(tmp_path / "labels.csv"), "--out", str(tmp_path / "r.json")]) == 0
    report = json.loads((tmp_path / "r.json").read_text())
    assert report["accuracy"] == 1.0
    assert report["n_train"] == 28 and report["n_test"] == 12
    assert sum(map(sum, report["confusion"])) == 12


def test_eval_shuffled_is_chance():
    rng = np.random.default_rng(1)
    feats = np.vstack([rng.normal(0, 0.1, (20, 4)), rng.normal(5, 0.1, (20, 4))])
    accs = []
    for trial in range(30):
        labels = rng.permutation(["a"] * 20 + ["b"] * 20)
        accs.append(evaluate(feats, labels, seed=trial).accuracy)
    assert abs(np.mean(accs) - 0.5) <= 0.2


def test_eval_insufficient_data(tmp_path):
    with pytest.raises(InsufficientDataError):
        evaluate(np.zeros((7, 3)), ["a"] * 4 + ["b"] * 3)
    with pytest.raises(InsufficientDataError):
        evaluate(np.zeros((8, 3)), ["a"] * 8)
    write_pis(tmp_path, np.zeros((5, 4)), ["a"] * 3 + ["b"] * 2)
    assert main(["eval", str(tmp_path), str(tmp_path / "labels.csv")]) != 0


def test_split_is_stratified_and_deterministic():
    labels = ["a"] * 10 + ["b"] * 6
    tr, te = stratified_split(labels, 4)
    assert sorted(np.concatenate([tr, te]).tolist()) == list(range(16))
    assert [labels[i] for i in te].count("a") == 3 and [labels[i] for i in te].count("b") == 2
    tr2, te2 = stratified_split(labels, 4)
    assert tr.tolist() == tr2.tolist()


def test_synth_volumes_load(tmp_path):
    synth(tmp_path, count=1)
    assert load_npy(tmp_path / "sphere_shell_000.npy").dims == (16, 16, 16)
