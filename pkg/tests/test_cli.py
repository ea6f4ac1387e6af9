import json
from pathlib import Path

import numpy as np
import pytest

from morphodig import cli, pipeline, synth, tpsio


def run(argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def face_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("faces")
    rc = run(["synth", "--n", 10, "--seed", 3, "--mesh-size", 64, "--out", out])
    assert rc == 0
    return out


@pytest.fixture(scope="module")
def model_path(face_dir, tmp_path_factory):
    path = tmp_path_factory.mktemp("model") / "model.json"
    rc = run(["train", "--data", face_dir, "--out", path,
              "--epochs-projection", 40, "--epochs-refiner", 2,
              "--patch-size", 21, "--jitter", 2, "--seed", 0])
    assert rc == 0
    return path


def test_usage_errors_exit_1(capsys):
    with pytest.raises(SystemExit) as exc:
        run(["bogus-command"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        run(["gpa"])  # missing required arguments
    assert exc.value.code == 1
    assert "error:" in capsys.readouterr().err


def test_synth_outputs(face_dir):
    pgms = sorted(face_dir.glob("*.pgm"))
    assert len(pgms) == 10
    assert (face_dir / "face_000.mesh.json").exists()
    specs = tpsio.parse_tps((face_dir / "face_000.tps").read_text())
    assert len(specs) == 1
    assert specs[0].landmarks.shape == (72, 2)
    assert specs[0].image_name == "face_000.pgm"


def test_synth_deterministic(face_dir, tmp_path):
    again = tmp_path / "again"
    assert run(["synth", "--n", 10, "--seed", 3, "--mesh-size", 64,
                "--out", again]) == 0
    for name in ("face_000.pgm", "face_007.tps", "face_004.mesh.json"):
        assert (again / name).read_bytes() == (face_dir / name).read_bytes()


def test_train_writes_model_with_meta(model_path):
    doc = json.loads(model_path.read_text())
    assert doc["patch_size"] == 21
    assert doc["meta"]["n_faces"] == 10
    assert len(doc["meta"]["projection_loss"]) == 40
    model = pipeline.load_model(model_path)
    assert model.mesh_size == 64


def test_train_refuses_zero_projection_epochs(face_dir, tmp_path, capsys):
    rc = run(["train", "--data", face_dir, "--out", tmp_path / "m.json",
              "--epochs-projection", 0])
    assert rc == 1
    assert "projection" in capsys.readouterr().err


def test_train_empty_dir_exit_2(tmp_path, capsys):
    rc = run(["train", "--data", tmp_path, "--out", tmp_path / "m.json"])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_digitize_roundtrip(face_dir, model_path, tmp_path):
    out = tmp_path / "digitized.tps"
    assert run(["digitize", "--model", model_path, "--input", face_dir,
                "--out", out]) == 0
    specs = tpsio.parse_tps(out.read_text())
    assert len(specs) == 10
    # outputs land within the canvas and near the truths
    truth = tpsio.parse_tps((face_dir / "face_000.tps").read_text())[0].landmarks
    got = specs[0].landmarks
    assert np.sqrt(((got - truth) ** 2).sum(axis=1)).mean() < 10.0


def test_digitize_partial_failure_warns(face_dir, model_path, tmp_path, capsys):
    broken = tmp_path / "broken"
    broken.mkdir()
    for name in ("face_000.pgm", "face_000.mesh.json", "face_001.pgm"):
        (broken / name).write_bytes((face_dir / name).read_bytes())
    # face_001 has no mesh file at all
    out = tmp_path / "out.tps"
    assert run(["digitize", "--model", model_path, "--input", broken,
                "--out", out]) == 0
    err = capsys.readouterr().err
    assert "face_001" in err
    assert len(tpsio.parse_tps(out.read_text())) == 1


def test_digitize_no_inputs_exit_2(model_path, tmp_path):
    assert run(["digitize", "--model", model_path, "--input", tmp_path,
                "--out", tmp_path / "o.tps"]) == 2


def test_digitize_bad_model_exit_2(face_dir, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    assert run(["digitize", "--model", bad, "--input", face_dir,
                "--out", tmp_path / "o.tps"]) == 2


@pytest.fixture(scope="module")
def pop_tps(tmp_path_factory):
    """Two replicate TPS files over the same simulated individuals."""
    d = tmp_path_factory.mktemp("pop")
    rng = np.random.default_rng(5)
    t = synth.template()
    configs = [t + rng.normal(0, 6.0, size=t.shape) for _ in range(20)]
    pair = synth.make_replicates(configs, landmark_noise_sd=1.0, seed=1)
    (d / "a.tps").write_text(tpsio.write_tps(pair.rep1))
    (d / "b.tps").write_text(tpsio.write_tps(pair.rep2))
    return d / "a.tps", d / "b.tps"


def test_gpa_command(pop_tps, tmp_path):
    a, _ = pop_tps
    aligned = tmp_path / "aligned.tps"
    mean = tmp_path / "mean.csv"
    assert run(["gpa", "--tps", a, "--out-aligned", aligned,
                "--out-mean", mean]) == 0
    assert len(tpsio.parse_tps(aligned.read_text())) == 20
    lines = mean.read_text().splitlines()
    assert lines[0] == "x,y" and len(lines) == 73


def test_gpa_with_sliders(pop_tps, tmp_path):
    a, _ = pop_tps
    sliders = tmp_path / "sliders.csv"
    assert run(["schema", "--what", "sliders"]) == 0
    from morphodig.schema import default_sliders
    sliders.write_text(tpsio.write_sliders(default_sliders(False)))
    assert run(["gpa", "--tps", a, "--sliders", sliders,
                "--out-aligned", tmp_path / "al.tps",
                "--out-mean", tmp_path / "m.csv"]) == 0


def test_gpa_single_specimen_exit_2(tmp_path):
    one = tmp_path / "one.tps"
    one.write_text(tpsio.write_tps([tpsio.Specimen(synth.template())]))
    assert run(["gpa", "--tps", one, "--out-aligned", tmp_path / "a.tps",
                "--out-mean", tmp_path / "m.csv"]) == 2


def test_metrics_command(pop_tps, tmp_path):
    a, _ = pop_tps
    out = tmp_path / "metrics.csv"
    assert run(["metrics", "--tps", a, "--out", out]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "id,distinctiveness,asymmetry"
    assert len(lines) == 21
    vals = [float(x) for x in lines[1].split(",")[1:]]
    assert all(v >= 0 for v in vals)


def test_compare_command(pop_tps, tmp_path):
    a, b = pop_tps
    prefix = tmp_path / "cmp"
    assert run(["compare", "--tps-a", a, "--tps-b", b,
                "--out-prefix", prefix]) == 0
    anova = json.loads(Path(f"{prefix}_anova.json").read_text())
    assert 0.0 <= anova["repeatability"] <= 1.0
    corr = Path(f"{prefix}_correlations.csv").read_text().splitlines()
    assert corr[0] == "measure,scale,r,ci_lo,ci_hi,p"
    assert any(row.startswith("distinctiveness,raw") for row in corr)
    ell = Path(f"{prefix}_ellipses.csv").read_text().splitlines()
    assert len(ell) == 7  # header + 2 measures x 3 levels
    csv = Path(f"{prefix}_metrics.csv").read_text().splitlines()
    assert len(csv) == 21


def test_compare_mismatched_counts_exit_2(pop_tps, tmp_path):
    a, b = pop_tps
    specs = tpsio.parse_tps(b.read_text())[:5]
    short = tmp_path / "short.tps"
    short.write_text(tpsio.write_tps(specs))
    assert run(["compare", "--tps-a", a, "--tps-b", short,
                "--out-prefix", tmp_path / "x"]) == 2


def test_schema_pairs_and_table(capsys):
    assert run(["schema", "--what", "pairs"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "first,second" and len(out) == 34

    assert run(["schema"]) == 0
    table = capsys.readouterr().out.splitlines()
    assert len(table) == 73
    assert "anatomical" in table[1]


def test_schema_sliders_parse_back(capsys):
    assert run(["schema", "--what", "sliders", "--include-midpoints"]) == 0
    out = capsys.readouterr().out
    assert len(tpsio.parse_sliders(out).triplets) == 36
