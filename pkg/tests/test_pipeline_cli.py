import os

import numpy as np
import pytest

from dopinf.artifacts import load_blob, load_vector, read_record
from dopinf.cli import main
from dopinf.config import PipelineConfig
from dopinf.errors import RankDeficiencyError
from dopinf.pipeline import STAGES, probe_filename, reprobe, run_pipeline
from dopinf.postprocess import ProbeSet
from dopinf.synth import SynthSpec, generate_quadratic

NUMERIC_ARTIFACTS = ("A.blob", "F.blob", "c.blob", "Tr.blob",
                     "trajectory.blob", "Qhat.blob", "eigenvalues.blob",
                     "result.txt", "partition.txt", "probes.txt")


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    path = str(tmp_path_factory.mktemp("data") / "q.snp")
    generate_quadratic(SynthSpec(nx=150, nt=80, n_vars=2, r_true=3, seed=1),
                       path)
    return path


def config_for(dataset, out=None, **kw):
    kw.setdefault("probes", ProbeSet(((0, 3), (1, 149), (0, 75))))
    return PipelineConfig(data=dataset, output=out, nt_p=120, rank=3, **kw)


def read_bytes(path):
    with open(path, "rb") as f:
        return f.read()


def test_p1_vs_p4_identical_selection(dataset):
    r1 = run_pipeline(config_for(dataset, workers=1), write=False)[0]
    r4 = run_pipeline(config_for(dataset, workers=4), write=False)
    for res in r4:
        assert res.outcome.pair_opt == r1.outcome.pair_opt
        # train_err is itself a relative error; compared in absolute terms
        # because its relative value amplifies last-bit Gram differences.
        assert abs(res.outcome.train_err - r1.outcome.train_err) <= 1e-12
    a = r4[0]
    assert np.max(np.abs(a.gram - r1.gram)) <= 1e-10 * np.max(np.abs(r1.gram))
    assert np.max(np.abs(a.eigenvalues - r1.eigenvalues)) \
        <= 1e-10 * r1.eigenvalues[0]


def test_all_ranks_agree_and_probes_split(dataset):
    res = run_pipeline(config_for(dataset, workers=3), write=False)
    owned = sorted(s.position for r in res for s in r.probes)
    assert owned == [0, 1, 2]
    for r in res[1:]:
        assert np.array_equal(r.outcome.trajectory, res[0].outcome.trajectory)
        assert np.array_equal(r.Tr, res[0].Tr)


def test_artifacts_written(dataset, tmp_path):
    out = str(tmp_path / "run")
    run_pipeline(config_for(dataset, out, workers=2, save_field=True))
    rec = read_record(os.path.join(out, "result.txt"))
    for key in ("beta1", "beta2", "r", "train_err"):
        assert key in rec
    assert int(rec["r"]) == 3 and int(rec["d"]) == 3 + 6 + 1
    assert load_blob(os.path.join(out, "A.blob")).shape == (3, 3)
    assert load_blob(os.path.join(out, "F.blob")).shape == (3, 6)
    assert load_blob(os.path.join(out, "trajectory.blob")).shape == (120, 3)
    for pos, (j, g) in enumerate(((0, 3), (1, 149), (0, 75))):
        assert load_vector(os.path.join(
            out, probe_filename(pos, j, g))).shape == (120,)
    for rank in range(2):
        assert os.path.exists(os.path.join(out, f"field_rank{rank}.snp"))
        assert os.path.exists(os.path.join(out, f"means_rank{rank}.blob"))
    with open(os.path.join(out, "timing.csv"), encoding="utf-8") as f:
        lines = f.read().splitlines()
    assert lines[0] == "rank,stage,seconds"
    assert len(lines) == 1 + 2 * len(STAGES) + 1


def test_rerun_bit_identical(dataset, tmp_path):
    outs = [str(tmp_path / f"run{i}") for i in range(2)]
    for out in outs:
        run_pipeline(config_for(dataset, out, workers=3))
    names = list(NUMERIC_ARTIFACTS) + [
        f for f in os.listdir(outs[0]) if f.startswith(("probe_", "means_"))]
    for name in names:
        assert read_bytes(os.path.join(outs[0], name)) == \
            read_bytes(os.path.join(outs[1], name)), name


def test_reprobe_from_artifacts(dataset, tmp_path):
    out = str(tmp_path / "run")
    probes = ProbeSet(((0, 3), (1, 149), (0, 75)))
    run_pipeline(config_for(dataset, out, workers=3, scaling=True))
    series = reprobe(out, dataset, probes)
    for s in series:
        saved = load_vector(os.path.join(out, probe_filename(s.position, s.var,
                                                             s.index)))
        assert np.array_equal(s.values, saved)


def test_probe_series_close_to_data(dataset):
    # Data lies in a 3-dim affine subspace, so r=3 reproduces it closely over
    # the training window.
    from dopinf.data import read_header, read_rows
    res = run_pipeline(config_for(dataset, workers=2), write=False)
    header = read_header(dataset)
    for r in res:
        for s in r.probes:
            truth = read_rows(dataset, header, s.var, s.index, s.index + 1)[0]
            err = np.max(np.abs(s.values[:header.nt] - truth))
            assert err <= 1e-3 * np.max(np.abs(truth))


def test_rank_too_large_is_reported(dataset):
    cfg = PipelineConfig(data=dataset, rank=10, workers=2)
    with pytest.raises(RankDeficiencyError):
        run_pipeline(cfg, write=False)


def test_missing_data_path():
    with pytest.raises(FileNotFoundError):
        run_pipeline(PipelineConfig(data="/nonexistent/x.snp"))


# command line

def test_cli_missing_data_exit_2(tmp_path, capsys):
    missing = str(tmp_path / "nope.snp")
    assert main(["train", "--data", missing]) == 2
    assert missing in capsys.readouterr().err


def test_cli_bad_config_exit_2(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("workers = -3\n", encoding="utf-8")
    assert main(["train", "--config", str(cfg)]) == 2
    assert "workers" in capsys.readouterr().err


def test_cli_module_error_exit_1_with_rank(dataset, capsys):
    assert main(["train", "--data", dataset, "--rank", "10",
                 "--workers", "2"]) == 1
    err = capsys.readouterr().err
    assert "[rank " in err and "RankDeficiencyError" in err


def test_cli_dry_run_writes_nothing(dataset, tmp_path, capsys):
    out = tmp_path / "never"
    assert main(["train", "--data", dataset, "--output", str(out),
                 "--workers", "4", "--rank", "3", "--dry-run"]) == 0
    text = capsys.readouterr().out
    assert not out.exists()
    assert "partition rows per rank: 74, 74, 74, 78" in text
    assert "grid: 8 x 8 = 64 pairs" in text
    assert "d = 10" in text
    assert "K = 79" in text


def test_cli_end_to_end(tmp_path, capsys):
    data = str(tmp_path / "q.snp")
    assert main(["generate", "--kind", "quadratic", "--out", data,
                 "--nx", "120", "--nt", "60", "--seed", "2"]) == 0
    assert os.path.exists(data + ".truth.npz")
    cfg = tmp_path / "run.cfg"
    cfg.write_text("data = q.snp\nrank = 3\nnt_p = 90\nprobes = 0:5, 0:100\n"
                   "b1_num = 4\nb2_num = 4\n", encoding="utf-8")

    for p in (1, 2):
        assert main(["train", "--config", str(cfg), "--workers", str(p),
                     "--output", str(tmp_path / f"p{p}")]) == 0
    out = capsys.readouterr().out
    assert "beta1" in out and "train_err" in out

    assert main(["probe", "--config", str(cfg), "--output",
                 str(tmp_path / "p2"), "--var", "0", "--index", "100"]) == 0
    reprobed = load_vector(str(tmp_path / "p2" / "reprobe" /
                               probe_filename(0, 0, 100)))
    trained = load_vector(str(tmp_path / "p2" / probe_filename(1, 0, 100)))
    assert np.array_equal(reprobed, trained)

    csv_out = tmp_path / "cmp.csv"
    assert main(["report", str(tmp_path / "p1" / "timing.csv"),
                 str(tmp_path / "p2" / "timing.csv"), "--labels", "p1,p2",
                 "--csv-out", str(csv_out)]) == 0
    assert "speedup[p2]" in capsys.readouterr().out
    assert csv_out.read_text(encoding="utf-8").startswith("stage,")

    assert main(["verify", "--data", data, "--worker-counts", "1,3",
                 "--rank", "3"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "checks passed" in out


def test_cli_generate_diffusion(tmp_path):
    data = str(tmp_path / "d.snp")
    assert main(["generate", "--kind", "diffusion", "--out", data,
                 "--nx", "40", "--nt", "20", "--initial", "sine"]) == 0
    assert os.path.exists(data)


def test_cli_probe_argument_errors(dataset, tmp_path, capsys):
    out = str(tmp_path / "run")
    run_pipeline(config_for(dataset, out))
    assert main(["probe", "--data", dataset, "--output", out,
                 "--var", "0"]) == 2
    assert main(["probe", "--data", dataset, "--output",
                 str(tmp_path / "missing")]) == 2
    assert main(["report", str(tmp_path / "none.csv")]) == 2
