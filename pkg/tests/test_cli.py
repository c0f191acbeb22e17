import json

import numpy as np
import pytest

from fctn_wopt.cli import main
from fctn_wopt.io import read_tensor, write_tensor
from fctn_wopt.network import FactorSet, RankMatrix, factor_shape, fctn_compose


@pytest.fixture
def workspace(tmp_path):
    rng = np.random.default_rng(0)
    r = RankMatrix.full(3, 2)
    dims = (5, 4, 6)
    x = fctn_compose(FactorSet([rng.normal(size=factor_shape(dims, r, k)) for k in (1, 2, 3)], dims, r))
    write_tensor(tmp_path / "truth.dten", x)
    (tmp_path / "ranks.json").write_text("2")
    return tmp_path, x


def last_json(capsys):
    return json.loads(capsys.readouterr().out.strip().splitlines()[-1])


def test_mask_command(workspace, capsys):
    d, _ = workspace
    assert main(["mask", "--dims", "5,4,6", "--rate", "0.5", "--seed", "3", "--out", str(d / "m.dten")]) == 0
    info = last_json(capsys)
    m = read_tensor(d / "m.dten")
    assert m.shape == (5, 4, 6)
    assert info["observed"] == 60 == int(m.sum())


def test_complete_command(workspace, capsys):
    d, x = workspace
    main(["mask", "--dims", "5,4,6", "--rate", "0.6", "--seed", "1", "--out", str(d / "m.dten")])
    m = read_tensor(d / "m.dten")
    write_tensor(d / "obs.dten", x * m)
    rc = main(["complete", "--input", str(d / "obs.dten"), "--mask", str(d / "m.dten"), "--ranks",
               str(d / "ranks.json"), "--out", str(d / "rec.dten"), "--maxiter", "30",
               "--truth", str(d / "truth.dten"), "--report", str(d / "rep.jsonl")])
    assert rc == 0
    rec = read_tensor(d / "rec.dten")
    assert np.array_equal(rec[m == 1], x[m == 1])
    lines = [json.loads(s) for s in (d / "rep.jsonl").read_text().splitlines()]
    assert lines[0]["type"] == "iter" and lines[0]["iter"] == 0
    final = lines[-1]
    assert final["type"] == "final"
    assert {"status", "observed_rel_residual", "psnr", "ssim", "rel_error", "wall_ms", "n_params"} <= set(final)


def test_complete_full_mask_matches_decompose(workspace, capsys):
    d, x = workspace
    main(["mask", "--dims", "5,4,6", "--rate", "1.0", "--out", str(d / "ones.dten")])
    common = ["--ranks", str(d / "ranks.json"), "--maxiter", "40", "--seed", "2"]
    assert main(["complete", "--input", str(d / "truth.dten"), "--mask", str(d / "ones.dten"),
                 "--out", str(d / "c.dten"), "--report", str(d / "c.jsonl"), *common]) == 0
    assert main(["decompose", "--input", str(d / "truth.dten"), "--out", str(d / "d.dten"),
                 "--factors-dir", str(d / "factors"), "--report", str(d / "d.jsonl"), *common]) == 0
    assert np.array_equal(read_tensor(d / "c.dten"), x)
    c = json.loads((d / "c.jsonl").read_text().splitlines()[-1])
    dd = json.loads((d / "d.jsonl").read_text().splitlines()[-1])
    assert abs(c["observed_rel_residual"] - dd["observed_rel_residual"]) < 1e-6
    factors = sorted((d / "factors").glob("factor_*.dten"))
    assert len(factors) == 3
    assert read_tensor(factors[1]).shape == (2, 4, 2)


def test_metrics_identical(workspace, capsys):
    d, _ = workspace
    assert main(["metrics", "--truth", str(d / "truth.dten"), "--estimate", str(d / "truth.dten"), "--cap"]) == 0
    out = last_json(capsys)
    assert out["rel_error"] == 0.0
    assert out["psnr"] == 99.0
    assert abs(out["ssim"] - 1.0) < 1e-12


def test_convert_command(tmp_path, capsys):
    (tmp_path / "x.csv").write_text("1,2,3,4,5,6\n")
    assert main(["convert", "--from-csv", str(tmp_path / "x.csv"), "--dims", "3,2", "--out",
                 str(tmp_path / "x.dten")]) == 0
    np.testing.assert_array_equal(read_tensor(tmp_path / "x.dten"), [[1, 2], [3, 4], [5, 6]])


def test_experiment_command(workspace, capsys):
    d, _ = workspace
    (d / "exp.json").write_text(json.dumps({"input": "truth.dten", "ranks": 2, "sampling_rates": [0.5, 0.9],
                                            "maxiter": 10, "peak": 10.0}))
    assert main(["experiment", "--config", str(d / "exp.json")]) == 0
    out = last_json(capsys)
    assert out["failed_jobs"] == 0
    assert (d / "results" / "summary.csv").exists()


def test_bad_file_is_one_line_error(tmp_path, capsys):
    (tmp_path / "bad.dten").write_bytes(b"XTEN" + b"\0" * 20)
    rc = main(["metrics", "--truth", str(tmp_path / "bad.dten"), "--estimate", str(tmp_path / "bad.dten")])
    assert rc != 0
    err = capsys.readouterr().err.strip()
    assert len(err.splitlines()) == 1
    assert "magic" in err


def test_missing_file_is_error(tmp_path, capsys):
    rc = main(["metrics", "--truth", str(tmp_path / "nope.dten"), "--estimate", str(tmp_path / "nope.dten")])
    assert rc != 0
    assert len(capsys.readouterr().err.strip().splitlines()) == 1


def test_rank_order_mismatch_is_error(workspace, capsys):
    d, _ = workspace
    (d / "r2.json").write_text("[[0, 2], [2, 0]]")
    main(["mask", "--dims", "5,4,6", "--rate", "1.0", "--out", str(d / "ones.dten")])
    rc = main(["complete", "--input", str(d / "truth.dten"), "--mask", str(d / "ones.dten"),
               "--ranks", str(d / "r2.json"), "--out", str(d / "o.dten")])
    assert rc == 1
    assert "order" in capsys.readouterr().err
