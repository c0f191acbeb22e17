import csv
import json
import math

import numpy as np
import pytest

from fctn_wopt.experiment import (
    ExperimentConfig,
    from_work_layout,
    run_experiment,
    summarize,
    to_work_layout,
)
from fctn_wopt.io import write_tensor
from fctn_wopt.network import FactorSet, RankMatrix, factor_shape, fctn_compose


def low_rank_image(seed=0, dims=(6, 6, 6), rank=2):
    rng = np.random.default_rng(seed)
    r = RankMatrix.full(len(dims), rank)
    x = fctn_compose(FactorSet([rng.normal(size=factor_shape(dims, r, k)) for k in range(1, len(dims) + 1)], dims, r))
    return 255 * (x - x.min()) / (x.max() - x.min())


def test_layout_round_trip():
    x = np.random.default_rng(0).normal(size=(16, 16))
    spec = {"dims": [4, 4, 4, 4], "permutation": [1, 3, 2, 4]}
    y = to_work_layout(x, spec)
    assert y.shape == (4, 4, 4, 4)
    assert np.array_equal(from_work_layout(y, spec, x.shape), x)
    assert to_work_layout(x, None) is x


def test_sweep_writes_records_and_csv(tmp_path):
    truth = low_rank_image()
    cfg = ExperimentConfig(input="unused", ranks=2, maxiter=15, output_dir=str(tmp_path / "out"))
    out = run_experiment(cfg, truth)
    finals = [r for r in out["records"] if r["type"] == "final"]
    assert len(finals) == 9
    assert [f["sampling_rate"] for f in finals] == [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
    with open(out["csv_path"]) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 9
    assert set(rows[0]) == {"method", "sampling_rate", "mean_psnr", "mean_ssim", "n"}
    lines = out["records_path"].read_text().splitlines()
    assert len(lines) == len(out["records"])
    for line in lines:
        json.loads(line)
    meta = json.loads((tmp_path / "out" / "meta.json").read_text())
    assert meta["mask_rng"]


def test_rate_one_is_exact(tmp_path):
    truth = low_rank_image(1)
    cfg = ExperimentConfig(input="unused", ranks=2, sampling_rates=[1.0], maxiter=5, output_dir=str(tmp_path))
    out = run_experiment(cfg, truth)
    final = out["records"][-1]
    assert final["psnr"] == math.inf
    assert final["rel_error"] == 0.0
    with open(out["csv_path"]) as fh:
        assert float(next(csv.DictReader(fh))["mean_psnr"]) == 99.0


def test_psnr_rises_with_sampling(tmp_path):
    truth = low_rank_image(2, dims=(8, 8, 8), rank=2)
    cfg = ExperimentConfig(input="unused", ranks=2, sampling_rates=[0.1, 0.3, 0.5, 0.7, 0.9],
                           maxiter=200, output_dir=str(tmp_path))
    rows = run_experiment(cfg, truth)["summary"]
    psnr = [r["mean_psnr"] for r in rows]
    inversions = sum(b < a for a, b in zip(psnr, psnr[1:]))
    assert inversions <= 1
    assert psnr[-1] > psnr[0]


def test_rerun_is_deterministic(tmp_path):
    truth = low_rank_image(3)
    cfg = ExperimentConfig(input="unused", ranks=2, sampling_rates=[0.4], seeds=[0, 1], maxiter=20,
                           output_dir=str(tmp_path))
    a = run_experiment(cfg, truth)["records"]
    b = run_experiment(cfg, truth)["records"]
    strip = lambda rs: [{k: v for k, v in r.items() if k not in ("elapsed_ms", "wall_ms")} for r in rs]
    assert strip(a) == strip(b)


def test_parallel_matches_serial(tmp_path, monkeypatch):
    truth = low_rank_image(4)
    cfg = ExperimentConfig(input="unused", ranks=2, sampling_rates=[0.3, 0.6], seeds=[0, 1], maxiter=10,
                           output_dir=str(tmp_path))
    serial = run_experiment(cfg, truth)["records"]
    monkeypatch.setenv("FCTN_WOPT_JOBS", "3")
    parallel = run_experiment(cfg, truth)["records"]
    strip = lambda rs: [{k: v for k, v in r.items() if k not in ("elapsed_ms", "wall_ms")} for r in rs]
    assert strip(serial) == strip(parallel)


def test_failed_job_is_recorded(tmp_path):
    truth = low_rank_image(5)
    cfg = ExperimentConfig(input="unused", methods={"ok": 2, "bad": [[0, 2], [2, 0]]},
                           sampling_rates=[0.5], maxiter=5, output_dir=str(tmp_path))
    out = run_experiment(cfg, truth)
    finals = {r["method"]: r for r in out["records"] if r["type"] == "final"}
    assert finals["bad"]["status"] == "error"
    assert "order" in finals["bad"]["error"]
    assert finals["ok"]["status"] != "error"
    assert [r["method"] for r in out["summary"]] == ["ok"]


def test_config_from_json(tmp_path):
    write_tensor(tmp_path / "x.dten", low_rank_image(6))
    (tmp_path / "c.json").write_text(json.dumps({"input": "x.dten", "ranks": {"tr": 2},
                                                 "sampling_rates": [0.5], "maxiter": 5}))
    cfg = ExperimentConfig.from_json(tmp_path / "c.json")
    assert cfg.input == str(tmp_path / "x.dten")
    out = run_experiment(cfg)
    assert out["records_path"].parent == tmp_path / "results"
    (tmp_path / "bad.json").write_text(json.dumps({"input": "x.dten", "rankz": 2}))
    with pytest.raises(ValueError):
        ExperimentConfig.from_json(tmp_path / "bad.json")
    with pytest.raises(ValueError):
        ExperimentConfig(input="x", sampling_rates=[0.0])


def test_summarize_averages_seeds():
    recs = [
        {"type": "final", "method": "m", "sampling_rate": 0.5, "psnr": 10.0, "ssim": 0.2, "status": "max-iters"},
        {"type": "final", "method": "m", "sampling_rate": 0.5, "psnr": 20.0, "ssim": 0.4, "status": "max-iters"},
        {"type": "iter", "method": "m", "sampling_rate": 0.5},
    ]
    (row,) = summarize(recs)
    assert row["mean_psnr"] == 15.0 and row["n"] == 2
    assert row["mean_ssim"] == pytest.approx(0.3)
