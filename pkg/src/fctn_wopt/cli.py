"""Command-line entry point: ``fctn-wopt <command> ...``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .completion import CompletionConfig, complete, decompose_full
from .experiment import ExperimentConfig, run_experiment
from .io import gen_mask, load_ranks, read_csv_tensor, read_tensor, write_tensor
from .lbfgs import LbfgsOptions
from .metrics import evaluate
from .network import fctn_compose
from .objective import Problem


def _dims(text: str) -> list[int]:
    return [int(v) for v in text.replace("x", ",").split(",") if v.strip()]


def _solver_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ranks", required=True, help="JSON file: N x N matrix, scalar, or {\"tr\": r}")
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--maxiter", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--memory", type=int, default=10, help="L-BFGS history pairs")
    p.add_argument("--n-starts", type=int, default=1)
    p.add_argument("--probe-iters", type=int, default=0)
    p.add_argument("--report", help="write per-iteration and final records as JSON lines")


def _config(args, order: int) -> CompletionConfig:
    return CompletionConfig(
        load_ranks(args.ranks, order), seed=args.seed,
        lbfgs=LbfgsOptions(memory=args.memory, max_iters=args.maxiter),
        outer_tol=args.tol, outer_max_iters=args.maxiter,
        n_starts=args.n_starts, probe_iters=args.probe_iters,
    )


def _write_report(path, result, extra: dict) -> None:
    rep = result.report
    with open(path, "w") as fh:
        for it in rep.iterations:
            fh.write(json.dumps({"type": "iter", **it}) + "\n")
        final = {
            "type": "final", "status": rep.status,
            "observed_rel_residual": rep.observed_rel_residual,
            "iterations": rep.total_iterations, "n_evals": rep.n_evals,
            "wall_ms": rep.wall_ms, "n_params": rep.n_params,
            "lbfgs_history_bytes": rep.lbfgs_history_bytes, **extra,
        }
        fh.write(json.dumps(final) + "\n")


def cmd_complete(args) -> int:
    observed = read_tensor(args.input)
    mask = read_tensor(args.mask)
    cfg = _config(args, observed.ndim)
    truth = read_tensor(args.truth) if args.truth else None
    res = complete(Problem(observed, mask, cfg.ranks), cfg, truth=truth)
    write_tensor(args.out, res.recovered)
    extra = {"seed": args.seed}
    if truth is not None:
        extra.update(evaluate(truth, res.recovered, args.peak).to_dict())
    if args.report:
        _write_report(args.report, res, extra)
    print(json.dumps({"status": res.report.status, "observed_rel_residual": res.report.observed_rel_residual}))
    return 0


def cmd_decompose(args) -> int:
    x = read_tensor(args.input)
    cfg = _config(args, x.ndim)
    res = decompose_full(x, cfg)
    if args.out:
        write_tensor(args.out, fctn_compose(res.factors))
    if args.factors_dir:
        d = Path(args.factors_dir)
        d.mkdir(parents=True, exist_ok=True)
        for k, g in enumerate(res.factors.factors, start=1):
            write_tensor(d / f"factor_{k}.dten", g)
    if args.report:
        _write_report(args.report, res, {"seed": args.seed})
    print(json.dumps({"status": res.report.status, "observed_rel_residual": res.report.observed_rel_residual}))
    return 0


def cmd_mask(args) -> int:
    m = gen_mask(_dims(args.dims), args.rate, args.seed)
    write_tensor(args.out, m.mask)
    print(json.dumps({"observed": m.n_observed, "rate": m.rate, "seed": m.seed, "rng": m.rng}))
    return 0


def cmd_metrics(args) -> int:
    truth = read_tensor(args.truth)
    est = read_tensor(args.estimate)
    rep = evaluate(truth, est, args.peak, args.dynamic_range)
    print(json.dumps(rep.to_dict(cap=args.cap)))
    return 0


def cmd_experiment(args) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    out = run_experiment(cfg)
    failed = sum(1 for r in out["records"] if r["type"] == "final" and r.get("status") == "error")
    print(json.dumps({"records": str(out["records_path"]), "summary": str(out["csv_path"]), "failed_jobs": failed}))
    return 0


def cmd_convert(args) -> int:
    x = read_csv_tensor(args.from_csv, _dims(args.dims) if args.dims else None)
    write_tensor(args.out, x)
    print(json.dumps({"dims": list(x.shape)}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fctn-wopt", description="FCTN weighted-optimization tensor completion")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("complete", help="complete a partially observed tensor")
    p.add_argument("--input", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--truth", help="ground truth, for metrics in the report")
    p.add_argument("--peak", type=float, default=255.0)
    _solver_args(p)
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("decompose", help="fit an FCTN to a fully observed tensor")
    p.add_argument("--input", required=True)
    p.add_argument("--out", help="write the composed approximation")
    p.add_argument("--factors-dir", help="write factor_k.dten files here")
    _solver_args(p)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("mask", help="generate a random observation mask")
    p.add_argument("--dims", required=True, help="e.g. 16,16,16,16")
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("metrics", help="relative error, MSE, PSNR and SSIM")
    p.add_argument("--truth", required=True)
    p.add_argument("--estimate", required=True)
    p.add_argument("--peak", type=float, default=255.0)
    p.add_argument("--dynamic-range", type=float, default=None, help="SSIM L (defaults to --peak)")
    p.add_argument("--cap", action="store_true", help="cap PSNR at 99 dB as in tables")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("experiment", help="run a sampling-rate sweep from a JSON config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("convert", help="flat CSV to tensor file")
    p.add_argument("--from-csv", required=True)
    p.add_argument("--dims", help="dims, unless the CSV has a '# dims: ...' header")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_convert)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, FloatingPointError, KeyError) as exc:
        print(f"fctn-wopt {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
