"""Command line interface.

Commands: ``gen-data``, ``fit``, ``eval``, ``reduce``, ``sweep`` and
``gradcheck``. All commands honor ``--seed``; two runs with the same config
and seed produce identical artifacts (the per-step ``wall_ms`` timing field
in the training log is the one exception). Failed checks exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import serialization
from .config import load_gen_config, load_run_config
from .data import gen_data, load_dataset, save_dataset
from .deepssm import init_deep_ssm
from .errors import StatetrimError
from .evaluation import evaluate_model
from .mor import ReductionMethod, error_bound, reduce_model
from .training import (
    TrainConfig,
    finite_difference_check,
    lru_hankel_sigma,
    train,
)

GRADCHECK_TOL = 1e-5
GRADCHECK_REG_STRENGTH = 0.05


def _fail(message: str, code: int = 2) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_data(args) -> int:
    spec = load_gen_config(args.config)
    dataset, info = gen_data(spec, args.seed)
    out = _out_dir(args.out)
    save_dataset(dataset, out)
    serialization.save_json(info, out / "teacher.json")
    print(f"wrote {len(dataset.sequences)} sequences to {out}")
    return 0


def cmd_fit(args) -> int:
    model_cfg, train_cfg = load_run_config(args.config)
    if args.seed is not None:
        train_cfg = dataclasses.replace(train_cfg, seed=args.seed)
    dataset = load_dataset(args.data)
    model = init_deep_ssm(model_cfg, train_cfg.seed)
    out = _out_dir(args.out)
    log_path = out / "train_log.jsonl"
    with log_path.open("w", encoding="utf-8") as log:
        def log_fn(record: dict) -> None:
            log.write(json.dumps(record) + "\n")

        history, state = train(model, dataset, train_cfg, log_fn=log_fn)
    serialization.save_model(model, out / "model.json")
    serialization.save_optimizer_state(state, out / "optimizer_state.json")
    serialization.save_json({"train": train_cfg.to_dict(), "model": model_cfg.to_dict()},
                            out / "run_config.json")
    if not args.no_plots:
        from .report import save_spectra_figure
        save_spectra_figure(model, out / "spectra.png")
    final = history[-1] if history else {}
    print(f"finished {len(history)} steps; final loss "
          f"{final.get('loss', float('nan')):.6g}; checkpoint at {out / 'model.json'}")
    return 0


def cmd_eval(args) -> int:
    model = serialization.load_model(args.checkpoint)
    dataset = load_dataset(args.data)
    result = evaluate_model(model, dataset)
    print(f"{'channel':>8} {'fit':>10} {'rmse':>12} {'nrmse':>10}")
    for i in range(result.fit.size):
        print(f"{i + 1:>8} {result.fit[i]:>10.3f} {result.rmse[i]:>12.6g} "
              f"{result.nrmse[i]:>10.4f}")
    print(f"average fit: {result.average_fit:.3f}")
    print(json.dumps(result.to_dict()))
    if args.out:
        out = _out_dir(args.out)
        serialization.save_json(result.to_dict(), out / "metrics.json")
        if not args.no_plots:
            from .report import save_spectra_figure
            save_spectra_figure(model, out / "spectra.png")
    return 0


def cmd_reduce(args) -> int:
    model = serialization.load_model(args.checkpoint)
    method = ReductionMethod(args.method)
    reduced, reports = reduce_model(model, args.order, method)
    out = _out_dir(args.out)
    serialization.save_model(reduced, out / "model_reduced.json")
    serialization.save_json([r.to_dict() for r in reports], out / "reduction_report.json")
    for i, r in enumerate(reports):
        print(f"layer {i + 1}: {r.original_order} -> {r.retained_order} states, "
              f"peak error est {r.hinf_error_estimate:.3e}"
              + (f", bound {r.bound:.3e}" if r.bound is not None else ""))
    return 0


def _sweep_rows(model, dataset, methods, hinf_grid: int = 256):
    from .linalg import HankelSpectrum

    n_x = min(layer.lru.n_x for layer in model.layers)
    baseline = evaluate_model(model, dataset)
    sigmas = [HankelSpectrum(lru_hankel_sigma(layer.lru)) for layer in model.layers]
    rows = []
    for method in methods:
        for r in range(n_x, -1, -1):
            if r == n_x:
                # identity reduction: reuse the checkpoint so the row
                # reproduces plain eval metrics exactly
                result = baseline
            else:
                reduced, _ = reduce_model(model, r, method, hinf_grid=hinf_grid)
                result = evaluate_model(reduced, dataset)
            bound = sum(error_bound(s, min(r, len(s))) for s in sigmas) \
                if method.balanced else None
            rows.append({
                "method": method.value,
                "r": r,
                "removed": n_x - r,
                "fit": [float(f) for f in result.fit],
                "average_fit": result.average_fit,
                "bound": bound,
            })
    return rows, baseline


def _sweep_summary(rows, baseline_fit: float, threshold: float = 1.0) -> dict:
    summary = {}
    for method in sorted({row["method"] for row in rows}):
        removable = 0
        for row in sorted((r for r in rows if r["method"] == method),
                          key=lambda r: r["removed"]):
            if row["average_fit"] >= baseline_fit - threshold:
                removable = row["removed"]
            else:
                break
        summary[method] = removable
    return {"baseline_average_fit": baseline_fit,
            "fit_drop_threshold": threshold,
            "max_removed_within_threshold": summary}


def cmd_sweep(args) -> int:
    model = serialization.load_model(args.checkpoint)
    dataset = load_dataset(args.data)
    methods = [ReductionMethod(m) for m in (args.method or ["mt", "msp", "bt", "bsp"])]
    rows, baseline = _sweep_rows(model, dataset, methods)
    out = _out_dir(args.out)
    n_out = len(rows[0]["fit"])
    with (out / "sweep.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "r", "removed"]
                        + [f"fit_ch{i + 1}" for i in range(n_out)]
                        + ["average_fit", "bound"])
        for row in rows:
            writer.writerow([row["method"], row["r"], row["removed"]]
                            + [repr(f) for f in row["fit"]]
                            + [repr(row["average_fit"]),
                               "" if row["bound"] is None else repr(row["bound"])])
    summary = _sweep_summary(rows, baseline.average_fit)
    serialization.save_json(summary, out / "sweep_summary.json")
    if not args.no_plots:
        from .report import save_sweep_figure
        save_sweep_figure(rows, out / "sweep.png")
    print(json.dumps(summary))
    return 0


def cmd_gradcheck(args) -> int:
    model_cfg, train_cfg = load_run_config(args.config)
    if args.seed is not None:
        train_cfg = dataclasses.replace(train_cfg, seed=args.seed)
    model = init_deep_ssm(model_cfg, train_cfg.seed)
    rng = np.random.default_rng(np.random.SeedSequence([train_cfg.seed, 1]))
    t = train_cfg.subseq_len
    batch = (rng.standard_normal((1, t, model_cfg.n_in)),
             rng.standard_normal((1, t, model_cfg.n_out)))
    overall = 0.0
    for kind in ("none", "modal_l1", "hankel_nuclear", "hankel_l2"):
        strength = 0.0 if kind == "none" else (
            train_cfg.reg_strength if train_cfg.reg_strength > 0
            else GRADCHECK_REG_STRENGTH)
        cfg = dataclasses.replace(train_cfg, reg_kind=kind, reg_strength=strength)
        worst = finite_difference_check(model, batch, cfg)
        kind_worst = max(worst.values())
        overall = max(overall, kind_worst)
        status = "ok" if kind_worst <= GRADCHECK_TOL else "FAIL"
        print(f"{kind:>16}: worst rel err {kind_worst:.3e}  [{status}]")
    print(f"overall worst relative error: {overall:.3e} (tolerance {GRADCHECK_TOL:g})")
    return 0 if overall <= GRADCHECK_TOL else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="statetrim",
        description="Train deep recurrent state-space models and reduce their order.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset with a known teacher")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("fit", help="train a model on a dataset directory")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("reduce", help="apply one reduction to a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--method", required=True, choices=["mt", "msp", "bt", "bsp"])
    p.add_argument("--order", required=True, type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("sweep", help="evaluate reductions for every retained order")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method", action="append",
                   choices=["mt", "msp", "bt", "bsp"], default=None)
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", help="compare analytic gradients with finite differences")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StatetrimError as exc:
        return _fail(str(exc))
    except FileNotFoundError as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
