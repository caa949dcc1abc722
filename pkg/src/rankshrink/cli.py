"""Command-line entry points: complete, simulate, and image subcommands.

Every invocation writes a manifest JSON echoing the full configuration and
seed, so a run can be reproduced byte for byte from its manifest. Exit codes:
0 success, 1 runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time

import numpy as np

from . import __version__, experiments, matrix, ppm, tensor
from .engine import ChainConfig
from .errors import RankShrinkError
from .priors import PriorSpec
from .rand import KIND_MASK, RngStream, make_stream_id
from .store import (
    ObservedTensor,
    csv_header,
    holdout_split,
    read_observations_csv,
)

FMT = ".17g"

_CLI_PRIORS = {
    "gaussian": "gaussian",
    "gamma": "gamma",
    "horseshoe": "horseshoe",
    "horseshoe-plus": "horseshoe_plus",
    "igg": "igg",
}


def _fmt(x) -> str:
    return format(float(x), FMT)


def _write_manifest(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_dense_csv(path, arr: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        for row in arr:
            writer.writerow([_fmt(v) for v in row])


def _write_coord_csv(path, arr: np.ndarray) -> None:
    dims = arr.shape
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(csv_header(len(dims)))
        flat = arr.reshape(-1)
        for pos, idx in enumerate(np.ndindex(*dims)):
            writer.writerow(list(idx) + [_fmt(flat[pos])])


def _write_estimate_array(path, arr: np.ndarray) -> None:
    if arr.ndim == 2:
        _write_dense_csv(path, arr)
    else:
        _write_coord_csv(path, arr)


def _write_diagnostics(path, est) -> None:
    k = est.gamma_draws.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["sample", "sigma2", "train_se"] + [f"gamma_{j + 1}" for j in range(k)]
        )
        for s in range(est.n_samples_used):
            writer.writerow(
                [s, _fmt(est.sigma2_draws[s]), _fmt(est.train_se_draws[s])]
                + [_fmt(g) for g in est.gamma_draws[s]]
            )


def _write_rows_csv(path, rows: list[dict], columns: list[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            out = []
            for c in columns:
                v = row[c]
                out.append(_fmt(v) if isinstance(v, float) else v)
            writer.writerow(out)


def _prior_spec_from_args(parser, args) -> PriorSpec:
    family = _CLI_PRIORS[args.prior]
    if family == "gamma" and args.beta is None:
        parser.error("--beta is required for --prior gamma")
    kwargs = {}
    if family == "gaussian":
        kwargs["v0"] = args.v0
    elif family == "gamma":
        kwargs["beta"] = args.beta
        kwargs["gamma_paper_compat"] = args.gamma_paper_compat
    elif family == "igg":
        kwargs["igg_a"] = args.igg_a
        kwargs["igg_b"] = args.igg_b
        kwargs["igg_c"] = args.igg_c
    return PriorSpec(family, **kwargs)


def _prior_payload(spec: PriorSpec) -> dict:
    return {
        "family": spec.family,
        "v0": spec.v0,
        "beta": spec.beta,
        "igg_a": spec.igg_a,
        "igg_b": spec.igg_b,
        "igg_c": spec.igg_c,
        "gamma_paper_compat": spec.gamma_paper_compat,
    }


def _config_payload(config: ChainConfig) -> dict:
    return {
        "k": config.k,
        "burn_in": config.burn_in,
        "thin": config.thin,
        "n_samples": config.n_samples,
        "seed": config.seed,
        "a_sigma": config.a_sigma,
        "b_sigma": config.b_sigma,
        "use_intercepts": config.use_intercepts,
        "exact_reductions": config.exact_reductions,
    }


def _add_sampler_flags(
    sp, *, k=20, burnin=500, thin=5, samples=100, intercepts="on"
) -> None:
    sp.add_argument("--prior", required=True, choices=sorted(_CLI_PRIORS))
    sp.add_argument("--k", type=int, default=k, help="number of factor columns")
    sp.add_argument("--burnin", type=int, default=burnin)
    sp.add_argument("--thin", type=int, default=thin)
    sp.add_argument("--samples", type=int, default=samples)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--a-sigma", type=float, default=1.0)
    sp.add_argument("--b-sigma", type=float, default=1.0)
    sp.add_argument("--v0", type=float, default=10.0, help="gaussian column variance")
    sp.add_argument("--beta", type=float, default=None, help="gamma prior rate")
    sp.add_argument("--igg-a", type=float, default=None)
    sp.add_argument("--igg-b", type=float, default=None)
    sp.add_argument("--igg-c", type=float, default=None)
    sp.add_argument("--gamma-paper-compat", action="store_true")
    sp.add_argument("--intercepts", choices=["on", "off"], default=intercepts)
    sp.add_argument("--out-dir", default=".")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rankshrink",
        description="Bayesian low-rank matrix/tensor completion with shrinkage priors",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("complete", help="complete a partially observed array")
    sp.add_argument("--input", required=True, help="observations CSV (i1,...,iD,value)")
    sp.add_argument("--order", type=int, required=True)
    sp.add_argument("--dims", required=True, help="comma-separated dimension sizes")
    sp.add_argument("--one-based", action="store_true", help="input indices start at 1")
    sp.add_argument("--holdout-fraction", type=float, default=0.0)
    _add_sampler_flags(sp)

    sp = sub.add_parser("simulate", help="run a scripted synthetic experiment")
    sp.add_argument("--protocol", required=True, choices=experiments.PROTOCOLS)
    sp.add_argument("--trials", type=int, default=20)
    sp.add_argument("--priors", required=True, help="comma-separated prior names")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--k", type=int, default=None)
    sp.add_argument("--burnin", type=int, default=None)
    sp.add_argument("--thin", type=int, default=None)
    sp.add_argument("--samples", type=int, default=None)
    sp.add_argument("--out-dir", default=".")

    sp = sub.add_parser("image", help="mask and complete a binary PPM image")
    sp.add_argument("--input", required=True, help="binary PPM (P6, 8-bit)")
    sp.add_argument("--missing", type=float, required=True)
    sp.add_argument(
        "--per-channel-mask",
        action="store_true",
        help="drop channels independently instead of whole pixels",
    )
    _add_sampler_flags(sp, k=15, burnin=300, thin=2, samples=100)
    return parser


def _chain_config_from_args(args, use_intercepts: bool) -> ChainConfig:
    return ChainConfig(
        k=args.k,
        burn_in=args.burnin,
        thin=args.thin,
        n_samples=args.samples,
        seed=args.seed,
        a_sigma=args.a_sigma,
        b_sigma=args.b_sigma,
        use_intercepts=use_intercepts,
    )


def cmd_complete(parser, args) -> int:
    t0 = time.perf_counter()
    dims = tuple(int(v) for v in args.dims.split(","))
    if args.order != len(dims):
        parser.error(f"--order {args.order} does not match --dims {args.dims}")
    spec = _prior_spec_from_args(parser, args)
    config = _chain_config_from_args(args, args.intercepts == "on")
    obs = read_observations_csv(args.input, dims, one_based=args.one_based)
    test = None
    if args.holdout_fraction > 0.0:
        train, test = holdout_split(obs, args.holdout_fraction, args.seed)
    else:
        train = obs
    runner = matrix.run if args.order == 2 else tensor.run
    est = runner(train, config, spec)
    out = args.out_dir
    _write_estimate_array(f"{out}/theta_hat.csv", est.theta_hat)
    _write_estimate_array(f"{out}/y_hat.csv", est.y_hat)
    _write_diagnostics(f"{out}/diagnostics.csv", est)
    outputs = ["theta_hat.csv", "y_hat.csv", "diagnostics.csv", "manifest.json"]
    holdout_payload = None
    if test is not None and test.n_obs > 0:
        metrics = experiments.holdout_metrics(est.y_hat, test)
        rows = [{"metric": k, "value": float(v)} for k, v in metrics.items()]
        rows.append({"metric": "n_test", "value": float(test.n_obs)})
        _write_rows_csv(f"{out}/holdout.csv", rows, ["metric", "value"])
        outputs.append("holdout.csv")
        holdout_payload = metrics | {"n_test": test.n_obs}
    _write_manifest(
        f"{out}/manifest.json",
        {
            "command": "complete",
            "version": __version__,
            "input": args.input,
            "order": args.order,
            "dims": list(dims),
            "one_based": args.one_based,
            "n_obs": obs.n_obs,
            "holdout_fraction": args.holdout_fraction,
            "holdout": holdout_payload,
            "prior": _prior_payload(spec),
            "config": _config_payload(config),
            "floor_events": est.floor_events,
            "sigma2_mean": est.sigma2_mean,
            "outputs": outputs,
            "wall_time_s": time.perf_counter() - t0,
        },
    )
    print(f"wrote {', '.join(outputs)} to {out}")
    return 0


def cmd_simulate(parser, args) -> int:
    t0 = time.perf_counter()
    priors = [p.strip() for p in args.priors.split(",") if p.strip()]
    for p in priors:
        if p not in _CLI_PRIORS:
            parser.error(
                f"unknown prior {p!r}; valid names: {', '.join(sorted(_CLI_PRIORS))}"
            )
    overrides = {}
    for name, key in [
        ("k", "k"),
        ("burnin", "burn_in"),
        ("thin", "thin"),
        ("samples", "n_samples"),
    ]:
        val = getattr(args, name)
        if val is not None:
            overrides[key] = val
    result = experiments.run_table(
        args.protocol, args.trials, priors, overrides, base_seed=args.seed
    )
    out = args.out_dir
    cols = [
        "protocol",
        "prior",
        "sweep_param",
        "sweep_value",
        "n_trials",
        "mean_se",
        "mc_se",
        "wall_time_s",
    ]
    _write_rows_csv(f"{out}/results.csv", result.summary_rows, cols)
    long_cols = [
        "protocol",
        "prior",
        "sweep_param",
        "sweep_value",
        "trial",
        "seed",
        "se",
        "se_total",
        "wall_time_s",
    ]
    _write_rows_csv(f"{out}/results_long.csv", result.trial_rows, long_cols)
    outputs = ["results.csv", "results_long.csv", "manifest.json"]
    if result.scree_rows:
        _write_rows_csv(
            f"{out}/scree.csv",
            result.scree_rows,
            ["protocol", "prior", "sv_index", "mean_value"],
        )
        outputs.append("scree.csv")
    _write_manifest(
        f"{out}/manifest.json",
        {
            "command": "simulate",
            "version": __version__,
            "protocol": args.protocol,
            "trials": args.trials,
            "priors": priors,
            "seed": args.seed,
            "overrides": overrides,
            "outputs": outputs,
            "wall_time_s": time.perf_counter() - t0,
        },
    )
    print(f"wrote {', '.join(outputs)} to {out}")
    return 0


def _mask_pixels(image: np.ndarray, missing: float, per_channel: bool, seed: int):
    """Entries kept after masking; whole pixels are dropped by default."""
    h, w, _ = image.shape
    gen = RngStream(seed, make_stream_id(KIND_MASK)).gen
    if per_channel:
        total = h * w * 3
        n_missing = int(round(missing * total))
        keep = np.ones(total, dtype=bool)
        keep[gen.choice(total, size=n_missing, replace=False)] = False
        keep = keep.reshape(h, w, 3)
    else:
        total = h * w
        n_missing = int(round(missing * total))
        keep2d = np.ones(total, dtype=bool)
        keep2d[gen.choice(total, size=n_missing, replace=False)] = False
        keep = np.repeat(keep2d.reshape(h, w, 1), 3, axis=2)
    # coverage repair: re-add one entry for any empty row/column/channel level
    flat_ids = np.arange(keep.size).reshape(keep.shape)
    for d in range(3):
        axes = tuple(a for a in range(3) if a != d)
        counts = keep.sum(axis=axes)
        for l in np.nonzero(counts == 0)[0]:
            sel = [slice(None)] * 3
            sel[d] = int(l)
            candidates = flat_ids[tuple(sel)].reshape(-1)
            candidates = candidates[~keep.reshape(-1)[candidates]]
            keep.reshape(-1)[int(gen.choice(candidates))] = True
    return keep


def _column_mean_fill(values01: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Baseline: fill missing entries with their column's per-channel mean."""
    h, w, _ = values01.shape
    filled = values01.copy()
    for c in range(3):
        ch = values01[:, :, c]
        kp = keep[:, :, c]
        channel_mean = ch[kp].mean() if kp.any() else 0.0
        for j in range(w):
            col_keep = kp[:, j]
            mean = ch[col_keep, j].mean() if col_keep.any() else channel_mean
            filled[~col_keep, j, c] = mean
    return filled


def cmd_image(parser, args) -> int:
    t0 = time.perf_counter()
    if not 0.0 <= args.missing < 1.0:
        parser.error("--missing must be in [0, 1)")
    image = ppm.read_ppm(args.input)
    h, w, _ = image.shape
    values01 = image.astype(np.float64) / 255.0
    keep = _mask_pixels(image, args.missing, args.per_channel_mask, args.seed)
    idx = np.argwhere(keep)
    obs = ObservedTensor(
        order=3,
        dims=(h, w, 3),
        indices=np.ascontiguousarray(idx.astype(np.int64)),
        values=np.ascontiguousarray(values01[keep]),
    )
    spec = _prior_spec_from_args(parser, args)
    config = _chain_config_from_args(args, use_intercepts=args.intercepts == "on")
    est = tensor.run(obs, config, spec)
    completed01 = np.clip(est.y_hat, 0.0, 1.0)
    completed = np.clip(np.rint(completed01 * 255.0), 0, 255).astype(np.uint8)
    masked = np.where(keep, image, 0).astype(np.uint8)
    out = args.out_dir
    ppm.write_ppm(f"{out}/masked.ppm", masked)
    ppm.write_ppm(f"{out}/completed.ppm", completed)

    baseline01 = _column_mean_fill(values01, keep)
    missing_mask = ~keep
    rows = []
    for c in range(3):
        truth = values01[:, :, c] * 255.0
        comp = completed01[:, :, c] * 255.0
        base = baseline01[:, :, c] * 255.0
        miss = missing_mask[:, :, c]
        n_miss = int(miss.sum())
        rmse_comp = float(np.sqrt(np.mean((comp[miss] - truth[miss]) ** 2))) if n_miss else float("nan")
        rmse_base = float(np.sqrt(np.mean((base[miss] - truth[miss]) ** 2))) if n_miss else float("nan")
        rows.append(
            {
                "channel": "rgb"[c],
                "n_missing": n_miss,
                "rmse_completed_missing": rmse_comp,
                "rmse_colmean_missing": rmse_base,
                "se_completed_all": float(np.sqrt(np.sum((comp - truth) ** 2))),
                "mae_completed_all": float(np.mean(np.abs(comp - truth))),
            }
        )
    cols = [
        "channel",
        "n_missing",
        "rmse_completed_missing",
        "rmse_colmean_missing",
        "se_completed_all",
        "mae_completed_all",
    ]
    _write_rows_csv(f"{out}/image_metrics.csv", rows, cols)
    outputs = ["masked.ppm", "completed.ppm", "image_metrics.csv", "manifest.json"]
    _write_manifest(
        f"{out}/manifest.json",
        {
            "command": "image",
            "version": __version__,
            "input": args.input,
            "height": h,
            "width": w,
            "missing": args.missing,
            "per_channel_mask": args.per_channel_mask,
            "n_obs": obs.n_obs,
            "prior": _prior_payload(spec),
            "config": _config_payload(config),
            "floor_events": est.floor_events,
            "outputs": outputs,
            "wall_time_s": time.perf_counter() - t0,
        },
    )
    print(f"wrote {', '.join(outputs)} to {out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "complete":
            return cmd_complete(parser, args)
        if args.command == "simulate":
            return cmd_simulate(parser, args)
        return cmd_image(parser, args)
    except (RankShrinkError, OSError) as exc:
        print(f"rankshrink: error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())
